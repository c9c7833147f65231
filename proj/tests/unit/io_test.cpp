#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "fsl/bytes.hpp"
#include "fsl/checkpoint.hpp"
#include "fsl/error.hpp"
#include "fsl/fslt.hpp"
#include "fsl/pipeline.hpp"
#include "test_util.hpp"

namespace fsl {
namespace {

using Bytes = std::vector<std::uint8_t>;

Model small_model(std::uint64_t seed, bool with_mar, bool with_head) {
  Model m;
  m.backbone = backbone_init(3, seed);
  if (with_head) m.head = head_init(5, seed);
  if (with_mar) {
    m.mar_config.feature_channels = 4;
    m.mar_config.num_blocks = 1;
    m.mar_config.reduction = 2;
    m.mar = mar_init(m.mar_config, seed);
  }
  return m;
}

Checkpoint sample_checkpoint(std::uint64_t seed = 3) {
  return make_checkpoint(small_model(seed, true, true), Stage::kJoint, seed, 7, 61.25);
}

TEST(Fslt, RoundTripIsBitExact) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 70);
    Shape shape;
    for (Index d = test::pick(rng, 1, 4); d > 0; --d) shape.push_back(test::pick(rng, 1, 5));
    Tensor x = normal(shape, 1e3, rng);
    if (t == 0) x.values()[0] = -0.0;
    const Bytes bytes = fslt::encode(x);
    EXPECT_EQ(bytes.size(), 12 + 4 * shape.size() + 8 * static_cast<std::size_t>(x.numel()));
    const Tensor y = fslt::decode(bytes);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(std::memcmp(y.values().data(), x.values().data(), 8 * static_cast<std::size_t>(x.numel())), 0);
  }
}

TEST(Fslt, HeaderLayout) {
  const Bytes b = fslt::encode(Tensor::from({1, 2}, {1.0, -2.0}));
  ASSERT_EQ(b.size(), 12u + 8 + 16);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "FSLT");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 1);
  EXPECT_EQ(b[6], 0);
  EXPECT_EQ(b[7], 0);
  EXPECT_EQ(b[8], 2);  // ndim, little endian
  EXPECT_EQ(b[12], 1);
  EXPECT_EQ(b[16], 2);
  EXPECT_EQ(b[27], 0x3F);  // 1.0 = 0x3FF0000000000000
}

TEST(Fslt, RejectsMalformedHeaders) {
  const Bytes good = fslt::encode(Tensor::from({2, 2}, {1, 2, 3, 4}));
  auto with = [&](std::size_t at, std::uint8_t v) {
    Bytes b = good;
    b[at] = v;
    return b;
  };
  EXPECT_THROW(fslt::decode(with(0, 'X')), FormatError);
  EXPECT_THROW(fslt::decode(with(4, 2)), FormatError);
  EXPECT_THROW(fslt::decode(with(5, 2)), FormatError);
  EXPECT_THROW(fslt::decode(with(6, 1)), FormatError);
  EXPECT_THROW(fslt::decode(with(8, 0)), FormatError);
  EXPECT_THROW(fslt::decode(with(8, 9)), FormatError);
  EXPECT_THROW(fslt::decode(with(12, 0)), FormatError);
  EXPECT_THROW(fslt::decode(Bytes(good.begin(), good.end() - 1)), IoError);
  EXPECT_THROW(fslt::decode(Bytes(good.begin(), good.begin() + 3)), IoError);
  Bytes longer = good;
  longer.push_back(0);
  EXPECT_THROW(fslt::decode(longer), FormatError);
}

TEST(Fslt, FileErrorsNameThePath) {
  test::TempDir dir("fslt");
  const std::string path = (dir.path() / "t.fslt").string();
  fslt::write(path, Tensor::from({3}, {1, 2, 3}));
  EXPECT_EQ(fslt::read(path).values(), Tensor::from({3}, {1, 2, 3}).values());
  try {
    fslt::read((dir.path() / "missing.fslt").string());
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.fslt"), std::string::npos);
  }
}

// Truncates or overwrites header bytes; decoding must either raise a library
// error or return a tensor that re-encodes to exactly the mutated bytes.
template <class Decode, class Encode>
void fuzz(const Bytes& good, std::size_t header_len, std::uint64_t salt, Decode decode, Encode encode) {
  int errors = 0;
  for (int t = 0; t < 1000; ++t) {
    Rng rng = test::trial_rng(t, salt);
    Bytes b = good;
    const int mode = static_cast<int>(test::pick(rng, 0, 2));
    if (mode == 0) {
      b.resize(static_cast<std::size_t>(test::pick(rng, 0, static_cast<Index>(good.size()) - 1)));
    } else {
      const int flips = static_cast<int>(test::pick(rng, 1, 4));
      for (int f = 0; f < flips; ++f) {
        const auto at = static_cast<std::size_t>(test::pick(rng, 0, static_cast<Index>(std::min(header_len, b.size())) - 1));
        b[at] = static_cast<std::uint8_t>(test::pick(rng, 0, 255));
      }
      if (mode == 2) b.resize(static_cast<std::size_t>(test::pick(rng, 0, static_cast<Index>(b.size()))));
    }
    try {
      auto decoded = decode(b);
      EXPECT_EQ(encode(decoded), b) << "case " << t;
    } catch (const Error&) {
      ++errors;
    } catch (const std::exception& e) {
      ADD_FAILURE() << "case " << t << " raised a non-library exception: " << e.what();
    }
  }
  EXPECT_GT(errors, 900);
}

TEST(Fslt, FuzzedHeadersYieldStructuredErrors) {
  Rng rng = test::trial_rng(0, 71);
  const Bytes good = fslt::encode(normal({2, 3, 4}, 1, rng));
  fuzz(good, 24, 72, [](const Bytes& b) { return fslt::decode(b); }, [](const Tensor& t) { return fslt::encode(t); });
}

TEST(Checkpoint, RoundTripIsBitExact) {
  test::TempDir dir("ckpt");
  for (bool mar : {false, true}) {
    Checkpoint c = make_checkpoint(small_model(5, mar, true), mar ? Stage::kJoint : Stage::kBackbone,
                                   0xDEADBEEFCAFEF00DULL, 12, 73.5);
    const std::string path = (dir.path() / "c.fsck").string();
    save_checkpoint(c, path);
    const Checkpoint d = load_checkpoint(path);
    EXPECT_EQ(d.stage, c.stage);
    EXPECT_EQ(d.seed, c.seed);
    EXPECT_EQ(d.epoch, 12);
    EXPECT_EQ(d.val_metric, 73.5);
    ASSERT_EQ(d.blocks.size(), c.blocks.size());
    for (std::size_t i = 0; i < c.blocks.size(); ++i) {
      EXPECT_EQ(d.blocks[i].name, c.blocks[i].name);
      EXPECT_EQ(d.blocks[i].shape, c.blocks[i].shape);
      EXPECT_EQ(std::memcmp(d.blocks[i].values.data(), c.blocks[i].values.data(),
                            8 * static_cast<std::size_t>(c.blocks[i].values.size())),
                0);
    }
    EXPECT_EQ(encode_checkpoint(d), encode_checkpoint(c));
  }
}

TEST(Checkpoint, ModelSurvivesRoundTrip) {
  const Model m = small_model(9, true, false);
  const Model back = model_from_checkpoint(decode_checkpoint(encode_checkpoint(
      make_checkpoint(m, Stage::kFinetune, 9, 1, 0))));
  ASSERT_TRUE(back.mar.has_value());
  EXPECT_FALSE(back.head.has_value());
  EXPECT_EQ(back.mar_config, m.mar_config);
  const auto a = m.network_parameters(), b = back.network_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor.values(), b[i].tensor.values()) << a[i].name;
}

TEST(Checkpoint, DigestsDependOnSeed) {
  EXPECT_NE(checkpoint_digest(sample_checkpoint(3)), checkpoint_digest(sample_checkpoint(4)));
  EXPECT_EQ(checkpoint_digest(sample_checkpoint(3)), checkpoint_digest(sample_checkpoint(3)));
}

TEST(Checkpoint, RejectsBadMagicVersionTagAndChecksum) {
  const Bytes good = encode_checkpoint(sample_checkpoint());
  auto with = [&](std::size_t at, std::uint8_t v) {
    Bytes b = good;
    b[at] = v;
    return b;
  };
  EXPECT_THROW(decode_checkpoint(with(0, 'G')), FormatError);
  EXPECT_THROW(decode_checkpoint(with(4, 2)), FormatError);
  EXPECT_THROW(decode_checkpoint(with(5, 0)), FormatError);
  EXPECT_THROW(decode_checkpoint(with(5, 4)), FormatError);
  Bytes payload = good;
  payload[payload.size() - 20] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(payload), FormatError);
  EXPECT_THROW(decode_checkpoint(Bytes(good.begin(), good.end() - 3)), IoError);
  Bytes longer = good;
  longer.push_back(1);
  EXPECT_THROW(decode_checkpoint(longer), FormatError);
}

TEST(Checkpoint, FileWithAlteredMagicFailsCleanly) {
  test::TempDir dir("magic");
  const std::string path = (dir.path() / "c.fsck").string();
  save_checkpoint(sample_checkpoint(), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1);
    f.put('Z');
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  EXPECT_THROW(load_checkpoint((dir.path() / "absent.fsck").string()), IoError);
}

TEST(Checkpoint, StageConstrainsBlocks) {
  Checkpoint c = sample_checkpoint();
  c.stage = Stage::kBackbone;  // carries resizer blocks
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(c)), FormatError);

  Checkpoint headless = make_checkpoint(small_model(1, false, false), Stage::kJoint, 1, 0, 0);
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(headless)), FormatError);
  headless.stage = Stage::kFinetune;
  EXPECT_NO_THROW(decode_checkpoint(encode_checkpoint(headless)));

  Checkpoint bad_shape = sample_checkpoint();
  for (ParamBlock& b : bad_shape.blocks) {
    if (b.name == "backbone.conv2.weight") {
      b.shape = {32, 16, 3, 6};
    }
  }
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(bad_shape)), FormatError);

  Checkpoint no_alpha = sample_checkpoint();
  std::erase_if(no_alpha.blocks, [](const ParamBlock& b) { return b.name == "asm.alpha"; });
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(no_alpha)), FormatError);
}

TEST(Checkpoint, FuzzedHeadersYieldStructuredErrors) {
  const Bytes good = encode_checkpoint(make_checkpoint(small_model(2, false, true), Stage::kBackbone, 2, 1, 50));
  fuzz(good, 96, 73, [](const Bytes& b) { return decode_checkpoint(b); },
       [](const Checkpoint& c) { return encode_checkpoint(c); });
}

TEST(Checkpoint, FuzzedAnywhereNeverCrashes) {
  const Bytes good = encode_checkpoint(sample_checkpoint());
  fuzz(good, good.size(), 74, [](const Bytes& b) { return decode_checkpoint(b); },
       [](const Checkpoint& c) { return encode_checkpoint(c); });
}

}  // namespace
}  // namespace fsl
