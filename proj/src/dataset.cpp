#include "fsl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fsl/error.hpp"
#include "fsl/fslt.hpp"
#include "fsl/random.hpp"

namespace fsl {

namespace fs = std::filesystem;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ArgumentError("unknown split '" + std::string(name) + "'");
}

DatasetIndex::DatasetIndex(std::string name, Shape image_shape, std::vector<ClassEntry> classes)
    : name_(std::move(name)), image_shape_(std::move(image_shape)), classes_(std::move(classes)) {
  if (image_shape_.size() != 3 || std::any_of(image_shape_.begin(), image_shape_.end(),
                                              [](Index e) { return e <= 0; })) {
    throw ValidationError("dataset '" + name_ + "': image_shape must be three positive extents");
  }
  const Index pixels = shape_numel(image_shape_);
  std::set<std::string> names;
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    ClassEntry& entry = classes_[c];
    if (!names.insert(entry.name).second) {
      throw ValidationError("dataset '" + name_ + "': class '" + entry.name + "' listed twice");
    }
    if (entry.samples.empty()) {
      throw ValidationError("dataset '" + name_ + "': class '" + entry.name + "' has no samples");
    }
    for (SampleRecord& s : entry.samples) {
      if (s.pixels.size() != pixels) {
        throw ValidationError("dataset '" + name_ + "': sample " + s.path.string() +
                              " does not have shape " + shape_string(image_shape_));
      }
      s.class_id = static_cast<int>(c);
    }
    split_classes_[static_cast<int>(entry.split)].push_back(static_cast<int>(c));
  }
}

const std::vector<int>& DatasetIndex::split_classes(Split split) const {
  return split_classes_[static_cast<int>(split)];
}

std::size_t DatasetIndex::num_samples() const {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.samples.size();
  return n;
}

DatasetIndex load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path root = manifest_path.parent_path();

  try {
    const std::string name = doc.at("name").get<std::string>();
    Shape shape;
    for (const auto& e : doc.at("image_shape")) shape.push_back(e.get<Index>());
    const auto& splits = doc.at("splits");
    const auto& class_files = doc.at("classes");
    for (auto it = splits.begin(); it != splits.end(); ++it) parse_split(it.key());
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      static const std::set<std::string> known{"name", "image_shape", "splits", "classes"};
      if (!known.contains(it.key())) {
        throw ValidationError("manifest: unknown field '" + it.key() + "'");
      }
    }

    std::map<std::string, Split> assigned;
    std::vector<ClassEntry> classes;
    for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
      const std::string key(split_name(split));
      if (!splits.contains(key)) continue;
      for (const auto& cname_json : splits.at(key)) {
        const std::string cname = cname_json.get<std::string>();
        if (auto [it, inserted] = assigned.emplace(cname, split); !inserted) {
          throw ValidationError("manifest: class '" + cname + "' appears in splits '" +
                                std::string(split_name(it->second)) + "' and '" + key + "'");
        }
        if (!class_files.contains(cname)) {
          throw ValidationError("manifest: class '" + cname + "' has no file list");
        }
        ClassEntry entry{cname, split, {}};
        for (const auto& rel : class_files.at(cname)) {
          const fs::path path = root / rel.get<std::string>();
          if (!fs::exists(path)) throw IoError("missing tensor file " + path.string());
          Tensor t = fslt::read(path.string());
          if (t.shape() != shape) {
            throw ValidationError("tensor file " + path.string() + " has shape " +
                                  shape_string(t.shape()) + ", manifest declares " +
                                  shape_string(shape));
          }
          entry.samples.push_back({path, 0, fs::file_size(path), t.values()});
        }
        classes.push_back(std::move(entry));
      }
    }
    for (auto it = class_files.begin(); it != class_files.end(); ++it) {
      if (!assigned.contains(it.key())) {
        throw ValidationError("manifest: class '" + it.key() + "' is not assigned to a split");
      }
    }
    return DatasetIndex(name, shape, std::move(classes));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
}

namespace {

struct Bump {
  double cx, cy, sigma;
  double amplitude[3];
};

std::vector<double> blob_template(int channels, int size, Rng& rng) {
  std::uniform_real_distribution<double> center(0.2 * size, 0.8 * size);
  std::uniform_real_distribution<double> width(0.12 * size, 0.25 * size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Bump> bumps(3);
  for (Bump& b : bumps) {
    b.cx = center(rng);
    b.cy = center(rng);
    b.sigma = width(rng);
    for (double& a : b.amplitude) a = unit(rng);
  }
  std::vector<double> base(static_cast<std::size_t>(channels));
  for (double& v : base) v = 0.3 * unit(rng);

  std::vector<double> img(static_cast<std::size_t>(channels * size * size));
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = base[static_cast<std::size_t>(c)];
        for (const Bump& b : bumps) {
          const double dx = x + 0.5 - b.cx, dy = y + 0.5 - b.cy;
          v += b.amplitude[c % 3] * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        img[static_cast<std::size_t>((c * size + y) * size + x)] = v;
      }
    }
  }
  return img;
}

std::string numbered(const char* prefix, int i, int width) {
  std::ostringstream os;
  os << prefix;
  os.width(width);
  os.fill('0');
  os << i;
  return os.str();
}

}  // namespace

fs::path generate_synthetic(const fs::path& out_dir, const SyntheticOptions& opt) {
  if (opt.num_classes % 2 != 0) {
    throw ArgumentError("generate_synthetic: num_classes must be even (classes come in pairs)");
  }
  if (opt.num_classes < 6) {
    throw ArgumentError("generate_synthetic: need at least 6 classes so every split gets a pair");
  }
  if (opt.samples_per_class < 1) throw ArgumentError("generate_synthetic: samples_per_class must be >= 1");
  if (opt.image_size < 16 || opt.image_size % 4 != 0) {
    throw ArgumentError("generate_synthetic: image_size must be >= 16 and divisible by 4");
  }
  if (!(opt.noise_sigma >= 0.0)) throw ArgumentError("generate_synthetic: noise_sigma must be >= 0");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }

  constexpr int channels = 3;
  const int size = opt.image_size;
  const int pairs = opt.num_classes / 2;
  const int val_pairs = std::max(1, static_cast<int>(std::lround(0.16 * pairs)));
  const int test_pairs = std::max(1, static_cast<int>(std::lround(0.20 * pairs)));
  const int train_pairs = pairs - val_pairs - test_pairs;

  std::vector<int> order(static_cast<std::size_t>(pairs));
  for (int p = 0; p < pairs; ++p) order[static_cast<std::size_t>(p)] = p;
  Rng split_rng = make_rng(opt.seed, 0x53504C);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<Split> pair_split(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i) {
    pair_split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        i < train_pairs ? Split::kTrain : (i < train_pairs + val_pairs ? Split::kVal : Split::kTest);
  }

  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  nlohmann::ordered_json split_lists = {{"train", nlohmann::ordered_json::array()},
                                        {"val", nlohmann::ordered_json::array()},
                                        {"test", nlohmann::ordered_json::array()}};
  const int name_width = opt.num_classes > 1000 ? 5 : 3;
  const int sample_width = opt.samples_per_class > 1000 ? 5 : 3;

  for (int p = 0; p < pairs; ++p) {
    Rng blob_rng = make_rng(opt.seed, 0x10000 + static_cast<std::uint64_t>(p));
    const std::vector<double> blob = blob_template(channels, size, blob_rng);
    for (int member = 0; member < 2; ++member) {
      const int cls = 2 * p + member;
      const std::string cname = numbered("class_", cls, name_width);
      fs::create_directories(out_dir / cname, ec);
      if (ec) throw IoError("cannot create " + (out_dir / cname).string());
      nlohmann::ordered_json files = nlohmann::ordered_json::array();
      for (int s = 0; s < opt.samples_per_class; ++s) {
        Rng rng = make_rng(opt.seed, (static_cast<std::uint64_t>(cls) << 32) | static_cast<std::uint64_t>(s));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double gain = 1.0 + 0.1 * gauss(rng);
        Vector pix(channels * size * size);
        for (int c = 0; c < channels; ++c) {
          for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
              const int parity = member == 0 ? x : y;
              const double stripe = (parity % 2 == 0 ? 1.0 : -1.0) * kStripeAmplitude;
              const auto i = static_cast<std::size_t>((c * size + y) * size + x);
              pix[static_cast<Index>(i)] = gain * blob[i] + stripe + opt.noise_sigma * gauss(rng);
            }
          }
        }
        const std::string rel = cname + "/" + numbered("sample_", s, sample_width) + ".fslt";
        fslt::write((out_dir / rel).string(), Tensor({channels, size, size}, std::move(pix)));
        files.push_back(rel);
      }
      classes[cname] = files;
      split_lists[std::string(split_name(pair_split[static_cast<std::size_t>(p)]))].push_back(cname);
    }
  }

  nlohmann::ordered_json manifest;
  manifest["name"] = "synthetic-aliasing-pairs";
  manifest["image_shape"] = {channels, size, size};
  manifest["splits"] = split_lists;
  manifest["classes"] = classes;
  const fs::path manifest_path = out_dir / "manifest.json";
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + manifest_path.string());
  return manifest_path;
}

}  // namespace fsl
