#include "fsl/fslt.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "fsl/bytes.hpp"
#include "fsl/error.hpp"

namespace fsl {
namespace bytes {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return data;
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace bytes

namespace fslt {

std::vector<std::uint8_t> encode(const Tensor& tensor) {
  bytes::Writer w;
  w.raw("FSLT");
  w.u8(kVersion);
  w.u8(kDtypeF64);
  w.u8(0);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(tensor.ndim()));
  for (Index e : tensor.shape()) w.u32(static_cast<std::uint32_t>(e));
  for (Index i = 0; i < tensor.numel(); ++i) w.f64(tensor.values()[i]);
  return w.take();
}

Tensor decode(std::span<const std::uint8_t> data, const std::string& context) {
  bytes::Reader r(data, context);
  if (r.str(4) != "FSLT") throw FormatError(context + ": bad magic");
  if (const auto v = r.u8(); v != kVersion) {
    throw FormatError(context + ": unsupported version " + std::to_string(v));
  }
  if (const auto d = r.u8(); d != kDtypeF64) {
    throw FormatError(context + ": unsupported dtype code " + std::to_string(d));
  }
  if (r.u8() != 0 || r.u8() != 0) throw FormatError(context + ": reserved bytes not zero");
  const std::uint32_t ndim = r.u32();
  if (ndim == 0 || ndim > kMaxRank) {
    throw FormatError(context + ": rank " + std::to_string(ndim) + " outside [1, " +
                      std::to_string(kMaxRank) + "]");
  }
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t e = r.u32();
    if (e == 0) throw FormatError(context + ": zero extent on axis " + std::to_string(i));
    shape.push_back(static_cast<Index>(e));
    if (count > std::numeric_limits<std::uint64_t>::max() / 8 / e) {
      throw FormatError(context + ": extents overflow");
    }
    count *= e;
  }
  const std::uint64_t payload = count * 8;
  if (payload > r.remaining()) {
    throw IoError(context + ": truncated payload (need " + std::to_string(payload) +
                  " bytes, have " + std::to_string(r.remaining()) + ")");
  }
  if (payload < r.remaining()) throw FormatError(context + ": trailing bytes after payload");
  Vector values(static_cast<Index>(count));
  for (Index i = 0; i < values.size(); ++i) values[i] = r.f64();
  return Tensor(std::move(shape), std::move(values));
}

void write(const std::string& path, const Tensor& tensor) {
  bytes::write_file(path, encode(tensor));
}

Tensor read(const std::string& path) { return decode(bytes::read_file(path), path); }

}  // namespace fslt
}  // namespace fsl
