#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsl/tensor.hpp"

/// FSLT tensor files: "FSLT", u8 version 1, u8 dtype 1 (f64 LE), two zero
/// bytes, u32 ndim, ndim x u32 extents, row-major payload. All integers LE.
namespace fsl::fslt {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;
inline constexpr std::uint32_t kMaxRank = 8;

std::vector<std::uint8_t> encode(const Tensor& tensor);
/// Throws FormatError for bad magic/version/dtype/extents and IoError when
/// the payload is cut short.
Tensor decode(std::span<const std::uint8_t> bytes, const std::string& context = "fslt");

void write(const std::string& path, const Tensor& tensor);
Tensor read(const std::string& path);

}  // namespace fsl::fslt
