#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);
/// Accepts "train", "val", "test"; throws ArgumentError otherwise.
Split parse_split(std::string_view name);

struct SampleRecord {
  std::filesystem::path path;
  int class_id = 0;
  std::uintmax_t byte_length = 0;
  Vector pixels;  // decoded image, row-major (C, H, W)
};

struct ClassEntry {
  std::string name;
  Split split = Split::kTrain;
  std::vector<SampleRecord> samples;
};

/// Class-keyed index over a dataset with class-disjoint splits and one image
/// shape. Immutable once constructed.
class DatasetIndex {
 public:
  /// Validates: shape (C, H, W) positive; unique class names; every class
  /// has at least one sample of the declared shape. Throws ValidationError.
  DatasetIndex(std::string name, Shape image_shape, std::vector<ClassEntry> classes);

  const std::string& name() const { return name_; }
  const Shape& image_shape() const { return image_shape_; }
  const std::vector<ClassEntry>& classes() const { return classes_; }
  const ClassEntry& class_entry(int class_id) const { return classes_.at(static_cast<std::size_t>(class_id)); }
  /// Class ids belonging to `split`, in index order.
  const std::vector<int>& split_classes(Split split) const;
  std::size_t num_samples() const;

 private:
  std::string name_;
  Shape image_shape_;
  std::vector<ClassEntry> classes_;
  std::vector<int> split_classes_[3];
};

/// Reads a JSON manifest: {name, image_shape [C,H,W], splits {train|val|test:
/// [class names]}, classes {name: [relative file paths]}}. Class ids follow
/// the train, val, test listing order.
DatasetIndex load_dataset(const std::filesystem::path& manifest_path);

struct SyntheticOptions {
  int num_classes = 40;
  int samples_per_class = 20;
  int image_size = 32;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
};

inline constexpr double kStripeAmplitude = 0.3;

/// Writes an aliasing-pair dataset under `out_dir` and returns the manifest
/// path. Classes 2p and 2p+1 share one smooth colour-blob template and differ
/// only in a one-pixel alternating stripe (vertical for 2p, horizontal for
/// 2p+1), which a 2x bilinear downsample averages away exactly. Pairs are
/// never separated by the 64/16/20 split.
std::filesystem::path generate_synthetic(const std::filesystem::path& out_dir,
                                         const SyntheticOptions& options);

}  // namespace fsl
