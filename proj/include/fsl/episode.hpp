#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsl/dataset.hpp"

namespace fsl {

struct SampleRef {
  int class_id = 0;
  int sample = 0;
  bool operator==(const SampleRef&) const = default;
  auto operator<=>(const SampleRef&) const = default;
};

/// One N-way K-shot task. Support and query are grouped by episode-local
/// label 0..way-1, which follows the order the classes were drawn in.
struct Episode {
  int way = 0, shot = 0, query = 0;
  std::vector<int> classes;  // source class id per local label
  std::vector<SampleRef> support;
  std::vector<int> support_labels;
  std::vector<SampleRef> queries;
  std::vector<int> query_labels;
};

/// Fully determined by its arguments. Throws CapacityError when the split
/// has fewer than `way` classes or a drawn class has fewer than shot + query
/// samples.
Episode sample_episode(const DatasetIndex& index, Split split, int way, int shot, int query,
                       std::uint64_t rng_seed);

/// Stacks referenced images into an (N, C, H, W) tensor.
Tensor stack_images(const DatasetIndex& index, std::span<const SampleRef> refs);

}  // namespace fsl
