#include "fsl/episode.hpp"

#include <algorithm>
#include <numeric>

#include "fsl/error.hpp"
#include "fsl/random.hpp"

namespace fsl {

Episode sample_episode(const DatasetIndex& index, Split split, int way, int shot, int query,
                       std::uint64_t rng_seed) {
  if (way < 1 || shot < 1 || query < 1) {
    throw ArgumentError("sample_episode: way, shot and query must all be >= 1");
  }
  const std::vector<int>& pool = index.split_classes(split);
  if (static_cast<int>(pool.size()) < way) {
    throw CapacityError("sample_episode: split '" + std::string(split_name(split)) + "' has " +
                        std::to_string(pool.size()) + " classes, " + std::to_string(way) +
                        "-way needs " + std::to_string(way - static_cast<int>(pool.size())) +
                        " more");
  }
  Rng rng(rng_seed);
  std::vector<int> drawn = pool;
  std::shuffle(drawn.begin(), drawn.end(), rng);
  drawn.resize(static_cast<std::size_t>(way));

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.query = query;
  ep.classes = drawn;
  const int need = shot + query;
  std::vector<std::vector<int>> picks;
  for (int label = 0; label < way; ++label) {
    const int cls = drawn[static_cast<std::size_t>(label)];
    const int have = static_cast<int>(index.class_entry(cls).samples.size());
    if (have < need) {
      throw CapacityError("sample_episode: class '" + index.class_entry(cls).name + "' has " +
                          std::to_string(have) + " samples, shot + query needs " +
                          std::to_string(need) + " (short by " + std::to_string(need - have) + ")");
    }
    std::vector<int> order(static_cast<std::size_t>(have));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(need));
    picks.push_back(std::move(order));
  }
  for (int label = 0; label < way; ++label) {
    const int cls = drawn[static_cast<std::size_t>(label)];
    const auto& p = picks[static_cast<std::size_t>(label)];
    for (int i = 0; i < shot; ++i) {
      ep.support.push_back({cls, p[static_cast<std::size_t>(i)]});
      ep.support_labels.push_back(label);
    }
  }
  for (int label = 0; label < way; ++label) {
    const int cls = drawn[static_cast<std::size_t>(label)];
    const auto& p = picks[static_cast<std::size_t>(label)];
    for (int i = shot; i < need; ++i) {
      ep.queries.push_back({cls, p[static_cast<std::size_t>(i)]});
      ep.query_labels.push_back(label);
    }
  }
  return ep;
}

Tensor stack_images(const DatasetIndex& index, std::span<const SampleRef> refs) {
  const Shape& s = index.image_shape();
  const Index per = shape_numel(s);
  Vector v(per * static_cast<Index>(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& samples = index.class_entry(refs[i].class_id).samples;
    v.segment(static_cast<Index>(i) * per, per) = samples.at(static_cast<std::size_t>(refs[i].sample)).pixels;
  }
  return Tensor({static_cast<Index>(refs.size()), s[0], s[1], s[2]}, std::move(v));
}

}  // namespace fsl
