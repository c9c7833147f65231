#include "fsl/mar.hpp"

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {

void MarConfig::validate() const {
  if (in_channels < 1) throw ConfigError("mar: in_channels must be >= 1");
  if (feature_channels < 1) throw ConfigError("mar: feature_channels must be >= 1");
  if (reduction < 1 || feature_channels % reduction != 0) {
    throw ConfigError("mar: feature_channels " + std::to_string(feature_channels) +
                      " not divisible by reduction " + std::to_string(reduction));
  }
  if (num_blocks < 1) throw ConfigError("mar: num_blocks must be >= 1");
  if (out_h < 1 || out_w < 1) throw ConfigError("mar: output size must be >= 1");
}

std::vector<NamedTensor> MarParams::named() const {
  std::vector<NamedTensor> out;
  append_named(out, "mar.conv7", conv7);
  append_named(out, "mar.conv1", conv1);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "mar.block" + std::to_string(i);
    append_named(out, prefix + ".conv_a", blocks[i].conv_a);
    append_named(out, prefix + ".conv_b", blocks[i].conv_b);
    append_named(out, prefix + ".squeeze", blocks[i].squeeze);
    append_named(out, prefix + ".excite", blocks[i].excite);
  }
  append_named(out, "mar.conv3", conv3);
  return out;
}

MarParams mar_init(const MarConfig& config, std::uint64_t seed) {
  config.validate();
  const Index c = config.in_channels, f = config.feature_channels;
  const Index hidden = f / config.reduction;
  Rng rng = make_rng(seed, 0x4D4152);
  MarParams p;
  p.conv7 = make_conv(f, c, 7, rng);
  p.conv1 = make_conv(f, f, 1, rng);
  for (Index i = 0; i < config.num_blocks; ++i) {
    MarBlockParams b;
    b.conv_a = make_conv(f, f, 3, rng);
    b.conv_b = make_conv(f, f, 3, rng);
    b.squeeze = make_linear(hidden, f, rng);
    b.excite = make_linear(f, hidden, rng);
    p.blocks.push_back(std::move(b));
  }
  p.conv3 = make_conv(c, f, 3, rng);
  return p;
}

Index mar_parameter_count(const MarConfig& config) {
  const Index c = config.in_channels, f = config.feature_channels;
  const Index hidden = f / config.reduction;
  const Index block = 2 * (f * f * 9 + f) + (hidden * f + hidden) + (f * hidden + f);
  return (f * c * 49 + f) + (f * f + f) + config.num_blocks * block + (c * f * 9 + c);
}

Tensor channel_attention(Graph& g, const Tensor& features, const LinearParams& squeeze,
                         const LinearParams& excite) {
  if (features.ndim() != 4 || features.dim(1) != squeeze.weight.dim(1)) {
    throw DimensionError("channel_attention: features " + shape_string(features.shape()) +
                         " do not match squeeze weight " + shape_string(squeeze.weight.shape()));
  }
  Tensor pooled = ops::global_avg_pool(g, features);
  Tensor hidden = ops::gelu(g, apply_linear(g, pooled, squeeze));
  Tensor gate = ops::sigmoid(g, apply_linear(g, hidden, excite));
  return ops::channel_scale(g, features, gate);
}

Tensor mar_block(Graph& g, const Tensor& features, const MarBlockParams& block) {
  if (features.ndim() != 4 || features.dim(1) != block.conv_a.weight.dim(1)) {
    throw DimensionError("mar_block: features " + shape_string(features.shape()) +
                         " do not match block width " + std::to_string(block.conv_a.weight.dim(1)));
  }
  Tensor branch = ops::gelu(g, apply_conv(g, features, block.conv_a, 1));
  branch = apply_conv(g, branch, block.conv_b, 1);
  branch = channel_attention(g, branch, block.squeeze, block.excite);
  return ops::add(g, features, branch);
}

Tensor mar_forward(Graph& g, const Tensor& image, const MarParams& params, const MarConfig& config) {
  if (image.ndim() != 4 || image.dim(1) != config.in_channels) {
    throw DimensionError("mar_forward: image " + shape_string(image.shape()) + " does not have " +
                         std::to_string(config.in_channels) + " channels");
  }
  if (image.dim(2) < 7 || image.dim(3) < 7) {
    throw DimensionError("mar_forward: image " + shape_string(image.shape()) +
                         " smaller than 7x7");
  }
  Tensor residual = ops::bilinear_resize(g, image, config.out_h, config.out_w);
  Tensor f = ops::gelu(g, apply_conv(g, image, params.conv7, 3));
  f = ops::gelu(g, apply_conv(g, f, params.conv1, 0));
  Tensor base = ops::bilinear_resize(g, f, config.out_h, config.out_w);
  Tensor b = base;
  for (const MarBlockParams& block : params.blocks) b = mar_block(g, b, block);
  Tensor projected = apply_conv(g, ops::add(g, b, base), params.conv3, 1);
  return ops::add(g, projected, residual);
}

}  // namespace fsl
