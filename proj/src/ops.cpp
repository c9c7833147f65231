#include "fsl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fsl/error.hpp"

namespace fsl::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.ndim() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

struct ConvGeometry {
  Index n, c_in, h, w;
  Index c_out, kh, kw;
  Index out_h, out_w;
  int padding, stride;

  Index patch() const { return c_in * kh * kw; }
  Index out_plane() const { return out_h * out_w; }
};

// Unrolls every receptive field into a column: cols is (C_in*kH*kW, N*H'*W').
void im2col(const ConvGeometry& geo, const double* x, RowMatrix& cols) {
  const Index plane = geo.out_plane();
  cols.setZero(geo.patch(), geo.n * plane);
  for (Index n = 0; n < geo.n; ++n) {
    for (Index c = 0; c < geo.c_in; ++c) {
      const double* src = x + (n * geo.c_in + c) * geo.h * geo.w;
      for (Index i = 0; i < geo.kh; ++i) {
        for (Index j = 0; j < geo.kw; ++j) {
          double* row = cols.data() + ((c * geo.kh + i) * geo.kw + j) * cols.cols() + n * plane;
          for (Index oy = 0; oy < geo.out_h; ++oy) {
            const Index iy = oy * geo.stride - geo.padding + i;
            if (iy < 0 || iy >= geo.h) continue;
            const double* src_row = src + iy * geo.w;
            double* dst = row + oy * geo.out_w;
            for (Index ox = 0; ox < geo.out_w; ++ox) {
              const Index ix = ox * geo.stride - geo.padding + j;
              if (ix >= 0 && ix < geo.w) dst[ox] = src_row[ix];
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& geo, const RowMatrix& cols, double* dx) {
  const Index plane = geo.out_plane();
  for (Index n = 0; n < geo.n; ++n) {
    for (Index c = 0; c < geo.c_in; ++c) {
      double* dst = dx + (n * geo.c_in + c) * geo.h * geo.w;
      for (Index i = 0; i < geo.kh; ++i) {
        for (Index j = 0; j < geo.kw; ++j) {
          const double* row =
              cols.data() + ((c * geo.kh + i) * geo.kw + j) * cols.cols() + n * plane;
          for (Index oy = 0; oy < geo.out_h; ++oy) {
            const Index iy = oy * geo.stride - geo.padding + i;
            if (iy < 0 || iy >= geo.h) continue;
            double* dst_row = dst + iy * geo.w;
            const double* src = row + oy * geo.out_w;
            for (Index ox = 0; ox < geo.out_w; ++ox) {
              const Index ix = ox * geo.stride - geo.padding + j;
              if (ix >= 0 && ix < geo.w) dst_row[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

struct ResizeAxis {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

ResizeAxis resize_axis(Index in, Index out) {
  ResizeAxis axis;
  axis.lo.resize(out);
  axis.hi.resize(out);
  axis.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const Index lo = static_cast<Index>(std::floor(src));
    axis.lo[i] = lo;
    axis.hi[i] = std::min(lo + 1, in - 1);
    axis.frac[i] = src - static_cast<double>(lo);
  }
  return axis;
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape(), a.values() + b.values());
  return g.record(out, {a, b}, [a, b](const Vector& go) mutable {
    accumulate(a, go);
    accumulate(b, go);
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape(), a.values().cwiseProduct(b.values()));
  return g.record(out, {a, b}, [a, b](const Vector& go) mutable {
    accumulate(a, go.cwiseProduct(b.values()));
    accumulate(b, go.cwiseProduct(a.values()));
  });
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  Tensor out(a.shape(), a.values() * factor);
  return g.record(out, {a}, [a, factor](const Vector& go) mutable { accumulate(a, go * factor); });
}

Tensor sum(Graph& g, const Tensor& a) {
  Tensor out = Tensor::scalar(a.values().sum());
  return g.record(out, {a}, [a](const Vector& go) mutable {
    accumulate(a, Vector::Constant(a.numel(), go[0]));
  });
}

Tensor mean(Graph& g, const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(a.values().sum() / n);
  return g.record(out, {a}, [a, n](const Vector& go) mutable {
    accumulate(a, Vector::Constant(a.numel(), go[0] / n));
  });
}

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding, int stride) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
  if (padding < 0) throw ArgumentError("conv2d: padding must be >= 0");
  ConvGeometry geo{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                   kernel.dim(0), kernel.dim(2), kernel.dim(3), 0, 0, padding, stride};
  if (kernel.dim(1) != geo.c_in) {
    throw DimensionError("conv2d: input has " + std::to_string(geo.c_in) +
                         " channels, kernel expects " + std::to_string(kernel.dim(1)));
  }
  if (bias.dim(0) != geo.c_out) throw DimensionError("conv2d: bias length must equal C_out");
  if (geo.kh > geo.h + 2 * padding || geo.kw > geo.w + 2 * padding) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_string(input.shape()));
  }
  geo.out_h = (geo.h + 2 * padding - geo.kh) / stride + 1;
  geo.out_w = (geo.w + 2 * padding - geo.kw) / stride + 1;

  RowMatrix cols;
  im2col(geo, input.values().data(), cols);
  ConstRowMatrixMap weight(kernel.values().data(), geo.c_out, geo.patch());
  RowMatrix result = weight * cols;
  result.colwise() += bias.values();

  const Index plane = geo.out_plane();
  Vector out_values(geo.n * geo.c_out * plane);
  for (Index n = 0; n < geo.n; ++n) {
    RowMatrixMap(out_values.data() + n * geo.c_out * plane, geo.c_out, plane) =
        result.middleCols(n * plane, plane);
  }
  Tensor out({geo.n, geo.c_out, geo.out_h, geo.out_w}, std::move(out_values));

  return g.record(out, {input, kernel, bias},
                  [input, kernel, bias, geo](const Vector& go) mutable {
    const Index plane = geo.out_plane();
    RowMatrix grad_out(geo.c_out, geo.n * plane);
    for (Index n = 0; n < geo.n; ++n) {
      grad_out.middleCols(n * plane, plane) =
          ConstRowMatrixMap(go.data() + n * geo.c_out * plane, geo.c_out, plane);
    }
    if (bias.requires_grad()) accumulate(bias, grad_out.rowwise().sum());
    if (kernel.requires_grad()) {
      RowMatrix cols;
      im2col(geo, input.values().data(), cols);
      RowMatrix dk = grad_out * cols.transpose();
      accumulate(kernel, Eigen::Map<const Vector>(dk.data(), dk.size()));
    }
    if (input.requires_grad()) {
      ConstRowMatrixMap weight(kernel.values().data(), geo.c_out, geo.patch());
      RowMatrix dcols = weight.transpose() * grad_out;
      Vector dx = Vector::Zero(input.numel());
      col2im(geo, dcols, dx.data());
      accumulate(input, dx);
    }
  });
}

Tensor bilinear_resize(Graph& g, const Tensor& input, Index out_h, Index out_w) {
  require_rank(input, 4, "bilinear_resize", "input");
  if (out_h < 1 || out_w < 1) throw ArgumentError("bilinear_resize: target size must be >= 1");
  const Index planes = input.dim(0) * input.dim(1);
  const Index h = input.dim(2), w = input.dim(3);
  const ResizeAxis ay = resize_axis(h, out_h);
  const ResizeAxis ax = resize_axis(w, out_w);

  Vector out_values(planes * out_h * out_w);
  const double* x = input.values().data();
  for (Index p = 0; p < planes; ++p) {
    const double* src = x + p * h * w;
    double* dst = out_values.data() + p * out_h * out_w;
    for (Index i = 0; i < out_h; ++i) {
      const double* r0 = src + ay.lo[i] * w;
      const double* r1 = src + ay.hi[i] * w;
      const double fy = ay.frac[i];
      for (Index j = 0; j < out_w; ++j) {
        const double fx = ax.frac[j];
        // Lerp form keeps constants and same-size copies exact.
        const double top = r0[ax.lo[j]] + fx * (r0[ax.hi[j]] - r0[ax.lo[j]]);
        const double bottom = r1[ax.lo[j]] + fx * (r1[ax.hi[j]] - r1[ax.lo[j]]);
        dst[i * out_w + j] = top + fy * (bottom - top);
      }
    }
  }
  Tensor out({input.dim(0), input.dim(1), out_h, out_w}, std::move(out_values));

  return g.record(out, {input}, [input, ay, ax, planes, h, w, out_h, out_w](const Vector& go) mutable {
    Vector dx = Vector::Zero(input.numel());
    for (Index p = 0; p < planes; ++p) {
      double* dst = dx.data() + p * h * w;
      const double* src = go.data() + p * out_h * out_w;
      for (Index i = 0; i < out_h; ++i) {
        const double fy = ay.frac[i];
        double* r0 = dst + ay.lo[i] * w;
        double* r1 = dst + ay.hi[i] * w;
        for (Index j = 0; j < out_w; ++j) {
          const double fx = ax.frac[j];
          const double gval = src[i * out_w + j];
          r0[ax.lo[j]] += gval * (1.0 - fy) * (1.0 - fx);
          r0[ax.hi[j]] += gval * (1.0 - fy) * fx;
          r1[ax.lo[j]] += gval * fy * (1.0 - fx);
          r1[ax.hi[j]] += gval * fy * fx;
        }
      }
    }
    accumulate(input, dx);
  });
}

Tensor gelu(Graph& g, const Tensor& input) {
  Tensor out(input.shape(), input.values().unaryExpr([](double x) { return gelu_value(x); }));
  return g.record(out, {input}, [input](const Vector& go) mutable {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    Vector d = input.values().unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    accumulate(input, go.cwiseProduct(d));
  });
}

Tensor sigmoid(Graph& g, const Tensor& input) {
  Tensor out(input.shape(), input.values().unaryExpr([](double x) { return sigmoid_value(x); }));
  return g.record(out, {input}, [input, out](const Vector& go) mutable {
    const Vector& s = out.values();
    accumulate(input, go.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Tensor linear(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const Index n = input.dim(0), d_in = input.dim(1), d_out = weight.dim(0);
  if (weight.dim(1) != d_in) {
    throw DimensionError("linear: input width " + std::to_string(d_in) +
                         " does not match weight " + shape_string(weight.shape()));
  }
  if (bias.dim(0) != d_out) throw DimensionError("linear: bias length must equal d_out");
  ConstRowMatrixMap x(input.values().data(), n, d_in);
  ConstRowMatrixMap wm(weight.values().data(), d_out, d_in);
  RowMatrix y = x * wm.transpose();
  y.rowwise() += bias.values().transpose();
  Tensor out({n, d_out}, Eigen::Map<const Vector>(y.data(), y.size()));

  return g.record(out, {input, weight, bias}, [input, weight, bias, n, d_in, d_out](const Vector& go) mutable {
    ConstRowMatrixMap gy(go.data(), n, d_out);
    if (input.requires_grad()) {
      ConstRowMatrixMap wm(weight.values().data(), d_out, d_in);
      RowMatrix dx = gy * wm;
      accumulate(input, Eigen::Map<const Vector>(dx.data(), dx.size()));
    }
    if (weight.requires_grad()) {
      ConstRowMatrixMap x(input.values().data(), n, d_in);
      RowMatrix dw = gy.transpose() * x;
      accumulate(weight, Eigen::Map<const Vector>(dw.data(), dw.size()));
    }
    if (bias.requires_grad()) accumulate(bias, gy.colwise().sum().transpose());
  });
}

Tensor global_avg_pool(Graph& g, const Tensor& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const Index planes = input.dim(0) * input.dim(1);
  const Index area = input.dim(2) * input.dim(3);
  ConstRowMatrixMap x(input.values().data(), planes, area);
  Vector means = x.rowwise().mean();
  Tensor out({input.dim(0), input.dim(1)}, std::move(means));
  return g.record(out, {input}, [input, planes, area](const Vector& go) mutable {
    RowMatrix dx(planes, area);
    dx.colwise() = go / static_cast<double>(area);
    accumulate(input, Eigen::Map<const Vector>(dx.data(), dx.size()));
  });
}

Tensor max_pool2x2(Graph& g, const Tensor& input) {
  require_rank(input, 4, "max_pool2x2", "input");
  const Index planes = input.dim(0) * input.dim(1);
  const Index h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) throw DimensionError("max_pool2x2: input " + shape_string(input.shape()) + " too small");
  const Index oh = h / 2, ow = w / 2;
  Vector out_values(planes * oh * ow);
  std::vector<Index> argmax(static_cast<std::size_t>(out_values.size()));
  const double* x = input.values().data();
  for (Index p = 0; p < planes; ++p) {
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        Index best = p * h * w + (2 * i) * w + 2 * j;
        for (Index di = 0; di < 2; ++di) {
          for (Index dj = 0; dj < 2; ++dj) {
            const Index idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const Index o = (p * oh + i) * ow + j;
        out_values[o] = x[best];
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  Tensor out({input.dim(0), input.dim(1), oh, ow}, std::move(out_values));
  return g.record(out, {input}, [input, argmax = std::move(argmax)](const Vector& go) mutable {
    Vector dx = Vector::Zero(input.numel());
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += go[static_cast<Index>(o)];
    accumulate(input, dx);
  });
}

Tensor channel_scale(Graph& g, const Tensor& features, const Tensor& gate) {
  require_rank(features, 4, "channel_scale", "features");
  require_rank(gate, 2, "channel_scale", "gate");
  if (gate.dim(0) != features.dim(0) || gate.dim(1) != features.dim(1)) {
    throw DimensionError("channel_scale: gate " + shape_string(gate.shape()) +
                         " does not match features " + shape_string(features.shape()));
  }
  const Index planes = gate.numel();
  const Index area = features.dim(2) * features.dim(3);
  ConstRowMatrixMap x(features.values().data(), planes, area);
  RowMatrix y = gate.values().asDiagonal() * x;
  Tensor out(features.shape(), Eigen::Map<const Vector>(y.data(), y.size()));
  return g.record(out, {features, gate}, [features, gate, planes, area](const Vector& go) mutable {
    ConstRowMatrixMap gy(go.data(), planes, area);
    if (features.requires_grad()) {
      RowMatrix dx = gate.values().asDiagonal() * gy;
      accumulate(features, Eigen::Map<const Vector>(dx.data(), dx.size()));
    }
    if (gate.requires_grad()) {
      ConstRowMatrixMap x(features.values().data(), planes, area);
      accumulate(gate, gy.cwiseProduct(x).rowwise().sum());
    }
  });
}

Tensor softmax(Graph& g, const Tensor& input) {
  require_rank(input, 2, "softmax", "input");
  const Index n = input.dim(0), k = input.dim(1);
  ConstRowMatrixMap x(input.values().data(), n, k);
  RowMatrix y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  Tensor out({n, k}, Eigen::Map<const Vector>(y.data(), y.size()));
  return g.record(out, {input}, [input, out, n, k](const Vector& go) mutable {
    ConstRowMatrixMap gy(go.data(), n, k);
    ConstRowMatrixMap y(out.values().data(), n, k);
    Vector inner = gy.cwiseProduct(y).rowwise().sum();
    RowMatrix dx = y.cwiseProduct(gy.colwise() - inner);
    accumulate(input, Eigen::Map<const Vector>(dx.data(), dx.size()));
  });
}

Tensor cross_entropy_loss(Graph& g, const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy_loss", "logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ArgumentError("cross_entropy_loss: label " + std::to_string(label) +
                          " outside [0, " + std::to_string(k) + ")");
    }
  }
  ConstRowMatrixMap z(logits.values().data(), n, k);
  RowMatrix prob(n, k);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double m = z.row(i).maxCoeff();
    prob.row(i) = (z.row(i).array() - m).exp().matrix();
    const double s = prob.row(i).sum();
    prob.row(i) /= s;
    total += m + std::log(s) - z(i, labels[static_cast<std::size_t>(i)]);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  std::vector<int> label_copy(labels.begin(), labels.end());
  return g.record(out, {logits}, [logits, prob = std::move(prob), label_copy, n](const Vector& go) mutable {
    RowMatrix d = prob;
    for (Index i = 0; i < n; ++i) d(i, label_copy[static_cast<std::size_t>(i)]) -= 1.0;
    d *= go[0] / static_cast<double>(n);
    accumulate(logits, Eigen::Map<const Vector>(d.data(), d.size()));
  });
}

}  // namespace fsl::ops
