#include "fsl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fsl/error.hpp"

namespace fsl {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

namespace {

double evaluate(const std::function<Tensor(Graph&)>& fn) {
  Graph g(Graph::Mode::kInference);
  Tensor out = fn(g);
  if (out.numel() != 1) {
    throw ArgumentError("gradcheck: function returned shape " + shape_string(out.shape()) +
                        ", expected a scalar");
  }
  return out.values()[0];
}

}  // namespace

GradcheckReport finite_diff_gradcheck(const std::function<Tensor(Graph&)>& fn,
                                      std::span<const NamedTensor> params,
                                      GradcheckOptions options) {
  std::vector<Tensor> tensors;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.clear_grad();
    tensors.push_back(t);
  }

  std::vector<Vector> analytic;
  {
    Graph g;
    Tensor out = fn(g);
    if (out.numel() != 1) {
      throw ArgumentError("gradcheck: function returned shape " + shape_string(out.shape()) +
                          ", expected a scalar");
    }
    g.backward(out);
    for (Tensor& t : tensors) {
      analytic.push_back(t.has_grad() ? t.grad() : Vector::Zero(t.numel()));
      t.clear_grad();
    }
  }

  GradcheckReport report;
  for (std::size_t pi = 0; pi < tensors.size(); ++pi) {
    Tensor& t = tensors[pi];
    const Index n = t.numel();
    const Index count = options.max_elements_per_param > 0
                            ? std::min(n, options.max_elements_per_param)
                            : n;
    GradcheckEntry entry;
    entry.name = params[pi].name;
    for (Index k = 0; k < count; ++k) {
      const Index idx = count == n ? k : (k * n) / count;
      const double original = t.values()[idx];
      const double h = options.step * std::max(1.0, std::abs(original));
      t.values()[idx] = original + h;
      const double up = evaluate(fn);
      t.values()[idx] = original - h;
      const double down = evaluate(fn);
      t.values()[idx] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][idx];
      auto rel = [&](double num) { return std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)}); };
      double err = rel(numeric);
      if (err >= options.rtol && options.one_sided_fallback) {
        // Second-order one-sided stencils; one of them avoids a switch point
        // that the central stencil straddles.
        const double center = evaluate(fn);
        t.values()[idx] = original + 2.0 * h;
        const double up2 = evaluate(fn);
        t.values()[idx] = original - 2.0 * h;
        const double down2 = evaluate(fn);
        t.values()[idx] = original;
        const double forward = (-3.0 * center + 4.0 * up - up2) / (2.0 * h);
        const double backward = (3.0 * center - 4.0 * down + down2) / (2.0 * h);
        const double one_sided = std::min(rel(forward), rel(backward));
        if (one_sided < err) {
          err = one_sided;
          ++entry.one_sided;
        }
      }
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      ++entry.checked;
    }
    entry.passed = entry.max_rel_error < options.rtol;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fsl
