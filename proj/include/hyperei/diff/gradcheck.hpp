#pragma once

#include <functional>
#include <string>
#include <vector>

#include "../rng.hpp"
#include "adam.hpp"
#include "ops.hpp"

// Central finite-difference verification of every differentiable op, in
// float64 (float32 finite differences are too noisy to certify anything).
// Each check compares the analytic gradient of loss = sum(op(...) * probe)
// against (f(x+h) - f(x-h)) / 2h per input coordinate.

namespace hei::diff {

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
};

constexpr double kGradCheckTol = 1e-5;
constexpr double kGradCheckStep = 1e-4;

// Rebuilds the graph through `build` for every probe, so the op under test
// sees current leaf values. Returns the worst relative error across all
// coordinates of all leaves.
inline double max_rel_grad_error(const std::vector<Tensor<double>*>& leaves,
                                 const std::function<Tensor<double>()>& build,
                                 double step = kGradCheckStep) {
  for (auto* leaf : leaves) leaf->zero_grad();
  backward(build());
  std::vector<VecX<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto* leaf : leaves) analytic.push_back(leaf->grad());

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li]->values();
    for (Eigen::Index k = 0; k < vals.size(); ++k) {
      const double orig = vals[k];
      vals[k] = orig + step;
      const double fp = build().scalar();
      vals[k] = orig - step;
      const double fm = build().scalar();
      vals[k] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[li][k];
      const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

namespace detail {

// Uniform values bounded away from the relu/max kinks so finite
// differences stay on one side of every non-smooth point.
inline Tensor<double> rough_leaf(Rng& rng, Shape shape, double lo = 0.2, double hi = 1.5) {
  Tensor<double> t = Tensor<double>::leaf(std::move(shape), true);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double mag = rng.next_real(lo, hi);
    t.values()[i] = rng.next_unit() < 0.5 ? -mag : mag;
  }
  return t;
}

inline Tensor<double> probe_for(Rng& rng, const Shape& shape) {
  Tensor<double> t = Tensor<double>::leaf(shape, false);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = rng.next_real(-1.0, 1.0);
  return t;
}

}  // namespace detail

// Runs the whole per-op battery. Deterministic for a fixed seed.
inline std::vector<GradCheckResult> run_op_gradchecks(std::uint64_t seed = 20240901) {
  Rng rng(seed);
  std::vector<GradCheckResult> results;

  auto check = [&](const std::string& name, const std::vector<Tensor<double>*>& leaves,
                   const std::function<Tensor<double>()>& build) {
    const double err = max_rel_grad_error(leaves, build);
    results.push_back({name, err, err <= kGradCheckTol});
  };
  // Weight the op output with a probe drawn ONCE per check so every entry
  // of the Jacobian matters; the probe must stay fixed across the FD
  // rebuilds or the differences would compare different functions.
  auto check_probed = [&](const std::string& name, const std::vector<Tensor<double>*>& leaves,
                          const std::function<Tensor<double>()>& op) {
    const Tensor<double> probe = detail::probe_for(rng, op().shape());
    check(name, leaves, [op, probe] { return sum(mul(op(), probe)); });
  };

  {
    auto a = detail::rough_leaf(rng, {2, 3, 4, 5});
    auto b = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("add", {&a, &b}, [&] { return add(a, b); });
  }
  {
    auto a = detail::rough_leaf(rng, {2, 3, 1, 1});
    auto b = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("add_broadcast", {&a, &b}, [&] { return add(a, b); });
  }
  {
    auto a = detail::rough_leaf(rng, {2, 3, 4, 5});
    auto b = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("mul", {&a, &b}, [&] { return mul(a, b); });
  }
  {
    auto a = detail::rough_leaf(rng, {1, 1, 4, 5});
    auto b = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("mul_broadcast", {&a, &b}, [&] { return mul(a, b); });
  }
  {
    auto x = detail::rough_leaf(rng, {3, 7});
    check_probed("scale", {&x}, [&] { return scale(x, 0.37); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("leaky_relu", {&x}, [&] { return leaky_relu(x, 0.1); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("relu", {&x}, [&] { return relu(x); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("sigmoid", {&x}, [&] { return sigmoid(x); });
  }
  {
    auto a = detail::rough_leaf(rng, {2, 3, 4, 5});
    auto b = detail::rough_leaf(rng, {2, 3, 4, 5});
    check("mse", {&a, &b}, [&] { return mse(a, b); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check("sum", {&x}, [&] { return sum(x); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("reshape", {&x}, [&] { return reshape(x, {6, 20}); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("global_avg_pool", {&x}, [&] { return global_avg_pool(x); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    check_probed("channel_mean", {&x}, [&] { return channel_mean(x); });
  }
  {
    // spread channel values at least 0.01 apart per site so the +-h probes
    // cannot flip the argmax
    auto x = Tensor<double>::leaf({2, 3, 4, 5}, true);
    const Eigen::Index plane = 20;
    for (Eigen::Index q = 0; q < 2; ++q)
      for (Eigen::Index p = 0; p < plane; ++p) {
        double base = rng.next_real(-1.0, 1.0);
        std::vector<int> order{0, 1, 2};
        rng.shuffle(order.begin(), order.end());
        for (Eigen::Index c = 0; c < 3; ++c)
          x.values()[(q * 3 + c) * plane + p] = base + 0.05 * order[std::size_t(c)];
      }
    check_probed("channel_max", {&x}, [&] { return channel_max(x); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 4, 6});
    check_probed("bilinear_upsample2x", {&x}, [&] { return bilinear_upsample2x(x); });
  }
  {
    auto x = detail::rough_leaf(rng, {3, 5});
    auto w = detail::rough_leaf(rng, {4, 5});
    auto b = detail::rough_leaf(rng, {4});
    check_probed("linear", {&x, &w, &b}, [&] { return linear(x, w, b); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 5, 5});
    auto k = detail::rough_leaf(rng, {3, 2, 3, 3});
    auto b = detail::rough_leaf(rng, {3});
    check_probed("conv2d", {&x, &k, &b}, [&] { return conv2d(x, k, b, 1, 1, Pad::Zero); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 5, 5});
    auto k = detail::rough_leaf(rng, {3, 2, 3, 3});
    auto b = detail::rough_leaf(rng, {3});
    check_probed("conv2d_stride2", {&x, &k, &b}, [&] { return conv2d(x, k, b, 2, 1, Pad::Zero); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 5, 5});
    auto k = detail::rough_leaf(rng, {3, 2, 3, 3});
    auto b = detail::rough_leaf(rng, {3});
    check_probed("conv2d_reflect", {&x, &k, &b}, [&] { return conv2d(x, k, b, 1, 1, Pad::Reflect); });
  }
  {
    // the 7x7 attention convolution geometry
    auto x = detail::rough_leaf(rng, {1, 2, 9, 8});
    auto k = detail::rough_leaf(rng, {1, 2, 7, 7});
    auto b = detail::rough_leaf(rng, {1});
    check_probed("conv2d_reflect7", {&x, &k, &b}, [&] { return conv2d(x, k, b, 1, 3, Pad::Reflect); });
  }
  {
    auto a = detail::rough_leaf(rng, {1, 2, 4, 5});
    auto b = detail::rough_leaf(rng, {1, 3, 4, 5});
    check_probed("concat_channels", {&a, &b}, [&] { return concat_channels(a, b); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 4, 6});
    check_probed("cyclic_shift", {&x}, [&] { return cyclic_shift(x, 2, 3); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 4, 6});
    check_probed("pad2d_zero", {&x}, [&] { return pad2d(x, 1, 2, 0, 1, Pad::Zero); });
  }
  {
    auto x = detail::rough_leaf(rng, {2, 3, 4, 5});
    auto g = detail::rough_leaf(rng, {3});
    auto b = detail::rough_leaf(rng, {3});
    check_probed("channel_norm", {&x, &g, &b}, [&] { return channel_norm(x, g, b); });
  }
  {
    auto x = detail::rough_leaf(rng, {1, 2, 4, 6});
    check_probed("pad2d_reflect", {&x}, [&] { return pad2d(x, 1, 1, 0, 2, Pad::Reflect); });
  }
  {
    // chain-rule composite: the finite difference runs through the whole
    // composition, not each op in isolation
    auto x = detail::rough_leaf(rng, {1, 2, 6, 6});
    auto k = detail::rough_leaf(rng, {2, 2, 3, 3});
    auto b = detail::rough_leaf(rng, {2});
    auto target = detail::probe_for(rng, {1, 2, 6, 6});
    check("composite_chain", {&x, &k, &b}, [&] {
      return mse(sigmoid(conv2d(leaky_relu(x, 0.1), k, b, 1, 1, Pad::Reflect)), target);
    });
  }

  return results;
}

}  // namespace hei::diff
