#pragma once

#include <optional>
#include <ostream>

#include "bridge.hpp"
#include "diff/adam.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "operators.hpp"

namespace hei::train {

struct Config {
  double alpha = 1.0;  // weight of the equivariance term
  GroupConfig group{7};
  double lr = 0.01;
  int iterations = 2000;
  std::uint64_t seed = 0;
  int log_every = 10;
  bool data_consistency_output = true;
};

inline void validate(const Config& cfg) {
  if (cfg.alpha < 0.0) throw ConfigError("train: alpha must be nonnegative");
  if (cfg.lr <= 0.0) throw ConfigError("train: learning rate must be positive");
  if (cfg.iterations < 1) throw ConfigError("train: need at least one iteration");
  if (cfg.log_every < 1) throw ConfigError("train: log_every must be positive");
  hei::validate(cfg.group);
}

struct HistoryRow {
  int iteration = 0;
  double mc_loss = 0.0;
  double ei_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> mpsnr;  // full-frame, raw network output vs reference
};

struct History {
  std::vector<HistoryRow> rows;
};

// CSV columns: iteration, mc_loss, ei_loss, total_loss[, mpsnr]
void write_csv(const History& history, std::ostream& out);

template <class S>
struct LossTerms {
  diff::Tensor<S> mc, ei;      // scalars
  diff::Tensor<S> x1, x2, x3;  // reconstruction, its shift, the re-estimate
};

// One objective evaluation:
//   x1 = f(y)            the reconstruction
//   x2 = T_g x1          a shifted copy, assumed to stay in the signal class
//   x3 = f(M x2)         the network's re-estimate from the virtual measurement
//   mc = mse(M x1, y)    measurement consistency
//   ei = mse(x3, x2)     equivariance of f composed with M
// Everything is on one tape, so gradients reach the weights through both
// forward passes.
template <class S>
LossTerms<S> loss_terms(const net::Params<S>& params, const diff::Tensor<S>& y,
                        const diff::Tensor<S>& mask, GroupAction g) {
  LossTerms<S> t;
  t.x1 = net::forward(params, y);
  t.x2 = diff::cyclic_shift(t.x1, g.dx, g.dy);
  t.x3 = net::forward(params, diff::mul(t.x2, mask));
  t.mc = diff::mse(diff::mul(t.x1, mask), y);
  t.ei = diff::mse(t.x3, t.x2);
  return t;
}

struct Result {
  net::Params<float> params;
  History history;
  HsiCube x_hat;
};

// Self-supervised fit to a single measurement: per iteration, sample one
// non-identity shift, minimize mc + alpha * ei with Adam. Deterministic for
// fixed seeds; aborts with DivergedError if the loss leaves the finite
// range. When `reference` is given, logged rows include full-frame MPSNR of
// the raw network output.
Result train(const HsiCube& y, const SpatialMask& mask, const net::ModelConfig& model_config,
             const Config& train_config, const HsiCube* reference = nullptr);

// Forward pass at trained weights; with data_consistency, observed pixels
// are copied from the measurement so known data is never degraded.
HsiCube inpaint(const net::Params<float>& params, const HsiCube& y, const SpatialMask& mask,
                bool data_consistency);

}  // namespace hei::train
