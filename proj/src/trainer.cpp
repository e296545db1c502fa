#include "hyperei/trainer.hpp"

#include <cmath>

namespace hei::train {

void write_csv(const History& history, std::ostream& out) {
  const bool with_mpsnr = !history.rows.empty() && history.rows.front().mpsnr.has_value();
  out << "iteration,mc_loss,ei_loss,total_loss" << (with_mpsnr ? ",mpsnr" : "") << "\n";
  out.precision(9);
  for (const auto& row : history.rows) {
    out << row.iteration << ',' << row.mc_loss << ',' << row.ei_loss << ',' << row.total_loss;
    if (with_mpsnr) out << ',' << row.mpsnr.value();
    out << "\n";
  }
}

Result train(const HsiCube& y_in, const SpatialMask& mask, const net::ModelConfig& model_config,
             const Config& train_config, const HsiCube* reference) {
  validate(train_config);
  if (y_in.height != mask.height || y_in.width != mask.width)
    throw ShapeError("train: measurement and mask dimensions disagree");
  if (reference && !reference->same_dims(y_in))
    throw ShapeError("train: reference dimensions disagree with measurement");

  // The measurement must vanish on masked pixels; re-projecting is the
  // identity when it already does.
  const HsiCube y = apply_mask(y_in, mask);

  net::Params<float> params = net::build_model<float>(model_config);
  auto tensors = params.tensors();
  auto adam = diff::AdamState<float>::init(tensors);
  const auto y_t = cube_to_tensor<float>(y);
  const auto mask_t = mask_to_tensor<float>(mask);
  Rng rng(train_config.seed);

  Result result;
  for (int it = 1; it <= train_config.iterations; ++it) {
    const GroupAction g = sample_group(rng, train_config.group);
    auto terms = loss_terms(params, y_t, mask_t, g);
    // alpha = 0 keeps the equivariance path out of the tape entirely
    diff::Tensor<float> total =
        train_config.alpha > 0.0
            ? diff::add(terms.mc, diff::scale(terms.ei, float(train_config.alpha)))
            : terms.mc;
    const float total_v = total.scalar();
    if (!std::isfinite(total_v)) throw DivergedError(it);

    params.zero_grads();
    diff::backward(total);
    diff::adam_step(tensors, adam, float(train_config.lr));

    if (it % train_config.log_every == 0 || it == 1 || it == train_config.iterations) {
      HistoryRow row;
      row.iteration = it;
      row.mc_loss = terms.mc.scalar();
      row.ei_loss = terms.ei.scalar();
      row.total_loss = total_v;
      if (reference) {
        const HsiCube x1 = tensor_to_cube(terms.x1);
        row.mpsnr = evaluate(x1, *reference).mpsnr;
      }
      result.history.rows.push_back(std::move(row));
    }
  }

  result.x_hat = inpaint(params, y, mask, train_config.data_consistency_output);
  result.params = std::move(params);
  return result;
}

HsiCube inpaint(const net::Params<float>& params, const HsiCube& y, const SpatialMask& mask,
                bool data_consistency) {
  if (y.height != mask.height || y.width != mask.width)
    throw ShapeError("inpaint: measurement and mask dimensions disagree");
  HsiCube x_hat = tensor_to_cube(net::forward(params, cube_to_tensor<float>(y)));
  if (data_consistency) {
    const Eigen::Index plane = y.plane();
    for (int b = 0; b < y.bands; ++b)
      for (Eigen::Index p = 0; p < plane; ++p)
        if (mask.bits[p]) x_hat.data[Eigen::Index(b) * plane + p] = y.data[Eigen::Index(b) * plane + p];
  }
  return x_hat;
}

}  // namespace hei::train
