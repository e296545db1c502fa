#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "diff/ops.hpp"
#include "rng.hpp"

namespace hei::net {

enum class Attention { None, Spatial, Spectral, Both };

std::string to_string(Attention mode);
Attention attention_from_string(const std::string& s);

struct ModelConfig {
  int in_bands = 0;
  int base_channels = 32;
  int depth = 3;
  int attention_rank = 4;  // K of the low-rank channel-attention bottleneck
  Attention attention_mode = Attention::Both;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
  int channels_at(int level) const { return base_channels << (level - 1); }
  bool uses_channel_attention() const {
    return attention_mode == Attention::Spectral || attention_mode == Attention::Both;
  }
  bool uses_spatial_attention() const {
    return attention_mode == Attention::Spatial || attention_mode == Attention::Both;
  }
};

inline void validate(const ModelConfig& cfg) {
  if (cfg.in_bands <= 0) throw ConfigError("model: in_bands must be positive");
  if (cfg.base_channels <= 0) throw ConfigError("model: base_channels must be positive");
  if (cfg.depth < 1) throw ConfigError("model: depth must be at least 1");
  if (cfg.attention_rank <= 0) throw ConfigError("model: attention rank must be positive");
  if (cfg.uses_channel_attention() && cfg.attention_rank > cfg.base_channels)
    throw ConfigError("model: attention rank " + std::to_string(cfg.attention_rank) +
                      " exceeds the narrowest attention site (base_channels = " +
                      std::to_string(cfg.base_channels) + ")");
}

// All learnable weights, in a fixed name order that is a pure function of
// the config. Tensors are shared handles: the trainer updates them in place
// and every forward pass sees the same leaves.
template <class S>
struct Params {
  ModelConfig config;
  std::vector<std::pair<std::string, diff::Tensor<S>>> entries;

  diff::Tensor<S>& at(const std::string& name) {
    for (auto& [n, t] : entries)
      if (n == name) return t;
    throw StateError("model: no parameter named " + name);
  }
  const diff::Tensor<S>& at(const std::string& name) const {
    return const_cast<Params*>(this)->at(name);
  }
  std::vector<diff::Tensor<S>> tensors() const {
    std::vector<diff::Tensor<S>> out;
    out.reserve(entries.size());
    for (const auto& [n, t] : entries) out.push_back(t);
    return out;
  }
  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& [name, t] : entries) n += t.size();
    return n;
  }
  void zero_grads() {
    for (auto& [n, t] : entries) t.zero_grad();
  }
};

namespace detail {

// Decoder output width at a level: mirror the encoder one level up.
inline int decoder_out_channels(const ModelConfig& cfg, int level) {
  return level > 1 ? cfg.channels_at(level - 1) : cfg.base_channels;
}

template <class S>
void init_tensor(diff::Tensor<S>& t, Eigen::Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t.values()[i] = static_cast<S>(rng.next_real(-bound, bound));
}

template <class S>
void add_conv(Params<S>& p, Rng& rng, const std::string& name, int cout, int cin, int k) {
  auto wt = diff::Tensor<S>::leaf({cout, cin, k, k}, true);
  init_tensor(wt, Eigen::Index(cin) * k * k, rng);
  p.entries.emplace_back(name + ".w", std::move(wt));
  p.entries.emplace_back(name + ".b", diff::Tensor<S>::leaf({cout}, true));
}

template <class S>
void add_linear(Params<S>& p, Rng& rng, const std::string& name, int cout, int cin) {
  auto wt = diff::Tensor<S>::leaf({cout, cin}, true);
  init_tensor(wt, cin, rng);
  p.entries.emplace_back(name + ".w", std::move(wt));
  p.entries.emplace_back(name + ".b", diff::Tensor<S>::leaf({cout}, true));
}

template <class S>
void add_norm(Params<S>& p, const std::string& name, int channels) {
  auto g = diff::Tensor<S>::leaf({channels}, true);
  g.values().setOnes();
  p.entries.emplace_back(name + ".norm.g", std::move(g));
  p.entries.emplace_back(name + ".norm.b", diff::Tensor<S>::leaf({channels}, true));
}

}  // namespace detail

// Layer plan. Encoder stage d (1-based, c_d = base * 2^(d-1)):
//   enc{d}.a : conv3x3 stride 1, channels (prev -> c_d), channel-norm, leaky-relu
//   enc{d}.b : conv3x3 stride 2, channels (c_d -> c_d),  channel-norm, leaky-relu
// Every conv except the sigmoid head is followed by a learnable
// per-channel normalization; without it the 0.01 learning rate saturates
// the sigmoid head within a few dozen steps and training freezes.
// The stride-1 feature is routed through an attention block (per
// attention_mode) and concatenated into the decoder at the same scale; the
// stride-2 feature feeds the next stage. Stride-2 convs reflect-pad the
// top/left side only: with even dims a 3x3 stride-2 window admits no
// symmetric integer padding that halves exactly, and one-sided padding is
// the conventional exact-halving choice. Decoder level d upsamples 2x,
// concatenates the attended skip, then conv3x3 to the mirrored width. A
// final 1x1 conv maps back to in_bands, through a sigmoid.
template <class S>
Params<S> build_model(const ModelConfig& cfg) {
  validate(cfg);
  Params<S> p;
  p.config = cfg;
  Rng rng(cfg.seed);
  for (int d = 1; d <= cfg.depth; ++d) {
    const int cd = cfg.channels_at(d);
    const int prev = d == 1 ? cfg.in_bands : cfg.channels_at(d - 1);
    detail::add_conv(p, rng, "enc" + std::to_string(d) + ".a", cd, prev, 3);
    detail::add_norm(p, "enc" + std::to_string(d) + ".a", cd);
    detail::add_conv(p, rng, "enc" + std::to_string(d) + ".b", cd, cd, 3);
    detail::add_norm(p, "enc" + std::to_string(d) + ".b", cd);
    if (cfg.uses_channel_attention()) {
      detail::add_linear(p, rng, "att" + std::to_string(d) + ".ch.fc1", cfg.attention_rank, cd);
      detail::add_linear(p, rng, "att" + std::to_string(d) + ".ch.fc2", cd, cfg.attention_rank);
    }
    if (cfg.uses_spatial_attention())
      detail::add_conv(p, rng, "att" + std::to_string(d) + ".sp", 1, 2, 7);
  }
  for (int d = cfg.depth; d >= 1; --d) {
    const int below = d == cfg.depth ? cfg.channels_at(cfg.depth) : detail::decoder_out_channels(cfg, d + 1);
    detail::add_conv(p, rng, "dec" + std::to_string(d), detail::decoder_out_channels(cfg, d),
                     below + cfg.channels_at(d), 3);
    detail::add_norm(p, "dec" + std::to_string(d), detail::decoder_out_channels(cfg, d));
  }
  detail::add_conv(p, rng, "out", cfg.in_bands, cfg.base_channels, 1);
  return p;
}

// Per-channel gate: squeeze spatially, pass through the rank-K bottleneck
// C -> K -> C, gate with a sigmoid, rescale the feature map.
template <class S>
diff::Tensor<S> channel_attention(const diff::Tensor<S>& feature, const diff::Tensor<S>& w1,
                                  const diff::Tensor<S>& b1, const diff::Tensor<S>& w2,
                                  const diff::Tensor<S>& b2) {
  const Eigen::Index n = feature.dim(0), c = feature.dim(1);
  if (w1.dim(1) != c || w1.dim(0) > c)
    throw ShapeError("channel_attention: bottleneck rank must not exceed channel count");
  auto squeezed = diff::reshape(diff::global_avg_pool(feature), {n, c});
  auto gate = diff::sigmoid(diff::linear(diff::relu(diff::linear(squeezed, w1, b1)), w2, b2));
  return diff::mul(feature, diff::reshape(gate, {n, c, 1, 1}));
}

// Per-pixel gate: channel mean/max summary maps through a wide 7x7
// convolution, sigmoid, rescale every channel by the resulting map.
template <class S>
diff::Tensor<S> spatial_attention(const diff::Tensor<S>& feature, const diff::Tensor<S>& w,
                                  const diff::Tensor<S>& b) {
  if (feature.dim(2) < 7 || feature.dim(3) < 7)
    throw ShapeError("spatial_attention: needs spatial dims >= 7, got " +
                     diff::shape_str(feature.shape()));
  auto summary = diff::concat_channels(diff::channel_mean(feature), diff::channel_max(feature));
  auto gate = diff::sigmoid(diff::conv2d(summary, w, b, 1, 3, diff::Pad::Reflect));
  return diff::mul(feature, gate);
}

// The skip-path block: identity for None, otherwise the configured
// attention composition (channel first, then spatial, for Both).
template <class S>
diff::Tensor<S> spatio_spectral_block(const diff::Tensor<S>& feature, const Params<S>& params,
                                      int level) {
  const auto mode = params.config.attention_mode;
  if (mode == Attention::None) return feature;
  const std::string at = "att" + std::to_string(level);
  diff::Tensor<S> f = feature;
  if (params.config.uses_channel_attention())
    f = channel_attention(f, params.at(at + ".ch.fc1.w"), params.at(at + ".ch.fc1.b"),
                          params.at(at + ".ch.fc2.w"), params.at(at + ".ch.fc2.b"));
  if (params.config.uses_spatial_attention())
    f = spatial_attention(f, params.at(at + ".sp.w"), params.at(at + ".sp.b"));
  return f;
}

template <class S>
diff::Tensor<S> forward(const Params<S>& params, const diff::Tensor<S>& input) {
  const auto& cfg = params.config;
  if (input.shape().size() != 4 || input.dim(1) != cfg.in_bands)
    throw ShapeError("forward: expected input [1," + std::to_string(cfg.in_bands) + ",H,W], got " +
                     diff::shape_str(input.shape()));
  const Eigen::Index h = input.dim(2), w = input.dim(3);
  const Eigen::Index div = Eigen::Index(1) << cfg.depth;
  if (h % div != 0 || w % div != 0)
    throw ShapeError("forward: spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be divisible by 2^depth = " + std::to_string(div) + "; pad to " +
                     std::to_string((h + div - 1) / div * div) + "x" +
                     std::to_string((w + div - 1) / div * div));

  auto normed_lrelu = [&params](const diff::Tensor<S>& conv_out, const std::string& layer) {
    return diff::leaky_relu(
        diff::channel_norm(conv_out, params.at(layer + ".norm.g"), params.at(layer + ".norm.b")),
        S(0.1));
  };
  std::vector<diff::Tensor<S>> skips;
  diff::Tensor<S> x = input;
  for (int d = 1; d <= cfg.depth; ++d) {
    const std::string enc = "enc" + std::to_string(d);
    auto e = normed_lrelu(
        diff::conv2d(x, params.at(enc + ".a.w"), params.at(enc + ".a.b"), 1, 1, diff::Pad::Reflect),
        enc + ".a");
    skips.push_back(spatio_spectral_block(e, params, d));
    x = normed_lrelu(
        diff::conv2d(diff::pad2d(e, 1, 1, 0, 0, diff::Pad::Reflect), params.at(enc + ".b.w"),
                     params.at(enc + ".b.b"), 2, 0),
        enc + ".b");
  }
  for (int d = cfg.depth; d >= 1; --d) {
    const std::string dec = "dec" + std::to_string(d);
    auto cat = diff::concat_channels(diff::bilinear_upsample2x(x), skips[std::size_t(d - 1)]);
    x = normed_lrelu(
        diff::conv2d(cat, params.at(dec + ".w"), params.at(dec + ".b"), 1, 1, diff::Pad::Reflect),
        dec);
  }
  return diff::sigmoid(diff::conv2d(x, params.at("out.w"), params.at("out.b"), 1, 0));
}

// Checkpoint file: magic "HEI1", fixed-order config header, an FNV-1a hash
// of that header, then all parameters in name order as little-endian
// float32. Loading refuses files whose recomputed hash disagrees.
void save_checkpoint(const Params<float>& params, const std::filesystem::path& path);
Params<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace hei::net
