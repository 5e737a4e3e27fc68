#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lsenet/encodings.hpp"
#include "lsenet/tensor.hpp"

namespace lsenet {

struct ModelConfig {
  int input_h = 88;
  int input_w = 88;
  int in_channels = 3;
  std::vector<int> widths = {8, 16, 32, 64};
  int num_classes = 12;
  int attention_r = 11;
  SeasonalMode seasonal_mode = SeasonalMode::Month;
  LocationMode location_mode = LocationMode::Pe2d;
  int attention_blocks = 2;
  bool csu_enabled = true;
  bool attention_enabled = true;

  int stages() const { return static_cast<int>(widths.size()); }
  int head_channels() const { return widths.front(); }
  int seasonal_len() const {
    switch (seasonal_mode) {
      case SeasonalMode::Month: return 12;
      case SeasonalMode::Season: return 4;
      default: return 0;
    }
  }

  void validate() const;  // throws std::invalid_argument
  std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  std::string hash() const;

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct ModelOutputT {
  TensorT<T> detection;   // H x W x N softmax probabilities
  TensorT<T> attention;   // H/r x W/r x N sigmoid weights (undefined w/o LA)
  TensorT<T> fused;       // H x W x N, P * up(C2) + P
  std::vector<uint8_t> prediction;  // per-pixel argmax over fused
};
using ModelOutput = ModelOutputT<float>;

namespace model_detail {

template <class T>
TensorT<T> conv_block(const TensorT<T>& x, const ParameterSetT<T>& params,
                      const std::string& name) {
  return relu(conv2d(x, params.at(name + ".weight"), params.at(name + ".bias"),
                     Padding::Same));
}

template <class T>
TensorT<T> seasonal_tensor(const SeasonalCode& code) {
  std::vector<T> v(code.vec.begin(), code.vec.end());
  const int n = static_cast<int>(v.size());
  return TensorT<T>::from_data({n}, std::move(v));
}

}  // namespace model_detail

/// Channel supervision unit: global-average-pool the feature map, compress
/// with one fc+relu, splice in the seasonal one-hot, expand with a second
/// fc+relu. Returns a 1x1xC bias vector.
template <class T>
TensorT<T> csu_forward(const TensorT<T>& feature, const SeasonalCode& seasonal,
                       const ParameterSetT<T>& params, const std::string& prefix) {
  auto pooled = global_avg_pool(feature);
  auto hidden = relu(fully_connected(pooled, params.at(prefix + ".fc1.weight"),
                                     params.at(prefix + ".fc1.bias")));
  TensorT<T> joined = hidden;
  if (!seasonal.vec.empty()) {
    auto s = model_detail::seasonal_tensor<T>(seasonal);
    joined = reshape(concat_channels(reshape(hidden, {1, 1, hidden.size()}),
                                     reshape(s, {1, 1, s.size()})),
                     {hidden.size() + s.size()});
  }
  const auto& w2 = params.at(prefix + ".fc2.weight");
  if (joined.size() != w2.extent(0))
    throw std::invalid_argument("csu_forward: seasonal length inconsistent with fc2");
  auto out = relu(fully_connected(joined, w2, params.at(prefix + ".fc2.bias")));
  return reshape(out, {1, 1, out.size()});
}

/// One encoder stage: two conv blocks, optional CSU bias, and a 2x2 max pool
/// (skipped for the bottleneck stage). Returns {skip, pooled}; pooled is an
/// undefined tensor when pool is false.
template <class T>
std::pair<TensorT<T>, TensorT<T>> encoder_forward(const TensorT<T>& input,
                                                  const SeasonalCode& seasonal,
                                                  const ParameterSetT<T>& params,
                                                  const std::string& prefix,
                                                  bool csu_enabled, bool pool) {
  auto b1 = model_detail::conv_block(input, params, prefix + ".conv1");
  b1 = model_detail::conv_block(b1, params, prefix + ".conv2");
  TensorT<T> skip = b1;
  if (csu_enabled) {
    auto bias = csu_forward(input, seasonal, params, prefix + ".csu");
    skip = broadcast_add_channels(b1, reshape(bias, {bias.size()}));
  }
  TensorT<T> pooled;
  if (pool) pooled = pool2d(skip, PoolKind::Max, 2);
  return {skip, pooled};
}

/// One decoder stage: nearest-upsample the bottom map x2, concatenate the
/// skip, two conv blocks, optional CSU bias computed from the concatenated
/// map.
template <class T>
TensorT<T> decoder_forward(const TensorT<T>& bottom, const TensorT<T>& skip,
                           const SeasonalCode& seasonal,
                           const ParameterSetT<T>& params,
                           const std::string& prefix, bool csu_enabled) {
  if (skip.extent(0) != 2 * bottom.extent(0) ||
      skip.extent(1) != 2 * bottom.extent(1))
    throw std::invalid_argument("decoder_forward: skip extents must be 2x bottom");
  auto up = upsample(bottom, UpsampleKind::Nearest, 2);
  auto cat = concat_channels(up, skip);
  auto b1 = model_detail::conv_block(cat, params, prefix + ".conv1");
  b1 = model_detail::conv_block(b1, params, prefix + ".conv2");
  if (!csu_enabled) return b1;
  auto bias = csu_forward(cat, seasonal, params, prefix + ".csu");
  return broadcast_add_channels(b1, reshape(bias, {bias.size()}));
}

/// Dual-branch head. Detection: 1x1 conv to N classes + per-pixel softmax.
/// Location attention: average-pool by r, conv block, location encoding,
/// further conv blocks, 1x1 conv + sigmoid to N per-class weights, bilinear
/// upsample, then fused = P * up(C2) + P.
template <class T>
ModelOutputT<T> head_forward(const TensorT<T>& feature,
                             const ParameterSetT<T>& params,
                             const ModelConfig& cfg) {
  ModelOutputT<T> out;
  auto logits = conv2d(feature, params.at("head.det.weight"),
                       params.at("head.det.bias"), Padding::Same);
  out.detection = softmax_channels(logits);

  if (!cfg.attention_enabled) {
    out.fused = out.detection;
  } else {
    const int r = cfg.attention_r;
    if (feature.extent(0) % r != 0 || feature.extent(1) % r != 0)
      throw std::invalid_argument("head_forward: extents not divisible by r");
    auto c1 = pool2d(feature, PoolKind::Avg, r);
    auto a = model_detail::conv_block(c1, params, "head.att.conv1");
    a = apply_location_encoding(a, cfg.location_mode, params, "head.att.loc");
    for (int i = 1; i <= cfg.attention_blocks; ++i)
      a = model_detail::conv_block(a, params,
                                   "head.att.block" + std::to_string(i));
    out.attention = sigmoid(conv2d(a, params.at("head.att.out.weight"),
                                   params.at("head.att.out.bias"), Padding::Same));
    auto up = upsample(out.attention, UpsampleKind::Bilinear, r);
    out.fused = add(mul(out.detection, up), out.detection);
  }

  const int N = cfg.num_classes;
  const int pixels = out.fused.extent(0) * out.fused.extent(1);
  out.prediction.resize(pixels);
  const T* f = out.fused.data().data();
  for (int p = 0; p < pixels; ++p) {
    const T* fp = f + static_cast<size_t>(p) * N;
    int best = 0;
    for (int c = 1; c < N; ++c)
      if (fp[c] > fp[best]) best = c;
    out.prediction[p] = static_cast<uint8_t>(best);
  }
  return out;
}

template <class T>
ModelOutputT<T> model_forward(const TensorT<T>& image, int month,
                              const ParameterSetT<T>& params,
                              const ModelConfig& cfg) {
  if (image.shape() != std::vector<int>{cfg.input_h, cfg.input_w, cfg.in_channels})
    throw std::invalid_argument("model_forward: image shape does not match config");
  const SeasonalCode seasonal = seasonal_one_hot(month, cfg.seasonal_mode);
  const int n = cfg.stages();

  std::vector<TensorT<T>> skips;
  TensorT<T> x = image;
  for (int i = 1; i <= n; ++i) {
    const bool pool = i < n;
    auto [skip, pooled] = encoder_forward(x, seasonal, params,
                                          "e" + std::to_string(i),
                                          cfg.csu_enabled, pool);
    if (pool) {
      skips.push_back(skip);
      x = pooled;
    } else {
      x = skip;  // bottleneck
    }
  }
  for (int s = n - 1; s >= 1; --s)
    x = decoder_forward(x, skips[s - 1], seasonal, params,
                        "d" + std::to_string(s), cfg.csu_enabled);
  return head_forward(x, params, cfg);
}

/// He-uniform initialization (bound sqrt(6/fan_in)) for weights, zero biases.
template <class T>
ParameterSetT<T> init_parameters(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterSetT<T> params;
  for (const auto& [name, shape] : cfg.parameter_shapes()) {
    int size = 1;
    for (int e : shape) size *= e;
    std::vector<T> data(size, T(0));
    const bool is_weight = name.ends_with(".weight");
    if (is_weight) {
      int fan_in = 1;
      for (size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : data) v = static_cast<T>(dist(rng));
    }
    params.emplace(name, TensorT<T>::from_data(shape, std::move(data), true));
  }
  return params;
}

inline void zero_grads(auto& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace lsenet
