#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsenet/data.hpp"
#include "lsenet/model.hpp"
#include "lsenet/tensor.hpp"

namespace lsenet {

struct TrainConfig {
  int batch_size = 4;
  int epochs = 80;
  float lr0 = 1e-3f;
  int plateau_patience = 3;
  float lr_factor = 0.5f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  uint64_t seed = 0;
  double val_fraction = 0.1;
  bool augment = true;

  void validate() const;
};

/// Mean over all pixels of -log(p[label]), p clamped to [1e-7, 1].
template <class T>
TensorT<T> cross_entropy(const TensorT<T>& probs, std::span<const uint8_t> labels) {
  const auto& s = probs.shape();
  if (s.size() != 3)
    throw std::invalid_argument("cross_entropy: probs must be HxWxN");
  const int N = s[2];
  const int pixels = s[0] * s[1];
  if (static_cast<int>(labels.size()) != pixels)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  constexpr double kClampLo = 1e-7;

  const T* p = probs.data().data();
  double loss = 0;
  for (int i = 0; i < pixels; ++i) {
    if (labels[i] >= N)
      throw std::invalid_argument("cross_entropy: label out of range");
    const double v = std::clamp(static_cast<double>(p[static_cast<size_t>(i) * N + labels[i]]),
                                kClampLo, 1.0);
    loss -= std::log(v);
  }
  loss /= pixels;

  auto p_node = probs.node;
  std::vector<uint8_t> labs(labels.begin(), labels.end());
  return detail::make_op<T>(
      {1}, {static_cast<T>(loss)}, {probs},
      [p_node, labs = std::move(labs), N, pixels](detail::Node<T>& o) {
        if (!p_node->needs_grad) return;
        p_node->ensure_grad();
        const T g = o.grad[0];
        for (int i = 0; i < pixels; ++i) {
          const size_t idx = static_cast<size_t>(i) * N + labs[i];
          const T v = p_node->data[idx];
          if (v > T(kClampLo) && v < T(1))
            p_node->grad[idx] -= g / (v * static_cast<T>(pixels));
        }
      });
}

/// Signals a numeric abort (non-finite loss) distinct from config errors.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerState {
  std::map<std::string, std::vector<float>> m, v;
  int64_t t = 0;
};

/// One Adam update; reads accumulated gradients from the parameter tensors.
void adam_step(ParameterSet& params, OptimizerState& state,
               const TrainConfig& cfg, float lr);

/// Pure function of the loss history: lr halves each time `patience`
/// consecutive epochs fail to improve on the best loss seen so far; the
/// counter resets on improvement and after each halving.
float plateau_schedule(std::span<const double> history, float lr0, int patience,
                       float factor);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  float lr = 0;
};

struct TrainState {
  ParameterSet params;
  OptimizerState opt;
  std::vector<double> val_history;
  int next_epoch = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0;
};

using EpochCallback =
    std::function<void(const EpochLog&, const TrainState&, bool is_best)>;

/// Seeded mini-batch training with the plateau schedule; aborts with a
/// diagnostic on NaN loss.
TrainResult train_loop(const std::vector<Sample>& train_set,
                       const std::vector<Sample>& val_set,
                       const ModelConfig& mcfg, const TrainConfig& tcfg,
                       TrainState& state, const EpochCallback& on_epoch = {});

double evaluate_loss(const std::vector<Sample>& set, const ModelConfig& mcfg,
                     const ParameterSet& params);

void checkpoint_save(const std::filesystem::path& dir, const ParameterSet& params,
                     const ModelConfig& cfg, int epoch, float lr,
                     const std::vector<double>& val_history,
                     const OptimizerState* opt_state);

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  int epoch = 0;
  float lr = 0;
  std::vector<double> val_history;
  std::optional<OptimizerState> opt_state;
};

/// Rejects checkpoints whose stored config hash does not match the embedded
/// config, or (when `expected` is given) a mismatched caller config.
Checkpoint checkpoint_load(const std::filesystem::path& dir,
                           const ModelConfig* expected = nullptr);

}  // namespace lsenet
