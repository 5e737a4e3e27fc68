#include "lsenet/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lsenet/io.hpp"

namespace lsenet {

namespace {

using nlohmann::json;

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs < 0");
  if (!(lr0 > 0)) throw std::invalid_argument("TrainConfig: lr0 must be > 0");
  if (!(lr_factor > 0 && lr_factor < 1))
    throw std::invalid_argument("TrainConfig: lr_factor must be in (0,1)");
  if (plateau_patience < 1)
    throw std::invalid_argument("TrainConfig: plateau_patience < 1");
  if (!(val_fraction > 0 && val_fraction < 1))
    throw std::invalid_argument("TrainConfig: val_fraction must be in (0,1)");
}

void adam_step(ParameterSet& params, OptimizerState& state,
               const TrainConfig& cfg, float lr) {
  state.t += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    if (!p.has_grad())
      throw std::logic_error("adam_step: missing gradient for parameter " + name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.size(), 0.f);
    if (v.empty()) v.assign(p.size(), 0.f);
    auto data = p.mutable_data();
    const auto grad = p.grad();
    for (int i = 0; i < p.size(); ++i) {
      const double g = grad[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

float plateau_schedule(std::span<const double> history, float lr0, int patience,
                       float factor) {
  float lr = lr0;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (double loss : history) {
    if (loss < best) {
      best = loss;
      stale = 0;
    } else {
      ++stale;
      if (stale == patience) {
        lr *= factor;
        stale = 0;
      }
    }
  }
  return lr;
}

double evaluate_loss(const std::vector<Sample>& set, const ModelConfig& mcfg,
                     const ParameterSet& params) {
  double sum = 0;
  for (const auto& s : set) {
    auto out = model_forward(s.image, s.month, params, mcfg);
    auto loss = cross_entropy(renormalize_channels(out.fused),
                              std::span<const uint8_t>(s.labels));
    sum += loss.item();
  }
  return sum / static_cast<double>(set.size());
}

TrainResult train_loop(const std::vector<Sample>& train_set,
                       const std::vector<Sample>& val_set,
                       const ModelConfig& mcfg, const TrainConfig& tcfg,
                       TrainState& state, const EpochCallback& on_epoch) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train_loop: empty dataset");

  const AugmentPolicy policy{.photometric = true, .crop = true, .flip = false};
  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  for (double v : state.val_history) res.best_val_loss = std::min(res.best_val_loss, v);

  for (int epoch = state.next_epoch; epoch < tcfg.epochs; ++epoch) {
    const float lr = plateau_schedule(state.val_history, tcfg.lr0,
                                      tcfg.plateau_patience, tcfg.lr_factor);
    // fresh permutation per epoch so a resumed run replays the same order
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(tcfg.seed, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    size_t pos = 0;
    int batch_index = 0;
    while (pos < order.size()) {
      const size_t n = std::min<size_t>(tcfg.batch_size, order.size() - pos);
      zero_grads(state.params);
      for (size_t b = 0; b < n; ++b) {
        const Sample& base = train_set[order[pos + b]];
        Sample s = tcfg.augment
                       ? augment(base,
                                 mix(tcfg.seed ^ fnv1a(base.id),
                                     static_cast<uint64_t>(epoch)),
                                 policy)
                       : base;
        auto out = model_forward(s.image, s.month, state.params, mcfg);
        auto loss = cross_entropy(renormalize_channels(out.fused),
                                  std::span<const uint8_t>(s.labels));
        const double value = loss.item();
        if (!std::isfinite(value))
          throw NumericError("train_loop: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(batch_index + 1));
        loss_sum += value;
        backward(scale(loss, 1.f / static_cast<float>(n)));
      }
      adam_step(state.params, state.opt, tcfg, lr);
      ++batch_index;
      pos += n;
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.val_loss = evaluate_loss(val_set, mcfg, state.params);
    log.lr = lr;
    state.val_history.push_back(log.val_loss);
    state.next_epoch = epoch + 1;
    res.log.push_back(log);

    const bool is_best = log.val_loss < res.best_val_loss;
    if (is_best) {
      res.best_val_loss = log.val_loss;
      res.best_epoch = log.epoch;
    }
    if (on_epoch) on_epoch(log, state, is_best);
  }
  return res;
}

void checkpoint_save(const std::filesystem::path& dir, const ParameterSet& params,
                     const ModelConfig& cfg, int epoch, float lr,
                     const std::vector<double>& val_history,
                     const OptimizerState* opt_state) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["model_config"] = json::parse(cfg.to_json());
  manifest["config_hash"] = cfg.hash();
  manifest["epoch"] = epoch;
  manifest["lr"] = lr;
  manifest["val_history"] = val_history;

  std::vector<float> blob;
  json plist = json::array();
  for (const auto& [name, p] : params) {
    plist.push_back({{"name", name},
                     {"shape", p.shape()},
                     {"offset", blob.size()}});
    blob.insert(blob.end(), p.data().begin(), p.data().end());
  }
  manifest["params"] = std::move(plist);
  manifest["blob"] = "params.lst";
  io::write_lst1(dir / "params.lst", {static_cast<int>(blob.size())},
                 std::span<const float>(blob));

  if (opt_state) {
    std::vector<float> mb, vb;
    for (const auto& [name, p] : params) {
      const auto& m = opt_state->m.at(name);
      const auto& v = opt_state->v.at(name);
      mb.insert(mb.end(), m.begin(), m.end());
      vb.insert(vb.end(), v.begin(), v.end());
    }
    io::write_lst1(dir / "opt_m.lst", {static_cast<int>(mb.size())},
                   std::span<const float>(mb));
    io::write_lst1(dir / "opt_v.lst", {static_cast<int>(vb.size())},
                   std::span<const float>(vb));
    manifest["optimizer"] = {
        {"step", opt_state->t}, {"m", "opt_m.lst"}, {"v", "opt_v.lst"}};
  } else {
    manifest["optimizer"] = nullptr;
  }
  io::atomic_write_text(dir / "checkpoint.json", manifest.dump(2));
}

Checkpoint checkpoint_load(const std::filesystem::path& dir,
                           const ModelConfig* expected) {
  const json j = json::parse(io::read_text(dir / "checkpoint.json"));
  Checkpoint ck;
  ck.config = ModelConfig::from_json(j.at("model_config").dump());
  const std::string stored_hash = j.at("config_hash").get<std::string>();
  if (stored_hash != ck.config.hash())
    throw std::runtime_error("checkpoint config hash does not match its config");
  if (expected && expected->hash() != stored_hash)
    throw std::runtime_error(
        "checkpoint was trained with a different model config (hash " +
        stored_hash + ", expected " + expected->hash() + ")");
  ck.epoch = j.at("epoch").get<int>();
  ck.lr = j.at("lr").get<float>();
  ck.val_history = j.at("val_history").get<std::vector<double>>();

  const auto blob = io::read_lst1(dir / j.at("blob").get<std::string>());
  if (blob.dtype != io::Dtype::F32)
    throw std::runtime_error("checkpoint blob must be f32");
  for (const auto& e : j.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<int>>();
    const size_t offset = e.at("offset").get<size_t>();
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    if (offset + n > blob.f32.size())
      throw std::runtime_error("checkpoint blob too small for parameter " + name);
    std::vector<float> data(blob.f32.begin() + offset,
                            blob.f32.begin() + offset + n);
    ck.params.emplace(name, Tensor::from_data(shape, std::move(data), true));
  }

  if (!j.at("optimizer").is_null()) {
    OptimizerState st;
    st.t = j.at("optimizer").at("step").get<int64_t>();
    const auto mb = io::read_lst1(dir / j.at("optimizer").at("m").get<std::string>());
    const auto vb = io::read_lst1(dir / j.at("optimizer").at("v").get<std::string>());
    size_t off = 0;
    for (const auto& [name, p] : ck.params) {
      const size_t n = static_cast<size_t>(p.size());
      if (off + n > mb.f32.size() || off + n > vb.f32.size())
        throw std::runtime_error("checkpoint optimizer state too small");
      st.m[name] = {mb.f32.begin() + off, mb.f32.begin() + off + n};
      st.v[name] = {vb.f32.begin() + off, vb.f32.begin() + off + n};
      off += n;
    }
    ck.opt_state = std::move(st);
  }
  return ck;
}

}  // namespace lsenet
