#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "lsenet/train.hpp"

using namespace lsenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lsenet_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 16;
  cfg.widths = {4, 8};
  cfg.num_classes = 3;
  cfg.attention_r = 4;
  cfg.attention_blocks = 1;
  return cfg;
}

std::vector<Sample> tiny_samples(double val_needed_fraction, uint64_t seed) {
  auto scfg = default_synth_config(16, 16);
  scfg.num_classes = 3;
  scfg.classes.resize(2);
  scfg.classes[0].class_id = 1;
  scfg.classes[1].class_id = 2;
  scfg.seed = seed;
  auto samples = synth_generate(scfg, 2);
  const auto stats = compute_channel_stats(samples);
  for (auto& s : samples) normalize_sample(s, stats);
  (void)val_needed_fraction;
  return samples;
}

/// Gives every parameter the gradient w (elementwise) via one backward pass.
void load_grads(ParameterSet& params, const std::map<std::string, Tensor>& w) {
  zero_grads(params);
  Tensor total;
  for (auto& [name, p] : params) {
    auto term = sum(mul(p, w.at(name)));
    total = total.defined() ? add(total, term) : term;
  }
  backward(total);
}

}  // namespace

TEST_CASE("cross entropy of the uniform distribution is ln N") {
  const int N = 12;
  auto probs = Tensor::full({2, 2, N}, 1.f / N);
  std::vector<uint8_t> labels(4, 3);
  const auto loss = cross_entropy(probs, std::span<const uint8_t>(labels));
  CHECK(loss.item() == doctest::Approx(std::log(12.0)).epsilon(1e-5));
  CHECK(std::log(12.0) == doctest::Approx(2.484907).epsilon(1e-5));
}

TEST_CASE("cross entropy of a perfect one-hot prediction is zero") {
  const int N = 4;
  std::vector<float> p(2 * 2 * N, 0.f);
  std::vector<uint8_t> labels = {0, 3, 1, 2};
  for (int i = 0; i < 4; ++i) p[static_cast<size_t>(i) * N + labels[i]] = 1.f;
  auto probs = Tensor::from_data({2, 2, N}, std::move(p));
  CHECK(cross_entropy(probs, std::span<const uint8_t>(labels)).item() == 0.f);
}

TEST_CASE("cross entropy input validation") {
  auto probs = Tensor::full({2, 2, 3}, 1.f / 3);
  std::vector<uint8_t> bad = {0, 1, 3, 0};  // 3 >= N
  CHECK_THROWS_AS(cross_entropy(probs, std::span<const uint8_t>(bad)),
                  std::invalid_argument);
  std::vector<uint8_t> short_labels = {0, 1};
  CHECK_THROWS_AS(cross_entropy(probs, std::span<const uint8_t>(short_labels)),
                  std::invalid_argument);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(0.1, 0.9);
  std::vector<double> p(2 * 2 * 3);
  for (auto& v : p) v = dist(rng);
  std::vector<uint8_t> labels = {0, 2, 1, 1};
  auto x = TensorT<double>::from_data({2, 2, 3}, std::move(p));
  const double worst = finite_difference_check<double>(
      [&](const TensorT<double>& t) {
        return cross_entropy(t, std::span<const uint8_t>(labels));
      },
      x, 1e-6);
  CHECK(worst < 1e-6);
}

TEST_CASE("adam first step from zero moves by ~lr against unit gradient") {
  ParameterSet params;
  params.emplace("p", Tensor::from_data({3}, {0.f, 0.f, 0.f}, true));
  std::map<std::string, Tensor> w;
  w.emplace("p", Tensor::from_data({3}, {1.f, 1.f, 1.f}));
  load_grads(params, w);

  TrainConfig cfg;
  OptimizerState st;
  adam_step(params, st, cfg, 1e-3f);
  CHECK(st.t == 1);
  for (float v : params.at("p").data())
    CHECK(v == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("two adam steps match a scripted scalar oracle") {
  const double g1 = 0.7, g2 = -0.3, lr = 5e-3;
  ParameterSet params;
  params.emplace("p", Tensor::from_data({1}, {0.25f}, true));
  TrainConfig cfg;
  OptimizerState st;

  std::map<std::string, Tensor> w1, w2;
  w1.emplace("p", Tensor::from_data({1}, {static_cast<float>(g1)}));
  w2.emplace("p", Tensor::from_data({1}, {static_cast<float>(g2)}));
  load_grads(params, w1);
  adam_step(params, st, cfg, static_cast<float>(lr));
  load_grads(params, w2);
  adam_step(params, st, cfg, static_cast<float>(lr));

  double theta = 0.25, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    theta -= lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
  CHECK(std::fabs(params.at("p").data()[0] - theta) < 1e-6);
}

TEST_CASE("adam with zero gradient or zero lr leaves parameters unchanged") {
  TrainConfig cfg;
  {
    ParameterSet params;
    params.emplace("p", Tensor::from_data({2}, {1.f, -2.f}, true));
    std::map<std::string, Tensor> w;
    w.emplace("p", Tensor::from_data({2}, {0.f, 0.f}));
    load_grads(params, w);
    OptimizerState st;
    adam_step(params, st, cfg, 1e-3f);
    CHECK(params.at("p").data()[0] == 1.f);
    CHECK(params.at("p").data()[1] == -2.f);
  }
  {
    ParameterSet params;
    params.emplace("p", Tensor::from_data({2}, {1.f, -2.f}, true));
    std::map<std::string, Tensor> w;
    w.emplace("p", Tensor::from_data({2}, {3.f, 4.f}));
    load_grads(params, w);
    OptimizerState st;
    adam_step(params, st, cfg, 0.f);
    CHECK(params.at("p").data()[0] == 1.f);
    CHECK(params.at("p").data()[1] == -2.f);
  }
}

TEST_CASE("adam rejects parameters without gradients") {
  ParameterSet params;
  params.emplace("p", Tensor::from_data({2}, {0.f, 0.f}, true));
  TrainConfig cfg;
  OptimizerState st;
  CHECK_THROWS_AS(adam_step(params, st, cfg, 1e-3f), std::logic_error);
}

TEST_CASE("plateau schedule traces") {
  const float lr0 = 1e-3f;
  {
    const std::vector<double> h = {1.0, 0.9, 0.91, 0.92, 0.93};
    CHECK(plateau_schedule(h, lr0, 3, 0.5f) == doctest::Approx(5e-4f));
    // one epoch earlier the counter has not reached patience yet
    CHECK(plateau_schedule(std::span(h).first(4), lr0, 3, 0.5f) ==
          doctest::Approx(lr0));
  }
  {
    const std::vector<double> h = {1.0, 1.1, 1.2, 1.3, 0.5, 0.6, 0.7, 0.8};
    CHECK(plateau_schedule(std::span(h).first(4), lr0, 3, 0.5f) ==
          doctest::Approx(5e-4f));
    CHECK(plateau_schedule(std::span(h).first(5), lr0, 3, 0.5f) ==
          doctest::Approx(5e-4f));  // improvement resets the counter, not lr
    CHECK(plateau_schedule(h, lr0, 3, 0.5f) == doctest::Approx(2.5e-4f));
  }
  {
    const std::vector<double> h = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
    CHECK(plateau_schedule(h, lr0, 3, 0.5f) == doctest::Approx(lr0));
  }
  CHECK(plateau_schedule({}, lr0, 3, 0.5f) == doctest::Approx(lr0));
  {
    // the schedule is a pure replay: lr never increases along a prefix
    const std::vector<double> h = {3.0, 3.1, 3.2, 3.3, 3.4, 2.0, 2.5, 2.6, 2.7};
    float prev = lr0;
    for (size_t k = 0; k <= h.size(); ++k) {
      const float lr = plateau_schedule(std::span(h).first(k), lr0, 2, 0.5f);
      CHECK(lr <= prev);
      prev = lr;
    }
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr_factor = 1.f;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.val_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips bitwise") {
  const auto dir = temp_dir("roundtrip");
  const ModelConfig cfg = tiny_config();
  const auto params = init_parameters<float>(cfg, 31);
  OptimizerState st;
  st.t = 17;
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<float> dist(-1.f, 1.f);
  for (const auto& [name, p] : params) {
    st.m[name].resize(p.size());
    st.v[name].resize(p.size());
    for (auto& x : st.m[name]) x = dist(rng);
    for (auto& x : st.v[name]) x = std::fabs(dist(rng));
  }
  const std::vector<double> history = {2.0, 1.5, 1.6};
  checkpoint_save(dir, params, cfg, 3, 5e-4f, history, &st);

  const auto ck = checkpoint_load(dir, &cfg);
  CHECK(ck.config == cfg);
  CHECK(ck.epoch == 3);
  CHECK(ck.lr == 5e-4f);
  CHECK(ck.val_history == history);
  REQUIRE(ck.params.size() == params.size());
  for (const auto& [name, p] : params) {
    const auto& q = ck.params.at(name);
    REQUIRE(q.shape() == p.shape());
    for (int i = 0; i < p.size(); ++i) CHECK(q.data()[i] == p.data()[i]);
  }
  REQUIRE(ck.opt_state.has_value());
  CHECK(ck.opt_state->t == 17);
  for (const auto& [name, m] : st.m) CHECK(ck.opt_state->m.at(name) == m);
  for (const auto& [name, v] : st.v) CHECK(ck.opt_state->v.at(name) == v);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint without optimizer state loads as nullopt") {
  const auto dir = temp_dir("noopt");
  const ModelConfig cfg = tiny_config();
  const auto params = init_parameters<float>(cfg, 33);
  checkpoint_save(dir, params, cfg, 0, 1e-3f, {}, nullptr);
  const auto ck = checkpoint_load(dir);
  CHECK_FALSE(ck.opt_state.has_value());
  fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects a mismatched model config") {
  const auto dir = temp_dir("badcfg");
  const ModelConfig cfg = tiny_config();
  checkpoint_save(dir, init_parameters<float>(cfg, 34), cfg, 1, 1e-3f, {1.0},
                  nullptr);
  ModelConfig other = cfg;
  other.widths = {8, 16};
  CHECK_THROWS_AS(checkpoint_load(dir, &other), std::runtime_error);
  CHECK_NOTHROW(checkpoint_load(dir, &cfg));
  fs::remove_all(dir);
}

TEST_CASE("zero epochs leaves the initial parameters untouched") {
  const ModelConfig mcfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 0;
  auto samples = tiny_samples(0.5, 41);
  auto [train, val] = split_samples(samples, 0.5, 1);

  TrainState state;
  state.params = init_parameters<float>(mcfg, 42);
  const auto before = init_parameters<float>(mcfg, 42);
  const auto res = train_loop(train, val, mcfg, tcfg, state);
  CHECK(res.log.empty());
  CHECK(res.best_epoch == -1);
  for (const auto& [name, p] : before)
    for (int i = 0; i < p.size(); ++i)
      CHECK(state.params.at(name).data()[i] == p.data()[i]);
}

TEST_CASE("training reduces the validation loss on a tiny problem") {
  const ModelConfig mcfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.seed = 7;
  tcfg.augment = false;
  auto samples = tiny_samples(0.5, 43);
  auto [train, val] = split_samples(samples, 0.5, 1);

  TrainState state;
  state.params = init_parameters<float>(mcfg, 44);
  const double init_loss = evaluate_loss(val, mcfg, state.params);
  const auto res = train_loop(train, val, mcfg, tcfg, state);
  REQUIRE(res.log.size() == 3);
  CHECK(res.best_val_loss < init_loss);
  CHECK(state.val_history.size() == 3);
  CHECK(state.next_epoch == 3);
  for (const auto& e : res.log) CHECK(e.lr == doctest::Approx(tcfg.lr0));
}

TEST_CASE("resumed training matches an uninterrupted run bitwise") {
  const ModelConfig mcfg = tiny_config();
  TrainConfig tcfg;
  tcfg.seed = 9;
  auto samples = tiny_samples(0.5, 45);
  auto [train, val] = split_samples(samples, 0.5, 2);

  // uninterrupted: 4 epochs
  TrainState full;
  full.params = init_parameters<float>(mcfg, 46);
  tcfg.epochs = 4;
  train_loop(train, val, mcfg, tcfg, full);

  // interrupted after 2 epochs, checkpointed, reloaded, resumed to 4
  const auto dir = temp_dir("resume");
  TrainState first;
  first.params = init_parameters<float>(mcfg, 46);
  tcfg.epochs = 2;
  train_loop(train, val, mcfg, tcfg, first);
  checkpoint_save(dir, first.params, mcfg, first.next_epoch, 0.f,
                  first.val_history, &first.opt);

  const auto ck = checkpoint_load(dir, &mcfg);
  TrainState resumed;
  resumed.params = ck.params;
  resumed.opt = *ck.opt_state;
  resumed.val_history = ck.val_history;
  resumed.next_epoch = ck.epoch;
  tcfg.epochs = 4;
  train_loop(train, val, mcfg, tcfg, resumed);

  CHECK(resumed.val_history == full.val_history);
  for (const auto& [name, p] : full.params) {
    const auto& q = resumed.params.at(name);
    for (int i = 0; i < p.size(); ++i) CHECK(q.data()[i] == p.data()[i]);
  }
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with a numeric error") {
  const ModelConfig mcfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 1;
  auto samples = tiny_samples(0.5, 47);
  auto [train, val] = split_samples(samples, 0.5, 3);

  TrainState state;
  state.params = init_parameters<float>(mcfg, 48);
  // a NaN upstream of a relu would be flushed to zero; poison the head bias
  state.params.at("head.det.bias").mutable_data()[0] =
      std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train_loop(train, val, mcfg, tcfg, state), NumericError);
}

TEST_CASE("evaluate_loss is an average of per-sample losses") {
  const ModelConfig mcfg = tiny_config();
  const auto params = init_parameters<float>(mcfg, 49);
  auto samples = tiny_samples(0.5, 50);
  samples.resize(2);

  double manual = 0;
  for (const auto& s : samples) {
    auto out = model_forward(s.image, s.month, params, mcfg);
    manual += cross_entropy(renormalize_channels(out.fused),
                            std::span<const uint8_t>(s.labels))
                  .item();
  }
  manual /= 2.0;
  CHECK(evaluate_loss(samples, mcfg, params) == doctest::Approx(manual));
}
