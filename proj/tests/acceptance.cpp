// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 7 and 8 train real models and dominate the runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lsenet/data.hpp"
#include "lsenet/gradcheck.hpp"
#include "lsenet/metrics.hpp"
#include "lsenet/model.hpp"
#include "lsenet/train.hpp"

using namespace lsenet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lsenet_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- criterion 1

bool criterion_gradients(std::string& detail) {
  const auto t0 = Clock::now();
  auto results = gradient_check_suite(20, 7);
  results.push_back(end_to_end_gradient_check(60, 7));
  double worst = 0;
  std::string worst_name;
  bool ok = true;
  for (const auto& r : results) {
    if (!r.pass()) ok = false;
    if (r.worst_rel > worst) {
      worst = r.worst_rel;
      worst_name = r.name;
    }
  }
  const double secs = elapsed_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%zu checks, worst rel err %.2e (%s), %.1fs", results.size(),
                worst, worst_name.c_str(), secs);
  detail = buf;
  return ok && secs < 300.0;
}

// ---------------------------------------------------------------- criterion 2

bool criterion_shapes(std::string& detail) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 352;
  cfg.widths = {64, 128, 256, 512, 1024};
  cfg.num_classes = 12;
  cfg.attention_r = 11;
  cfg.validate();

  bool ok = true;
  for (const auto& [name, shape] : cfg.parameter_shapes()) {
    if (name == "e1.csu.fc1.weight") ok &= shape == std::vector<int>{3, 32};
    if (name == "e1.csu.fc2.weight") ok &= shape == std::vector<int>{44, 64};
    if (name == "e5.csu.fc1.weight") ok &= shape == std::vector<int>{512, 512};
    if (name == "e5.csu.fc2.weight") ok &= shape == std::vector<int>{524, 1024};
  }

  const auto params = init_parameters<float>(cfg, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  std::vector<float> img(static_cast<size_t>(352) * 352 * 3);
  for (auto& v : img) v = dist(rng);

  const auto t0 = Clock::now();
  const auto out = model_forward(Tensor::from_data({352, 352, 3}, std::move(img)),
                                 6, params, cfg);
  const double secs = elapsed_s(t0);

  ok &= out.detection.shape() == std::vector<int>{352, 352, 12};
  ok &= out.attention.shape() == std::vector<int>{32, 32, 12};
  ok &= out.fused.shape() == std::vector<int>{352, 352, 12};
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "detection 352x352x12, attention %dx%dx%d, forward %.1fs",
                out.attention.extent(0), out.attention.extent(1),
                out.attention.extent(2), secs);
  detail = buf;
  return ok && secs < 120.0;
}

// ---------------------------------------------------------------- criterion 3

bool criterion_metrics(std::string& detail) {
  // spot value
  ConfusionMatrix spot(2);
  spot.at(1, 1) = 2;
  spot.at(0, 1) = 1;
  spot.at(1, 0) = 1;
  bool ok = iou_per_class(spot)[1].value_or(-1) == 0.5;

  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 5);
    const int h = 1 + static_cast<int>(rng() % 16);
    const int w = 1 + static_cast<int>(rng() % 16);
    std::uniform_int_distribution<int> cd(0, K - 1);
    std::vector<uint8_t> pred(static_cast<size_t>(h) * w), truth(pred.size());
    for (auto& v : pred) v = static_cast<uint8_t>(cd(rng));
    for (auto& v : truth) v = static_cast<uint8_t>(cd(rng));
    ConfusionMatrix cm(K);
    cm.accumulate(pred, truth);
    const auto iou = iou_per_class(cm);

    double sum = 0;
    int defined = 0;
    for (int c = 0; c < K; ++c) {
      int64_t inter = 0, uni = 0;
      for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == c, t = truth[i] == c;
        inter += p && t;
        uni += p || t;
      }
      if (uni == 0) {
        ok &= !iou[c].has_value();
      } else {
        ok &= iou[c].has_value() &&
              *iou[c] == static_cast<double>(inter) / static_cast<double>(uni);
        sum += static_cast<double>(inter) / static_cast<double>(uni);
        ++defined;
      }
      ++checked;
    }
    ok &= miou(cm).value_or(-1) == sum / defined;
  }
  detail = std::to_string(checked) + " class IoUs over 1000 mask pairs, exact";
  return ok;
}

// ---------------------------------------------------------------- criterion 4

bool criterion_positional(std::string& detail) {
  const int H = 32, W = 32, D = 64;
  const auto pe = positional_encoding_2d<float>({H, W, D});
  bool ok = true;
  double worst = 0;
  for (float v : pe.data()) ok &= v >= -1.f && v <= 1.f;
  for (int y = 0; y < W; ++y) {
    ok &= std::fabs(pe.data()[static_cast<size_t>(y) * D + 0]) < 1e-7;
    ok &= std::fabs(pe.data()[static_cast<size_t>(y) * D + 1] - 1.f) < 1e-7;
  }
  for (int x = 0; x < H && ok; ++x)
    for (int y = 0; y < W; ++y)
      for (int i = 0; i < D / 4; ++i) {
        const long double freq = std::pow(10000.0L, 4.0L * i / D);
        const float* p = pe.data().data() + (static_cast<size_t>(x) * W + y) * D;
        const double vals[4] = {static_cast<double>(std::sin(x / freq)),
                                static_cast<double>(std::cos(x / freq)),
                                static_cast<double>(std::sin(y / freq)),
                                static_cast<double>(std::cos(y / freq))};
        const int chans[4] = {2 * i, 2 * i + 1, 2 * i + D / 2, 2 * i + 1 + D / 2};
        for (int k = 0; k < 4; ++k)
          worst = std::max(worst, std::fabs(p[chans[k]] - vals[k]));
      }
  ok &= worst < 1e-6;

  std::set<std::vector<float>> seen;
  for (int p = 0; p < H * W; ++p)
    seen.insert(std::vector<float>(pe.data().begin() + static_cast<size_t>(p) * D,
                                   pe.data().begin() + static_cast<size_t>(p + 1) * D));
  ok &= static_cast<int>(seen.size()) == H * W;

  char buf[120];
  std::snprintf(buf, sizeof buf,
                "range ok, oracle max dev %.1e, %zu/%d distinct positions",
                worst, seen.size(), H * W);
  detail = buf;
  return ok;
}

// ---------------------------------------------------------------- criterion 5

bool criterion_head_algebra(std::string& detail) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> uni(0.f, 1.f);
  const int H = 4, W = 4, N = 6;
  bool ok = true;
  double worst = 0;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    std::vector<float> p(static_cast<size_t>(H) * W * N), w(p.size());
    for (int px = 0; px < H * W; ++px) {
      float s = 0;
      for (int c = 0; c < N; ++c) {
        p[static_cast<size_t>(px) * N + c] = uni(rng) + 1e-3f;
        s += p[static_cast<size_t>(px) * N + c];
      }
      for (int c = 0; c < N; ++c) p[static_cast<size_t>(px) * N + c] /= s;
    }
    for (auto& v : w) v = uni(rng);

    auto P = Tensor::from_data({H, W, N}, std::vector<float>(p));
    auto Wt = Tensor::from_data({H, W, N}, std::vector<float>(w));
    auto fused = add(mul(P, Wt), P);
    auto renorm = renormalize_channels(fused);
    for (size_t i = 0; i < p.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::fabs(
                                  fused.data()[i] - p[i] * (w[i] + 1.f))));
    for (int px = 0; px < H * W; ++px) {
      int a = 0, b = 0;
      for (int c = 1; c < N; ++c) {
        if (fused.data()[static_cast<size_t>(px) * N + c] >
            fused.data()[static_cast<size_t>(px) * N + a])
          a = c;
        if (renorm.data()[static_cast<size_t>(px) * N + c] >
            renorm.data()[static_cast<size_t>(px) * N + b])
          b = c;
      }
      ok &= a == b;
    }
  }
  ok &= worst < 1e-6;
  char buf[120];
  std::snprintf(buf, sizeof buf, "1000 draws, max |fused - P(W+1)| = %.1e", worst);
  detail = buf;
  return ok;
}

// ---------------------------------------------------------------- criterion 6

bool criterion_schedule(std::string& detail) {
  const float lr0 = 1e-3f;
  bool ok = true;
  {
    const std::vector<double> h = {1.0, 0.9, 0.91, 0.92, 0.93};
    ok &= plateau_schedule(std::span(h).first(4), lr0, 3, 0.5f) == lr0;
    ok &= plateau_schedule(h, lr0, 3, 0.5f) == 0.5f * lr0;
  }
  {
    const std::vector<double> h = {1.0, 1.1, 1.2, 1.3, 0.5, 0.6, 0.7, 0.8};
    ok &= plateau_schedule(std::span(h).first(4), lr0, 3, 0.5f) == 0.5f * lr0;
    ok &= plateau_schedule(std::span(h).first(5), lr0, 3, 0.5f) == 0.5f * lr0;
    ok &= plateau_schedule(h, lr0, 3, 0.5f) == 0.25f * lr0;
  }
  {
    const std::vector<double> h = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    ok &= plateau_schedule(h, lr0, 3, 0.5f) == lr0;
  }
  detail = "halve-after-3 replay matches the scripted traces";
  return ok;
}

// ---------------------------------------------------------------- criterion 7

ModelConfig overfit_model_config() {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 16;
  cfg.widths = {4, 8, 8, 8, 8};
  cfg.num_classes = 3;
  cfg.attention_r = 4;
  cfg.attention_blocks = 1;
  return cfg;
}

std::vector<Sample> overfit_samples() {
  SynthConfig scfg;
  scfg.grid_h = scfg.grid_w = 16;
  scfg.num_classes = 3;
  scfg.noise_sigma = 0.02f;
  scfg.front_halfwidth = 2.0f;
  scfg.seed = 3;
  FrontSpec a, b;
  a.class_id = 1;
  a.anchor_r = 0.3f;
  a.anchor_c = 0.35f;
  a.angle = 0.4f;
  a.length = 0.5f;
  a.active_months = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  b = a;
  b.class_id = 2;
  b.anchor_r = 0.7f;
  b.anchor_c = 0.65f;
  b.angle = -0.8f;
  scfg.classes = {a, b};
  auto samples = synth_generate(scfg, 1);
  samples.resize(8);
  const auto stats = compute_channel_stats(samples);
  for (auto& s : samples) normalize_sample(s, stats);
  return samples;
}

double train_miou(const std::vector<Sample>& set, const ModelConfig& cfg,
                  const ParameterSet& params) {
  ConfusionMatrix cm(cfg.num_classes);
  for (const auto& s : set) {
    const auto out = model_forward(s.image, s.month, params, cfg);
    cm.accumulate(out.prediction, s.labels);
  }
  return miou(cm).value_or(0.0);
}

bool criterion_overfit(std::string& detail) {
  const auto t0 = Clock::now();
  const ModelConfig mcfg = overfit_model_config();
  const auto samples = overfit_samples();

  TrainConfig tcfg;
  tcfg.lr0 = 5e-3f;
  tcfg.plateau_patience = 20;  // no decay while the loss keeps falling
  tcfg.seed = 1;
  tcfg.augment = false;

  TrainState state;
  state.params = init_parameters<float>(mcfg, 2);
  double loss = 1e9, iou = 0;
  int epochs = 0;
  while (epochs < 200) {
    tcfg.epochs = std::min(epochs + 10, 200);
    const auto res = train_loop(samples, samples, mcfg, tcfg, state);
    epochs = state.next_epoch;
    loss = res.log.back().train_loss;
    iou = train_miou(samples, mcfg, state.params);
    if (loss < 0.05 && iou >= 0.95) break;
    if (elapsed_s(t0) > 540.0) break;
  }
  const double secs = elapsed_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "train loss %.4f, train mIoU %.3f after %d epochs, %.0fs", loss,
                iou, epochs, secs);
  detail = buf;
  return loss < 0.05 && iou >= 0.95 && epochs <= 200 && secs < 600.0;
}

// ---------------------------------------------------------------- criterion 8

struct BenchData {
  std::vector<Sample> train, val, test;
};

BenchData benchmark_data(uint64_t seed) {
  auto scfg = default_synth_config(88, 88);
  scfg.seed = seed;
  auto pool = synth_generate(scfg, 20, "p_");
  scfg.seed = seed + 5000;
  auto test = synth_generate(scfg, 5, "t_");
  const auto stats = compute_channel_stats(pool);
  for (auto& s : pool) normalize_sample(s, stats);
  for (auto& s : test) normalize_sample(s, stats);
  BenchData d;
  std::tie(d.train, d.val) = split_samples(pool, 0.1, seed);
  d.test = std::move(test);
  return d;
}

double run_benchmark(const BenchData& data, bool full_model, uint64_t seed,
                     int epochs) {
  ModelConfig mcfg;  // 88x88 defaults
  if (!full_model) {
    mcfg.csu_enabled = false;
    mcfg.attention_enabled = false;
    mcfg.location_mode = LocationMode::Off;
  }
  TrainConfig tcfg;
  tcfg.epochs = epochs;
  tcfg.seed = seed;

  TrainState state;
  state.params = init_parameters<float>(mcfg, seed * 31 + 7);
  auto best = state.params;
  double best_val = 1e30;
  train_loop(data.train, data.val, mcfg, tcfg, state,
             [&](const EpochLog& log, const TrainState& st, bool is_best) {
               if (is_best) {
                 best = ParameterSet();
                 for (const auto& [name, p] : st.params)
                   best.emplace(name, Tensor::from_data(
                                          p.shape(),
                                          std::vector<float>(p.data().begin(),
                                                             p.data().end())));
                 best_val = log.val_loss;
               }
             });
  (void)best_val;
  return train_miou(data.test, mcfg, best);
}

bool criterion_ablation(std::string& detail) {
  const auto t0 = Clock::now();
  const int epochs = 10;
  const uint64_t seeds[3] = {1, 2, 3};
  double full_sum = 0, base_sum = 0;
  int violations = 0;
  std::ostringstream per_seed;
  for (uint64_t seed : seeds) {
    const auto data = benchmark_data(seed);
    const double full = run_benchmark(data, true, seed, epochs);
    const double base = run_benchmark(data, false, seed, epochs);
    full_sum += full;
    base_sum += base;
    if (full < base) ++violations;
    char buf[80];
    std::snprintf(buf, sizeof buf, " seed %llu: full %.4f vs base %.4f;",
                  static_cast<unsigned long long>(seed), full, base);
    per_seed << buf;
  }
  const double secs = elapsed_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "mean test mIoU full %.4f vs basenet %.4f, %d per-seed "
                "violation(s), %.0fs;%s",
                full_sum / 3, base_sum / 3, violations, secs,
                per_seed.str().c_str());
  detail = buf;
  return full_sum >= base_sum && secs < 7200.0;
}

// ---------------------------------------------------------------- criterion 9

bool criterion_binary(std::string& detail) {
  std::mt19937_64 rng(31);
  bool ok = true;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 5);
    const size_t n = 1 + rng() % 200;
    std::uniform_int_distribution<int> cd(0, K - 1);
    std::vector<uint8_t> pred(n), truth(n);
    for (auto& v : pred) v = static_cast<uint8_t>(cd(rng));
    for (auto& v : truth) v = static_cast<uint8_t>(cd(rng));

    ConfusionMatrix direct(2);
    direct.accumulate(binary_collapse(pred), binary_collapse(truth));
    ConfusionMatrix multi(K);
    multi.accumulate(pred, truth);
    ConfusionMatrix folded(2);
    for (int t = 0; t < K; ++t)
      for (int p = 0; p < K; ++p) folded.at(t > 0, p > 0) += multi.at(t, p);
    ok &= direct.counts == folded.counts;
    const auto a = miou(direct), b = miou(folded);
    ok &= a.has_value() == b.has_value() && (!a || *a == *b);
  }

  ConfusionMatrix cm(2);
  cm.at(0, 0) = 3;
  cm.at(1, 1) = 2;
  cm.at(1, 0) = 1;
  const auto text = report_text(make_report(cm, default_class_names(2)));
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  ok &= lines.size() == 3 && lines[0].starts_with("background") &&
        lines[1].starts_with("front") && lines[2].starts_with("mIoU");
  detail = "1000 collapse commutations exact; report rows background/front/mIoU";
  return ok;
}

// --------------------------------------------------------------- criterion 10

bool criterion_determinism(std::string& detail) {
  bool ok = true;

  // datasets
  const auto da = scratch_dir("det_a");
  const auto db = scratch_dir("det_b");
  for (const auto& dir : {da, db}) {
    SynthConfig scfg;
    scfg.grid_h = scfg.grid_w = 24;
    scfg.num_classes = 3;
    scfg.seed = 9;
    FrontSpec f;
    f.class_id = 1;
    f.active_months = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    FrontSpec g = f;
    g.class_id = 2;
    g.anchor_r = 0.25f;
    scfg.classes = {f, g};
    auto samples = synth_generate(scfg, 1);
    const auto stats = compute_channel_stats(samples);
    for (auto& s : samples) normalize_sample(s, stats);
    dataset_write(samples, stats, 3, "train", dir / "train");
  }
  for (const auto& entry : fs::directory_iterator(da / "train"))
    ok &= read_bytes(entry.path()) ==
          read_bytes(db / "train" / entry.path().filename());

  // checkpoints and reports
  std::string report_a, report_b;
  for (int run = 0; run < 2; ++run) {
    const auto dir = run == 0 ? da : db;
    const ModelConfig mcfg = overfit_model_config();
    const auto samples = overfit_samples();
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.seed = 4;
    TrainState state;
    state.params = init_parameters<float>(mcfg, 5);
    train_loop(samples, samples, mcfg, tcfg, state);
    checkpoint_save(dir / "ckpt", state.params, mcfg, state.next_epoch, tcfg.lr0,
                    state.val_history, &state.opt);

    ConfusionMatrix cm(mcfg.num_classes);
    for (const auto& s : samples) {
      const auto out = model_forward(s.image, s.month, state.params, mcfg);
      cm.accumulate(out.prediction, s.labels);
    }
    const auto report = make_report(cm, default_class_names(mcfg.num_classes));
    (run == 0 ? report_a : report_b) = report_text(report) + report_json(report);
  }
  for (const char* f : {"checkpoint.json", "params.lst", "opt_m.lst", "opt_v.lst"})
    ok &= read_bytes(da / "ckpt" / f) == read_bytes(db / "ckpt" / f);
  ok &= report_a == report_b;

  fs::remove_all(da);
  fs::remove_all(db);
  detail = "datasets, checkpoints, and reports byte-identical across two runs";
  return ok;
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* title;
    bool (*run)(std::string&);
  };
  const Criterion criteria[] = {
      {1, "gradient checks", criterion_gradients},
      {2, "paper-scale shapes", criterion_shapes},
      {3, "IoU oracle", criterion_metrics},
      {4, "positional encoding", criterion_positional},
      {5, "head algebra", criterion_head_algebra},
      {6, "lr schedule", criterion_schedule},
      {7, "overfit sanity", criterion_overfit},
      {8, "directional ablation", criterion_ablation},
      {9, "binary collapse", criterion_binary},
      {10, "determinism", criterion_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("%s criterion %2d (%s): %s\n", ok ? "PASS" : "FAIL", c.number,
                c.title, detail.c_str());
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
