#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lsenet/data.hpp"
#include "lsenet/gradcheck.hpp"
#include "lsenet/io.hpp"
#include "lsenet/metrics.hpp"
#include "lsenet/model.hpp"
#include "lsenet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lsenet;

namespace {

// Exit-code contract: 0 success, 1 check failure, 2 usage/config error,
// 3 numeric abort.
constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kConfigError = 2;
constexpr int kNumericAbort = 3;

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument("config: unknown key \"" + key + "\" in " +
                                  section);
  }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

struct DataConfig {
  SynthConfig synth;
  int train_per_month = 20;
  int test_per_month = 5;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string output_dir;
};

RunConfig parse_run_config(const json& j) {
  reject_unknown_keys(j, {"model", "train", "data", "output_dir"}, "top level");
  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m,
                        {"input_h", "input_w", "in_channels", "widths",
                         "num_classes", "attention_r", "seasonal_mode",
                         "location_mode", "attention_blocks", "csu_enabled",
                         "attention_enabled"},
                        "model");
    maybe(m, "input_h", cfg.model.input_h);
    maybe(m, "input_w", cfg.model.input_w);
    maybe(m, "in_channels", cfg.model.in_channels);
    maybe(m, "widths", cfg.model.widths);
    maybe(m, "num_classes", cfg.model.num_classes);
    maybe(m, "attention_r", cfg.model.attention_r);
    if (m.contains("seasonal_mode"))
      cfg.model.seasonal_mode = parse_seasonal(m.at("seasonal_mode").get<std::string>());
    if (m.contains("location_mode"))
      cfg.model.location_mode = parse_location(m.at("location_mode").get<std::string>());
    maybe(m, "attention_blocks", cfg.model.attention_blocks);
    maybe(m, "csu_enabled", cfg.model.csu_enabled);
    maybe(m, "attention_enabled", cfg.model.attention_enabled);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown_keys(t,
                        {"batch_size", "epochs", "lr0", "plateau_patience",
                         "lr_factor", "adam_beta1", "adam_beta2", "adam_eps",
                         "seed", "val_fraction", "augment"},
                        "train");
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "lr0", cfg.train.lr0);
    maybe(t, "plateau_patience", cfg.train.plateau_patience);
    maybe(t, "lr_factor", cfg.train.lr_factor);
    maybe(t, "adam_beta1", cfg.train.adam_beta1);
    maybe(t, "adam_beta2", cfg.train.adam_beta2);
    maybe(t, "adam_eps", cfg.train.adam_eps);
    maybe(t, "seed", cfg.train.seed);
    maybe(t, "val_fraction", cfg.train.val_fraction);
    maybe(t, "augment", cfg.train.augment);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d,
                        {"grid_h", "grid_w", "num_classes", "base_gradient",
                         "noise_sigma", "front_halfwidth", "seed",
                         "train_per_month", "test_per_month"},
                        "data");
    int gh = 88, gw = 88;
    maybe(d, "grid_h", gh);
    maybe(d, "grid_w", gw);
    cfg.data.synth = default_synth_config(gh, gw);
    maybe(d, "num_classes", cfg.data.synth.num_classes);
    maybe(d, "base_gradient", cfg.data.synth.base_gradient);
    maybe(d, "noise_sigma", cfg.data.synth.noise_sigma);
    maybe(d, "front_halfwidth", cfg.data.synth.front_halfwidth);
    maybe(d, "seed", cfg.data.synth.seed);
    maybe(d, "train_per_month", cfg.data.train_per_month);
    maybe(d, "test_per_month", cfg.data.test_per_month);
  } else {
    cfg.data.synth = default_synth_config();
  }
  maybe(j, "output_dir", cfg.output_dir);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    cfg.data.synth = default_synth_config();
    return cfg;
  }
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  bool no_csu = false;
  bool no_attention = false;
  bool no_augment = false;
  std::string seasonal;
  std::string location;

  void apply(RunConfig& cfg) const {
    if (seed) {
      cfg.train.seed = *seed;
      cfg.data.synth.seed = *seed;
    }
    if (epochs) cfg.train.epochs = *epochs;
    if (no_csu) cfg.model.csu_enabled = false;
    if (no_attention) cfg.model.attention_enabled = false;
    if (no_augment) cfg.train.augment = false;
    if (!seasonal.empty()) cfg.model.seasonal_mode = parse_seasonal(seasonal);
    if (!location.empty()) cfg.model.location_mode = parse_location(location);
  }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override train/data seed");
  cmd->add_option("--epochs", ov.epochs, "Override epoch count");
  cmd->add_flag("--no-csu", ov.no_csu, "Disable the channel supervision units");
  cmd->add_flag("--no-attention", ov.no_attention,
                "Disable the location attention head branch");
  cmd->add_flag("--no-augment", ov.no_augment, "Disable training augmentation");
  cmd->add_option("--seasonal", ov.seasonal, "Seasonal encoding: month|season|off");
  cmd->add_option("--location", ov.location, "Location encoding: pe2d|coordconv|off");
}

void require_usable_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out))
    throw std::invalid_argument(out.string() + " exists and is not a directory");
  if (fs::is_directory(out) && !fs::is_empty(out) && !force)
    throw std::invalid_argument(out.string() +
                                " is not empty; pass --force to overwrite");
}

Tensor load_image(const fs::path& path, const ModelConfig& cfg) {
  const auto t = io::read_lst1(path);
  if (t.dtype != io::Dtype::F32)
    throw std::invalid_argument(path.string() + ": expected an f32 image tensor");
  const std::vector<int> want{cfg.input_h, cfg.input_w, cfg.in_channels};
  if (t.shape != want)
    throw std::invalid_argument(path.string() +
                                ": image extents do not match the model config");
  return Tensor::from_data(t.shape, t.f32);
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const fs::path& out, bool force,
              const Overrides& ov) {
  RunConfig cfg = load_run_config(config_path);
  ov.apply(cfg);
  cfg.data.synth.validate();
  if (cfg.data.train_per_month < 1 || cfg.data.test_per_month < 1)
    throw std::invalid_argument("config: samples per month must be >= 1");
  require_usable_out_dir(out, force);

  auto pool = synth_generate(cfg.data.synth, cfg.data.train_per_month, "tr");
  auto test = synth_generate(cfg.data.synth, cfg.data.test_per_month, "te");
  auto [train, val] =
      split_samples(pool, cfg.train.val_fraction, cfg.data.synth.seed);

  const ChannelStats stats = compute_channel_stats(train);
  for (auto* set : {&train, &val, &test})
    for (auto& s : *set) normalize_sample(s, stats);

  const int n = cfg.data.synth.num_classes;
  dataset_write(train, stats, n, "train", out / "train");
  dataset_write(val, stats, n, "val", out / "val");
  dataset_write(test, stats, n, "test", out / "test");

  auto print_counts = [&](const char* split, const std::vector<Sample>& set) {
    const auto counts = class_pixel_counts(set, n);
    std::cout << split << " (" << set.size() << " samples) class pixel counts:";
    for (int c = 0; c < n; ++c) std::cout << " " << c << ":" << counts[c];
    std::cout << "\n";
  };
  print_counts("train", train);
  print_counts("val", val);
  print_counts("test", test);
  return kOk;
}

int cmd_train(const std::string& config_path, const fs::path& data,
              const fs::path& out, bool force, const Overrides& ov) {
  RunConfig cfg = load_run_config(config_path);
  ov.apply(cfg);
  cfg.model.validate();
  cfg.train.validate();

  const auto train_ds = dataset_read(data / "train");
  const auto val_ds = dataset_read(data / "val");
  const auto& m = train_ds.manifest();
  if (m.height != cfg.model.input_h || m.width != cfg.model.input_w)
    throw std::invalid_argument("dataset extents do not match the model config");
  if (m.num_classes != cfg.model.num_classes)
    throw std::invalid_argument("dataset class count does not match the model config");
  require_usable_out_dir(out, force);
  fs::create_directories(out);

  const auto train_set = train_ds.load_all();
  const auto val_set = val_ds.load_all();

  TrainState state;
  state.params = init_parameters<float>(cfg.model, cfg.train.seed);
  if (cfg.train.epochs == 0)
    checkpoint_save(out / "best", state.params, cfg.model, 0, cfg.train.lr0, {},
                    &state.opt);

  std::string log_lines;
  auto result = train_loop(
      train_set, val_set, cfg.model, cfg.train, state,
      [&](const EpochLog& log, const TrainState& st, bool is_best) {
        json line{{"epoch", log.epoch},
                  {"train_loss", log.train_loss},
                  {"val_loss", log.val_loss},
                  {"lr", log.lr}};
        log_lines += line.dump() + "\n";
        std::cout << line.dump() << std::endl;
        if (is_best)
          checkpoint_save(out / "best", st.params, cfg.model, log.epoch, log.lr,
                          st.val_history, &st.opt);
      });
  checkpoint_save(out / "final", state.params, cfg.model, state.next_epoch,
                  plateau_schedule(state.val_history, cfg.train.lr0,
                                   cfg.train.plateau_patience, cfg.train.lr_factor),
                  state.val_history, &state.opt);
  io::atomic_write_text(out / "log.jsonl", log_lines);
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const fs::path& out,
             bool binary, bool force) {
  const Checkpoint ck = checkpoint_load(checkpoint);
  const auto ds = dataset_read(data);
  const auto& m = ds.manifest();
  if (m.height != ck.config.input_h || m.width != ck.config.input_w ||
      m.num_classes != ck.config.num_classes)
    throw std::invalid_argument("dataset does not match the checkpoint config");
  require_usable_out_dir(out, force);
  fs::create_directories(out);

  const int n = binary ? 2 : ck.config.num_classes;
  ConfusionMatrix cm(n);
  for (size_t i = 0; i < ds.size(); ++i) {
    const Sample s = ds.load(i);
    const auto outp = model_forward(s.image, s.month, ck.params, ck.config);
    if (binary)
      cm.accumulate(binary_collapse(outp.prediction), binary_collapse(s.labels));
    else
      cm.accumulate(outp.prediction, s.labels);
  }
  const Report report = make_report(cm, default_class_names(n));
  io::atomic_write_text(out / "report.txt", report_text(report));
  io::atomic_write_text(out / "report.json", report_json(report));
  std::cout << report_text(report);
  return kOk;
}

int cmd_predict(const fs::path& checkpoint, const fs::path& input, int month,
                const fs::path& out, const std::string& pgm) {
  const Checkpoint ck = checkpoint_load(checkpoint);
  const Tensor image = load_image(input, ck.config);
  const auto outp = model_forward(image, month, ck.params, ck.config);
  io::write_lst1(out, {ck.config.input_h, ck.config.input_w},
                 std::span<const uint8_t>(outp.prediction));
  if (!pgm.empty()) {
    std::vector<float> grid(outp.prediction.size());
    const float denom = static_cast<float>(ck.config.num_classes - 1);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = outp.prediction[i] / denom;
    export_heatmap_pgm(pgm, grid.data(), ck.config.input_h, ck.config.input_w);
  }
  return kOk;
}

int cmd_attention(const fs::path& checkpoint, const fs::path& input, int month,
                  const fs::path& out, bool force) {
  const Checkpoint ck = checkpoint_load(checkpoint);
  if (!ck.config.attention_enabled)
    throw std::invalid_argument("checkpoint was trained without the attention head");
  const Tensor image = load_image(input, ck.config);
  require_usable_out_dir(out, force);
  fs::create_directories(out);

  const auto outp = model_forward(image, month, ck.params, ck.config);
  const auto up = upsample(outp.attention, UpsampleKind::Bilinear,
                           ck.config.attention_r);
  auto dump = [&](const Tensor& t, const std::string& stem) {
    const int h = t.extent(0), w = t.extent(1), n = t.extent(2);
    std::vector<float> plane(static_cast<size_t>(h) * w);
    for (int c = 0; c < n; ++c) {
      for (int p = 0; p < h * w; ++p)
        plane[p] = t.data()[static_cast<size_t>(p) * n + c];
      char name[64];
      std::snprintf(name, sizeof name, "%s_class%02d", stem.c_str(), c);
      export_heatmap_pgm(out / (std::string(name) + ".pgm"), plane.data(), h, w);
      export_heatmap_csv(out / (std::string(name) + ".csv"), plane.data(), h, w);
    }
  };
  dump(outp.attention, "grid");
  dump(up, "up");
  return kOk;
}

int cmd_gradcheck(int instances) {
  auto results = gradient_check_suite(instances);
  results.push_back(end_to_end_gradient_check());
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-32s %-4s worst_rel=%.3e (n=%d, tol=%.0e)\n", r.name.c_str(),
                r.pass() ? "ok" : "FAIL", r.worst_rel, r.instances, r.tolerance);
    all_pass = all_pass && r.pass();
  }
  return all_pass ? kOk : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-class ocean front detection from SST gradient maps"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir, out_path, checkpoint_dir, input_path, pgm_path;
  bool force = false, binary = false;
  int month = 1;
  int instances = 20;
  Overrides ov;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config_path, "Run config JSON");
  synth->add_option("--out", out_path, "Output dataset directory")->required();
  synth->add_flag("--force", force, "Allow writing into a non-empty directory");
  synth->add_option("--seed", ov.seed, "Override data seed");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "Run config JSON");
  train->add_option("--data", data_dir, "Dataset root (train/ and val/)")->required();
  train->add_option("--out", out_path, "Output directory")->required();
  train->add_flag("--force", force, "Allow writing into a non-empty directory");
  add_override_flags(train, ov);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out", out_path, "Report output directory")->required();
  eval->add_flag("--binary", binary, "Collapse all front classes to one");
  eval->add_flag("--force", force, "Allow writing into a non-empty directory");

  auto* predict = app.add_subcommand("predict", "Predict a label mask");
  predict->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
  predict->add_option("--input", input_path, "Input image (LST1 f32 HxWx3)")->required();
  predict->add_option("--month", month, "Calendar month 1-12")->required();
  predict->add_option("--out", out_path, "Output mask file (LST1 u8)")->required();
  predict->add_option("--pgm", pgm_path, "Optional PGM rendering of the mask");

  auto* attention = app.add_subcommand("attention", "Export per-class attention maps");
  attention->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
  attention->add_option("--input", input_path, "Input image (LST1 f32 HxWx3)")->required();
  attention->add_option("--month", month, "Calendar month 1-12")->required();
  attention->add_option("--out", out_path, "Output directory")->required();
  attention->add_flag("--force", force, "Allow writing into a non-empty directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference self-check");
  gradcheck->add_option("--instances", instances, "Random instances per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*synth) return cmd_synth(config_path, out_path, force, ov);
    if (*train) return cmd_train(config_path, data_dir, out_path, force, ov);
    if (*eval) return cmd_eval(checkpoint_dir, data_dir, out_path, binary, force);
    if (*predict) return cmd_predict(checkpoint_dir, input_path, month, out_path, pgm_path);
    if (*attention) return cmd_attention(checkpoint_dir, input_path, month, out_path, force);
    if (*gradcheck) return cmd_gradcheck(instances);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}
