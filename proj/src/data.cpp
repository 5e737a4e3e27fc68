#include "lsenet/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "lsenet/io.hpp"

namespace lsenet {

namespace {

using nlohmann::json;

uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined value
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct Polyline {
  std::vector<std::array<double, 2>> pts;  // (row, col) pixel coordinates
};

Polyline make_curve(const FrontSpec& spec, int H, int W, std::mt19937_64& rng) {
  constexpr int kSamples = 33;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double amp[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    amp[k] = uni(rng) * spec.curve_wiggle / (k + 1);
    phase[k] = uni(rng) * M_PI;
  }
  const double dr = std::cos(spec.angle), dc = std::sin(spec.angle);
  const double nr = -dc, nc = dr;
  Polyline curve;
  curve.pts.reserve(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    const double t = static_cast<double>(i) / (kSamples - 1);
    double off = 0;
    for (int k = 0; k < 3; ++k)
      off += amp[k] * std::sin(2.0 * M_PI * (k + 1) * t + phase[k]);
    const double r = spec.anchor_r + (t - 0.5) * spec.length * dr + off * nr;
    const double c = spec.anchor_c + (t - 0.5) * spec.length * dc + off * nc;
    curve.pts.push_back({r * (H - 1), c * (W - 1)});
  }
  return curve;
}

/// Distance from (r, c) to the polyline and the side sign of the nearest
/// segment.
void polyline_distance(const Polyline& curve, double r, double c, double* dist,
                       double* side) {
  double best2 = 1e30;
  double best_side = 1.0;
  for (size_t i = 0; i + 1 < curve.pts.size(); ++i) {
    const double ar = curve.pts[i][0], ac = curve.pts[i][1];
    const double br = curve.pts[i + 1][0], bc = curve.pts[i + 1][1];
    const double vr = br - ar, vc = bc - ac;
    const double wr = r - ar, wc = c - ac;
    const double vv = vr * vr + vc * vc;
    double t = vv > 0 ? (wr * vr + wc * vc) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double pr = ar + t * vr, pc = ac + t * vc;
    const double d2 = (r - pr) * (r - pr) + (c - pc) * (c - pc);
    if (d2 < best2) {
      best2 = d2;
      const double cross = vr * wc - vc * wr;
      best_side = cross >= 0 ? 1.0 : -1.0;
    }
  }
  *dist = std::sqrt(best2);
  *side = best_side;
}

void gaussian_smooth(std::vector<double>& field, int H, int W) {
  // sigma = 1 px, radius 3, separable
  constexpr int R = 3;
  double w[2 * R + 1];
  double norm = 0;
  for (int i = -R; i <= R; ++i) {
    w[i + R] = std::exp(-0.5 * i * i);
    norm += w[i + R];
  }
  for (auto& v : w) v /= norm;

  std::vector<double> tmp(field.size());
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double acc = 0;
      for (int i = -R; i <= R; ++i)
        acc += w[i + R] * field[static_cast<size_t>(r) * W + std::clamp(c + i, 0, W - 1)];
      tmp[static_cast<size_t>(r) * W + c] = acc;
    }
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double acc = 0;
      for (int i = -R; i <= R; ++i)
        acc += w[i + R] * tmp[static_cast<size_t>(std::clamp(r + i, 0, H - 1)) * W + c];
      field[static_cast<size_t>(r) * W + c] = acc;
    }
}

json stats_to_json(const ChannelStats& s) {
  json j;
  j["channel_min"] = s.ch_min;
  j["channel_max"] = s.ch_max;
  return j;
}

}  // namespace

void SynthConfig::validate() const {
  if (grid_h < 4 || grid_w < 4)
    throw std::invalid_argument("SynthConfig: grid too small");
  if (num_classes < 2) throw std::invalid_argument("SynthConfig: num_classes < 2");
  std::set<int> ids;
  for (const auto& c : classes) {
    if (c.class_id < 1 || c.class_id >= num_classes)
      throw std::invalid_argument("SynthConfig: class_id out of range");
    if (!ids.insert(c.class_id).second)
      throw std::invalid_argument("SynthConfig: duplicate class_id");
    if (c.active_months.empty())
      throw std::invalid_argument("SynthConfig: active_months empty");
    for (int m : c.active_months)
      if (m < 1 || m > 12)
        throw std::invalid_argument("SynthConfig: month out of range");
    if (c.anchor_r < 0 || c.anchor_r > 1 || c.anchor_c < 0 || c.anchor_c > 1)
      throw std::invalid_argument("SynthConfig: anchor outside [0,1]^2");
  }
  if (front_halfwidth <= 0)
    throw std::invalid_argument("SynthConfig: front_halfwidth <= 0");
}

SynthConfig default_synth_config(int grid_h, int grid_w) {
  SynthConfig cfg;
  cfg.grid_h = grid_h;
  cfg.grid_w = grid_w;

  auto months = [](std::initializer_list<int> ms) { return std::vector<int>(ms); };
  const std::vector<int> all{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};

  // All fronts share the same temperature step: appearance alone cannot
  // identify a class, position and month can.
  cfg.classes = {
      {1, 0.80f, 0.22f, 1.25f, 0.45f, all, 1.0f, 0.04f},
      {2, 0.34f, 0.44f, 0.35f, 0.40f, months({10, 11, 12, 1, 2, 3}), 1.0f, 0.04f},
      {3, 0.76f, 0.74f, -0.9f, 0.42f, all, 1.0f, 0.04f},
      {4, 0.56f, 0.62f, 2.2f, 0.38f, months({11, 12, 1, 2, 3, 4}), 1.0f, 0.05f},
      {5, 0.45f, 0.26f, -0.5f, 0.40f, months({12, 1, 2, 3, 4, 5}), 1.0f, 0.04f},
      {6, 0.18f, 0.40f, 0.8f, 0.36f, months({10, 11, 12, 1, 2, 3}), 1.0f, 0.04f},
      {7, 0.10f, 0.66f, -1.3f, 0.34f, months({9, 10, 11, 12, 1, 2, 3, 4}), 1.0f, 0.04f},
      // class 8 sits near class 2 but is active in the opposite half of the
      // year: the month input is what tells them apart
      {8, 0.38f, 0.50f, 0.45f, 0.40f, months({4, 5, 6, 7, 8, 9}), 1.0f, 0.04f},
      {9, 0.62f, 0.42f, 1.8f, 0.36f, months({12, 1, 2, 3, 4, 5}), 1.0f, 0.05f},
      {10, 0.24f, 0.82f, 0.2f, 0.38f, all, 1.0f, 0.04f},
      {11, 0.52f, 0.86f, -2.0f, 0.36f, all, 1.0f, 0.04f},
  };
  return cfg;
}

Tensor sst_gradient(const std::vector<float>& sst, int H, int W) {
  if (static_cast<int>(sst.size()) != H * W)
    throw std::invalid_argument("sst_gradient: field size mismatch");
  std::vector<float> out(static_cast<size_t>(H) * W * 3);
  auto at = [&](int r, int c) {
    return static_cast<double>(sst[static_cast<size_t>(r) * W + c]);
  };
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double gx, gy;  // gx: along columns (horizontal), gy: along rows
      if (c == 0)
        gx = at(r, 1) - at(r, 0);
      else if (c == W - 1)
        gx = at(r, W - 1) - at(r, W - 2);
      else
        gx = (at(r, c + 1) - at(r, c - 1)) / 2.0;
      if (r == 0)
        gy = at(1, c) - at(0, c);
      else if (r == H - 1)
        gy = at(H - 1, c) - at(H - 2, c);
      else
        gy = (at(r + 1, c) - at(r - 1, c)) / 2.0;
      float* p = out.data() + (static_cast<size_t>(r) * W + c) * 3;
      p[0] = static_cast<float>(gx);
      p[1] = static_cast<float>(gy);
      p[2] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  return Tensor::from_data({H, W, 3}, std::move(out));
}

Sample pad_to(const Sample& s, int target_h, int target_w) {
  const int H = s.image.extent(0), W = s.image.extent(1), C = s.image.extent(2);
  if (target_h < H || target_w < W)
    throw std::invalid_argument("pad_to: target smaller than source");
  Sample out;
  out.id = s.id;
  out.month = s.month;
  std::vector<float> img(static_cast<size_t>(target_h) * target_w * C, 0.f);
  out.labels.assign(static_cast<size_t>(target_h) * target_w, 0);
  const float* src = s.image.data().data();
  for (int r = 0; r < H; ++r) {
    std::copy(src + static_cast<size_t>(r) * W * C,
              src + static_cast<size_t>(r + 1) * W * C,
              img.begin() + static_cast<size_t>(r) * target_w * C);
    std::copy(s.labels.begin() + static_cast<size_t>(r) * W,
              s.labels.begin() + static_cast<size_t>(r + 1) * W,
              out.labels.begin() + static_cast<size_t>(r) * target_w);
  }
  out.image = Tensor::from_data({target_h, target_w, C}, std::move(img));
  return out;
}

Sample augment(const Sample& s, uint64_t seed, const AugmentPolicy& policy) {
  const int H = s.image.extent(0), W = s.image.extent(1), C = s.image.extent(2);
  std::mt19937_64 rng(mix_seed(seed, 0x617567));
  std::vector<float> img(s.image.data().begin(), s.image.data().end());
  std::vector<uint8_t> labels = s.labels;

  if (policy.photometric) {
    std::uniform_real_distribution<float> sc(0.8f, 1.2f);
    std::uniform_real_distribution<float> sh(-0.05f, 0.05f);
    float scale[3], shift[3];
    for (int c = 0; c < C; ++c) {
      scale[c] = sc(rng);
      shift[c] = sh(rng);
    }
    for (size_t i = 0; i < img.size(); ++i) {
      const int c = static_cast<int>(i % C);
      img[i] = std::clamp(img[i] * scale[c] + shift[c], 0.f, 1.f);
    }
  }

  if (policy.crop) {
    std::uniform_real_distribution<double> frac(0.85, 1.0);
    const int kh = std::max(1, static_cast<int>(std::lround(frac(rng) * H)));
    const int kw = std::max(1, static_cast<int>(std::lround(frac(rng) * W)));
    std::uniform_int_distribution<int> offr(0, H - kh), offc(0, W - kw);
    const int r0 = offr(rng), c0 = offc(rng);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        if (r >= r0 && r < r0 + kh && c >= c0 && c < c0 + kw) continue;
        float* p = img.data() + (static_cast<size_t>(r) * W + c) * C;
        std::fill(p, p + C, 0.f);
        labels[static_cast<size_t>(r) * W + c] = 0;
      }
  }

  if (policy.flip) {
    std::bernoulli_distribution coin(0.5);
    const bool hflip = coin(rng);
    const bool vflip = coin(rng);
    auto flip_into = [&](auto& buf, auto elem_count) {
      using V = std::remove_reference_t<decltype(buf[0])>;
      std::vector<V> flipped(buf.size());
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          const int sr = vflip ? H - 1 - r : r;
          const int sc = hflip ? W - 1 - c : c;
          for (int e = 0; e < elem_count; ++e)
            flipped[(static_cast<size_t>(r) * W + c) * elem_count + e] =
                buf[(static_cast<size_t>(sr) * W + sc) * elem_count + e];
        }
      buf.assign(flipped.begin(), flipped.end());
    };
    if (hflip || vflip) {
      flip_into(img, C);
      flip_into(labels, 1);
      // derivative channels change sign; under the symmetric normalization
      // negation is v -> 1 - v
      for (size_t p = 0; p < labels.size(); ++p) {
        if (hflip) img[p * C + 0] = 1.f - img[p * C + 0];
        if (vflip) img[p * C + 1] = 1.f - img[p * C + 1];
      }
    }
  }

  Sample out;
  out.id = s.id;
  out.month = s.month;
  out.labels = std::move(labels);
  out.image = Tensor::from_data({H, W, C}, std::move(img));
  return out;
}

ChannelStats compute_channel_stats(const std::vector<Sample>& samples) {
  ChannelStats stats;
  double mabs[2] = {0, 0};
  double mag = 0;
  for (const auto& s : samples) {
    const auto d = s.image.data();
    for (size_t i = 0; i < d.size(); i += 3) {
      mabs[0] = std::max(mabs[0], std::fabs(static_cast<double>(d[i])));
      mabs[1] = std::max(mabs[1], std::fabs(static_cast<double>(d[i + 1])));
      mag = std::max(mag, static_cast<double>(d[i + 2]));
    }
  }
  for (int c = 0; c < 2; ++c) {
    const float m = static_cast<float>(std::max(mabs[c], 1e-12));
    stats.ch_min[c] = -m;
    stats.ch_max[c] = m;
  }
  stats.ch_min[2] = 0.f;
  stats.ch_max[2] = static_cast<float>(std::max(mag, 1e-12));
  return stats;
}

void normalize_sample(Sample& s, const ChannelStats& stats) {
  auto d = s.image.mutable_data();
  for (size_t i = 0; i < d.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    const float lo = stats.ch_min[c], hi = stats.ch_max[c];
    d[i] = std::clamp((d[i] - lo) / (hi - lo), 0.f, 1.f);
  }
}

std::vector<Sample> synth_generate(const SynthConfig& cfg, int n_per_month,
                                   const std::string& id_prefix) {
  cfg.validate();
  const int H = cfg.grid_h, W = cfg.grid_w;
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n_per_month) * 12);

  for (int month = 1; month <= 12; ++month) {
    for (int rep = 0; rep < n_per_month; ++rep) {
      std::mt19937_64 rng(
          mix_seed(cfg.seed, static_cast<uint64_t>(month) * 1000 + rep));
      std::vector<double> field(static_cast<size_t>(H) * W);
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
          field[static_cast<size_t>(r) * W + c] =
              10.0 + cfg.base_gradient * (static_cast<double>(r) / (H - 1)) +
              0.5 * std::cos(2.0 * M_PI * (month - 1) / 12.0);

      Sample s;
      s.month = month;
      char idbuf[64];
      std::snprintf(idbuf, sizeof idbuf, "%sm%02d_r%03d", id_prefix.c_str(),
                    month, rep);
      s.id = idbuf;
      s.labels.assign(static_cast<size_t>(H) * W, 0);

      std::vector<int64_t> labeled(cfg.classes.size(), 0);
      std::vector<int64_t> kept(cfg.classes.size(), 0);
      for (size_t ci = 0; ci < cfg.classes.size(); ++ci) {
        const auto& front = cfg.classes[ci];
        // every class draws from the rng so month activity does not shift
        // the curves of the other classes
        const Polyline curve = make_curve(front, H, W, rng);
        const bool active =
            std::find(front.active_months.begin(), front.active_months.end(),
                      month) != front.active_months.end();
        if (!active) continue;
        for (int r = 0; r < H; ++r)
          for (int c = 0; c < W; ++c) {
            double dist, side;
            polyline_distance(curve, r, c, &dist, &side);
            field[static_cast<size_t>(r) * W + c] +=
                front.temperature_step * 0.5 * (1.0 + std::tanh(side * dist / 1.5));
            if (dist <= cfg.front_halfwidth) {
              s.labels[static_cast<size_t>(r) * W + c] =
                  static_cast<uint8_t>(front.class_id);
              ++labeled[ci];
            }
          }
      }
      for (size_t i = 0; i < s.labels.size(); ++i)
        for (size_t ci = 0; ci < cfg.classes.size(); ++ci)
          if (s.labels[i] == cfg.classes[ci].class_id) ++kept[ci];
      for (size_t ci = 0; ci < cfg.classes.size(); ++ci)
        if (labeled[ci] > 0 && kept[ci] * 2 < labeled[ci])
          std::cerr << "warning: class " << cfg.classes[ci].class_id
                    << " mostly overwritten in sample " << s.id << "\n";

      if (cfg.noise_sigma > 0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (auto& v : field) v += noise(rng);
      }
      gaussian_smooth(field, H, W);

      std::vector<float> ffield(field.begin(), field.end());
      s.image = sst_gradient(ffield, H, W);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<int64_t> class_pixel_counts(const std::vector<Sample>& samples,
                                        int num_classes) {
  std::vector<int64_t> counts(num_classes, 0);
  for (const auto& s : samples)
    for (uint8_t v : s.labels) {
      if (v >= num_classes)
        throw std::invalid_argument("class_pixel_counts: label out of range");
      ++counts[v];
    }
  return counts;
}

void dataset_write(const std::vector<Sample>& samples, const ChannelStats& stats,
                   int num_classes, const std::string& split,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  if (samples.empty()) throw std::invalid_argument("dataset_write: no samples");
  const int H = samples.front().image.extent(0);
  const int W = samples.front().image.extent(1);
  manifest["height"] = H;
  manifest["width"] = W;
  manifest["num_classes"] = num_classes;
  manifest["count"] = samples.size();
  manifest["split"] = split;
  manifest.update(stats_to_json(stats));
  json entries = json::array();
  for (const auto& s : samples) {
    const std::string img = s.id + "_img.lst";
    const std::string lab = s.id + "_lab.lst";
    io::write_lst1(dir / img, {H, W, 3}, s.image.data());
    io::write_lst1(dir / lab, {H, W}, std::span<const uint8_t>(s.labels));
    entries.push_back({{"id", s.id}, {"month", s.month}, {"image", img},
                       {"labels", lab}});
  }
  manifest["samples"] = std::move(entries);
  io::atomic_write_text(dir / "manifest.json", manifest.dump(2));
}

Dataset::Dataset(DatasetManifest manifest, std::filesystem::path dir)
    : manifest_(std::move(manifest)), dir_(std::move(dir)) {}

Sample Dataset::load(size_t idx) const {
  const auto& e = manifest_.entries.at(idx);
  const auto img = io::read_lst1(dir_ / e.image_file);
  const auto lab = io::read_lst1(dir_ / e.label_file);
  if (img.dtype != io::Dtype::F32 ||
      img.shape != std::vector<int>{manifest_.height, manifest_.width, 3})
    throw std::runtime_error("bad image tensor: " + e.image_file);
  if (lab.dtype != io::Dtype::U8 ||
      lab.shape != std::vector<int>{manifest_.height, manifest_.width})
    throw std::runtime_error("bad label tensor: " + e.label_file);
  for (uint8_t v : lab.u8)
    if (v >= manifest_.num_classes)
      throw std::runtime_error("label out of range in " + e.label_file);
  Sample s;
  s.id = e.id;
  s.month = e.month;
  s.image = Tensor::from_data({manifest_.height, manifest_.width, 3}, img.f32);
  s.labels = lab.u8;
  return s;
}

std::vector<Sample> Dataset::load_all() const {
  std::vector<Sample> out;
  out.reserve(size());
  for (size_t i = 0; i < size(); ++i) out.push_back(load(i));
  return out;
}

Dataset dataset_read(const std::filesystem::path& dir) {
  const json j = json::parse(io::read_text(dir / "manifest.json"));
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  m.split = j.at("split").get<std::string>();
  m.stats.ch_min = j.at("channel_min").get<std::array<float, 3>>();
  m.stats.ch_max = j.at("channel_max").get<std::array<float, 3>>();
  std::set<std::string> ids;
  for (const auto& e : j.at("samples")) {
    ManifestEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.month = e.at("month").get<int>();
    entry.image_file = e.at("image").get<std::string>();
    entry.label_file = e.at("labels").get<std::string>();
    if (entry.month < 1 || entry.month > 12)
      throw std::runtime_error("manifest month out of range for " + entry.id);
    if (!ids.insert(entry.id).second)
      throw std::runtime_error("duplicate sample id in manifest: " + entry.id);
    m.entries.push_back(std::move(entry));
  }
  if (j.contains("count") &&
      j.at("count").get<size_t>() != m.entries.size())
    throw std::runtime_error("manifest sample count does not match entries");

  Dataset ds(std::move(m), dir);
  // validate that every referenced file exists and parses
  for (size_t i = 0; i < ds.size(); ++i) (void)ds.load(i);
  return ds;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_dataset(
    const DatasetManifest& manifest, double val_fraction, uint64_t seed) {
  if (val_fraction <= 0 || val_fraction >= 1)
    throw std::invalid_argument("split_dataset: val_fraction must be in (0,1)");
  std::map<int, std::vector<size_t>> by_month;
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    by_month[manifest.entries[i].month].push_back(i);

  std::vector<size_t> train, val;
  for (auto& [month, idxs] : by_month) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(month)));
    std::shuffle(idxs.begin(), idxs.end(), rng);
    const size_t n_val = static_cast<size_t>(
        std::lround(val_fraction * static_cast<double>(idxs.size())));
    for (size_t i = 0; i < idxs.size(); ++i)
      (i < n_val ? val : train).push_back(idxs[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  if (train.empty() || val.empty())
    throw std::invalid_argument("split_dataset: a split would be empty");
  return {train, val};
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_samples(
    const std::vector<Sample>& samples, double val_fraction, uint64_t seed) {
  DatasetManifest m;
  for (const auto& s : samples)
    m.entries.push_back({s.id, s.month, "", ""});
  auto [ti, vi] = split_dataset(m, val_fraction, seed);
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (size_t i : ti) out.first.push_back(samples[i]);
  for (size_t i : vi) out.second.push_back(samples[i]);
  return out;
}

}  // namespace lsenet
