#include "lsenet/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lsenet/io.hpp"

namespace lsenet {

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

void ConfusionMatrix::accumulate(std::span<const uint8_t> pred,
                                 std::span<const uint8_t> truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("ConfusionMatrix: mask sizes differ");
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= k_plus_1 || truth[i] >= k_plus_1)
      throw std::invalid_argument("ConfusionMatrix: class out of range");
    ++at(truth[i], pred[i]);
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_plus_1 != k_plus_1)
    throw std::invalid_argument("ConfusionMatrix: class counts differ");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.k_plus_1);
  for (int i = 0; i < cm.k_plus_1; ++i) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < cm.k_plus_1; ++j) {
      row += cm.at(i, j);
      col += cm.at(j, i);
    }
    const int64_t denom = row + col - cm.at(i, i);
    if (denom > 0)
      out[i] = static_cast<double>(cm.at(i, i)) / static_cast<double>(denom);
  }
  return out;
}

std::optional<double> miou(const ConfusionMatrix& cm) {
  const auto ious = iou_per_class(cm);
  double sum = 0;
  int n = 0;
  for (const auto& v : ious)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

int undefined_class_count(const ConfusionMatrix& cm) {
  const auto ious = iou_per_class(cm);
  return static_cast<int>(std::count_if(ious.begin(), ious.end(),
                                        [](const auto& v) { return !v; }));
}

std::vector<uint8_t> binary_collapse(std::span<const uint8_t> mask) {
  std::vector<uint8_t> out(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] == 0 ? 0 : 1;
  return out;
}

namespace {

float clamp_warn(float v, bool* warned) {
  if (v < 0.f || v > 1.f) {
    if (!*warned) std::cerr << "warning: heatmap value outside [0,1], clamping\n";
    *warned = true;
    return std::clamp(v, 0.f, 1.f);
  }
  return v;
}

}  // namespace

void export_heatmap_pgm(const std::filesystem::path& path, const float* grid,
                        int h, int w) {
  std::ostringstream os;
  os << "P5\n" << w << " " << h << "\n255\n";
  bool warned = false;
  for (int i = 0; i < h * w; ++i) {
    const float v = clamp_warn(grid[i], &warned);
    os.put(static_cast<char>(
        static_cast<unsigned char>(std::lround(255.0 * v))));
  }
  io::atomic_write_text(path, os.str());
}

void export_heatmap_csv(const std::filesystem::path& path, const float* grid,
                        int h, int w) {
  std::ostringstream os;
  bool warned = false;
  char buf[32];
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const float v = clamp_warn(grid[static_cast<size_t>(r) * w + c], &warned);
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      os << buf << (c + 1 < w ? "," : "");
    }
    os << "\n";
  }
  io::atomic_write_text(path, os.str());
}

std::vector<std::string> default_class_names(int k_plus_1) {
  std::vector<std::string> names;
  names.reserve(k_plus_1);
  names.emplace_back("background");
  if (k_plus_1 == 2) {
    names.emplace_back("front");
  } else {
    for (int i = 1; i < k_plus_1; ++i) names.push_back("front" + std::to_string(i));
  }
  return names;
}

Report make_report(const ConfusionMatrix& cm,
                   const std::vector<std::string>& class_names) {
  if (static_cast<int>(class_names.size()) != cm.k_plus_1)
    throw std::invalid_argument("make_report: class name count mismatch");
  Report r;
  r.class_names = class_names;
  r.iou = iou_per_class(cm);
  r.mean_iou = miou(cm);
  r.excluded_classes = undefined_class_count(cm);
  return r;
}

std::string report_text(const Report& r) {
  size_t width = 4;
  for (const auto& n : r.class_names) width = std::max(width, n.size());
  std::ostringstream os;
  char buf[32];
  for (size_t i = 0; i < r.class_names.size(); ++i) {
    os << r.class_names[i];
    os << std::string(width + 2 - r.class_names[i].size(), ' ');
    if (r.iou[i]) {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *r.iou[i]);
      os << buf;
    } else {
      os << "--";
    }
    os << "\n";
  }
  os << "mIoU" << std::string(width + 2 - 4, ' ');
  if (r.mean_iou) {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *r.mean_iou);
    os << buf;
  } else {
    os << "--";
  }
  os << "\n";
  if (r.excluded_classes > 0)
    os << "(" << r.excluded_classes << " absent classes excluded from the mean)\n";
  return os.str();
}

std::string report_json(const Report& r) {
  nlohmann::json j;
  nlohmann::json per_class = nlohmann::json::object();
  auto round2 = [](double v) { return std::round(10000.0 * v) / 100.0; };
  for (size_t i = 0; i < r.class_names.size(); ++i) {
    if (r.iou[i])
      per_class[r.class_names[i]] = round2(*r.iou[i]);
    else
      per_class[r.class_names[i]] = nullptr;
  }
  j["per_class"] = per_class;
  j["miou"] = r.mean_iou ? nlohmann::json(round2(*r.mean_iou)) : nlohmann::json();
  j["excluded_classes"] = r.excluded_classes;
  return j.dump(2);
}

}  // namespace lsenet
