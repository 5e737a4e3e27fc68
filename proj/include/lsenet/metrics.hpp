#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lsenet {

/// counts[i][j] = pixels of true class i predicted as class j.
struct ConfusionMatrix {
  int k_plus_1 = 0;
  std::vector<int64_t> counts;

  explicit ConfusionMatrix(int classes = 0)
      : k_plus_1(classes),
        counts(static_cast<size_t>(classes) * classes, 0) {}

  int64_t& at(int truth, int pred) {
    return counts[static_cast<size_t>(truth) * k_plus_1 + pred];
  }
  int64_t at(int truth, int pred) const {
    return counts[static_cast<size_t>(truth) * k_plus_1 + pred];
  }
  int64_t total() const;

  void accumulate(std::span<const uint8_t> pred, std::span<const uint8_t> truth);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

/// IoU_i = p_ii / (sum_j p_ij + sum_j p_ji - p_ii); nullopt when the class
/// is absent from both prediction and ground truth.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

/// Mean of the defined per-class IoUs; nullopt when all are undefined.
std::optional<double> miou(const ConfusionMatrix& cm);

int undefined_class_count(const ConfusionMatrix& cm);

/// 0 stays 0, everything else maps to 1.
std::vector<uint8_t> binary_collapse(std::span<const uint8_t> mask);

/// Binary P5 PGM, maxval 255; values outside [0,1] are clamped with a
/// warning on stderr.
void export_heatmap_pgm(const std::filesystem::path& path, const float* grid,
                        int h, int w);
/// One row per grid row, full float precision.
void export_heatmap_csv(const std::filesystem::path& path, const float* grid,
                        int h, int w);

struct Report {
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> iou;  // fractions in [0,1]
  std::optional<double> mean_iou;
  int excluded_classes = 0;
};

Report make_report(const ConfusionMatrix& cm,
                   const std::vector<std::string>& class_names);
std::string report_text(const Report& r);   // values x100, 2 decimals
std::string report_json(const Report& r);

std::vector<std::string> default_class_names(int k_plus_1);

}  // namespace lsenet
