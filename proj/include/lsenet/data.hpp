#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsenet/tensor.hpp"

namespace lsenet {

/// One training/evaluation instance. Image channels: horizontal derivative,
/// vertical derivative, gradient magnitude; normalized to [0,1] once dataset
/// statistics have been applied.
struct Sample {
  std::string id;
  int month = 1;
  Tensor image;                 // H x W x 3
  std::vector<uint8_t> labels;  // H x W, 0 = background
};

struct FrontSpec {
  int class_id = 1;
  float anchor_r = 0.5f;  // normalized row of the curve center
  float anchor_c = 0.5f;  // normalized column
  float angle = 0.f;      // curve orientation, radians
  float length = 0.5f;    // normalized curve length
  std::vector<int> active_months;
  float temperature_step = 1.f;  // degrees C across the front
  float curve_wiggle = 0.03f;    // normalized amplitude of curve perturbation
};

struct SynthConfig {
  int grid_h = 88;
  int grid_w = 88;
  int num_classes = 12;  // including background
  std::vector<FrontSpec> classes;
  float base_gradient = 2.f;   // degrees C across the grid, north-south ramp
  float noise_sigma = 0.05f;
  float front_halfwidth = 2.f;  // label tube radius, pixels
  uint64_t seed = 1;

  void validate() const;
};

/// The 11-front benchmark: location-anchored curves, identical temperature
/// steps (so class identity is carried by position and season, not
/// appearance), and month-dependent activity with more fronts in winter and
/// spring.
SynthConfig default_synth_config(int grid_h = 88, int grid_w = 88);

/// Central differences in the interior, one-sided at the borders. Returns
/// the raw (unnormalized) H x W x 3 gradient image.
Tensor sst_gradient(const std::vector<float>& sst, int H, int W);

/// Zero-pads image (and background-pads labels) to target extents, content
/// kept top-left.
Sample pad_to(const Sample& s, int target_h, int target_w);

struct AugmentPolicy {
  bool photometric = false;
  bool crop = false;
  bool flip = false;
};

/// Deterministic per-seed augmentation. Flips assume the symmetric gradient
/// normalization written by the dataset pipeline (derivative channels map to
/// 1-v under negation).
Sample augment(const Sample& s, uint64_t seed, const AugmentPolicy& policy);

struct ChannelStats {
  std::array<float, 3> ch_min{0.f, 0.f, 0.f};
  std::array<float, 3> ch_max{1.f, 1.f, 1.f};
};

/// Symmetric min/max for the derivative channels (min = -max), [0, max] for
/// the magnitude channel.
ChannelStats compute_channel_stats(const std::vector<Sample>& samples);
void normalize_sample(Sample& s, const ChannelStats& stats);

/// Generates n_per_month raw samples for each month; images are raw
/// gradients, normalize with compute_channel_stats / normalize_sample.
std::vector<Sample> synth_generate(const SynthConfig& cfg, int n_per_month,
                                   const std::string& id_prefix = "");

/// Pixel count per class over a sample set.
std::vector<int64_t> class_pixel_counts(const std::vector<Sample>& samples,
                                        int num_classes);

struct ManifestEntry {
  std::string id;
  int month = 1;
  std::string image_file;
  std::string label_file;
};

struct DatasetManifest {
  int version = 1;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  ChannelStats stats;
  std::vector<ManifestEntry> entries;
  std::string split;  // train | val | test
};

void dataset_write(const std::vector<Sample>& samples, const ChannelStats& stats,
                   int num_classes, const std::string& split,
                   const std::filesystem::path& dir);

class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, std::filesystem::path dir);
  const DatasetManifest& manifest() const { return manifest_; }
  size_t size() const { return manifest_.entries.size(); }
  Sample load(size_t idx) const;
  std::vector<Sample> load_all() const;

 private:
  DatasetManifest manifest_;
  std::filesystem::path dir_;
};

/// Parses and validates manifest.json plus every referenced tensor file.
Dataset dataset_read(const std::filesystem::path& dir);

/// Seeded month-stratified split into (train indices, val indices).
std::pair<std::vector<size_t>, std::vector<size_t>> split_dataset(
    const DatasetManifest& manifest, double val_fraction, uint64_t seed);

std::pair<std::vector<Sample>, std::vector<Sample>> split_samples(
    const std::vector<Sample>& samples, double val_fraction, uint64_t seed);

}  // namespace lsenet
