#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsenet/tensor.hpp"

namespace lsenet {

enum class SeasonalMode { Month, Season, Off };
enum class LocationMode { Pe2d, CoordConv, Off };

std::string seasonal_name(SeasonalMode m);
std::string location_name(LocationMode m);
SeasonalMode parse_seasonal(const std::string& s);
LocationMode parse_location(const std::string& s);

/// One-hot calendar encoding. Month mode yields a 12-vector, season mode a
/// 4-vector over meteorological seasons: winter {12,1,2}, spring {3,4,5},
/// summer {6,7,8}, autumn {9,10,11}.
struct SeasonalCode {
  SeasonalMode mode = SeasonalMode::Month;
  int month = 1;
  std::vector<float> vec;
};

inline int season_index(int month) {
  if (month < 1 || month > 12)
    throw std::invalid_argument("season_index: month out of [1,12]");
  if (month == 12 || month <= 2) return 0;
  return (month - 3) / 3 + 1;
}

inline SeasonalCode seasonal_one_hot(int month, SeasonalMode mode) {
  if (month < 1 || month > 12)
    throw std::invalid_argument("seasonal_one_hot: month out of [1,12]");
  SeasonalCode code;
  code.mode = mode;
  code.month = month;
  if (mode == SeasonalMode::Month) {
    code.vec.assign(12, 0.f);
    code.vec[month - 1] = 1.f;
  } else if (mode == SeasonalMode::Season) {
    code.vec.assign(4, 0.f);
    code.vec[season_index(month)] = 1.f;
  }
  return code;
}

struct PositionalEncodingSpec {
  int h = 0;
  int w = 0;
  int d = 0;
  double base = 10000.0;
};

/// Sinusoidal 2D positional encoding over an h x w grid with d channels.
/// The first d/2 channels encode the row coordinate x with interleaved
/// sin/cos; the last d/2 channels encode the column coordinate y the same
/// way. All values lie in [-1, 1].
template <class T>
TensorT<T> positional_encoding_2d(const PositionalEncodingSpec& spec) {
  if (spec.h < 1 || spec.w < 1)
    throw std::invalid_argument("positional_encoding_2d: grid extents must be >= 1");
  if (spec.d <= 0 || spec.d % 4 != 0)
    throw std::invalid_argument("positional_encoding_2d: D must be divisible by 4");
  const int H = spec.h, W = spec.w, D = spec.d;
  std::vector<T> data(static_cast<size_t>(H) * W * D);
  const int quarter = D / 4;
  for (int x = 0; x < H; ++x) {
    for (int y = 0; y < W; ++y) {
      T* p = data.data() + (static_cast<size_t>(x) * W + y) * D;
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(spec.base, 4.0 * i / D);
        p[2 * i] = static_cast<T>(std::sin(x / freq));
        p[2 * i + 1] = static_cast<T>(std::cos(x / freq));
      }
      for (int j = 0; j < quarter; ++j) {
        const double freq = std::pow(spec.base, 4.0 * j / D);
        p[2 * j + D / 2] = static_cast<T>(std::sin(y / freq));
        p[2 * j + 1 + D / 2] = static_cast<T>(std::cos(y / freq));
      }
    }
  }
  return TensorT<T>::from_data({H, W, D}, std::move(data));
}

/// Two coordinate planes, each normalized to [-1, 1].
template <class T>
TensorT<T> coord_channels(int h, int w) {
  std::vector<T> data(static_cast<size_t>(h) * w * 2);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      T* p = data.data() + (static_cast<size_t>(r) * w + c) * 2;
      p[0] = h > 1 ? static_cast<T>(2.0 * r / (h - 1) - 1.0) : T(0);
      p[1] = w > 1 ? static_cast<T>(2.0 * c / (w - 1) - 1.0) : T(0);
    }
  return TensorT<T>::from_data({h, w, 2}, std::move(data));
}

/// Injects spatial position into a feature map. pe2d sums a sinusoidal grid,
/// coordconv concatenates coordinate planes and projects back to C channels
/// with the 1x1 conv stored under `prefix` in params, off is the identity.
template <class T>
TensorT<T> apply_location_encoding(const TensorT<T>& feature, LocationMode mode,
                                   const ParameterSetT<T>& params,
                                   const std::string& prefix = "") {
  if (mode == LocationMode::Off) return feature;
  const auto& s = feature.shape();
  if (s.size() != 3)
    throw std::invalid_argument("apply_location_encoding: feature must be HxWxC");
  if (mode == LocationMode::Pe2d) {
    if (s[2] % 4 != 0)
      throw std::invalid_argument(
          "apply_location_encoding: pe2d needs channel count divisible by 4");
    return add(feature, positional_encoding_2d<T>({s[0], s[1], s[2]}));
  }
  auto coords = coord_channels<T>(s[0], s[1]);
  auto cat = concat_channels(feature, coords);
  return conv2d(cat, params.at(prefix + ".weight"), params.at(prefix + ".bias"),
                Padding::Same);
}

}  // namespace lsenet
