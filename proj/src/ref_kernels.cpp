#include "lsenet/ref_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace lsenet::ref {

std::vector<double> conv2d(const std::vector<double>& in, int H, int W, int Cin,
                           const std::vector<double>& w, int k, int Cout,
                           const std::vector<double>& bias, int pad, int OH,
                           int OW) {
  std::vector<double> out(static_cast<size_t>(OH) * OW * Cout);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int co = 0; co < Cout; ++co) {
        double acc = bias[co];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            for (int ci = 0; ci < Cin; ++ci) {
              const int iy = oy + ky - pad;
              const int ix = ox + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += in[(static_cast<size_t>(iy) * W + ix) * Cin + ci] *
                     w[((static_cast<size_t>(ky) * k + kx) * Cin + ci) * Cout + co];
            }
        out[(static_cast<size_t>(oy) * OW + ox) * Cout + co] = acc;
      }
  return out;
}

std::vector<double> maxpool(const std::vector<double>& in, int H, int W, int C,
                            int k) {
  const int OH = H / k, OW = W / k;
  std::vector<double> out(static_cast<size_t>(OH) * OW * C);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int c = 0; c < C; ++c) {
        double best = in[(static_cast<size_t>(oy * k) * W + ox * k) * C + c];
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            best = std::max(best, in[(static_cast<size_t>(oy * k + dy) * W +
                                      ox * k + dx) *
                                         C +
                                     c]);
        out[(static_cast<size_t>(oy) * OW + ox) * C + c] = best;
      }
  return out;
}

std::vector<double> avgpool(const std::vector<double>& in, int H, int W, int C,
                            int k) {
  const int OH = H / k, OW = W / k;
  std::vector<double> out(static_cast<size_t>(OH) * OW * C);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            acc += in[(static_cast<size_t>(oy * k + dy) * W + ox * k + dx) * C + c];
        out[(static_cast<size_t>(oy) * OW + ox) * C + c] = acc / (k * k);
      }
  return out;
}

std::vector<double> upsample_bilinear(const std::vector<double>& in, int h,
                                      int w, int C, int f) {
  const int OH = h * f, OW = w * f;
  std::vector<double> out(static_cast<size_t>(OH) * OW * C);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int c = 0; c < C; ++c) {
        const double sy =
            std::clamp((oy + 0.5) / f - 0.5, 0.0, static_cast<double>(h - 1));
        const double sx =
            std::clamp((ox + 0.5) / f - 0.5, 0.0, static_cast<double>(w - 1));
        const int y0 = static_cast<int>(sy);
        const int x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, h - 1);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wy = sy - y0;
        const double wx = sx - x0;
        auto at = [&](int y, int x) {
          return in[(static_cast<size_t>(y) * w + x) * C + c];
        };
        out[(static_cast<size_t>(oy) * OW + ox) * C + c] =
            (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
            wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
      }
  return out;
}

std::vector<double> matvec(const std::vector<double>& in, int Din,
                           const std::vector<double>& w, int Dout,
                           const std::vector<double>& bias) {
  std::vector<double> out(Dout);
  for (int j = 0; j < Dout; ++j) {
    double acc = bias[j];
    for (int i = 0; i < Din; ++i) acc += in[i] * w[static_cast<size_t>(i) * Dout + j];
    out[j] = acc;
  }
  return out;
}

}  // namespace lsenet::ref
