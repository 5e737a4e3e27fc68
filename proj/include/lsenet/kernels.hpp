#pragma once

#include <algorithm>
#include <cstdint>
#include <cstddef>
#include <vector>

// OpenMP-parallel kernels backing the tensor ops. Every loop writes disjoint
// output elements in a fixed per-element order, so results are identical for
// any thread count. Layout: feature maps H x W x C row-major, conv weights
// k x k x Cin x Cout, fc weights Din x Dout.

namespace lsenet::kernels {

template <class T>
void conv2d_forward(const T* in, int H, int W, int Cin, const T* w, int k,
                    int Cout, const T* bias, T* out, int pad, int OH, int OW) {
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < OH; ++oy) {
    std::vector<T> acc(Cout);
    for (int ox = 0; ox < OW; ++ox) {
      for (int co = 0; co < Cout; ++co) acc[co] = bias[co];
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox + kx - pad;
          if (ix < 0 || ix >= W) continue;
          const T* ip = in + (static_cast<size_t>(iy) * W + ix) * Cin;
          const T* wp = w + (static_cast<size_t>(ky) * k + kx) * Cin * Cout;
          for (int ci = 0; ci < Cin; ++ci) {
            const T a = ip[ci];
            const T* wr = wp + static_cast<size_t>(ci) * Cout;
            for (int co = 0; co < Cout; ++co) acc[co] += a * wr[co];
          }
        }
      }
      T* op = out + (static_cast<size_t>(oy) * OW + ox) * Cout;
      for (int co = 0; co < Cout; ++co) op[co] = acc[co];
    }
  }
}

template <class T>
void conv2d_backward_input(const T* gout, int OH, int OW, int Cout, const T* w,
                           int k, int Cin, T* gin, int H, int W, int pad) {
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < H; ++iy) {
    for (int ix = 0; ix < W; ++ix) {
      T* gp = gin + (static_cast<size_t>(iy) * W + ix) * Cin;
      for (int ci = 0; ci < Cin; ++ci) {
        T acc = 0;
        for (int ky = 0; ky < k; ++ky) {
          const int oy = iy - ky + pad;
          if (oy < 0 || oy >= OH) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ox = ix - kx + pad;
            if (ox < 0 || ox >= OW) continue;
            const T* wr = w + ((static_cast<size_t>(ky) * k + kx) * Cin + ci) * Cout;
            const T* gr = gout + (static_cast<size_t>(oy) * OW + ox) * Cout;
            for (int co = 0; co < Cout; ++co) acc += wr[co] * gr[co];
          }
        }
        gp[ci] += acc;
      }
    }
  }
}

template <class T>
void conv2d_backward_weight(const T* gout, int OH, int OW, int Cout, const T* in,
                            int H, int W, int Cin, int k, T* gw, int pad) {
#pragma omp parallel for schedule(static)
  for (int tap = 0; tap < k * k * Cin; ++tap) {
    const int ky = tap / (k * Cin);
    const int kx = (tap / Cin) % k;
    const int ci = tap % Cin;
    std::vector<T> acc(Cout, T(0));
    for (int oy = 0; oy < OH; ++oy) {
      const int iy = oy + ky - pad;
      if (iy < 0 || iy >= H) continue;
      for (int ox = 0; ox < OW; ++ox) {
        const int ix = ox + kx - pad;
        if (ix < 0 || ix >= W) continue;
        const T a = in[(static_cast<size_t>(iy) * W + ix) * Cin + ci];
        const T* gr = gout + (static_cast<size_t>(oy) * OW + ox) * Cout;
        for (int co = 0; co < Cout; ++co) acc[co] += a * gr[co];
      }
    }
    T* gwp = gw + static_cast<size_t>(tap) * Cout;
    for (int co = 0; co < Cout; ++co) gwp[co] += acc[co];
  }
}

template <class T>
void conv2d_backward_bias(const T* gout, int pixels, int Cout, T* gb) {
  for (int p = 0; p < pixels; ++p) {
    const T* gr = gout + static_cast<size_t>(p) * Cout;
    for (int co = 0; co < Cout; ++co) gb[co] += gr[co];
  }
}

template <class T>
void maxpool_forward(const T* in, int H, int W, int C, int k, T* out,
                     int32_t* argmax) {
  const int OH = H / k, OW = W / k;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      for (int c = 0; c < C; ++c) {
        T best = in[(static_cast<size_t>(oy * k) * W + ox * k) * C + c];
        int32_t best_idx = (oy * k * W + ox * k) * C + c;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const int32_t idx = ((oy * k + dy) * W + ox * k + dx) * C + c;
            if (in[idx] > best) {  // strict: ties keep first in row-major order
              best = in[idx];
              best_idx = idx;
            }
          }
        const size_t o = (static_cast<size_t>(oy) * OW + ox) * C + c;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
}

template <class T>
void maxpool_backward(const T* gout, int OH, int OW, int C, const int32_t* argmax,
                      T* gin) {
  // windows are disjoint, so parallel scatter over outputs is race-free
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int c = 0; c < C; ++c) {
        const size_t o = (static_cast<size_t>(oy) * OW + ox) * C + c;
        gin[argmax[o]] += gout[o];
      }
}

template <class T>
void avgpool_forward(const T* in, int H, int W, int C, int k, T* out) {
  const int OH = H / k, OW = W / k;
  const T inv = T(1) / static_cast<T>(k * k);
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < OH; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      T* op = out + (static_cast<size_t>(oy) * OW + ox) * C;
      for (int c = 0; c < C; ++c) op[c] = 0;
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const T* ip = in + (static_cast<size_t>(oy * k + dy) * W + ox * k + dx) * C;
          for (int c = 0; c < C; ++c) op[c] += ip[c];
        }
      for (int c = 0; c < C; ++c) op[c] *= inv;
    }
  }
}

template <class T>
void avgpool_backward(const T* gout, int OH, int OW, int C, int k, T* gin,
                      int W) {
  const T inv = T(1) / static_cast<T>(k * k);
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox) {
      const T* gp = gout + (static_cast<size_t>(oy) * OW + ox) * C;
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          T* ip = gin + (static_cast<size_t>(oy * k + dy) * W + ox * k + dx) * C;
          for (int c = 0; c < C; ++c) ip[c] += gp[c] * inv;
        }
    }
}

template <class T>
void upsample_nearest_forward(const T* in, int h, int w, int C, int f, T* out) {
  const int OW = w * f;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < h * f; ++oy) {
    const int iy = oy / f;
    for (int ox = 0; ox < OW; ++ox) {
      const T* ip = in + (static_cast<size_t>(iy) * w + ox / f) * C;
      T* op = out + (static_cast<size_t>(oy) * OW + ox) * C;
      for (int c = 0; c < C; ++c) op[c] = ip[c];
    }
  }
}

template <class T>
void upsample_nearest_backward(const T* gout, int h, int w, int C, int f, T* gin) {
  const int OW = w * f;
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < h; ++iy)
    for (int ix = 0; ix < w; ++ix) {
      T* gp = gin + (static_cast<size_t>(iy) * w + ix) * C;
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) {
          const T* op = gout + (static_cast<size_t>(iy * f + dy) * OW + ix * f + dx) * C;
          for (int c = 0; c < C; ++c) gp[c] += op[c];
        }
    }
}

// Bilinear sampling with align-corners=false: output pixel centers map to
// (o + 0.5) / f - 0.5 in input coordinates, clamped at the borders.
struct BilinearTap {
  int y0, y1, x0, x1;
  double wy, wx;  // weight of y1 / x1
};

inline BilinearTap bilinear_tap(int oy, int ox, int h, int w, int f) {
  const double sy = (oy + 0.5) / f - 0.5;
  const double sx = (ox + 0.5) / f - 0.5;
  BilinearTap t;
  const double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  const double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  t.y0 = static_cast<int>(fy);
  t.x0 = static_cast<int>(fx);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.wy = fy - t.y0;
  t.wx = fx - t.x0;
  return t;
}

template <class T>
void upsample_bilinear_forward(const T* in, int h, int w, int C, int f, T* out) {
  const int OW = w * f;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < h * f; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      const BilinearTap t = bilinear_tap(oy, ox, h, w, f);
      const T* p00 = in + (static_cast<size_t>(t.y0) * w + t.x0) * C;
      const T* p01 = in + (static_cast<size_t>(t.y0) * w + t.x1) * C;
      const T* p10 = in + (static_cast<size_t>(t.y1) * w + t.x0) * C;
      const T* p11 = in + (static_cast<size_t>(t.y1) * w + t.x1) * C;
      const T w00 = static_cast<T>((1 - t.wy) * (1 - t.wx));
      const T w01 = static_cast<T>((1 - t.wy) * t.wx);
      const T w10 = static_cast<T>(t.wy * (1 - t.wx));
      const T w11 = static_cast<T>(t.wy * t.wx);
      T* op = out + (static_cast<size_t>(oy) * OW + ox) * C;
      for (int c = 0; c < C; ++c)
        op[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
    }
  }
}

// Scatter into overlapping input taps; kept serial for determinism.
template <class T>
void upsample_bilinear_backward(const T* gout, int h, int w, int C, int f, T* gin) {
  const int OW = w * f;
  for (int oy = 0; oy < h * f; ++oy) {
    for (int ox = 0; ox < OW; ++ox) {
      const BilinearTap t = bilinear_tap(oy, ox, h, w, f);
      const T* gp = gout + (static_cast<size_t>(oy) * OW + ox) * C;
      T* p00 = gin + (static_cast<size_t>(t.y0) * w + t.x0) * C;
      T* p01 = gin + (static_cast<size_t>(t.y0) * w + t.x1) * C;
      T* p10 = gin + (static_cast<size_t>(t.y1) * w + t.x0) * C;
      T* p11 = gin + (static_cast<size_t>(t.y1) * w + t.x1) * C;
      const T w00 = static_cast<T>((1 - t.wy) * (1 - t.wx));
      const T w01 = static_cast<T>((1 - t.wy) * t.wx);
      const T w10 = static_cast<T>(t.wy * (1 - t.wx));
      const T w11 = static_cast<T>(t.wy * t.wx);
      for (int c = 0; c < C; ++c) {
        p00[c] += w00 * gp[c];
        p01[c] += w01 * gp[c];
        p10[c] += w10 * gp[c];
        p11[c] += w11 * gp[c];
      }
    }
  }
}

template <class T>
void fc_forward(const T* in, int Din, const T* w, int Dout, const T* bias, T* out) {
  for (int j = 0; j < Dout; ++j) out[j] = bias[j];
  for (int i = 0; i < Din; ++i) {
    const T a = in[i];
    const T* wr = w + static_cast<size_t>(i) * Dout;
    for (int j = 0; j < Dout; ++j) out[j] += a * wr[j];
  }
}

template <class T>
void fc_backward_input(const T* gout, const T* w, int Din, int Dout, T* gin) {
  for (int i = 0; i < Din; ++i) {
    const T* wr = w + static_cast<size_t>(i) * Dout;
    T acc = 0;
    for (int j = 0; j < Dout; ++j) acc += wr[j] * gout[j];
    gin[i] += acc;
  }
}

template <class T>
void fc_backward_weight(const T* gout, const T* in, int Din, int Dout, T* gw) {
  for (int i = 0; i < Din; ++i) {
    const T a = in[i];
    T* gr = gw + static_cast<size_t>(i) * Dout;
    for (int j = 0; j < Dout; ++j) gr[j] += a * gout[j];
  }
}

}  // namespace lsenet::kernels
