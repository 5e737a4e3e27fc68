#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "lsenet/kernels.hpp"

namespace lsenet {

enum class Padding { Same, Valid };
enum class PoolKind { Max, Avg };
enum class UpsampleKind { Nearest, Bilinear };
enum class Activation { Relu, Sigmoid, SoftmaxChannels };

namespace detail {

template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;  // leaf flag
  bool needs_grad = false;     // true if a grad must flow through this node
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
  bool backward_done = false;

  int size() const { return static_cast<int>(data.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

inline int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("negative extent in shape");
    n *= e;
  }
  return n;
}

}  // namespace detail

/// Dense f32/f64 tensor participating in a reverse-mode autodiff graph.
/// Feature maps use height x width x channels layout, row-major.
template <class T>
class TensorT {
 public:
  using scalar_type = T;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    return from_data(shape, std::vector<T>(detail::shape_size(shape), T(0)),
                     requires_grad);
  }

  static TensorT full(std::vector<int> shape, T value, bool requires_grad = false) {
    return from_data(shape, std::vector<T>(detail::shape_size(shape), value),
                     requires_grad);
  }

  static TensorT from_data(std::vector<int> shape, std::vector<T> data,
                           bool requires_grad = false) {
    if (detail::shape_size(shape) != static_cast<int>(data.size()))
      throw std::invalid_argument("tensor data size does not match shape");
    TensorT t;
    t.node = std::make_shared<detail::Node<T>>();
    t.node->shape = std::move(shape);
    t.node->data = std::move(data);
    t.node->requires_grad = requires_grad;
    t.node->needs_grad = requires_grad;
    return t;
  }

  static TensorT scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return node != nullptr; }
  const std::vector<int>& shape() const { return node->shape; }
  int size() const { return node->size(); }
  int extent(int i) const { return node->shape.at(i); }

  std::span<const T> data() const { return node->data; }
  std::span<T> mutable_data() { return node->data; }
  T item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor");
    return node->data[0];
  }

  bool requires_grad() const { return node->requires_grad; }
  bool has_grad() const { return !node->grad.empty(); }
  std::span<const T> grad() const { return node->grad; }
  void zero_grad() {
    node->grad.clear();
    node->backward_done = false;
  }

  std::shared_ptr<detail::Node<T>> node;
};

using Tensor = TensorT<float>;

template <class T>
using ParameterSetT = std::map<std::string, TensorT<T>>;
using ParameterSet = ParameterSetT<float>;

namespace detail {

/// Builds a graph node; parents/backprop are recorded only when a gradient
/// will be requested somewhere upstream.
template <class T>
TensorT<T> make_op(std::vector<int> shape, std::vector<T> data,
                   std::vector<TensorT<T>> parents,
                   std::function<void(Node<T>&)> backprop) {
  TensorT<T> out = TensorT<T>::from_data(std::move(shape), std::move(data));
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.node->needs_grad;
  if (needs) {
    out.node->needs_grad = true;
    out.node->parents.reserve(parents.size());
    for (auto& p : parents) out.node->parents.push_back(p.node);
    out.node->backprop = std::move(backprop);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight,
                  const TensorT<T>& bias, Padding padding = Padding::Same) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (is.size() != 3) throw std::invalid_argument("conv2d: input must be HxWxC");
  if (ws.size() != 4 || ws[0] != ws[1])
    throw std::invalid_argument("conv2d: weight must be kxkxCinxCout");
  const int H = is[0], W = is[1], Cin = is[2];
  const int k = ws[0], Cout = ws[3];
  if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (ws[2] != Cin)
    throw std::invalid_argument("conv2d: weight Cin does not match input channels");
  if (bias.shape() != std::vector<int>{Cout})
    throw std::invalid_argument("conv2d: bias must have Cout entries");

  const int pad = padding == Padding::Same ? k / 2 : 0;
  const int OH = padding == Padding::Same ? H : H - k + 1;
  const int OW = padding == Padding::Same ? W : W - k + 1;
  if (OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv2d: kernel larger than input with valid padding");

  std::vector<T> out(static_cast<size_t>(OH) * OW * Cout);
  kernels::conv2d_forward(input.data().data(), H, W, Cin, weight.data().data(), k,
                          Cout, bias.data().data(), out.data(), pad, OH, OW);

  auto in_node = input.node;
  auto w_node = weight.node;
  auto b_node = bias.node;
  return detail::make_op<T>(
      {OH, OW, Cout}, std::move(out), {input, weight, bias},
      [in_node, w_node, b_node, H, W, Cin, k, Cout, pad, OH, OW](detail::Node<T>& o) {
        const T* g = o.grad.data();
        if (in_node->needs_grad) {
          in_node->ensure_grad();
          kernels::conv2d_backward_input(g, OH, OW, Cout, w_node->data.data(), k,
                                         Cin, in_node->grad.data(), H, W, pad);
        }
        if (w_node->needs_grad) {
          w_node->ensure_grad();
          kernels::conv2d_backward_weight(g, OH, OW, Cout, in_node->data.data(), H,
                                          W, Cin, k, w_node->grad.data(), pad);
        }
        if (b_node->needs_grad) {
          b_node->ensure_grad();
          kernels::conv2d_backward_bias(g, OH * OW, Cout, b_node->grad.data());
        }
      });
}

template <class T>
TensorT<T> pool2d(const TensorT<T>& input, PoolKind kind, int k) {
  const auto& is = input.shape();
  if (is.size() != 3) throw std::invalid_argument("pool2d: input must be HxWxC");
  const int H = is[0], W = is[1], C = is[2];
  if (k < 1 || H % k != 0 || W % k != 0)
    throw std::invalid_argument("pool2d: extents not divisible by window");
  const int OH = H / k, OW = W / k;
  std::vector<T> out(static_cast<size_t>(OH) * OW * C);
  std::vector<int32_t> argmax;
  if (kind == PoolKind::Max) {
    argmax.resize(out.size());
    kernels::maxpool_forward(input.data().data(), H, W, C, k, out.data(),
                             argmax.data());
  } else {
    kernels::avgpool_forward(input.data().data(), H, W, C, k, out.data());
  }

  auto in_node = input.node;
  return detail::make_op<T>(
      {OH, OW, C}, std::move(out), {input},
      [in_node, kind, k, H, W, C, OH, OW, argmax = std::move(argmax)](detail::Node<T>& o) {
        if (!in_node->needs_grad) return;
        in_node->ensure_grad();
        if (kind == PoolKind::Max) {
          kernels::maxpool_backward(o.grad.data(), OH, OW, C, argmax.data(),
                                    in_node->grad.data());
        } else {
          kernels::avgpool_backward(o.grad.data(), OH, OW, C, k,
                                    in_node->grad.data(), W);
        }
      });
}

template <class T>
TensorT<T> upsample(const TensorT<T>& input, UpsampleKind kind, int factor) {
  const auto& is = input.shape();
  if (is.size() != 3) throw std::invalid_argument("upsample: input must be HxWxC");
  if (factor < 1) throw std::invalid_argument("upsample: factor must be >= 1");
  const int h = is[0], w = is[1], C = is[2];
  const int OH = h * factor, OW = w * factor;
  std::vector<T> out(static_cast<size_t>(OH) * OW * C);
  if (kind == UpsampleKind::Nearest)
    kernels::upsample_nearest_forward(input.data().data(), h, w, C, factor,
                                      out.data());
  else
    kernels::upsample_bilinear_forward(input.data().data(), h, w, C, factor,
                                       out.data());

  auto in_node = input.node;
  return detail::make_op<T>(
      {OH, OW, C}, std::move(out), {input},
      [in_node, kind, factor, h, w, C](detail::Node<T>& o) {
        if (!in_node->needs_grad) return;
        in_node->ensure_grad();
        if (kind == UpsampleKind::Nearest)
          kernels::upsample_nearest_backward(o.grad.data(), h, w, C, factor,
                                             in_node->grad.data());
        else
          kernels::upsample_bilinear_backward(o.grad.data(), h, w, C, factor,
                                              in_node->grad.data());
      });
}

template <class T>
TensorT<T> fully_connected(const TensorT<T>& input, const TensorT<T>& weight,
                           const TensorT<T>& bias) {
  const auto& ws = weight.shape();
  if (ws.size() != 2) throw std::invalid_argument("fully_connected: weight must be DinxDout");
  const int Din = ws[0], Dout = ws[1];
  if (input.size() != Din)
    throw std::invalid_argument("fully_connected: input size does not match Din");
  if (bias.shape() != std::vector<int>{Dout})
    throw std::invalid_argument("fully_connected: bias must have Dout entries");

  std::vector<T> out(Dout);
  kernels::fc_forward(input.data().data(), Din, weight.data().data(), Dout,
                      bias.data().data(), out.data());

  auto in_node = input.node;
  auto w_node = weight.node;
  auto b_node = bias.node;
  return detail::make_op<T>(
      {Dout}, std::move(out), {input, weight, bias},
      [in_node, w_node, b_node, Din, Dout](detail::Node<T>& o) {
        const T* g = o.grad.data();
        if (in_node->needs_grad) {
          in_node->ensure_grad();
          kernels::fc_backward_input(g, w_node->data.data(), Din, Dout,
                                     in_node->grad.data());
        }
        if (w_node->needs_grad) {
          w_node->ensure_grad();
          kernels::fc_backward_weight(g, in_node->data.data(), Din, Dout,
                                      w_node->grad.data());
        }
        if (b_node->needs_grad) {
          b_node->ensure_grad();
          for (int j = 0; j < Dout; ++j) b_node->grad[j] += g[j];
        }
      });
}

template <class T>
TensorT<T> activation(const TensorT<T>& input, Activation kind) {
  const auto& s = input.shape();
  const int n = input.size();
  std::vector<T> out(n);
  const T* x = input.data().data();

  if (kind == Activation::Relu) {
    for (int i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  } else if (kind == Activation::Sigmoid) {
    for (int i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
  } else {
    if (s.size() != 3 && s.size() != 1)
      throw std::invalid_argument("softmax_channels: input must be HxWxC or flat");
    const int C = s.back();
    const int pixels = n / C;
    for (int p = 0; p < pixels; ++p) {
      const T* xp = x + static_cast<size_t>(p) * C;
      T* yp = out.data() + static_cast<size_t>(p) * C;
      T mx = xp[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, xp[c]);
      T sum = 0;
      for (int c = 0; c < C; ++c) {
        yp[c] = std::exp(xp[c] - mx);
        sum += yp[c];
      }
      for (int c = 0; c < C; ++c) yp[c] /= sum;
    }
  }

  auto in_node = input.node;
  const int C = s.back();
  return detail::make_op<T>(
      s, std::move(out), {input}, [in_node, kind, n, C](detail::Node<T>& o) {
        if (!in_node->needs_grad) return;
        in_node->ensure_grad();
        const T* g = o.grad.data();
        const T* y = o.data.data();
        T* gx = in_node->grad.data();
        if (kind == Activation::Relu) {
          const T* x = in_node->data.data();
          for (int i = 0; i < n; ++i)
            if (x[i] > T(0)) gx[i] += g[i];
        } else if (kind == Activation::Sigmoid) {
          for (int i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
        } else {
          const int pixels = n / C;
          for (int p = 0; p < pixels; ++p) {
            const T* yp = y + static_cast<size_t>(p) * C;
            const T* gp = g + static_cast<size_t>(p) * C;
            T dot = 0;
            for (int c = 0; c < C; ++c) dot += gp[c] * yp[c];
            T* gxp = gx + static_cast<size_t>(p) * C;
            for (int c = 0; c < C; ++c) gxp[c] += yp[c] * (gp[c] - dot);
          }
        }
      });
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) { return activation(x, Activation::Relu); }
template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) { return activation(x, Activation::Sigmoid); }
template <class T>
TensorT<T> softmax_channels(const TensorT<T>& x) {
  return activation(x, Activation::SoftmaxChannels);
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3)
    throw std::invalid_argument("concat_channels: inputs must be HxWxC");
  if (as[0] != bs[0] || as[1] != bs[1])
    throw std::invalid_argument("concat_channels: spatial extents differ");
  const int H = as[0], W = as[1], Ca = as[2], Cb = bs[2], C = Ca + Cb;
  std::vector<T> out(static_cast<size_t>(H) * W * C);
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (int p = 0; p < H * W; ++p) {
    T* op = out.data() + static_cast<size_t>(p) * C;
    std::copy(ap + static_cast<size_t>(p) * Ca, ap + static_cast<size_t>(p + 1) * Ca, op);
    std::copy(bp + static_cast<size_t>(p) * Cb, bp + static_cast<size_t>(p + 1) * Cb,
              op + Ca);
  }
  auto a_node = a.node;
  auto b_node = b.node;
  return detail::make_op<T>(
      {H, W, C}, std::move(out), {a, b},
      [a_node, b_node, H, W, Ca, Cb, C](detail::Node<T>& o) {
        const T* g = o.grad.data();
        if (a_node->needs_grad) {
          a_node->ensure_grad();
          for (int p = 0; p < H * W; ++p)
            for (int c = 0; c < Ca; ++c)
              a_node->grad[static_cast<size_t>(p) * Ca + c] +=
                  g[static_cast<size_t>(p) * C + c];
        }
        if (b_node->needs_grad) {
          b_node->ensure_grad();
          for (int p = 0; p < H * W; ++p)
            for (int c = 0; c < Cb; ++c)
              b_node->grad[static_cast<size_t>(p) * Cb + c] +=
                  g[static_cast<size_t>(p) * C + Ca + c];
        }
      });
}

/// Adds a per-channel bias vector (shape [C] or [1,1,C]) at every pixel.
template <class T>
TensorT<T> broadcast_add_channels(const TensorT<T>& map, const TensorT<T>& vec) {
  const auto& ms = map.shape();
  if (ms.size() != 3) throw std::invalid_argument("broadcast_add_channels: map must be HxWxC");
  const int H = ms[0], W = ms[1], C = ms[2];
  if (vec.size() != C)
    throw std::invalid_argument("broadcast_add_channels: channel counts differ");
  std::vector<T> out(map.data().begin(), map.data().end());
  const T* v = vec.data().data();
  for (int p = 0; p < H * W; ++p)
    for (int c = 0; c < C; ++c) out[static_cast<size_t>(p) * C + c] += v[c];

  auto m_node = map.node;
  auto v_node = vec.node;
  return detail::make_op<T>(
      {H, W, C}, std::move(out), {map, vec},
      [m_node, v_node, H, W, C](detail::Node<T>& o) {
        const T* g = o.grad.data();
        const int n = H * W * C;
        if (m_node->needs_grad) {
          m_node->ensure_grad();
          for (int i = 0; i < n; ++i) m_node->grad[i] += g[i];
        }
        if (v_node->needs_grad) {
          v_node->ensure_grad();
          for (int p = 0; p < H * W; ++p)
            for (int c = 0; c < C; ++c)
              v_node->grad[c] += g[static_cast<size_t>(p) * C + c];
        }
      });
}

enum class Elementwise { Add, Mul };

template <class T>
TensorT<T> elementwise(const TensorT<T>& a, const TensorT<T>& b, Elementwise kind) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("elementwise: shapes differ");
  const int n = a.size();
  std::vector<T> out(n);
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  if (kind == Elementwise::Add)
    for (int i = 0; i < n; ++i) out[i] = ap[i] + bp[i];
  else
    for (int i = 0; i < n; ++i) out[i] = ap[i] * bp[i];

  auto a_node = a.node;
  auto b_node = b.node;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b},
      [a_node, b_node, kind, n](detail::Node<T>& o) {
        const T* g = o.grad.data();
        if (a_node->needs_grad) {
          a_node->ensure_grad();
          if (kind == Elementwise::Add)
            for (int i = 0; i < n; ++i) a_node->grad[i] += g[i];
          else
            for (int i = 0; i < n; ++i) a_node->grad[i] += g[i] * b_node->data[i];
        }
        if (b_node->needs_grad) {
          b_node->ensure_grad();
          if (kind == Elementwise::Add)
            for (int i = 0; i < n; ++i) b_node->grad[i] += g[i];
          else
            for (int i = 0; i < n; ++i) b_node->grad[i] += g[i] * a_node->data[i];
        }
      });
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise(a, b, Elementwise::Add);
}
template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise(a, b, Elementwise::Mul);
}

template <class T>
TensorT<T> scale(const TensorT<T>& x, T factor) {
  const int n = x.size();
  std::vector<T> out(n);
  const T* xp = x.data().data();
  for (int i = 0; i < n; ++i) out[i] = xp[i] * factor;
  auto x_node = x.node;
  return detail::make_op<T>(x.shape(), std::move(out), {x},
                            [x_node, factor, n](detail::Node<T>& o) {
                              if (!x_node->needs_grad) return;
                              x_node->ensure_grad();
                              for (int i = 0; i < n; ++i)
                                x_node->grad[i] += o.grad[i] * factor;
                            });
}

template <class T>
TensorT<T> sum(const TensorT<T>& x) {
  const int n = x.size();
  const T* xp = x.data().data();
  T s = 0;
  for (int i = 0; i < n; ++i) s += xp[i];
  auto x_node = x.node;
  return detail::make_op<T>({1}, {s}, {x}, [x_node, n](detail::Node<T>& o) {
    if (!x_node->needs_grad) return;
    x_node->ensure_grad();
    const T g = o.grad[0];
    for (int i = 0; i < n; ++i) x_node->grad[i] += g;
  });
}

template <class T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 3) throw std::invalid_argument("global_avg_pool: input must be HxWxC");
  const int H = s[0], W = s[1], C = s[2];
  const int pixels = H * W;
  std::vector<T> out(C, T(0));
  const T* xp = x.data().data();
  for (int p = 0; p < pixels; ++p)
    for (int c = 0; c < C; ++c) out[c] += xp[static_cast<size_t>(p) * C + c];
  for (int c = 0; c < C; ++c) out[c] /= static_cast<T>(pixels);

  auto x_node = x.node;
  return detail::make_op<T>({C}, std::move(out), {x},
                            [x_node, pixels, C](detail::Node<T>& o) {
                              if (!x_node->needs_grad) return;
                              x_node->ensure_grad();
                              for (int p = 0; p < pixels; ++p)
                                for (int c = 0; c < C; ++c)
                                  x_node->grad[static_cast<size_t>(p) * C + c] +=
                                      o.grad[c] / static_cast<T>(pixels);
                            });
}

template <class T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<int> shape) {
  if (detail::shape_size(shape) != x.size())
    throw std::invalid_argument("reshape: element count mismatch");
  auto x_node = x.node;
  const int n = x.size();
  return detail::make_op<T>(std::move(shape),
                            std::vector<T>(x.data().begin(), x.data().end()), {x},
                            [x_node, n](detail::Node<T>& o) {
                              if (!x_node->needs_grad) return;
                              x_node->ensure_grad();
                              for (int i = 0; i < n; ++i)
                                x_node->grad[i] += o.grad[i];
                            });
}

/// Divides every pixel's channel vector by its channel sum.
template <class T>
TensorT<T> renormalize_channels(const TensorT<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 3) throw std::invalid_argument("renormalize_channels: input must be HxWxC");
  const int C = s[2];
  const int pixels = s[0] * s[1];
  std::vector<T> out(x.size());
  std::vector<T> sums(pixels);
  const T* xp = x.data().data();
  for (int p = 0; p < pixels; ++p) {
    T sum = 0;
    for (int c = 0; c < C; ++c) sum += xp[static_cast<size_t>(p) * C + c];
    sums[p] = sum;
    for (int c = 0; c < C; ++c)
      out[static_cast<size_t>(p) * C + c] = xp[static_cast<size_t>(p) * C + c] / sum;
  }
  auto x_node = x.node;
  return detail::make_op<T>(
      s, std::move(out), {x},
      [x_node, pixels, C, sums = std::move(sums)](detail::Node<T>& o) {
        if (!x_node->needs_grad) return;
        x_node->ensure_grad();
        for (int p = 0; p < pixels; ++p) {
          const T* gp = o.grad.data() + static_cast<size_t>(p) * C;
          const T* yp = o.data.data() + static_cast<size_t>(p) * C;
          T dot = 0;
          for (int c = 0; c < C; ++c) dot += gp[c] * yp[c];
          T* gxp = x_node->grad.data() + static_cast<size_t>(p) * C;
          for (int c = 0; c < C; ++c) gxp[c] += (gp[c] - dot) / sums[p];
        }
      });
}

// ---------------------------------------------------------------------------
// Backward pass

template <class T>
void backward(const TensorT<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  auto root = loss.node;
  if (root->backward_done)
    throw std::logic_error("backward: graph already consumed by a previous backward");

  // Iterative post-order DFS; topo holds children after all their parents'
  // dependents, so reverse iteration visits each node before its parents.
  std::vector<detail::Node<T>*> topo;
  std::unordered_set<detail::Node<T>*> visited;
  struct Frame {
    detail::Node<T>* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node<T>* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, T(1));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
  root->backward_done = true;
}

/// Max over elements of |analytic - central difference| /
/// max(|analytic|, |central|, 1e-6), with the analytic gradient taken from a
/// backward pass and the differences from two forward evaluations of f.
template <class T>
double finite_difference_check(const std::function<TensorT<T>(const TensorT<T>&)>& f,
                               TensorT<T> x, T step) {
  TensorT<T> probe = TensorT<T>::from_data(
      x.shape(), std::vector<T>(x.data().begin(), x.data().end()), true);
  TensorT<T> y = f(probe);
  if (y.size() != 1)
    throw std::invalid_argument("finite_difference_check: f must return a scalar");
  backward(y);
  std::vector<T> analytic(probe.size(), T(0));
  if (probe.has_grad())
    std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  double worst = 0;
  for (int i = 0; i < probe.size(); ++i) {
    std::vector<T> dplus(x.data().begin(), x.data().end());
    std::vector<T> dminus = dplus;
    dplus[i] += step;
    dminus[i] -= step;
    const double fp = f(TensorT<T>::from_data(x.shape(), std::move(dplus))).item();
    const double fm = f(TensorT<T>::from_data(x.shape(), std::move(dminus))).item();
    const double central = (fp - fm) / (2.0 * static_cast<double>(step));
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::fabs(a), std::fabs(central), 1e-6});
    worst = std::max(worst, std::fabs(a - central) / denom);
  }
  return worst;
}

template <class T>
void check_finite(const TensorT<T>& x, const std::string& what) {
  for (T v : x.data())
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite value in " + what);
}

}  // namespace lsenet
