#include "lsenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "lsenet/model.hpp"
#include "lsenet/tensor.hpp"
#include "lsenet/train.hpp"

namespace lsenet {

namespace {

using DTensor = TensorT<double>;
using Fn = std::function<DTensor(const DTensor&)>;

constexpr double kStep = 1e-5;

DTensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                    double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(detail::shape_size(shape));
  for (auto& v : data) v = dist(rng);
  return DTensor::from_data(std::move(shape), std::move(data));
}

// Inputs bounded away from the relu kink so the finite difference never
// straddles it.
DTensor rand_away_from_zero(std::vector<int> shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> data(detail::shape_size(shape));
  for (auto& v : data) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return DTensor::from_data(std::move(shape), std::move(data));
}

/// Scalar loss via a fixed random projection so every output element
/// contributes a distinct weight to the gradient.
Fn project(std::function<DTensor(const DTensor&)> op, const DTensor& weights) {
  return [op = std::move(op), weights](const DTensor& x) {
    return sum(mul(op(x), weights));
  };
}

struct Case {
  std::string name;
  // Returns {function of the varied tensor, the varied tensor}.
  std::function<std::pair<Fn, DTensor>(std::mt19937_64&)> make;
};

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  auto add_case = [&](std::string name, auto make) {
    cases.push_back({std::move(name), std::move(make)});
  };

  add_case("conv2d/input", [](std::mt19937_64& rng) {
    auto x = rand_tensor({6, 7, 3}, rng);
    auto w = rand_tensor({3, 3, 3, 4}, rng);
    auto b = rand_tensor({4}, rng);
    auto r = rand_tensor({6, 7, 4}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return conv2d(t, w, b, Padding::Same); }, r),
        x);
  });
  add_case("conv2d/input_valid", [](std::mt19937_64& rng) {
    auto x = rand_tensor({7, 6, 2}, rng);
    auto w = rand_tensor({3, 3, 2, 3}, rng);
    auto b = rand_tensor({3}, rng);
    auto r = rand_tensor({5, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return conv2d(t, w, b, Padding::Valid); }, r),
        x);
  });
  add_case("conv2d/weight", [](std::mt19937_64& rng) {
    auto x = rand_tensor({6, 6, 3}, rng);
    auto w = rand_tensor({3, 3, 3, 4}, rng);
    auto b = rand_tensor({4}, rng);
    auto r = rand_tensor({6, 6, 4}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return conv2d(x, t, b, Padding::Same); }, r),
        w);
  });
  add_case("conv2d/bias", [](std::mt19937_64& rng) {
    auto x = rand_tensor({5, 5, 2}, rng);
    auto w = rand_tensor({3, 3, 2, 3}, rng);
    auto b = rand_tensor({3}, rng);
    auto r = rand_tensor({5, 5, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return conv2d(x, w, t, Padding::Same); }, r),
        b);
  });
  add_case("pool2d/max", [](std::mt19937_64& rng) {
    auto x = rand_tensor({6, 8, 3}, rng);
    auto r = rand_tensor({3, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return pool2d(t, PoolKind::Max, 2); }, r), x);
  });
  add_case("pool2d/avg", [](std::mt19937_64& rng) {
    auto x = rand_tensor({6, 8, 3}, rng);
    auto r = rand_tensor({3, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return pool2d(t, PoolKind::Avg, 2); }, r), x);
  });
  add_case("upsample/nearest", [](std::mt19937_64& rng) {
    auto x = rand_tensor({4, 5, 3}, rng);
    auto r = rand_tensor({8, 10, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return upsample(t, UpsampleKind::Nearest, 2); },
                r),
        x);
  });
  add_case("upsample/bilinear", [](std::mt19937_64& rng) {
    auto x = rand_tensor({4, 5, 3}, rng);
    auto r = rand_tensor({12, 15, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return upsample(t, UpsampleKind::Bilinear, 3); },
                r),
        x);
  });
  add_case("fully_connected/input", [](std::mt19937_64& rng) {
    auto x = rand_tensor({7}, rng);
    auto w = rand_tensor({7, 5}, rng);
    auto b = rand_tensor({5}, rng);
    auto r = rand_tensor({5}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return fully_connected(t, w, b); }, r), x);
  });
  add_case("fully_connected/weight", [](std::mt19937_64& rng) {
    auto x = rand_tensor({7}, rng);
    auto w = rand_tensor({7, 5}, rng);
    auto b = rand_tensor({5}, rng);
    auto r = rand_tensor({5}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return fully_connected(x, t, b); }, r), w);
  });
  add_case("fully_connected/bias", [](std::mt19937_64& rng) {
    auto x = rand_tensor({7}, rng);
    auto w = rand_tensor({7, 5}, rng);
    auto b = rand_tensor({5}, rng);
    auto r = rand_tensor({5}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return fully_connected(x, w, t); }, r), b);
  });
  add_case("activation/relu", [](std::mt19937_64& rng) {
    auto x = rand_away_from_zero({5, 6, 3}, rng);
    auto r = rand_tensor({5, 6, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return relu(t); }, r), x);
  });
  add_case("activation/sigmoid", [](std::mt19937_64& rng) {
    auto x = rand_tensor({5, 6, 3}, rng, -3.0, 3.0);
    auto r = rand_tensor({5, 6, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return sigmoid(t); }, r), x);
  });
  add_case("activation/softmax_channels", [](std::mt19937_64& rng) {
    auto x = rand_tensor({4, 4, 5}, rng, -2.0, 2.0);
    auto r = rand_tensor({4, 4, 5}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return softmax_channels(t); }, r), x);
  });
  add_case("concat_channels/a", [](std::mt19937_64& rng) {
    auto a = rand_tensor({4, 5, 3}, rng);
    auto b = rand_tensor({4, 5, 2}, rng);
    auto r = rand_tensor({4, 5, 5}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return concat_channels(t, b); }, r), a);
  });
  add_case("concat_channels/b", [](std::mt19937_64& rng) {
    auto a = rand_tensor({4, 5, 3}, rng);
    auto b = rand_tensor({4, 5, 2}, rng);
    auto r = rand_tensor({4, 5, 5}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return concat_channels(a, t); }, r), b);
  });
  add_case("broadcast_add_channels/map", [](std::mt19937_64& rng) {
    auto m = rand_tensor({5, 4, 3}, rng);
    auto v = rand_tensor({3}, rng);
    auto r = rand_tensor({5, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return broadcast_add_channels(t, v); }, r), m);
  });
  add_case("broadcast_add_channels/vec", [](std::mt19937_64& rng) {
    auto m = rand_tensor({5, 4, 3}, rng);
    auto v = rand_tensor({3}, rng);
    auto r = rand_tensor({5, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return broadcast_add_channels(m, t); }, r), v);
  });
  add_case("elementwise/add", [](std::mt19937_64& rng) {
    auto a = rand_tensor({4, 4, 3}, rng);
    auto b = rand_tensor({4, 4, 3}, rng);
    auto r = rand_tensor({4, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return add(t, b); }, r), a);
  });
  add_case("elementwise/mul", [](std::mt19937_64& rng) {
    auto a = rand_tensor({4, 4, 3}, rng);
    auto b = rand_tensor({4, 4, 3}, rng);
    auto r = rand_tensor({4, 4, 3}, rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return mul(t, b); }, r), a);
  });
  add_case("scale", [](std::mt19937_64& rng) {
    auto x = rand_tensor({6, 3, 2}, rng);
    auto r = rand_tensor({6, 3, 2}, rng);
    std::uniform_real_distribution<double> fd(0.3, 2.0);
    const double f = fd(rng);
    return std::pair<Fn, DTensor>(
        project([=](const DTensor& t) { return scale(t, f); }, r), x);
  });
  add_case("sum", [](std::mt19937_64& rng) {
    auto x = rand_tensor({5, 5, 2}, rng);
    return std::pair<Fn, DTensor>([](const DTensor& t) { return sum(t); }, x);
  });
  add_case("global_avg_pool", [](std::mt19937_64& rng) {
    auto x = rand_tensor({6, 7, 4}, rng);
    auto r = rand_tensor({4}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return global_avg_pool(t); }, r), x);
  });
  add_case("reshape", [](std::mt19937_64& rng) {
    auto x = rand_tensor({4, 6, 2}, rng);
    auto r = rand_tensor({48}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return reshape(t, {48}); }, r), x);
  });
  add_case("renormalize_channels", [](std::mt19937_64& rng) {
    auto x = rand_tensor({4, 4, 5}, rng, 0.5, 1.5);
    auto r = rand_tensor({4, 4, 5}, rng);
    return std::pair<Fn, DTensor>(
        project([](const DTensor& t) { return renormalize_channels(t); }, r), x);
  });
  add_case("cross_entropy", [](std::mt19937_64& rng) {
    const int H = 4, W = 4, N = 5;
    auto x = rand_tensor({H, W, N}, rng, 0.05, 0.9);
    std::uniform_int_distribution<int> ld(0, N - 1);
    std::vector<uint8_t> labels(H * W);
    for (auto& l : labels) l = static_cast<uint8_t>(ld(rng));
    return std::pair<Fn, DTensor>(
        [labels](const DTensor& t) {
          return cross_entropy(t, std::span<const uint8_t>(labels));
        },
        x);
  });
  return cases;
}

}  // namespace

std::vector<GradCheckResult> gradient_check_suite(int instances, uint64_t seed) {
  std::vector<GradCheckResult> results;
  for (const auto& c : build_cases()) {
    std::mt19937_64 rng(seed ^ std::hash<std::string>{}(c.name));
    GradCheckResult res;
    res.name = c.name;
    res.instances = instances;
    for (int i = 0; i < instances; ++i) {
      auto [fn, x] = c.make(rng);
      res.worst_rel =
          std::max(res.worst_rel, finite_difference_check<double>(fn, x, kStep));
    }
    results.push_back(std::move(res));
  }
  return results;
}

GradCheckResult end_to_end_gradient_check(int probes, uint64_t seed) {
  ModelConfig cfg;
  cfg.input_h = 16;
  cfg.input_w = 16;
  cfg.widths = {4, 8, 8, 8, 8};
  cfg.num_classes = 3;
  cfg.attention_r = 4;
  cfg.attention_blocks = 1;
  cfg.validate();

  auto params = init_parameters<double>(cfg, seed);
  std::mt19937_64 rng(seed + 1);
  auto image = rand_tensor({cfg.input_h, cfg.input_w, cfg.in_channels}, rng, 0.0, 1.0);
  image.node->requires_grad = true;
  image.node->needs_grad = true;
  std::uniform_int_distribution<int> ld(0, cfg.num_classes - 1);
  std::vector<uint8_t> labels(static_cast<size_t>(cfg.input_h) * cfg.input_w);
  for (auto& l : labels) l = static_cast<uint8_t>(ld(rng));
  const int month = 4;

  auto loss_fn = [&](const TensorT<double>& img,
                     const ParameterSetT<double>& p) {
    auto out = model_forward(img, month, p, cfg);
    return cross_entropy(renormalize_channels(out.fused),
                         std::span<const uint8_t>(labels));
  };

  auto loss = loss_fn(image, params);
  backward(loss);

  // Flat view over (image, params...) for probe addressing.
  struct Slot {
    TensorT<double>* tensor;
    std::string name;
  };
  std::vector<Slot> slots{{&image, "image"}};
  for (auto& [name, p] : params) slots.push_back({&p, name});
  std::vector<size_t> offsets{0};
  for (const auto& s : slots)
    offsets.push_back(offsets.back() + static_cast<size_t>(s.tensor->size()));
  const size_t total = offsets.back();

  GradCheckResult res;
  res.name = "end_to_end";
  res.instances = probes;
  std::uniform_int_distribution<size_t> pick(0, total - 1);
  for (int i = 0; i < probes; ++i) {
    const size_t flat = pick(rng);
    const size_t slot =
        static_cast<size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                            offsets.begin()) - 1;
    const size_t idx = flat - offsets[slot];
    auto& t = *slots[slot].tensor;
    const double analytic = t.has_grad() ? t.grad()[idx] : 0.0;
    const double saved = t.data()[idx];

    t.mutable_data()[idx] = saved + kStep;
    const double fp = loss_fn(image, params).item();
    t.mutable_data()[idx] = saved - kStep;
    const double fm = loss_fn(image, params).item();
    t.mutable_data()[idx] = saved;

    const double central = (fp - fm) / (2.0 * kStep);
    const double denom = std::max({std::fabs(analytic), std::fabs(central), 1e-6});
    res.worst_rel = std::max(res.worst_rel, std::fabs(analytic - central) / denom);
  }
  return res;
}

}  // namespace lsenet
