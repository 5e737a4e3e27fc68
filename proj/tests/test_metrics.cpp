#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lsenet/io.hpp"
#include "lsenet/metrics.hpp"

using namespace lsenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("lsenet_metrics_" + name);
}

std::vector<uint8_t> random_mask(size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, classes - 1);
  std::vector<uint8_t> out(n);
  for (auto& v : out) v = static_cast<uint8_t>(dist(rng));
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("accumulate matches a nested-loop tally") {
  std::mt19937_64 rng(1);
  const int K = 5;
  const auto pred = random_mask(400, K, rng);
  const auto truth = random_mask(400, K, rng);
  ConfusionMatrix cm(K);
  cm.accumulate(pred, truth);

  for (int t = 0; t < K; ++t)
    for (int p = 0; p < K; ++p) {
      int64_t n = 0;
      for (size_t i = 0; i < pred.size(); ++i)
        if (truth[i] == t && pred[i] == p) ++n;
      CHECK(cm.at(t, p) == n);
    }
  CHECK(cm.total() == 400);

  std::vector<uint8_t> bad = {5};
  std::vector<uint8_t> ok = {0};
  CHECK_THROWS_AS(cm.accumulate(bad, ok), std::invalid_argument);
  CHECK_THROWS_AS(cm.accumulate(ok, std::span<const uint8_t>(pred)),
                  std::invalid_argument);
}

TEST_CASE("confusion matrices add") {
  std::mt19937_64 rng(2);
  const auto p1 = random_mask(100, 4, rng), t1 = random_mask(100, 4, rng);
  const auto p2 = random_mask(100, 4, rng), t2 = random_mask(100, 4, rng);
  ConfusionMatrix a(4), b(4), both(4);
  a.accumulate(p1, t1);
  b.accumulate(p2, t2);
  both.accumulate(p1, t1);
  both.accumulate(p2, t2);
  a += b;
  CHECK(a.counts == both.counts);
  ConfusionMatrix wrong(5);
  CHECK_THROWS_AS(a += wrong, std::invalid_argument);
}

TEST_CASE("IoU spot value: TP=2, FP=1, FN=1 gives 0.5") {
  ConfusionMatrix cm(2);
  cm.at(1, 1) = 2;  // TP
  cm.at(0, 1) = 1;  // FP
  cm.at(1, 0) = 1;  // FN
  cm.at(0, 0) = 10;
  const auto iou = iou_per_class(cm);
  REQUIRE(iou[1].has_value());
  CHECK(*iou[1] == doctest::Approx(0.5));
  CHECK(*iou[0] == doctest::Approx(10.0 / 12.0));
}

TEST_CASE("mIoU averages defined classes and excludes absent ones") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 5;            // IoU 1.0
  cm.at(1, 1) = 1;
  cm.at(1, 0) = 1;            // IoU 0.5 (the FN counts into class 0's column)
  // class 2 never appears
  const auto iou = iou_per_class(cm);
  CHECK_FALSE(iou[2].has_value());
  CHECK(undefined_class_count(cm) == 1);
  // class 0: diag 5, row 5, col 6 -> 5/6
  CHECK(*iou[0] == doctest::Approx(5.0 / 6.0));
  CHECK(*iou[1] == doctest::Approx(0.5));
  CHECK(*miou(cm) == doctest::Approx((5.0 / 6.0 + 0.5) / 2.0));

  ConfusionMatrix diag(4);
  for (int i = 0; i < 4; ++i) diag.at(i, i) = 3;
  CHECK(*miou(diag) == doctest::Approx(1.0));

  ConfusionMatrix empty(4);
  CHECK_FALSE(miou(empty).has_value());
  CHECK(undefined_class_count(empty) == 4);
}

TEST_CASE("IoU agrees with a pixel-set oracle on random masks") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 5);
    const size_t n = 1 + rng() % 256;
    const auto pred = random_mask(n, K, rng);
    const auto truth = random_mask(n, K, rng);
    ConfusionMatrix cm(K);
    cm.accumulate(pred, truth);
    const auto iou = iou_per_class(cm);
    for (int c = 0; c < K; ++c) {
      int64_t inter = 0, uni = 0;
      for (size_t i = 0; i < n; ++i) {
        const bool p = pred[i] == c, t = truth[i] == c;
        inter += p && t;
        uni += p || t;
      }
      if (uni == 0) {
        CHECK_FALSE(iou[c].has_value());
      } else {
        REQUIRE(iou[c].has_value());
        CHECK(*iou[c] == static_cast<double>(inter) / static_cast<double>(uni));
      }
    }
  }
}

TEST_CASE("binary collapse maps 0 to 0 and everything else to 1") {
  const std::vector<uint8_t> mask = {0, 3, 7, 11, 0, 1};
  const auto b = binary_collapse(mask);
  CHECK(b == std::vector<uint8_t>{0, 1, 1, 1, 0, 1});
}

TEST_CASE("binary collapse commutes with accumulation") {
  std::mt19937_64 rng(4);
  const auto pred = random_mask(300, 6, rng);
  const auto truth = random_mask(300, 6, rng);
  ConfusionMatrix direct(2);
  direct.accumulate(binary_collapse(pred), binary_collapse(truth));

  ConfusionMatrix multi(6);
  multi.accumulate(pred, truth);
  ConfusionMatrix folded(2);
  for (int t = 0; t < 6; ++t)
    for (int p = 0; p < 6; ++p)
      folded.at(t > 0, p > 0) += multi.at(t, p);
  CHECK(direct.counts == folded.counts);
}

TEST_CASE("PGM export: header and payload bytes") {
  const auto path = temp_file("zeros.pgm");
  std::vector<float> grid(6, 0.f);
  export_heatmap_pgm(path, grid.data(), 2, 3);
  const auto raw = read_file(path);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(raw.size() == header.size() + 6);
  CHECK(raw.substr(0, header.size()) == header);
  for (size_t i = header.size(); i < raw.size(); ++i) CHECK(raw[i] == '\0');

  std::vector<float> ones(6, 1.f);
  export_heatmap_pgm(path, ones.data(), 2, 3);
  const auto raw2 = read_file(path);
  for (size_t i = header.size(); i < raw2.size(); ++i)
    CHECK(static_cast<unsigned char>(raw2[i]) == 255);

  std::vector<float> half(6, 0.5f);
  export_heatmap_pgm(path, half.data(), 2, 3);
  const auto raw3 = read_file(path);
  CHECK(static_cast<unsigned char>(raw3[header.size()]) == 128);
  fs::remove(path);
}

TEST_CASE("CSV export parses back to the original values") {
  const auto path = temp_file("grid.csv");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  const int h = 4, w = 5;
  std::vector<float> grid(static_cast<size_t>(h) * w);
  for (auto& v : grid) v = dist(rng);
  export_heatmap_csv(path, grid.data(), h, w);

  std::ifstream in(path);
  std::string line;
  int r = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    int c = 0;
    while (std::getline(ls, cell, ',')) {
      CHECK(std::fabs(std::stod(cell) - grid[static_cast<size_t>(r) * w + c]) < 1e-6);
      ++c;
    }
    CHECK(c == w);
    ++r;
  }
  CHECK(r == h);
  fs::remove(path);
}

TEST_CASE("text and json reports agree to two decimals") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 70;
  cm.at(0, 1) = 10;
  cm.at(1, 1) = 15;
  cm.at(1, 0) = 5;
  // class 2 absent
  const auto report = make_report(cm, default_class_names(3));
  const auto text = report_text(report);
  const auto j = nlohmann::json::parse(report_json(report));

  // background IoU = 70 / (80 + 75 - 70), front1 = 15 / (20 + 25 - 15)
  CHECK(j["per_class"]["background"].get<double>() ==
        doctest::Approx(100.0 * 70 / 85).epsilon(1e-4));
  CHECK(j["per_class"]["front1"].get<double>() ==
        doctest::Approx(100.0 * 15 / 30).epsilon(1e-4));
  CHECK(j["per_class"]["front2"].is_null());
  CHECK(j["excluded_classes"].get<int>() == 1);

  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", j["per_class"]["background"].get<double>());
  CHECK(text.find(std::string("background") + "  " + buf) != std::string::npos);
  std::snprintf(buf, sizeof buf, "%.2f", j["miou"].get<double>());
  CHECK(text.find(std::string("mIoU") + "        " + buf) != std::string::npos);
  CHECK(text.find("--") != std::string::npos);  // the absent class
  CHECK(text.find("1 absent classes excluded") != std::string::npos);
}

TEST_CASE("binary report rows") {
  const auto names = default_class_names(2);
  REQUIRE(names.size() == 2);
  CHECK(names[0] == "background");
  CHECK(names[1] == "front");
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 4;
  cm.at(1, 1) = 4;
  const auto text = report_text(make_report(cm, names));
  CHECK(text.find("background") != std::string::npos);
  CHECK(text.find("front") != std::string::npos);
  CHECK(text.find("mIoU") != std::string::npos);
  CHECK(text.find("100.00") != std::string::npos);

  CHECK_THROWS_AS(make_report(cm, default_class_names(3)), std::invalid_argument);
}
