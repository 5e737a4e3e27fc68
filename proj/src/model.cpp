#include "lsenet/model.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace lsenet {

namespace {
using nlohmann::json;
}

std::string seasonal_name(SeasonalMode m) {
  switch (m) {
    case SeasonalMode::Month: return "month";
    case SeasonalMode::Season: return "season";
    default: return "off";
  }
}

std::string location_name(LocationMode m) {
  switch (m) {
    case LocationMode::Pe2d: return "pe2d";
    case LocationMode::CoordConv: return "coordconv";
    default: return "off";
  }
}

SeasonalMode parse_seasonal(const std::string& s) {
  if (s == "month") return SeasonalMode::Month;
  if (s == "season") return SeasonalMode::Season;
  if (s == "off") return SeasonalMode::Off;
  throw std::invalid_argument("unknown seasonal mode: " + s);
}

LocationMode parse_location(const std::string& s) {
  if (s == "pe2d") return LocationMode::Pe2d;
  if (s == "coordconv") return LocationMode::CoordConv;
  if (s == "off") return LocationMode::Off;
  throw std::invalid_argument("unknown location mode: " + s);
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("ModelConfig: in_channels < 1");
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes < 2");
  if (widths.empty()) throw std::invalid_argument("ModelConfig: widths empty");
  for (size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 2 || widths[i] % 2 != 0)
      throw std::invalid_argument("ModelConfig: stage widths must be even and >= 2");
    if (i > 0 && widths[i] != widths[i - 1] && widths[i] != 2 * widths[i - 1])
      throw std::invalid_argument(
          "ModelConfig: widths must be non-decreasing by factor 1 or 2");
  }
  const int down = 1 << (stages() - 1);
  if (input_h <= 0 || input_w <= 0 || input_h % down != 0 || input_w % down != 0)
    throw std::invalid_argument(
        "ModelConfig: input extents must be divisible by 2^(stages-1)");
  if (attention_enabled) {
    if (attention_r < 1) throw std::invalid_argument("ModelConfig: attention_r < 1");
    if (input_h % attention_r != 0 || input_w % attention_r != 0)
      throw std::invalid_argument(
          "ModelConfig: input extents must be divisible by attention_r");
    if (attention_blocks < 0)
      throw std::invalid_argument("ModelConfig: attention_blocks < 0");
    if (location_mode == LocationMode::Pe2d && head_channels() % 4 != 0)
      throw std::invalid_argument(
          "ModelConfig: pe2d needs head channel count divisible by 4");
  }
}

std::vector<std::pair<std::string, std::vector<int>>> ModelConfig::parameter_shapes()
    const {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  const int slen = seasonal_len();
  const int n = stages();

  auto add_block = [&](const std::string& prefix, int cin, int c) {
    out.emplace_back(prefix + ".conv1.weight", std::vector<int>{3, 3, cin, c});
    out.emplace_back(prefix + ".conv1.bias", std::vector<int>{c});
    out.emplace_back(prefix + ".conv2.weight", std::vector<int>{3, 3, c, c});
    out.emplace_back(prefix + ".conv2.bias", std::vector<int>{c});
    if (csu_enabled) {
      out.emplace_back(prefix + ".csu.fc1.weight", std::vector<int>{cin, c / 2});
      out.emplace_back(prefix + ".csu.fc1.bias", std::vector<int>{c / 2});
      out.emplace_back(prefix + ".csu.fc2.weight",
                       std::vector<int>{c / 2 + slen, c});
      out.emplace_back(prefix + ".csu.fc2.bias", std::vector<int>{c});
    }
  };

  for (int i = 1; i <= n; ++i)
    add_block("e" + std::to_string(i), i == 1 ? in_channels : widths[i - 2],
              widths[i - 1]);
  for (int s = n - 1; s >= 1; --s)
    add_block("d" + std::to_string(s), widths[s] + widths[s - 1], widths[s - 1]);

  const int C = head_channels();
  const int N = num_classes;
  out.emplace_back("head.det.weight", std::vector<int>{1, 1, C, N});
  out.emplace_back("head.det.bias", std::vector<int>{N});
  if (attention_enabled) {
    out.emplace_back("head.att.conv1.weight", std::vector<int>{3, 3, C, C});
    out.emplace_back("head.att.conv1.bias", std::vector<int>{C});
    if (location_mode == LocationMode::CoordConv) {
      out.emplace_back("head.att.loc.weight", std::vector<int>{1, 1, C + 2, C});
      out.emplace_back("head.att.loc.bias", std::vector<int>{C});
    }
    for (int b = 1; b <= attention_blocks; ++b) {
      out.emplace_back("head.att.block" + std::to_string(b) + ".weight",
                       std::vector<int>{3, 3, C, C});
      out.emplace_back("head.att.block" + std::to_string(b) + ".bias",
                       std::vector<int>{C});
    }
    out.emplace_back("head.att.out.weight", std::vector<int>{1, 1, C, N});
    out.emplace_back("head.att.out.bias", std::vector<int>{N});
  }
  return out;
}

std::string ModelConfig::to_json() const {
  json j;
  j["input_h"] = input_h;
  j["input_w"] = input_w;
  j["in_channels"] = in_channels;
  j["widths"] = widths;
  j["num_classes"] = num_classes;
  j["attention_r"] = attention_r;
  j["seasonal_mode"] = seasonal_name(seasonal_mode);
  j["location_mode"] = location_name(location_mode);
  j["attention_blocks"] = attention_blocks;
  j["csu_enabled"] = csu_enabled;
  j["attention_enabled"] = attention_enabled;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.input_h = j.at("input_h").get<int>();
  c.input_w = j.at("input_w").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.num_classes = j.at("num_classes").get<int>();
  c.attention_r = j.at("attention_r").get<int>();
  c.seasonal_mode = parse_seasonal(j.at("seasonal_mode").get<std::string>());
  c.location_mode = parse_location(j.at("location_mode").get<std::string>());
  c.attention_blocks = j.at("attention_blocks").get<int>();
  c.csu_enabled = j.at("csu_enabled").get<bool>();
  c.attention_enabled = j.at("attention_enabled").get<bool>();
  return c;
}

std::string ModelConfig::hash() const {
  // FNV-1a over the canonical JSON encoding
  const std::string s = to_json();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace lsenet
