#include "ptk/toolscore.hpp"

#include "ptk/error.hpp"

#include <cmath>
#include <optional>
#include <set>
#include <tuple>

namespace ptk::toolscore {

namespace {

constexpr double kWeightSumTolerance = 1e-9;

// Tool comparison table: capability letters per tool.
constexpr const char* kBuiltinCatalog = R"([
  {"name": "Nmap",               "features": {"H": true, "R": true}},
  {"name": "Zenmap",             "features": {"H": true, "R": true, "I": true}},
  {"name": "Masscan",            "features": {"H": true, "R": true}},
  {"name": "Shodan",             "features": {"H": true, "V": true, "I": true}},
  {"name": "Hydra",              "features": {"P": true}},
  {"name": "SQLMap",             "features": {"W": true, "V": true, "E": true, "R": true}},
  {"name": "WebInspect+Safe3SI", "features": {"W": true, "V": true, "E": true, "R": true, "I": true}},
  {"name": "SET",                "features": {"S": true}},
  {"name": "Nessus",             "features": {"H": true, "W": true, "V": true, "R": true, "I": true}},
  {"name": "OpenVAS",            "features": {"H": true, "W": true, "V": true, "R": true, "I": true}},
  {"name": "Metasploit",         "features": {"H": true, "P": true, "V": true, "E": true, "C": true, "R": true, "I": true}},
  {"name": "BeEF",               "features": {"W": true, "S": true, "V": true, "E": true, "C": true, "I": true}},
  {"name": "Nessus & Metasploit","features": {"H": true, "P": true, "W": true, "V": true, "E": true, "I": true}},
  {"name": "BeEF & Metasploit",  "features": {"H": true, "P": true, "W": true, "S": true, "V": true, "E": true, "C": true, "I": true}}
])";

Weights weights_of(std::initializer_list<std::pair<char, double>> entries) {
  Weights w = Weights::Zero();
  for (const auto& [key, value] : entries) w(static_cast<Eigen::Index>(capability_index(key))) = value;
  return w;
}

bool better(const Recommendation& a, const Recommendation& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
  return a.members < b.members;
}

}  // namespace

std::size_t capability_index(char key) {
  for (std::size_t i = 0; i < kCapabilities; ++i) {
    if (kCapabilityKeys[i] == key) return i;
  }
  return kCapabilities;
}

WeightScheme::WeightScheme(std::string name, const Weights& weights) : name_(std::move(name)), weights_(weights) {
  if ((weights_.array() < 0.0).any() || weights_.hasNaN()) {
    throw Error("weight scheme '" + name_ + "': negative weight");
  }
  if (std::abs(weights_.sum() - 1.0) > kWeightSumTolerance) {
    throw Error("weight scheme '" + name_ + "': weights sum to " + std::to_string(weights_.sum()) + ", expected 1");
  }
}

std::vector<WeightScheme> builtin_schemes() {
  const double enterprise_other = 0.07 / 3.0;
  const double redteam_other = 0.10 / 3.0;
  return {
      WeightScheme("balanced", weights_of({{'V', 0.20}, {'E', 0.18}, {'W', 0.15}, {'H', 0.12}, {'P', 0.10},
                                           {'C', 0.08}, {'R', 0.07}, {'S', 0.06}, {'I', 0.04}})),
      WeightScheme("enterprise", weights_of({{'V', 0.25}, {'W', 0.20}, {'R', 0.15}, {'H', 0.15}, {'P', 0.10},
                                             {'E', 0.08}, {'S', enterprise_other}, {'C', enterprise_other},
                                             {'I', enterprise_other}})),
      WeightScheme("redteam", weights_of({{'E', 0.25}, {'S', 0.20}, {'C', 0.15}, {'V', 0.15}, {'P', 0.10},
                                          {'I', 0.05}, {'H', redteam_other}, {'W', redteam_other},
                                          {'R', redteam_other}})),
  };
}

WeightScheme builtin_scheme(std::string_view name) {
  for (auto& s : builtin_schemes()) {
    if (s.name() == name) return s;
  }
  throw Error("unknown weight scheme '" + std::string(name) + "'");
}

ToolProfile combine(const ToolProfile& a, const ToolProfile& b) {
  const auto& [first, second] = std::minmax(a.name, b.name);
  return {first + " & " + second, a.features | b.features};
}

std::vector<RankedTool> rank(const std::vector<ToolProfile>& catalog, const WeightScheme& s) {
  if (catalog.empty()) throw Error("cannot rank an empty catalog");
  std::vector<RankedTool> out;
  out.reserve(catalog.size());
  for (const auto& t : catalog) out.push_back({t.name, score(t, s)});
  std::sort(out.begin(), out.end(), [](const RankedTool& a, const RankedTool& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.name < b.name;
  });
  return out;
}

Recommendation recommend_combination(const std::vector<ToolProfile>& catalog, const WeightScheme& s,
                                     std::size_t max_size) {
  if (max_size < 1 || max_size > 3) throw Error("recommend_combination: max_size must be in [1,3]");
  if (catalog.empty()) throw Error("cannot recommend from an empty catalog");

  std::vector<ToolProfile> tools = catalog;
  std::sort(tools.begin(), tools.end(), [](const ToolProfile& a, const ToolProfile& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < tools.size(); ++i) {
    if (tools[i].name == tools[i - 1].name) throw Error("duplicate tool name '" + tools[i].name + "'");
  }

  std::optional<Recommendation> best;
  auto consider = [&](std::initializer_list<std::size_t> idx) {
    Recommendation r;
    for (std::size_t i : idx) {
      r.combined.features |= tools[i].features;
      r.members.push_back(tools[i].name);
    }
    for (std::size_t k = 0; k < r.members.size(); ++k) r.combined.name += (k ? " & " : "") + r.members[k];
    r.score = score(r.combined, s);
    if (!best || better(r, *best)) best = std::move(r);
  };

  const std::size_t n = tools.size();
  for (std::size_t i = 0; i < n; ++i) {
    consider({i});
    if (max_size < 2) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      consider({i, j});
      if (max_size < 3) continue;
      for (std::size_t k = j + 1; k < n; ++k) consider({i, j, k});
    }
  }
  return *best;
}

std::vector<ToolProfile> catalog_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw SchemaError("", "tool catalog must be an array");
  std::vector<ToolProfile> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = "/" + std::to_string(i);
    const auto& j = doc[i];
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
      throw SchemaError(path + "/name", "expected a string");
    }
    ToolProfile t;
    t.name = j["name"].get<std::string>();
    if (!names.insert(t.name).second) throw SchemaError(path + "/name", "duplicate tool name '" + t.name + "'");
    const auto features = j.value("features", nlohmann::json::object());
    if (!features.is_object()) throw SchemaError(path + "/features", "expected an object");
    for (const auto& [key, value] : features.items()) {
      const std::size_t idx = key.size() == 1 ? capability_index(key[0]) : kCapabilities;
      if (idx == kCapabilities) throw SchemaError(path + "/features/" + key, "unknown capability key");
      if (!value.is_boolean()) throw SchemaError(path + "/features/" + key, "expected a boolean");
      t.features.set(idx, value.get<bool>());
    }
    out.push_back(std::move(t));
  }
  return out;
}

nlohmann::json to_json(const std::vector<ToolProfile>& catalog) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : catalog) {
    nlohmann::json features = nlohmann::json::object();
    for (std::size_t i = 0; i < kCapabilities; ++i) {
      if (t.features.test(i)) features[std::string(1, kCapabilityKeys[i])] = true;
    }
    out.push_back({{"name", t.name}, {"features", features}});
  }
  return out;
}

WeightScheme scheme_from_json(const nlohmann::json& doc, std::string fallback_name) {
  if (!doc.is_object()) throw SchemaError("", "weight scheme must be an object");
  std::string name = std::move(fallback_name);
  Weights w = Weights::Zero();
  for (const auto& [key, value] : doc.items()) {
    if (key == "name") {
      if (!value.is_string()) throw SchemaError("/name", "expected a string");
      name = value.get<std::string>();
      continue;
    }
    const std::size_t idx = key.size() == 1 ? capability_index(key[0]) : kCapabilities;
    if (idx == kCapabilities) throw SchemaError("/" + key, "unknown capability key");
    if (!value.is_number()) throw SchemaError("/" + key, "expected a number");
    w(static_cast<Eigen::Index>(idx)) = value.get<double>();
  }
  return WeightScheme(std::move(name), w);
}

const std::vector<ToolProfile>& builtin_catalog() {
  static const std::vector<ToolProfile> catalog = catalog_from_json(nlohmann::json::parse(kBuiltinCatalog));
  return catalog;
}

}  // namespace ptk::toolscore
