#ifndef PTK_TOOLSCORE_HPP
#define PTK_TOOLSCORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bitset>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ptk::toolscore {

/// Canonical capability order: H, P, W, S, V, E, C, R, I.
enum class Capability : std::size_t {
  HostScanning,
  PasswordCracking,
  WebScanning,
  SocialEngineering,
  VulnerabilityDiscovery,
  Exploit,
  SessionControl,
  ReportGeneration,
  VisualizationInterface,
};

inline constexpr std::size_t kCapabilities = 9;
inline constexpr std::array<char, kCapabilities> kCapabilityKeys = {'H', 'P', 'W', 'S', 'V', 'E', 'C', 'R', 'I'};

/// Index of a capability key letter, or kCapabilities when unknown.
std::size_t capability_index(char key);

template <typename Scalar>
using CapabilityVector = Eigen::Matrix<Scalar, static_cast<int>(kCapabilities), 1>;

using Weights = CapabilityVector<double>;
using Features = std::bitset<kCapabilities>;

struct ToolProfile {
  std::string name;
  Features features;

  bool has(Capability c) const { return features.test(static_cast<std::size_t>(c)); }

  /// Feature indicator vector, for use in Eigen expressions.
  template <typename Scalar = double>
  CapabilityVector<Scalar> indicator() const {
    CapabilityVector<Scalar> v;
    for (std::size_t i = 0; i < kCapabilities; ++i) v(static_cast<Eigen::Index>(i)) = features.test(i) ? Scalar(1) : Scalar(0);
    return v;
  }

  bool operator==(const ToolProfile&) const = default;
};

/// Named weight assignment; non-negative and summing to 1 within 1e-9.
class WeightScheme {
public:
  WeightScheme(std::string name, const Weights& weights);

  const std::string& name() const noexcept { return name_; }
  const Weights& weights() const noexcept { return weights_; }
  double weight(Capability c) const { return weights_(static_cast<Eigen::Index>(c)); }

private:
  std::string name_;
  Weights weights_;
};

/// Weighted sum of a feature indicator against any 9-vector of weights.
template <typename Derived>
typename Derived::Scalar weighted_sum(const ToolProfile& t, const Eigen::MatrixBase<Derived>& weights) {
  using Scalar = typename Derived::Scalar;
  return t.indicator<Scalar>().dot(weights.derived());
}

/// Suitability score O in [0,1].
inline double score(const ToolProfile& t, const WeightScheme& s) {
  return std::clamp(weighted_sum(t, s.weights()), 0.0, 1.0);
}

/// Balanced, enterprise and redteam schemes, in that order.
std::vector<WeightScheme> builtin_schemes();
WeightScheme builtin_scheme(std::string_view name);

/// Feature-wise union; the name joins the operand names in sorted order.
ToolProfile combine(const ToolProfile& a, const ToolProfile& b);

struct RankedTool {
  std::string name;
  double score = 0.0;
};

/// Descending by score, ascending by name on ties.
std::vector<RankedTool> rank(const std::vector<ToolProfile>& catalog, const WeightScheme& s);

struct Recommendation {
  ToolProfile combined;
  std::vector<std::string> members;  // sorted
  double score = 0.0;
};

/// Best union over all catalog subsets of size 1..max_size (max_size <= 3).
/// Ties prefer fewer members, then the lexicographically smallest name list.
Recommendation recommend_combination(const std::vector<ToolProfile>& catalog, const WeightScheme& s,
                                     std::size_t max_size);

// JSON catalogs and schemes --------------------------------------------------

std::vector<ToolProfile> catalog_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const std::vector<ToolProfile>& catalog);

/// Nine capability keys with fractional values; "name" is optional.
WeightScheme scheme_from_json(const nlohmann::json& doc, std::string fallback_name = "custom");

/// Tool comparison table shipped with the toolkit, including the two
/// pre-combined rows.
const std::vector<ToolProfile>& builtin_catalog();

}  // namespace ptk::toolscore

#endif  // PTK_TOOLSCORE_HPP
