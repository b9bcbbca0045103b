#ifndef PTK_BELIEF_HPP
#define PTK_BELIEF_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace ptk::belief {

using Probabilities = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Raw entropy arithmetic (bits, 0 log 0 = 0)
// ---------------------------------------------------------------------------

/// -p log2 p, with the 0 log 0 = 0 convention.
template <typename Scalar>
Scalar surprisal_term(Scalar p) {
  if (p <= Scalar(0) || p >= Scalar(1)) return Scalar(0);
  return -p * std::log2(p);
}

/// Entropy in bits of a single Bernoulli variable.
template <typename Scalar>
Scalar binary_entropy(Scalar p) {
  return surprisal_term(p) + surprisal_term(Scalar(1) - p);
}

/// Shannon entropy in bits of a categorical distribution.
template <typename Derived>
typename Derived::Scalar shannon_entropy(const Eigen::MatrixBase<Derived>& dist) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index i = 0; i < dist.size(); ++i) h += surprisal_term(dist(i));
  return h;
}

/// Sum of binary entropies of independent Bernoulli components.
template <typename Derived>
typename Derived::Scalar bernoulli_entropy(const Eigen::MatrixBase<Derived>& probs) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index i = 0; i < probs.size(); ++i) h += binary_entropy(probs(i));
  return h;
}

/// Entropy values are accumulated on a fixed grid of 2^-36 bits so that sums
/// and differences are exact in double precision below 2^16 bits. A strictly
/// positive term never rounds to zero.
inline constexpr double kEntropyGrid = 1.0 / 68719476736.0;  // 2^-36

inline double quantize_bits(double bits) {
  if (!(bits > 0.0)) return 0.0;
  const double q = std::nearbyint(bits / kEntropyGrid) * kEntropyGrid;
  return q < kEntropyGrid ? kEntropyGrid : q;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// The three Bernoulli information groups of a host.
enum class Group { Ports, Apps, Protections };

const char* to_string(Group g);

struct HostBelief {
  std::string id;
  std::vector<std::string> os_candidates;
  Probabilities os;           // categorical over os_candidates
  Probabilities ports;        // P(open)
  Probabilities apps;         // P(present)
  Probabilities protections;  // P(present)
  bool controlled = false;

  const Probabilities& group(Group g) const;
  Probabilities& group(Group g);

  bool os_degenerate() const;
  bool degenerate(Group g, std::size_t index) const;

  /// Throws ptk::Error when an invariant is broken.
  void validate() const;

  /// Exact component-wise equality.
  friend bool operator==(const HostBelief& a, const HostBelief& b);
};

/// Initial probabilities for unobserved components.
struct PriorPolicy {
  double bernoulli = 0.5;  // max-uncertainty default
};

HostBelief new_host_belief(std::string host_id, std::vector<std::string> os_candidates,
                           std::size_t n_ports, std::size_t n_apps, std::size_t n_protections,
                           PriorPolicy prior = {});

/// Hosts kept sorted by id; ids unique.
class NetworkBelief {
public:
  NetworkBelief() = default;
  explicit NetworkBelief(std::vector<HostBelief> hosts);

  const std::vector<HostBelief>& hosts() const noexcept { return hosts_; }
  std::size_t size() const noexcept { return hosts_.size(); }
  bool empty() const noexcept { return hosts_.empty(); }

  const HostBelief* find(const std::string& host_id) const;
  const HostBelief& at(const std::string& host_id) const;

  /// Copy with one host replaced (matched by id).
  NetworkBelief with_host(HostBelief host) const;

  bool operator==(const NetworkBelief&) const = default;

private:
  std::vector<HostBelief> hosts_;
};

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

struct OsIdentified {
  std::size_t index = 0;
  bool operator==(const OsIdentified&) const = default;
};

struct ComponentState {
  Group group = Group::Ports;
  std::size_t index = 0;
  bool present = false;  // "open" for ports
  bool operator==(const ComponentState&) const = default;
};

/// Actual host state, used to collapse a belief on control.
struct GroundTruth {
  std::size_t os = 0;
  std::vector<bool> ports;
  std::vector<bool> apps;
  std::vector<bool> protections;
  bool operator==(const GroundTruth&) const = default;
};

struct ControlGained {
  std::optional<GroundTruth> ground;  // MAP collapse when absent
  bool operator==(const ControlGained&) const = default;
};

struct NoEffect {
  bool operator==(const NoEffect&) const = default;
};

using ObservationKind = std::variant<OsIdentified, ComponentState, ControlGained, NoEffect>;

struct Observation {
  std::string host_id;
  ObservationKind kind;

  static Observation os_identified(std::string host, std::size_t index);
  static Observation port_state(std::string host, std::size_t index, bool open);
  static Observation app_state(std::string host, std::size_t index, bool present);
  static Observation protection_state(std::string host, std::size_t index, bool present);
  static Observation control_gained(std::string host, std::optional<GroundTruth> ground = {});
  static Observation no_effect(std::string host);

  bool operator==(const Observation&) const = default;
};

// ---------------------------------------------------------------------------
// Entropy and information gain
// ---------------------------------------------------------------------------

/// Host information entropy in bits: OS Shannon entropy plus the binary
/// entropies of the port, application and protection groups. Zero for a
/// controlled host.
double host_entropy(const HostBelief& b);

/// Sum of host entropies.
double network_entropy(const NetworkBelief& nb);

/// Certainty-collapse update. The input is not modified.
NetworkBelief apply_observation(const NetworkBelief& nb, const Observation& obs);

/// network_entropy(before) - network_entropy(after). Host id sets must match.
double information_gain(const NetworkBelief& before, const NetworkBelief& after);

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

nlohmann::json to_json(const NetworkBelief& nb);
NetworkBelief network_belief_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const Observation& obs);

}  // namespace ptk::belief

#endif  // PTK_BELIEF_HPP
