#ifndef PTK_PLANNER_HPP
#define PTK_PLANNER_HPP

#include "ptk/belief.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace ptk::planner {

using belief::NetworkBelief;
using belief::Observation;

struct Exploit {
  std::size_t port = 0;  // index into the host's port vector
  std::string vuln;
};

struct SimHost {
  std::string id;
  std::vector<std::string> os_candidates;
  std::size_t true_os = 0;
  std::vector<bool> ports;  // true = open
  std::vector<bool> apps;
  std::vector<bool> protections;
  std::vector<Exploit> exploits;    // pairs that grant control when the port is open
  std::vector<std::string> exposes;  // hosts that become reachable once this one is controlled

  belief::GroundTruth ground_truth() const;
};

/// Ground truth the environment answers from. Hosts sorted by id.
struct SimNetwork {
  std::vector<SimHost> hosts;
  std::vector<std::string> reachable;  // initial foothold view

  const SimHost& host(const std::string& id) const;
};

/// Parses and validates a network-spec document. Errors are SchemaError with
/// the path of the offending field.
SimNetwork load_sim(const nlohmann::json& doc);

/// Max-uncertainty belief over the sim's declared components.
NetworkBelief initial_belief(const SimNetwork& sim);

/// Hosts currently visible: the initial set plus anything exposed by a
/// controlled host, transitively.
std::vector<std::string> reachable_hosts(const SimNetwork& sim, const NetworkBelief& nb);

enum class ActionKind { OsScan, PortScan, AppProbe, ProtectionProbe, Exploit };

const char* to_string(ActionKind k);

struct Action {
  std::string host_id;
  ActionKind kind = ActionKind::OsScan;
  std::size_t index = 0;  // component index; port index for exploits
  std::string vuln;       // exploits only
  double cost = 1.0;

  /// Canonical (host_id, kind, index, vuln) order used for every tie-break.
  friend bool operator<(const Action& a, const Action& b);
  friend bool operator==(const Action& a, const Action& b);
};

nlohmann::json to_json(const Action& a);

/// Every action the sim could ever offer, in canonical order.
std::vector<Action> action_space(const SimNetwork& sim);

/// Legal actions on reachable hosts in canonical order. Scans of degenerate
/// components and exploits on controlled hosts are excluded.
std::vector<Action> available_actions(const SimNetwork& sim, const NetworkBelief& nb);

/// Ground-truth readout for a legal action.
Observation execute_action(const SimNetwork& sim, const NetworkBelief& nb, const Action& a);

struct StepChoice {
  Action action;
  double gain = 0.0;
};

/// Maximal-gain action (earliest in canonical order on ties), or nullopt when
/// nothing is available.
std::optional<StepChoice> greedy_step(const SimNetwork& sim, const NetworkBelief& nb);

// ---------------------------------------------------------------------------
// Tabular Q-learning
// ---------------------------------------------------------------------------

struct QConfig {
  std::size_t episodes = 500;
  double alpha = 0.1;
  double gamma = 0.9;
  double epsilon = 0.2;
  std::uint64_t seed = 0;
  std::size_t max_steps_per_episode = 0;  // 0: twice the action-space size
};

/// State = per-component knowledge mask plus controlled flags, as a '0'/'1'
/// string in canonical host order.
std::string knowledge_key(const NetworkBelief& nb);

class QTable {
public:
  QTable() = default;
  explicit QTable(std::vector<Action> actions) : actions_(std::move(actions)) {}

  const std::vector<Action>& actions() const noexcept { return actions_; }
  const std::map<std::string, Eigen::VectorXd>& rows() const noexcept { return rows_; }

  std::optional<std::size_t> action_index(const Action& a) const;

  double value(const std::string& state, std::size_t action) const;
  Eigen::VectorXd& row(const std::string& state);

  /// Highest-valued candidate; ties resolve to the earliest candidate.
  std::size_t best_of(const std::string& state, const std::vector<std::size_t>& candidates) const;

  std::size_t nonzero_entries() const;

  bool operator==(const QTable& other) const;

private:
  std::vector<Action> actions_;
  std::map<std::string, Eigen::VectorXd> rows_;
};

QTable q_train(const SimNetwork& sim, const QConfig& config);

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct GreedyPolicy {};
using Policy = std::variant<GreedyPolicy, QTable>;

enum class Terminal { AllControlled, StepLimit, NoActions };

const char* to_string(Terminal t);

struct TraceStep {
  Action action;
  Observation observation;
  double gain = 0.0;
  double entropy_after = 0.0;
};

struct EpisodeTrace {
  double initial_entropy = 0.0;
  std::vector<TraceStep> steps;
  Terminal terminal = Terminal::NoActions;

  double final_entropy() const { return steps.empty() ? initial_entropy : steps.back().entropy_after; }
  double total_gain() const;
};

EpisodeTrace run_episode(const SimNetwork& sim, const Policy& policy, std::size_t max_steps);

/// One JSON object per step, newline-terminated.
std::string to_json_lines(const EpisodeTrace& trace);

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

struct SequencePlan {
  std::vector<Action> actions;
  double gain = 0.0;
};

inline constexpr std::size_t kOracleMaxActions = 12;
inline constexpr std::size_t kOracleMaxDepth = 6;

/// All action sequences of length <= depth; the best has maximal cumulative
/// gain, then fewest steps, then is lexicographically first.
SequencePlan exhaustive_best(const SimNetwork& sim, std::size_t depth);

}  // namespace ptk::planner

#endif  // PTK_PLANNER_HPP
