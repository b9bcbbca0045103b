#include "ptk/planner.hpp"

#include "ptk/error.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace ptk::planner {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(path + "/" + key, "missing field");
  return j[key];
}

std::vector<bool> bool_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of booleans");
  std::vector<bool> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_boolean()) throw SchemaError(path + "/" + std::to_string(i), "expected a boolean");
    out.push_back(j[i].get<bool>());
  }
  return out;
}

std::size_t index_field(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw SchemaError(path, "expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

SimHost parse_host(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  SimHost h;
  const auto& id = require(j, "id", path);
  if (!id.is_string() || id.get<std::string>().empty()) throw SchemaError(path + "/id", "expected a non-empty string");
  h.id = id.get<std::string>();

  const auto& cands = require(j, "os_candidates", path);
  if (!cands.is_array() || cands.empty()) {
    throw SchemaError(path + "/os_candidates", "expected a non-empty array of strings");
  }
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (!cands[i].is_string()) throw SchemaError(path + "/os_candidates/" + std::to_string(i), "expected a string");
    h.os_candidates.push_back(cands[i].get<std::string>());
  }
  h.true_os = index_field(require(j, "true_os", path), path + "/true_os");
  if (h.true_os >= h.os_candidates.size()) throw SchemaError(path + "/true_os", "index out of range");

  const auto ports = j.value("ports", json::array());
  if (!ports.is_array()) throw SchemaError(path + "/ports", "expected an array");
  for (std::size_t i = 0; i < ports.size(); ++i) {
    const std::string ppath = path + "/ports/" + std::to_string(i);
    const auto& open = require(ports[i], "open", ppath);
    if (!open.is_boolean()) throw SchemaError(ppath + "/open", "expected a boolean");
    h.ports.push_back(open.get<bool>());
  }
  h.apps = bool_list(j.value("apps", json::array()), path + "/apps");
  h.protections = bool_list(j.value("protections", json::array()), path + "/protections");

  const auto exploits = j.value("exploits", json::array());
  if (!exploits.is_array()) throw SchemaError(path + "/exploits", "expected an array");
  for (std::size_t i = 0; i < exploits.size(); ++i) {
    const std::string epath = path + "/exploits/" + std::to_string(i);
    Exploit e;
    e.port = index_field(require(exploits[i], "port", epath), epath + "/port");
    if (e.port >= h.ports.size()) throw SchemaError(epath + "/port", "port index out of range");
    const auto& vuln = require(exploits[i], "vuln", epath);
    if (!vuln.is_string()) throw SchemaError(epath + "/vuln", "expected a string");
    e.vuln = vuln.get<std::string>();
    h.exploits.push_back(std::move(e));
  }
  std::sort(h.exploits.begin(), h.exploits.end(),
            [](const Exploit& a, const Exploit& b) { return std::tie(a.port, a.vuln) < std::tie(b.port, b.vuln); });

  const auto exposes = j.value("exposes", json::array());
  if (!exposes.is_array()) throw SchemaError(path + "/exposes", "expected an array");
  for (std::size_t i = 0; i < exposes.size(); ++i) {
    if (!exposes[i].is_string()) throw SchemaError(path + "/exposes/" + std::to_string(i), "expected a string");
    h.exposes.push_back(exposes[i].get<std::string>());
  }
  return h;
}

bool all_controlled(const NetworkBelief& nb) {
  return std::all_of(nb.hosts().begin(), nb.hosts().end(),
                     [](const belief::HostBelief& h) { return h.controlled; });
}

void check_same_hosts(const SimNetwork& sim, const NetworkBelief& nb) {
  bool same = sim.hosts.size() == nb.size();
  for (std::size_t i = 0; same && i < sim.hosts.size(); ++i) same = sim.hosts[i].id == nb.hosts()[i].id;
  if (!same) throw Error("belief and simulated network describe different host sets");
}

std::optional<std::size_t> pick_action(const QTable& table, const NetworkBelief& nb,
                                       const std::vector<Action>& available) {
  std::vector<std::size_t> candidates;
  candidates.reserve(available.size());
  for (const auto& a : available) {
    auto idx = table.action_index(a);
    if (!idx) throw Error("Q-table has no entry for action on host '" + a.host_id + "'");
    candidates.push_back(*idx);
  }
  if (candidates.empty()) return std::nullopt;
  return table.best_of(knowledge_key(nb), candidates);
}

}  // namespace

belief::GroundTruth SimHost::ground_truth() const { return {true_os, ports, apps, protections}; }

const SimHost& SimNetwork::host(const std::string& id) const {
  auto it = std::find_if(hosts.begin(), hosts.end(), [&](const SimHost& h) { return h.id == id; });
  if (it == hosts.end()) throw Error("unknown host id '" + id + "'");
  return *it;
}

SimNetwork load_sim(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  const auto& hosts = require(doc, "hosts", "");
  if (!hosts.is_array()) throw SchemaError("/hosts", "expected an array");
  if (hosts.empty()) throw SchemaError("/hosts", "no reachable host");

  SimNetwork sim;
  for (std::size_t i = 0; i < hosts.size(); ++i) sim.hosts.push_back(parse_host(hosts[i], "/hosts/" + std::to_string(i)));
  std::sort(sim.hosts.begin(), sim.hosts.end(), [](const SimHost& a, const SimHost& b) { return a.id < b.id; });

  std::set<std::string> ids;
  for (const auto& h : sim.hosts) {
    if (!ids.insert(h.id).second) throw SchemaError("/hosts", "duplicate host id '" + h.id + "'");
  }
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    for (const auto& target : hosts[i].value("exposes", json::array())) {
      if (!ids.count(target.get<std::string>())) {
        throw SchemaError("/hosts/" + std::to_string(i) + "/exposes", "unknown host id '" + target.get<std::string>() + "'");
      }
    }
  }

  if (doc.contains("reachable")) {
    const auto& reach = doc["reachable"];
    if (!reach.is_array()) throw SchemaError("/reachable", "expected an array of host ids");
    for (std::size_t i = 0; i < reach.size(); ++i) {
      const std::string path = "/reachable/" + std::to_string(i);
      if (!reach[i].is_string()) throw SchemaError(path, "expected a string");
      const auto id = reach[i].get<std::string>();
      if (!ids.count(id)) throw SchemaError(path, "unknown host id '" + id + "'");
      sim.reachable.push_back(id);
    }
  } else {
    sim.reachable.assign(ids.begin(), ids.end());
  }
  std::sort(sim.reachable.begin(), sim.reachable.end());
  sim.reachable.erase(std::unique(sim.reachable.begin(), sim.reachable.end()), sim.reachable.end());
  if (sim.reachable.empty()) throw SchemaError("/reachable", "no reachable host");
  return sim;
}

NetworkBelief initial_belief(const SimNetwork& sim) {
  std::vector<belief::HostBelief> hosts;
  for (const auto& h : sim.hosts) {
    hosts.push_back(belief::new_host_belief(h.id, h.os_candidates, h.ports.size(), h.apps.size(), h.protections.size()));
  }
  return NetworkBelief(std::move(hosts));
}

std::vector<std::string> reachable_hosts(const SimNetwork& sim, const NetworkBelief& nb) {
  std::set<std::string> seen(sim.reachable.begin(), sim.reachable.end());
  std::vector<std::string> frontier(sim.reachable.begin(), sim.reachable.end());
  while (!frontier.empty()) {
    const std::string id = frontier.back();
    frontier.pop_back();
    const auto* b = nb.find(id);
    if (b == nullptr || !b->controlled) continue;
    for (const auto& next : sim.host(id).exposes) {
      if (seen.insert(next).second) frontier.push_back(next);
    }
  }
  return {seen.begin(), seen.end()};
}

const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::OsScan: return "os_scan";
    case ActionKind::PortScan: return "port_scan";
    case ActionKind::AppProbe: return "app_probe";
    case ActionKind::ProtectionProbe: return "protection_probe";
    case ActionKind::Exploit: return "exploit";
  }
  return "?";
}

bool operator<(const Action& a, const Action& b) {
  return std::tie(a.host_id, a.kind, a.index, a.vuln) < std::tie(b.host_id, b.kind, b.index, b.vuln);
}

bool operator==(const Action& a, const Action& b) {
  return std::tie(a.host_id, a.kind, a.index, a.vuln) == std::tie(b.host_id, b.kind, b.index, b.vuln);
}

json to_json(const Action& a) {
  json j = {{"host", a.host_id}, {"kind", to_string(a.kind)}, {"cost", a.cost}};
  if (a.kind == ActionKind::Exploit) {
    j["port"] = a.index;
    j["vuln"] = a.vuln;
  } else if (a.kind != ActionKind::OsScan) {
    j["index"] = a.index;
  }
  return j;
}

std::vector<Action> action_space(const SimNetwork& sim) {
  std::vector<Action> out;
  for (const auto& h : sim.hosts) {
    out.push_back({h.id, ActionKind::OsScan, 0, {}, 1.0});
    for (std::size_t i = 0; i < h.ports.size(); ++i) out.push_back({h.id, ActionKind::PortScan, i, {}, 1.0});
    for (std::size_t i = 0; i < h.apps.size(); ++i) out.push_back({h.id, ActionKind::AppProbe, i, {}, 1.0});
    for (std::size_t i = 0; i < h.protections.size(); ++i) out.push_back({h.id, ActionKind::ProtectionProbe, i, {}, 1.0});
    for (const auto& e : h.exploits) out.push_back({h.id, ActionKind::Exploit, e.port, e.vuln, 1.0});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Action> available_actions(const SimNetwork& sim, const NetworkBelief& nb) {
  check_same_hosts(sim, nb);
  std::vector<Action> out;
  for (const auto& id : reachable_hosts(sim, nb)) {
    const auto& b = nb.at(id);
    if (b.controlled) continue;
    const auto& h = sim.host(id);
    if (!b.os_degenerate()) out.push_back({id, ActionKind::OsScan, 0, {}, 1.0});
    const std::pair<belief::Group, ActionKind> groups[] = {{belief::Group::Ports, ActionKind::PortScan},
                                                           {belief::Group::Apps, ActionKind::AppProbe},
                                                           {belief::Group::Protections, ActionKind::ProtectionProbe}};
    for (const auto& [group, kind] : groups) {
      for (Eigen::Index i = 0; i < b.group(group).size(); ++i) {
        if (!b.degenerate(group, static_cast<std::size_t>(i))) out.push_back({id, kind, static_cast<std::size_t>(i), {}, 1.0});
      }
    }
    for (const auto& e : h.exploits) out.push_back({id, ActionKind::Exploit, e.port, e.vuln, 1.0});
  }
  std::sort(out.begin(), out.end());
  return out;
}

Observation execute_action(const SimNetwork& sim, const NetworkBelief& nb, const Action& a) {
  const auto legal = available_actions(sim, nb);
  if (std::find(legal.begin(), legal.end(), a) == legal.end()) {
    throw Error(std::string("illegal action ") + to_string(a.kind) + " on host '" + a.host_id + "'");
  }
  const auto& h = sim.host(a.host_id);
  switch (a.kind) {
    case ActionKind::OsScan: return Observation::os_identified(h.id, h.true_os);
    case ActionKind::PortScan: return Observation::port_state(h.id, a.index, h.ports[a.index]);
    case ActionKind::AppProbe: return Observation::app_state(h.id, a.index, h.apps[a.index]);
    case ActionKind::ProtectionProbe: return Observation::protection_state(h.id, a.index, h.protections[a.index]);
    case ActionKind::Exploit:
      if (h.ports[a.index]) return Observation::control_gained(h.id, h.ground_truth());
      return Observation::no_effect(h.id);
  }
  throw Error("unknown action kind");
}

std::optional<StepChoice> greedy_step(const SimNetwork& sim, const NetworkBelief& nb) {
  std::optional<StepChoice> best;
  for (const auto& a : available_actions(sim, nb)) {
    const auto after = belief::apply_observation(nb, execute_action(sim, nb, a));
    const double gain = belief::information_gain(nb, after);
    if (!best || gain > best->gain) best = StepChoice{a, gain};
  }
  return best;
}

// ---------------------------------------------------------------------------

std::string knowledge_key(const NetworkBelief& nb) {
  std::string key;
  for (const auto& h : nb.hosts()) {
    key += h.controlled ? '1' : '0';
    key += h.os_degenerate() ? '1' : '0';
    for (auto g : {belief::Group::Ports, belief::Group::Apps, belief::Group::Protections}) {
      for (Eigen::Index i = 0; i < h.group(g).size(); ++i) key += h.degenerate(g, static_cast<std::size_t>(i)) ? '1' : '0';
    }
    key += '|';
  }
  return key;
}

std::optional<std::size_t> QTable::action_index(const Action& a) const {
  auto it = std::lower_bound(actions_.begin(), actions_.end(), a);
  if (it == actions_.end() || !(*it == a)) return std::nullopt;
  return static_cast<std::size_t>(it - actions_.begin());
}

double QTable::value(const std::string& state, std::size_t action) const {
  auto it = rows_.find(state);
  return it == rows_.end() ? 0.0 : it->second(static_cast<Eigen::Index>(action));
}

Eigen::VectorXd& QTable::row(const std::string& state) {
  auto it = rows_.find(state);
  if (it == rows_.end()) {
    it = rows_.emplace(state, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(actions_.size()))).first;
  }
  return it->second;
}

std::size_t QTable::best_of(const std::string& state, const std::vector<std::size_t>& candidates) const {
  std::size_t best = candidates.front();
  double best_value = value(state, best);
  for (std::size_t c : candidates) {
    const double v = value(state, c);
    if (v > best_value) {
      best = c;
      best_value = v;
    }
  }
  return best;
}

std::size_t QTable::nonzero_entries() const {
  std::size_t n = 0;
  for (const auto& [_, r] : rows_) n += static_cast<std::size_t>((r.array() != 0.0).count());
  return n;
}

bool QTable::operator==(const QTable& other) const {
  if (!(actions_ == other.actions_) || rows_.size() != other.rows_.size()) return false;
  for (auto a = rows_.begin(), b = other.rows_.begin(); a != rows_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.array() == b->second.array()).all()) return false;
  }
  return true;
}

QTable q_train(const SimNetwork& sim, const QConfig& config) {
  if (config.episodes < 1) throw Error("q_train: episodes must be >= 1");
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) throw Error("q_train: alpha must be in (0,1]");
  if (!(config.epsilon > 0.0 && config.epsilon <= 1.0)) throw Error("q_train: epsilon must be in (0,1]");
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw Error("q_train: gamma must be in [0,1]");

  QTable table(action_space(sim));
  const std::size_t cap =
      config.max_steps_per_episode > 0 ? config.max_steps_per_episode : std::max<std::size_t>(1, 2 * table.actions().size());
  const NetworkBelief start = initial_belief(sim);

  for (std::size_t episode = 0; episode < config.episodes; ++episode) {
    // Independent stream per (seed, episode).
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(episode), static_cast<std::uint32_t>(episode >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    NetworkBelief nb = start;
    auto available = available_actions(sim, nb);
    for (std::size_t step = 0; step < cap && !available.empty() && !all_controlled(nb); ++step) {
      const std::string state = knowledge_key(nb);
      std::size_t chosen_pos = 0;
      if (coin(rng) < config.epsilon) {
        chosen_pos = std::uniform_int_distribution<std::size_t>(0, available.size() - 1)(rng);
      } else {
        std::vector<std::size_t> idx;
        for (const auto& a : available) idx.push_back(*table.action_index(a));
        const std::size_t best = table.best_of(state, idx);
        chosen_pos = static_cast<std::size_t>(std::find(idx.begin(), idx.end(), best) - idx.begin());
      }
      const Action& action = available[chosen_pos];
      const std::size_t a = *table.action_index(action);

      const NetworkBelief after = belief::apply_observation(nb, execute_action(sim, nb, action));
      const double reward = belief::information_gain(nb, after);
      auto next = available_actions(sim, after);

      double future = 0.0;
      if (!next.empty() && !all_controlled(after)) {
        const std::string next_state = knowledge_key(after);
        future = -std::numeric_limits<double>::infinity();
        for (const auto& na : next) future = std::max(future, table.value(next_state, *table.action_index(na)));
      }
      auto& q = table.row(state)(static_cast<Eigen::Index>(a));
      q += config.alpha * (reward + config.gamma * future - q);

      nb = after;
      available = std::move(next);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

const char* to_string(Terminal t) {
  switch (t) {
    case Terminal::AllControlled: return "all_controlled";
    case Terminal::StepLimit: return "step_limit";
    case Terminal::NoActions: return "no_actions";
  }
  return "?";
}

double EpisodeTrace::total_gain() const {
  double sum = 0.0;
  for (const auto& s : steps) sum += s.gain;
  return sum;
}

EpisodeTrace run_episode(const SimNetwork& sim, const Policy& policy, std::size_t max_steps) {
  if (max_steps < 1) throw Error("run_episode: max_steps must be >= 1");
  NetworkBelief nb = initial_belief(sim);
  EpisodeTrace trace;
  trace.initial_entropy = belief::network_entropy(nb);

  while (true) {
    if (all_controlled(nb)) {
      trace.terminal = Terminal::AllControlled;
      break;
    }
    const auto available = available_actions(sim, nb);
    if (available.empty()) {
      trace.terminal = Terminal::NoActions;
      break;
    }
    if (trace.steps.size() >= max_steps) {
      trace.terminal = Terminal::StepLimit;
      break;
    }

    Action action;
    if (const auto* table = std::get_if<QTable>(&policy)) {
      action = table->actions()[*pick_action(*table, nb, available)];
    } else {
      action = greedy_step(sim, nb)->action;
    }
    auto obs = execute_action(sim, nb, action);
    NetworkBelief after = belief::apply_observation(nb, obs);
    const double gain = belief::information_gain(nb, after);
    trace.steps.push_back({action, std::move(obs), gain, belief::network_entropy(after)});
    nb = std::move(after);
  }
  return trace;
}

std::string to_json_lines(const EpisodeTrace& trace) {
  std::ostringstream out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    json line = {{"step", i},
                 {"action", to_json(s.action)},
                 {"observation", belief::to_json(s.observation)},
                 {"gain", s.gain},
                 {"entropy_after", s.entropy_after}};
    out << line.dump() << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

void search(const SimNetwork& sim, const NetworkBelief& nb, double start_entropy, std::size_t depth,
            std::vector<Action>& path, SequencePlan& best) {
  const double gain = start_entropy - belief::network_entropy(nb);
  if (gain > best.gain || (gain == best.gain && path.size() < best.actions.size())) {
    best.gain = gain;
    best.actions = path;
  }
  if (path.size() >= depth) return;
  for (const auto& a : available_actions(sim, nb)) {
    path.push_back(a);
    search(sim, belief::apply_observation(nb, execute_action(sim, nb, a)), start_entropy, depth, path, best);
    path.pop_back();
  }
}

}  // namespace

SequencePlan exhaustive_best(const SimNetwork& sim, std::size_t depth) {
  if (action_space(sim).size() > kOracleMaxActions || depth > kOracleMaxDepth) {
    throw Error("oracle instance too large");
  }
  const NetworkBelief start = initial_belief(sim);
  SequencePlan best;
  std::vector<Action> path;
  search(sim, start, belief::network_entropy(start), depth, path, best);
  return best;
}

}  // namespace ptk::planner
