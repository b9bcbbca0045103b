#include "ptk/belief.hpp"

#include "ptk/error.hpp"

#include <algorithm>
#include <type_traits>
#include <utility>

namespace ptk::belief {

namespace {

constexpr double kSumTolerance = 1e-9;

Probabilities point_mass(Eigen::Index size, Eigen::Index at) {
  Probabilities p = Probabilities::Zero(size);
  p(at) = 1.0;
  return p;
}

Probabilities collapse(const std::vector<bool>& truth) {
  Probabilities p(static_cast<Eigen::Index>(truth.size()));
  for (std::size_t i = 0; i < truth.size(); ++i) p(static_cast<Eigen::Index>(i)) = truth[i] ? 1.0 : 0.0;
  return p;
}

Probabilities collapse_to_map(const Probabilities& probs) {
  return (probs.array() >= 0.5).cast<double>().matrix();
}

bool same_values(const Probabilities& a, const Probabilities& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

void check_index(const HostBelief& h, const char* what, std::size_t index, Eigen::Index size) {
  if (index >= static_cast<std::size_t>(size)) {
    throw Error("observation " + std::string(what) + " index " + std::to_string(index) +
                " out of range for host '" + h.id + "' (size " + std::to_string(size) + ")");
  }
}

std::vector<double> to_vector(const Probabilities& p) { return {p.data(), p.data() + p.size()}; }

Probabilities probabilities_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of probabilities");
  Probabilities p(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(path + "/" + std::to_string(i), "expected a number");
    p(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return p;
}

}  // namespace

const char* to_string(Group g) {
  switch (g) {
    case Group::Ports: return "port";
    case Group::Apps: return "app";
    case Group::Protections: return "protection";
  }
  return "?";
}

const Probabilities& HostBelief::group(Group g) const {
  switch (g) {
    case Group::Ports: return ports;
    case Group::Apps: return apps;
    case Group::Protections: return protections;
  }
  return ports;
}

Probabilities& HostBelief::group(Group g) {
  return const_cast<Probabilities&>(std::as_const(*this).group(g));
}

bool HostBelief::os_degenerate() const { return (os.array() == 1.0).any(); }

bool HostBelief::degenerate(Group g, std::size_t index) const {
  const double p = group(g)(static_cast<Eigen::Index>(index));
  return p == 0.0 || p == 1.0;
}

void HostBelief::validate() const {
  if (os_candidates.empty()) throw Error("host '" + id + "': no OS hypothesis");
  if (os.size() != static_cast<Eigen::Index>(os_candidates.size())) {
    throw Error("host '" + id + "': OS distribution size does not match candidate list");
  }
  if ((os.array() < 0.0).any() || (os.array() > 1.0).any()) {
    throw Error("host '" + id + "': OS probability outside [0,1]");
  }
  if (std::abs(os.sum() - 1.0) > kSumTolerance) {
    throw Error("host '" + id + "': OS distribution does not sum to 1");
  }
  for (Group g : {Group::Ports, Group::Apps, Group::Protections}) {
    const auto& p = group(g);
    if ((p.array() < 0.0).any() || (p.array() > 1.0).any() || p.hasNaN()) {
      throw Error("host '" + id + "': " + to_string(g) + " probability outside [0,1]");
    }
  }
}

bool operator==(const HostBelief& a, const HostBelief& b) {
  return a.id == b.id && a.os_candidates == b.os_candidates && a.controlled == b.controlled &&
         same_values(a.os, b.os) && same_values(a.ports, b.ports) && same_values(a.apps, b.apps) &&
         same_values(a.protections, b.protections);
}

HostBelief new_host_belief(std::string host_id, std::vector<std::string> os_candidates,
                           std::size_t n_ports, std::size_t n_apps, std::size_t n_protections,
                           PriorPolicy prior) {
  if (os_candidates.empty()) throw Error("host '" + host_id + "': no OS hypothesis");
  if (!(prior.bernoulli >= 0.0 && prior.bernoulli <= 1.0)) {
    throw Error("prior Bernoulli probability outside [0,1]");
  }
  HostBelief b;
  b.id = std::move(host_id);
  const auto c = static_cast<Eigen::Index>(os_candidates.size());
  b.os_candidates = std::move(os_candidates);
  b.os = Probabilities::Constant(c, 1.0 / static_cast<double>(c));
  b.ports = Probabilities::Constant(static_cast<Eigen::Index>(n_ports), prior.bernoulli);
  b.apps = Probabilities::Constant(static_cast<Eigen::Index>(n_apps), prior.bernoulli);
  b.protections = Probabilities::Constant(static_cast<Eigen::Index>(n_protections), prior.bernoulli);
  return b;
}

NetworkBelief::NetworkBelief(std::vector<HostBelief> hosts) : hosts_(std::move(hosts)) {
  std::sort(hosts_.begin(), hosts_.end(),
            [](const HostBelief& a, const HostBelief& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < hosts_.size(); ++i) {
    if (hosts_[i].id == hosts_[i - 1].id) throw Error("duplicate host id '" + hosts_[i].id + "'");
  }
  for (const auto& h : hosts_) h.validate();
}

const HostBelief* NetworkBelief::find(const std::string& host_id) const {
  auto it = std::lower_bound(hosts_.begin(), hosts_.end(), host_id,
                             [](const HostBelief& h, const std::string& id) { return h.id < id; });
  return (it != hosts_.end() && it->id == host_id) ? &*it : nullptr;
}

const HostBelief& NetworkBelief::at(const std::string& host_id) const {
  if (const auto* h = find(host_id)) return *h;
  throw Error("unknown host id '" + host_id + "'");
}

NetworkBelief NetworkBelief::with_host(HostBelief host) const {
  NetworkBelief out = *this;
  auto it = std::find_if(out.hosts_.begin(), out.hosts_.end(),
                         [&](const HostBelief& h) { return h.id == host.id; });
  if (it == out.hosts_.end()) throw Error("unknown host id '" + host.id + "'");
  *it = std::move(host);
  return out;
}

Observation Observation::os_identified(std::string host, std::size_t index) {
  return {std::move(host), OsIdentified{index}};
}
Observation Observation::port_state(std::string host, std::size_t index, bool open) {
  return {std::move(host), ComponentState{Group::Ports, index, open}};
}
Observation Observation::app_state(std::string host, std::size_t index, bool present) {
  return {std::move(host), ComponentState{Group::Apps, index, present}};
}
Observation Observation::protection_state(std::string host, std::size_t index, bool present) {
  return {std::move(host), ComponentState{Group::Protections, index, present}};
}
Observation Observation::control_gained(std::string host, std::optional<GroundTruth> ground) {
  return {std::move(host), ControlGained{std::move(ground)}};
}
Observation Observation::no_effect(std::string host) { return {std::move(host), NoEffect{}}; }

double host_entropy(const HostBelief& b) {
  if (b.controlled) return 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < b.os.size(); ++i) h += quantize_bits(surprisal_term(b.os(i)));
  for (Group g : {Group::Ports, Group::Apps, Group::Protections}) {
    const auto& p = b.group(g);
    for (Eigen::Index i = 0; i < p.size(); ++i) h += quantize_bits(binary_entropy(p(i)));
  }
  return h;
}

double network_entropy(const NetworkBelief& nb) {
  double h = 0.0;
  for (const auto& host : nb.hosts()) h += host_entropy(host);
  return h;
}

NetworkBelief apply_observation(const NetworkBelief& nb, const Observation& obs) {
  HostBelief host = nb.at(obs.host_id);

  std::visit(
      [&](const auto& kind) {
        using K = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<K, OsIdentified>) {
          check_index(host, "os", kind.index, host.os.size());
          host.os = point_mass(host.os.size(), static_cast<Eigen::Index>(kind.index));
        } else if constexpr (std::is_same_v<K, ComponentState>) {
          auto& p = host.group(kind.group);
          check_index(host, to_string(kind.group), kind.index, p.size());
          p(static_cast<Eigen::Index>(kind.index)) = kind.present ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<K, ControlGained>) {
          if (kind.ground) {
            const auto& g = *kind.ground;
            check_index(host, "os", g.os, host.os.size());
            if (g.ports.size() != static_cast<std::size_t>(host.ports.size()) ||
                g.apps.size() != static_cast<std::size_t>(host.apps.size()) ||
                g.protections.size() != static_cast<std::size_t>(host.protections.size())) {
              throw Error("control ground truth shape does not match host '" + host.id + "'");
            }
            host.os = point_mass(host.os.size(), static_cast<Eigen::Index>(g.os));
            host.ports = collapse(g.ports);
            host.apps = collapse(g.apps);
            host.protections = collapse(g.protections);
          } else {
            Eigen::Index best = 0;
            host.os.maxCoeff(&best);
            host.os = point_mass(host.os.size(), best);
            host.ports = collapse_to_map(host.ports);
            host.apps = collapse_to_map(host.apps);
            host.protections = collapse_to_map(host.protections);
          }
          host.controlled = true;
        }
      },
      obs.kind);

  if (std::holds_alternative<NoEffect>(obs.kind)) return nb;
  return nb.with_host(std::move(host));
}

double information_gain(const NetworkBelief& before, const NetworkBelief& after) {
  if (before.size() != after.size()) throw Error("information gain over mismatched host sets");
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before.hosts()[i].id != after.hosts()[i].id) {
      throw Error("information gain over mismatched host sets");
    }
  }
  return network_entropy(before) - network_entropy(after);
}

nlohmann::json to_json(const NetworkBelief& nb) {
  nlohmann::json hosts = nlohmann::json::array();
  for (const auto& h : nb.hosts()) {
    hosts.push_back({{"id", h.id},
                     {"os", {{"candidates", h.os_candidates}, {"p", to_vector(h.os)}}},
                     {"ports", to_vector(h.ports)},
                     {"apps", to_vector(h.apps)},
                     {"protections", to_vector(h.protections)},
                     {"controlled", h.controlled}});
  }
  return {{"hosts", hosts}};
}

NetworkBelief network_belief_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("hosts") || !doc["hosts"].is_array()) {
    throw SchemaError("/hosts", "expected an array");
  }
  std::vector<HostBelief> hosts;
  for (std::size_t i = 0; i < doc["hosts"].size(); ++i) {
    const auto& j = doc["hosts"][i];
    const std::string path = "/hosts/" + std::to_string(i);
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    if (!j.contains("id") || !j["id"].is_string()) throw SchemaError(path + "/id", "expected a string");
    if (!j.contains("os") || !j["os"].is_object()) throw SchemaError(path + "/os", "expected an object");
    HostBelief h;
    h.id = j["id"].get<std::string>();
    const auto& os = j["os"];
    if (!os.contains("candidates") || !os["candidates"].is_array()) {
      throw SchemaError(path + "/os/candidates", "expected an array of strings");
    }
    for (const auto& c : os["candidates"]) {
      if (!c.is_string()) throw SchemaError(path + "/os/candidates", "expected an array of strings");
      h.os_candidates.push_back(c.get<std::string>());
    }
    h.os = probabilities_from_json(os.value("p", nlohmann::json()), path + "/os/p");
    h.ports = probabilities_from_json(j.value("ports", nlohmann::json::array()), path + "/ports");
    h.apps = probabilities_from_json(j.value("apps", nlohmann::json::array()), path + "/apps");
    h.protections =
        probabilities_from_json(j.value("protections", nlohmann::json::array()), path + "/protections");
    const auto controlled = j.value("controlled", nlohmann::json(false));
    if (!controlled.is_boolean()) throw SchemaError(path + "/controlled", "expected a boolean");
    h.controlled = controlled.get<bool>();
    hosts.push_back(std::move(h));
  }
  return NetworkBelief(std::move(hosts));
}

nlohmann::json to_json(const Observation& obs) {
  nlohmann::json j = {{"host", obs.host_id}};
  std::visit(
      [&](const auto& kind) {
        using K = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<K, OsIdentified>) {
          j["kind"] = "os_identified";
          j["index"] = kind.index;
        } else if constexpr (std::is_same_v<K, ComponentState>) {
          j["kind"] = std::string(to_string(kind.group)) + "_state";
          j["index"] = kind.index;
          j[kind.group == Group::Ports ? "open" : "present"] = kind.present;
        } else if constexpr (std::is_same_v<K, ControlGained>) {
          j["kind"] = "control_gained";
        } else {
          j["kind"] = "no_effect";
        }
      },
      obs.kind);
  return j;
}

}  // namespace ptk::belief
