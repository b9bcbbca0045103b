#include "ptk/digest.hpp"
#include "ptk/error.hpp"
#include "ptk/scanner.hpp"

#include <algorithm>
#include <ctime>

namespace ptk::scanner {

namespace {

using nlohmann::json;

std::uint32_t address_key(const std::string& addr) {
  auto ip = Ipv4::parse(addr);
  return ip ? ip->value : 0;
}

void sort_hosts(std::vector<HostReport>& hosts) {
  std::stable_sort(hosts.begin(), hosts.end(), [](const HostReport& a, const HostReport& b) {
    return address_key(a.address) < address_key(b.address);
  });
}

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(path + "/" + key, "missing field");
  return j[key];
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ScanReport run_scan(const ScanConfig& config) {
  const TargetSpec spec = parse_target_spec(config.targets, config.ports);
  check_authorization(spec, config.authorized);
  const auto now = config.clock ? config.clock : std::function<std::string()>(utc_timestamp);

  ScanReport report;
  report.meta.tool_version = kToolVersion;
  report.meta.started = now();
  report.meta.parameters = {{"targets", config.targets},
                            {"ports", config.ports.empty() ? std::string("default") : config.ports},
                            {"discover", to_string(config.discovery)},
                            {"discovery_timeout_ms", config.discovery_timeout.count()},
                            {"connect_timeout_ms", config.connect_timeout.count()},
                            {"banner_timeout_ms", config.banner_timeout.count()},
                            {"parallel", config.parallelism}};

  auto discovery = discover_hosts(spec.addresses, config.discovery, config.discovery_timeout, config.parallelism);
  report.meta.warnings = discovery.warnings;

  ScanStats stats;
  const PortScanOptions options{config.connect_timeout, config.banner_timeout, config.parallelism, true};
  for (const auto& status : discovery.hosts) {
    HostReport host;
    host.address = status.address.to_string();
    host.alive = status.alive;
    host.discovery = status.method;
    host.rtt_ms = status.rtt_ms;
    if (status.alive) {
      host.ports = scan_ports(host.address, spec.ports, options, &stats);
      OsEvidence evidence;
      evidence.ttl = status.ttl;
      for (auto& p : host.ports) {
        if (p.state != PortState::Open) continue;
        evidence.open_ports.push_back(p.port);
        if (p.banner) evidence.banners.push_back(*p.banner);
        p.service = fingerprint_service(p.banner.value_or(""), p.port);
      }
      host.os = guess_os(evidence);
    }
    report.hosts.push_back(std::move(host));
  }
  sort_hosts(report.hosts);
  report.meta.peak_in_flight = stats.peak_in_flight;
  report.meta.finished = now();
  return report;
}

json to_json(const ScanReport& report) {
  json hosts = json::array();
  for (const auto& h : report.hosts) {
    json ports = json::array();
    for (const auto& p : h.ports) {
      json entry = {{"port", p.port}, {"state", to_string(p.state)}};
      entry["banner_b64"] = p.banner ? json(base64_encode(*p.banner)) : json(nullptr);
      entry["service"] = p.service ? json{{"name", p.service->name}, {"version", p.service->version},
                                          {"conf", p.service->confidence}}
                                   : json(nullptr);
      ports.push_back(std::move(entry));
    }
    json os = json::array();
    for (const auto& g : h.os) os.push_back({{"name", g.name}, {"conf", g.confidence}});
    hosts.push_back({{"addr", h.address},
                     {"alive", h.alive},
                     {"discovery", to_string(h.discovery)},
                     {"rtt_ms", h.rtt_ms},
                     {"ports", std::move(ports)},
                     {"os", std::move(os)}});
  }
  const auto& m = report.meta;
  return {{"meta",
           {{"schema", m.schema},
            {"tool", m.tool_version},
            {"started", m.started},
            {"finished", m.finished},
            {"parameters", m.parameters},
            {"warnings", m.warnings},
            {"peak_in_flight", m.peak_in_flight}}},
          {"hosts", std::move(hosts)}};
}

ScanReport scan_report_from_json(const json& doc) {
  ScanReport report;
  const auto& meta = field(doc, "meta", "");
  const auto schema = meta.value("schema", std::string());
  if (schema != "v1") throw SchemaError("/meta/schema", "unsupported scan report schema '" + schema + "'");
  report.meta.schema = schema;
  report.meta.tool_version = meta.value("tool", std::string());
  report.meta.started = meta.value("started", std::string());
  report.meta.finished = meta.value("finished", std::string());
  report.meta.parameters = meta.value("parameters", json::object());
  report.meta.warnings = meta.value("warnings", std::vector<std::string>{});
  report.meta.peak_in_flight = meta.value("peak_in_flight", std::size_t{0});

  const auto& hosts = field(doc, "hosts", "");
  if (!hosts.is_array()) throw SchemaError("/hosts", "expected an array");
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    const std::string path = "/hosts/" + std::to_string(i);
    const auto& j = hosts[i];
    HostReport h;
    try {
      h.address = field(j, "addr", path).get<std::string>();
      h.alive = field(j, "alive", path).get<bool>();
      h.discovery = discovery_method_from_string(j.value("discovery", std::string("assumed")));
      h.rtt_ms = j.value("rtt_ms", 0.0);
      const auto ports = j.value("ports", json::array());
      for (std::size_t k = 0; k < ports.size(); ++k) {
        const std::string ppath = path + "/ports/" + std::to_string(k);
        const auto& pj = ports[k];
        PortResult p;
        p.port = field(pj, "port", ppath).get<std::uint16_t>();
        p.state = port_state_from_string(field(pj, "state", ppath).get<std::string>());
        if (pj.contains("banner_b64") && !pj["banner_b64"].is_null()) {
          p.banner = base64_decode(pj["banner_b64"].get<std::string>());
          if (p.state != PortState::Open) throw SchemaError(ppath + "/banner_b64", "banner on a port that is not open");
        }
        if (pj.contains("service") && !pj["service"].is_null()) {
          const auto& s = pj["service"];
          p.service = ServiceGuess{field(s, "name", ppath + "/service").get<std::string>(),
                                   s.value("version", std::string("unknown")), s.value("conf", 0.0)};
        }
        h.ports.push_back(std::move(p));
      }
      for (const auto& g : j.value("os", json::array())) {
        h.os.push_back({g.at("name").get<std::string>(), g.value("conf", 0.0)});
      }
    } catch (const json::exception& e) {
      throw SchemaError(path, e.what());
    }
    std::sort(h.ports.begin(), h.ports.end(), [](const PortResult& a, const PortResult& b) { return a.port < b.port; });
    report.hosts.push_back(std::move(h));
  }
  sort_hosts(report.hosts);
  return report;
}

belief::NetworkBelief belief_from_layout(const BeliefLayout& layout) {
  std::vector<belief::HostBelief> hosts;
  for (const auto& [addr, id] : layout.host_ids) {
    hosts.push_back(belief::new_host_belief(id, layout.os_candidates, layout.port_slots.size(), 0, 0));
  }
  return belief::NetworkBelief(std::move(hosts));
}

std::vector<belief::Observation> scan_to_observations(const ScanReport& report, const belief::NetworkBelief& nb,
                                                      const BeliefLayout& layout) {
  std::vector<belief::Observation> out;
  for (const auto& h : report.hosts) {
    if (!h.alive) continue;
    const auto id_it = layout.host_ids.find(h.address);
    if (id_it == layout.host_ids.end()) throw Error("scan address " + h.address + " has no host id mapping");
    const auto& host = nb.at(id_it->second);

    for (const auto& p : h.ports) {
      if (p.state == PortState::Filtered) continue;
      const auto slot = std::find(layout.port_slots.begin(), layout.port_slots.end(), p.port);
      if (slot == layout.port_slots.end()) continue;
      out.push_back(belief::Observation::port_state(
          host.id, static_cast<std::size_t>(slot - layout.port_slots.begin()), p.state == PortState::Open));
    }
    if (!h.os.empty() && h.os.front().confidence >= kOsObservationThreshold) {
      const auto& cands = host.os_candidates;
      const auto it = std::find(cands.begin(), cands.end(), h.os.front().name);
      if (it != cands.end()) {
        out.push_back(belief::Observation::os_identified(host.id, static_cast<std::size_t>(it - cands.begin())));
      }
    }
  }
  return out;
}

}  // namespace ptk::scanner
