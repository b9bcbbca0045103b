#include "ptk/findings.hpp"

#include "ptk/error.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace ptk::findings {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::uint32_t host_key(const std::string& addr) {
  auto ip = scanner::Ipv4::parse(addr);
  return ip ? ip->value : 0;
}

/// (host numeric, host text, port with host-level first, rule id)
bool finding_less(const Finding& a, const Finding& b) {
  const auto ka = std::make_tuple(host_key(a.host), a.host, a.port.has_value(), a.port.value_or(0), a.rule_id);
  const auto kb = std::make_tuple(host_key(b.host), b.host, b.port.has_value(), b.port.value_or(0), b.rule_id);
  return ka < kb;
}

// Severity ladder and advice wording follow the scanner-suspicion model:
// nothing here is confirmed, so every advice line asks for manual checking.
constexpr const char* kBuiltinKb = R"json([
  {"id": "vsftpd-234-backdoor",
   "match": {"service": "vsftpd", "version_prefix": "2.3.4"},
   "name": "vsftpd 2.3.4 backdoored release",
   "severity": "Critical",
   "advice": "Suspected backdoored vsftpd build; verify manually and reinstall from a trusted source.",
   "refs": ["CVE-2011-2523"]},
  {"id": "samba-usermap-script",
   "match": {"service": "samba", "version_prefix": "3."},
   "name": "Samba usermap_script command execution",
   "severity": "Critical",
   "advice": "Samba 3.x detected; verify manually and upgrade or disable 'username map script'.",
   "refs": ["CVE-2007-2447"]},
  {"id": "samba-badlock",
   "match": {"service": "samba"},
   "name": "Samba Badlock Vulnerability",
   "severity": "High",
   "advice": "Verify manually that the Samba version includes the Badlock fixes; upgrade otherwise.",
   "refs": ["CVE-2016-2118"]},
  {"id": "ms17-010",
   "match": {"port": 445, "os_family": "windows"},
   "name": "MS17-010: Security Update for Microsoft Windows SMB Server",
   "severity": "High",
   "advice": "SMB exposed on a Windows-family host; verify manually that MS17-010 is installed and disable SMBv1.",
   "refs": ["MS17-010", "CVE-2017-0144"]},
  {"id": "smb-signing-not-required",
   "match": {"port": 445},
   "name": "SMB Signing not required",
   "severity": "Medium",
   "advice": "Verify manually whether SMB signing is enforced; require signing via policy.",
   "refs": []},
  {"id": "cve-2019-0708",
   "match": {"port": 3389, "os_family": "windows"},
   "name": "Microsoft RDP RCE (CVE-2019-0708) (BlueKeep)",
   "severity": "Critical",
   "advice": "RDP exposed on a Windows-family host; verify manually that the BlueKeep patch is installed and enable NLA.",
   "refs": ["CVE-2019-0708"]},
  {"id": "ms12-020",
   "match": {"port": 3389, "os_family": "windows"},
   "name": "MS12-020: Vulnerabilities in Remote Desktop Could Allow Remote Code Execution",
   "severity": "High",
   "advice": "Verify manually that MS12-020 is installed; restrict RDP exposure.",
   "refs": ["MS12-020", "CVE-2012-0002"]},
  {"id": "vnc-default-password",
   "match": {"port": 5900},
   "name": "VNC Server 'password' Password",
   "severity": "Critical",
   "advice": "VNC reachable; verify manually that the default password is not accepted and set a strong one.",
   "refs": []},
  {"id": "openssh-debian-rng",
   "match": {"service": "openssh", "version_prefix": "4.7"},
   "name": "Debian OpenSSH/OpenSSL Package Random Number Generator Vulnerability",
   "severity": "Critical",
   "advice": "OpenSSH from the affected Debian era; verify manually for weak host keys and regenerate all keys.",
   "refs": ["CVE-2008-0166"]},
  {"id": "tomcat-ajp-ghostcat",
   "match": {"port": 8009},
   "name": "Apache Tomcat AJP Connector Request Injection",
   "severity": "Critical",
   "advice": "AJP connector reachable; verify manually, then disable it or require a secret.",
   "refs": ["CVE-2020-1938"]},
  {"id": "rlogin-service",
   "match": {"port": 513},
   "name": "rlogin Service Detection",
   "severity": "High",
   "advice": "Verify manually and disable rlogin in favour of SSH.",
   "refs": []}
])json";

std::string describe(const scanner::PortResult& p) {
  std::ostringstream out;
  out << "port " << p.port << "/tcp open";
  if (p.service) out << "; service " << p.service->name << ' ' << p.service->version;
  if (p.banner) {
    std::string line = p.banner->substr(0, p.banner->find_first_of("\r\n"));
    for (auto& c : line) {
      if (!std::isprint(static_cast<unsigned char>(c))) c = '?';
    }
    if (!line.empty()) out << "; banner \"" << line.substr(0, 80) << '"';
  }
  return out.str();
}

Finding make_finding(const std::string& host, std::optional<std::uint16_t> port, const KbRule& rule,
                     std::string evidence) {
  return {host, port, rule.id, rule.name, rule.severity, std::move(evidence), rule.advice, rule.refs};
}

void write_md_finding(std::ostringstream& md, const Finding& f) {
  md << "- **" << f.name << "** (`" << f.rule_id << "`) on " << f.host;
  if (f.port) md << ':' << *f.port;
  md << "\n  - Evidence: " << f.evidence << '\n';
  if (!f.refs.empty()) {
    md << "  - References: ";
    for (std::size_t i = 0; i < f.refs.size(); ++i) md << (i ? ", " : "") << f.refs[i];
    md << '\n';
  }
}

std::vector<Finding> sorted_by_severity(std::vector<Finding> findings) {
  std::stable_sort(findings.begin(), findings.end(), [](const Finding& a, const Finding& b) {
    if (a.severity != b.severity) return a.severity < b.severity;
    return finding_less(a, b);
  });
  return findings;
}

json counts_json(const SeverityCounts& c) {
  json out = json::object();
  for (auto s : kSeverities) out[to_string(s)] = c[static_cast<std::size_t>(s)];
  return out;
}

json findings_array(const std::vector<Finding>& fs) {
  json out = json::array();
  for (const auto& f : fs) out.push_back(to_json(f));
  return out;
}

std::vector<Finding> findings_from_array(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw SchemaError(path, "expected an array");
  std::vector<Finding> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(finding_from_json(arr[i], path + "/" + std::to_string(i)));
  return out;
}

void check_schema(const json& doc, const char* what) {
  if (!doc.is_object()) throw SchemaError("", std::string("expected a ") + what + " object");
  const auto schema = doc.value("schema", std::string());
  if (schema != "v1") throw SchemaError("/schema", std::string("unsupported ") + what + " schema '" + schema + "'");
}

}  // namespace

const char* to_string(Severity s) {
  switch (s) {
    case Severity::Critical: return "Critical";
    case Severity::High: return "High";
    case Severity::Medium: return "Medium";
    case Severity::Low: return "Low";
    case Severity::Info: return "Info";
  }
  return "?";
}

Severity severity_from_string(std::string_view s) {
  const auto l = lower(s);
  for (auto sev : kSeverities) {
    if (lower(to_string(sev)) == l) return sev;
  }
  throw Error("unknown severity '" + std::string(s) + "'");
}

bool version_matches(std::string_view version, std::string_view prefix) {
  if (prefix.empty() || version == "unknown") return false;
  if (version.substr(0, prefix.size()) != prefix) return false;
  if (version.size() == prefix.size() || prefix.back() == '.') return true;
  return !std::isdigit(static_cast<unsigned char>(version[prefix.size()]));
}

KnowledgeBase load_kb(const json& doc) {
  if (!doc.is_array()) throw SchemaError("", "knowledge base must be an array of rules");
  KnowledgeBase kb;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    const std::string label = j.is_object() && j.contains("id") && j["id"].is_string()
                                  ? j["id"].get<std::string>()
                                  : "#" + std::to_string(i);
    const std::string path = "rule " + label;
    try {
      if (!j.is_object()) throw SchemaError(path, "rule must be an object");
      KbRule r;
      r.id = j.at("id").get<std::string>();
      if (r.id.empty()) throw SchemaError(path, "empty id");
      if (!seen.insert(r.id).second) throw SchemaError(path, "duplicate rule id");
      const auto& m = j.at("match");
      if (!m.is_object()) throw SchemaError(path + "/match", "expected an object");
      if (m.contains("service") && !m["service"].is_null()) r.match.service = lower(m["service"].get<std::string>());
      if (m.contains("version_prefix") && !m["version_prefix"].is_null()) {
        r.match.version_prefix = m["version_prefix"].get<std::string>();
        if (r.match.version_prefix->empty() || !std::isalnum(static_cast<unsigned char>(r.match.version_prefix->front())))
          throw SchemaError(path + "/match/version_prefix", "malformed version prefix");
        if (!r.match.service) throw SchemaError(path + "/match", "version_prefix requires a service");
      }
      if (m.contains("port") && !m["port"].is_null()) {
        const auto port = m["port"].get<int>();
        if (port < 1 || port > 65535) throw SchemaError(path + "/match/port", "port out of range");
        r.match.port = static_cast<std::uint16_t>(port);
      }
      if (m.contains("os_family") && !m["os_family"].is_null()) r.match.os_family = lower(m["os_family"].get<std::string>());
      r.name = j.at("name").get<std::string>();
      r.severity = severity_from_string(j.at("severity").get<std::string>());
      r.advice = j.value("advice", std::string());
      r.refs = j.value("refs", std::vector<std::string>{});
      kb.rules.push_back(std::move(r));
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(path, e.what());
    }
  }
  std::sort(kb.rules.begin(), kb.rules.end(), [](const KbRule& a, const KbRule& b) { return a.id < b.id; });
  return kb;
}

const KnowledgeBase& builtin_kb() {
  static const KnowledgeBase kb = load_kb(json::parse(kBuiltinKb));
  return kb;
}

json to_json(const KnowledgeBase& kb) {
  json out = json::array();
  for (const auto& r : kb.rules) {
    json m = json::object();
    if (r.match.service) m["service"] = *r.match.service;
    if (r.match.version_prefix) m["version_prefix"] = *r.match.version_prefix;
    if (r.match.port) m["port"] = *r.match.port;
    if (r.match.os_family) m["os_family"] = *r.match.os_family;
    out.push_back({{"id", r.id}, {"match", m}, {"name", r.name}, {"severity", to_string(r.severity)},
                   {"advice", r.advice}, {"refs", r.refs}});
  }
  return out;
}

std::string Finding::identity_key() const {
  return host + "|" + (port ? std::to_string(*port) : std::string()) + "|" + rule_id;
}

std::vector<Finding> match_findings(const scanner::ScanReport& report, const KnowledgeBase& kb) {
  std::vector<Finding> out;
  for (const auto& host : report.hosts) {
    if (!host.alive) continue;
    const std::optional<std::string> os =
        host.os.empty() ? std::nullopt : std::optional<std::string>(lower(host.os.front().name));
    const auto os_ok = [&](const KbRule& r) { return !r.match.os_family || (os && *os == *r.match.os_family); };

    for (const auto& rule : kb.rules) {
      if (rule.host_level() && os_ok(rule)) {
        out.push_back(make_finding(host.address, std::nullopt, rule, "os guess " + os.value_or("none")));
      }
    }
    std::set<std::uint16_t> seen;
    for (const auto& p : host.ports) {
      if (p.state != scanner::PortState::Open || !seen.insert(p.port).second) continue;
      const std::string service = p.service ? lower(p.service->name) : std::string();
      const std::string version = p.service ? p.service->version : std::string("unknown");
      for (const auto& rule : kb.rules) {
        if (rule.host_level()) continue;
        const auto& m = rule.match;
        if (m.port && *m.port != p.port) continue;
        if (m.service && *m.service != service) continue;
        if (m.version_prefix && !version_matches(version, *m.version_prefix)) continue;
        if (!os_ok(rule)) continue;
        std::string evidence = describe(p);
        if (m.os_family) evidence += "; os guess " + *os;
        out.push_back(make_finding(host.address, p.port, rule, std::move(evidence)));
      }
    }
  }
  std::sort(out.begin(), out.end(), finding_less);
  return out;
}

SeverityCounts summarize(const std::vector<Finding>& findings) {
  SeverityCounts c{};
  for (const auto& f : findings) ++c[static_cast<std::size_t>(f.severity)];
  return c;
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "md" || s == "markdown") return ReportFormat::Markdown;
  throw Error("unknown report format '" + std::string(s) + "' (expected json or md)");
}

std::string render_report(const ReportContext& ctx, const scanner::ScanReport& scan,
                          const std::vector<Finding>& findings, ReportFormat format) {
  const auto ordered = sorted_by_severity(findings);
  const auto counts = summarize(ordered);

  // One remediation entry per rule, in severity order of first appearance.
  std::vector<std::pair<std::string, const Finding*>> remediation;
  for (const auto& f : ordered) {
    const bool known = std::any_of(remediation.begin(), remediation.end(),
                                   [&](const auto& r) { return r.first == f.rule_id; });
    if (!known) remediation.emplace_back(f.rule_id, &f);
  }

  std::size_t alive = 0;
  for (const auto& h : scan.hosts) alive += h.alive ? 1 : 0;

  if (format == ReportFormat::Json) {
    json rem = json::array();
    for (const auto& [id, f] : remediation) {
      rem.push_back({{"rule", id}, {"severity", to_string(f->severity)}, {"advice", f->advice}});
    }
    json doc = {{"schema", "v1"},
                {"engagement", {{"id", ctx.engagement_id}, {"client", ctx.client}, {"generated_at", ctx.generated_at}}},
                {"scope", {{"targets", ctx.scope}, {"authorization", ctx.authorization}}},
                {"method",
                 {{"activities", ctx.methods},
                  {"scan", {{"tool", scan.meta.tool_version},
                            {"started", scan.meta.started},
                            {"finished", scan.meta.finished},
                            {"parameters", scan.meta.parameters},
                            {"hosts_scanned", scan.hosts.size()},
                            {"hosts_alive", alive}}}}},
                {"summary", counts_json(counts)},
                {"findings", findings_array(ordered)},
                {"remediation", std::move(rem)}};
    return doc.dump(2) + "\n";
  }

  std::ostringstream md;
  md << "# Penetration Test Report: " << ctx.engagement_id << "\n\n";
  if (!ctx.client.empty()) md << "Client: " << ctx.client << "  \n";
  md << "Generated: " << ctx.generated_at << "\n\n";

  md << "## Scope\n\n";
  if (ctx.scope.empty()) md << "- (no targets recorded)\n";
  for (const auto& s : ctx.scope) md << "- " << s << '\n';
  md << "\nAuthorization: " << (ctx.authorization.empty() ? "(not recorded)" : ctx.authorization) << "\n\n";

  md << "## Method\n\n";
  for (const auto& m : ctx.methods) md << "- " << m << '\n';
  md << "- TCP connect scan with " << scan.meta.tool_version << " from " << scan.meta.started << " to "
     << scan.meta.finished << "; " << scan.hosts.size() << " hosts scanned, " << alive << " alive\n";
  md << "- Findings are suspicions derived from service banners, ports and OS guesses; no exploit traffic was sent\n\n";

  md << "## Findings\n\n";
  md << "| Critical | High | Medium | Low | Info |\n|---|---|---|---|---|\n|";
  for (auto c : counts) md << ' ' << c << " |";
  md << "\n\n";
  if (ordered.empty()) {
    md << "No findings.\n\n";
  } else {
    for (auto sev : kSeverities) {
      if (counts[static_cast<std::size_t>(sev)] == 0) continue;
      md << "### " << to_string(sev) << "\n\n";
      for (const auto& f : ordered) {
        if (f.severity == sev) write_md_finding(md, f);
      }
      md << '\n';
    }
  }

  md << "## Remediation\n\n";
  if (remediation.empty()) md << "No remediation required.\n";
  for (const auto& [id, f] : remediation) md << "- `" << id << "` (" << to_string(f->severity) << "): " << f->advice << '\n';
  return md.str();
}

DiffReport retest_diff(const std::vector<Finding>& baseline, const std::vector<Finding>& current) {
  std::map<std::string, const Finding*> base;
  std::map<std::string, const Finding*> cur;
  for (const auto& f : baseline) base.emplace(f.identity_key(), &f);
  for (const auto& f : current) cur.emplace(f.identity_key(), &f);

  DiffReport d;
  for (const auto& [key, f] : base) {
    if (cur.count(key)) d.persistent.push_back(*cur.at(key));
    else d.fixed.push_back(*f);
  }
  for (const auto& [key, f] : cur) {
    if (!base.count(key)) d.added.push_back(*f);
  }
  for (auto* v : {&d.fixed, &d.persistent, &d.added}) std::sort(v->begin(), v->end(), finding_less);
  return d;
}

std::vector<Finding> blocking(const DiffReport& diff, Severity threshold) {
  std::vector<Finding> out;
  for (const auto& f : diff.persistent) {
    if (f.severity <= threshold) out.push_back(f);
  }
  return out;
}

json to_json(const Finding& f) {
  return {{"host", f.host},
          {"port", f.port ? json(*f.port) : json(nullptr)},
          {"rule", f.rule_id},
          {"name", f.name},
          {"severity", to_string(f.severity)},
          {"evidence", f.evidence},
          {"advice", f.advice},
          {"refs", f.refs},
          {"key", f.identity_key()}};
}

Finding finding_from_json(const json& j, const std::string& path) {
  try {
    Finding f;
    f.host = j.at("host").get<std::string>();
    if (j.contains("port") && !j["port"].is_null()) f.port = j["port"].get<std::uint16_t>();
    f.rule_id = j.at("rule").get<std::string>();
    f.name = j.value("name", f.rule_id);
    f.severity = severity_from_string(j.at("severity").get<std::string>());
    f.evidence = j.value("evidence", std::string());
    f.advice = j.value("advice", std::string());
    f.refs = j.value("refs", std::vector<std::string>{});
    return f;
  } catch (const std::exception& e) {
    throw SchemaError(path, e.what());
  }
}

json findings_document(const std::vector<Finding>& findings) {
  auto sorted = findings;
  std::sort(sorted.begin(), sorted.end(), finding_less);
  return {{"schema", "v1"}, {"summary", counts_json(summarize(sorted))}, {"findings", findings_array(sorted)}};
}

std::vector<Finding> findings_from_document(const json& doc) {
  check_schema(doc, "findings");
  if (!doc.contains("findings")) throw SchemaError("/findings", "missing field");
  auto out = findings_from_array(doc["findings"], "/findings");
  std::set<std::string> keys;
  for (const auto& f : out) {
    if (!keys.insert(f.identity_key()).second) throw SchemaError("/findings", "duplicate finding " + f.identity_key());
  }
  return out;
}

json to_json(const DiffReport& diff) {
  json counts = json::object();
  counts["fixed"] = diff.fixed.size();
  counts["persistent"] = diff.persistent.size();
  counts["new"] = diff.added.size();
  return {{"schema", "v1"},
          {"counts", counts},
          {"fixed", findings_array(diff.fixed)},
          {"persistent", findings_array(diff.persistent)},
          {"new", findings_array(diff.added)}};
}

DiffReport diff_from_json(const json& doc) {
  check_schema(doc, "diff");
  DiffReport d;
  const std::array<std::pair<const char*, std::vector<Finding>*>, 3> parts = {
      {{"fixed", &d.fixed}, {"persistent", &d.persistent}, {"new", &d.added}}};
  for (const auto& [key, target] : parts) {
    if (!doc.contains(key)) throw SchemaError(std::string("/") + key, "missing field");
    *target = findings_from_array(doc[key], std::string("/") + key);
  }
  return d;
}

}  // namespace ptk::findings
