#ifndef PTK_FINDINGS_HPP
#define PTK_FINDINGS_HPP

#include "ptk/scanner.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ptk::findings {

enum class Severity { Critical, High, Medium, Low, Info };

inline constexpr std::array<Severity, 5> kSeverities = {Severity::Critical, Severity::High, Severity::Medium,
                                                        Severity::Low, Severity::Info};

const char* to_string(Severity s);
Severity severity_from_string(std::string_view s);

/// Every present field must hold for a rule to fire.
struct RuleMatch {
  std::optional<std::string> service;         // fingerprinted service name, case-insensitive
  std::optional<std::string> version_prefix;  // dotted prefix of the service version
  std::optional<std::uint16_t> port;
  std::optional<std::string> os_family;  // compared against the top OS guess
  bool operator==(const RuleMatch&) const = default;
};

struct KbRule {
  std::string id;
  RuleMatch match;
  std::string name;
  Severity severity = Severity::Info;
  std::string advice;
  std::vector<std::string> refs;
  bool operator==(const KbRule&) const = default;

  /// Rules with neither a service nor a port are tested once per host.
  bool host_level() const { return !match.service && !match.port; }
};

struct KnowledgeBase {
  std::vector<KbRule> rules;  // sorted by id
};

/// "2.3" matches "2.3", "2.3.4" and "2.3p1" but not "2.30". "unknown" never matches.
bool version_matches(std::string_view version, std::string_view prefix);

/// Schema violations raise SchemaError naming the rule id; duplicate ids are rejected.
KnowledgeBase load_kb(const nlohmann::json& doc);
const KnowledgeBase& builtin_kb();
nlohmann::json to_json(const KnowledgeBase& kb);

struct Finding {
  std::string host;
  std::optional<std::uint16_t> port;
  std::string rule_id;
  std::string name;
  Severity severity = Severity::Info;
  std::string evidence;
  std::string advice;
  std::vector<std::string> refs;
  bool operator==(const Finding&) const = default;

  /// "host|port|rule"; evidence is deliberately excluded.
  std::string identity_key() const;
};

/// Findings for open ports of live hosts, ordered by (host, port, rule id).
std::vector<Finding> match_findings(const scanner::ScanReport& report, const KnowledgeBase& kb);

using SeverityCounts = std::array<std::size_t, 5>;  // indexed by Severity
SeverityCounts summarize(const std::vector<Finding>& findings);

struct ReportContext {
  std::string engagement_id;
  std::string client;
  std::vector<std::string> scope;
  std::string authorization;
  std::string generated_at;  // injected so rendering stays deterministic
  std::vector<std::string> methods;
};

enum class ReportFormat { Json, Markdown };
ReportFormat report_format_from_string(std::string_view s);

std::string render_report(const ReportContext& ctx, const scanner::ScanReport& scan,
                          const std::vector<Finding>& findings, ReportFormat format);

struct DiffReport {
  std::vector<Finding> fixed;       // baseline only
  std::vector<Finding> persistent;  // both; current evidence kept
  std::vector<Finding> added;       // current only
};

DiffReport retest_diff(const std::vector<Finding>& baseline, const std::vector<Finding>& current);

/// Persistent findings at or above `threshold` (Critical is the most severe).
std::vector<Finding> blocking(const DiffReport& diff, Severity threshold);

nlohmann::json to_json(const Finding& f);
Finding finding_from_json(const nlohmann::json& j, const std::string& path = "");

nlohmann::json findings_document(const std::vector<Finding>& findings);
std::vector<Finding> findings_from_document(const nlohmann::json& doc);

nlohmann::json to_json(const DiffReport& diff);
DiffReport diff_from_json(const nlohmann::json& doc);

}  // namespace ptk::findings

#endif  // PTK_FINDINGS_HPP
