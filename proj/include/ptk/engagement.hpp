#ifndef PTK_ENGAGEMENT_HPP
#define PTK_ENGAGEMENT_HPP

#include "ptk/findings.hpp"
#include "ptk/scanner.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ptk::engagement {

enum class Phase {
  Preparation,
  InformationGathering,
  VulnerabilityDetection,
  PenetrationTesting,
  PostPenetration,
  Reporting,
  RetestClosure,
  Closed,
};

enum class Event { Authorize, AttachScan, AttachFindings, FinishTesting, FinishPost, AttachReport, Retest, Close };

inline constexpr std::array<Phase, 8> kPhases = {
    Phase::Preparation,     Phase::InformationGathering, Phase::VulnerabilityDetection, Phase::PenetrationTesting,
    Phase::PostPenetration, Phase::Reporting,            Phase::RetestClosure,          Phase::Closed};
inline constexpr std::array<Event, 8> kEvents = {Event::Authorize,    Event::AttachScan, Event::AttachFindings,
                                                 Event::FinishTesting, Event::FinishPost, Event::AttachReport,
                                                 Event::Retest,        Event::Close};

const char* to_string(Phase p);
const char* to_string(Event e);
Phase phase_from_string(std::string_view s);
/// Accepts the kebab-case CLI spelling ("attach-scan").
Event event_from_string(std::string_view s);

struct Transition {
  Phase from;
  Event event;
  Phase to;
};

/// The complete edge set; every other (phase, event) pair is illegal.
const std::vector<Transition>& transitions();
std::optional<Phase> transition_target(Phase from, Event event);

enum class ArtifactKind { Scan, Findings, Plan, Report, Diff, Notes };
const char* to_string(ArtifactKind k);
ArtifactKind artifact_kind_from_string(std::string_view s);

struct Artifact {
  ArtifactKind kind = ArtifactKind::Notes;
  std::string path;
  std::string sha256;
  Phase phase = Phase::Preparation;
  int round = 0;  // retest round the artifact belongs to
  bool operator==(const Artifact&) const = default;
};

/// Outcome of one retest round's diff, kept for the closure guard.
struct RetestOutcome {
  int round = 0;
  findings::SeverityCounts persistent{};
  findings::SeverityCounts fixed{};
  findings::SeverityCounts added{};
  bool operator==(const RetestOutcome&) const = default;
};

struct EngagementState {
  std::string id;
  std::string client;
  std::vector<std::string> scope;
  std::string authorization;
  Phase phase = Phase::Preparation;
  std::vector<Artifact> artifacts;
  int retest_count = 0;
  findings::Severity closure_threshold = findings::Severity::High;
  std::vector<RetestOutcome> retests;
  std::map<std::string, std::string> host_ids;  // address -> host id
  bool operator==(const EngagementState&) const = default;

  /// Latest artifact of `kind` in the current round, if any.
  const Artifact* latest(ArtifactKind kind) const;
  const RetestOutcome* current_outcome() const;
};

EngagementState new_engagement(std::string id, std::string client, std::vector<std::string> scope);

/// Throws naming the phase and event when the edge is missing or its guard
/// fails; closure blocked by persistent findings raises PolicyError.
EngagementState advance(const EngagementState& state, Event event);

EngagementState record_authorization(const EngagementState& state, std::string note);

/// Hashes the file and records it under the current phase and round.
EngagementState attach_artifact(const EngagementState& state, ArtifactKind kind, const std::filesystem::path& path);

EngagementState record_retest(const EngagementState& state, const findings::DiffReport& diff);

nlohmann::json to_json(const EngagementState& state);
EngagementState state_from_json(const nlohmann::json& doc);

void save_state(const EngagementState& state, const std::filesystem::path& path);

struct LoadedState {
  EngagementState state;
  std::vector<std::string> warnings;  // missing or modified artifacts
};

/// Corrupt or truncated files throw; artifact problems become warnings.
LoadedState load_state(const std::filesystem::path& path);

std::vector<std::string> verify_artifacts(const EngagementState& state);

/// Advisory exclusive lock on "<state>.lock", held for the object's lifetime.
class StateLock {
public:
  explicit StateLock(const std::filesystem::path& state_path);
  ~StateLock();
  StateLock(const StateLock&) = delete;
  StateLock& operator=(const StateLock&) = delete;

private:
  int fd_ = -1;
};

/// Existing table plus "h-<addr>" for every live host in the report.
std::map<std::string, std::string> map_addresses(const EngagementState& state, const scanner::ScanReport& report);

}  // namespace ptk::engagement

#endif  // PTK_ENGAGEMENT_HPP
