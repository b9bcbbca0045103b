#include "ptk/engagement.hpp"

#include "ptk/digest.hpp"
#include "ptk/error.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace ptk::engagement {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 8> kPhaseNames = {
    "Preparation",     "InformationGathering", "VulnerabilityDetection", "PenetrationTesting",
    "PostPenetration", "Reporting",            "RetestClosure",          "Closed"};
constexpr std::array<const char*, 8> kEventNames = {"authorize",   "attach-scan",   "attach-findings", "finish-testing",
                                                    "finish-post", "attach-report", "retest",          "close"};
constexpr std::array<const char*, 6> kArtifactNames = {"scan", "findings", "plan", "report", "diff", "notes"};

[[noreturn]] void refuse(const EngagementState& s, Event e, const std::string& why) {
  throw Error(std::string("cannot '") + to_string(e) + "' in phase " + to_string(s.phase) + ": " + why);
}

void require_artifact(const EngagementState& s, Event e, ArtifactKind kind) {
  if (!s.latest(kind)) {
    refuse(s, e, std::string("no ") + to_string(kind) + " artifact attached for round " + std::to_string(s.retest_count));
  }
}

json counts_json(const findings::SeverityCounts& c) {
  json out = json::array();
  for (auto v : c) out.push_back(v);
  return out;
}

findings::SeverityCounts counts_from_json(const json& j) {
  findings::SeverityCounts c{};
  if (!j.is_array() || j.size() != c.size()) throw Error("severity counts must be an array of 5");
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = j[i].get<std::size_t>();
  return c;
}

}  // namespace

const char* to_string(Phase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }
const char* to_string(Event e) { return kEventNames[static_cast<std::size_t>(e)]; }
const char* to_string(ArtifactKind k) { return kArtifactNames[static_cast<std::size_t>(k)]; }

Phase phase_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kPhaseNames.size(); ++i) {
    if (s == kPhaseNames[i]) return kPhases[i];
  }
  throw Error("unknown phase '" + std::string(s) + "'");
}

Event event_from_string(std::string_view s) {
  std::string norm(s);
  std::replace(norm.begin(), norm.end(), '_', '-');
  for (std::size_t i = 0; i < kEventNames.size(); ++i) {
    if (norm == kEventNames[i]) return kEvents[i];
  }
  throw Error("unknown event '" + std::string(s) + "'");
}

ArtifactKind artifact_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kArtifactNames.size(); ++i) {
    if (s == kArtifactNames[i]) return static_cast<ArtifactKind>(i);
  }
  throw Error("unknown artifact kind '" + std::string(s) + "'");
}

const std::vector<Transition>& transitions() {
  static const std::vector<Transition> edges = {
      {Phase::Preparation, Event::Authorize, Phase::InformationGathering},
      {Phase::InformationGathering, Event::AttachScan, Phase::VulnerabilityDetection},
      {Phase::VulnerabilityDetection, Event::AttachFindings, Phase::PenetrationTesting},
      {Phase::PenetrationTesting, Event::FinishTesting, Phase::PostPenetration},
      {Phase::PostPenetration, Event::FinishPost, Phase::Reporting},
      {Phase::Reporting, Event::AttachReport, Phase::RetestClosure},
      {Phase::RetestClosure, Event::Retest, Phase::VulnerabilityDetection},
      {Phase::RetestClosure, Event::Close, Phase::Closed},
  };
  return edges;
}

std::optional<Phase> transition_target(Phase from, Event event) {
  for (const auto& t : transitions()) {
    if (t.from == from && t.event == event) return t.to;
  }
  return std::nullopt;
}

const Artifact* EngagementState::latest(ArtifactKind kind) const {
  for (auto it = artifacts.rbegin(); it != artifacts.rend(); ++it) {
    if (it->kind == kind && it->round == retest_count) return &*it;
  }
  return nullptr;
}

const RetestOutcome* EngagementState::current_outcome() const {
  for (auto it = retests.rbegin(); it != retests.rend(); ++it) {
    if (it->round == retest_count) return &*it;
  }
  return nullptr;
}

EngagementState new_engagement(std::string id, std::string client, std::vector<std::string> scope) {
  if (id.empty()) throw Error("engagement id must not be empty");
  EngagementState s;
  s.id = std::move(id);
  s.client = std::move(client);
  s.scope = std::move(scope);
  return s;
}

EngagementState advance(const EngagementState& state, Event event) {
  const auto target = transition_target(state.phase, event);
  if (!target) refuse(state, event, "no such transition");

  switch (event) {
    case Event::Authorize:
      if (state.authorization.empty()) refuse(state, event, "authorization note not recorded");
      break;
    case Event::AttachScan: require_artifact(state, event, ArtifactKind::Scan); break;
    case Event::AttachFindings: require_artifact(state, event, ArtifactKind::Findings); break;
    case Event::AttachReport: require_artifact(state, event, ArtifactKind::Report); break;
    case Event::Close: {
      const auto* outcome = state.current_outcome();
      if (!outcome) refuse(state, event, "no retest outcome recorded for round " + std::to_string(state.retest_count));
      for (auto sev : findings::kSeverities) {
        if (sev > state.closure_threshold) break;
        const auto n = outcome->persistent[static_cast<std::size_t>(sev)];
        if (n > 0) {
          throw PolicyError(std::string("unresolved ") + findings::to_string(sev) + ": " + std::to_string(n) +
                            " persistent " + findings::to_string(sev) + " finding(s) block closure");
        }
      }
      break;
    }
    case Event::FinishTesting:
    case Event::FinishPost:
    case Event::Retest: break;
  }

  EngagementState next = state;
  next.phase = *target;
  if (event == Event::Retest) ++next.retest_count;
  return next;
}

EngagementState record_authorization(const EngagementState& state, std::string note) {
  if (note.empty()) throw Error("authorization note must not be empty");
  EngagementState next = state;
  next.authorization = std::move(note);
  return next;
}

EngagementState attach_artifact(const EngagementState& state, ArtifactKind kind, const std::filesystem::path& path) {
  if (state.phase == Phase::Closed) throw Error("engagement is closed");
  Artifact a;
  a.kind = kind;
  a.path = std::filesystem::absolute(path).lexically_normal().string();
  a.sha256 = sha256_file(path);
  a.phase = state.phase;
  a.round = state.retest_count;
  EngagementState next = state;
  next.artifacts.push_back(std::move(a));
  return next;
}

EngagementState record_retest(const EngagementState& state, const findings::DiffReport& diff) {
  if (state.phase != Phase::RetestClosure) {
    throw Error(std::string("retest outcomes are recorded in phase RetestClosure, not ") + to_string(state.phase));
  }
  RetestOutcome o;
  o.round = state.retest_count;
  o.persistent = findings::summarize(diff.persistent);
  o.fixed = findings::summarize(diff.fixed);
  o.added = findings::summarize(diff.added);
  EngagementState next = state;
  std::erase_if(next.retests, [&](const RetestOutcome& r) { return r.round == o.round; });
  next.retests.push_back(o);
  return next;
}

json to_json(const EngagementState& s) {
  json artifacts = json::array();
  for (const auto& a : s.artifacts) {
    artifacts.push_back({{"kind", to_string(a.kind)},
                         {"path", a.path},
                         {"sha256", a.sha256},
                         {"phase", to_string(a.phase)},
                         {"round", a.round}});
  }
  json retests = json::array();
  for (const auto& r : s.retests) {
    retests.push_back({{"round", r.round},
                       {"persistent", counts_json(r.persistent)},
                       {"fixed", counts_json(r.fixed)},
                       {"new", counts_json(r.added)}});
  }
  return {{"schema", "v1"},
          {"id", s.id},
          {"client", s.client},
          {"scope", s.scope},
          {"authorization", s.authorization},
          {"phase", to_string(s.phase)},
          {"retest_count", s.retest_count},
          {"closure_threshold", findings::to_string(s.closure_threshold)},
          {"artifacts", std::move(artifacts)},
          {"retests", std::move(retests)},
          {"host_ids", s.host_ids}};
}

EngagementState state_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "engagement state must be an object");
  if (doc.value("schema", std::string()) != "v1") throw SchemaError("/schema", "unsupported engagement schema");
  try {
    EngagementState s;
    s.id = doc.at("id").get<std::string>();
    s.client = doc.value("client", std::string());
    s.scope = doc.value("scope", std::vector<std::string>{});
    s.authorization = doc.value("authorization", std::string());
    s.phase = phase_from_string(doc.at("phase").get<std::string>());
    s.retest_count = doc.at("retest_count").get<int>();
    if (s.retest_count < 0) throw SchemaError("/retest_count", "negative retest counter");
    s.closure_threshold = findings::severity_from_string(doc.value("closure_threshold", std::string("High")));
    for (const auto& a : doc.at("artifacts")) {
      s.artifacts.push_back({artifact_kind_from_string(a.at("kind").get<std::string>()), a.at("path").get<std::string>(),
                             a.at("sha256").get<std::string>(), phase_from_string(a.at("phase").get<std::string>()),
                             a.at("round").get<int>()});
    }
    for (const auto& r : doc.value("retests", json::array())) {
      s.retests.push_back({r.at("round").get<int>(), counts_from_json(r.at("persistent")),
                           counts_from_json(r.at("fixed")), counts_from_json(r.at("new"))});
    }
    s.host_ids = doc.value("host_ids", std::map<std::string, std::string>{});
    return s;
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError("", std::string("corrupt engagement state: ") + e.what());
  }
}

void save_state(const EngagementState& state, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(state).dump(2) + "\n");
}

std::vector<std::string> verify_artifacts(const EngagementState& state) {
  std::vector<std::string> warnings;
  for (const auto& a : state.artifacts) {
    if (!std::filesystem::exists(a.path)) {
      warnings.push_back("artifact missing: " + a.path);
      continue;
    }
    try {
      if (sha256_file(a.path) != a.sha256) warnings.push_back("artifact modified since attach: " + a.path);
    } catch (const Error& e) {
      warnings.push_back(std::string("artifact unreadable: ") + e.what());
    }
  }
  return warnings;
}

LoadedState load_state(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("corrupt engagement state " + path.string() + ": " + e.what());
  }
  LoadedState out{state_from_json(doc), {}};
  out.warnings = verify_artifacts(out.state);
  return out;
}

StateLock::StateLock(const std::filesystem::path& state_path) {
  const auto lock_path = state_path.string() + ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open lock file " + lock_path + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("engagement state " + state_path.string() + " is in use by another process");
  }
}

StateLock::~StateLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::map<std::string, std::string> map_addresses(const EngagementState& state, const scanner::ScanReport& report) {
  auto table = state.host_ids;
  for (const auto& h : report.hosts) {
    if (h.alive) table.emplace(h.address, "h-" + h.address);
  }
  return table;
}

}  // namespace ptk::engagement
