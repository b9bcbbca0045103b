// ptk: command-line front end for the planning, scoring, scanning and
// engagement-tracking library.

#include "ptk/digest.hpp"
#include "ptk/engagement.hpp"
#include "ptk/error.hpp"
#include "ptk/findings.hpp"
#include "ptk/planner.hpp"
#include "ptk/scanner.hpp"
#include "ptk/toolscore.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <functional>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitPolicy = 3;

struct Globals {
  std::string state_path = "engagement.json";
  bool state_given = false;
  bool json_out = false;
  bool verbose = false;
};

json read_json(const fs::path& path) {
  try {
    return json::parse(ptk::read_file(path));
  } catch (const json::parse_error& e) {
    throw ptk::Error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-") {
    std::cout << content;
  } else {
    ptk::write_file_atomic(out_path, content);
  }
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

/// Runs `fn` on the engagement state under the advisory lock and saves the result.
template <class Fn>
void with_state(const Globals& g, Fn&& fn) {
  ptk::engagement::StateLock lock(g.state_path);
  auto loaded = ptk::engagement::load_state(g.state_path);
  for (const auto& w : loaded.warnings) warn(w);
  auto next = fn(loaded.state);
  ptk::engagement::save_state(next, g.state_path);
}

/// Artifacts are attached only when the caller named an engagement file.
void maybe_attach(const Globals& g, ptk::engagement::ArtifactKind kind, const std::string& path,
                  const std::function<void(ptk::engagement::EngagementState&)>& extra = {}) {
  if (!g.state_given) return;
  if (path.empty() || path == "-") {
    warn("output went to stdout; nothing attached to the engagement");
    return;
  }
  with_state(g, [&](const ptk::engagement::EngagementState& s) {
    auto next = ptk::engagement::attach_artifact(s, kind, path);
    if (extra) extra(next);
    if (g.verbose) std::cerr << "attached " << ptk::engagement::to_string(kind) << " artifact " << path << '\n';
    return next;
  });
}

// ---------------------------------------------------------------------------

void cmd_init(const Globals& g, const std::string& id, const std::string& client, const std::vector<std::string>& scope,
              const std::string& threshold, bool force) {
  if (fs::exists(g.state_path) && !force) {
    throw ptk::Error("engagement state " + g.state_path + " already exists (use --force to overwrite)");
  }
  ptk::engagement::StateLock lock(g.state_path);
  auto s = ptk::engagement::new_engagement(id, client, scope);
  s.closure_threshold = ptk::findings::severity_from_string(threshold);
  ptk::engagement::save_state(s, g.state_path);
  if (g.json_out) std::cout << ptk::engagement::to_json(s).dump(2) << '\n';
  else std::cout << "initialized engagement " << id << " in " << g.state_path << '\n';
}

void cmd_advance(const Globals& g, const std::string& event_name, const std::string& note, const std::string& artifact) {
  using namespace ptk::engagement;
  const Event event = event_from_string(event_name);
  with_state(g, [&](const EngagementState& s) {
    EngagementState cur = s;
    if (event == Event::Authorize && !note.empty()) cur = record_authorization(cur, note);
    if (!artifact.empty()) {
      const auto kind = event == Event::AttachScan       ? ArtifactKind::Scan
                        : event == Event::AttachFindings ? ArtifactKind::Findings
                        : event == Event::AttachReport   ? ArtifactKind::Report
                                                         : ArtifactKind::Notes;
      cur = attach_artifact(cur, kind, artifact);
    }
    auto next = advance(cur, event);
    if (g.json_out) {
      std::cout << json{{"from", to_string(s.phase)}, {"event", to_string(event)}, {"to", to_string(next.phase)},
                        {"retest_count", next.retest_count}}
                       .dump()
                << '\n';
    } else {
      std::cout << to_string(s.phase) << " -> " << to_string(next.phase) << '\n';
    }
    return next;
  });
}

struct ScanArgs {
  std::string targets;
  std::string ports;
  std::string discover = "tcp";
  int timeout_ms = 1000;
  int banner_timeout_ms = 2000;
  std::size_t parallel = 64;
  std::string out;
  bool authorized = false;
};

void cmd_scan(const Globals& g, const ScanArgs& a) {
  namespace sc = ptk::scanner;
  sc::ScanConfig cfg;
  cfg.targets = a.targets;
  cfg.ports = a.ports;
  cfg.discovery = sc::discovery_method_from_string(a.discover);
  cfg.discovery_timeout = sc::Millis(a.timeout_ms);
  cfg.connect_timeout = sc::Millis(a.timeout_ms);
  cfg.banner_timeout = sc::Millis(a.banner_timeout_ms);
  cfg.parallelism = a.parallel;
  cfg.authorized = a.authorized;
  if (a.parallel == 0) throw ptk::Error("--parallel must be at least 1");

  const auto report = sc::run_scan(cfg);
  for (const auto& w : report.meta.warnings) warn(w);
  emit(a.out, sc::to_json(report).dump(2) + "\n");

  if (!a.out.empty() && a.out != "-") {
    std::ostream& os = g.json_out ? std::cerr : std::cout;
    for (const auto& h : report.hosts) {
      if (!h.alive) {
        if (g.verbose) os << h.address << " down\n";
        continue;
      }
      os << h.address << " up (" << sc::to_string(h.discovery) << ")";
      if (!h.os.empty()) os << " os " << h.os.front().name << ' ' << fixed4(h.os.front().confidence);
      os << '\n';
      for (const auto& p : h.ports) {
        if (p.state == sc::PortState::Closed && !g.verbose) continue;
        os << "  " << p.port << "/tcp " << sc::to_string(p.state);
        if (p.service) os << ' ' << p.service->name << ' ' << p.service->version;
        os << '\n';
      }
    }
    os << "peak in-flight connections: " << report.meta.peak_in_flight << '\n';
  }
  maybe_attach(g, ptk::engagement::ArtifactKind::Scan, a.out, [&](ptk::engagement::EngagementState& s) {
    s.host_ids = ptk::engagement::map_addresses(s, report);
  });
}

ptk::findings::KnowledgeBase load_kb_arg(const std::string& kb) {
  if (kb.empty() || kb == "builtin") return ptk::findings::builtin_kb();
  return ptk::findings::load_kb(read_json(kb));
}

void cmd_findings(const Globals& g, const std::string& scan_path, const std::string& kb, const std::string& out) {
  namespace fd = ptk::findings;
  const auto report = ptk::scanner::scan_report_from_json(read_json(scan_path));
  const auto found = fd::match_findings(report, load_kb_arg(kb));
  emit(out, fd::findings_document(found).dump(2) + "\n");
  if (!out.empty() && out != "-") {
    const auto c = fd::summarize(found);
    std::cout << found.size() << " findings (Critical " << c[0] << ", High " << c[1] << ", Medium " << c[2]
              << ", Low " << c[3] << ", Info " << c[4] << ")\n";
  }
  maybe_attach(g, ptk::engagement::ArtifactKind::Findings, out);
}

struct PlanArgs {
  std::string network;
  std::string agent = "greedy";
  std::uint64_t seed = 0;
  std::size_t max_steps = 50;
  std::size_t episodes = 500;
  std::string trace;
};

void cmd_plan(const Globals& g, const PlanArgs& a) {
  namespace pl = ptk::planner;
  const auto sim = pl::load_sim(read_json(a.network));
  pl::Policy policy = pl::GreedyPolicy{};
  if (a.agent == "q") {
    pl::QConfig cfg;
    cfg.seed = a.seed;
    cfg.episodes = a.episodes;
    policy = pl::q_train(sim, cfg);
  } else if (a.agent != "greedy") {
    throw ptk::Error("unknown agent '" + a.agent + "' (expected greedy or q)");
  }
  const auto trace = pl::run_episode(sim, policy, a.max_steps);
  const auto lines = pl::to_json_lines(trace);
  if (!a.trace.empty()) ptk::write_file_atomic(a.trace, lines);

  if (g.json_out) {
    std::cout << lines;
  } else {
    std::cout << "initial entropy " << fixed4(trace.initial_entropy) << " bits\n";
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      const auto& s = trace.steps[i];
      std::cout << std::setw(3) << i + 1 << ". " << pl::to_string(s.action.kind) << ' ' << s.action.host_id;
      if (s.action.kind != pl::ActionKind::OsScan) std::cout << '[' << s.action.index << ']';
      if (!s.action.vuln.empty()) std::cout << ' ' << s.action.vuln;
      std::cout << "  gain " << fixed4(s.gain) << "  H " << fixed4(s.entropy_after) << '\n';
    }
    std::cout << "terminal " << pl::to_string(trace.terminal) << ", total gain " << fixed4(trace.total_gain())
              << ", final entropy " << fixed4(trace.final_entropy()) << '\n';
  }
  if (g.state_given && !a.trace.empty()) maybe_attach(g, ptk::engagement::ArtifactKind::Plan, a.trace);
}

void cmd_score(const Globals& g, const std::string& scheme_arg, const std::string& catalog_arg, std::size_t recommend) {
  namespace ts = ptk::toolscore;
  const auto catalog =
      catalog_arg.empty() || catalog_arg == "builtin" ? ts::builtin_catalog() : ts::catalog_from_json(read_json(catalog_arg));
  std::optional<ts::WeightScheme> scheme;
  if (scheme_arg == "balanced" || scheme_arg == "enterprise" || scheme_arg == "redteam") {
    scheme = ts::builtin_scheme(scheme_arg);
  } else {
    scheme = ts::scheme_from_json(read_json(scheme_arg), fs::path(scheme_arg).stem().string());
  }
  const auto ranked = ts::rank(catalog, *scheme);
  std::optional<ts::Recommendation> rec;
  if (recommend > 0) rec = ts::recommend_combination(catalog, *scheme, recommend);

  if (g.json_out) {
    json out = {{"scheme", scheme->name()}, {"ranking", json::array()}};
    for (const auto& r : ranked) out["ranking"].push_back({{"name", r.name}, {"score", r.score}});
    if (rec) out["recommendation"] = {{"members", rec->members}, {"name", rec->combined.name}, {"score", rec->score}};
    std::cout << out.dump(2) << '\n';
    return;
  }
  std::cout << "scheme " << scheme->name() << '\n';
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    std::cout << std::setw(3) << i + 1 << ". " << std::left << std::setw(28) << ranked[i].name << std::right
              << fixed4(ranked[i].score) << '\n';
  }
  if (rec) std::cout << "recommended combination: " << rec->combined.name << " (" << fixed4(rec->score) << ")\n";
}

struct ReportArgs {
  std::string format = "md";
  std::string scan;
  std::string findings;
  std::string out;
  std::string generated_at;
  std::string id;
};

void cmd_report(const Globals& g, const ReportArgs& a) {
  namespace fd = ptk::findings;
  const auto format = fd::report_format_from_string(a.format);
  fd::ReportContext ctx;
  ctx.engagement_id = a.id;
  std::string scan_path = a.scan;
  std::string findings_path = a.findings;
  if (g.state_given) {
    auto loaded = ptk::engagement::load_state(g.state_path);
    for (const auto& w : loaded.warnings) warn(w);
    const auto& s = loaded.state;
    if (ctx.engagement_id.empty()) ctx.engagement_id = s.id;
    ctx.client = s.client;
    ctx.scope = s.scope;
    ctx.authorization = s.authorization;
    if (scan_path.empty())
      if (const auto* art = s.latest(ptk::engagement::ArtifactKind::Scan)) scan_path = art->path;
    if (findings_path.empty())
      if (const auto* art = s.latest(ptk::engagement::ArtifactKind::Findings)) findings_path = art->path;
  }
  if (scan_path.empty() || findings_path.empty()) throw ptk::Error("report needs --scan and --findings");
  const auto scan = ptk::scanner::scan_report_from_json(read_json(scan_path));
  const auto found = fd::findings_from_document(read_json(findings_path));
  if (ctx.scope.empty()) {
    if (auto t = scan.meta.parameters.find("targets"); t != scan.meta.parameters.end() && t->is_string())
      ctx.scope.push_back(t->get<std::string>());
  }
  ctx.generated_at = a.generated_at.empty() ? ptk::scanner::utc_timestamp() : a.generated_at;
  ctx.methods = {"Host discovery and TCP connect port scan", "Banner collection and service fingerprinting",
                 "Knowledge-base matching of service, version, port and OS evidence"};
  emit(a.out, fd::render_report(ctx, scan, found, format));
  maybe_attach(g, ptk::engagement::ArtifactKind::Report, a.out);
}

void cmd_retest(const Globals& g, const std::string& baseline, const std::string& current, const std::string& out) {
  namespace fd = ptk::findings;
  const auto diff = fd::retest_diff(fd::findings_from_document(read_json(baseline)),
                                    fd::findings_from_document(read_json(current)));
  emit(out, fd::to_json(diff).dump(2) + "\n");
  const bool to_stdout = out.empty() || out == "-";
  if (!(to_stdout && g.json_out)) {
    std::ostream& os = to_stdout ? std::cerr : std::cout;
    os << "fixed " << diff.fixed.size() << ", persistent " << diff.persistent.size() << ", new " << diff.added.size()
       << '\n';
    for (const auto& f : diff.persistent) os << "  persistent " << fd::to_string(f.severity) << ' ' << f.identity_key() << '\n';
  }
  if (!g.state_given) return;
  with_state(g, [&](const ptk::engagement::EngagementState& s) {
    auto next = ptk::engagement::record_retest(s, diff);
    if (!to_stdout) next = ptk::engagement::attach_artifact(next, ptk::engagement::ArtifactKind::Diff, out);
    const auto blockers = fd::blocking(diff, next.closure_threshold);
    if (!blockers.empty()) warn(std::to_string(blockers.size()) + " persistent finding(s) at or above " +
                                fd::to_string(next.closure_threshold) + " block closure");
    return next;
  });
}

void cmd_status(const Globals& g) {
  using namespace ptk::engagement;
  const auto loaded = load_state(g.state_path);
  const auto& s = loaded.state;
  std::vector<std::string> legal;
  for (const auto& t : transitions()) {
    if (t.from == s.phase) legal.emplace_back(to_string(t.event));
  }
  if (g.json_out) {
    auto doc = to_json(s);
    doc["warnings"] = loaded.warnings;
    doc["next_events"] = legal;
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::cout << "engagement " << s.id;
  if (!s.client.empty()) std::cout << " (" << s.client << ")";
  std::cout << "\nphase        " << to_string(s.phase) << "\nretest round " << s.retest_count
            << "\nauthorized   " << (s.authorization.empty() ? "no" : s.authorization) << "\nthreshold    "
            << ptk::findings::to_string(s.closure_threshold) << "\nnext events  ";
  for (std::size_t i = 0; i < legal.size(); ++i) std::cout << (i ? ", " : "") << legal[i];
  std::cout << (legal.empty() ? "(none)\n" : "\n");
  for (const auto& a : s.artifacts) {
    std::cout << "  [" << a.round << "] " << std::left << std::setw(9) << to_string(a.kind) << std::right << ' '
              << a.sha256.substr(0, 12) << ' ' << a.path << '\n';
  }
  if (const auto* o = s.current_outcome()) {
    std::cout << "retest outcome: persistent";
    for (std::size_t i = 0; i < o->persistent.size(); ++i) std::cout << ' ' << o->persistent[i];
    std::cout << '\n';
  }
  for (const auto& w : loaded.warnings) warn(w);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penetration-test planning, scoring, scanning and engagement tracking"};
  app.require_subcommand(1);
  Globals g;
  auto* state_opt = app.add_option("--state", g.state_path, "Engagement state file")->capture_default_str();
  app.add_flag("--json", g.json_out, "Machine-readable output");
  app.add_flag("-v,--verbose", g.verbose, "Verbose diagnostics");
  app.set_version_flag("--version", ptk::scanner::kToolVersion);

  // init
  std::string init_id, init_client, init_threshold = "High";
  std::vector<std::string> init_scope;
  bool init_force = false;
  auto* init = app.add_subcommand("init", "Create an engagement state file");
  init->add_option("--id", init_id, "Engagement id")->required();
  init->add_option("--client", init_client, "Client name");
  init->add_option("--scope", init_scope, "Target specs in scope");
  init->add_option("--threshold", init_threshold, "Lowest severity that blocks closure")->capture_default_str();
  init->add_flag("--force", init_force, "Overwrite an existing state file");

  // advance
  std::string adv_event, adv_note, adv_artifact;
  auto* adv = app.add_subcommand("advance", "Apply a workflow event");
  adv->add_option("event", adv_event,
                  "authorize | attach-scan | attach-findings | finish-testing | finish-post | attach-report | retest | close")
      ->required();
  adv->add_option("--note", adv_note, "Authorization note (authorize)");
  adv->add_option("--artifact", adv_artifact, "Attach this file before applying the event");

  // scan
  ScanArgs scan_args;
  auto* scan = app.add_subcommand("scan", "TCP connect scan with banner grabbing");
  scan->add_option("--targets", scan_args.targets, "a.b.c.d, CIDR or last-octet range list")->required();
  scan->add_option("--ports", scan_args.ports, "Port list and ranges (default: common service ports)");
  scan->add_option("--discover", scan_args.discover, "icmp | tcp | assume")->capture_default_str();
  scan->add_option("--timeout-ms", scan_args.timeout_ms, "Discovery and connect timeout")->capture_default_str()
      ->check(CLI::Range(1, 600000));
  scan->add_option("--banner-timeout-ms", scan_args.banner_timeout_ms, "Banner read window")->capture_default_str()
      ->check(CLI::Range(0, 600000));
  scan->add_option("--parallel", scan_args.parallel, "Maximum concurrent connections")->capture_default_str()
      ->check(CLI::Range(1, 4096));
  scan->add_option("--out", scan_args.out, "Scan report path (default stdout)");
  scan->add_flag("--i-am-authorized", scan_args.authorized,
                 "Acknowledge written authorization for targets outside loopback and private ranges");

  // findings
  std::string fd_scan, fd_kb = "builtin", fd_out;
  auto* fnd = app.add_subcommand("findings", "Match a scan report against the knowledge base");
  fnd->add_option("--scan", fd_scan, "Scan report")->required();
  fnd->add_option("--kb", fd_kb, "builtin or a KB JSON file")->capture_default_str();
  fnd->add_option("--out", fd_out, "Findings path (default stdout)");

  // plan
  PlanArgs plan_args;
  auto* plan = app.add_subcommand("plan", "Entropy-guided attack-path planning on a simulated network");
  plan->add_option("--network", plan_args.network, "Network spec JSON")->required();
  plan->add_option("--agent", plan_args.agent, "greedy | q")->capture_default_str();
  plan->add_option("--seed", plan_args.seed, "Q-learning seed")->capture_default_str();
  plan->add_option("--max-steps", plan_args.max_steps, "Episode step limit")->capture_default_str()
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  plan->add_option("--episodes", plan_args.episodes, "Q-learning training episodes")->capture_default_str();
  plan->add_option("--trace", plan_args.trace, "Write the episode trace as JSON lines");

  // score
  std::string sc_scheme = "balanced", sc_catalog = "builtin";
  std::size_t sc_recommend = 0;
  auto* score = app.add_subcommand("score", "Rank tools under a weight scheme");
  score->add_option("--scheme", sc_scheme, "balanced | enterprise | redteam | scheme JSON")->capture_default_str();
  score->add_option("--catalog", sc_catalog, "builtin or a catalog JSON file")->capture_default_str();
  score->add_option("--recommend", sc_recommend, "Recommend the best combination of up to K tools")
      ->check(CLI::Range(0, 3));

  // report
  ReportArgs rep_args;
  auto* rep = app.add_subcommand("report", "Render the engagement report");
  rep->add_option("--format", rep_args.format, "md | json")->capture_default_str();
  rep->add_option("--scan", rep_args.scan, "Scan report (default: engagement's latest)");
  rep->add_option("--findings", rep_args.findings, "Findings (default: engagement's latest)");
  rep->add_option("--out", rep_args.out, "Report path (default stdout)");
  rep->add_option("--generated-at", rep_args.generated_at, "Timestamp to print (default: now, UTC)");
  rep->add_option("--id", rep_args.id, "Engagement id when no state file is used");

  // retest
  std::string rt_base, rt_cur, rt_out;
  auto* rt = app.add_subcommand("retest", "Diff two findings documents");
  rt->add_option("--baseline", rt_base, "Earlier findings")->required();
  rt->add_option("--current", rt_cur, "Later findings")->required();
  rt->add_option("--out", rt_out, "Diff path (default stdout)");

  auto* status = app.add_subcommand("status", "Show engagement state");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  g.state_given = state_opt->count() > 0;

  try {
    if (*init) cmd_init(g, init_id, init_client, init_scope, init_threshold, init_force);
    else if (*adv) cmd_advance(g, adv_event, adv_note, adv_artifact);
    else if (*scan) cmd_scan(g, scan_args);
    else if (*fnd) cmd_findings(g, fd_scan, fd_kb, fd_out);
    else if (*plan) cmd_plan(g, plan_args);
    else if (*score) cmd_score(g, sc_scheme, sc_catalog, sc_recommend);
    else if (*rep) cmd_report(g, rep_args);
    else if (*rt) cmd_retest(g, rt_base, rt_cur, rt_out);
    else if (*status) cmd_status(g);
  } catch (const ptk::PolicyError& e) {
    std::cerr << "ptk: policy: " << e.what() << '\n';
    return kExitPolicy;
  } catch (const std::exception& e) {
    std::cerr << "ptk: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
