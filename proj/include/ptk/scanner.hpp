#ifndef PTK_SCANNER_HPP
#define PTK_SCANNER_HPP

#include "ptk/belief.hpp"

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ptk::scanner {

using Millis = std::chrono::milliseconds;

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

/// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  static std::optional<Ipv4> parse(std::string_view text);
  std::string to_string() const;

  bool is_loopback() const { return (value >> 24) == 127; }
  /// RFC 1918 private ranges.
  bool is_private() const;

  auto operator<=>(const Ipv4&) const = default;
};

struct TargetSpec {
  std::vector<Ipv4> addresses;       // sorted, unique
  std::vector<std::uint16_t> ports;  // sorted, unique
};

/// Comma-separated "a.b.c.d", "a.b.c.d/nn" and "a.b.c.d-e" entries. CIDR
/// blocks of /30 or wider exclude the network and broadcast addresses.
std::vector<Ipv4> parse_targets(std::string_view text);

/// Comma-separated ports and "lo-hi" ranges within 1..65535.
std::vector<std::uint16_t> parse_ports(std::string_view text);

/// Empty `ports` selects default_ports().
TargetSpec parse_target_spec(std::string_view targets, std::string_view ports = {});

/// Ports seen in the reference lab scan plus 443, 5900 and 8080.
const std::vector<std::uint16_t>& default_ports();

/// Non-loopback, non-RFC1918 targets need explicit acknowledgment.
bool requires_authorization(const Ipv4& address);

/// Throws PolicyError naming the first target that needs acknowledgment.
void check_authorization(const TargetSpec& spec, bool acknowledged);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

enum class PortState { Open, Closed, Filtered };
enum class DiscoveryMethod { Icmp, TcpProbe, Assumed };

const char* to_string(PortState s);
const char* to_string(DiscoveryMethod m);
PortState port_state_from_string(std::string_view s);
DiscoveryMethod discovery_method_from_string(std::string_view s);

struct ServiceGuess {
  std::string name;
  std::string version = "unknown";
  double confidence = 0.0;
  bool operator==(const ServiceGuess&) const = default;
};

inline constexpr std::size_t kBannerCap = 512;

struct PortResult {
  std::uint16_t port = 0;
  PortState state = PortState::Filtered;
  std::optional<std::string> banner;  // raw bytes, open ports only
  std::optional<ServiceGuess> service;
  bool operator==(const PortResult&) const = default;
};

struct OsGuess {
  std::string name;
  double confidence = 0.0;
  bool operator==(const OsGuess&) const = default;
};

struct HostStatus {
  Ipv4 address;
  bool alive = false;
  DiscoveryMethod method = DiscoveryMethod::Assumed;
  double rtt_ms = 0.0;
  std::optional<int> ttl;  // ICMP replies only
};

struct DiscoveryResult {
  std::vector<HostStatus> hosts;  // sorted by address
  std::vector<std::string> warnings;
};

struct HostReport {
  std::string address;
  bool alive = false;
  DiscoveryMethod discovery = DiscoveryMethod::Assumed;
  double rtt_ms = 0.0;
  std::vector<PortResult> ports;  // sorted by port
  std::vector<OsGuess> os;        // descending confidence
  bool operator==(const HostReport&) const = default;
};

struct ScanMeta {
  std::string schema = "v1";
  std::string tool_version;
  std::string started;
  std::string finished;
  nlohmann::json parameters = nlohmann::json::object();
  std::vector<std::string> warnings;
  std::size_t peak_in_flight = 0;
};

struct ScanReport {
  ScanMeta meta;
  std::vector<HostReport> hosts;  // sorted by address
};

// ---------------------------------------------------------------------------
// Network operations (blocking; internally concurrent)
// ---------------------------------------------------------------------------

struct ScanStats {
  std::size_t peak_in_flight = 0;
};

inline const std::vector<std::uint16_t> kDefaultProbePorts = {80, 443, 22, 445};

DiscoveryResult discover_hosts(const std::vector<Ipv4>& targets, DiscoveryMethod method, Millis timeout,
                               std::size_t parallelism,
                               const std::vector<std::uint16_t>& probe_ports = kDefaultProbePorts);

struct PortScanOptions {
  Millis connect_timeout{1000};
  Millis banner_timeout{2000};
  std::size_t parallelism = 64;
  bool grab_banners = false;  // read a banner on each open connection
};

/// TCP connect scan. Connected: open; refused: closed; anything else: filtered.
std::vector<PortResult> scan_ports(const std::string& address, const std::vector<std::uint16_t>& ports,
                                   const PortScanOptions& options, ScanStats* stats = nullptr);

/// Up to kBannerCap bytes sent by the service within `timeout`. A single
/// CRLF is sent if the service stays silent for the first half of the window.
std::optional<std::string> grab_banner(const std::string& address, std::uint16_t port, Millis timeout);

// ---------------------------------------------------------------------------
// Fingerprinting
// ---------------------------------------------------------------------------

std::optional<ServiceGuess> fingerprint_service(std::string_view banner, std::uint16_t port);

struct OsEvidence {
  std::optional<int> ttl;
  std::vector<std::string> banners;
  std::vector<std::uint16_t> open_ports;
};

/// Coarse family guess ("windows", "linux"); confidences sum to at most 1.
std::vector<OsGuess> guess_os(const OsEvidence& evidence);

// ---------------------------------------------------------------------------
// Full scan
// ---------------------------------------------------------------------------

struct ScanConfig {
  std::string targets;
  std::string ports;  // empty: default_ports()
  DiscoveryMethod discovery = DiscoveryMethod::TcpProbe;
  Millis discovery_timeout{1000};
  Millis connect_timeout{1000};
  Millis banner_timeout{2000};
  std::size_t parallelism = 64;
  bool authorized = false;
  std::function<std::string()> clock;  // ISO-8601 timestamps; UTC wall clock when empty
};

inline constexpr const char* kToolVersion = "ptk 1.0.0";

/// Discovery, port scan, banner grab and fingerprinting of every live host.
ScanReport run_scan(const ScanConfig& config);

std::string utc_timestamp();

nlohmann::json to_json(const ScanReport& report);
ScanReport scan_report_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Belief bridge
// ---------------------------------------------------------------------------

/// How scan output maps onto belief slots.
struct BeliefLayout {
  std::map<std::string, std::string> host_ids;  // address -> host id
  std::vector<std::uint16_t> port_slots;        // port number per belief port index
  std::vector<std::string> os_candidates{"windows", "linux"};
};

inline constexpr double kOsObservationThreshold = 0.8;

/// Max-uncertainty belief over the layout's hosts and port slots.
belief::NetworkBelief belief_from_layout(const BeliefLayout& layout);

/// Open/closed ports become port_state observations; a top OS guess with
/// confidence >= 0.8 becomes os_identified. Filtered ports produce nothing.
std::vector<belief::Observation> scan_to_observations(const ScanReport& report, const belief::NetworkBelief& nb,
                                                      const BeliefLayout& layout);

}  // namespace ptk::scanner

#endif  // PTK_SCANNER_HPP
