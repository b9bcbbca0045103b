#include "ptk/error.hpp"
#include "ptk/scanner.hpp"

#include <algorithm>
#include <charconv>

namespace ptk::scanner {

namespace {

constexpr std::size_t kMaxTargets = 65536;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<unsigned> parse_uint(std::string_view s, unsigned max) {
  if (s.empty() || s.size() > 5) return std::nullopt;
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v > max) return std::nullopt;
  return v;
}

[[noreturn]] void bad_token(std::string_view kind, std::string_view token) {
  throw Error("malformed " + std::string(kind) + " '" + std::string(token) + "'");
}

void expand(std::string_view token, std::vector<Ipv4>& out) {
  if (const auto slash = token.find('/'); slash != std::string_view::npos) {
    const auto base = Ipv4::parse(token.substr(0, slash));
    const auto prefix = parse_uint(token.substr(slash + 1), 32);
    if (!base || !prefix) bad_token("target", token);
    if (*prefix < 16) throw Error("target block '" + std::string(token) + "' is too large");
    const std::uint32_t mask = *prefix == 0 ? 0 : ~std::uint32_t{0} << (32 - *prefix);
    const std::uint32_t network = base->value & mask;
    const std::uint32_t broadcast = network | ~mask;
    std::uint32_t first = network;
    std::uint32_t last = broadcast;
    if (*prefix <= 30) {
      ++first;
      --last;
    }
    for (std::uint64_t a = first; a <= last; ++a) out.push_back(Ipv4{static_cast<std::uint32_t>(a)});
    return;
  }
  if (const auto dash = token.find('-'); dash != std::string_view::npos) {
    const auto start = Ipv4::parse(token.substr(0, dash));
    const auto end_octet = parse_uint(token.substr(dash + 1), 255);
    if (!start || !end_octet || *end_octet < (start->value & 0xffu)) bad_token("target", token);
    for (std::uint32_t o = start->value & 0xffu; o <= *end_octet; ++o) {
      out.push_back(Ipv4{(start->value & 0xffffff00u) | o});
    }
    return;
  }
  const auto single = Ipv4::parse(token);
  if (!single) bad_token("target", token);
  out.push_back(*single);
}

}  // namespace

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
  const auto parts = split(text, '.');
  if (parts.size() != 4) return std::nullopt;
  std::uint32_t value = 0;
  for (auto part : parts) {
    if (part.size() > 3) return std::nullopt;
    const auto octet = parse_uint(part, 255);
    if (!octet) return std::nullopt;
    value = (value << 8) | *octet;
  }
  return Ipv4{value};
}

std::string Ipv4::to_string() const {
  return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xff) + "." +
         std::to_string((value >> 8) & 0xff) + "." + std::to_string(value & 0xff);
}

bool Ipv4::is_private() const {
  const std::uint32_t a = value >> 24;
  const std::uint32_t b = (value >> 16) & 0xff;
  return a == 10 || (a == 172 && b >= 16 && b <= 31) || (a == 192 && b == 168);
}

std::vector<Ipv4> parse_targets(std::string_view text) {
  std::vector<Ipv4> out;
  for (auto token : split(text, ',')) {
    if (token.empty()) bad_token("target", token);
    expand(token, out);
    if (out.size() > kMaxTargets) throw Error("too many targets (limit " + std::to_string(kMaxTargets) + ")");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw Error("no targets");
  return out;
}

std::vector<std::uint16_t> parse_ports(std::string_view text) {
  std::vector<std::uint16_t> out;
  for (auto token : split(text, ',')) {
    const auto dash = token.find('-');
    const auto lo = parse_uint(token.substr(0, dash), 65535);
    const auto hi = dash == std::string_view::npos ? lo : parse_uint(token.substr(dash + 1), 65535);
    if (!lo || !hi || *lo == 0 || *hi < *lo) bad_token("port", token);
    for (unsigned p = *lo; p <= *hi; ++p) out.push_back(static_cast<std::uint16_t>(p));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TargetSpec parse_target_spec(std::string_view targets, std::string_view ports) {
  TargetSpec spec;
  spec.addresses = parse_targets(targets);
  spec.ports = trim(ports).empty() ? default_ports() : parse_ports(ports);
  return spec;
}

const std::vector<std::uint16_t>& default_ports() {
  static const std::vector<std::uint16_t> ports = {21, 22, 23, 80, 135, 139, 443, 445, 3306, 5432, 5900, 8080};
  return ports;
}

bool requires_authorization(const Ipv4& address) { return !address.is_loopback() && !address.is_private(); }

void check_authorization(const TargetSpec& spec, bool acknowledged) {
  if (acknowledged) return;
  for (const auto& a : spec.addresses) {
    if (requires_authorization(a)) {
      throw PolicyError("target " + a.to_string() +
                        " is outside loopback and private ranges; authorized use only "
                        "(pass --i-am-authorized to acknowledge written authorization)");
    }
  }
}

const char* to_string(PortState s) {
  switch (s) {
    case PortState::Open: return "open";
    case PortState::Closed: return "closed";
    case PortState::Filtered: return "filtered";
  }
  return "?";
}

const char* to_string(DiscoveryMethod m) {
  switch (m) {
    case DiscoveryMethod::Icmp: return "icmp";
    case DiscoveryMethod::TcpProbe: return "tcp_probe";
    case DiscoveryMethod::Assumed: return "assumed";
  }
  return "?";
}

PortState port_state_from_string(std::string_view s) {
  if (s == "open") return PortState::Open;
  if (s == "closed") return PortState::Closed;
  if (s == "filtered") return PortState::Filtered;
  throw Error("unknown port state '" + std::string(s) + "'");
}

DiscoveryMethod discovery_method_from_string(std::string_view s) {
  if (s == "icmp") return DiscoveryMethod::Icmp;
  if (s == "tcp_probe" || s == "tcp") return DiscoveryMethod::TcpProbe;
  if (s == "assumed" || s == "assume") return DiscoveryMethod::Assumed;
  throw Error("unknown discovery method '" + std::string(s) + "'");
}

}  // namespace ptk::scanner
