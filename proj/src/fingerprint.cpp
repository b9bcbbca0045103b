#include "ptk/scanner.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

namespace ptk::scanner {

namespace {

constexpr double kBannerConfidence = 0.95;
constexpr double kGenericBannerConfidence = 0.8;
constexpr double kPortTableConfidence = 0.3;

struct BannerRule {
  const char* name;
  const char* pattern;  // capture group 1, when present, is the version
  double confidence;
};

// Ordered: product-specific rules before protocol-generic ones.
const std::array<BannerRule, 16> kBannerRules = {{
    {"vsftpd", R"(vsFTPd ([0-9][0-9A-Za-z.]*))", kBannerConfidence},
    {"proftpd", R"(ProFTPD ([0-9][0-9A-Za-z.]*))", kBannerConfidence},
    {"microsoft-ftpd", R"(Microsoft FTP Service())", kBannerConfidence},
    {"openssh", R"(^SSH-[0-9.]+-OpenSSH_([0-9][0-9A-Za-z.]*))", kBannerConfidence},
    {"dropbear", R"(^SSH-[0-9.]+-dropbear_([0-9][0-9A-Za-z.]*))", kBannerConfidence},
    {"vnc", R"(^RFB ([0-9]{3}\.[0-9]{3}))", kBannerConfidence},
    {"tomcat", R"(Apache[- ]Tomcat/([0-9][0-9.]*))", kBannerConfidence},
    {"apache", R"(Server: Apache/([0-9][0-9.]*))", kBannerConfidence},
    {"nginx", R"(Server: nginx/([0-9][0-9.]*))", kBannerConfidence},
    {"iis", R"(Server: Microsoft-IIS/([0-9][0-9.]*))", kBannerConfidence},
    {"samba", R"(Samba ([0-9][0-9A-Za-z.]*))", kBannerConfidence},
    {"postfix", R"(^220 .*ESMTP Postfix())", kBannerConfidence},
    {"ssh", R"(^SSH-[0-9.]+-([^\s]+))", kGenericBannerConfidence},
    {"http", R"(^HTTP/1\.[01] ()[0-9]{3})", kGenericBannerConfidence},
    {"smtp", R"(^220 [^\r\n]*SMTP())", kGenericBannerConfidence},
    {"ftp", R"(^220[ -]()[^\r\n]*FTP)", kGenericBannerConfidence},
}};

struct PortEntry {
  std::uint16_t port;
  const char* name;
};

const std::array<PortEntry, 17> kWellKnownPorts = {{
    {21, "ftp"},        {22, "ssh"},          {23, "telnet"},     {25, "smtp"},
    {80, "http"},       {135, "msrpc"},       {139, "netbios-ssn"}, {443, "https"},
    {445, "microsoft-ds"}, {513, "rlogin"},   {3306, "mysql"},    {3389, "ms-wbt-server"},
    {5432, "postgresql"}, {5900, "vnc"},      {8009, "ajp13"},    {8080, "http-proxy"},
    {8180, "http-alt"},
}};

const std::vector<std::regex>& compiled_rules() {
  static const std::vector<std::regex> compiled = [] {
    std::vector<std::regex> out;
    for (const auto& r : kBannerRules) out.emplace_back(r.pattern, std::regex::ECMAScript | std::regex::icase);
    return out;
  }();
  return compiled;
}

/// MySQL greets with a protocol-10 handshake packet: 3-byte length, sequence
/// id, 0x0a, then a NUL-terminated server version.
std::optional<std::string> mysql_handshake_version(std::string_view banner) {
  if (banner.size() < 6 || static_cast<unsigned char>(banner[4]) != 0x0a) return std::nullopt;
  const auto end = banner.find('\0', 5);
  if (end == std::string_view::npos || end == 5) return std::nullopt;
  const auto version = banner.substr(5, end - 5);
  if (!std::isdigit(static_cast<unsigned char>(version.front()))) return std::nullopt;
  return std::string(version);
}

bool contains_icase(std::string_view hay, std::string_view needle) {
  auto it = std::search(hay.begin(), hay.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it != hay.end();
}

}  // namespace

std::optional<ServiceGuess> fingerprint_service(std::string_view banner, std::uint16_t port) {
  if (!banner.empty()) {
    if (auto v = mysql_handshake_version(banner)) return ServiceGuess{"mysql", *v, kBannerConfidence};
    if (static_cast<unsigned char>(banner.front()) == 0xff) {
      return ServiceGuess{"telnet", "unknown", kGenericBannerConfidence};  // IAC negotiation
    }
    const std::string text(banner);
    const auto& regexes = compiled_rules();
    for (std::size_t i = 0; i < kBannerRules.size(); ++i) {
      std::smatch m;
      if (std::regex_search(text, m, regexes[i])) {
        std::string version = m.size() > 1 && m[1].length() > 0 ? m[1].str() : "unknown";
        return ServiceGuess{kBannerRules[i].name, version, kBannerRules[i].confidence};
      }
    }
  }
  for (const auto& e : kWellKnownPorts) {
    if (e.port == port) return ServiceGuess{e.name, "unknown", kPortTableConfidence};
  }
  return std::nullopt;
}

std::vector<OsGuess> guess_os(const OsEvidence& evidence) {
  double windows = 0.0;
  double linux_family = 0.0;

  if (evidence.ttl) {
    // Initial TTLs: 64 on Linux, 128 on Windows; observed values are lower by the hop count.
    const int ttl = *evidence.ttl;
    if (ttl > 0 && ttl <= 64) linux_family += 0.5;
    else if (ttl > 64 && ttl <= 128) windows += 0.5;
  }
  for (const auto& b : evidence.banners) {
    for (const char* kw : {"Ubuntu", "Debian", "Linux", "CentOS", "Red Hat", "Fedora", "Metasploitable"}) {
      if (contains_icase(b, kw)) {
        linux_family += 0.4;
        break;
      }
    }
    for (const char* kw : {"Microsoft", "Windows"}) {
      if (contains_icase(b, kw)) {
        windows += 0.4;
        break;
      }
    }
  }
  for (auto port : evidence.open_ports) {
    if (port == 135 || port == 445 || port == 3389) windows += 0.2;
  }

  const double total = windows + linux_family;
  if (total <= 0.0) return {};
  const double strength = std::min(0.95, std::max(windows, linux_family));
  std::vector<OsGuess> out;
  if (windows > 0.0) out.push_back({"windows", strength * windows / total});
  if (linux_family > 0.0) out.push_back({"linux", strength * linux_family / total});
  std::stable_sort(out.begin(), out.end(), [](const OsGuess& a, const OsGuess& b) { return a.confidence > b.confidence; });
  return out;
}

}  // namespace ptk::scanner
