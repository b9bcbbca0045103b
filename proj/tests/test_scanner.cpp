#include "ptk/error.hpp"
#include "ptk/findings.hpp"
#include "ptk/scanner.hpp"

#include "loopback.hpp"

#include <doctest.h>

#include <fstream>

using namespace ptk::scanner;
using nlohmann::json;

namespace {

std::vector<std::string> addrs(const std::vector<Ipv4>& v) {
  std::vector<std::string> out;
  for (const auto& a : v) out.push_back(a.to_string());
  return out;
}

PortResult result_for(const std::vector<PortResult>& rs, std::uint16_t port) {
  for (const auto& r : rs) {
    if (r.port == port) return r;
  }
  FAIL("port missing from results");
  return {};
}

}  // namespace

TEST_CASE("target parsing") {
  CHECK(addrs(parse_targets("10.0.0.1")) == std::vector<std::string>{"10.0.0.1"});
  CHECK(addrs(parse_targets("192.168.1.0/30")) == std::vector<std::string>{"192.168.1.1", "192.168.1.2"});
  CHECK(parse_targets("192.168.1.0/24").size() == 254);
  CHECK(addrs(parse_targets("10.0.0.1/32")) == std::vector<std::string>{"10.0.0.1"});
  CHECK(parse_targets("10.0.0.0/31").size() == 2);
  CHECK(addrs(parse_targets("10.0.0.3-5, 10.0.0.4")) ==
        std::vector<std::string>{"10.0.0.3", "10.0.0.4", "10.0.0.5"});
  CHECK(parse_targets("10.0.0.0/16").size() == 65534);

  CHECK_THROWS_WITH(parse_targets("10.0.0.256"), doctest::Contains("malformed target '10.0.0.256'"));
  CHECK_THROWS_WITH(parse_targets("host.example"), doctest::Contains("malformed target"));
  CHECK_THROWS_AS(parse_targets("10.0.0.0/8"), ptk::Error);
  CHECK_THROWS_AS(parse_targets("10.0.0.9-3"), ptk::Error);
  CHECK_THROWS_AS(parse_targets(""), ptk::Error);
}

TEST_CASE("port parsing and defaults") {
  CHECK(parse_ports("22,80,8000-8002") == std::vector<std::uint16_t>{22, 80, 8000, 8001, 8002});
  CHECK(parse_ports("80,80") == std::vector<std::uint16_t>{80});
  CHECK_THROWS_WITH(parse_ports("0"), doctest::Contains("malformed port '0'"));
  CHECK_THROWS_AS(parse_ports("70000"), ptk::Error);
  CHECK_THROWS_AS(parse_ports("90-80"), ptk::Error);
  CHECK_THROWS_AS(parse_ports("x"), ptk::Error);

  const auto spec = parse_target_spec("127.0.0.1");
  CHECK(spec.ports == default_ports());
  for (std::uint16_t p : {21, 22, 23, 80, 135, 139, 445, 3306, 5432}) {
    CHECK(std::find(spec.ports.begin(), spec.ports.end(), p) != spec.ports.end());
  }
}

TEST_CASE("authorization gate") {
  CHECK_FALSE(requires_authorization(*Ipv4::parse("127.0.0.1")));
  CHECK_FALSE(requires_authorization(*Ipv4::parse("10.1.2.3")));
  CHECK_FALSE(requires_authorization(*Ipv4::parse("172.20.0.1")));
  CHECK_FALSE(requires_authorization(*Ipv4::parse("192.168.233.131")));
  CHECK(requires_authorization(*Ipv4::parse("172.32.0.1")));
  CHECK(requires_authorization(*Ipv4::parse("192.0.2.1")));

  CHECK_THROWS_AS(check_authorization(parse_target_spec("192.0.2.1"), false), ptk::PolicyError);
  CHECK_NOTHROW(check_authorization(parse_target_spec("192.0.2.1"), true));

  ScanConfig cfg;
  cfg.targets = "198.51.100.7";
  CHECK_THROWS_AS(run_scan(cfg), ptk::PolicyError);  // refused before any packet is sent
}

TEST_CASE("service fingerprinting") {
  const auto vsftpd = fingerprint_service("220 (vsFTPd 2.3.4)\r\n", 21);
  REQUIRE(vsftpd);
  CHECK(vsftpd->name == "vsftpd");
  CHECK(vsftpd->version == "2.3.4");
  CHECK(vsftpd->confidence >= 0.9);

  const auto ssh = fingerprint_service("SSH-2.0-OpenSSH_4.7p1 Debian-8ubuntu1\r\n", 22);
  REQUIRE(ssh);
  CHECK(ssh->name == "openssh");
  CHECK(ssh->version == "4.7p1");

  const auto apache = fingerprint_service("HTTP/1.1 400 Bad Request\r\nServer: Apache/2.2.8 (Ubuntu)\r\n", 80);
  REQUIRE(apache);
  CHECK(apache->name == "apache");
  CHECK(apache->version == "2.2.8");

  const std::string mysql("\x35\x00\x00\x00\x0a" "5.0.51a-3ubuntu5\0", 22);
  const auto my = fingerprint_service(mysql, 3306);
  REQUIRE(my);
  CHECK(my->name == "mysql");
  CHECK(my->version == "5.0.51a-3ubuntu5");

  const auto vnc = fingerprint_service("RFB 003.003\n", 5900);
  REQUIRE(vnc);
  CHECK(vnc->name == "vnc");

  const auto fallback = fingerprint_service("", 445);
  REQUIRE(fallback);
  CHECK(fallback->name == "microsoft-ds");
  CHECK(fallback->version == "unknown");
  CHECK(fallback->confidence == doctest::Approx(0.3));

  CHECK_FALSE(fingerprint_service("", 40000));
}

TEST_CASE("OS family guess") {
  const auto win = guess_os({128, {"Microsoft FTP Service"}, {135, 445}});
  REQUIRE(!win.empty());
  CHECK(win.front().name == "windows");
  CHECK(win.front().confidence >= 0.8);

  const auto lin = guess_os({64, {"SSH-2.0-OpenSSH_4.7p1 Debian-8ubuntu1"}, {22}});
  REQUIRE(!lin.empty());
  CHECK(lin.front().name == "linux");

  CHECK(guess_os({}).empty());
  double total = 0;
  for (const auto& g : guess_os({64, {"Windows"}, {445}})) total += g.confidence;
  CHECK(total <= 1.0);
}

TEST_CASE("loopback trichotomy: open, closed, filtered") {
  ptk_test::FixtureServer server({{""}});
  const std::uint16_t open = server.ports()[0];
  const std::uint16_t closed = ptk_test::closed_port();
  ptk_test::BlackholePort hole;

  PortScanOptions opts;
  opts.connect_timeout = Millis(300);
  opts.parallelism = 3;
  const auto rs = scan_ports("127.0.0.1", {open, closed, hole.port()}, opts);
  CHECK(result_for(rs, open).state == PortState::Open);
  CHECK(result_for(rs, closed).state == PortState::Closed);
  CHECK(result_for(rs, hole.port()).state == PortState::Filtered);
  CHECK(std::is_sorted(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.port < b.port; }));
}

TEST_CASE("banner grab and downstream finding") {
  ptk_test::FixtureServer server({{"220 (vsFTPd 2.3.4)\r\n"}, {""}});
  const auto ftp = server.ports()[0];
  const auto silent = server.ports()[1];

  const auto banner = grab_banner("127.0.0.1", ftp, Millis(1000));
  REQUIRE(banner);
  CHECK(*banner == "220 (vsFTPd 2.3.4)\r\n");
  CHECK_FALSE(grab_banner("127.0.0.1", silent, Millis(200)));

  ScanConfig cfg;
  cfg.targets = "127.0.0.1";
  cfg.ports = std::to_string(ftp) + "," + std::to_string(silent);
  cfg.discovery = DiscoveryMethod::Assumed;
  cfg.banner_timeout = Millis(300);
  cfg.clock = [] { return std::string("2025-01-01T00:00:00Z"); };
  const auto report = run_scan(cfg);
  REQUIRE(report.hosts.size() == 1);
  const auto p = result_for(report.hosts[0].ports, ftp);
  REQUIRE(p.service);
  CHECK(p.service->name == "vsftpd");
  CHECK(p.service->version == "2.3.4");

  const auto findings = ptk::findings::match_findings(report, ptk::findings::builtin_kb());
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].rule_id == "vsftpd-234-backdoor");
  CHECK(findings[0].severity == ptk::findings::Severity::Critical);
  CHECK(findings[0].port == ftp);

  // The only bytes any service ever receives are the optional CRLF probe.
  for (const auto& data : server.received()) CHECK((data.empty() || data == "\r\n"));
}

TEST_CASE("in-flight connections never exceed the configured parallelism") {
  std::vector<ptk_test::FixtureServer::Spec> specs(24, {""});
  ptk_test::FixtureServer server(specs);
  PortScanOptions opts;
  opts.parallelism = 4;
  opts.grab_banners = true;
  opts.banner_timeout = Millis(120);
  ScanStats stats;
  const auto rs = scan_ports("127.0.0.1", server.ports(), opts, &stats);
  for (const auto& r : rs) CHECK(r.state == PortState::Open);
  CHECK(stats.peak_in_flight <= 4);
  CHECK(stats.peak_in_flight >= 2);
  CHECK(server.peak_open() <= 4);
  CHECK(server.total_accepted() == 24);
  for (const auto& data : server.received()) CHECK((data.empty() || data == "\r\n"));
}

TEST_CASE("discovery on loopback") {
  ptk_test::FixtureServer server({{""}});
  const auto tcp = discover_hosts({*Ipv4::parse("127.0.0.1")}, DiscoveryMethod::TcpProbe, Millis(300), 4,
                                  {server.ports()[0]});
  REQUIRE(tcp.hosts.size() == 1);
  CHECK(tcp.hosts[0].alive);
  CHECK(tcp.hosts[0].method == DiscoveryMethod::TcpProbe);

  const auto assumed = discover_hosts({*Ipv4::parse("127.0.0.2")}, DiscoveryMethod::Assumed, Millis(100), 1);
  CHECK(assumed.hosts[0].alive);
  CHECK(assumed.hosts[0].method == DiscoveryMethod::Assumed);

  // ICMP either works (raw or ping socket) or falls back with a warning.
  const auto icmp = discover_hosts({*Ipv4::parse("127.0.0.1")}, DiscoveryMethod::Icmp, Millis(300), 1,
                                   {server.ports()[0]});
  CHECK(icmp.hosts[0].alive);
  if (icmp.hosts[0].method != DiscoveryMethod::Icmp) CHECK(!icmp.warnings.empty());
}

TEST_CASE("scan report JSON round trip") {
  std::ifstream in(std::string(PTK_FIXTURE_DIR) + "/scan_lab.json");
  const auto report = scan_report_from_json(json::parse(in));
  CHECK(report.hosts.size() == 4);
  CHECK(report.hosts.back().address == "192.0.2.10");  // numeric order
  const auto again = scan_report_from_json(to_json(report));
  CHECK(again.hosts == report.hosts);
  CHECK(to_json(again) == to_json(report));
  const auto ftp = result_for(report.hosts[1].ports, 21);
  REQUIRE(ftp.banner);
  CHECK(*ftp.banner == "220 (vsFTPd 2.3.4)\r\n");

  CHECK_THROWS_AS(scan_report_from_json(json::parse(R"({"meta":{"schema":"v2"},"hosts":[]})")), ptk::SchemaError);
  CHECK_THROWS_AS(scan_report_from_json(json::parse(R"({"meta":{"schema":"v1"},"hosts":[{"alive":true}]})")),
                  ptk::SchemaError);
}

TEST_CASE("scan results feed the belief model") {
  std::ifstream in(std::string(PTK_FIXTURE_DIR) + "/scan_lab.json");
  const auto report = scan_report_from_json(json::parse(in));
  BeliefLayout layout;
  layout.host_ids = {{"192.0.2.3", "h-192.0.2.3"}, {"192.0.2.4", "h-192.0.2.4"}, {"192.0.2.10", "h-192.0.2.10"}};
  layout.port_slots = {21, 445, 8009};
  auto nb = belief_from_layout(layout);
  CHECK(ptk::belief::network_entropy(nb) == 3 * (1.0 + 3.0));

  const auto obs = scan_to_observations(report, nb, layout);
  for (const auto& o : obs) nb = ptk::belief::apply_observation(nb, o);
  // .3: 445 open + windows; .4: 21 open, 445 closed, linux (8009 filtered stays unknown); .10: 445 open only.
  CHECK(ptk::belief::host_entropy(nb.at("h-192.0.2.3")) == 2.0);
  CHECK(ptk::belief::host_entropy(nb.at("h-192.0.2.4")) == 1.0);
  CHECK(ptk::belief::host_entropy(nb.at("h-192.0.2.10")) == 3.0);

  layout.host_ids.erase("192.0.2.10");
  CHECK_THROWS_AS(scan_to_observations(report, belief_from_layout(layout), layout), ptk::Error);
}
