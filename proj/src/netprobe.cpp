#include "ptk/error.hpp"
#include "ptk/scanner.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/ip.h>
#include <netinet/ip_icmp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>
#include <utility>

namespace ptk::scanner {

namespace {

using Clock = std::chrono::steady_clock;

class UniqueFd {
public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    reset(std::exchange(o.fd_, -1));
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset(int fd = -1) noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

private:
  int fd_ = -1;
};

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
  return left > 0 ? static_cast<int>(left) : 0;
}

sockaddr_in make_addr(std::uint32_t host_order, std::uint16_t port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  sa.sin_addr.s_addr = htonl(host_order);
  return sa;
}

Ipv4 resolve(const std::string& address) {
  if (auto ip = Ipv4::parse(address)) return *ip;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(address.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error("unresolvable address '" + address + "'");
  }
  const auto* sa = reinterpret_cast<const sockaddr_in*>(res->ai_addr);
  Ipv4 ip{ntohl(sa->sin_addr.s_addr)};
  ::freeaddrinfo(res);
  return ip;
}

struct ConnectOutcome {
  PortState state = PortState::Filtered;
  UniqueFd fd;  // set when open
  double rtt_ms = 0.0;
};

PortState classify(int err) {
  if (err == 0) return PortState::Open;
  if (err == ECONNREFUSED) return PortState::Closed;
  return PortState::Filtered;
}

ConnectOutcome tcp_connect(Ipv4 ip, std::uint16_t port, Millis timeout) {
  ConnectOutcome out;
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (!fd) throw Error(std::string("socket: ") + std::strerror(errno));

  const auto sa = make_addr(ip.value, port);
  const auto start = Clock::now();
  int err = 0;
  if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0) {
    err = errno;
    if (err == EINPROGRESS) {
      pollfd p{fd.get(), POLLOUT, 0};
      int rc;
      do {
        rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
      } while (rc < 0 && errno == EINTR);
      if (rc == 0) {
        out.rtt_ms = elapsed_ms(start);
        return out;  // no answer: filtered
      }
      socklen_t len = sizeof err;
      ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    } else if (err == EMFILE || err == ENFILE || err == ENOBUFS || err == ENOMEM) {
      throw Error(std::string("connect: ") + std::strerror(err));
    }
  }
  out.rtt_ms = elapsed_ms(start);
  out.state = classify(err);
  if (out.state == PortState::Open) out.fd = std::move(fd);
  return out;
}

std::optional<std::string> read_banner(int fd, Millis timeout) {
  const auto start = Clock::now();
  const auto deadline = start + timeout;
  const auto unsolicited_deadline = start + timeout / 2;
  constexpr int kIdleGapMs = 150;

  std::string banner;
  bool probed = false;
  char buf[kBannerCap];
  while (banner.size() < kBannerCap) {
    int wait;
    if (!banner.empty()) {
      wait = std::min(kIdleGapMs, remaining_ms(deadline));
    } else if (!probed) {
      wait = remaining_ms(unsolicited_deadline);
    } else {
      wait = remaining_ms(deadline);
    }
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, wait);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (rc == 0) {
      if (!banner.empty() || probed) break;
      // Silent service: one CRLF, nothing else.
      if (::send(fd, "\r\n", 2, MSG_NOSIGNAL) != 2) break;
      probed = true;
      continue;
    }
    const auto n = ::recv(fd, buf, kBannerCap - banner.size(), 0);
    if (n <= 0) break;
    banner.append(buf, static_cast<std::size_t>(n));
  }
  if (banner.empty()) return std::nullopt;
  return banner;
}

/// Runs `work(i)` for i in [0, count) on at most `parallelism` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t parallelism, Fn work) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, count));
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto loop = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        work(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

class InFlightGauge {
public:
  void enter() {
    const auto now = ++current_;
    auto peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  void leave() { --current_; }
  std::size_t peak() const { return peak_.load(); }

private:
  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
};

std::uint16_t icmp_checksum(const void* data, std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < len; i += 2) sum += static_cast<std::uint32_t>(p[i] << 8 | p[i + 1]);
  if (len & 1) sum += static_cast<std::uint32_t>(p[len - 1] << 8);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return htons(static_cast<std::uint16_t>(~sum));
}

struct IcmpSocket {
  UniqueFd fd;
  bool raw = false;
};

/// Unprivileged ping socket when allowed, raw socket otherwise; nullopt when
/// neither is permitted.
std::optional<IcmpSocket> open_icmp_socket() {
  UniqueFd dgram(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, IPPROTO_ICMP));
  if (dgram) {
    int on = 1;
    ::setsockopt(dgram.get(), IPPROTO_IP, IP_RECVTTL, &on, sizeof on);
    return IcmpSocket{std::move(dgram), false};
  }
  UniqueFd raw(::socket(AF_INET, SOCK_RAW | SOCK_CLOEXEC, IPPROTO_ICMP));
  if (raw) return IcmpSocket{std::move(raw), true};
  return std::nullopt;
}

struct EchoReply {
  double rtt_ms = 0.0;
  std::optional<int> ttl;
};

std::optional<EchoReply> icmp_echo(IcmpSocket& sock, Ipv4 ip, std::uint16_t ident, std::uint16_t seq, Millis timeout) {
  icmphdr req{};
  req.type = ICMP_ECHO;
  req.un.echo.id = htons(ident);
  req.un.echo.sequence = htons(seq);
  req.checksum = icmp_checksum(&req, sizeof req);

  const auto sa = make_addr(ip.value, 0);
  const auto start = Clock::now();
  if (::sendto(sock.fd.get(), &req, sizeof req, 0, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) < 0) {
    return std::nullopt;
  }
  const auto deadline = start + timeout;
  std::uint8_t buf[1500];
  char control[64];
  while (true) {
    pollfd p{sock.fd.get(), POLLIN, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc <= 0) return std::nullopt;

    sockaddr_in from{};
    iovec iov{buf, sizeof buf};
    msghdr msg{};
    msg.msg_name = &from;
    msg.msg_namelen = sizeof from;
    msg.msg_iov = &iov;
    msg.msg_iovlen = 1;
    msg.msg_control = control;
    msg.msg_controllen = sizeof control;
    const auto n = ::recvmsg(sock.fd.get(), &msg, 0);
    if (n <= 0 || from.sin_addr.s_addr != sa.sin_addr.s_addr) continue;

    std::optional<int> ttl;
    const std::uint8_t* icmp = buf;
    std::size_t icmp_len = static_cast<std::size_t>(n);
    if (sock.raw) {
      const auto* ip_header = reinterpret_cast<const iphdr*>(buf);
      const std::size_t header_len = static_cast<std::size_t>(ip_header->ihl) * 4;
      if (icmp_len < header_len + sizeof(icmphdr)) continue;
      ttl = ip_header->ttl;
      icmp += header_len;
      icmp_len -= header_len;
    } else {
      for (auto* c = CMSG_FIRSTHDR(&msg); c != nullptr; c = CMSG_NXTHDR(&msg, c)) {
        if (c->cmsg_level == IPPROTO_IP && c->cmsg_type == IP_TTL) {
          int v = 0;
          std::memcpy(&v, CMSG_DATA(c), sizeof v);
          ttl = v;
        }
      }
    }
    if (icmp_len < sizeof(icmphdr)) continue;
    icmphdr reply{};
    std::memcpy(&reply, icmp, sizeof reply);
    if (reply.type != ICMP_ECHOREPLY || ntohs(reply.un.echo.sequence) != seq) continue;
    // Ping sockets rewrite the identifier; only raw replies can be matched on it.
    if (sock.raw && ntohs(reply.un.echo.id) != ident) continue;
    return EchoReply{elapsed_ms(start), ttl};
  }
}

HostStatus tcp_probe(Ipv4 ip, Millis timeout, const std::vector<std::uint16_t>& probe_ports) {
  HostStatus status{ip, false, DiscoveryMethod::TcpProbe, 0.0, std::nullopt};
  for (auto port : probe_ports) {
    auto outcome = tcp_connect(ip, port, timeout);
    if (outcome.state != PortState::Filtered) {
      // Accept or reset: either way something answered.
      status.alive = true;
      status.rtt_ms = outcome.rtt_ms;
      break;
    }
  }
  return status;
}

}  // namespace

DiscoveryResult discover_hosts(const std::vector<Ipv4>& targets, DiscoveryMethod method, Millis timeout,
                               std::size_t parallelism, const std::vector<std::uint16_t>& probe_ports) {
  if (targets.empty()) throw Error("no targets");
  if (timeout.count() <= 0) throw Error("discovery timeout must be positive");
  if (parallelism < 1) throw Error("parallelism must be >= 1");

  DiscoveryResult result;
  result.hosts.resize(targets.size());

  if (method == DiscoveryMethod::Icmp) {
    auto sock = open_icmp_socket();
    if (!sock) {
      result.warnings.push_back("icmp discovery needs raw-socket privilege or ping-socket permission; "
                                "fell back to tcp_probe");
      method = DiscoveryMethod::TcpProbe;
    } else {
      // One socket, sequential echoes: replies are matched by sequence number.
      const auto ident = static_cast<std::uint16_t>(::getpid() & 0xffff);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        auto reply = icmp_echo(*sock, targets[i], ident, static_cast<std::uint16_t>(i + 1), timeout);
        result.hosts[i] = {targets[i], reply.has_value(), DiscoveryMethod::Icmp, reply ? reply->rtt_ms : 0.0,
                           reply ? reply->ttl : std::nullopt};
      }
    }
  }
  if (method == DiscoveryMethod::TcpProbe) {
    parallel_for(targets.size(), parallelism,
                 [&](std::size_t i) { result.hosts[i] = tcp_probe(targets[i], timeout, probe_ports); });
  } else if (method == DiscoveryMethod::Assumed) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      result.hosts[i] = {targets[i], true, DiscoveryMethod::Assumed, 0.0, std::nullopt};
    }
  }
  std::sort(result.hosts.begin(), result.hosts.end(),
            [](const HostStatus& a, const HostStatus& b) { return a.address < b.address; });
  return result;
}

std::vector<PortResult> scan_ports(const std::string& address, const std::vector<std::uint16_t>& ports,
                                   const PortScanOptions& options, ScanStats* stats) {
  if (ports.empty()) throw Error("no ports to scan");
  if (options.parallelism < 1) throw Error("parallelism must be >= 1");
  const Ipv4 ip = resolve(address);

  std::vector<std::uint16_t> sorted = ports;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<PortResult> results(sorted.size());
  InFlightGauge gauge;
  parallel_for(sorted.size(), options.parallelism, [&](std::size_t i) {
    gauge.enter();
    PortResult r;
    r.port = sorted[i];
    try {
      auto outcome = tcp_connect(ip, r.port, options.connect_timeout);
      r.state = outcome.state;
      if (outcome.state == PortState::Open && options.grab_banners) {
        r.banner = read_banner(outcome.fd.get(), options.banner_timeout);
      }
    } catch (...) {
      gauge.leave();
      throw;
    }
    gauge.leave();
    results[i] = std::move(r);
  });
  if (stats != nullptr) stats->peak_in_flight = std::max(stats->peak_in_flight, gauge.peak());
  return results;
}

std::optional<std::string> grab_banner(const std::string& address, std::uint16_t port, Millis timeout) {
  const Ipv4 ip = resolve(address);
  auto outcome = tcp_connect(ip, port, timeout);
  if (outcome.state != PortState::Open) {
    throw Error("banner grab on " + address + ":" + std::to_string(port) + " failed: port is " +
                to_string(outcome.state));
  }
  return read_banner(outcome.fd.get(), timeout);
}

}  // namespace ptk::scanner
