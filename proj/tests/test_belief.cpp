#include "ptk/belief.hpp"
#include "ptk/error.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace ptk::belief;

namespace {

HostBelief five_bit_host(const std::string& id = "h1") {
  return new_host_belief(id, {"win7", "win2012", "linux", "bsd"}, 3, 0, 0);
}

std::vector<double> as_vec(const Probabilities& p) { return {p.data(), p.data() + p.size()}; }

/// Random host with some components already collapsed.
HostBelief random_host(std::mt19937_64& rng, const std::string& id) {
  std::uniform_int_distribution<int> small(0, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_os = 1 + small(rng);
  std::vector<std::string> cands;
  for (int i = 0; i < n_os; ++i) cands.push_back("os" + std::to_string(i));
  auto h = new_host_belief(id, cands, small(rng), small(rng), small(rng));
  Probabilities os(n_os);
  for (int i = 0; i < n_os; ++i) os(i) = unit(rng) + 1e-3;
  h.os = os / os.sum();
  for (auto g : {Group::Ports, Group::Apps, Group::Protections}) {
    auto& v = h.group(g);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double r = unit(rng);
      v(i) = r < 0.2 ? 0.0 : r > 0.8 ? 1.0 : unit(rng);
    }
  }
  return h;
}

std::vector<Observation> random_observations(std::mt19937_64& rng, const NetworkBelief& nb, int count) {
  std::vector<Observation> out;
  std::uniform_int_distribution<std::size_t> pick_host(0, nb.size() - 1);
  std::uniform_int_distribution<int> pick_kind(0, 5);
  std::bernoulli_distribution coin(0.5);
  for (int k = 0; k < count; ++k) {
    const auto& h = nb.hosts()[pick_host(rng)];
    const int kind = pick_kind(rng);
    auto idx = [&](Eigen::Index n) { return std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(n - 1))(rng); };
    if (kind == 0) out.push_back(Observation::os_identified(h.id, idx(h.os.size())));
    else if (kind == 1 && h.ports.size()) out.push_back(Observation::port_state(h.id, idx(h.ports.size()), coin(rng)));
    else if (kind == 2 && h.apps.size()) out.push_back(Observation::app_state(h.id, idx(h.apps.size()), coin(rng)));
    else if (kind == 3 && h.protections.size())
      out.push_back(Observation::protection_state(h.id, idx(h.protections.size()), coin(rng)));
    else if (kind == 4) out.push_back(Observation::control_gained(h.id));
    else out.push_back(Observation::no_effect(h.id));
  }
  return out;
}

}  // namespace

TEST_CASE("new_host_belief uses the max-uncertainty prior") {
  const auto h = new_host_belief("h1", {"win7", "linux"}, 3, 0, 0);
  CHECK(as_vec(h.os) == std::vector<double>{0.5, 0.5});
  CHECK(as_vec(h.ports) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK_FALSE(h.controlled);

  const auto single = new_host_belief("h1", {"win7"}, 0, 0, 0);
  CHECK(as_vec(single.os) == std::vector<double>{1.0});
  CHECK(host_entropy(single) == 0.0);

  CHECK_THROWS_WITH_AS(new_host_belief("h1", {}, 1, 0, 0), doctest::Contains("no OS hypothesis"), ptk::Error);
}

TEST_CASE("host_entropy analytic values") {
  auto four = new_host_belief("h", {"a", "b", "c", "d"}, 0, 0, 0);
  CHECK(host_entropy(four) == 2.0);

  auto known_os = new_host_belief("h", {"a", "b"}, 3, 0, 0);
  known_os.os << 1.0, 0.0;
  CHECK(host_entropy(known_os) == 3.0);

  CHECK(host_entropy(five_bit_host()) == 5.0);

  auto controlled = five_bit_host();
  controlled.controlled = true;
  CHECK(host_entropy(controlled) == 0.0);
}

TEST_CASE("host_entropy agrees with the naive oracle") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto h = random_host(rng, "h");
    std::vector<double> bern;
    for (auto g : {Group::Ports, Group::Apps, Group::Protections}) {
      for (double p : as_vec(h.group(g))) bern.push_back(p);
    }
    const long double expected = ptk_test::naive_entropy(as_vec(h.os), bern);
    CHECK(host_entropy(h) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-9));
  }
}

TEST_CASE("network_entropy sums hosts") {
  CHECK(network_entropy(NetworkBelief{}) == 0.0);
  CHECK(network_entropy(NetworkBelief({five_bit_host("a"), five_bit_host("b")})) == 10.0);

  auto c = five_bit_host("a");
  c.controlled = true;
  CHECK(network_entropy(NetworkBelief({c, new_host_belief("b", {"1", "2", "3", "4"}, 0, 0, 0)})) == 2.0);
}

TEST_CASE("NetworkBelief keeps hosts sorted and ids unique") {
  NetworkBelief nb({five_bit_host("zeta"), five_bit_host("alpha")});
  CHECK(nb.hosts().front().id == "alpha");
  CHECK_THROWS_AS(NetworkBelief({five_bit_host("a"), five_bit_host("a")}), ptk::Error);
}

TEST_CASE("validate rejects broken invariants") {
  auto h = five_bit_host();
  h.os << 0.5, 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(h.validate(), ptk::Error);
  auto p = five_bit_host();
  p.ports(0) = 1.5;
  CHECK_THROWS_AS(p.validate(), ptk::Error);
}

TEST_CASE("apply_observation collapses components") {
  const NetworkBelief nb({five_bit_host()});
  const auto after_port = apply_observation(nb, Observation::port_state("h1", 0, true));
  CHECK(host_entropy(after_port.at("h1")) == 4.0);
  CHECK(after_port.at("h1").ports(0) == 1.0);
  CHECK(nb.at("h1").ports(0) == 0.5);  // input untouched

  CHECK(apply_observation(nb, Observation::no_effect("h1")) == nb);

  const auto owned = apply_observation(nb, Observation::control_gained("h1"));
  CHECK(host_entropy(owned.at("h1")) == 0.0);
  CHECK(owned.at("h1").controlled);

  GroundTruth truth{2, {true, false, true}, {}, {}};
  const auto grounded = apply_observation(nb, Observation::control_gained("h1", truth));
  CHECK(grounded.at("h1").os(2) == 1.0);
  CHECK(as_vec(grounded.at("h1").ports) == std::vector<double>{1.0, 0.0, 1.0});

  CHECK_THROWS_AS(apply_observation(nb, Observation::port_state("nope", 0, true)), ptk::Error);
  CHECK_THROWS_AS(apply_observation(nb, Observation::port_state("h1", 3, true)), ptk::Error);
  CHECK_THROWS_AS(apply_observation(nb, Observation::os_identified("h1", 4)), ptk::Error);
}

TEST_CASE("information_gain three cases") {
  const NetworkBelief before({five_bit_host()});
  const auto partial = apply_observation(before, Observation::port_state("h1", 1, false));
  CHECK(information_gain(before, partial) == 1.0);
  CHECK(information_gain(before, apply_observation(before, Observation::control_gained("h1"))) == 5.0);
  CHECK(information_gain(before, before) == 0.0);
  CHECK_THROWS_AS(information_gain(before, NetworkBelief({five_bit_host("other")})), ptk::Error);
}

TEST_CASE("property: non-negativity, zero iff degenerate, upper bound") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto h = random_host(rng, "h");
    const double e = host_entropy(h);
    CHECK(e >= 0.0);
    bool all_degenerate = h.os_degenerate();
    std::size_t slots = 0;
    for (auto g : {Group::Ports, Group::Apps, Group::Protections}) {
      slots += static_cast<std::size_t>(h.group(g).size());
      for (Eigen::Index k = 0; k < h.group(g).size(); ++k) all_degenerate &= h.degenerate(g, static_cast<std::size_t>(k));
    }
    CHECK((e == 0.0) == all_degenerate);
    const double bound = std::log2(static_cast<double>(h.os.size())) + static_cast<double>(slots);
    CHECK(e <= bound + 1e-9);
    const auto fresh = new_host_belief("h", h.os_candidates, h.ports.size(), h.apps.size(), h.protections.size());
    CHECK(host_entropy(fresh) == doctest::Approx(bound).epsilon(1e-10));  // terms sit on a 2^-36 grid
  }
}

TEST_CASE("property: monotone updates and exact telescoping") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<HostBelief> hosts;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) hosts.push_back(random_host(rng, "h" + std::to_string(i)));
    const NetworkBelief initial(hosts);
    NetworkBelief nb = initial;
    double sum = 0.0;
    for (const auto& obs : random_observations(rng, initial, 12)) {
      const auto after = apply_observation(nb, obs);
      const double gain = information_gain(nb, after);
      const auto& target = nb.at(obs.host_id);
      bool changes = false;
      std::visit(
          [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, OsIdentified>) changes = !target.os_degenerate();
            else if constexpr (std::is_same_v<K, ComponentState>) changes = !target.degenerate(k.group, k.index);
            else if constexpr (std::is_same_v<K, ControlGained>) changes = host_entropy(target) > 0.0;
          },
          obs.kind);
      if (std::holds_alternative<NoEffect>(obs.kind)) CHECK(after == nb);
      if (changes) CHECK(gain > 0.0);
      else CHECK(gain >= 0.0);
      sum += gain;
      nb = after;
    }
    CHECK(sum == network_entropy(initial) - network_entropy(nb));
  }
}

TEST_CASE("JSON round trip") {
  std::mt19937_64 rng(5);
  std::vector<HostBelief> hosts;
  for (int i = 0; i < 4; ++i) hosts.push_back(random_host(rng, "h" + std::to_string(i)));
  hosts[1].controlled = true;
  for (auto g : {Group::Ports, Group::Apps, Group::Protections}) hosts[1].group(g).setZero();
  hosts[1].os.setZero();
  hosts[1].os(0) = 1.0;
  const NetworkBelief nb(hosts);
  const auto back = network_belief_from_json(nlohmann::json::parse(to_json(nb).dump()));
  REQUIRE(back.size() == nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i) {
    const auto& a = nb.hosts()[i];
    const auto& b = back.hosts()[i];
    CHECK(a.id == b.id);
    CHECK(a.controlled == b.controlled);
    CHECK((a.os - b.os).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.ports - b.ports).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  CHECK_THROWS_AS(network_belief_from_json(nlohmann::json::parse(R"({"hosts":[{"id":"x"}]})")), ptk::Error);

  const auto obs = to_json(Observation::port_state("h1", 2, true));
  CHECK(obs["kind"] == "port_state");
}
