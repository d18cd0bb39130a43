#ifndef AMISHIELD_TESTS_FIXTURES_HPP
#define AMISHIELD_TESTS_FIXTURES_HPP

// Generators shared by the unit tests and the acceptance runner.

#include <string>
#include <vector>

#include "amishield/aggen.hpp"
#include "amishield/bag.hpp"
#include "amishield/mitigator.hpp"
#include "amishield/planner.hpp"
#include "amishield/random.hpp"

namespace fixture {

using amishield::Rng;
using amishield::aggen::Atom;
using amishield::aggen::FactBase;

/// attackerLocated(internet), hacl(internet,meter1,tcp,80),
/// networkServiceInfo(meter1,svc,tcp,80,root),
/// vulExists(meter1,cveX,svc,remote,privEscalation)
inline FactBase four_facts() {
  return {
      {"attackerLocated", {"internet"}},
      {"hacl", {"internet", "meter1", "tcp", "80"}},
      {"networkServiceInfo", {"meter1", "svc", "tcp", "80", "root"}},
      {"vulExists", {"meter1", "cveX", "svc", "remote", "privEscalation"}},
  };
}

/// internet -> gw on tcp/80, gw -> mdm on tcp/80 and tcp/443, every service
/// vulnerable: execCode(mdm,root) has two derivations through gw.
inline FactBase diamond_facts() {
  return {
      {"attackerLocated", {"internet"}},
      {"hacl", {"internet", "gw", "tcp", "80"}},
      {"hacl", {"gw", "mdm", "tcp", "80"}},
      {"hacl", {"gw", "mdm", "tcp", "443"}},
      {"networkServiceInfo", {"gw", "web", "tcp", "80", "root"}},
      {"networkServiceInfo", {"mdm", "web", "tcp", "80", "root"}},
      {"networkServiceInfo", {"mdm", "api", "tcp", "443", "root"}},
      {"vulExists", {"gw", "cveA", "web", "remote", "privEscalation"}},
      {"vulExists", {"mdm", "cveB", "web", "remote", "privEscalation"}},
      {"vulExists", {"mdm", "cveC", "api", "remote", "privEscalation"}},
  };
}

struct RandomFactsOptions {
  int max_hosts = 6;
  int max_hacl = 14;
  double attacker_p = 0.9;
};

/// Random small network: hosts h1..hn plus the internet zone, random
/// reachability on ports 80/443, random services and vulnerabilities.
inline FactBase random_facts(Rng& rng, const RandomFactsOptions& opt = {}) {
  FactBase f;
  const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_hosts)));
  auto host = [](int i) { return "h" + std::to_string(i + 1); };
  const std::vector<std::string> ports{"80", "443"};
  if (rng.bernoulli(opt.attacker_p)) f.insert({"attackerLocated", {"internet"}});
  for (int i = 0; i < n; ++i) {
    for (const auto& port : ports) {
      if (rng.bernoulli(0.6)) {
        const std::string svc = port == "80" ? "web" : "api";
        f.insert({"networkServiceInfo", {host(i), svc, "tcp", port, rng.bernoulli(0.7) ? "root" : "user"}});
        if (rng.bernoulli(0.7)) f.insert({"vulExists", {host(i), "cve" + svc + std::to_string(i), svc, "remote", "privEscalation"}});
      }
    }
    if (rng.bernoulli(0.3)) f.insert({"hasAccount", {"alice", host(i), "user"}});
  }
  int hacl = 0;
  const int budget = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_hacl)));
  for (int tries = 0; tries < 4 * budget && hacl < budget; ++tries) {
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(n + 1))) - 1;
    const int d = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (s == d) continue;
    const std::string src = s < 0 ? "internet" : host(s);
    if (f.insert({"hacl", {src, host(d), "tcp", ports[rng.below(2)]}}).second) ++hacl;
  }
  return f;
}

/// Random DAG over `n` conditions: the first few are roots with random
/// priors, every other node gets one or two derivation groups over earlier
/// nodes with random exploit probabilities.
inline amishield::bag::BayesianAttackGraph random_bag(Rng& rng, std::size_t n) {
  amishield::bag::BayesianAttackGraph g;
  const std::size_t roots = 1 + rng.below(std::min<std::size_t>(3, n));
  for (std::size_t v = 0; v < n; ++v) {
    amishield::bag::BagNode node;
    node.atom = {"c", {std::to_string(v)}};
    if (v < roots) {
      node.prior = rng.uniform(0.2, 1.0);
    } else {
      node.prior = 0.0;
      const std::size_t groups = 1 + rng.below(2);
      for (std::size_t k = 0; k < groups; ++k) {
        amishield::bag::ParentGroup grp;
        const std::size_t parents = 1 + rng.below(std::min<std::size_t>(2, v));
        for (std::size_t j = 0; j < parents; ++j) {
          const std::size_t p = rng.below(v);
          if (std::find(grp.parents.begin(), grp.parents.end(), p) == grp.parents.end()) grp.parents.push_back(p);
        }
        for (std::size_t j = 0; j < grp.parents.size(); ++j) grp.edge_probs.push_back(j == 0 ? rng.uniform(0.1, 1.0) : 1.0);
        grp.rule = "r";
        node.groups.push_back(std::move(grp));
      }
    }
    g.index.emplace(node.atom, v);
    g.nodes.push_back(std::move(node));
  }
  g.topo_order = amishield::bag::topological_order(g).value();
  return g;
}

/// Two conditions: the attacker's foothold (always true) and a goal one
/// exploit away, reachable only over hacl(internet,meter1,tcp,80).
inline amishield::bag::BayesianAttackGraph toy_bag(double exploit) {
  amishield::bag::BayesianAttackGraph g;
  amishield::bag::BagNode root;
  root.atom = {"attackerLocated", {"internet"}};
  root.prior = 1.0;
  amishield::bag::BagNode goal;
  goal.atom = {"execCode", {"meter1", "root"}};
  goal.prior = 0.0;
  amishield::bag::ParentGroup grp;
  grp.parents = {0};
  grp.edge_probs = {exploit};
  grp.rule = "remote-exploit";
  grp.folded = {{"hacl", {"internet", "meter1", "tcp", "80"}}};
  goal.groups.push_back(grp);
  g.nodes = {root, goal};
  g.index = {{g.nodes[0].atom, 0}, {g.nodes[1].atom, 1}};
  g.topo_order = {0, 1};
  return g;
}

inline std::vector<amishield::mitigator::RuleSet> toy_candidates() {
  return {{amishield::mitigator::FirewallRule{"internet", "meter1", "tcp", "80"}}};
}

/// Three conditions in a chain root -> stage -> goal, with a rule for each link.
inline amishield::bag::BayesianAttackGraph chain3_bag(double p1, double p2) {
  amishield::bag::BayesianAttackGraph g;
  amishield::bag::BagNode root, mid, goal;
  root.atom = {"attackerLocated", {"internet"}};
  root.prior = 1.0;
  mid.atom = {"execCode", {"gw", "root"}};
  mid.prior = 0.0;
  mid.groups.push_back({{0}, {p1}, 1.0, "r1", {{"hacl", {"internet", "gw", "tcp", "80"}}}});
  goal.atom = {"execCode", {"mdm", "root"}};
  goal.prior = 0.0;
  goal.groups.push_back({{1}, {p2}, 1.0, "r2", {{"hacl", {"gw", "mdm", "tcp", "443"}}}});
  g.nodes = {root, mid, goal};
  for (std::size_t i = 0; i < 3; ++i) g.index.emplace(g.nodes[i].atom, i);
  g.topo_order = {0, 1, 2};
  return g;
}

inline std::vector<amishield::mitigator::RuleSet> chain3_candidates() {
  return {{amishield::mitigator::FirewallRule{"internet", "gw", "tcp", "80"}},
          {amishield::mitigator::FirewallRule{"gw", "mdm", "tcp", "443"}}};
}

}  // namespace fixture

#endif  // AMISHIELD_TESTS_FIXTURES_HPP
