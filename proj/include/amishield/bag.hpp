#ifndef AMISHIELD_BAG_HPP
#define AMISHIELD_BAG_HPP

// Bayesian attack graphs built from logical attack graphs, with local CPDs,
// exact inference by enumeration and forward Monte-Carlo sampling.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amishield/aggen.hpp"
#include "amishield/error.hpp"
#include "amishield/random.hpp"
#include "json.hpp"

namespace amishield::bag {

using aggen::Atom;

enum class NodeType { root, and_combined, or_combined };

inline const char* to_string(NodeType t) {
  switch (t) {
    case NodeType::root: return "root";
    case NodeType::and_combined: return "and";
    case NodeType::or_combined: return "or";
  }
  return "?";
}

/// One derivation of a node: it fires with probability base * prod(edge_probs)
/// once every parent is true. `folded` lists the constant input facts
/// (connectivity, services, vulnerabilities) the derivation also needs.
struct ParentGroup {
  std::vector<std::size_t> parents;
  std::vector<double> edge_probs;  // parallel to parents
  double base = 1.0;
  std::string rule;
  std::vector<Atom> folded;

  double probability() const {
    double p = base;
    for (double e : edge_probs) p *= e;
    return p;
  }
};

struct BagNode {
  Atom atom;
  double prior = 1.0;  // roots only
  std::vector<ParentGroup> groups;

  NodeType type() const {
    if (groups.empty()) return NodeType::root;
    return groups.size() == 1 ? NodeType::and_combined : NodeType::or_combined;
  }
};

struct BayesianAttackGraph {
  std::vector<BagNode> nodes;
  std::vector<std::size_t> topo_order;
  std::vector<std::string> removed_edges;  // cycle-breaking log
  std::map<Atom, std::size_t> index;

  std::size_t size() const { return nodes.size(); }

  std::size_t id_of(const Atom& a) const {
    const auto it = index.find(a);
    if (it == index.end()) throw Error(ErrorCode::UnknownNode, "no BAG node for " + aggen::to_string(a));
    return it->second;
  }

  std::vector<std::size_t> goals() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (aggen::is_goal_atom(nodes[i].atom)) out.push_back(i);
    }
    return out;
  }

  /// Children per node (node -> nodes that list it as a parent).
  std::vector<std::vector<std::size_t>> children() const {
    std::vector<std::vector<std::size_t>> out(nodes.size());
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      for (const auto& g : nodes[v].groups) {
        for (std::size_t p : g.parents) {
          if (std::find(out[p].begin(), out[p].end(), v) == out[p].end()) out[p].push_back(v);
        }
      }
    }
    return out;
  }
};

/// Kahn's algorithm, smallest id first. Returns nullopt on a cycle.
inline std::optional<std::vector<std::size_t>> topological_order(const BayesianAttackGraph& g) {
  const auto kids = g.children();
  std::vector<std::size_t> indegree(g.size(), 0);
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (std::size_t c : kids[v]) ++indegree[c];
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (indegree[v] == 0) ready.push(v);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t c : kids[v]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order.size() != g.size()) return std::nullopt;
  return order;
}

namespace detail {

/// Removes every back edge found by a DFS over nodes in id order (children
/// visited in id order) by deleting the derivation group that carries it.
inline void break_cycles(BayesianAttackGraph& g) {
  enum class Mark { fresh, active, done };
  std::vector<Mark> mark(g.size(), Mark::fresh);
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    mark[v] = Mark::active;
    auto kids = g.children()[v];
    std::sort(kids.begin(), kids.end());
    for (std::size_t c : kids) {
      if (mark[c] == Mark::active) {
        auto& groups = g.nodes[c].groups;
        for (auto it = groups.begin(); it != groups.end();) {
          if (std::find(it->parents.begin(), it->parents.end(), v) != it->parents.end()) {
            g.removed_edges.push_back(aggen::to_string(g.nodes[v].atom) + " -> " +
                                      aggen::to_string(g.nodes[c].atom) + " (" + it->rule + ")");
            it = groups.erase(it);
          } else {
            ++it;
          }
        }
      } else if (mark[c] == Mark::fresh) {
        visit(c);
      }
    }
    mark[v] = Mark::done;
  };
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (mark[v] == Mark::fresh) visit(v);
  }
}

}  // namespace detail

struct BagOptions {
  /// Leaf predicates kept as random root variables; all other leaves are
  /// always-true configuration and get folded into their derivations.
  std::set<std::string> root_predicates{"attackerLocated"};
  double root_prior = 1.0;
  double default_cvss = 10.0;  // for CVEs missing from the score table
};

/// Derived atoms become variables; each AND instance becomes a parent group
/// of its head, with the exploit probability (CVSS / 10, product over the
/// vulnerabilities it uses) placed on the first parent edge.
inline BayesianAttackGraph lag_to_bag(const aggen::LogicalAttackGraph& lag,
                                      const std::map<std::string, double>& scores, const BagOptions& opt = {}) {
  BayesianAttackGraph g;
  std::map<std::size_t, std::size_t> var_of;  // lag id -> bag id
  for (std::size_t i = 0; i < lag.nodes.size(); ++i) {
    const auto& n = lag.nodes[i];
    const bool keep = n.kind == aggen::NodeKind::derived ||
                      (n.kind == aggen::NodeKind::leaf && opt.root_predicates.count(n.atom.predicate));
    if (!keep) continue;
    var_of[i] = g.nodes.size();
    g.index.emplace(n.atom, g.nodes.size());
    BagNode node;
    node.atom = n.atom;
    node.prior = n.kind == aggen::NodeKind::leaf ? opt.root_prior : 0.0;
    g.nodes.push_back(std::move(node));
  }
  for (std::size_t i = 0; i < lag.nodes.size(); ++i) {
    if (lag.nodes[i].kind != aggen::NodeKind::derived) continue;
    BagNode& node = g.nodes[var_of.at(i)];
    for (std::size_t and_id : lag.preds[i]) {
      ParentGroup group;
      group.rule = lag.rules[lag.nodes[and_id].rule].label;
      double exploit = 1.0;
      for (std::size_t pre : lag.preds[and_id]) {
        const auto& pn = lag.nodes[pre];
        if (auto it = var_of.find(pre); it != var_of.end()) {
          group.parents.push_back(it->second);
        } else {
          group.folded.push_back(pn.atom);
        }
        if (pn.atom.predicate == "vulExists" && pn.atom.args.size() >= 2) {
          const auto s = scores.find(pn.atom.args[1]);
          exploit *= (s == scores.end() ? opt.default_cvss : s->second) / 10.0;
        }
      }
      group.edge_probs.assign(group.parents.size(), 1.0);
      if (group.parents.empty()) {
        group.base = exploit;
      } else {
        group.edge_probs[0] = exploit;
      }
      node.groups.push_back(std::move(group));
    }
  }
  detail::break_cycles(g);
  g.topo_order = topological_order(g).value();
  return g;
}

// ---------------------------------------------------------------------------
// Local CPDs

/// Pr(node = 1 | parents). Closed form over derivation groups; `table()`
/// expands it over all 2^k assignments of the distinct parents.
struct Cpd {
  std::size_t node = 0;
  NodeType type = NodeType::root;
  double prior = 0.0;
  std::vector<std::size_t> parents;  // distinct, ascending
  std::vector<ParentGroup> groups;

  /// `parent_values[i]` is the value of parents[i].
  double probability(const std::vector<bool>& parent_values) const {
    if (type == NodeType::root) return prior;
    double fail = 1.0;
    for (const auto& g : groups) {
      bool all = true;
      for (std::size_t p : g.parents) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(parents.begin(), parents.end(), p) - parents.begin());
        if (!parent_values[pos]) {
          all = false;
          break;
        }
      }
      if (all) fail *= 1.0 - g.probability();
    }
    return 1.0 - fail;
  }

  /// Entry m corresponds to parents[i] = bit i of m.
  std::vector<double> table() const {
    const std::size_t k = parents.size();
    std::vector<double> out(std::size_t{1} << k);
    std::vector<bool> values(k);
    for (std::size_t m = 0; m < out.size(); ++m) {
      for (std::size_t i = 0; i < k; ++i) values[i] = (m >> i) & 1;
      out[m] = probability(values);
    }
    return out;
  }
};

inline Cpd local_cpd(std::size_t node, const BayesianAttackGraph& g) {
  if (node >= g.size()) throw Error(ErrorCode::UnknownNode, "node id " + std::to_string(node));
  const auto& n = g.nodes[node];
  Cpd cpd;
  cpd.node = node;
  cpd.type = n.type();
  cpd.prior = n.prior;
  cpd.groups = n.groups;
  std::set<std::size_t> ps;
  for (const auto& grp : n.groups) ps.insert(grp.parents.begin(), grp.parents.end());
  cpd.parents.assign(ps.begin(), ps.end());
  return cpd;
}

inline Cpd local_cpd(const Atom& atom, const BayesianAttackGraph& g) { return local_cpd(g.id_of(atom), g); }

/// Pr(node = 1) given a full assignment of (at least) its parents.
inline double conditional(const BagNode& n, const std::vector<char>& assignment,
                          const std::function<bool(const ParentGroup&)>& enabled = {}) {
  if (n.groups.empty()) return n.prior;
  double fail = 1.0;
  for (const auto& g : n.groups) {
    if (enabled && !enabled(g)) continue;
    bool all = true;
    for (std::size_t p : g.parents) all = all && assignment[p];
    if (all) fail *= 1.0 - g.probability();
  }
  return 1.0 - fail;
}

// ---------------------------------------------------------------------------
// Inference

inline constexpr std::size_t kExactNodeCap = 20;

enum class Method { automatic, exact, monte_carlo };

struct InferenceOptions {
  Method method = Method::automatic;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
};

namespace detail {

/// Depth-first enumeration over nodes in topological order, pruning
/// zero-probability branches. `evidence[v]` is -1 (free), 0 or 1.
inline std::pair<std::vector<double>, double> enumerate(const BayesianAttackGraph& g,
                                                        const std::vector<int>& evidence) {
  const std::size_t n = g.size();
  std::vector<double> mass(n, 0.0);
  double total = 0.0;
  std::vector<char> value(n, 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t depth, double weight) {
    if (weight == 0.0) return;
    if (depth == n) {
      total += weight;
      for (std::size_t v = 0; v < n; ++v) {
        if (value[v]) mass[v] += weight;
      }
      return;
    }
    const std::size_t v = g.topo_order[depth];
    const double p = conditional(g.nodes[v], value);
    if (evidence[v] != 0) {
      value[v] = 1;
      rec(depth + 1, weight * p);
    }
    if (evidence[v] != 1) {
      value[v] = 0;
      rec(depth + 1, weight * (1.0 - p));
    }
    value[v] = 0;
  };
  rec(0, 1.0);
  return {mass, total};
}

}  // namespace detail

inline std::vector<double> exact_marginals(const BayesianAttackGraph& g) {
  if (g.size() > kExactNodeCap) {
    throw Error(ErrorCode::TooLargeForExact, std::to_string(g.size()) + " nodes exceed the exact cap of " +
                                                 std::to_string(kExactNodeCap));
  }
  auto [mass, total] = detail::enumerate(g, std::vector<int>(g.size(), -1));
  for (auto& m : mass) m = std::clamp(m / total, 0.0, 1.0);
  return mass;
}

/// One forward sample; `enabled` can veto derivation groups (e.g. blocked links).
inline std::vector<char> sample_state(const BayesianAttackGraph& g, Rng& rng,
                                      const std::function<bool(const ParentGroup&)>& enabled = {}) {
  std::vector<char> value(g.size(), 0);
  for (std::size_t v : g.topo_order) value[v] = rng.bernoulli(conditional(g.nodes[v], value, enabled)) ? 1 : 0;
  return value;
}

inline std::vector<double> monte_carlo_marginals(const BayesianAttackGraph& g, std::size_t samples,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> counts(g.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto value = sample_state(g, rng);
    for (std::size_t v = 0; v < g.size(); ++v) counts[v] += value[v];
  }
  for (auto& c : counts) c /= static_cast<double>(samples);
  return counts;
}

/// Marginal compromise probability of every node, indexed by node id.
inline std::vector<double> unconditional(const BayesianAttackGraph& g, const InferenceOptions& opt = {}) {
  switch (opt.method) {
    case Method::exact: return exact_marginals(g);
    case Method::monte_carlo: return monte_carlo_marginals(g, opt.samples, opt.seed);
    case Method::automatic:
      return g.size() <= kExactNodeCap ? exact_marginals(g) : monte_carlo_marginals(g, opt.samples, opt.seed);
  }
  return {};
}

inline std::vector<double> posterior(const BayesianAttackGraph& g, const std::map<std::size_t, bool>& evidence) {
  std::vector<int> ev(g.size(), -1);
  for (const auto& [node, val] : evidence) {
    if (node >= g.size()) throw Error(ErrorCode::UnknownNode, "evidence on unknown node " + std::to_string(node));
    ev[node] = val ? 1 : 0;
  }
  if (g.size() > kExactNodeCap) {
    throw Error(ErrorCode::TooLargeForExact, std::to_string(g.size()) + " nodes exceed the exact cap");
  }
  auto [mass, total] = detail::enumerate(g, ev);
  if (total <= 0.0) throw Error(ErrorCode::InconsistentEvidence, "evidence has probability zero");
  for (auto& m : mass) m = std::clamp(m / total, 0.0, 1.0);
  return mass;
}

inline std::vector<double> posterior(const BayesianAttackGraph& g, const std::map<Atom, bool>& evidence) {
  std::map<std::size_t, bool> ids;
  for (const auto& [atom, val] : evidence) ids[g.id_of(atom)] = val;
  return posterior(g, ids);
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const BayesianAttackGraph& g, const std::vector<double>* marginals = nullptr) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t v = 0; v < g.size(); ++v) {
    const auto& n = g.nodes[v];
    nlohmann::json groups = nlohmann::json::array();
    for (std::size_t gi = 0; gi < n.groups.size(); ++gi) {
      const auto& grp = n.groups[gi];
      nlohmann::json folded = nlohmann::json::array();
      for (const auto& f : grp.folded) folded.push_back(aggen::to_string(f));
      groups.push_back({{"rule", grp.rule},
                        {"parents", grp.parents},
                        {"edge_probs", grp.edge_probs},
                        {"base", grp.base},
                        {"probability", grp.probability()},
                        {"folded", folded}});
      for (std::size_t k = 0; k < grp.parents.size(); ++k) {
        edges.push_back({{"from", grp.parents[k]}, {"to", v}, {"group", gi}, {"prob", grp.edge_probs[k]}});
      }
    }
    nlohmann::json node{{"id", v}, {"atom", aggen::to_string(n.atom)}, {"type", to_string(n.type())}, {"groups", groups}};
    if (n.type() == NodeType::root) node["prior"] = n.prior;
    if (aggen::is_goal_atom(n.atom)) node["goal"] = true;
    if (marginals) node["probability"] = (*marginals)[v];
    nodes.push_back(std::move(node));
  }
  return {{"format", "amishield-bag"},
          {"version", 1},
          {"nodes", nodes},
          {"edges", edges},
          {"topological_order", g.topo_order},
          {"removed_edges", g.removed_edges}};
}

inline std::string to_dot(const BayesianAttackGraph& g, const std::vector<double>* marginals = nullptr) {
  std::ostringstream out;
  out << "digraph bag {\n";
  for (std::size_t v = 0; v < g.size(); ++v) {
    out << "  n" << v << " [label=\"" << aggen::to_string(g.nodes[v].atom);
    if (marginals) out << "\\np=" << (*marginals)[v];
    out << "\", shape=" << (g.nodes[v].type() == NodeType::root ? "box" : "ellipse") << "];\n";
  }
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (const auto& grp : g.nodes[v].groups) {
      for (std::size_t k = 0; k < grp.parents.size(); ++k) {
        out << "  n" << grp.parents[k] << " -> n" << v << " [label=\"" << grp.edge_probs[k] << "\"];\n";
      }
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace amishield::bag

#endif  // AMISHIELD_BAG_HPP
