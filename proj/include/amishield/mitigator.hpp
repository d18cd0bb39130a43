#ifndef AMISHIELD_MITIGATOR_HPP
#define AMISHIELD_MITIGATOR_HPP

// Firewall-rule synthesis. A depth-first walk from a goal node toward the
// leaves of the logical attack graph builds an ALL-of/ANY-of tree over the
// hacl facts that can be denied; its satisfying sets are the rule sets that
// cut every derivation of the goal.

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amishield/aggen.hpp"
#include "amishield/error.hpp"
#include "json.hpp"

namespace amishield::mitigator {

using aggen::Atom;

struct FirewallRule {
  std::string src;
  std::string dst;
  std::string protocol = "any";  // tcp, udp or any
  std::string port = "any";      // number or any

  friend auto operator<=>(const FirewallRule&, const FirewallRule&) = default;
  friend bool operator==(const FirewallRule&, const FirewallRule&) = default;

  static FirewallRule from_hacl(const Atom& hacl) {
    if (hacl.predicate != "hacl" || hacl.args.size() != 4) {
      throw Error(ErrorCode::SchemaViolation, "not a hacl fact: " + aggen::to_string(hacl));
    }
    return {hacl.args[0], hacl.args[1], hacl.args[2], hacl.args[3]};
  }

  bool matches(const Atom& hacl) const {
    return hacl.predicate == "hacl" && hacl.args.size() == 4 && hacl.args[0] == src && hacl.args[1] == dst &&
           (protocol == "any" || hacl.args[2] == protocol) && (port == "any" || hacl.args[3] == port);
  }

  /// `deny <proto> <src> -> <dst>:<port>`
  std::string to_text() const { return "deny " + protocol + " " + src + " -> " + dst + ":" + port; }

  Atom to_hacl() const { return {"hacl", {src, dst, protocol, port}}; }
};

using RuleSet = std::vector<FirewallRule>;  // sorted, distinct

inline FirewallRule parse_rule_text(const std::string& line) {
  std::istringstream in(line);
  std::string deny, proto, src, arrow, dst_port;
  if (!(in >> deny >> proto >> src >> arrow >> dst_port) || deny != "deny" || arrow != "->") {
    throw Error(ErrorCode::SchemaViolation, "malformed rule line '" + line + "'");
  }
  const auto colon = dst_port.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::SchemaViolation, "rule line lacks :port");
  return {src, dst_port.substr(0, colon), proto, dst_port.substr(colon + 1)};
}

struct RuleTree {
  enum class Kind { all_of, any_of, rule, always, never };

  struct Node {
    Kind kind = Kind::never;
    std::vector<std::size_t> children;   // all_of / any_of
    std::size_t rule = 0;                // rule: index into rules
    std::optional<std::size_t> lag_node;  // LAG node the connective stands for
  };

  Atom target;
  std::vector<Node> nodes;
  std::vector<FirewallRule> rules;  // distinct leaves, sorted
  std::size_t root = 0;
};

inline const char* to_string(RuleTree::Kind k) {
  switch (k) {
    case RuleTree::Kind::all_of: return "ALL-of";
    case RuleTree::Kind::any_of: return "ANY-of";
    case RuleTree::Kind::rule: return "rule";
    case RuleTree::Kind::always: return "true";
    case RuleTree::Kind::never: return "false";
  }
  return "?";
}

namespace detail {

class TreeBuilder {
 public:
  using Kind = RuleTree::Kind;

  explicit TreeBuilder(const aggen::LogicalAttackGraph& lag) : lag_(lag) {
    tree_.nodes.push_back({Kind::always, {}, 0, std::nullopt});
    tree_.nodes.push_back({Kind::never, {}, 0, std::nullopt});
    std::set<FirewallRule> all;
    for (const auto& n : lag.nodes) {
      if (n.kind == aggen::NodeKind::leaf && n.atom.predicate == "hacl") all.insert(FirewallRule::from_hacl(n.atom));
    }
    tree_.rules.assign(all.begin(), all.end());
  }

  RuleTree build(std::size_t target) {
    const Result r = cut_derived(target, 0);
    std::size_t root = r.node;
    if (root == kNever) {
      throw Error(ErrorCode::Unblockable,
                  "some derivation of " + aggen::to_string(lag_.nodes[target].atom) + " uses no hacl fact");
    }
    if (tree_.nodes[root].kind == Kind::rule) root = add({Kind::any_of, {root}, 0, std::nullopt});
    tree_.root = root;
    tree_.target = lag_.nodes[target].atom;
    return std::move(tree_);
  }

  RuleTree build_leaf(std::size_t leaf) {
    const Atom& a = lag_.nodes[leaf].atom;
    if (a.predicate != "hacl") throw Error(ErrorCode::Unblockable, aggen::to_string(a) + " is not a network fact");
    tree_.root = add({Kind::any_of, {rule_leaf(a)}, 0, std::nullopt});
    tree_.target = a;
    return std::move(tree_);
  }

 private:
  static constexpr std::size_t kAlways = 0;
  static constexpr std::size_t kNever = 1;
  static constexpr std::size_t kNoDependency = std::numeric_limits<std::size_t>::max();

  struct Result {
    std::size_t node;
    std::size_t depends_on;  // shallowest stack depth the result assumed cut
  };

  std::size_t add(RuleTree::Node n) {
    tree_.nodes.push_back(std::move(n));
    return tree_.nodes.size() - 1;
  }

  std::size_t rule_leaf(const Atom& hacl) {
    const FirewallRule r = FirewallRule::from_hacl(hacl);
    if (auto it = leaf_of_.find(r); it != leaf_of_.end()) return it->second;
    const auto idx = static_cast<std::size_t>(
        std::lower_bound(tree_.rules.begin(), tree_.rules.end(), r) - tree_.rules.begin());
    const std::size_t id = add({Kind::rule, {}, idx, std::nullopt});
    leaf_of_.emplace(r, id);
    return id;
  }

  /// Constant folding, single-child collapse and flattening of same-kind children.
  std::size_t connective(Kind kind, const std::vector<std::size_t>& kids, std::size_t lag_node) {
    const std::size_t absorbing = kind == Kind::all_of ? kNever : kAlways;
    const std::size_t neutral = kind == Kind::all_of ? kAlways : kNever;
    std::vector<std::size_t> flat;
    for (std::size_t k : kids) {
      if (k == absorbing) return absorbing;
      if (k == neutral) continue;
      if (tree_.nodes[k].kind == kind) {
        for (std::size_t g : tree_.nodes[k].children) flat.push_back(g);
      } else {
        flat.push_back(k);
      }
    }
    std::sort(flat.begin(), flat.end());
    flat.erase(std::unique(flat.begin(), flat.end()), flat.end());
    if (flat.empty()) return neutral;
    if (flat.size() == 1) return flat.front();
    return add({kind, std::move(flat), 0, lag_node});
  }

  // Cutting a derived atom means cutting every rule instance that derives it.
  // An atom already on the DFS stack counts as cut: a derivation through it
  // cannot survive once the atom itself is underivable.
  Result cut_derived(std::size_t v, std::size_t depth) {
    if (auto it = on_stack_.find(v); it != on_stack_.end()) return {kAlways, it->second};
    if (auto it = memo_.find(v); it != memo_.end()) return {it->second, kNoDependency};
    on_stack_.emplace(v, depth);
    std::vector<std::size_t> kids;
    std::size_t dep = kNoDependency;
    for (std::size_t and_id : lag_.preds[v]) {
      const Result r = cut_instance(and_id, depth + 1);
      kids.push_back(r.node);
      dep = std::min(dep, r.depends_on);
    }
    on_stack_.erase(v);
    const std::size_t node = connective(Kind::all_of, kids, v);
    if (dep >= depth) {
      memo_.emplace(v, node);
      dep = kNoDependency;
    }
    return {node, dep};
  }

  // Cutting a rule instance needs only one of its preconditions cut.
  Result cut_instance(std::size_t a, std::size_t depth) {
    std::vector<std::size_t> kids;
    std::size_t dep = kNoDependency;
    for (std::size_t pre : lag_.preds[a]) {
      const auto& n = lag_.nodes[pre];
      if (n.kind == aggen::NodeKind::leaf) {
        if (n.atom.predicate == "hacl") kids.push_back(rule_leaf(n.atom));
        continue;  // other leaves are not actionable
      }
      const Result r = cut_derived(pre, depth);
      kids.push_back(r.node);
      dep = std::min(dep, r.depends_on);
    }
    return {connective(Kind::any_of, kids, a), dep};
  }

  const aggen::LogicalAttackGraph& lag_;
  RuleTree tree_;
  std::map<FirewallRule, std::size_t> leaf_of_;
  std::map<std::size_t, std::size_t> on_stack_;  // lag id -> depth
  std::map<std::size_t, std::size_t> memo_;
};

}  // namespace detail

inline RuleTree build_rule_tree(const aggen::LogicalAttackGraph& lag, const Atom& target) {
  const auto id = lag.find(target);
  if (!id) throw Error(ErrorCode::TargetUnreachable, aggen::to_string(target) + " is not derivable");
  detail::TreeBuilder builder(lag);
  if (lag.nodes[*id].kind == aggen::NodeKind::leaf) return builder.build_leaf(*id);
  return builder.build(*id);
}

inline constexpr std::size_t kDefaultSetCap = 200000;

/// Minimal satisfying rule sets of the tree, smallest first (ties in rule
/// order). No returned set contains another.
inline std::vector<RuleSet> enumerate_rule_sets(const RuleTree& tree, std::size_t limit,
                                                std::size_t max_intermediate = kDefaultSetCap) {
  using Kind = RuleTree::Kind;
  using Sets = std::vector<std::vector<std::size_t>>;
  if (limit == 0) return {};

  auto minimize = [](Sets sets) {
    std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    sets.erase(std::unique(sets.begin(), sets.end()), sets.end());
    Sets kept;
    for (auto& s : sets) {
      const bool dominated = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
        return std::includes(s.begin(), s.end(), k.begin(), k.end());
      });
      if (!dominated) kept.push_back(std::move(s));
    }
    return kept;
  };

  std::map<std::size_t, Sets> memo;
  std::function<const Sets&(std::size_t)> sets_of = [&](std::size_t id) -> const Sets& {
    if (auto it = memo.find(id); it != memo.end()) return it->second;
    const auto& n = tree.nodes[id];
    Sets out;
    switch (n.kind) {
      case Kind::always: out = {{}}; break;
      case Kind::never: out = {}; break;
      case Kind::rule: out = {{n.rule}}; break;
      case Kind::any_of:
        for (std::size_t c : n.children) {
          const Sets& cs = sets_of(c);
          out.insert(out.end(), cs.begin(), cs.end());
        }
        out = minimize(std::move(out));
        break;
      case Kind::all_of:
        out = {{}};
        for (std::size_t c : n.children) {
          const Sets& cs = sets_of(c);
          Sets next;
          for (const auto& a : out) {
            for (const auto& b : cs) {
              std::vector<std::size_t> u;
              std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
              next.push_back(std::move(u));
              if (next.size() > max_intermediate) {
                throw Error(ErrorCode::SearchLimitExceeded, "rule-set enumeration exceeded " +
                                                                std::to_string(max_intermediate) + " candidates");
              }
            }
          }
          out = minimize(std::move(next));
        }
        break;
    }
    return memo.emplace(id, std::move(out)).first->second;
  };

  const Sets& all = sets_of(tree.root);
  std::vector<RuleSet> result;
  for (std::size_t i = 0; i < all.size() && result.size() < limit; ++i) {
    RuleSet rs;
    for (std::size_t r : all[i]) rs.push_back(tree.rules[r]);
    result.push_back(std::move(rs));
  }
  return result;
}

/// Removes the hacl facts any rule matches, re-derives, and reports whether
/// the target is gone.
inline bool verify_block(const aggen::FactBase& facts, const std::vector<aggen::InteractionRule>& rules,
                         const RuleSet& ruleset, const Atom& target) {
  aggen::FactBase reduced;
  for (const auto& f : facts) {
    const bool blocked = std::any_of(ruleset.begin(), ruleset.end(), [&](const auto& r) { return r.matches(f); });
    if (!blocked) reduced.insert(f);
  }
  return aggen::derive(reduced, rules).count(target) == 0;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const FirewallRule& r) {
  return {{"action", "deny"}, {"src", r.src}, {"dst", r.dst}, {"protocol", r.protocol}, {"port", r.port}};
}

inline FirewallRule rule_from_json(const nlohmann::json& j) {
  if (j.value("action", std::string("deny")) != "deny") throw Error(ErrorCode::SchemaViolation, "only deny rules");
  return {j.at("src").get<std::string>(), j.at("dst").get<std::string>(), j.value("protocol", std::string("any")),
          j.contains("port") ? (j.at("port").is_string() ? j.at("port").get<std::string>()
                                                          : std::to_string(j.at("port").get<long long>()))
                             : std::string("any")};
}

inline nlohmann::json to_json(const std::vector<RuleSet>& sets) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : sets) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : s) rules.push_back(to_json(r));
    out.push_back(rules);
  }
  return out;
}

inline std::string to_text(const RuleSet& set) {
  std::string out;
  for (const auto& r : set) out += r.to_text() + "\n";
  return out;
}

/// Nodes listed by id; shared subtrees appear once and are referenced by id.
inline nlohmann::json to_json(const RuleTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    nlohmann::json j{{"id", i}, {"kind", to_string(n.kind)}};
    if (!n.children.empty()) j["children"] = n.children;
    if (n.kind == RuleTree::Kind::rule) j["rule"] = to_json(tree.rules[n.rule]);
    nodes.push_back(std::move(j));
  }
  return {{"target", aggen::to_string(tree.target)}, {"root", tree.root}, {"nodes", nodes}};
}

}  // namespace amishield::mitigator

#endif  // AMISHIELD_MITIGATOR_HPP
