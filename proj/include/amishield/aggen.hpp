#ifndef AMISHIELD_AGGEN_HPP
#define AMISHIELD_AGGEN_HPP

// Datalog-style attack graph generation: facts from scan reports and
// topology, monotone bottom-up inference with interaction rules, and the
// resulting AND/OR logical attack graph.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "amishield/error.hpp"
#include "json.hpp"

namespace amishield::aggen {

/// A ground fact or, inside rules, a template whose arguments may be
/// variables (names starting with '_'; a bare '_' is anonymous).
struct Atom {
  std::string predicate;
  std::vector<std::string> args;

  friend auto operator<=>(const Atom&, const Atom&) = default;
  friend bool operator==(const Atom&, const Atom&) = default;
};

inline bool is_variable(std::string_view term) { return !term.empty() && term.front() == '_'; }

inline std::string to_string(const Atom& a) {
  std::string s = a.predicate + "(";
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (i) s += ",";
    s += a.args[i];
  }
  return s + ")";
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Parses `pred(arg, arg, ...)`.
inline Atom parse_atom(std::string_view text) {
  const std::string s = trim(text);
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')' || open == 0) {
    throw Error(ErrorCode::SchemaViolation, "malformed atom '" + s + "'");
  }
  Atom a;
  a.predicate = trim(std::string_view(s).substr(0, open));
  const std::string inner = s.substr(open + 1, s.size() - open - 2);
  if (!trim(inner).empty()) {
    std::stringstream ss(inner);
    std::string part;
    while (std::getline(ss, part, ',')) {
      std::string arg = trim(part);
      if (arg.empty()) throw Error(ErrorCode::SchemaViolation, "empty argument in '" + s + "'");
      a.args.push_back(std::move(arg));
    }
  }
  for (char c : a.predicate) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') {
      throw Error(ErrorCode::SchemaViolation, "bad predicate name in '" + s + "'");
    }
  }
  return a;
}

using FactBase = std::set<Atom>;

struct InteractionRule {
  std::string label;
  Atom head;
  std::vector<Atom> body;

  friend bool operator==(const InteractionRule&, const InteractionRule&) = default;
};

/// Arity of every predicate the default schema knows about.
inline const std::map<std::string, std::size_t>& input_schema() {
  static const std::map<std::string, std::size_t> schema{
      {"attackerLocated", 1}, {"hacl", 4}, {"vulExists", 5}, {"networkServiceInfo", 5}, {"hasAccount", 3}};
  return schema;
}

inline const std::map<std::string, std::size_t>& derived_schema() {
  static const std::map<std::string, std::size_t> schema{{"netAccess", 3}, {"execCode", 2}};
  return schema;
}

/// Safety: every named head variable must occur in the body; the anonymous
/// variable cannot appear in the head.
inline void validate_rule(const InteractionRule& rule) {
  std::set<std::string> body_vars;
  for (const auto& b : rule.body) {
    for (const auto& t : b.args) {
      if (is_variable(t)) body_vars.insert(t);
    }
  }
  for (const auto& t : rule.head.args) {
    if (is_variable(t) && (t == "_" || !body_vars.count(t))) {
      throw Error(ErrorCode::SchemaViolation, "unsafe rule '" + rule.label + "': head variable " + t +
                                                  " not bound by the body");
    }
  }
  if (rule.body.empty()) throw Error(ErrorCode::SchemaViolation, "rule '" + rule.label + "' has an empty body");
}

inline InteractionRule make_rule(std::string label, std::string_view head,
                                 std::initializer_list<std::string_view> body) {
  InteractionRule r{std::move(label), parse_atom(head), {}};
  for (auto b : body) r.body.push_back(parse_atom(b));
  validate_rule(r);
  return r;
}

inline std::vector<InteractionRule> default_rules() {
  return {
      make_rule("remote-exploit", "execCode(_H,_Perm)",
                {"netAccess(_H,_Prot,_Port)", "networkServiceInfo(_H,_Svc,_Prot,_Port,_Perm)",
                 "vulExists(_H,_V,_Svc,remote,privEscalation)"}),
      make_rule("direct-reach", "netAccess(_H,_Prot,_Port)", {"attackerLocated(_Z)", "hacl(_Z,_H,_Prot,_Port)"}),
      make_rule("pivot", "netAccess(_H,_Prot,_Port)", {"execCode(_Z,_)", "hacl(_Z,_H,_Prot,_Port)"}),
  };
}

/// Rule documents: {"format":"amishield-rules","version":1,"rules":[{"label","head","body":[...]}]}
inline std::vector<InteractionRule> rules_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string("amishield-rules")) != "amishield-rules" || doc.at("version").get<int>() != 1) {
      throw Error(ErrorCode::SchemaViolation, "unsupported rules document");
    }
    std::vector<InteractionRule> rules;
    for (const auto& r : doc.at("rules")) {
      InteractionRule rule{r.at("label").get<std::string>(), parse_atom(r.at("head").get<std::string>()), {}};
      for (const auto& b : r.at("body")) rule.body.push_back(parse_atom(b.get<std::string>()));
      validate_rule(rule);
      rules.push_back(std::move(rule));
    }
    return rules;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("rules document: ") + e.what());
  }
}

inline nlohmann::json to_json(const std::vector<InteractionRule>& rules) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rules) {
    nlohmann::json body = nlohmann::json::array();
    for (const auto& b : r.body) body.push_back(to_string(b));
    arr.push_back({{"label", r.label}, {"head", to_string(r.head)}, {"body", body}});
  }
  return {{"format", "amishield-rules"}, {"version", 1}, {"rules", arr}};
}

// ---------------------------------------------------------------------------
// Loading scan reports and topology documents

namespace detail {

inline void require_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::SchemaViolation, where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::SchemaViolation, "unexpected key '" + key + "' in " + where);
    }
  }
}

inline void check_header(const nlohmann::json& doc, const std::string& format) {
  if (doc.is_object() && doc.empty()) return;
  if (!doc.contains("version") || doc.at("version") != 1) {
    throw Error(ErrorCode::SchemaViolation, format + " document needs \"version\": 1");
  }
  if (doc.contains("format") && doc.at("format") != format) {
    throw Error(ErrorCode::SchemaViolation, "expected format " + format);
  }
}

inline std::string port_string(const nlohmann::json& j) {
  if (j.is_number_unsigned() || j.is_number_integer()) return std::to_string(j.get<long long>());
  return j.get<std::string>();
}

}  // namespace detail

/// Scan report:
///   {"format":"amishield-scan","version":1,"hosts":[{"host":"meter1",
///     "services":[{"name","protocol","port","user","vulnerabilities":[
///        {"cve","range","consequence","cvss"}]}],
///     "accounts":[{"user","privilege"}]}]}
/// Topology:
///   {"format":"amishield-topology","version":1,"attacker":["internet"],
///    "links":[{"src","dst","protocol","port","tag"?}],"facts":["pred(args)"]}
inline FactBase load_facts(const nlohmann::json& scan_report, const nlohmann::json& topology) {
  FactBase facts;
  try {
    detail::check_header(scan_report, "amishield-scan");
    detail::check_header(topology, "amishield-topology");
    detail::require_keys(scan_report, {"format", "version", "hosts"}, "scan report");
    detail::require_keys(topology, {"format", "version", "attacker", "links", "facts"}, "topology");

    for (const auto& h : scan_report.value("hosts", nlohmann::json::array())) {
      detail::require_keys(h, {"host", "services", "accounts"}, "host entry");
      const std::string host = h.at("host").get<std::string>();
      for (const auto& s : h.value("services", nlohmann::json::array())) {
        detail::require_keys(s, {"name", "protocol", "port", "user", "vulnerabilities"}, "service entry");
        const std::string name = s.at("name").get<std::string>();
        const std::string proto = s.at("protocol").get<std::string>();
        const std::string port = detail::port_string(s.at("port"));
        facts.insert({"networkServiceInfo", {host, name, proto, port, s.at("user").get<std::string>()}});
        for (const auto& v : s.value("vulnerabilities", nlohmann::json::array())) {
          detail::require_keys(v, {"cve", "range", "consequence", "cvss"}, "vulnerability entry");
          facts.insert({"vulExists",
                        {host, v.at("cve").get<std::string>(), name, v.at("range").get<std::string>(),
                         v.at("consequence").get<std::string>()}});
        }
      }
      for (const auto& a : h.value("accounts", nlohmann::json::array())) {
        detail::require_keys(a, {"user", "privilege"}, "account entry");
        facts.insert({"hasAccount", {a.at("user").get<std::string>(), host, a.at("privilege").get<std::string>()}});
      }
    }
    for (const auto& z : topology.value("attacker", nlohmann::json::array())) {
      facts.insert({"attackerLocated", {z.get<std::string>()}});
    }
    for (const auto& l : topology.value("links", nlohmann::json::array())) {
      detail::require_keys(l, {"src", "dst", "protocol", "port", "tag"}, "link entry");
      facts.insert({"hacl",
                    {l.at("src").get<std::string>(), l.at("dst").get<std::string>(),
                     l.at("protocol").get<std::string>(), detail::port_string(l.at("port"))}});
    }
    for (const auto& f : topology.value("facts", nlohmann::json::array())) {
      Atom a = parse_atom(f.get<std::string>());
      const auto it = input_schema().find(a.predicate);
      if (it == input_schema().end()) throw Error(ErrorCode::UnknownPredicate, "unknown predicate " + a.predicate);
      if (it->second != a.args.size()) {
        throw Error(ErrorCode::SchemaViolation, "arity mismatch for " + to_string(a));
      }
      for (const auto& arg : a.args) {
        if (is_variable(arg)) throw Error(ErrorCode::SchemaViolation, "facts must be ground: " + to_string(a));
      }
      facts.insert(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, e.what());
  }
  return facts;
}

/// CVSS base scores keyed by CVE id.
inline std::map<std::string, double> cve_scores(const nlohmann::json& scan_report) {
  std::map<std::string, double> scores;
  for (const auto& h : scan_report.value("hosts", nlohmann::json::array())) {
    for (const auto& s : h.value("services", nlohmann::json::array())) {
      for (const auto& v : s.value("vulnerabilities", nlohmann::json::array())) {
        const double score = v.value("cvss", 10.0);
        if (score < 0.0 || score > 10.0) throw Error(ErrorCode::SchemaViolation, "cvss outside 0..10");
        scores[v.at("cve").get<std::string>()] = score;
      }
    }
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Inference

namespace detail {

using Binding = std::vector<std::pair<std::string, std::string>>;

inline const std::string* lookup(const Binding& b, const std::string& var) {
  for (const auto& [k, v] : b) {
    if (k == var) return &v;
  }
  return nullptr;
}

/// Extends `b` so that `pattern` matches `fact`; returns false on conflict.
inline bool unify(const Atom& pattern, const Atom& fact, Binding& b) {
  if (pattern.predicate != fact.predicate || pattern.args.size() != fact.args.size()) return false;
  const std::size_t mark = b.size();
  for (std::size_t i = 0; i < pattern.args.size(); ++i) {
    const std::string& t = pattern.args[i];
    if (t == "_") continue;
    if (!is_variable(t)) {
      if (t != fact.args[i]) {
        b.resize(mark);
        return false;
      }
      continue;
    }
    if (const std::string* bound = lookup(b, t)) {
      if (*bound != fact.args[i]) {
        b.resize(mark);
        return false;
      }
    } else {
      b.emplace_back(t, fact.args[i]);
    }
  }
  return true;
}

inline Atom ground(const Atom& pattern, const Binding& b) {
  Atom a{pattern.predicate, {}};
  a.args.reserve(pattern.args.size());
  for (const auto& t : pattern.args) {
    if (is_variable(t)) {
      const std::string* v = lookup(b, t);
      a.args.push_back(v ? *v : t);
    } else {
      a.args.push_back(t);
    }
  }
  return a;
}

/// Predicate index over a fact set; pointers stay valid because FactBase is node-based.
using Index = std::map<std::string, std::vector<const Atom*>, std::less<>>;

inline void index_into(Index& idx, const Atom& a) { idx[a.predicate].push_back(&a); }

/// Enumerates every grounding of `rule` whose body atom at `pivot` comes from
/// `pivot_index` and the rest from `full`. Pass pivot = npos to use `full` throughout.
inline void join(const InteractionRule& rule, std::size_t pivot, const Index& pivot_index, const Index& full,
                 const std::function<void(const Binding&, const std::vector<const Atom*>&)>& emit) {
  const std::size_t n = rule.body.size();
  std::vector<std::size_t> order;
  order.reserve(n);
  if (pivot < n) order.push_back(pivot);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != pivot) order.push_back(i);
  }
  std::vector<const Atom*> chosen(n, nullptr);
  Binding binding;
  std::function<void(std::size_t)> step = [&](std::size_t depth) {
    if (depth == n) {
      emit(binding, chosen);
      return;
    }
    const std::size_t pos = order[depth];
    const Index& source = (pos == pivot) ? pivot_index : full;
    const auto it = source.find(rule.body[pos].predicate);
    if (it == source.end()) return;
    for (const Atom* fact : it->second) {
      const std::size_t mark = binding.size();
      if (unify(rule.body[pos], *fact, binding)) {
        chosen[pos] = fact;
        step(depth + 1);
        binding.resize(mark);
      }
    }
  };
  step(0);
}

}  // namespace detail

/// Least fixpoint by semi-naive evaluation: each round only joins against at
/// least one fact new in the previous round. `on_round` sees the fact set
/// after every round that added something.
inline FactBase derive(const FactBase& facts, const std::vector<InteractionRule>& rules,
                       const std::function<void(const FactBase&)>& on_round = {}) {
  for (const auto& r : rules) validate_rule(r);
  FactBase all = facts;
  detail::Index full, delta;
  for (const auto& a : all) {
    detail::index_into(full, a);
    detail::index_into(delta, a);
  }
  while (!delta.empty()) {
    FactBase fresh;
    for (const auto& rule : rules) {
      for (std::size_t pivot = 0; pivot < rule.body.size(); ++pivot) {
        if (!delta.count(rule.body[pivot].predicate)) continue;
        detail::join(rule, pivot, delta, full, [&](const detail::Binding& b, const auto&) {
          Atom head = detail::ground(rule.head, b);
          if (!all.count(head)) fresh.insert(std::move(head));
        });
      }
    }
    delta.clear();
    for (const auto& a : fresh) {
      const auto [it, inserted] = all.insert(a);
      if (inserted) {
        detail::index_into(full, *it);
        detail::index_into(delta, *it);
      }
    }
    if (!fresh.empty() && on_round) on_round(all);
  }
  return all;
}

// ---------------------------------------------------------------------------
// Logical attack graph

enum class NodeKind { leaf, rule, derived };  // LEAF, AND, OR

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::leaf: return "LEAF";
    case NodeKind::rule: return "AND";
    case NodeKind::derived: return "OR";
  }
  return "?";
}

struct LagNode {
  NodeKind kind = NodeKind::leaf;
  Atom atom;              // fact for LEAF/OR, the instantiated head for AND
  std::size_t rule = 0;   // AND only: index into LogicalAttackGraph::rules
};

struct LogicalAttackGraph {
  std::vector<LagNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // pre -> post
  std::vector<std::vector<std::size_t>> preds;
  std::vector<std::vector<std::size_t>> succs;
  std::vector<std::size_t> goals;  // OR nodes whose atom is execCode(_,_)
  std::vector<InteractionRule> rules;
  std::map<Atom, std::size_t> atom_index;  // LEAF and OR nodes

  std::size_t count(NodeKind k) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [&](const LagNode& n) { return n.kind == k; }));
  }

  std::optional<std::size_t> find(const Atom& a) const {
    const auto it = atom_index.find(a);
    if (it == atom_index.end()) return std::nullopt;
    return it->second;
  }
};

inline bool is_goal_atom(const Atom& a) { return a.predicate == "execCode" && a.args.size() == 2; }

/// LEAF nodes are the input facts, OR nodes the atoms only the rules produce,
/// AND nodes the satisfied rule instances whose head is an OR node. Node ids
/// are deterministic: leaves, then derived atoms, both in atom order, then
/// rule instances in (rule, body) order.
inline LogicalAttackGraph build_lag(const FactBase& facts, const std::vector<InteractionRule>& rules) {
  const FactBase closure = derive(facts, rules);
  LogicalAttackGraph g;
  g.rules = rules;
  for (const auto& a : facts) {
    g.atom_index.emplace(a, g.nodes.size());
    g.nodes.push_back({NodeKind::leaf, a, 0});
  }
  for (const auto& a : closure) {
    if (facts.count(a)) continue;
    g.atom_index.emplace(a, g.nodes.size());
    g.nodes.push_back({NodeKind::derived, a, 0});
  }

  detail::Index full;
  for (const auto& a : closure) detail::index_into(full, a);
  // (rule, body atoms) -> head; std::map keeps the AND ordering deterministic.
  std::map<std::pair<std::size_t, std::vector<Atom>>, Atom> instances;
  for (std::size_t r = 0; r < rules.size(); ++r) {
    detail::join(rules[r], static_cast<std::size_t>(-1), full, full,
                 [&](const detail::Binding& b, const std::vector<const Atom*>& chosen) {
                   Atom head = detail::ground(rules[r].head, b);
                   if (facts.count(head)) return;
                   std::vector<Atom> body;
                   body.reserve(chosen.size());
                   for (const Atom* c : chosen) body.push_back(*c);
                   instances.emplace(std::make_pair(r, std::move(body)), std::move(head));
                 });
  }
  for (const auto& [key, head] : instances) {
    const std::size_t id = g.nodes.size();
    g.nodes.push_back({NodeKind::rule, head, key.first});
    std::set<std::size_t> seen;
    for (const auto& b : key.second) {
      const std::size_t from = g.atom_index.at(b);
      if (seen.insert(from).second) g.edges.emplace_back(from, id);
    }
    g.edges.emplace_back(id, g.atom_index.at(head));
  }
  g.preds.assign(g.nodes.size(), {});
  g.succs.assign(g.nodes.size(), {});
  for (const auto& [from, to] : g.edges) {
    g.succs[from].push_back(to);
    g.preds[to].push_back(from);
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].kind == NodeKind::derived && is_goal_atom(g.nodes[i].atom)) g.goals.push_back(i);
  }
  return g;
}

/// True iff the atom has a node (input fact or derivable) in the graph.
inline bool reachable(const LogicalAttackGraph& lag, const Atom& atom) { return lag.atom_index.count(atom) > 0; }

/// One node or edge per line:
///   node <id> LEAF|OR <atom>
///   node <id> AND <rule-label> <head atom>
///   edge <from> <to>
///   goal <id>
inline std::string to_text(const LogicalAttackGraph& g) {
  std::ostringstream out;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    out << "node " << i << ' ' << to_string(n.kind) << ' ';
    if (n.kind == NodeKind::rule) out << g.rules[n.rule].label << ' ';
    out << to_string(n.atom) << '\n';
  }
  for (const auto& [from, to] : g.edges) out << "edge " << from << ' ' << to << '\n';
  for (std::size_t goal : g.goals) out << "goal " << goal << '\n';
  return out.str();
}

inline std::string to_dot(const LogicalAttackGraph& g) {
  std::ostringstream out;
  out << "digraph lag {\n  rankdir=BT;\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    const char* shape = n.kind == NodeKind::leaf ? "box" : n.kind == NodeKind::rule ? "ellipse" : "diamond";
    const std::string label = n.kind == NodeKind::rule ? g.rules[n.rule].label : to_string(n.atom);
    const bool goal = std::find(g.goals.begin(), g.goals.end(), i) != g.goals.end();
    out << "  n" << i << " [shape=" << shape << ", label=\"" << label << "\"" << (goal ? ", color=red" : "")
        << "];\n";
  }
  for (const auto& [from, to] : g.edges) out << "  n" << from << " -> n" << to << ";\n";
  out << "}\n";
  return out.str();
}

}  // namespace amishield::aggen

#endif  // AMISHIELD_AGGEN_HPP
