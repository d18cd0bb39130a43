#ifndef AMISHIELD_PLANNER_HPP
#define AMISHIELD_PLANNER_HPP

// Intrusion-response planning: a POMDP over the security conditions of a
// Bayesian attack graph, solved online with POMCP (UCT search over
// action/observation histories with particle beliefs).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "amishield/bag.hpp"
#include "amishield/error.hpp"
#include "amishield/mitigator.hpp"
#include "amishield/random.hpp"
#include "json.hpp"

namespace amishield::planner {

using Bits = std::vector<char>;

struct BitsHash {
  std::size_t operator()(const Bits& b) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : b) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct Costs {
  double goal = 100.0;         // C_g, charged when a goal condition first becomes true
  double availability = 1.0;   // c_a, per newly blocked link
  double discount = 0.95;      // gamma
};

struct ObservationParams {
  double detection = 0.9;      // p_d
  double false_alarm = 0.05;   // p_f
};

enum class AttackerPolicy {
  all_enabled,   // every enabled exploit is attempted each step
  one_per_step,  // one enabled exploit, chosen uniformly, per step
};

struct DefenderAction {
  enum class Kind { no_op, apply };
  Kind kind = Kind::no_op;
  mitigator::RuleSet ruleset;
  std::vector<std::size_t> links;  // indices into DefenseModel::links

  std::string describe() const {
    if (kind == Kind::no_op) return "no-op";
    std::string s = "apply{";
    for (std::size_t i = 0; i < ruleset.size(); ++i) s += (i ? "; " : "") + ruleset[i].to_text();
    return s + "}";
  }

  friend bool operator==(const DefenderAction&, const DefenderAction&) = default;
};

struct DefenseModel {
  bag::BayesianAttackGraph bag;
  std::vector<std::size_t> goals;
  Bits observable;                        // per condition; unobservable ones never alert
  std::vector<DefenderAction> actions;    // actions[0] is the no-op
  std::vector<mitigator::FirewallRule> links;  // every rule some action can apply
  // group_links[v][g]: links whose denial disables derivation g of node v
  std::vector<std::vector<std::vector<std::size_t>>> group_links;
  Costs costs;
  ObservationParams obs;
  AttackerPolicy policy = AttackerPolicy::all_enabled;

  std::size_t conditions() const { return bag.size(); }

  bool group_enabled(std::size_t v, std::size_t g, const Bits& blocked) const {
    for (std::size_t l : group_links[v][g]) {
      if (blocked[l]) return false;
    }
    return true;
  }

  std::size_t max_rules() const {
    std::size_t m = 0;
    for (const auto& a : actions) m = std::max(m, a.links.size());
    return m;
  }
};

inline void validate(const Costs& c, const ObservationParams& o) {
  const bool ok = o.detection >= 0 && o.detection <= 1 && o.false_alarm >= 0 && o.false_alarm <= 1 &&
                  c.discount > 0 && c.discount < 1 && c.goal > 0 && c.availability >= 0;
  if (!ok) throw Error(ErrorCode::SchemaViolation, "planner parameters out of range");
}

/// Action set = {no-op} followed by the distinct nonempty candidate rule sets.
/// Goals default to every execCode node of the graph.
inline DefenseModel build_pomdp(const bag::BayesianAttackGraph& g, const std::vector<mitigator::RuleSet>& candidates,
                                const Costs& costs = {}, const ObservationParams& obs = {},
                                std::optional<std::vector<std::size_t>> goals = std::nullopt) {
  validate(costs, obs);
  DefenseModel m;
  m.bag = g;
  m.goals = goals ? *goals : g.goals();
  if (m.goals.empty()) throw Error(ErrorCode::NoGoals, "the attack graph has no execCode condition");
  for (std::size_t goal : m.goals) {
    if (goal >= g.size()) throw Error(ErrorCode::UnknownNode, "goal id out of range");
  }
  m.costs = costs;
  m.obs = obs;
  m.observable.assign(g.size(), 1);

  std::set<mitigator::RuleSet> seen;
  std::set<mitigator::FirewallRule> link_set;
  for (const auto& rs : candidates) {
    if (rs.empty() || !seen.insert(rs).second) continue;
    link_set.insert(rs.begin(), rs.end());
  }
  m.links.assign(link_set.begin(), link_set.end());
  auto link_index = [&](const mitigator::FirewallRule& r) {
    return static_cast<std::size_t>(std::lower_bound(m.links.begin(), m.links.end(), r) - m.links.begin());
  };

  m.actions.push_back({DefenderAction::Kind::no_op, {}, {}});
  seen.clear();
  for (const auto& rs : candidates) {
    if (rs.empty() || !seen.insert(rs).second) continue;
    DefenderAction a{DefenderAction::Kind::apply, rs, {}};
    for (const auto& r : rs) a.links.push_back(link_index(r));
    m.actions.push_back(std::move(a));
  }

  m.group_links.resize(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (const auto& grp : g.nodes[v].groups) {
      std::vector<std::size_t> ls;
      for (std::size_t l = 0; l < m.links.size(); ++l) {
        for (const auto& f : grp.folded) {
          if (m.links[l].matches(f)) {
            ls.push_back(l);
            break;
          }
        }
      }
      m.group_links[v].push_back(std::move(ls));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Generative model

struct DefenseState {
  Bits compromised;
  Bits blocked;  // per link

  friend bool operator==(const DefenseState&, const DefenseState&) = default;
};

struct StepResult {
  DefenseState next;
  Bits observation;
  double reward = 0.0;
  std::size_t newly_blocked = 0;
};

/// Denies the action's links; returns how many were not already denied.
inline std::size_t apply_action(const DefenseModel& m, std::size_t action, Bits& blocked) {
  std::size_t fresh = 0;
  for (std::size_t l : m.actions.at(action).links) {
    if (!blocked[l]) {
      blocked[l] = 1;
      ++fresh;
    }
  }
  return fresh;
}

/// Attacker move under the current blocks. Compromise is monotone; roots
/// never change.
inline Bits attacker_transition(const DefenseModel& m, const Bits& state, const Bits& blocked, Rng& rng) {
  Bits next = state;
  const auto& nodes = m.bag.nodes;
  auto enabled = [&](std::size_t v, std::size_t g) {
    if (!m.group_enabled(v, g, blocked)) return false;
    for (std::size_t p : nodes[v].groups[g].parents) {
      if (!state[p]) return false;
    }
    return true;
  };
  if (m.policy == AttackerPolicy::all_enabled) {
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      if (state[v]) continue;
      for (std::size_t g = 0; g < nodes[v].groups.size(); ++g) {
        if (enabled(v, g) && rng.bernoulli(nodes[v].groups[g].probability())) next[v] = 1;
      }
    }
    return next;
  }
  std::vector<std::pair<std::size_t, std::size_t>> options;
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (state[v]) continue;
    for (std::size_t g = 0; g < nodes[v].groups.size(); ++g) {
      if (enabled(v, g)) options.emplace_back(v, g);
    }
  }
  if (!options.empty()) {
    const auto [v, g] = options[rng.below(options.size())];
    if (rng.bernoulli(nodes[v].groups[g].probability())) next[v] = 1;
  }
  return next;
}

inline bool any_goal(const DefenseModel& m, const Bits& s) {
  return std::any_of(m.goals.begin(), m.goals.end(), [&](std::size_t g) { return s[g] != 0; });
}

inline double step_reward(const DefenseModel& m, const Bits& before, const Bits& after, std::size_t newly_blocked) {
  const bool goal_reached = !any_goal(m, before) && any_goal(m, after);
  double r = -m.costs.availability * static_cast<double>(newly_blocked);
  if (goal_reached) r -= m.costs.goal;
  return r;
}

/// Alerts: a newly compromised observable condition fires with p_d, a
/// still-clean one with p_f, an already compromised one stays silent.
inline Bits sample_observation(const DefenseModel& m, const Bits& before, const Bits& after, Rng& rng) {
  Bits o(before.size(), 0);
  for (std::size_t v = 0; v < before.size(); ++v) {
    if (!m.observable[v] || before[v]) continue;
    o[v] = rng.bernoulli(after[v] ? m.obs.detection : m.obs.false_alarm) ? 1 : 0;
  }
  return o;
}

inline double observation_likelihood(const DefenseModel& m, const Bits& before, const Bits& after, const Bits& o) {
  double p = 1.0;
  for (std::size_t v = 0; v < before.size(); ++v) {
    if (!m.observable[v] || before[v]) {
      if (o[v]) return 0.0;
      continue;
    }
    const double fire = after[v] ? m.obs.detection : m.obs.false_alarm;
    p *= o[v] ? fire : 1.0 - fire;
    if (p == 0.0) return 0.0;
  }
  return p;
}

/// Defender acts first (its blocks take effect immediately), then the
/// attacker moves. Reward = -C_g [goal newly reached] - c_a * |newly blocked links|.
inline StepResult simulate_step(const DefenseModel& m, const DefenseState& state, std::size_t action, Rng& rng) {
  StepResult out;
  out.next.blocked = state.blocked;
  out.newly_blocked = apply_action(m, action, out.next.blocked);
  out.next.compromised = attacker_transition(m, state.compromised, out.next.blocked, rng);
  out.observation = sample_observation(m, state.compromised, out.next.compromised, rng);
  out.reward = step_reward(m, state.compromised, out.next.compromised, out.newly_blocked);
  return out;
}

// ---------------------------------------------------------------------------
// Goal proximity

/// 1/(1+d), d the fewest graph hops from any compromised condition to any
/// goal over links that are not blocked; 1 if a goal is compromised, 0 if no
/// goal can be reached.
inline double goal_proximity_weight(const DefenseState& s, const DefenseModel& m) {
  if (any_goal(m, s.compromised)) return 1.0;
  const auto& nodes = m.bag.nodes;
  std::vector<std::vector<std::size_t>> next(nodes.size());
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    for (std::size_t g = 0; g < nodes[v].groups.size(); ++g) {
      if (!m.group_enabled(v, g, s.blocked)) continue;
      for (std::size_t p : nodes[v].groups[g].parents) next[p].push_back(v);
    }
  }
  std::vector<std::size_t> dist(nodes.size(), std::numeric_limits<std::size_t>::max());
  std::deque<std::size_t> queue;
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (s.compromised[v]) {
      dist[v] = 0;
      queue.push_back(v);
    }
  }
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : next[u]) {
      if (dist[v] == std::numeric_limits<std::size_t>::max()) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (std::size_t goal : m.goals) best = std::min(best, dist[goal]);
  if (best == std::numeric_limits<std::size_t>::max()) return 0.0;
  return 1.0 / (1.0 + static_cast<double>(best));
}

inline double goal_proximity_weight(const Bits& compromised, const DefenseModel& m) {
  return goal_proximity_weight(DefenseState{compromised, Bits(m.links.size(), 0)}, m);
}

// ---------------------------------------------------------------------------
// Belief

struct BeliefState {
  std::vector<Bits> particles;
  Bits blocked;  // links currently denied; known to the defender
  bool reinitialized = false;

  std::vector<double> marginals() const {
    std::vector<double> p(particles.empty() ? 0 : particles.front().size(), 0.0);
    for (const auto& s : particles) {
      for (std::size_t v = 0; v < s.size(); ++v) p[v] += s[v];
    }
    for (auto& x : p) x /= static_cast<double>(particles.size());
    return p;
  }
};

/// Roots drawn from their priors, every other condition clean.
inline BeliefState initial_belief(const DefenseModel& m, std::size_t count, Rng& rng) {
  BeliefState b;
  b.blocked.assign(m.links.size(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    Bits s(m.conditions(), 0);
    for (std::size_t v = 0; v < m.conditions(); ++v) {
      if (m.bag.nodes[v].groups.empty()) s[v] = rng.bernoulli(m.bag.nodes[v].prior) ? 1 : 0;
    }
    b.particles.push_back(std::move(s));
  }
  return b;
}

/// Particles drawn from the graph's unconditional distribution with the
/// blocked links' derivations disabled.
inline std::vector<Bits> sample_from_graph(const DefenseModel& m, const Bits& blocked, std::size_t count, Rng& rng) {
  std::vector<Bits> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Bits s(m.conditions(), 0);
    for (std::size_t v : m.bag.topo_order) {
      const auto& node = m.bag.nodes[v];
      double p;
      if (node.groups.empty()) {
        p = node.prior;
      } else {
        double fail = 1.0;
        for (std::size_t g = 0; g < node.groups.size(); ++g) {
          if (!m.group_enabled(v, g, blocked)) continue;
          bool all = true;
          for (std::size_t par : node.groups[g].parents) all = all && s[par];
          if (all) fail *= 1.0 - node.groups[g].probability();
        }
        p = 1.0 - fail;
      }
      s[v] = rng.bernoulli(p) ? 1 : 0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Bootstrap particle filter: propagate, weight by the observation
/// likelihood, resample (systematic) to the same count. If every weight is
/// zero the belief is redrawn from the graph and flagged.
inline BeliefState update_belief(const BeliefState& belief, std::size_t action, const Bits& observation,
                                 const DefenseModel& m, Rng& rng) {
  const std::size_t n = std::max<std::size_t>(belief.particles.size(), 1);
  BeliefState out;
  out.blocked = belief.blocked;
  apply_action(m, action, out.blocked);

  std::vector<Bits> moved;
  std::vector<double> weights;
  moved.reserve(belief.particles.size());
  double total = 0.0;
  for (const auto& s : belief.particles) {
    Bits next = attacker_transition(m, s, out.blocked, rng);
    const double w = observation_likelihood(m, s, next, observation);
    total += w;
    weights.push_back(w);
    moved.push_back(std::move(next));
  }
  if (total <= 0.0) {
    out.particles = sample_from_graph(m, out.blocked, n, rng);
    out.reinitialized = true;
    return out;
  }
  out.particles.reserve(n);
  const double step = total / static_cast<double>(n);
  double target = rng.uniform() * step;
  double acc = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    while (i + 1 < moved.size() && acc + weights[i] <= target) {
      acc += weights[i];
      ++i;
    }
    out.particles.push_back(moved[i]);
    target += step;
  }
  return out;
}

// ---------------------------------------------------------------------------
// POMCP

struct PlannerConfig {
  std::size_t budget = 1000;     // simulations per decision
  std::size_t max_depth = 20;    // tree + rollout horizon
  double exploration = -1.0;     // UCB constant; negative means sqrt(2) * C_g
  double shaping = 1.0;          // weight of -C_g * proximity at truncated rollouts
  std::uint64_t seed = 1;
};

inline nlohmann::json to_json(const PlannerConfig& c) {
  return {{"budget", c.budget}, {"max_depth", c.max_depth}, {"exploration", c.exploration},
          {"shaping", c.shaping}, {"seed", c.seed}};
}

struct ActionStats {
  std::size_t visits = 0;
  double value = 0.0;  // running mean of discounted return
};

class Pomcp {
 public:
  struct ActionNode {
    ActionStats stats;
    std::unordered_map<Bits, std::size_t, BitsHash> children;  // observation -> history node
  };
  struct HistoryNode {
    std::size_t visits = 0;
    std::vector<ActionNode> actions;  // empty until expanded
  };

  Pomcp(const DefenseModel& model, PlannerConfig config)
      : model_(model), config_(config), rng_(config.seed) {
    if (config_.exploration < 0) config_.exploration = std::sqrt(2.0) * model_.costs.goal;
  }

  /// Runs `budget` simulations from the belief and returns the index of the
  /// root action with the highest mean value (lowest index on ties).
  std::size_t search(const BeliefState& belief) {
    nodes_.clear();
    nodes_.emplace_back();
    expand(0);
    if (belief.particles.empty()) return 0;
    for (std::size_t i = 0; i < std::max<std::size_t>(config_.budget, 1); ++i) {
      const Bits& particle = belief.particles[rng_.below(belief.particles.size())];
      DefenseState s{particle, belief.blocked};
      simulate(s, 0, 0);
    }
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < nodes_[0].actions.size(); ++a) {
      const auto& st = nodes_[0].actions[a].stats;
      if (st.visits > 0 && st.value > best_value) {
        best_value = st.value;
        best = a;
      }
    }
    return best;
  }

  const std::vector<HistoryNode>& tree() const { return nodes_; }
  std::vector<ActionStats> root_stats() const {
    std::vector<ActionStats> out;
    if (!nodes_.empty()) {
      for (const auto& a : nodes_[0].actions) out.push_back(a.stats);
    }
    return out;
  }
  const PlannerConfig& config() const { return config_; }

 private:
  void expand(std::size_t h) { nodes_[h].actions.resize(model_.actions.size()); }

  double terminal_estimate(const DefenseState& s) const {
    if (config_.shaping == 0.0 || any_goal(model_, s.compromised)) return 0.0;
    return -config_.shaping * model_.costs.goal * goal_proximity_weight(s, model_);
  }

  double rollout(DefenseState s, std::size_t depth) {
    double total = 0.0, discount = 1.0;
    for (; depth < config_.max_depth; ++depth) {
      const std::size_t a = rng_.below(model_.actions.size());
      StepResult step = simulate_step(model_, s, a, rng_);
      total += discount * step.reward;
      discount *= model_.costs.discount;
      s = std::move(step.next);
    }
    return total + discount * terminal_estimate(s);
  }

  std::size_t select(std::size_t h) const {
    const auto& node = nodes_[h];
    for (std::size_t a = 0; a < node.actions.size(); ++a) {
      if (node.actions[a].stats.visits == 0) return a;
    }
    const double log_n = std::log(static_cast<double>(node.visits));
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < node.actions.size(); ++a) {
      const auto& st = node.actions[a].stats;
      const double score = st.value + config_.exploration * std::sqrt(log_n / static_cast<double>(st.visits));
      if (score > best_score) {
        best_score = score;
        best = a;
      }
    }
    return best;
  }

  double simulate(const DefenseState& s, std::size_t h, std::size_t depth) {
    if (depth >= config_.max_depth) return terminal_estimate(s);
    if (nodes_[h].actions.empty()) {
      expand(h);
      return rollout(s, depth);
    }
    const std::size_t a = select(h);
    StepResult step = simulate_step(model_, s, a, rng_);
    std::size_t child;
    {
      auto& children = nodes_[h].actions[a].children;
      auto it = children.find(step.observation);
      if (it == children.end()) {
        child = nodes_.size();
        children.emplace(step.observation, child);
        nodes_.emplace_back();
      } else {
        child = it->second;
      }
    }
    const double ret = step.reward + model_.costs.discount * simulate(step.next, child, depth + 1);
    auto& node = nodes_[h];
    node.visits += 1;
    auto& st = node.actions[a].stats;
    st.visits += 1;
    st.value += (ret - st.value) / static_cast<double>(st.visits);
    return ret;
  }

  const DefenseModel& model_;
  PlannerConfig config_;
  Rng rng_;
  std::vector<HistoryNode> nodes_;
};

inline DefenderAction plan(const DefenseModel& m, const BeliefState& belief, std::size_t budget, std::uint64_t seed,
                           PlannerConfig config = {}) {
  config.budget = budget;
  config.seed = seed;
  Pomcp search(m, config);
  return m.actions[search.search(belief)];
}

inline std::size_t plan_index(const DefenseModel& m, const BeliefState& belief, const PlannerConfig& config) {
  Pomcp search(m, config);
  return search.search(belief);
}

}  // namespace amishield::planner

#endif  // AMISHIELD_PLANNER_HPP
