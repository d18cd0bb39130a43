#ifndef AMISHIELD_SIM_HPP
#define AMISHIELD_SIM_HPP

// Discrete-time AMI simulator: meters, concentrators and an MDM head-end.
// One step is one duty cycle. Meters report a reading each cycle; the
// attacker moves through the attack graph; the defender observes detector
// alerts and applies firewall rule sets chosen by the planner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "amishield/aggen.hpp"
#include "amishield/bag.hpp"
#include "amishield/bytevis.hpp"
#include "amishield/corpus.hpp"
#include "amishield/detector.hpp"
#include "amishield/error.hpp"
#include "amishield/mitigator.hpp"
#include "amishield/pcap.hpp"
#include "amishield/planner.hpp"
#include "amishield/random.hpp"
#include "json.hpp"

namespace amishield::sim {

enum class HostKind { meter, concentrator, mdm };
enum class Mode { point_to_multipoint, mesh };
enum class LinkTag { han, nan, wan };

inline const char* to_string(HostKind k) {
  switch (k) {
    case HostKind::meter: return "meter";
    case HostKind::concentrator: return "concentrator";
    case HostKind::mdm: return "mdm";
  }
  return "?";
}
inline const char* to_string(Mode m) { return m == Mode::mesh ? "mesh" : "point-to-multipoint"; }
inline const char* to_string(LinkTag t) {
  switch (t) {
    case LinkTag::han: return "HAN";
    case LinkTag::nan: return "NAN";
    case LinkTag::wan: return "WAN";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "mesh") return Mode::mesh;
  if (s == "point-to-multipoint" || s == "p2mp") return Mode::point_to_multipoint;
  throw Error(ErrorCode::SchemaViolation, "unknown topology mode '" + s + "'");
}

struct Host {
  std::string id;
  HostKind kind = HostKind::meter;
  std::uint32_t ip = 0;
};

struct Service {
  std::string name;
  std::string protocol;
  int port = 0;
};

struct Vulnerability {
  std::string cve;
  std::string service;
  double cvss = 10.0;
};

struct SimLink {
  std::string src;
  std::string dst;
  std::string protocol;
  int port = 0;
  LinkTag tag = LinkTag::nan;
};

inline constexpr const char* kInternet = "internet";

inline const Service& service_of(HostKind k) {
  static const Service meter{"http", "tcp", 80};
  static const Service conc{"dlms", "tcp", 4059};
  static const Service mdm{"https", "tcp", 443};
  switch (k) {
    case HostKind::meter: return meter;
    case HostKind::concentrator: return conc;
    case HostKind::mdm: return mdm;
  }
  return meter;
}

struct SimTopology {
  std::vector<Host> hosts;
  std::vector<SimLink> links;
  Mode mode = Mode::point_to_multipoint;
  std::map<std::string, std::vector<Vulnerability>> vulnerable;
  std::vector<std::string> attacker_zones{kInternet};

  const Host& host(const std::string& id) const {
    for (const auto& h : hosts) {
      if (h.id == id) return h;
    }
    throw Error(ErrorCode::UnknownNode, "no host " + id);
  }

  std::vector<const Host*> of_kind(HostKind k) const {
    std::vector<const Host*> out;
    for (const auto& h : hosts) {
      if (h.kind == k) out.push_back(&h);
    }
    return out;
  }

  std::string mdm_id() const {
    for (const auto& h : hosts) {
      if (h.kind == HostKind::mdm) return h.id;
    }
    throw Error(ErrorCode::SchemaViolation, "topology has no mdm");
  }
};

/// Checks the structural invariants: each meter reaches a concentrator, each
/// concentrator links to the mdm, no meter-to-meter link outside mesh mode.
inline void validate(const SimTopology& t) {
  std::map<std::string, HostKind> kinds;
  for (const auto& h : t.hosts) {
    if (!kinds.emplace(h.id, h.kind).second) throw Error(ErrorCode::SchemaViolation, "duplicate host " + h.id);
  }
  const std::string mdm = t.mdm_id();
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& l : t.links) {
    const bool src_zone = std::find(t.attacker_zones.begin(), t.attacker_zones.end(), l.src) != t.attacker_zones.end();
    if ((!src_zone && !kinds.count(l.src)) || !kinds.count(l.dst)) {
      throw Error(ErrorCode::SchemaViolation, "link endpoint not in topology: " + l.src + " -> " + l.dst);
    }
    if (!src_zone && kinds[l.src] == HostKind::meter && kinds[l.dst] == HostKind::meter && t.mode != Mode::mesh) {
      throw Error(ErrorCode::SchemaViolation, "meter-to-meter link in point-to-multipoint mode");
    }
    out[l.src].push_back(l.dst);
  }
  for (const auto& h : t.hosts) {
    if (h.kind == HostKind::concentrator) {
      const auto& o = out[h.id];
      if (std::find(o.begin(), o.end(), mdm) == o.end()) {
        throw Error(ErrorCode::SchemaViolation, h.id + " has no link to the mdm");
      }
    }
    if (h.kind == HostKind::meter) {
      std::set<std::string> seen{h.id};
      std::vector<std::string> stack{h.id};
      bool found = false;
      while (!stack.empty() && !found) {
        const std::string u = stack.back();
        stack.pop_back();
        for (const auto& v : out[u]) {
          if (kinds[v] == HostKind::concentrator) found = true;
          if (seen.insert(v).second) stack.push_back(v);
        }
      }
      if (!found) throw Error(ErrorCode::SchemaViolation, h.id + " cannot reach a concentrator");
    }
  }
}

struct GenOptions {
  double meter_cvss = 7.5;
  double concentrator_cvss = 6.5;
  double mdm_cvss = 8.0;
  double mesh_uplink_fraction = 0.5;  // mesh meters with their own concentrator link
};

/// Meters attach round-robin to concentrators; every concentrator uplinks to
/// the mdm; the internet zone reaches every meter's HAN-facing service. Each
/// meter and concentrator is vulnerable with probability `vuln_density`,
/// but meter1 and its concentrator always are and the mdm always is, so at
/// least one attack path exists.
inline SimTopology gen_topology(int n_meters, int n_concentrators, Mode mode, double vuln_density, std::uint64_t seed,
                                const GenOptions& opt = {}) {
  if (n_meters < 1 || n_concentrators < 1) {
    throw Error(ErrorCode::InvalidCounts, "need at least one meter and one concentrator");
  }
  if (!(vuln_density >= 0.0 && vuln_density <= 1.0)) {
    throw Error(ErrorCode::InvalidCounts, "vulnerability density must lie in [0, 1]");
  }
  Rng rng(seed);
  SimTopology t;
  t.mode = mode;
  const auto meters = static_cast<std::size_t>(n_meters);
  const auto concs = static_cast<std::size_t>(n_concentrators);
  for (std::size_t i = 0; i < meters; ++i) {
    t.hosts.push_back({"meter" + std::to_string(i + 1), HostKind::meter,
                       pcap::ipv4(10, 0, static_cast<std::uint8_t>(i / 250), static_cast<std::uint8_t>(i % 250 + 1))});
  }
  for (std::size_t c = 0; c < concs; ++c) {
    t.hosts.push_back({"conc" + std::to_string(c + 1), HostKind::concentrator,
                       pcap::ipv4(10, 1, static_cast<std::uint8_t>(c / 250), static_cast<std::uint8_t>(c % 250 + 1))});
  }
  t.hosts.push_back({"mdm", HostKind::mdm, pcap::ipv4(10, 2, 0, 1)});

  const Service& ms = service_of(HostKind::meter);
  const Service& cs = service_of(HostKind::concentrator);
  const Service& ds = service_of(HostKind::mdm);
  for (std::size_t i = 0; i < meters; ++i) {
    t.links.push_back({kInternet, "meter" + std::to_string(i + 1), ms.protocol, ms.port, LinkTag::han});
  }
  for (std::size_t i = 0; i < meters; ++i) {
    const std::string m = "meter" + std::to_string(i + 1);
    const std::string c = "conc" + std::to_string(i % concs + 1);
    const bool uplink = mode == Mode::point_to_multipoint || i == 0 || rng.bernoulli(opt.mesh_uplink_fraction);
    if (uplink) t.links.push_back({m, c, cs.protocol, cs.port, LinkTag::nan});
  }
  if (mode == Mode::mesh) {
    // a chain through all meters keeps every meter connected to meter1's uplink
    for (std::size_t i = 0; i + 1 < meters; ++i) {
      const std::string a = "meter" + std::to_string(i + 1), b = "meter" + std::to_string(i + 2);
      t.links.push_back({a, b, cs.protocol, cs.port, LinkTag::nan});
      t.links.push_back({b, a, cs.protocol, cs.port, LinkTag::nan});
    }
  }
  for (std::size_t c = 0; c < concs; ++c) {
    t.links.push_back({"conc" + std::to_string(c + 1), "mdm", ds.protocol, ds.port, LinkTag::wan});
  }

  for (std::size_t i = 0; i < meters; ++i) {
    if (i == 0 || rng.bernoulli(vuln_density)) {
      t.vulnerable["meter" + std::to_string(i + 1)].push_back({"CVE-SIM-METER", ms.name, opt.meter_cvss});
    }
  }
  for (std::size_t c = 0; c < concs; ++c) {
    if (c == 0 || rng.bernoulli(vuln_density)) {
      t.vulnerable["conc" + std::to_string(c + 1)].push_back({"CVE-SIM-CONC", cs.name, opt.concentrator_cvss});
    }
  }
  t.vulnerable["mdm"].push_back({"CVE-SIM-MDM", ds.name, opt.mdm_cvss});
  validate(t);
  return t;
}

// ---------------------------------------------------------------------------
// JSON

inline constexpr const char* kTopologyFormat = "amishield-sim-topology";

inline nlohmann::json to_json(const SimTopology& t) {
  nlohmann::json hosts = nlohmann::json::array(), links = nlohmann::json::array(), vulns = nlohmann::json::object();
  for (const auto& h : t.hosts) hosts.push_back({{"id", h.id}, {"kind", to_string(h.kind)}, {"ip", pcap::format_ipv4(h.ip)}});
  for (const auto& l : t.links) {
    links.push_back({{"src", l.src}, {"dst", l.dst}, {"protocol", l.protocol}, {"port", l.port}, {"tag", to_string(l.tag)}});
  }
  for (const auto& [host, vs] : t.vulnerable) {
    for (const auto& v : vs) vulns[host].push_back({{"cve", v.cve}, {"service", v.service}, {"cvss", v.cvss}});
  }
  return {{"format", kTopologyFormat}, {"version", 1}, {"mode", to_string(t.mode)}, {"attacker", t.attacker_zones},
          {"hosts", hosts}, {"links", links}, {"vulnerable", vulns}};
}

namespace detail {

inline std::uint32_t parse_ipv4(const std::string& s) {
  unsigned a, b, c, d;
  char tail;
  if (std::sscanf(s.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4 || a > 255 || b > 255 || c > 255 ||
      d > 255) {
    throw Error(ErrorCode::SchemaViolation, "bad IPv4 address '" + s + "'");
  }
  return pcap::ipv4(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b), static_cast<std::uint8_t>(c),
                    static_cast<std::uint8_t>(d));
}

inline HostKind parse_kind(const std::string& s) {
  if (s == "meter") return HostKind::meter;
  if (s == "concentrator") return HostKind::concentrator;
  if (s == "mdm") return HostKind::mdm;
  throw Error(ErrorCode::SchemaViolation, "unknown host kind '" + s + "'");
}

inline LinkTag parse_tag(const std::string& s) {
  if (s == "HAN") return LinkTag::han;
  if (s == "NAN") return LinkTag::nan;
  if (s == "WAN") return LinkTag::wan;
  throw Error(ErrorCode::SchemaViolation, "unknown link tag '" + s + "'");
}

}  // namespace detail

inline SimTopology topology_from_json(const nlohmann::json& j) {
  SimTopology t;
  try {
    aggen::detail::require_keys(j, {"format", "version", "mode", "attacker", "hosts", "links", "vulnerable"},
                                "simulator topology");
    if (j.value("format", std::string(kTopologyFormat)) != kTopologyFormat || j.value("version", 0) != 1) {
      throw Error(ErrorCode::SchemaViolation, "expected " + std::string(kTopologyFormat) + " version 1");
    }
    t.mode = parse_mode(j.value("mode", std::string("point-to-multipoint")));
    t.attacker_zones = j.value("attacker", std::vector<std::string>{kInternet});
    for (const auto& h : j.at("hosts")) {
      aggen::detail::require_keys(h, {"id", "kind", "ip"}, "host");
      t.hosts.push_back({h.at("id").get<std::string>(), detail::parse_kind(h.at("kind").get<std::string>()),
                         detail::parse_ipv4(h.at("ip").get<std::string>())});
    }
    for (const auto& l : j.at("links")) {
      aggen::detail::require_keys(l, {"src", "dst", "protocol", "port", "tag"}, "link");
      t.links.push_back({l.at("src").get<std::string>(), l.at("dst").get<std::string>(),
                         l.at("protocol").get<std::string>(), l.at("port").get<int>(),
                         detail::parse_tag(l.value("tag", std::string("NAN")))});
    }
    const nlohmann::json vulns = j.value("vulnerable", nlohmann::json::object());
    for (const auto& [host, vs] : vulns.items()) {
      for (const auto& v : vs) {
        aggen::detail::require_keys(v, {"cve", "service", "cvss"}, "vulnerability");
        t.vulnerable[host].push_back(
            {v.at("cve").get<std::string>(), v.at("service").get<std::string>(), v.value("cvss", 10.0)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, e.what());
  }
  validate(t);
  return t;
}

/// Scan report for the attack-graph generator: one root-privileged service
/// per host, carrying the host's vulnerabilities.
inline nlohmann::json to_scan_report(const SimTopology& t) {
  nlohmann::json hosts = nlohmann::json::array();
  for (const auto& h : t.hosts) {
    const Service& s = service_of(h.kind);
    nlohmann::json vulns = nlohmann::json::array();
    if (auto it = t.vulnerable.find(h.id); it != t.vulnerable.end()) {
      for (const auto& v : it->second) {
        if (v.service != s.name) continue;
        vulns.push_back({{"cve", v.cve}, {"range", "remote"}, {"consequence", "privEscalation"}, {"cvss", v.cvss}});
      }
    }
    nlohmann::json svc = {{"name", s.name}, {"protocol", s.protocol}, {"port", s.port}, {"user", "root"},
                          {"vulnerabilities", vulns}};
    hosts.push_back({{"host", h.id}, {"services", nlohmann::json::array({svc})}});
  }
  return {{"format", "amishield-scan"}, {"version", 1}, {"hosts", hosts}};
}

inline nlohmann::json to_topology_doc(const SimTopology& t) {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : t.links) {
    links.push_back({{"src", l.src}, {"dst", l.dst}, {"protocol", l.protocol}, {"port", l.port}, {"tag", to_string(l.tag)}});
  }
  return {{"format", "amishield-topology"}, {"version", 1}, {"attacker", t.attacker_zones}, {"links", links}};
}

// ---------------------------------------------------------------------------
// Traffic

inline constexpr std::size_t kMaxReading = 1024;

struct TrafficRecord {
  pcap::PacketRecord packet;
  std::string host;
  pcap::Label label = pcap::Label::normal;
  std::size_t step = 0;
};

namespace detail {

inline void check_pool(const corpus::PayloadPool& pool) {
  if (pool.normal.empty()) throw Error(ErrorCode::EmptyDataset, "traffic corpus has no normal payloads");
  for (const auto* list : {&pool.normal, &pool.malware}) {
    for (const auto& p : *list) {
      if (p.size() >= kMaxReading) {
        throw Error(ErrorCode::OversizedPayload,
                    "corpus payload of " + std::to_string(p.size()) + " bytes exceeds a duty-cycle reading");
      }
    }
  }
}

inline std::string uplink_of(const SimTopology& t, const Host& meter) {
  const auto concs = t.of_kind(HostKind::concentrator);
  for (const auto& l : t.links) {
    if (l.src == meter.id && t.host(l.dst).kind == HostKind::concentrator) return l.dst;
  }
  return concs.front()->id;
}

}  // namespace detail

/// Readings for one duty cycle: every meter sends one UDP datagram to its
/// concentrator. Meters in `compromised` send a malware payload instead.
inline std::vector<TrafficRecord> emit_cycle(const SimTopology& t, const corpus::PayloadPool& pool,
                                             const std::set<std::string>& compromised, std::size_t step,
                                             double time_s, Rng& rng) {
  std::vector<TrafficRecord> out;
  const auto seconds = static_cast<std::uint32_t>(time_s);
  const auto micros = static_cast<std::uint32_t>(std::llround((time_s - std::floor(time_s)) * 1e6)) % 1000000u;
  for (const Host* m : t.of_kind(HostKind::meter)) {
    const bool bad = compromised.count(m->id) > 0;
    if (bad && pool.malware.empty()) throw Error(ErrorCode::EmptyDataset, "traffic corpus has no malware payloads");
    const auto& list = bad ? pool.malware : pool.normal;
    const auto& payload = list[rng.below(list.size())];
    const Host& dst = t.host(detail::uplink_of(t, *m));
    auto frame = pcap::make_udp_frame({m->ip, 4059}, {dst.ip, 4059}, payload);
    out.push_back({pcap::PacketRecord::from_frame({seconds, micros}, std::move(frame)), m->id,
                   bad ? pcap::Label::malware : pcap::Label::normal, step});
  }
  return out;
}

/// `steps` duty cycles of traffic starting at t = 0.
inline std::vector<TrafficRecord> inject_traffic(const SimTopology& t, const corpus::PayloadPool& pool,
                                                 double duty_cycle_s, std::size_t steps, std::uint64_t seed,
                                                 const std::set<std::string>& compromised = {}) {
  detail::check_pool(pool);
  Rng rng(seed);
  std::vector<TrafficRecord> out;
  for (std::size_t s = 0; s < steps; ++s) {
    auto batch = emit_cycle(t, pool, compromised, s, duty_cycle_s * static_cast<double>(s), rng);
    out.insert(out.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
  }
  return out;
}

inline std::vector<pcap::PacketRecord> packets_of(const std::vector<TrafficRecord>& traffic) {
  std::vector<pcap::PacketRecord> out;
  out.reserve(traffic.size());
  for (const auto& r : traffic) out.push_back(r.packet);
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

enum class Outcome { goal_reached, contained, timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::goal_reached: return "goal-reached";
    case Outcome::contained: return "contained";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

struct AttackerProfile {
  bool active = true;
  std::string entry = kInternet;
  planner::AttackerPolicy policy = planner::AttackerPolicy::all_enabled;

  static AttackerProfile none() { return {false, kInternet, planner::AttackerPolicy::all_enabled}; }
};

struct Defender {
  enum class Kind { no_op, pomcp };
  Kind kind = Kind::pomcp;
  planner::PlannerConfig config{};
  std::size_t particles = 1000;
  std::size_t candidate_limit = 8;  // rule sets offered to the planner
  planner::Costs costs{};
  planner::ObservationParams obs{};

  static Defender no_op() {
    Defender d;
    d.kind = Kind::no_op;
    return d;
  }
};

inline const char* to_string(Defender::Kind k) { return k == Defender::Kind::no_op ? "no-op" : "pomcp"; }

/// Detector and corpus shared across episodes.
struct Resources {
  detector::Model model;
  corpus::PayloadPool pool;
  unsigned order = 5;
};

inline Resources default_resources(std::uint64_t seed, std::size_t train_per_class = 300) {
  detector::Hyper h;
  h.seed = seed;
  const auto data = corpus::make_features(train_per_class, train_per_class, seed);
  return {detector::train(data, h), corpus::make_pool(200, 200, seed + 1), 5};
}

struct TraceStep {
  std::size_t step = 0;
  double time_s = 0.0;
  std::vector<std::string> attacker_moves;  // conditions that became true
  std::vector<std::string> alerts;          // hosts with a rising-edge malware verdict
  std::size_t action = 0;
  std::string action_text;
  double reward = 0.0;
  double goal_belief = 0.0;
  bool belief_reinitialized = false;
  std::size_t records = 0;
  std::size_t malware_records = 0;
  std::size_t malware_verdicts = 0;
  std::size_t false_alarms = 0;
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  std::string defender;
  std::vector<TraceStep> steps;
  Outcome outcome = Outcome::timeout;
  double total_reward = 0.0;
  std::string goal;
  // ground truth, kept for checks: states[0] is the start, states[k] after step k
  std::vector<planner::Bits> states;
  std::vector<planner::Bits> blocked;  // link blocks in force during step k
  std::vector<std::string> applied_rules;
  std::size_t captured_records = 0;

  std::size_t false_alarm_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.false_alarms;
    return n;
  }
};

inline nlohmann::json to_json(const TraceStep& s) {
  return {{"step", s.step},
          {"time_s", s.time_s},
          {"attacker_moves", s.attacker_moves},
          {"alerts", s.alerts},
          {"action", s.action},
          {"action_text", s.action_text},
          {"reward", s.reward},
          {"goal_belief", s.goal_belief},
          {"belief_reinitialized", s.belief_reinitialized},
          {"records", s.records},
          {"malware_records", s.malware_records},
          {"malware_verdicts", s.malware_verdicts},
          {"false_alarms", s.false_alarms}};
}

inline nlohmann::json summary_json(const EpisodeTrace& t) {
  return {{"seed", t.seed},
          {"defender", t.defender},
          {"goal", t.goal},
          {"outcome", to_string(t.outcome)},
          {"steps", t.steps.size()},
          {"total_reward", t.total_reward},
          {"applied_rules", t.applied_rules},
          {"captured_records", t.captured_records},
          {"false_alarms", t.false_alarm_count()}};
}

/// One JSON object per step, then a summary line.
inline std::string to_jsonl(const EpisodeTrace& t) {
  std::string out;
  for (const auto& s : t.steps) out += to_json(s).dump() + "\n";
  nlohmann::json tail = summary_json(t);
  tail["type"] = "summary";
  out += tail.dump() + "\n";
  return out;
}

/// The attack-graph side of an episode: facts, graphs and the defense model.
struct Scenario {
  aggen::FactBase facts;
  aggen::LogicalAttackGraph lag;
  bag::BayesianAttackGraph bag;
  aggen::Atom goal;
  std::vector<mitigator::RuleSet> candidates;
  planner::DefenseModel model;
};

inline Scenario build_scenario(const SimTopology& topo, const Defender& defender, const AttackerProfile& attacker,
                               std::optional<aggen::Atom> goal = std::nullopt) {
  Scenario s;
  SimTopology entry = topo;
  entry.attacker_zones = {attacker.entry};
  const auto scan = to_scan_report(entry);
  s.facts = aggen::load_facts(scan, to_topology_doc(entry));
  const auto rules = aggen::default_rules();
  s.lag = aggen::build_lag(s.facts, rules);
  s.bag = bag::lag_to_bag(s.lag, aggen::cve_scores(scan));
  s.goal = goal ? *goal : aggen::Atom{"execCode", {topo.mdm_id(), "root"}};
  const auto tree = mitigator::build_rule_tree(s.lag, s.goal);
  s.candidates = mitigator::enumerate_rule_sets(tree, defender.candidate_limit);
  s.model = planner::build_pomdp(s.bag, s.candidates, defender.costs, defender.obs,
                                 std::vector<std::size_t>{s.bag.id_of(s.goal)});
  s.model.policy = attacker.policy;

  // Only meters report traffic, so only their execCode conditions can alert.
  std::fill(s.model.observable.begin(), s.model.observable.end(), 0);
  for (std::size_t v = 0; v < s.bag.size(); ++v) {
    const auto& a = s.bag.nodes[v].atom;
    if (a.predicate == "execCode" && topo.host(a.args[0]).kind == HostKind::meter) s.model.observable[v] = 1;
  }
  return s;
}

struct EpisodeOptions {
  std::size_t horizon = 30;
  double duty_cycle_s = 900.0;
  std::optional<aggen::Atom> goal;  // defaults to execCode(mdm, root)
  bool stop_when_contained = true;
};

/// Closed loop per duty cycle: the defender plans on its belief, its rules
/// take effect, the attacker moves, meters report, the detector classifies
/// the captured readings, and rising-edge verdicts update the belief.
inline EpisodeTrace run_episode(const SimTopology& topo, const AttackerProfile& attacker, const Defender& defender,
                                const Resources& res, std::uint64_t seed, const EpisodeOptions& opt = {}) {
  const Scenario sc = build_scenario(topo, defender, attacker, opt.goal);
  const auto& m = sc.model;
  detail::check_pool(res.pool);

  EpisodeTrace trace;
  trace.seed = seed;
  trace.defender = to_string(defender.kind);
  trace.goal = aggen::to_string(sc.goal);

  Rng world(seed);
  Rng traffic_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Rng belief_rng(seed ^ 0xc2b2ae3d27d4eb4fULL);

  planner::DefenseState truth;
  truth.compromised.assign(m.conditions(), 0);
  truth.blocked.assign(m.links.size(), 0);
  if (attacker.active) {
    for (std::size_t v = 0; v < m.conditions(); ++v) {
      if (m.bag.nodes[v].groups.empty()) truth.compromised[v] = world.bernoulli(m.bag.nodes[v].prior) ? 1 : 0;
    }
  }
  planner::BeliefState belief = planner::initial_belief(m, defender.particles, belief_rng);
  trace.states.push_back(truth.compromised);

  // execCode conditions per host for alert mapping
  std::map<std::string, std::vector<std::size_t>> host_conditions;
  for (std::size_t v = 0; v < m.conditions(); ++v) {
    const auto& a = m.bag.nodes[v].atom;
    if (a.predicate == "execCode") host_conditions[a.args[0]].push_back(v);
  }
  std::set<std::string> flagged_last;

  for (std::size_t k = 0; k < opt.horizon; ++k) {
    TraceStep st;
    st.step = k;
    st.time_s = opt.duty_cycle_s * static_cast<double>(k + 1);

    std::size_t action = 0;
    if (defender.kind == Defender::Kind::pomcp) {
      planner::PlannerConfig cfg = defender.config;
      cfg.seed = defender.config.seed ^ (seed * 0x100000001b3ULL + k);
      action = planner::plan_index(m, belief, cfg);
    }
    const planner::Bits before = truth.compromised;
    planner::StepResult step = planner::simulate_step(m, truth, action, world);
    truth = step.next;
    trace.blocked.push_back(truth.blocked);
    trace.states.push_back(truth.compromised);
    st.action = action;
    st.action_text = m.actions[action].describe();
    st.reward = step.reward;
    trace.total_reward += step.reward;
    if (step.newly_blocked > 0) {
      for (std::size_t l : m.actions[action].links) trace.applied_rules.push_back(m.links[l].to_text());
    }
    for (std::size_t v = 0; v < m.conditions(); ++v) {
      if (truth.compromised[v] && !before[v]) st.attacker_moves.push_back(aggen::to_string(m.bag.nodes[v].atom));
    }

    // traffic and detection
    std::set<std::string> compromised_hosts;
    for (const auto& [host, conds] : host_conditions) {
      for (std::size_t v : conds) {
        if (truth.compromised[v]) compromised_hosts.insert(host);
      }
    }
    const auto batch = emit_cycle(topo, res.pool, compromised_hosts, k, st.time_s, traffic_rng);
    trace.captured_records += batch.size();
    std::set<std::string> flagged;
    for (const auto& rec : batch) {
      const auto decoded = pcap::decode_frame(rec.packet.link_bytes);
      const auto images = bytevis::render(decoded.payload, res.order, bytevis::Curve::hilbert);
      const bool bad = detector::classify(res.model, images.front()).label == pcap::Label::malware;
      st.records += 1;
      if (rec.label == pcap::Label::malware) st.malware_records += 1;
      if (bad) {
        flagged.insert(rec.host);
        if (rec.label == pcap::Label::malware) {
          st.malware_verdicts += 1;
        } else {
          st.false_alarms += 1;
        }
      }
    }
    planner::Bits observation(m.conditions(), 0);
    for (const auto& host : flagged) {
      if (flagged_last.count(host)) continue;
      st.alerts.push_back(host);
      if (auto it = host_conditions.find(host); it != host_conditions.end()) {
        for (std::size_t v : it->second) observation[v] = m.observable[v];
      }
    }
    flagged_last = flagged;

    belief = planner::update_belief(belief, action, observation, m, belief_rng);
    st.belief_reinitialized = belief.reinitialized;
    double goal_mass = 0.0;
    for (const auto& p : belief.particles) goal_mass += planner::any_goal(m, p) ? 1.0 : 0.0;
    st.goal_belief = goal_mass / static_cast<double>(belief.particles.size());
    trace.steps.push_back(std::move(st));

    if (planner::any_goal(m, truth.compromised)) {
      trace.outcome = Outcome::goal_reached;
      return trace;
    }
    if (opt.stop_when_contained && planner::goal_proximity_weight(truth, m) == 0.0) {
      trace.outcome = Outcome::contained;
      return trace;
    }
  }
  trace.outcome = planner::goal_proximity_weight(truth, m) == 0.0 ? Outcome::contained : Outcome::timeout;
  return trace;
}

// ---------------------------------------------------------------------------
// Paired comparison

/// P(X >= k) for X ~ Binomial(n, 1/2).
inline double binomial_upper_tail(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  double p = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                         std::lgamma(static_cast<double>(n - i) + 1);
    p += std::exp(log_c - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(p, 1.0);
}

struct Comparison {
  std::size_t episodes = 0;
  std::size_t goal_a = 0;     // goal reached under the baseline
  std::size_t goal_b = 0;     // goal reached under the candidate
  std::size_t only_a = 0;     // baseline breached, candidate held
  std::size_t only_b = 0;
  double p_value = 1.0;       // one-sided: candidate breaches less often
  double mean_reward_a = 0.0;
  double mean_reward_b = 0.0;
  std::size_t alerts_a = 0;
  std::size_t alerts_b = 0;

  double rate_a() const { return episodes ? static_cast<double>(goal_a) / episodes : 0.0; }
  double rate_b() const { return episodes ? static_cast<double>(goal_b) / episodes : 0.0; }
};

inline nlohmann::json to_json(const Comparison& c, const std::string& a = "no-op", const std::string& b = "pomcp") {
  return {{"episodes", c.episodes},
          {"goal_reached_rate", {{a, c.rate_a()}, {b, c.rate_b()}}},
          {"mean_reward", {{a, c.mean_reward_a}, {b, c.mean_reward_b}}},
          {"alert_count", {{a, c.alerts_a}, {b, c.alerts_b}}},
          {"discordant", {{"only_" + a, c.only_a}, {"only_" + b, c.only_b}}},
          {"p_value", c.p_value},
          {"test", "exact one-sided sign test on discordant pairs"}};
}

inline std::size_t alert_count(const EpisodeTrace& t) {
  std::size_t n = 0;
  for (const auto& s : t.steps) n += s.alerts.size();
  return n;
}

/// Accumulates paired episodes; p-value from the exact sign test on the
/// discordant pairs.
inline void add_pair(Comparison& c, const EpisodeTrace& a, const EpisodeTrace& b) {
  const bool ga = a.outcome == Outcome::goal_reached, gb = b.outcome == Outcome::goal_reached;
  c.episodes += 1;
  c.goal_a += ga;
  c.goal_b += gb;
  c.only_a += ga && !gb;
  c.only_b += gb && !ga;
  c.mean_reward_a += (a.total_reward - c.mean_reward_a) / static_cast<double>(c.episodes);
  c.mean_reward_b += (b.total_reward - c.mean_reward_b) / static_cast<double>(c.episodes);
  c.alerts_a += alert_count(a);
  c.alerts_b += alert_count(b);
  c.p_value = binomial_upper_tail(c.only_a, c.only_a + c.only_b);
}

}  // namespace amishield::sim

#endif  // AMISHIELD_SIM_HPP
