#include <gtest/gtest.h>

#include <filesystem>

#include "amishield/sim.hpp"

using namespace amishield;
using namespace amishield::sim;

namespace {

const Resources& shared_resources() {
  static const Resources res = default_resources(3, 150);
  return res;
}

std::size_t count_links(const SimTopology& t, HostKind from, HostKind to) {
  std::size_t n = 0;
  for (const auto& l : t.links) {
    if (l.src == kInternet) continue;
    n += t.host(l.src).kind == from && t.host(l.dst).kind == to;
  }
  return n;
}

Defender small_pomcp() {
  Defender d;
  d.config.budget = 300;
  d.particles = 200;
  return d;
}

/// Every newly compromised condition had an enabled, unblocked derivation
/// whose parents held at the start of the step.
void expect_transitions_respect_blocks(const planner::DefenseModel& m, const EpisodeTrace& t) {
  ASSERT_EQ(t.states.size(), t.blocked.size() + 1);
  for (std::size_t k = 0; k < t.blocked.size(); ++k) {
    const auto& before = t.states[k];
    const auto& after = t.states[k + 1];
    for (std::size_t v = 0; v < before.size(); ++v) {
      if (before[v] || !after[v]) continue;
      bool justified = false;
      for (std::size_t g = 0; g < m.bag.nodes[v].groups.size(); ++g) {
        if (!m.group_enabled(v, g, t.blocked[k])) continue;
        bool all = true;
        for (std::size_t p : m.bag.nodes[v].groups[g].parents) all = all && before[p];
        justified = justified || all;
      }
      EXPECT_TRUE(justified) << "step " << k << " condition " << aggen::to_string(m.bag.nodes[v].atom);
    }
  }
}

}  // namespace

TEST(GenTopology, MinimalStar) {
  const auto t = gen_topology(1, 1, Mode::point_to_multipoint, 0.0, 1);
  ASSERT_EQ(t.hosts.size(), 3u);
  EXPECT_EQ(count_links(t, HostKind::meter, HostKind::concentrator), 1u);
  EXPECT_EQ(count_links(t, HostKind::concentrator, HostKind::mdm), 1u);
  EXPECT_EQ(t.mdm_id(), "mdm");
}

TEST(GenTopology, StarHasNoMeterToMeterLinks) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t = gen_topology(12, 3, Mode::point_to_multipoint, 0.5, seed);
    EXPECT_EQ(count_links(t, HostKind::meter, HostKind::meter), 0u);
  }
}

TEST(GenTopology, MeshMetersReachAConcentrator) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto t = gen_topology(10, 2, Mode::mesh, 0.3, seed);
    EXPECT_NO_THROW(validate(t));
    EXPECT_GT(count_links(t, HostKind::meter, HostKind::meter), 0u);
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& l : t.links) out[l.src].push_back(l.dst);
    for (const Host* m : t.of_kind(HostKind::meter)) {
      std::set<std::string> seen{m->id};
      std::vector<std::string> stack{m->id};
      bool reached = false;
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        reached = reached || t.host(u).kind == HostKind::concentrator;
        for (const auto& v : out[u]) {
          if (seen.insert(v).second) stack.push_back(v);
        }
      }
      EXPECT_TRUE(reached) << m->id << " seed " << seed;
    }
  }
}

TEST(GenTopology, DeterministicAndSerializable) {
  const auto a = gen_topology(7, 2, Mode::mesh, 0.4, 9);
  const auto b = gen_topology(7, 2, Mode::mesh, 0.4, 9);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(to_json(topology_from_json(to_json(a))), to_json(a));
}

TEST(GenTopology, InvalidCounts) {
  for (auto [m, c] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{-3, 2}}) {
    try {
      gen_topology(m, c, Mode::mesh, 0.3, 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidCounts);
    }
  }
}

TEST(GenTopology, ValidateRejectsMeterLinksInStarMode) {
  auto t = gen_topology(3, 1, Mode::point_to_multipoint, 0.0, 1);
  t.links.push_back({"meter1", "meter2", "tcp", 4059, LinkTag::nan});
  EXPECT_THROW(validate(t), Error);
}

TEST(Traffic, OneMeterThreeSteps) {
  const auto t = gen_topology(1, 1, Mode::point_to_multipoint, 0.0, 1);
  const auto recs = inject_traffic(t, shared_resources().pool, 900, 3, 5);
  ASSERT_EQ(recs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(recs[i].label, pcap::Label::normal);
    EXPECT_EQ(recs[i].step, i);
    EXPECT_EQ(recs[i].packet.timestamp.seconds, 900u * i);
  }
}

TEST(Traffic, ReadingsStayBelowOneKilobyte) {
  const auto t = gen_topology(50, 5, Mode::mesh, 0.3, 2);
  const auto recs = inject_traffic(t, shared_resources().pool, 900, 200, 6, {"meter3", "meter7"});
  ASSERT_EQ(recs.size(), 10000u);
  for (const auto& r : recs) {
    const auto d = pcap::decode_frame(r.packet.link_bytes);
    ASSERT_LT(d.payload.size(), kMaxReading);
  }
}

TEST(Traffic, CompromisedMeterSendsMalware) {
  const auto t = gen_topology(3, 1, Mode::point_to_multipoint, 0.0, 1);
  const auto& pool = shared_resources().pool;
  const auto recs = inject_traffic(t, pool, 900, 5, 7, {"meter1"});
  for (const auto& r : recs) {
    const auto payload = pcap::decode_frame(r.packet.link_bytes).payload;
    const auto& list = r.host == "meter1" ? pool.malware : pool.normal;
    EXPECT_EQ(r.label, r.host == "meter1" ? pcap::Label::malware : pcap::Label::normal);
    EXPECT_NE(std::find(list.begin(), list.end(), payload), list.end());
  }
}

TEST(Traffic, OversizedAndEmptyCorpora) {
  const auto t = gen_topology(1, 1, Mode::point_to_multipoint, 0.0, 1);
  corpus::PayloadPool big;
  big.normal.push_back(pcap::Bytes(1024, 0x41));
  try {
    inject_traffic(t, big, 900, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OversizedPayload);
  }
  try {
    inject_traffic(t, corpus::PayloadPool{}, 900, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(Traffic, EveryPayloadLandsInExactlyOneRecord) {
  const auto t = gen_topology(6, 2, Mode::mesh, 0.5, 3);
  const auto recs = inject_traffic(t, shared_resources().pool, 900, 20, 8, {"meter2"});
  const auto path = std::filesystem::temp_directory_path() / "amishield_sim_traffic.pcap";
  pcap::write_capture(packets_of(recs), path);
  const auto back = pcap::read_capture(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), recs.size());
  const auto samples = pcap::extract_payloads(back, pcap::ExtractPolicy::per_packet);
  ASSERT_EQ(samples.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(samples[i].payload, pcap::decode_frame(recs[i].packet.link_bytes).payload);
  }
}

TEST(Episode, NoAttackerIsContainedWithoutMalware) {
  const auto t = gen_topology(4, 1, Mode::point_to_multipoint, 0.5, 1);
  const auto trace = run_episode(t, AttackerProfile::none(), Defender::no_op(), shared_resources(), 11);
  EXPECT_EQ(trace.outcome, Outcome::contained);
  for (const auto& s : trace.steps) {
    EXPECT_EQ(s.malware_records, 0u);
    EXPECT_EQ(s.malware_verdicts, 0u);
    EXPECT_TRUE(s.attacker_moves.empty());
  }
}

TEST(Episode, CertainExploitsReachATwoHopGoalByStepTwo) {
  GenOptions g;
  g.meter_cvss = 10.0;
  const auto t = gen_topology(1, 1, Mode::point_to_multipoint, 0.0, 1, g);
  EpisodeOptions opt;
  opt.goal = aggen::Atom{"execCode", {"meter1", "root"}};
  const auto trace = run_episode(t, AttackerProfile{}, Defender::no_op(), shared_resources(), 12, opt);
  EXPECT_EQ(trace.outcome, Outcome::goal_reached);
  EXPECT_LE(trace.steps.size(), 2u);
  EXPECT_DOUBLE_EQ(trace.total_reward, -Defender{}.costs.goal);
}

TEST(Episode, SeededRunsAreIdentical) {
  const auto t = gen_topology(3, 1, Mode::point_to_multipoint, 0.5, 4);
  EpisodeOptions opt;
  opt.horizon = 8;
  const auto a = run_episode(t, AttackerProfile{}, small_pomcp(), shared_resources(), 21, opt);
  const auto b = run_episode(t, AttackerProfile{}, small_pomcp(), shared_resources(), 21, opt);
  EXPECT_EQ(to_jsonl(a), to_jsonl(b));
}

TEST(Episode, TransitionsNeverCrossBlockedLinksAndRewardsAddUp) {
  const auto t = gen_topology(4, 2, Mode::mesh, 0.6, 5);
  const Defender d = small_pomcp();
  const auto sc = build_scenario(t, d, AttackerProfile{});
  EpisodeOptions opt;
  opt.horizon = 12;
  opt.stop_when_contained = false;
  std::size_t blocking_episodes = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto trace = run_episode(t, AttackerProfile{}, d, shared_resources(), seed, opt);
    expect_transitions_respect_blocks(sc.model, trace);
    double total = 0.0;
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
      const auto prev_blocks = k ? trace.blocked[k - 1] : planner::Bits(sc.model.links.size(), 0);
      std::size_t fresh = 0;
      for (std::size_t l = 0; l < prev_blocks.size(); ++l) fresh += trace.blocked[k][l] && !prev_blocks[l];
      const double expect = planner::step_reward(sc.model, trace.states[k], trace.states[k + 1], fresh);
      EXPECT_DOUBLE_EQ(trace.steps[k].reward, expect);
      total += trace.steps[k].reward;
    }
    EXPECT_DOUBLE_EQ(trace.total_reward, total);
    EXPECT_EQ(trace.captured_records, trace.steps.size() * 4);
    blocking_episodes += !trace.applied_rules.empty();
  }
  EXPECT_GT(blocking_episodes, 0u);
}

TEST(Episode, TraceExport) {
  const auto t = gen_topology(2, 1, Mode::point_to_multipoint, 0.0, 1);
  EpisodeOptions opt;
  opt.horizon = 3;
  const auto trace = run_episode(t, AttackerProfile{}, Defender::no_op(), shared_resources(), 2, opt);
  std::istringstream lines(to_jsonl(trace));
  std::string line;
  std::size_t n = 0;
  nlohmann::json last;
  while (std::getline(lines, line)) {
    last = nlohmann::json::parse(line);
    ++n;
  }
  EXPECT_EQ(n, trace.steps.size() + 1);
  EXPECT_EQ(last["type"], "summary");
  EXPECT_EQ(last["goal"], "execCode(mdm,root)");
}

TEST(Comparison, SignTest) {
  EXPECT_DOUBLE_EQ(binomial_upper_tail(0, 10), 1.0);
  EXPECT_NEAR(binomial_upper_tail(5, 5), 1.0 / 32, 1e-15);
  EXPECT_NEAR(binomial_upper_tail(9, 10), 11.0 / 1024, 1e-12);
  Comparison c;
  EpisodeTrace breached, held;
  breached.outcome = Outcome::goal_reached;
  held.outcome = Outcome::contained;
  for (int i = 0; i < 6; ++i) add_pair(c, breached, held);
  add_pair(c, breached, breached);
  EXPECT_EQ(c.only_a, 6u);
  EXPECT_EQ(c.only_b, 0u);
  EXPECT_NEAR(c.p_value, 1.0 / 64, 1e-15);
  EXPECT_DOUBLE_EQ(c.rate_a(), 1.0);
  EXPECT_NEAR(c.rate_b(), 1.0 / 7, 1e-15);
}
