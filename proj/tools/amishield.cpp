// amishield: command-line front end for the AMI defense pipeline.
//
// Exit codes
//   0  success
//   1  capture has a bad magic number
//   2  I/O failure, usage error, or any other library error
//   3  degenerate (single-class) training set
//   4  schema violation in an input document or config file
//   5  attack target not derivable
//   6  invalid simulator host counts

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "amishield/amishield.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace amishield;

namespace {

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::BadMagic: return 1;
    case ErrorCode::DegenerateDataset: return 3;
    case ErrorCode::SchemaViolation:
    case ErrorCode::UnknownPredicate: return 4;
    case ErrorCode::TargetUnreachable: return 5;
    case ErrorCode::InvalidCounts: return 6;
    default: return 2;
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed on " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create directory " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Config files: {"version": 1, "<flag name>": value, ...}. A key names a flag
// of the chosen subcommand; flags given on the command line win.

bool internal_option(const CLI::Option* o) {
  const auto name = o->get_single_name();
  return name == "help" || name == "config";
}

void apply_config(CLI::App* sub, const fs::path& path) {
  const json doc = read_json(path);
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "config must be a JSON object");
  if (!doc.contains("version") || doc["version"] != 1) {
    throw Error(ErrorCode::SchemaViolation, "config version must be 1");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key == "version") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || internal_option(opt)) {
      throw Error(ErrorCode::SchemaViolation, "unknown config key '" + key + "' for " + sub->get_name());
    }
    if (opt->count() > 0) continue;
    const auto as_text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(as_text(v));
    } else {
      opt->add_result(as_text(value));
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw Error(ErrorCode::SchemaViolation, "config key '" + key + "': " + e.what());
    }
  }
}

json typed(const std::string& s) {
  try {
    json v = json::parse(s);
    if (v.is_number() || v.is_boolean()) return v;
  } catch (const json::exception&) {
  }
  return s;
}

/// Every flag of the subcommand with the value in force after config merging.
json effective_config(const CLI::App* sub) {
  json out = json::object();
  for (const CLI::Option* o : sub->get_options()) {
    if (internal_option(o)) continue;
    std::vector<std::string> vals = o->count() ? o->results() : std::vector<std::string>{};
    if (vals.empty() && !o->get_default_str().empty()) vals.push_back(o->get_default_str());
    if (o->get_expected_max() == 0) {
      out[o->get_single_name()] = o->count() > 0;
    } else if (vals.empty()) {
      out[o->get_single_name()] = nullptr;
    } else if (o->get_expected_max() > 1) {
      json arr = json::array();
      for (const auto& v : vals) arr.push_back(typed(v));
      out[o->get_single_name()] = arr;
    } else {
      out[o->get_single_name()] = typed(vals.back());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image manifests: {"format":"amishield-manifest","version":1,
//   "images":[{"path":"img_000000.png","label":"malware"|"normal"|null, ...}]}
// Paths are relative to the manifest's directory.

constexpr const char* kManifestFormat = "amishield-manifest";

struct ManifestEntry {
  fs::path path;
  std::optional<pcap::Label> label;
};

struct Manifest {
  bytevis::Curve curve = bytevis::Curve::hilbert;
  std::vector<ManifestEntry> entries;
};

Manifest load_manifest(const fs::path& path) {
  const json doc = read_json(path);
  Manifest m;
  try {
    if (doc.at("format") != kManifestFormat || doc.at("version") != 1) {
      throw Error(ErrorCode::SchemaViolation, path.string() + " is not an image manifest (version 1)");
    }
    m.curve = bytevis::parse_curve(doc.value("curve", std::string("hilbert")));
    for (const auto& e : doc.at("images")) {
      ManifestEntry entry{path.parent_path() / e.at("path").get<std::string>(), std::nullopt};
      if (e.contains("label") && !e["label"].is_null()) entry.label = detector::parse_label(e["label"].get<std::string>());
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
  }
  return m;
}

std::vector<detector::LabeledFeatures> labeled_features(const std::vector<std::string>& manifests, unsigned quadrants) {
  std::vector<detector::LabeledFeatures> out;
  for (const auto& p : manifests) {
    const Manifest m = load_manifest(p);
    for (const auto& e : m.entries) {
      if (!e.label) throw Error(ErrorCode::SchemaViolation, e.path.string() + " has no label");
      out.push_back({detector::featurize(png::read_png(e.path, m.curve), quadrants), *e.label});
    }
  }
  return out;
}

/// Renders `payload`, writes one PNG per chunk as <stem>_<chunk>.png and
/// appends manifest entries.
void emit_images(const pcap::Bytes& payload, const std::string& source, std::optional<pcap::Label> label,
                 unsigned order, bytevis::Curve curve, const fs::path& dir, std::size_t stem, json& images) {
  const auto rendered = bytevis::render(payload, order, curve);
  for (std::size_t c = 0; c < rendered.size(); ++c) {
    char name[48];
    std::snprintf(name, sizeof name, "img_%06zu_%zu.png", stem, c);
    png::write_png(rendered[c], dir / name);
    images.push_back({{"path", name},
                      {"label", label ? json(pcap::to_string(*label)) : json(nullptr)},
                      {"source_id", source},
                      {"chunk", c},
                      {"source_length", rendered[c].source_length}});
  }
}

json manifest_doc(const json& config, const std::string& curve, const json& images) {
  return {{"format", kManifestFormat}, {"version", 1}, {"curve", curve}, {"config", config}, {"images", images}};
}

// ---------------------------------------------------------------------------
// Attack-graph inputs: a scan report plus network topology, or a simulator
// topology document (which implies both).

struct GraphInputs {
  std::string scan;
  std::string topology;
  std::string sim_topology;
};

void add_graph_inputs(CLI::App* sub, GraphInputs& in) {
  sub->add_option("--scan", in.scan, "Scan report JSON");
  sub->add_option("--topology", in.topology, "Network topology JSON");
  sub->add_option("--sim-topology", in.sim_topology, "Simulator topology JSON (replaces --scan/--topology)");
}

std::pair<json, json> load_graph_docs(const GraphInputs& in) {
  if (!in.sim_topology.empty()) {
    const auto t = sim::topology_from_json(read_json(in.sim_topology));
    return {sim::to_scan_report(t), sim::to_topology_doc(t)};
  }
  if (in.scan.empty() && in.topology.empty()) {
    throw Error(ErrorCode::SchemaViolation, "need --scan and/or --topology, or --sim-topology");
  }
  return {in.scan.empty() ? json::object() : read_json(in.scan),
          in.topology.empty() ? json::object() : read_json(in.topology)};
}

aggen::LogicalAttackGraph load_lag(const GraphInputs& in, std::map<std::string, double>* cvss = nullptr) {
  const auto [scan, topo] = load_graph_docs(in);
  if (cvss) *cvss = aggen::cve_scores(scan);
  return aggen::build_lag(aggen::load_facts(scan, topo), aggen::default_rules());
}

aggen::Atom default_target(const aggen::LogicalAttackGraph& lag, const std::string& text) {
  if (!text.empty()) return aggen::parse_atom(text);
  if (lag.goals.empty()) throw Error(ErrorCode::TargetUnreachable, "the attacker reaches no execCode condition");
  return lag.nodes[lag.goals.front()].atom;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smart-meter network defense toolkit: traffic imaging, detection, attack graphs, planning"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 1;
  auto common = [&](CLI::App* sub, const std::string& out_help) {
    sub->add_option("--config", config_path, "JSON config file (flags win on conflict)");
    sub->add_option("--seed", seed, "Random seed");
    return sub->add_option("--out", out_path, out_help);
  };

  // render ------------------------------------------------------------------
  std::string pcap_in;
  unsigned order = 5;
  std::string curve_name = "hilbert";
  bool per_flow = false;
  std::string label_name;
  auto* render = app.add_subcommand("render", "Render capture payloads as byte-class images");
  render->add_option("pcap", pcap_in, "Input capture")->required();
  render->add_option("--order", order, "Curve order (image side 2^order)")->check(CLI::Range(1u, bytevis::kMaxOrder));
  render->add_option("--curve", curve_name, "Curve")->check(CLI::IsMember({"hilbert", "zigzag"}));
  render->add_flag("--per-flow", per_flow, "Concatenate payloads per flow instead of per packet");
  render->add_option("--label", label_name, "Label every image")->check(CLI::IsMember({"normal", "malware"}));
  common(render, "Output directory")->required();

  // dataset -----------------------------------------------------------------
  std::size_t n_normal = 500, n_malware = 500;
  double test_fraction = 0.2;
  std::string variant_name = "standard";
  auto* dataset = app.add_subcommand("dataset", "Generate the synthetic labeled corpus as images");
  dataset->add_option("--normal", n_normal, "Normal payloads");
  dataset->add_option("--malware", n_malware, "Malware payloads");
  dataset->add_option("--test-fraction", test_fraction, "Share of images held out")->check(CLI::Range(0.0, 1.0));
  dataset->add_option("--order", order, "Curve order")->check(CLI::Range(1u, bytevis::kMaxOrder));
  dataset->add_option("--curve", curve_name, "Curve")->check(CLI::IsMember({"hilbert", "zigzag"}));
  common(dataset, "Output directory")->required();

  // train / classify / evaluate ----------------------------------------------
  std::vector<std::string> manifests;
  std::string model_path;
  detector::Hyper hyper;
  std::string kind_name = "mlp";
  unsigned quadrants = detector::kDefaultQuadrants;
  auto* train = app.add_subcommand("train", "Train a detector on labeled image manifests");
  train->add_option("manifests", manifests, "Image manifests")->required();
  train->add_option("--model", kind_name, "Model kind")->check(CLI::IsMember({"mlp", "knn"}));
  train->add_option("--epochs", hyper.epochs, "SGD epochs");
  train->add_option("--hidden", hyper.hidden, "Hidden units");
  train->add_option("--learning-rate", hyper.learning_rate, "SGD step size");
  train->add_option("--k", hyper.k, "Neighbours for knn");
  train->add_option("--threshold", hyper.threshold, "Malware score threshold");
  train->add_option("--quadrants", quadrants, "Feature grid cells (perfect square)");
  common(train, "Model output path")->required();

  auto* classify = app.add_subcommand("classify", "Per-image verdicts as JSON lines");
  classify->add_option("model", model_path, "Trained model")->required();
  classify->add_option("manifests", manifests, "Image manifests")->required();
  classify->add_option("--quadrants", quadrants, "Feature grid cells");
  common(classify, "Write verdicts here instead of standard output");

  auto* evaluate = app.add_subcommand("evaluate", "Accuracy, FPR and FNR on labeled manifests");
  evaluate->add_option("model", model_path, "Trained model")->required();
  evaluate->add_option("manifests", manifests, "Image manifests")->required();
  evaluate->add_option("--quadrants", quadrants, "Feature grid cells");
  common(evaluate, "Write the report here as well as standard output");

  // attack-graph / bag / mitigate --------------------------------------------
  GraphInputs graph_in;
  std::string target_text;
  auto* attack_graph = app.add_subcommand("attack-graph", "Logical attack graph as text, DOT and JSON");
  add_graph_inputs(attack_graph, graph_in);
  attack_graph->add_option("--target", target_text, "Fail with exit 5 unless this atom is derivable");
  common(attack_graph, "Output directory")->required();

  std::string method_name = "auto";
  std::size_t samples = 100000;
  auto* bag_cmd = app.add_subcommand("bag", "Bayesian attack graph with unconditional marginals");
  add_graph_inputs(bag_cmd, graph_in);
  bag_cmd->add_option("--method", method_name, "Inference")->check(CLI::IsMember({"auto", "exact", "monte-carlo"}));
  bag_cmd->add_option("--samples", samples, "Monte-Carlo samples");
  common(bag_cmd, "Output directory")->required();

  std::size_t limit = 10;
  auto* mitigate = app.add_subcommand("mitigate", "Minimal firewall rule sets that cut the target");
  add_graph_inputs(mitigate, graph_in);
  mitigate->add_option("--target", target_text, "Condition to protect, e.g. execCode(mdm,root)");
  mitigate->add_option("--limit", limit, "Rule sets to emit");
  common(mitigate, "Output directory")->required();

  // simulate ----------------------------------------------------------------
  int meters = 10, concentrators = 2;
  std::string mode_name = "point-to-multipoint";
  double density = 0.3;
  std::size_t episodes = 1, horizon = 30, budget = 1000, particles = 1000;
  std::string defender_name = "compare";
  std::string attacker_name = "internet";
  double duty_cycle = 900.0;
  std::size_t train_per_class = 300;
  auto* simulate = app.add_subcommand("simulate", "Closed-loop episodes on a generated AMI topology");
  simulate->add_option("--meters", meters, "Smart meters");
  simulate->add_option("--concentrators", concentrators, "Data concentrators");
  simulate->add_option("--mode", mode_name, "Topology")->check(CLI::IsMember({"point-to-multipoint", "p2mp", "mesh"}));
  simulate->add_option("--density", density, "Vulnerable host probability");
  simulate->add_option("--episodes", episodes, "Episodes (paired seeds when comparing)");
  simulate->add_option("--horizon", horizon, "Duty cycles per episode");
  simulate->add_option("--defender", defender_name, "Defender")->check(CLI::IsMember({"pomcp", "no-op", "compare"}));
  simulate->add_option("--attacker", attacker_name, "Attacker entry zone, or none");
  simulate->add_option("--budget", budget, "POMCP simulations per decision");
  simulate->add_option("--particles", particles, "Belief particles");
  simulate->add_option("--duty-cycle", duty_cycle, "Seconds per step");
  simulate->add_option("--train-per-class", train_per_class, "Detector training payloads per class");
  simulate->add_option("--target", target_text, "Goal condition (default execCode(mdm,root))");
  common(simulate, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config_path.empty()) apply_config(sub, config_path);
    const json config = effective_config(sub);
    const fs::path out = out_path;

    if (sub == render) {
      const auto curve = bytevis::parse_curve(curve_name);
      const auto packets = pcap::read_capture(pcap_in);
      const auto samples_in =
          pcap::extract_payloads(packets, per_flow ? pcap::ExtractPolicy::per_flow : pcap::ExtractPolicy::per_packet);
      ensure_dir(out);
      std::optional<pcap::Label> label;
      if (!label_name.empty()) label = detector::parse_label(label_name);
      json images = json::array();
      for (std::size_t i = 0; i < samples_in.size(); ++i) {
        const auto& s = samples_in[i];
        emit_images(s.payload, s.source_id, label ? label : s.label, order, curve, out, i, images);
      }
      write_json(out / "manifest.json", manifest_doc(config, curve_name, images));
      std::cout << json{{"manifest", (out / "manifest.json").string()}, {"images", images.size()}}.dump() << "\n";

    } else if (sub == dataset) {
      const auto curve = bytevis::parse_curve(curve_name);
      const auto pool = corpus::make_pool(n_normal, n_malware, seed);
      std::vector<std::pair<const pcap::Bytes*, pcap::Label>> items;
      for (const auto& p : pool.normal) items.push_back({&p, pcap::Label::normal});
      for (const auto& p : pool.malware) items.push_back({&p, pcap::Label::malware});
      Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
      rng.shuffle(items);
      const std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(items.size()) + 0.5);
      ensure_dir(out);
      json train_images = json::array(), test_images = json::array();
      for (std::size_t i = 0; i < items.size(); ++i) {
        json& dest = i < items.size() - n_test ? train_images : test_images;
        emit_images(*items[i].first, "synthetic-" + std::to_string(i), items[i].second, order, curve, out, i, dest);
      }
      write_json(out / "train.json", manifest_doc(config, curve_name, train_images));
      write_json(out / "test.json", manifest_doc(config, curve_name, test_images));
      std::cout << json{{"train", (out / "train.json").string()},
                        {"test", (out / "test.json").string()},
                        {"train_images", train_images.size()},
                        {"test_images", test_images.size()}}
                       .dump()
                << "\n";

    } else if (sub == train) {
      hyper.kind = detector::parse_model_kind(kind_name);
      hyper.seed = seed;
      const auto data = labeled_features(manifests, quadrants);
      const auto model = detector::train(data, hyper);
      json doc = detector::to_json(model);
      doc["quadrants"] = quadrants;
      write_json(out, doc);
      const auto m = detector::evaluate(model, data);
      std::cout << json{{"model", out.string()},
                        {"samples", data.size()},
                        {"training_accuracy", m.accuracy},
                        {"training_false_positive_rate", m.false_positive_rate},
                        {"training_false_negative_rate", m.false_negative_rate},
                        {"config", config}}
                       .dump(2)
                << "\n";

    } else if (sub == classify || sub == evaluate) {
      json doc = read_json(model_path);
      if (sub->get_option("--quadrants")->count() == 0 && doc.contains("quadrants")) {
        quadrants = doc["quadrants"].get<unsigned>();
      }
      doc.erase("quadrants");
      const auto model = detector::model_from_json(doc);
      if (sub == classify) {
        std::string lines;
        for (const auto& p : manifests) {
          const Manifest m = load_manifest(p);
          for (const auto& e : m.entries) {
            const auto v = detector::classify_features(model, detector::featurize(png::read_png(e.path, m.curve), quadrants));
            lines += json{{"path", e.path.string()}, {"verdict", pcap::to_string(v.label)}, {"score", v.score}}.dump();
            lines += "\n";
          }
        }
        if (out_path.empty()) {
          std::cout << lines;
        } else {
          write_text(out, lines);
        }
      } else {
        const auto m = detector::evaluate(model, labeled_features(manifests, quadrants));
        const json report{{"accuracy", m.accuracy},
                          {"false_positive_rate", m.false_positive_rate},
                          {"false_negative_rate", m.false_negative_rate},
                          {"total", m.total},
                          {"config", config}};
        if (!out_path.empty()) write_json(out, report);
        std::cout << report.dump(2) << "\n";
      }

    } else if (sub == attack_graph) {
      const auto lag = load_lag(graph_in);
      if (!target_text.empty() && !aggen::reachable(lag, aggen::parse_atom(target_text))) {
        throw Error(ErrorCode::TargetUnreachable, target_text + " is not derivable");
      }
      ensure_dir(out);
      write_text(out / "lag.txt", aggen::to_text(lag));
      write_text(out / "lag.dot", aggen::to_dot(lag));
      json goals = json::array();
      for (std::size_t g : lag.goals) goals.push_back(aggen::to_string(lag.nodes[g].atom));
      const json summary{{"leaves", lag.count(aggen::NodeKind::leaf)},
                         {"derived", lag.count(aggen::NodeKind::derived)},
                         {"rules", lag.count(aggen::NodeKind::rule)},
                         {"goals", goals},
                         {"config", config}};
      write_json(out / "lag.json", summary);
      std::cout << summary.dump(2) << "\n";

    } else if (sub == bag_cmd) {
      std::map<std::string, double> cvss;
      const auto lag = load_lag(graph_in, &cvss);
      const auto g = bag::lag_to_bag(lag, cvss);
      bag::InferenceOptions opt;
      opt.method = method_name == "exact"         ? bag::Method::exact
                   : method_name == "monte-carlo" ? bag::Method::monte_carlo
                                                  : bag::Method::automatic;
      opt.samples = samples;
      opt.seed = seed;
      const auto p = bag::unconditional(g, opt);
      ensure_dir(out);
      json doc = bag::to_json(g, &p);
      doc["config"] = config;
      write_json(out / "bag.json", doc);
      write_text(out / "bag.dot", bag::to_dot(g, &p));
      json marginals = json::object();
      for (std::size_t v = 0; v < g.size(); ++v) marginals[aggen::to_string(g.nodes[v].atom)] = p[v];
      std::cout << json{{"nodes", g.size()}, {"removed_edges", g.removed_edges.size()}, {"marginals", marginals}}.dump(2)
                << "\n";

    } else if (sub == mitigate) {
      const auto [scan, topo] = load_graph_docs(graph_in);
      const auto facts = aggen::load_facts(scan, topo);
      const auto lag = aggen::build_lag(facts, aggen::default_rules());
      const auto target = default_target(lag, target_text);
      const auto tree = mitigator::build_rule_tree(lag, target);
      const auto sets = mitigator::enumerate_rule_sets(tree, limit);
      ensure_dir(out);
      std::string text;
      for (std::size_t i = 0; i < sets.size(); ++i) {
        text += "# rule set " + std::to_string(i + 1) + "\n" + mitigator::to_text(sets[i]);
      }
      json verified = json::array();
      for (const auto& s : sets) verified.push_back(mitigator::verify_block(facts, aggen::default_rules(), s, target));
      const json doc{{"target", aggen::to_string(target)},
                     {"rule_sets", mitigator::to_json(sets)},
                     {"verified", verified},
                     {"config", config}};
      write_json(out / "rules.json", doc);
      write_text(out / "rules.txt", text);
      write_json(out / "rule_tree.json", mitigator::to_json(tree));
      std::cout << doc.dump(2) << "\n";

    } else if (sub == simulate) {
      if (!(density >= 0.0 && density <= 1.0)) throw Error(ErrorCode::InvalidCounts, "density must be in [0,1]");
      const auto topo = sim::gen_topology(meters, concentrators, sim::parse_mode(mode_name), density, seed);
      sim::AttackerProfile attacker;
      if (attacker_name == "none") {
        attacker = sim::AttackerProfile::none();
      } else {
        attacker.entry = attacker_name;
      }
      sim::Defender pomcp;
      pomcp.config.budget = budget;
      pomcp.particles = particles;
      const sim::Defender noop = sim::Defender::no_op();
      sim::EpisodeOptions opt;
      opt.horizon = horizon;
      opt.duty_cycle_s = duty_cycle;
      if (!target_text.empty()) opt.goal = aggen::parse_atom(target_text);
      const auto res = sim::default_resources(seed, train_per_class);

      ensure_dir(out);
      write_json(out / "topology.json", sim::to_json(topo));
      auto run = [&](const sim::Defender& d, std::uint64_t s) {
        auto trace = sim::run_episode(topo, attacker, d, res, s, opt);
        char name[64];
        std::snprintf(name, sizeof name, "trace_%s_%04llu.jsonl", sim::to_string(d.kind),
                      static_cast<unsigned long long>(s));
        write_text(out / name, sim::to_jsonl(trace));
        return trace;
      };

      json summary{{"config", config}};
      if (defender_name == "compare") {
        sim::Comparison cmp;
        for (std::size_t i = 0; i < episodes; ++i) {
          const std::uint64_t s = seed + i;
          const auto a = run(noop, s);
          const auto b = run(pomcp, s);
          sim::add_pair(cmp, a, b);
        }
        summary["comparison"] = sim::to_json(cmp);
      } else {
        const sim::Defender& d = defender_name == "no-op" ? noop : pomcp;
        std::size_t reached = 0, alerts = 0;
        double reward = 0.0;
        json outcomes = json::array();
        for (std::size_t i = 0; i < episodes; ++i) {
          const auto t = run(d, seed + i);
          reached += t.outcome == sim::Outcome::goal_reached;
          alerts += sim::alert_count(t);
          reward += t.total_reward;
          outcomes.push_back(sim::to_string(t.outcome));
        }
        const double n = static_cast<double>(std::max<std::size_t>(episodes, 1));
        summary["defender"] = defender_name;
        summary["episodes"] = episodes;
        summary["goal_reached_rate"] = static_cast<double>(reached) / n;
        summary["mean_reward"] = reward / n;
        summary["alert_count"] = alerts;
        summary["outcomes"] = outcomes;
      }
      write_json(out / "summary.json", summary);
      std::cout << summary.dump(2) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "amishield " << sub->get_name() << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "amishield " << sub->get_name() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "amishield " << sub->get_name() << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
