#include "cellgraph/experiment.hpp"
#include "cellgraph/graph_builder.hpp"
#include "cellgraph/radio_oracle.hpp"
#include "cellgraph/scenario.hpp"
#include "cellgraph/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace cellgraph;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct Globals {
  std::uint64_t seed = 1;
  std::string out = ".";
};

fs::path output_dir(const Globals& g) {
  const char* env = std::getenv("CELLGRAPH_OUT");
  fs::path dir = (env && *env) ? fs::path(env) : fs::path(g.out);
  fs::create_directories(dir);
  return dir;
}

// Relative output names land in the output directory; absolute ones are kept.
fs::path resolve(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : output_dir(g) / p;
}

// Inputs default to artifacts of earlier stages in the output directory.
fs::path input_path(const Globals& g, const std::string& given, const char* fallback) {
  const fs::path p = given.empty() ? output_dir(g) / fallback : fs::path(given);
  if (!fs::exists(p)) throw ValidationError("missing input " + p.string());
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void fail_line(const char* kind, const std::string& message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
}

Bounds parse_bounds(const std::vector<double>& v) {
  if (v.size() != 4) throw ValidationError("--bounds expects xmin,ymin,xmax,ymax");
  return Bounds{v[0], v[1], v[2], v[3]};
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  int sites = 20;
  int sectors = 3;
  std::vector<int> carriers{2100};
  std::vector<double> bounds{0.0, 0.0, 10000.0, 10000.0};
  double resolution = 100.0;
  std::string name = "synthetic";
  std::string output = "scenario.json";
};

void run_generate(const Globals& g, const GenerateArgs& a) {
  GenerateParams p;
  p.n_sites = a.sites;
  p.sectors_per_site = a.sectors;
  p.carriers = a.carriers;
  p.bounds = parse_bounds(a.bounds);
  p.grid_resolution_m = a.resolution;
  p.seed = g.seed;
  p.name = a.name;
  const Scenario s = generate_scenario(p);
  const fs::path path = resolve(g, a.output);
  save_scenario(s, path);
  std::cout << path.string() << " cells=" << s.cells.size() << "\n";
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scenario;
  std::string output = "kpis.csv";
  std::string map;
};

void run_simulate(const Globals& g, const SimulateArgs& a) {
  const Scenario s = load_scenario(input_path(g, a.scenario, "scenario.json"));
  const OracleResult r = simulate(s);
  const fs::path path = resolve(g, a.output);
  write_file(path, kpi_table_csv(s, r));
  if (!a.map.empty()) write_file(resolve(g, a.map), coverage_map_csv(s, r));
  std::cout << path.string() << " cells=" << s.cells.size() << " pixels=" << r.map.pixel_count() * static_cast<int>(r.map.carriers.size()) << "\n";
}

// ------------------------------------------------------------- build-graph

struct BuildArgs {
  std::string scenario;
  bool with_m = false;
  bool no_m = false;
  double grid_step = geometry::kDefaultGridStepM;
  std::string output = "graph.json";
  std::string geometry_csv;
};

void run_build(const Globals& g, const BuildArgs& a) {
  if (a.with_m == a.no_m) throw ValidationError("build-graph needs exactly one of --with-m / --no-m");
  const Scenario s = load_scenario(input_path(g, a.scenario, "scenario.json"));
  const OracleResult r = simulate(s);
  const CellGraph graph = build_graph(s, r, BuildOptions{a.with_m, g.seed, a.grid_step});
  const fs::path path = resolve(g, a.output);
  save_graph(graph, path);
  if (!a.geometry_csv.empty()) write_file(resolve(g, a.geometry_csv), geometry_table_csv(graph));
  std::cout << path.string() << " nodes=" << graph.num_nodes() << " edges=" << graph.num_edges() << "\n";
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string graph;
  std::string target_graph;
  std::string protocol = "pf2";
  std::string split = "transductive";
  std::vector<std::string> backbones{"gine"};
  std::vector<std::string> kpis{"cqi"};
  std::vector<double> alphas{2.5};
  std::vector<std::string> pretexts{"ia"};
  int runs = 1;
  int n_pt = 200;
  int n_ft = 300;
  double lr_pt = 1e-3;
  double lr_ft = 3e-3;
  int layers = 3;
  int hidden = 64;
  int heads = 4;
  bool geometry_edge_features = false;
  int jobs = 1;
  std::string ledger = "results.csv";
  std::string run_dir = "runs";
};

struct Job {
  training::TrainConfig config;
  training::RunReport report;
  std::optional<training::TrainedModel> model;
  std::string error;
  bool validation_error = false;
};

std::vector<training::TrainConfig> expand_sweep(const Globals& g, const TrainArgs& a) {
  if (a.runs < 1) throw ValidationError("--runs must be >= 1");
  if (a.protocol != "pf1" && a.protocol != "pf2") throw ValidationError("--protocol must be pf1 or pf2");
  std::vector<training::TrainConfig> out;
  const std::vector<std::string> pretexts = a.protocol == "pf1" ? std::vector<std::string>{"none"} : a.pretexts;
  const std::vector<double> alphas = a.protocol == "pf1" ? std::vector<double>{100.0} : a.alphas;
  for (const auto& b : a.backbones)
    for (const auto& k : a.kpis)
      for (double alpha : alphas)
        for (const auto& p : pretexts)
          for (int r = 0; r < a.runs; ++r) {
            training::TrainConfig c;
            c.backbone.kind = models::backbone_kind_from_string(b);
            c.backbone.layers = a.layers;
            c.backbone.hidden = a.hidden;
            c.backbone.gat_heads = a.heads;
            c.kpi = kpi_from_string(k);
            c.alpha_pct = alpha;
            c.pretext = training::pretext_from_string(p);
            c.n_pt = a.n_pt;
            c.n_ft = a.n_ft;
            c.hp_pt.lr = a.lr_pt;
            c.hp_ft.lr = a.lr_ft;
            c.seed = g.seed + static_cast<std::uint64_t>(r);
            c.split = training::split_from_string(a.split);
            c.geometry_edge_features = a.geometry_edge_features;
            c.validate();
            out.push_back(c);
          }
  return out;
}

void run_train(const Globals& g, const TrainArgs& a) {
  const CellGraph graph = load_graph(input_path(g, a.graph, "graph.json"));
  std::optional<CellGraph> target;
  if (a.split == "inductive") {
    if (a.protocol != "pf1") throw ValidationError("inductive split is only defined for pf1");
    if (a.target_graph.empty()) throw ValidationError("inductive split needs --target-graph");
    target = load_graph(input_path(g, a.target_graph, ""));
  }
  std::vector<Job> jobs;
  for (const auto& c : expand_sweep(g, a)) jobs.push_back(Job{c, {}, {}, {}, false});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        if (a.protocol == "pf2")
          job.report = training::run_pf2(graph, job.config, &job.model);
        else if (target)
          job.report = training::run_pf1_inductive(graph, *target, job.config, &job.model);
        else
          job.report = training::run_pf1(graph, job.config, &job.model);
      } catch (const ValidationError& e) {
        job.error = e.what();
        job.validation_error = true;
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(a.jobs, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const Job& job : jobs)
    if (!job.error.empty()) {
      if (job.validation_error) throw ValidationError(job.error);
      throw std::runtime_error(job.error);
    }

  // Gains are filled in when the sweep contains the matching no-pretext run.
  for (Job& job : jobs) {
    if (job.config.pretext == training::Pretext::none || a.protocol != "pf2") continue;
    for (const Job& base : jobs) {
      training::TrainConfig c = job.config;
      c.pretext = training::Pretext::none;
      if (base.config == c) job.report.gain = training::gain(job.report, base.report);
    }
  }

  const fs::path run_dir = resolve(g, a.run_dir);
  const fs::path ledger = resolve(g, a.ledger);
  for (const Job& job : jobs) {
    const std::string stem = job.report.protocol + "-" + training::config_hash(job.config) + "-s" +
                             std::to_string(job.config.seed);
    write_file(run_dir / (stem + ".report.json"), training::to_json(job.report));
    write_file(run_dir / (stem + ".ckpt.json"), training::checkpoint_json(*job.model));
    experiment::append_ledger(ledger, job.report);
    std::cout << stem << " mse_pct=" << job.report.mse_pct;
    if (job.report.gain) std::cout << " gain=" << *job.report.gain;
    std::cout << "\n";
  }
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string graph;
  std::string nodes = "test";
  std::string output;
};

void run_eval(const Globals& g, const EvalArgs& a) {
  const training::TrainedModel model = training::model_from_checkpoint(read_file(input_path(g, a.checkpoint, "")));
  const CellGraph graph = load_graph(input_path(g, a.graph, "graph.json"));
  std::vector<int> nodes;
  if (a.nodes == "test")
    nodes = graph.masks.test;
  else if (a.nodes == "train")
    nodes = graph.masks.train;
  else if (a.nodes == "all")
    for (int v = 0; v < graph.num_nodes(); ++v) nodes.push_back(v);
  else
    throw ValidationError("--nodes must be test, train or all");
  if (nodes.empty()) throw ValidationError("eval: node set is empty");
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["kpi"] = to_string(model.kpi);
  j["nodes"] = a.nodes;
  j["count"] = nodes.size();
  j["mse_pct"] = training::evaluate(model, graph, nodes);
  const std::string text = j.dump(2) + "\n";
  if (!a.output.empty()) write_file(resolve(g, a.output), text);
  std::cout << text;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  std::string ledger;
  std::string markdown = "summary.md";
  std::string csv = "summary.csv";
};

void run_report(const Globals& g, const ReportArgs& a) {
  const auto rows = experiment::summarize(experiment::read_ledger(input_path(g, a.ledger, "results.csv")));
  const std::string md = experiment::summary_markdown(rows);
  write_file(resolve(g, a.markdown), md);
  write_file(resolve(g, a.csv), experiment::summary_csv(rows));
  std::cout << md;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  std::string graph;
  std::vector<std::string> backbones{"mlp", "gat", "gine", "wcgcn"};
  int repeats = 5;
  int layers = 3;
  int hidden = 64;
  int heads = 4;
  std::string output = "bench.json";
};

void run_bench(const Globals& g, const BenchArgs& a) {
  const CellGraph graph = load_graph(input_path(g, a.graph, "graph.json"));
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const auto& b : a.backbones) {
    models::BackboneConfig c;
    c.kind = models::backbone_kind_from_string(b);
    c.layers = a.layers;
    c.hidden = a.hidden;
    c.gat_heads = a.heads;
    c.validate();
    all.push_back(nlohmann::ordered_json::parse(experiment::to_json(experiment::bench(graph, c, a.repeats, g.seed))));
  }
  const std::string text = all.dump(2) + "\n";
  write_file(resolve(g, a.output), text);
  std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellgraph: cell-level KPI estimation with graph neural networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stage")->capture_default_str();
  app.add_option("--out", g.out, "Output directory (CELLGRAPH_OUT takes precedence)")->capture_default_str();

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Write a seeded synthetic scenario");
  c_gen->add_option("--sites", gen.sites)->capture_default_str();
  c_gen->add_option("--sectors", gen.sectors)->capture_default_str();
  c_gen->add_option("--carriers", gen.carriers)->delimiter(',')->capture_default_str();
  c_gen->add_option("--bounds", gen.bounds, "xmin,ymin,xmax,ymax in meters")->delimiter(',')->capture_default_str();
  c_gen->add_option("--resolution", gen.resolution, "Oracle grid resolution in meters")->capture_default_str();
  c_gen->add_option("--name", gen.name)->capture_default_str();
  c_gen->add_option("-o,--output", gen.output)->capture_default_str();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run the radio oracle and write per-cell KPI bins");
  c_sim->add_option("--scenario", sim.scenario, "Scenario JSON or CSV (default: <out>/scenario.json)");
  c_sim->add_option("-o,--output", sim.output)->capture_default_str();
  c_sim->add_option("--map", sim.map, "Also write the per-pixel coverage map CSV");

  BuildArgs bld;
  auto* c_bld = app.add_subcommand("build-graph", "Derive the cell graph");
  c_bld->add_option("--scenario", bld.scenario, "Scenario JSON or CSV (default: <out>/scenario.json)");
  auto* f_with = c_bld->add_flag("--with-m", bld.with_m, "Append RSSI measurement columns");
  auto* f_without = c_bld->add_flag("--no-m", bld.no_m, "Configuration features only");
  f_with->excludes(f_without);
  c_bld->add_option("--grid-step", bld.grid_step, "Geometry lattice step in meters")->capture_default_str();
  c_bld->add_option("-o,--output", bld.output)->capture_default_str();
  c_bld->add_option("--geometry-csv", bld.geometry_csv, "Also write per-edge IA/ID/IC");

  TrainArgs trn;
  auto* c_trn = app.add_subcommand("train", "Train one run or a sweep and append to the results ledger");
  c_trn->add_option("--graph", trn.graph, "Graph JSON (default: <out>/graph.json)");
  c_trn->add_option("--target-graph", trn.target_graph, "Evaluation graph for --split inductive");
  c_trn->add_option("--protocol", trn.protocol)->check(CLI::IsMember({"pf1", "pf2"}))->capture_default_str();
  c_trn->add_option("--split", trn.split)->check(CLI::IsMember({"transductive", "inductive"}))->capture_default_str();
  c_trn->add_option("--backbone", trn.backbones, "Comma list of mlp,gat,gine,wcgcn")->delimiter(',');
  c_trn->add_option("--kpi", trn.kpis, "Comma list of sinr,cqi")->delimiter(',');
  c_trn->add_option("--alpha", trn.alphas, "Comma list of few-shot label percentages")->delimiter(',');
  c_trn->add_option("--pretext", trn.pretexts, "Comma list of ia,id,none")->delimiter(',');
  c_trn->add_option("--runs", trn.runs, "Seeds seed..seed+runs-1 per configuration")->capture_default_str();
  c_trn->add_option("--n-pt", trn.n_pt)->capture_default_str();
  c_trn->add_option("--n-ft", trn.n_ft)->capture_default_str();
  c_trn->add_option("--lr-pt", trn.lr_pt)->capture_default_str();
  c_trn->add_option("--lr-ft", trn.lr_ft)->capture_default_str();
  c_trn->add_option("--layers", trn.layers)->capture_default_str();
  c_trn->add_option("--hidden", trn.hidden)->capture_default_str();
  c_trn->add_option("--heads", trn.heads)->capture_default_str();
  c_trn->add_flag("--geometry-edge-features", trn.geometry_edge_features, "Attach IA/ID as edge inputs");
  c_trn->add_option("--jobs", trn.jobs, "Concurrent runs")->capture_default_str();
  c_trn->add_option("--ledger", trn.ledger)->capture_default_str();
  c_trn->add_option("--run-dir", trn.run_dir, "Reports and checkpoints")->capture_default_str();

  EvalArgs evl;
  auto* c_evl = app.add_subcommand("eval", "Score a checkpoint on a graph");
  c_evl->add_option("--checkpoint", evl.checkpoint)->required();
  c_evl->add_option("--graph", evl.graph, "Graph JSON (default: <out>/graph.json)");
  c_evl->add_option("--nodes", evl.nodes)->check(CLI::IsMember({"test", "train", "all"}))->capture_default_str();
  c_evl->add_option("-o,--output", evl.output, "Also write the metrics JSON");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Summarize the results ledger as mean ± std over seeds");
  c_rep->add_option("--ledger", rep.ledger, "Ledger CSV (default: <out>/results.csv)");
  c_rep->add_option("--markdown", rep.markdown)->capture_default_str();
  c_rep->add_option("--csv", rep.csv)->capture_default_str();

  BenchArgs bch;
  auto* c_bch = app.add_subcommand("bench", "Time a forward pass and measure its memory");
  c_bch->add_option("--graph", bch.graph, "Graph JSON (default: <out>/graph.json)");
  c_bch->add_option("--backbone", bch.backbones)->delimiter(',');
  c_bch->add_option("--repeats", bch.repeats)->capture_default_str();
  c_bch->add_option("--layers", bch.layers)->capture_default_str();
  c_bch->add_option("--hidden", bch.hidden)->capture_default_str();
  c_bch->add_option("--heads", bch.heads)->capture_default_str();
  c_bch->add_option("-o,--output", bch.output)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return kExitValidation;
  }

  try {
    if (*c_gen) run_generate(g, gen);
    if (*c_sim) run_simulate(g, sim);
    if (*c_bld) run_build(g, bld);
    if (*c_trn) run_train(g, trn);
    if (*c_evl) run_eval(g, evl);
    if (*c_rep) run_report(g, rep);
    if (*c_bch) run_bench(g, bch);
  } catch (const ValidationError& e) {
    fail_line("validation", e.what());
    return kExitValidation;
  } catch (const ParseError& e) {
    fail_line("validation", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fail_line("runtime", e.what());
    return kExitRuntime;
  }
  return 0;
}
