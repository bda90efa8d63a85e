#include "cellgraph/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace cellgraph::experiment {

LedgerRow ledger_row(const training::RunReport& r) {
  LedgerRow row;
  row.config_hash = training::config_hash(r.config);
  row.protocol = r.protocol;
  row.backbone = models::to_string(r.config.backbone.kind);
  row.kpi = to_string(r.config.kpi);
  row.alpha_pct = r.protocol == "pf2" ? r.config.alpha_pct : 100.0 * kTrainFraction;
  row.pretext = r.protocol == "pf2" ? training::to_string(r.config.pretext) : "none";
  row.seed = r.config.seed;
  row.mse_pct = r.mse_pct;
  row.gain = r.gain;
  row.wallclock_s = r.wallclock_s;
  row.peak_mem_bytes = r.peak_mem_bytes;
  return row;
}

std::string ledger_header() {
  return "config_hash,protocol,backbone,kpi,alpha_pct,pretext,seed,mse_pct,gain,wallclock_s,peak_mem_bytes";
}

std::string to_csv_line(const LedgerRow& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.config_hash << ',' << r.protocol << ',' << r.backbone << ',' << r.kpi << ',' << r.alpha_pct << ','
     << r.pretext << ',' << r.seed << ',' << r.mse_pct << ',';
  if (r.gain) os << *r.gain;
  os << ',' << r.wallclock_s << ',' << r.peak_mem_bytes;
  return os.str();
}

LedgerRow parse_csv_line(const std::string& line) {
  std::vector<std::string> f;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) f.push_back(field);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 11) throw ParseError("results ledger: expected 11 fields, got " + std::to_string(f.size()));
  try {
    LedgerRow r;
    r.config_hash = f[0];
    r.protocol = f[1];
    r.backbone = f[2];
    r.kpi = f[3];
    r.alpha_pct = std::stod(f[4]);
    r.pretext = f[5];
    r.seed = std::stoull(f[6]);
    r.mse_pct = std::stod(f[7]);
    if (!f[8].empty()) r.gain = std::stod(f[8]);
    r.wallclock_s = std::stod(f[9]);
    r.peak_mem_bytes = static_cast<std::size_t>(std::stoull(f[10]));
    return r;
  } catch (const std::exception&) {
    throw ParseError("results ledger: bad number in line '" + line + "'");
  }
}

void append_ledger(const std::filesystem::path& path, const training::RunReport& report) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  if (fresh) out << ledger_header() << '\n';
  out << to_csv_line(ledger_row(report)) << '\n';
}

std::vector<LedgerRow> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != ledger_header()) throw ParseError("results ledger: unexpected header");
  std::vector<LedgerRow> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_csv_line(line));
  return rows;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f \xC2\xB1 %.1f%%", mean, std);
  return buf;
}

std::vector<SummaryRow> summarize(const std::vector<LedgerRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, double, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> groups;
  for (const LedgerRow& r : rows) {
    Key k{r.protocol, r.backbone, r.kpi, r.alpha_pct, r.pretext};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(r.mse_pct);
  }
  std::vector<SummaryRow> out;
  for (const Key& k : order) {
    const auto& v = groups[k];
    SummaryRow s;
    std::tie(s.protocol, s.backbone, s.kpi, s.alpha_pct, s.pretext) = k;
    s.runs = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    out.push_back(s);
  }
  for (SummaryRow& s : out) {
    if (s.protocol != "pf2" || s.pretext == "none") continue;
    for (const SummaryRow& base : out)
      if (base.protocol == s.protocol && base.backbone == s.backbone && base.kpi == s.kpi &&
          base.alpha_pct == s.alpha_pct && base.pretext == "none")
        s.gain = base.mean - s.mean;
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "protocol,backbone,kpi,alpha_pct,pretext,runs,mse_pct,mean,std,gain\n";
  for (const SummaryRow& s : rows) {
    os << s.protocol << ',' << s.backbone << ',' << s.kpi << ',' << s.alpha_pct << ',' << s.pretext << ','
       << s.runs << ',' << format_mean_std(s.mean, s.std) << ',' << s.mean << ',' << s.std << ',';
    if (s.gain) os << *s.gain;
    os << '\n';
  }
  return os.str();
}

std::string summary_markdown(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "| Protocol | Model | KPI | alpha% | Pretext | Runs | MSE (%) | Gain |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  for (const SummaryRow& s : rows) {
    char alpha[32];
    std::snprintf(alpha, sizeof alpha, "%g%%", s.alpha_pct);
    std::string g = "";
    if (s.gain) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%+.1f%%", *s.gain);
      g = buf;
    }
    os << "| " << s.protocol << " | " << s.backbone << " | " << s.kpi << " | " << alpha << " | " << s.pretext
       << " | " << s.runs << " | " << format_mean_std(s.mean, s.std) << " | " << g << " |\n";
  }
  return os.str();
}

double search_space_per_result(const CellGraph& graph) {
  if (graph.num_nodes() == 0) return 0.0;
  return static_cast<double>(graph.num_edges()) / graph.num_nodes() + 1.0;
}

BenchResult bench(const CellGraph& graph, const models::BackboneConfig& config, int repeats, std::uint64_t seed) {
  const models::GraphInput input = models::make_input(graph);
  const models::Backbone backbone(config, input.node_dim(), input.edge_dim(), seed);
  const models::ReadoutHead head(models::HeadKind::downstream, config.hidden, seed + 1, "ft");

  BenchResult r;
  r.backbone = models::to_string(config.kind);
  r.nodes = graph.num_nodes();
  r.edges = graph.num_edges();
  r.search_space = search_space_per_result(graph);
  r.parameter_bytes = backbone.params().bytes() + head.params().bytes();
  r.forward_s = 1e300;
  ad::NoGradGuard no_grad;
  for (int k = 0; k < std::max(1, repeats); ++k) {
    const std::size_t baseline = ad::memory::live_bytes();
    ad::memory::reset_peak();
    const auto t0 = std::chrono::steady_clock::now();
    const models::Tensor out = head.forward(backbone.forward(input));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.forward_s = std::min(r.forward_s, dt);
    r.activation_bytes = std::max(r.activation_bytes, ad::memory::peak_bytes() - baseline);
  }
  return r;
}

std::string to_json(const BenchResult& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["backbone"] = r.backbone;
  j["nodes"] = r.nodes;
  j["edges"] = r.edges;
  j["forward_s"] = r.forward_s;
  j["parameter_bytes"] = r.parameter_bytes;
  j["activation_bytes"] = r.activation_bytes;
  j["total_bytes"] = r.total_bytes();
  j["search_space_per_result"] = r.search_space;
  return j.dump(2) + "\n";
}

}  // namespace cellgraph::experiment
