#include "support.hpp"

#include "cellgraph/experiment.hpp"

#include <doctest.h>

#include <fstream>

using namespace cellgraph;
using namespace cellgraph::experiment;
using doctest::Approx;

namespace {

LedgerRow row(const std::string& pretext, unsigned long long seed, double mse, double alpha = 2.5) {
  LedgerRow r;
  r.config_hash = "00000000deadbeef";
  r.protocol = "pf2";
  r.backbone = "gine";
  r.kpi = "cqi";
  r.alpha_pct = alpha;
  r.pretext = pretext;
  r.seed = seed;
  r.mse_pct = mse;
  r.wallclock_s = 1.5;
  r.peak_mem_bytes = 1024;
  return r;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("mean and deviation formatting") {
  CHECK(format_mean_std(7.54, 1.26) == "7.5 \xC2\xB1 1.3%");
  CHECK(format_mean_std(10.0, 0.0) == "10.0 \xC2\xB1 0.0%");
}

TEST_CASE("ledger lines round-trip") {
  LedgerRow r = row("ia", 3, 8.912345678901234);
  r.gain = 0.125;
  const LedgerRow back = parse_csv_line(to_csv_line(r));
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.mse_pct == r.mse_pct);
  CHECK(back.gain == r.gain);
  CHECK(back.seed == 3);
  CHECK(back.peak_mem_bytes == 1024);
  const LedgerRow no_gain = parse_csv_line(to_csv_line(row("none", 1, 9.0)));
  CHECK_FALSE(no_gain.gain.has_value());
  CHECK_THROWS_AS(parse_csv_line("a,b,c"), ParseError);
  CHECK_THROWS_AS(parse_csv_line("h,pf2,gine,cqi,x,ia,1,2,,1,1"), ParseError);
}

TEST_CASE("ledger files keep one header") {
  const auto dir = testutil::scratch_dir("ledger");
  const auto path = dir / "results.csv";
  training::RunReport report;
  report.protocol = "pf2";
  report.mse_pct = 4.0;
  append_ledger(path, report);
  report.config.seed = 2;
  append_ledger(path, report);
  const auto rows = read_ledger(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].seed == 2);
  CHECK(rows[0].pretext == "ia");
  std::ofstream(dir / "bad.csv") << "nope\n";
  CHECK_THROWS_AS(read_ledger(dir / "bad.csv"), ParseError);
  CHECK_THROWS_AS(read_ledger(dir / "missing.csv"), ParseError);
}

TEST_CASE("summaries use the sample deviation and attach gains") {
  const std::vector<LedgerRow> rows{row("none", 1, 9.0), row("none", 2, 10.0), row("none", 3, 11.0),
                                    row("ia", 1, 8.0),   row("ia", 2, 9.0),    row("ia", 3, 10.0),
                                    row("ia", 1, 5.0, 10.0)};
  const auto s = summarize(rows);
  REQUIRE(s.size() == 3);
  CHECK(s[0].pretext == "none");
  CHECK(s[0].runs == 3);
  CHECK(s[0].mean == Approx(10.0));
  CHECK(s[0].std == Approx(1.0));
  CHECK_FALSE(s[0].gain.has_value());
  CHECK(*s[1].gain == Approx(1.0));
  CHECK(s[2].std == 0.0);
  CHECK_FALSE(s[2].gain.has_value());  // no baseline at alpha 10
  const std::string md = summary_markdown(s);
  CHECK(md.find("| pf2 | gine | cqi | 2.5% | ia | 3 | 9.0 \xC2\xB1 1.0% | +1.0% |") != std::string::npos);
  const std::string csv = summary_csv(s);
  CHECK(csv.rfind("protocol,backbone,kpi,alpha_pct,pretext,runs,mse_pct,mean,std,gain\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("bench reports time and memory") {
  const Scenario s = load_scenario(testutil::data_dir() / "scenario57.json");
  const CellGraph g = build_graph(s, simulate(s), {});
  CHECK(search_space_per_result(g) == Approx(static_cast<double>(g.num_edges()) / g.num_nodes() + 1.0));
  models::BackboneConfig c;
  c.kind = models::BackboneKind::wcgcn;
  const BenchResult b = bench(g, c, 2);
  CHECK(b.nodes == 57);
  CHECK(b.forward_s > 0.0);
  CHECK(b.activation_bytes > 0);
  const models::Backbone reference(c, g.node_features.cols(), kEdgeFeatureDim, 1);
  CHECK(b.parameter_bytes > reference.params().bytes());
  CHECK(b.total_bytes() == b.parameter_bytes + b.activation_bytes);
  const std::string j = to_json(b);
  CHECK(j.find("\"schema_version\": 1") != std::string::npos);
  CHECK(j.find("\"backbone\": \"wcgcn\"") != std::string::npos);
}

}  // TEST_SUITE
