#include "support.hpp"

#include "cellgraph/training.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace cellgraph;
using namespace cellgraph::training;
using ad::Matrix;
using doctest::Approx;

namespace {

const Scenario& fixture() {
  static const Scenario s = load_scenario(testutil::data_dir() / "scenario57.json");
  return s;
}

const CellGraph& fixture_graph(bool include_m) {
  static const OracleResult oracle = simulate(fixture());
  static const CellGraph plain = build_graph(fixture(), oracle, {false, 1});
  static const CellGraph with_m = build_graph(fixture(), oracle, {true, 1});
  return include_m ? with_m : plain;
}

TrainConfig small_config(models::BackboneKind kind = models::BackboneKind::gine) {
  TrainConfig c;
  c.backbone.kind = kind;
  c.backbone.layers = 2;
  c.backbone.hidden = 16;
  c.n_pt = 20;
  c.n_ft = 30;
  return c;
}

Tensor rows(const Matrix& m) { return Tensor::constant(m); }

}  // namespace

TEST_SUITE("training") {

TEST_CASE("self-supervised loss examples") {
  const Matrix same = Matrix::Constant(3, 2, 0.6);
  CHECK(loss_ssl(rows(same), {0, 1, 2}, {1, 2, 0}, Eigen::VectorXd::Ones(3)).item() == Approx(0.0));
  const Matrix ortho = (Matrix(2, 2) << 1, 0, 0, 1).finished();
  CHECK(loss_ssl(rows(ortho), {0}, {1}, Eigen::VectorXd::Zero(1)).item() == 0.0);

  std::mt19937_64 rng(12);
  const Matrix h = testutil::random_matrix(4, 3, rng);
  const std::vector<int> src{0, 1, 2, 3, 0}, dst{1, 2, 3, 0, 2};
  const Eigen::VectorXd t = (Eigen::VectorXd(5) << 0.1, 0.9, 0.5, 0.0, 1.0).finished();
  double expected = 0.0;
  for (int k = 0; k < 5; ++k) {
    const auto a = h.row(src[static_cast<std::size_t>(k)]), b = h.row(dst[static_cast<std::size_t>(k)]);
    const double c = a.dot(b) / (a.norm() * b.norm());
    expected += (c - t(k)) * (c - t(k));
  }
  CHECK(loss_ssl(rows(h), src, dst, t).item() == Approx(expected / 5.0).epsilon(1e-12));
  CHECK_THROWS_AS(loss_ssl(rows(h), {}, {}, Eigen::VectorXd()), ValidationError);
}

TEST_CASE("supervised loss examples") {
  const Matrix onehot = (Matrix(1, 4) << 1, 0, 0, 0).finished();
  CHECK(loss_mse(rows(onehot), onehot).item() == 0.0);
  CHECK(loss_mse(rows(onehot), (Matrix(1, 4) << 0, 1, 0, 0).finished()).item() == Approx(0.5));
  CHECK(loss_mse(rows(Matrix::Constant(1, 4, 0.25)), onehot).item() == Approx(0.1875));
  CHECK_THROWS_AS(loss_mse(rows(Matrix::Zero(0, 4)), Matrix::Zero(0, 4)), ValidationError);
}

TEST_CASE("few-shot sampling sizes and determinism") {
  std::vector<int> pool(200);
  for (int v = 0; v < 200; ++v) pool[static_cast<std::size_t>(v)] = 3 * v;
  CHECK(sample_few_shot(pool, 2.5, 1).size() == 5);
  CHECK(sample_few_shot(pool, 10.0, 1).size() == 20);
  CHECK(sample_few_shot(pool, 100.0, 1).size() == 200);
  CHECK(sample_few_shot(pool, 0.01, 1).size() == 1);
  CHECK(sample_few_shot(pool, 2.5, 9) == sample_few_shot(pool, 2.5, 9));
  const auto picked = sample_few_shot(pool, 10.0, 4);
  const std::set<int> unique(picked.begin(), picked.end());
  CHECK(unique.size() == picked.size());
  for (int v : picked) CHECK(v % 3 == 0);
  CHECK_THROWS_AS(sample_few_shot({}, 2.5, 1), ValidationError);
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha_pct = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.alpha_pct = 100.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.n_ft = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.kpi = Kpi::rssi;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(c.n_pt == 200);
  CHECK(TrainConfig{}.n_ft == 300);
  CHECK(TrainConfig{}.hp_ft.lr == 3e-3);
}

TEST_CASE("PF1 training lowers the test error of an MLP") {
  TrainConfig c = small_config(models::BackboneKind::mlp);
  c.n_ft = 1;
  const RunReport untrained = run_pf1(fixture_graph(true), c);
  c.n_ft = 150;
  const RunReport trained = run_pf1(fixture_graph(true), c);
  CHECK(trained.mse_pct < untrained.mse_pct);
  CHECK(trained.ft_loss.back() < trained.ft_loss.front());
  CHECK(trained.used_measurements);
  CHECK(trained.eval_nodes == fixture_graph(true).masks.test.size());
  CHECK(trained.mse_pct >= 0.0);
}

TEST_CASE("inductive PF1 never reads target labels while training") {
  GenerateParams p;
  p.n_sites = 12;
  p.bounds = {0, 0, 8000, 8000};
  p.seed = 77;
  const Scenario other = generate_scenario(p);
  const CellGraph target = build_graph(other, simulate(other), {true, 2});
  TrainConfig c = small_config();
  c.n_ft = 10;
  const RunReport r = run_pf1_inductive(fixture_graph(true), target, c);
  CHECK(r.target_label_reads_during_training == 0);
  CHECK(r.eval_nodes == static_cast<std::size_t>(target.num_nodes()));
  CHECK(r.config.split == Split::inductive);
  CHECK_THROWS_AS(run_pf1_inductive(fixture_graph(true), fixture_graph(false), c), ValidationError);
}

TEST_CASE("PF2 freezes the backbone and spends exactly the label budget") {
  for (double alpha : {2.5, 10.0}) {
    TrainConfig c = small_config();
    c.alpha_pct = alpha;
    Pf2Trace trace;
    const CellGraph& g = fixture_graph(false);
    const RunReport r = run_pf2(g, c, nullptr, &trace);
    CHECK(trace.backbone_after_ft == trace.backbone_after_pt);
    const auto budget = static_cast<std::size_t>(std::max(1.0, std::ceil(alpha / 100.0 * static_cast<double>(g.masks.train.size()))));
    CHECK(r.ft_labeled_nodes == budget);
    CHECK(trace.few_shot_nodes.size() == budget);
    const std::set<int> train(g.masks.train.begin(), g.masks.train.end());
    for (int v : trace.few_shot_nodes) CHECK(train.count(v) == 1);
    CHECK(r.eval_nodes == static_cast<std::size_t>(g.num_nodes()) - budget);
    for (const std::string& f : trace.feature_names) CHECK(f.rfind("m_rssi", 0) != 0);
    CHECK(r.pt_loss.size() == 20);
    CHECK(r.ft_loss.size() == 30);
  }
  CHECK_THROWS_AS(run_pf2(fixture_graph(true), small_config()), ValidationError);
}

TEST_CASE("PF2 without pretext at full budget is supervised readout training") {
  TrainConfig c = small_config();
  c.pretext = Pretext::none;
  c.alpha_pct = 100.0;
  Pf2Trace trace;
  const RunReport r = run_pf2(fixture_graph(false), c, nullptr, &trace);
  CHECK(r.pt_loss.empty());
  CHECK(r.ft_labeled_nodes == fixture_graph(false).masks.train.size());
  CHECK(r.eval_nodes == fixture_graph(false).masks.test.size());
  CHECK(r.ft_loss.back() < r.ft_loss.front());
  // The random backbone is untouched.
  const models::Backbone fresh(c.backbone, fixture_graph(false).node_features.cols(), kEdgeFeatureDim,
                               backbone_seed(c.seed));
  CHECK(fresh.params().snapshot() == trace.backbone_after_ft);
}

TEST_CASE("gain arithmetic") {
  RunReport with, without;
  with.protocol = without.protocol = "pf2";
  with.config.pretext = Pretext::ia;
  without.config.pretext = Pretext::none;
  with.mse_pct = 8.9;
  without.mse_pct = 9.0;
  CHECK(gain(with, without) == Approx(0.1));
  CHECK(gain(without, with) == Approx(-0.1));
  CHECK(gain(with, with) == 0.0);
  RunReport other_seed = without;
  other_seed.config.seed = 2;
  CHECK_THROWS_AS(gain(with, other_seed), ValidationError);
}

TEST_CASE("runs are reproducible") {
  const TrainConfig c = small_config(models::BackboneKind::wcgcn);
  const RunReport a = run_pf2(fixture_graph(false), c), b = run_pf2(fixture_graph(false), c);
  CHECK(a.mse_pct == b.mse_pct);
  CHECK(a.pt_loss == b.pt_loss);
  CHECK(a.ft_loss == b.ft_loss);
  TrainConfig other = c;
  other.seed = 2;
  CHECK(run_pf2(fixture_graph(false), other).mse_pct != a.mse_pct);
}

TEST_CASE("config JSON and hash") {
  TrainConfig c = small_config(models::BackboneKind::gat);
  c.alpha_pct = 10.0;
  c.seed = 5;
  c.hp_ft.lr = 0.004;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(back == c);
  TrainConfig reseeded = c;
  reseeded.seed = 6;
  CHECK(config_hash(reseeded) == config_hash(c));
  TrainConfig changed = c;
  changed.alpha_pct = 2.5;
  CHECK(config_hash(changed) != config_hash(c));
  CHECK(config_hash(c).size() == 16);
  CHECK_THROWS_AS(train_config_from_json("{"), ParseError);
}

TEST_CASE("checkpoints reproduce predictions exactly") {
  std::optional<TrainedModel> model;
  const RunReport r = run_pf2(fixture_graph(false), small_config(models::BackboneKind::gat), &model);
  REQUIRE(model.has_value());
  const std::string text = checkpoint_json(*model);
  const TrainedModel back = model_from_checkpoint(text);
  const models::GraphInput input = models::make_input(fixture_graph(false));
  CHECK(back.predict(input).value() == model->predict(input).value());
  CHECK(checkpoint_json(back) == text);
  CHECK(evaluate(back, fixture_graph(false), fixture_graph(false).masks.test) >= 0.0);
  CHECK(r.peak_mem_bytes > 0);
  CHECK_THROWS_AS(model_from_checkpoint("[]"), ParseError);
}

TEST_CASE("run reports serialize") {
  const RunReport r = run_pf2(fixture_graph(false), small_config());
  const std::string j = to_json(r);
  CHECK(j.find("\"schema_version\"") != std::string::npos);
  CHECK(j.find("\"mse_pct\"") != std::string::npos);
  CHECK(j.find("\"pf2\"") != std::string::npos);
}

}  // TEST_SUITE
