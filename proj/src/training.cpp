#include "cellgraph/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>

namespace cellgraph::training {

using ojson = nlohmann::ordered_json;
using models::Backbone;
using models::GraphInput;
using models::HeadKind;
using models::ReadoutHead;

const char* to_string(Pretext p) {
  switch (p) {
    case Pretext::none: return "none";
    case Pretext::ia: return "ia";
    case Pretext::id: return "id";
  }
  return "?";
}

const char* to_string(Split s) { return s == Split::transductive ? "transductive" : "inductive"; }

Pretext pretext_from_string(const std::string& s) {
  if (s == "none") return Pretext::none;
  if (s == "ia") return Pretext::ia;
  if (s == "id") return Pretext::id;
  throw ValidationError("unknown pretext '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "transductive") return Split::transductive;
  if (s == "inductive") return Split::inductive;
  throw ValidationError("unknown split '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(alpha_pct > 0.0 && alpha_pct <= 100.0)) throw ValidationError("config: alpha_pct must be in (0,100]");
  if (n_pt < 1 || n_ft < 1) throw ValidationError("config: n_pt and n_ft must be >= 1");
  if (!(hp_pt.lr > 0.0) || !(hp_ft.lr > 0.0)) throw ValidationError("config: learning rates must be positive");
  if (kpi == Kpi::rssi) throw ValidationError("config: kpi must be sinr or cqi");
  backbone.validate();
}

LabelSource::LabelSource(const CellGraph& graph, Kpi kpi) {
  auto it = graph.labels.find(kpi);
  if (it == graph.labels.end()) throw ValidationError(std::string("graph has no labels for ") + to_string(kpi));
  labels_ = &it->second;
}

Eigen::MatrixXd LabelSource::rows(const std::vector<int>& nodes) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(nodes.size()), labels_->cols());
  for (std::size_t k = 0; k < nodes.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = labels_->row(nodes[k]);
  reads_ += nodes.size();
  return out;
}

Tensor loss_ssl(const Tensor& h, const std::vector<int>& src, const std::vector<int>& dst,
                const Eigen::VectorXd& targets) {
  if (src.empty()) throw ValidationError("loss_ssl: empty edge set");
  if (src.size() != dst.size() || static_cast<Eigen::Index>(src.size()) != targets.size())
    throw ValidationError("loss_ssl: edge lists and targets disagree");
  const Tensor cos = ad::cosine_similarity(ad::gather_rows(h, src), ad::gather_rows(h, dst));
  return ad::mse(cos, Tensor::constant(targets));
}

Tensor loss_mse(const Tensor& predictions, const Eigen::MatrixXd& labels) {
  if (labels.rows() == 0) throw ValidationError("loss_mse: empty label set");
  return ad::mse(predictions, Tensor::constant(labels));
}

std::vector<int> sample_few_shot(const std::vector<int>& pool, double alpha_pct, std::uint64_t seed) {
  if (pool.empty()) throw ValidationError("sample_few_shot: empty node pool");
  const double exact = alpha_pct * static_cast<double>(pool.size()) / 100.0;
  auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(exact - 1e-9)));
  k = std::min(k, pool.size());
  std::vector<int> shuffled = pool;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  shuffled.resize(k);
  std::sort(shuffled.begin(), shuffled.end());
  return shuffled;
}

Tensor TrainedModel::predict(const GraphInput& input) const { return head.forward(backbone.forward(input)); }

double evaluate(const TrainedModel& model, const CellGraph& graph, const std::vector<int>& nodes) {
  if (nodes.empty()) throw ValidationError("evaluate: empty node set");
  ad::NoGradGuard no_grad;
  const GraphInput input = models::make_input(graph, model.geometry_edge_features);
  const Tensor pred = ad::gather_rows(model.predict(input), nodes);
  const LabelSource labels(graph, model.kpi);
  return 100.0 * loss_mse(pred, labels.rows(nodes)).item();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> complement(int n, const std::vector<int>& excluded) {
  std::vector<char> skip(static_cast<std::size_t>(n), 0);
  for (int v : excluded) skip[static_cast<std::size_t>(v)] = 1;
  std::vector<int> out;
  for (int v = 0; v < n; ++v)
    if (!skip[static_cast<std::size_t>(v)]) out.push_back(v);
  return out;
}

struct Supervised {
  Backbone backbone;
  ReadoutHead head;
  std::vector<double> losses;
};

Supervised train_supervised(const CellGraph& graph, const TrainConfig& config, const std::vector<int>& nodes,
                            const LabelSource& labels) {
  const GraphInput input = models::make_input(graph, config.geometry_edge_features);
  Supervised s{Backbone(config.backbone, input.node_dim(), input.edge_dim(), backbone_seed(config.seed)),
               ReadoutHead(HeadKind::downstream, config.backbone.hidden, downstream_head_seed(config.seed), "ft"),
               {}};
  const Eigen::MatrixXd z = labels.rows(nodes);
  ad::ParamStore store = ad::ParamStore::concat(s.backbone.params(), s.head.params());
  ad::Adam opt(config.hp_ft.lr, config.hp_ft.beta1, config.hp_ft.beta2, config.hp_ft.eps);
  for (int epoch = 0; epoch < config.n_ft; ++epoch) {
    store.zero_grad();
    const Tensor pred = ad::gather_rows(s.head.forward(s.backbone.forward(input)), nodes);
    const Tensor loss = loss_mse(pred, z);
    loss.backward();
    opt.step(store);
    s.losses.push_back(loss.item());
  }
  return s;
}

}  // namespace

RunReport run_pf1(const CellGraph& graph, const TrainConfig& config, std::optional<TrainedModel>* model_out) {
  config.validate();
  const auto t0 = Clock::now();
  ad::memory::reset_peak();
  RunReport r;
  r.protocol = "pf1";
  r.config = config;
  r.config.split = Split::transductive;
  r.used_measurements = graph.includes_m;
  if (!graph.includes_m) r.note = "trained without measurement features";

  const LabelSource labels(graph, config.kpi);
  Supervised s = train_supervised(graph, config, graph.masks.train, labels);
  r.ft_loss = std::move(s.losses);
  TrainedModel model{std::move(s.backbone), std::move(s.head), config.kpi, config.geometry_edge_features};
  r.eval_nodes = graph.masks.test.size();
  r.mse_pct = evaluate(model, graph, graph.masks.test);
  r.ft_labeled_nodes = graph.masks.train.size();
  r.wallclock_s = seconds_since(t0);
  r.peak_mem_bytes = ad::memory::peak_bytes();
  if (model_out) model_out->emplace(std::move(model));
  return r;
}

RunReport run_pf1_inductive(const CellGraph& source, const CellGraph& target, const TrainConfig& config,
                            std::optional<TrainedModel>* model_out) {
  config.validate();
  if (source.feature_names != target.feature_names)
    throw ValidationError("inductive: source and target graphs have different node features");
  const auto t0 = Clock::now();
  ad::memory::reset_peak();
  RunReport r;
  r.protocol = "pf1";
  r.config = config;
  r.config.split = Split::inductive;
  r.used_measurements = source.includes_m;

  const CellGraph transferred = with_statistics(target, source.feature_mean, source.feature_std);
  const LabelSource target_labels(transferred, config.kpi);
  const LabelSource source_labels(source, config.kpi);
  Supervised s = train_supervised(source, config, source.masks.train, source_labels);
  r.target_label_reads_during_training = target_labels.reads();
  r.ft_loss = std::move(s.losses);
  TrainedModel model{std::move(s.backbone), std::move(s.head), config.kpi, config.geometry_edge_features};

  std::vector<int> all(static_cast<std::size_t>(transferred.num_nodes()));
  for (int v = 0; v < transferred.num_nodes(); ++v) all[static_cast<std::size_t>(v)] = v;
  r.eval_nodes = all.size();
  r.mse_pct = evaluate(model, transferred, all);
  r.ft_labeled_nodes = source.masks.train.size();
  r.wallclock_s = seconds_since(t0);
  r.peak_mem_bytes = ad::memory::peak_bytes();
  if (model_out) model_out->emplace(std::move(model));
  return r;
}

RunReport run_pf2(const CellGraph& graph, const TrainConfig& config, std::optional<TrainedModel>* model_out,
                  Pf2Trace* trace) {
  config.validate();
  if (graph.includes_m || graph.has_measurement_columns())
    throw ValidationError("pf2: graph must be built without measurement features");
  const auto t0 = Clock::now();
  ad::memory::reset_peak();
  RunReport r;
  r.protocol = "pf2";
  r.config = config;
  r.config.split = Split::transductive;

  const GraphInput input = models::make_input(graph, config.geometry_edge_features);
  Backbone backbone(config.backbone, input.node_dim(), input.edge_dim(), backbone_seed(config.seed));

  if (config.pretext != Pretext::none) {
    const Eigen::VectorXd targets = graph.pretext_targets(to_string(config.pretext));
    if (targets.size() == 0) throw ValidationError("pf2: graph has no edges to pretrain on");
    ReadoutHead pretext_head(HeadKind::pretext, config.backbone.hidden, pretext_head_seed(config.seed), "pt");
    ad::ParamStore store = ad::ParamStore::concat(backbone.params(), pretext_head.params());
    ad::Adam opt(config.hp_pt.lr, config.hp_pt.beta1, config.hp_pt.beta2, config.hp_pt.eps);
    for (int epoch = 0; epoch < config.n_pt; ++epoch) {
      store.zero_grad();
      const Tensor h = pretext_head.forward(backbone.forward(input));
      const Tensor loss = loss_ssl(h, input.src, input.dst, targets);
      loss.backward();
      opt.step(store);
      r.pt_loss.push_back(loss.item());
    }
  }
  backbone.params().freeze();
  if (trace) {
    trace->backbone_after_pt = backbone.params().snapshot();
    trace->feature_names = graph.feature_names;
  }

  const std::vector<int> few_shot = sample_few_shot(graph.masks.train, config.alpha_pct, few_shot_seed(config.seed));
  const LabelSource labels(graph, config.kpi);
  const Eigen::MatrixXd z = labels.rows(few_shot);

  // The backbone is frozen, so its embeddings are constant across FT epochs.
  Tensor embeddings;
  {
    ad::NoGradGuard no_grad;
    embeddings = backbone.forward(input);
  }
  const Tensor h_few = ad::gather_rows(embeddings, few_shot);
  ReadoutHead head(HeadKind::downstream, config.backbone.hidden, downstream_head_seed(config.seed), "ft");
  ad::Adam opt(config.hp_ft.lr, config.hp_ft.beta1, config.hp_ft.beta2, config.hp_ft.eps);
  std::set<int> touched;
  for (int epoch = 0; epoch < config.n_ft; ++epoch) {
    head.params().zero_grad();
    const Tensor pred = head.forward(h_few);
    const Tensor loss = loss_mse(pred, z);
    loss.backward();
    opt.step(head.params());
    touched.insert(few_shot.begin(), few_shot.end());
    r.ft_loss.push_back(loss.item());
  }
  r.ft_labeled_nodes = touched.size();

  TrainedModel model{std::move(backbone), std::move(head), config.kpi, config.geometry_edge_features};
  const std::vector<int> eval_nodes = complement(graph.num_nodes(), few_shot);
  r.eval_nodes = eval_nodes.size();
  if (!eval_nodes.empty()) r.mse_pct = evaluate(model, graph, eval_nodes);
  if (trace) {
    trace->backbone_after_ft = model.backbone.params().snapshot();
    trace->few_shot_nodes = few_shot;
  }
  r.wallclock_s = seconds_since(t0);
  r.peak_mem_bytes = ad::memory::peak_bytes();
  if (model_out) model_out->emplace(std::move(model));
  return r;
}

double gain(const RunReport& with_pretext, const RunReport& without_pretext) {
  TrainConfig a = with_pretext.config;
  TrainConfig b = without_pretext.config;
  a.pretext = b.pretext = Pretext::none;
  if (!(a == b) || with_pretext.protocol != without_pretext.protocol)
    throw ValidationError("gain: reports differ beyond the pretext task");
  return without_pretext.mse_pct - with_pretext.mse_pct;
}

namespace {

ojson config_json(const TrainConfig& c) {
  auto hp = [](const OptimizerSettings& s) {
    return ojson{{"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}};
  };
  return ojson{{"n_pt", c.n_pt},
               {"n_ft", c.n_ft},
               {"alpha_pct", c.alpha_pct},
               {"hp_pt", hp(c.hp_pt)},
               {"hp_ft", hp(c.hp_ft)},
               {"pretext", to_string(c.pretext)},
               {"kpi", cellgraph::to_string(c.kpi)},
               {"backbone",
                {{"kind", models::to_string(c.backbone.kind)},
                 {"layers", c.backbone.layers},
                 {"hidden", c.backbone.hidden},
                 {"epsilon", c.backbone.epsilon},
                 {"gat_heads", c.backbone.gat_heads}}},
               {"seed", c.seed},
               {"split", to_string(c.split)},
               {"geometry_edge_features", c.geometry_edge_features}};
}

BackboneConfig backbone_from(const ojson& j) {
  BackboneConfig b;
  b.kind = models::backbone_kind_from_string(j.at("kind").get<std::string>());
  b.layers = j.at("layers").get<int>();
  b.hidden = j.at("hidden").get<int>();
  b.epsilon = j.at("epsilon").get<double>();
  b.gat_heads = j.at("gat_heads").get<int>();
  return b;
}

}  // namespace

std::string to_json(const TrainConfig& config) { return config_json(config).dump(); }

TrainConfig train_config_from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    TrainConfig c;
    auto hp = [](const ojson& s) {
      return OptimizerSettings{s.at("lr").get<double>(), s.at("beta1").get<double>(), s.at("beta2").get<double>(),
                               s.at("eps").get<double>()};
    };
    c.n_pt = j.at("n_pt").get<int>();
    c.n_ft = j.at("n_ft").get<int>();
    c.alpha_pct = j.at("alpha_pct").get<double>();
    c.hp_pt = hp(j.at("hp_pt"));
    c.hp_ft = hp(j.at("hp_ft"));
    c.pretext = pretext_from_string(j.at("pretext").get<std::string>());
    c.kpi = kpi_from_string(j.at("kpi").get<std::string>());
    c.backbone = backbone_from(j.at("backbone"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.split = split_from_string(j.at("split").get<std::string>());
    c.geometry_edge_features = j.at("geometry_edge_features").get<bool>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
}

std::string config_hash(const TrainConfig& config) {
  TrainConfig c = config;
  c.seed = 0;
  const std::string text = to_json(c);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string to_json(const RunReport& r) {
  ojson j;
  j["schema_version"] = 1;
  j["protocol"] = r.protocol;
  j["config"] = config_json(r.config);
  j["config_hash"] = config_hash(r.config);
  j["kpi"] = cellgraph::to_string(r.config.kpi);
  j["mse_pct"] = r.mse_pct;
  j["gain"] = r.gain ? ojson(*r.gain) : ojson(nullptr);
  j["pt_loss"] = r.pt_loss;
  j["ft_loss"] = r.ft_loss;
  j["ft_labeled_nodes"] = r.ft_labeled_nodes;
  j["eval_nodes"] = r.eval_nodes;
  j["target_label_reads_during_training"] = r.target_label_reads_during_training;
  j["used_measurements"] = r.used_measurements;
  j["wallclock_s"] = r.wallclock_s;
  j["peak_mem_bytes"] = r.peak_mem_bytes;
  j["note"] = r.note;
  return j.dump(2) + "\n";
}

std::string checkpoint_json(const TrainedModel& model) {
  const ad::ParamStore store = ad::ParamStore::concat(model.backbone.params(), model.head.params());
  ojson j;
  j["format_version"] = ad::kCheckpointFormatVersion;
  const auto& b = model.backbone.config();
  j["backbone"] = {{"kind", models::to_string(b.kind)},
                   {"layers", b.layers},
                   {"hidden", b.hidden},
                   {"epsilon", b.epsilon},
                   {"gat_heads", b.gat_heads}};
  j["node_dim"] = model.backbone.node_dim();
  j["edge_dim"] = model.backbone.edge_dim();
  j["kpi"] = cellgraph::to_string(model.kpi);
  j["geometry_edge_features"] = model.geometry_edge_features;
  j["store"] = ojson::parse(ad::to_json(store));
  return j.dump() + "\n";
}

TrainedModel model_from_checkpoint(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  if (!j.contains("format_version") || j["format_version"] != ad::kCheckpointFormatVersion)
    throw ParseError("checkpoint: format_version mismatch");
  try {
    const BackboneConfig cfg = backbone_from(j.at("backbone"));
    TrainedModel m{Backbone(cfg, j.at("node_dim").get<int>(), j.at("edge_dim").get<int>(), 0),
                   ReadoutHead(HeadKind::downstream, cfg.hidden, 0, "ft"),
                   kpi_from_string(j.at("kpi").get<std::string>()), j.at("geometry_edge_features").get<bool>()};
    ad::ParamStore store = ad::ParamStore::concat(m.backbone.params(), m.head.params());
    ad::load_json_into(store, j.at("store").dump());
    // Trainable flags live per store; carry them back to the sources.
    for (ad::ParamStore* part : {&m.backbone.params(), &m.head.params()})
      for (const auto& [name, entry] : store)
        if (part->contains(name)) part->set_trainable(name, entry.trainable);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw ParseError(e.what());
  }
}

}  // namespace cellgraph::training
