#pragma once

#include "cellgraph/graph_builder.hpp"
#include "cellgraph/models.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cellgraph::training {

using models::BackboneConfig;
using models::Tensor;

enum class Pretext { none, ia, id };
enum class Split { transductive, inductive };
const char* to_string(Pretext p);
const char* to_string(Split s);
Pretext pretext_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct OptimizerSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const OptimizerSettings&) const = default;
};

struct TrainConfig {
  int n_pt = 200;
  int n_ft = 300;
  double alpha_pct = 2.5;
  OptimizerSettings hp_pt{1e-3};
  OptimizerSettings hp_ft{3e-3};
  Pretext pretext = Pretext::ia;
  Kpi kpi = Kpi::cqi;
  BackboneConfig backbone;
  std::uint64_t seed = 1;
  Split split = Split::transductive;
  /// Ablation: attach IA/ID as extra edge inputs instead of pretext targets.
  bool geometry_edge_features = false;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Per-stage seeds derived from TrainConfig::seed by fixed offsets.
inline std::uint64_t backbone_seed(std::uint64_t seed) { return seed * 1000003ULL + 11; }
inline std::uint64_t pretext_head_seed(std::uint64_t seed) { return seed * 1000003ULL + 23; }
inline std::uint64_t downstream_head_seed(std::uint64_t seed) { return seed * 1000003ULL + 37; }
inline std::uint64_t few_shot_seed(std::uint64_t seed) { return seed * 1000003ULL + 41; }

struct RunReport {
  std::string protocol;  // "pf1" or "pf2"
  TrainConfig config;
  double mse_pct = 0.0;  // on config.kpi
  std::vector<double> pt_loss;
  std::vector<double> ft_loss;
  std::optional<double> gain;
  double wallclock_s = 0.0;
  std::size_t peak_mem_bytes = 0;
  std::size_t ft_labeled_nodes = 0;
  std::size_t eval_nodes = 0;
  /// Label rows read from the evaluation graph before evaluation started (inductive PF1).
  std::size_t target_label_reads_during_training = 0;
  bool used_measurements = false;
  std::string note;
};

/// Per-KPI label matrix with a read counter, so protocols can prove which
/// labels they touched.
class LabelSource {
 public:
  LabelSource(const CellGraph& graph, Kpi kpi);
  Eigen::MatrixXd rows(const std::vector<int>& nodes) const;
  std::size_t reads() const { return reads_; }

 private:
  const Eigen::MatrixXd* labels_;
  mutable std::size_t reads_ = 0;
};

/// Mean over edges of (cos(h_src, h_dst) - target)^2.
Tensor loss_ssl(const Tensor& h, const std::vector<int>& src, const std::vector<int>& dst,
                const Eigen::VectorXd& targets);
/// Mean over labeled nodes and bins of the squared error.
Tensor loss_mse(const Tensor& predictions, const Eigen::MatrixXd& labels);

/// Seeded uniform sample without replacement of max(1, ceil(alpha% |pool|)) nodes from `pool`.
std::vector<int> sample_few_shot(const std::vector<int>& pool, double alpha_pct, std::uint64_t seed);

/// Backbone + downstream head trained for one KPI; the checkpointable artifact.
struct TrainedModel {
  models::Backbone backbone;
  models::ReadoutHead head;
  Kpi kpi = Kpi::cqi;
  bool geometry_edge_features = false;

  Tensor predict(const models::GraphInput& input) const;
};

/// mse_pct of `model` on `nodes` of `graph`.
double evaluate(const TrainedModel& model, const CellGraph& graph, const std::vector<int>& nodes);

std::string checkpoint_json(const TrainedModel& model);
TrainedModel model_from_checkpoint(const std::string& text);

/// Fully supervised training of backbone + downstream head on the train mask;
/// transductive evaluation on the test mask.
RunReport run_pf1(const CellGraph& graph, const TrainConfig& config, std::optional<TrainedModel>* model_out = nullptr);
/// Train on `source`, evaluate on every node of `target` using the source's
/// standardization statistics.
RunReport run_pf1_inductive(const CellGraph& source, const CellGraph& target, const TrainConfig& config,
                            std::optional<TrainedModel>* model_out = nullptr);

/// Observation hooks for the self-supervised protocol.
struct Pf2Trace {
  std::map<std::string, ad::Matrix> backbone_after_pt;
  std::map<std::string, ad::Matrix> backbone_after_ft;
  std::vector<int> few_shot_nodes;
  std::vector<std::string> feature_names;
};

/// Pretext pretraining of [backbone || pretext head], then frozen backbone and
/// few-shot fine-tuning of a fresh downstream head. pretext = none skips
/// pretraining.
RunReport run_pf2(const CellGraph& graph, const TrainConfig& config, std::optional<TrainedModel>* model_out = nullptr,
                  Pf2Trace* trace = nullptr);

/// mse_pct(no pretext) - mse_pct(pretext); throws if the configs differ beyond the pretext.
double gain(const RunReport& with_pretext, const RunReport& without_pretext);

std::string to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);
/// FNV-1a of the canonical config JSON with the seed removed.
std::string config_hash(const TrainConfig& config);
std::string to_json(const RunReport& report);

}  // namespace cellgraph::training
