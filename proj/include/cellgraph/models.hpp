#pragma once

#include "cellgraph/graph_builder.hpp"
#include "cellgraph/param_store.hpp"
#include "cellgraph/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cellgraph::models {

using ad::ParamStore;
using ad::Tensor;

enum class BackboneKind { mlp, gat, gine, wcgcn };
const char* to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::gine;
  int layers = 3;
  int hidden = 64;
  double epsilon = 0.0;  // GINE initial epsilon (learnable)
  int gat_heads = 4;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Model-side view of a graph: standardized node features, edge index lists
/// and edge attributes, plus the self-loop augmented lists used by GAT.
struct GraphInput {
  Tensor x;
  std::vector<int> src;
  std::vector<int> dst;
  Tensor edge_attr;
  std::vector<int> src_loop;
  std::vector<int> dst_loop;
  Tensor edge_attr_loop;
  int num_nodes = 0;

  int node_dim() const { return static_cast<int>(x.cols()); }
  int edge_dim() const { return static_cast<int>(edge_attr.cols()); }
};

GraphInput make_input(const Eigen::MatrixXd& x, std::vector<int> src, std::vector<int> dst,
                      const Eigen::MatrixXd& edge_attr);
GraphInput make_input(const CellGraph& graph, bool geometry_edge_features = false);

/// y = x W + b.
struct Linear {
  Tensor w;
  Tensor b;  // undefined when the layer has no bias

  Tensor operator()(const Tensor& x) const;
  static Linear create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                       bool bias = true);
};

struct GineLayer {
  Linear edge_lift;  // edge_dim -> d_in
  Tensor epsilon;    // 1x1
  Linear mlp_in;     // d_in -> hidden
  Linear mlp_out;    // hidden -> hidden
};
/// h_i' = MLP((1 + eps) h_i + sum_{j->i} relu(h_j + lift(e_ji))). Backbone
/// l2-normalizes each layer's output rows.
Tensor gine_layer(const GineLayer& layer, const Tensor& h, const GraphInput& g);

struct WcgcnLayer {
  Linear message;  // d_in + edge_dim -> hidden, followed by relu
  Linear update;   // d_in + hidden -> hidden
};
/// h_i' = update([h_i || max_{j->i} relu(message([h_j || e_ji]))]); empty neighborhoods pool to zero.
Tensor wcgcn_layer(const WcgcnLayer& layer, const Tensor& h, const GraphInput& g);

struct GatHead {
  Tensor w;       // d_in x d_head
  Tensor a_src;   // d_head x 1
  Tensor a_dst;   // d_head x 1
  Tensor w_edge;  // edge_dim x d_head
  Tensor a_edge;  // d_head x 1
};
struct GatLayer {
  std::vector<GatHead> heads;
};
/// Attention coefficients of one head over the self-loop augmented edge list, |E|+|V| x 1.
Tensor gat_attention(const GatHead& head, const Tensor& h, const GraphInput& g);
/// Multi-head attention layer, heads concatenated. Each node attends to itself.
Tensor gat_layer(const GatLayer& layer, const Tensor& h, const GraphInput& g);

/// Message-passing (or node-wise) encoder producing unit-norm per-node embeddings H.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, int node_dim, int edge_dim, std::uint64_t seed);

  Tensor forward(const GraphInput& g) const;

  const BackboneConfig& config() const { return config_; }
  int node_dim() const { return node_dim_; }
  int edge_dim() const { return edge_dim_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Layer access for tests that hand-set weights.
  std::vector<Linear>& mlp_layers() { return mlp_; }
  std::vector<GineLayer>& gine_layers() { return gine_; }
  std::vector<WcgcnLayer>& wcgcn_layers() { return wcgcn_; }
  std::vector<GatLayer>& gat_layers() { return gat_; }

 private:
  BackboneConfig config_;
  int node_dim_;
  int edge_dim_;
  ParamStore params_;
  std::vector<Linear> mlp_;
  std::vector<GineLayer> gine_;
  std::vector<WcgcnLayer> wcgcn_;
  std::vector<GatLayer> gat_;
};

/// Node-wise multilayer perceptron ignoring graph structure.
Tensor mlp_forward(const std::vector<Linear>& layers, const Tensor& x);

enum class HeadKind { pretext, downstream };

/// Two-layer readout. The pretext head outputs unit-norm hidden-width rows,
/// the downstream head a softmax over the four KPI bins.
class ReadoutHead {
 public:
  ReadoutHead(HeadKind kind, int hidden, std::uint64_t seed, const std::string& prefix);

  Tensor forward(const Tensor& h) const;
  HeadKind kind() const { return kind_; }
  int output_width() const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  HeadKind kind_;
  int hidden_;
  ParamStore params_;
  Linear first_;
  Linear second_;
};

inline constexpr int kKpiBins = 4;

Tensor readout(const ReadoutHead& head, const Tensor& h);

}  // namespace cellgraph::models
