#include "cellgraph/models.hpp"

#include <cmath>
#include <stdexcept>

namespace cellgraph::models {

const char* to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::mlp: return "mlp";
    case BackboneKind::gat: return "gat";
    case BackboneKind::gine: return "gine";
    case BackboneKind::wcgcn: return "wcgcn";
  }
  return "?";
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "mlp") return BackboneKind::mlp;
  if (s == "gat") return BackboneKind::gat;
  if (s == "gine") return BackboneKind::gine;
  if (s == "wcgcn") return BackboneKind::wcgcn;
  throw ValidationError("unknown backbone '" + s + "'");
}

void BackboneConfig::validate() const {
  if (layers < 1) throw ValidationError("backbone: layers must be >= 1");
  if (hidden < 4) throw ValidationError("backbone: hidden must be >= 4");
  if (kind == BackboneKind::gat && (gat_heads < 1 || hidden % gat_heads != 0))
    throw ValidationError("backbone: gat_heads must divide hidden");
}

GraphInput make_input(const Eigen::MatrixXd& x, std::vector<int> src, std::vector<int> dst,
                      const Eigen::MatrixXd& edge_attr) {
  if (src.size() != dst.size() || static_cast<Eigen::Index>(src.size()) != edge_attr.rows())
    throw ValidationError("make_input: edge lists and attributes disagree");
  GraphInput g;
  g.num_nodes = static_cast<int>(x.rows());
  g.x = Tensor::constant(x);
  g.edge_attr = Tensor::constant(edge_attr);
  g.src_loop = src;
  g.dst_loop = dst;
  Eigen::MatrixXd loop_attr = Eigen::MatrixXd::Zero(edge_attr.rows() + x.rows(), edge_attr.cols());
  loop_attr.topRows(edge_attr.rows()) = edge_attr;
  for (int v = 0; v < g.num_nodes; ++v) {
    g.src_loop.push_back(v);
    g.dst_loop.push_back(v);
  }
  g.edge_attr_loop = Tensor::constant(std::move(loop_attr));
  g.src = std::move(src);
  g.dst = std::move(dst);
  return g;
}

GraphInput make_input(const CellGraph& graph, bool geometry_edge_features) {
  return make_input(graph.node_features, graph.sources(), graph.destinations(),
                    graph.edge_features(geometry_edge_features));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ad::matmul(x, w);
  return b.defined() ? ad::add_rowwise(y, b) : y;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng, bool bias) {
  Linear l;
  l.w = store.add_glorot(name + ".w", in, out, rng);
  // Fan-in uniform bias: an all-zero bias lets a node whose hidden units are
  // all inactive produce an exactly zero row, where row normalization is singular.
  if (bias) l.b = store.add_uniform(name + ".b", 1, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  return l;
}

Tensor gine_layer(const GineLayer& layer, const Tensor& h, const GraphInput& g) {
  // One statement per op so that, without a tape, each E x d temporary is
  // released before the next one is allocated.
  Tensor aggregated;
  {
    Tensor messages = layer.edge_lift(g.edge_attr);
    messages = ad::gather_rows(h, g.src) + messages;
    messages = ad::relu(messages);
    aggregated = ad::segment_sum(messages, g.dst, g.num_nodes);
  }
  Tensor combined = h + ad::mul_scalar(h, layer.epsilon) + aggregated;
  return layer.mlp_out(ad::relu(layer.mlp_in(combined)));
}

Tensor wcgcn_layer(const WcgcnLayer& layer, const Tensor& h, const GraphInput& g) {
  Tensor pooled;
  {
    Tensor messages = ad::concat_cols({ad::gather_rows(h, g.src), g.edge_attr});
    messages = layer.message(messages);
    messages = ad::relu(messages);
    pooled = ad::segment_max(messages, g.dst, g.num_nodes);
  }
  return layer.update(ad::concat_cols({h, pooled}));
}

Tensor gat_attention(const GatHead& head, const Tensor& h, const GraphInput& g) {
  const Tensor z = ad::matmul(h, head.w);
  const Tensor s_src = ad::gather_rows(ad::matmul(z, head.a_src), g.src_loop);
  const Tensor s_dst = ad::gather_rows(ad::matmul(z, head.a_dst), g.dst_loop);
  const Tensor s_edge = ad::matmul(ad::matmul(g.edge_attr_loop, head.w_edge), head.a_edge);
  const Tensor scores = ad::leaky_relu(s_src + s_dst + s_edge, 0.2);
  return ad::segment_softmax(scores, g.dst_loop, g.num_nodes);
}

Tensor gat_layer(const GatLayer& layer, const Tensor& h, const GraphInput& g) {
  std::vector<Tensor> outs;
  outs.reserve(layer.heads.size());
  for (const GatHead& head : layer.heads) {
    const Tensor alpha = gat_attention(head, h, g);
    const Tensor z = ad::matmul(h, head.w);
    outs.push_back(ad::segment_sum(ad::mul_colwise(ad::gather_rows(z, g.src_loop), alpha), g.dst_loop, g.num_nodes));
  }
  return outs.size() == 1 ? outs.front() : ad::concat_cols(outs);
}

Tensor mlp_forward(const std::vector<Linear>& layers, const Tensor& x) {
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = layers[l](h);
    if (l + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

Backbone::Backbone(const BackboneConfig& config, int node_dim, int edge_dim, std::uint64_t seed)
    : config_(config), node_dim_(node_dim), edge_dim_(edge_dim) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int hid = config_.hidden;
  for (int l = 0; l < config_.layers; ++l) {
    const int d_in = l == 0 ? node_dim : hid;
    const std::string p = "gnn.l" + std::to_string(l);
    switch (config_.kind) {
      case BackboneKind::mlp:
        mlp_.push_back(Linear::create(params_, p + ".lin", d_in, hid, rng));
        break;
      case BackboneKind::gine: {
        GineLayer layer;
        layer.edge_lift = Linear::create(params_, p + ".edge_lift", edge_dim, d_in, rng);
        layer.epsilon = params_.add(p + ".eps", ad::Matrix::Constant(1, 1, config_.epsilon));
        layer.mlp_in = Linear::create(params_, p + ".mlp_in", d_in, hid, rng);
        layer.mlp_out = Linear::create(params_, p + ".mlp_out", hid, hid, rng);
        gine_.push_back(layer);
        break;
      }
      case BackboneKind::wcgcn: {
        WcgcnLayer layer;
        layer.message = Linear::create(params_, p + ".message", d_in + edge_dim, hid, rng);
        layer.update = Linear::create(params_, p + ".update", d_in + hid, hid, rng);
        wcgcn_.push_back(layer);
        break;
      }
      case BackboneKind::gat: {
        GatLayer layer;
        const int d_head = hid / config_.gat_heads;
        for (int k = 0; k < config_.gat_heads; ++k) {
          const std::string hp = p + ".head" + std::to_string(k);
          GatHead head;
          head.w = params_.add_glorot(hp + ".w", d_in, d_head, rng);
          head.a_src = params_.add_glorot(hp + ".a_src", d_head, 1, rng);
          head.a_dst = params_.add_glorot(hp + ".a_dst", d_head, 1, rng);
          head.w_edge = params_.add_glorot(hp + ".w_edge", edge_dim, d_head, rng);
          head.a_edge = params_.add_glorot(hp + ".a_edge", d_head, 1, rng);
          layer.heads.push_back(head);
        }
        gat_.push_back(std::move(layer));
        break;
      }
    }
  }
}

Tensor Backbone::forward(const GraphInput& g) const {
  if (g.node_dim() != node_dim_ || g.edge_dim() != edge_dim_)
    throw ValidationError("backbone: input width mismatch (node " + std::to_string(g.node_dim()) + " vs " +
                          std::to_string(node_dim_) + ", edge " + std::to_string(g.edge_dim()) + " vs " +
                          std::to_string(edge_dim_) + ")");
  if (config_.kind == BackboneKind::mlp) return ad::l2_normalize_rows(mlp_forward(mlp_, g.x));
  Tensor h = g.x;
  for (int l = 0; l < config_.layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    switch (config_.kind) {
      // Sum aggregation grows activations by roughly the in-degree per layer;
      // unit-norm rows keep deep stacks trainable.
      case BackboneKind::gine: h = ad::l2_normalize_rows(gine_layer(gine_[li], h, g)); break;
      case BackboneKind::wcgcn: h = wcgcn_layer(wcgcn_[li], h, g); break;
      case BackboneKind::gat: h = gat_layer(gat_[li], h, g); break;
      case BackboneKind::mlp: break;
    }
    if (l + 1 < config_.layers) h = ad::relu(h);
  }
  return config_.kind == BackboneKind::gine ? h : ad::l2_normalize_rows(h);
}

ReadoutHead::ReadoutHead(HeadKind kind, int hidden, std::uint64_t seed, const std::string& prefix)
    : kind_(kind), hidden_(hidden) {
  std::mt19937_64 rng(seed);
  first_ = Linear::create(params_, prefix + ".0", hidden, hidden, rng);
  second_ = Linear::create(params_, prefix + ".1", hidden, output_width(), rng);
}

int ReadoutHead::output_width() const { return kind_ == HeadKind::pretext ? hidden_ : kKpiBins; }

Tensor ReadoutHead::forward(const Tensor& h) const {
  const Tensor out = second_(ad::relu(first_(h)));
  return kind_ == HeadKind::pretext ? ad::l2_normalize_rows(out) : ad::softmax_rows(out);
}

Tensor readout(const ReadoutHead& head, const Tensor& h) { return head.forward(h); }

}  // namespace cellgraph::models
