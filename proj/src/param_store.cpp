#include "cellgraph/param_store.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace cellgraph::ad {

using ojson = nlohmann::ordered_json;

Tensor& ParamStore::add(const std::string& name, Matrix init, bool trainable) {
  if (entries_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  auto [it, _] = entries_.emplace(name, Entry{Tensor(std::move(init), trainable), trainable});
  return it->second.tensor;
}

Tensor& ParamStore::add_glorot(const std::string& name, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
  return add(name, std::move(w));
}

Tensor& ParamStore::add_uniform(const std::string& name, Index rows, Index cols, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return add(name, std::move(m));
}

Tensor& ParamStore::add_zeros(const std::string& name, Index rows, Index cols) {
  return add(name, Matrix::Zero(rows, cols));
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second.tensor;
}

void ParamStore::freeze() {
  for (auto& [name, e] : entries_) set_trainable(name, false);
}

void ParamStore::unfreeze() {
  for (auto& [name, e] : entries_) set_trainable(name, true);
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  it->second.trainable = trainable;
  it->second.tensor.set_requires_grad(trainable);
  if (!trainable) it->second.tensor.zero_grad();
}

bool ParamStore::is_trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second.trainable;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.tensor.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<std::size_t>(e.tensor.value().size());
  return n;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [name, e] : entries_) out.push_back(e.tensor);
  return out;
}

std::map<std::string, Matrix> ParamStore::snapshot() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, e] : entries_) out.emplace(name, e.tensor.value());
  return out;
}

ParamStore ParamStore::concat(const ParamStore& a, const ParamStore& b) {
  ParamStore out = a;
  for (const auto& [name, e] : b.entries_) {
    if (out.entries_.count(name)) throw std::invalid_argument("ParamStore::concat: name collision '" + name + "'");
    out.entries_.emplace(name, e);
  }
  return out;
}

std::string to_json(const ParamStore& store) {
  ojson doc;
  doc["format_version"] = kCheckpointFormatVersion;
  ojson params = ojson::object();
  for (const auto& [name, e] : store) {
    const Matrix& v = e.tensor.value();
    ojson values = ojson::array();
    // Row-major order.
    for (Index r = 0; r < v.rows(); ++r)
      for (Index c = 0; c < v.cols(); ++c) values.push_back(v(r, c));
    params[name] = {{"shape", {v.rows(), v.cols()}}, {"trainable", e.trainable}, {"values", std::move(values)}};
  }
  doc["params"] = std::move(params);
  return doc.dump();
}

namespace {

Matrix read_matrix(const ojson& p, const std::string& name) {
  const auto& shape = p.at("shape");
  const auto& values = p.at("values");
  const Index rows = shape.at(0).get<Index>();
  const Index cols = shape.at(1).get<Index>();
  if (static_cast<Index>(values.size()) != rows * cols)
    throw std::runtime_error("checkpoint: parameter '" + name + "' has wrong value count");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = values[k++].get<double>();
  return m;
}

ojson parse_checked(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  if (!doc.contains("format_version") || doc["format_version"] != kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint: format_version mismatch");
  return doc;
}

}  // namespace

void load_json_into(ParamStore& store, const std::string& text) {
  const ojson doc = parse_checked(text);
  const ojson& params = doc.at("params");
  for (const auto& [name, e] : store) {
    if (!params.contains(name)) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    Matrix m = read_matrix(params[name], name);
    Tensor t = e.tensor;
    if (m.rows() != t.rows() || m.cols() != t.cols())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    t.mutable_value() = std::move(m);
  }
  for (const auto& [name, p] : params.items())
    if (!store.contains(name)) throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
  for (const auto& [name, p] : params.items()) store.set_trainable(name, p.value("trainable", true));
}

ParamStore param_store_from_json(const std::string& text) {
  const ojson doc = parse_checked(text);
  ParamStore store;
  for (const auto& [name, p] : doc.at("params").items()) store.add(name, read_matrix(p, name), p.value("trainable", true));
  return store;
}

void Adam::step(ParamStore& store) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, e] : store) {
    if (!e.trainable) continue;
    Tensor t = e.tensor;
    const Matrix& g = t.grad();
    auto [it, fresh] = state_.try_emplace(name);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Matrix::Zero(g.rows(), g.cols());
      mo.v = Matrix::Zero(g.rows(), g.cols());
    }
    mo.m = beta1_ * mo.m + (1.0 - beta1_) * g;
    mo.v = beta2_ * mo.v + (1.0 - beta2_) * g.cwiseAbs2();
    t.mutable_value().array() -= lr_ * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + eps_);
  }
}

void adam_step(Adam& optimizer, ParamStore& store) { optimizer.step(store); }

}  // namespace cellgraph::ad
