#pragma once

#include "cellgraph/tensor.hpp"

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace cellgraph::ad {

inline constexpr int kCheckpointFormatVersion = 1;

/// Named collection of parameters. Entries are shared handles, so a store
/// built with concat() updates the same tensors as its sources.
class ParamStore {
 public:
  struct Entry {
    Tensor tensor;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Matrix init, bool trainable = true);
  /// Glorot-uniform initialized (fan_in x fan_out) weight.
  Tensor& add_glorot(const std::string& name, Index fan_in, Index fan_out, std::mt19937_64& rng);
  Tensor& add_zeros(const std::string& name, Index rows, Index cols);
  /// Entries drawn from U(-limit, limit).
  Tensor& add_uniform(const std::string& name, Index rows, Index cols, double limit, std::mt19937_64& rng);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  /// Frozen parameters record no gradient and are skipped by optimizers.
  void freeze();
  void unfreeze();
  void set_trainable(const std::string& name, bool trainable);
  bool is_trainable(const std::string& name) const;

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  std::size_t bytes() const { return parameter_count() * sizeof(double); }
  std::vector<Tensor> tensors() const;
  /// Deep copy of every value, keyed by name.
  std::map<std::string, Matrix> snapshot() const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// [a || b]: union of the two stores sharing their tensors. Names must not collide.
  static ParamStore concat(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Entry> entries_;
};

std::string to_json(const ParamStore& store);
/// Loads values into a store whose names and shapes already match.
void load_json_into(ParamStore& store, const std::string& text);
ParamStore param_store_from_json(const std::string& text);

/// Adam with bias correction. Moment state is keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);
  double learning_rate() const { return lr_; }
  long long steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, Moments> state_;
};

/// One Adam update of the trainable entries of `store`.
void adam_step(Adam& optimizer, ParamStore& store);

}  // namespace cellgraph::ad
