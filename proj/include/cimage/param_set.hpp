#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cimage/dense_matrix.hpp"

namespace cimage::nn {

struct ParamEntry {
  DenseMatrix value;
  DenseMatrix grad;
  DenseMatrix adam_m;
  DenseMatrix adam_v;
};

// Named parameter collection with gradient accumulators and Adam moments.
// Iteration follows insertion order so updates and serialization are
// deterministic.
class ParamSet {
 public:
  DenseMatrix& create(const std::string& name, std::size_t rows, std::size_t cols);
  DenseMatrix& create(const std::string& name, DenseMatrix init);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t num_coords() const;

  void zero_grad();
  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }

  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, ParamEntry> entries_;
  std::int64_t step_ = 0;

  friend void adam_step(ParamSet&, double, double, double, double);
};

// Standard Adam with bias correction; zeroes gradients afterwards.
// Throws NonFiniteError if any gradient is NaN/Inf.
void adam_step(ParamSet& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

}  // namespace cimage::nn
