#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kapr/artifact.hpp"
#include "kapr/rng.hpp"

namespace kapr::nn {

/// Ordered, named dense tensors. Networks keep their weights in one of these
/// and gradients in another of identical shape.
class ParameterList {
 public:
  std::size_t add(std::string name, Eigen::MatrixXd value);

  std::size_t size() const noexcept { return values_.size(); }
  Eigen::MatrixXd& operator[](std::size_t i) { return values_[i]; }
  const Eigen::MatrixXd& operator[](std::size_t i) const { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  ParameterList zeros_like() const;
  void set_zero();
  /// this += alpha * other
  void axpy(double alpha, const ParameterList& other);
  std::size_t scalar_count() const;
  bool all_finite() const;
  double max_abs() const;

  std::vector<artifact::NamedMatrix> to_named(const std::string& prefix = {}) const;
  /// Copies values from a tensor file; shapes must match exactly.
  void load_from(const artifact::TensorFile& file, const std::string& prefix = {});

  friend bool operator==(const ParameterList&, const ParameterList&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> values_;
};

/// Fills m with U(-bound, bound).
void init_uniform(Eigen::MatrixXd& m, double bound, Rng& rng);

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for a fan_in x fan_out matrix.
Eigen::MatrixXd fan_in_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Softmax over the leading `present` entries; the rest get probability 0.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, Eigen::Index present);

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  /// Gradient descent: params -= lr * grads.
  void step(ParameterList& params, const ParameterList& grads) const { params.axpy(-lr_, grads); }

 private:
  double lr_;
};

class Adam {
 public:
  Adam(const ParameterList& shape, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  /// Descent step on `params` given the loss gradient.
  void step(ParameterList& params, const ParameterList& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ParameterList m_, v_;
};

}  // namespace kapr::nn
