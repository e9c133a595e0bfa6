#include "kapr/nn.hpp"

#include <cmath>

#include "kapr/error.hpp"

namespace kapr::nn {

std::size_t ParameterList::add(std::string name, Eigen::MatrixXd value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

ParameterList ParameterList::zeros_like() const {
  ParameterList out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.add(names_[i], Eigen::MatrixXd::Zero(values_[i].rows(), values_[i].cols()));
  }
  return out;
}

void ParameterList::set_zero() {
  for (auto& v : values_) v.setZero();
}

void ParameterList::axpy(double alpha, const ParameterList& other) {
  for (std::size_t i = 0; i < size(); ++i) values_[i] += alpha * other.values_[i];
}

std::size_t ParameterList::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParameterList::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

double ParameterList::max_abs() const {
  double m = 0.0;
  for (const auto& v : values_) {
    if (v.size() > 0) m = std::max(m, v.cwiseAbs().maxCoeff());
  }
  return m;
}

std::vector<artifact::NamedMatrix> ParameterList::to_named(const std::string& prefix) const {
  std::vector<artifact::NamedMatrix> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back({prefix + names_[i], values_[i]});
  return out;
}

void ParameterList::load_from(const artifact::TensorFile& file, const std::string& prefix) {
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& m = file.at(prefix + names_[i]);
    if (m.rows() != values_[i].rows() || m.cols() != values_[i].cols()) {
      throw FormatError("shape mismatch for '" + prefix + names_[i] + "'");
    }
    values_[i] = m;
  }
}

void init_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
  }
}

Eigen::MatrixXd fan_in_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  Eigen::MatrixXd m(fan_in, fan_out);
  init_uniform(m, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  return m;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  return masked_softmax(logits, logits.size());
}

Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, Eigen::Index present) {
  if (present <= 0) throw NoActions("softmax over an empty set");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(logits.size());
  const auto head = logits.head(present);
  const double m = head.maxCoeff();
  p.head(present) = (head.array() - m).exp().matrix();
  p.head(present) /= p.head(present).sum();
  return p;
}

Adam::Adam(const ParameterList& shape, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void Adam::step(ParameterList& params, const ParameterList& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace kapr::nn
