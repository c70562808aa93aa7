#include "cdsvae/adam.hpp"

#include <cmath>

#include "cdsvae/error.hpp"

namespace cdsvae::ad {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("adam: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i].mutable_data();
    const auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * static_cast<double>(g[k]) * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      theta[k] = static_cast<float>(theta[k] - config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
    params_[i].zero_grad();
  }
}

}  // namespace cdsvae::ad
