#include "cdsvae/nn.hpp"

#include <cmath>

#include "cdsvae/error.hpp"

namespace cdsvae::nn {

namespace ops = cdsvae::ad;

Tensor& ParamSet::add(std::string name, Tensor t) {
  t.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(t));
  return entries_.back().second;
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Tensor uniform_parameter(ad::Dims dims, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(ad::numel(dims));
  for (auto& x : v) x = dist(rng);
  return Tensor::parameter(std::move(dims), std::move(v));
}

Tensor standard_normal(ad::Dims dims, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(ad::numel(dims));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(dims), std::move(v));
}

Linear::Linear(ParamSet& params, const std::string& name, int in, int out, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  weight = params.add(name + ".weight", uniform_parameter({in, out}, bound, rng));
  bias = params.add(name + ".bias", uniform_parameter({out}, bound, rng));
}

Tensor Linear::operator()(const Tensor& x) const {
  return ops::affine(x, weight, bias);
}

LstmCell::LstmCell(ParamSet& params, const std::string& name, int in, int hidden, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(hidden));
  const float in_bound = 1.0f / std::sqrt(static_cast<float>(in));
  w_input = params.add(name + ".w_input", uniform_parameter({in, 4 * hidden}, in_bound, rng));
  w_hidden = params.add(name + ".w_hidden", uniform_parameter({hidden, 4 * hidden}, bound, rng));
  Tensor b = uniform_parameter({4 * hidden}, bound, rng);
  auto bv = b.mutable_data();
  for (int i = hidden; i < 2 * hidden; ++i) bv[i] = 1.0f;
  bias = params.add(name + ".bias", b);
}

LstmState LstmCell::zero_state(int batch) const {
  return {Tensor::zeros({batch, hidden()}), Tensor::zeros({batch, hidden()})};
}

LstmState LstmCell::step(const Tensor& projected, const LstmState& state) const {
  const int h = hidden();
  if (projected.rank() != 2 || projected.dim(1) != 4 * h) {
    throw DimensionError("lstm step: projected input has dims " + ad::to_string(projected.dims()));
  }
  Tensor gates = ops::add(projected, ops::affine(state.h, w_hidden, bias));
  Tensor hc = ops::lstm_gates(gates, state.c);
  return {ops::slice(hc, 1, 0, h), ops::slice(hc, 1, h, h)};
}

}  // namespace cdsvae::nn
