#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cdsvae/tensor.hpp"

namespace cdsvae::nn {

using Rng = std::mt19937_64;
using ad::Tensor;

// Named parameter list in registration order; this order is the checkpoint
// order.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor t);
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t count() const;  // total scalar count
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

Tensor uniform_parameter(ad::Dims dims, float bound, Rng& rng);
Tensor standard_normal(ad::Dims dims, Rng& rng);

// y = x W + b, W: [in, out]
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParamSet& params, const std::string& name, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  int in() const { return weight.dim(0); }
  int out() const { return weight.dim(1); }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

// LSTM cell with gate order (input, forget, cell, output). The input
// projection is kept separate so callers can batch it over all time steps.
struct LstmCell {
  Tensor w_input;   // [in, 4h]
  Tensor w_hidden;  // [h, 4h]
  Tensor bias;      // [4h], forget slice initialised to +1

  LstmCell() = default;
  LstmCell(ParamSet& params, const std::string& name, int in, int hidden, Rng& rng);
  int hidden() const { return w_hidden.dim(0); }
  int in() const { return w_input.dim(0); }

  LstmState zero_state(int batch) const;
  // projected: x W_input (+ anything else), [batch, 4h]; bias is added here.
  LstmState step(const Tensor& projected, const LstmState& state) const;
};

}  // namespace cdsvae::nn
