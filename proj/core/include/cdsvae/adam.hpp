#pragma once

#include <cstdint>
#include <vector>

#include "cdsvae/tensor.hpp"

namespace cdsvae::ad {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Adam with bias correction. Holds first/second moments per parameter.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  // Applies one update from the parameters' current gradients, then clears
  // them. Throws ContractError if any parameter has no gradient buffer.
  void step();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<float>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<float>& second_moment(std::size_t i) const { return v_.at(i); }
  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t t_ = 0;
};

}  // namespace cdsvae::ad
