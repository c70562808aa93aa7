#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cdsvae/tensor.hpp"

namespace testutil {

inline cdsvae::ad::Tensor random_tensor(cdsvae::ad::Dims dims, std::uint64_t seed, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(cdsvae::ad::numel(dims));
  for (auto& x : v) x = u(rng);
  return cdsvae::ad::Tensor::from(std::move(dims), std::move(v));
}

inline std::vector<float> values(const cdsvae::ad::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cdsvae_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
