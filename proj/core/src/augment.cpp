#include "cdsvae/augment.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "cdsvae/error.hpp"
#include "cdsvae/seqvae.hpp"

namespace cdsvae::aug {

void AugmentConfig::validate() const {
  if (!(scale_min > 0.0f) || !(scale_max >= scale_min)) {
    throw ContractError("augment: scale range must be positive and ordered");
  }
  if (!(noise_sigma >= 0.0f)) throw ContractError("augment: noise sigma must be >= 0");
  if (!(invert_prob >= 0.0f && invert_prob <= 1.0f)) {
    throw ContractError("augment: invert probability must be in [0, 1]");
  }
}

std::vector<int> content_permutation(int steps, ContentMode mode, Rng& rng) {
  if (steps < 2) throw ContractError("content_aug: need at least 2 frames");
  std::vector<int> order(static_cast<std::size_t>(steps));
  std::iota(order.begin(), order.end(), 0);
  if (mode == ContentMode::kReverse) {
    std::reverse(order.begin(), order.end());
    return order;
  }
  // Rejection keeps the draw uniform over the non-identity permutations.
  const auto is_identity = [&] {
    for (int i = 0; i < steps; ++i) {
      if (order[static_cast<std::size_t>(i)] != i) return false;
    }
    return true;
  };
  do {
    for (int i = steps - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    }
  } while (is_identity());
  return order;
}

std::vector<float> permute_frames(std::span<const float> sequence, int steps,
                                  std::span<const int> order) {
  if (steps <= 0 || sequence.size() % static_cast<std::size_t>(steps) != 0) {
    throw DimensionError("permute_frames: sequence length not divisible by steps");
  }
  if (order.size() != static_cast<std::size_t>(steps)) {
    throw ContractError("permute_frames: order has wrong length");
  }
  const std::size_t fs = sequence.size() / static_cast<std::size_t>(steps);
  std::vector<float> out(sequence.size());
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto src = sequence.subspan(static_cast<std::size_t>(order[t]) * fs, fs);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(t * fs));
  }
  return out;
}

std::vector<float> content_aug(std::span<const float> sequence, int steps,
                               const AugmentConfig& config, Rng& rng) {
  const auto order = content_permutation(steps, config.content_mode, rng);
  return permute_frames(sequence, steps, order);
}

Appearance draw_appearance(const AugmentConfig& config, Rng& rng) {
  config.validate();
  std::uniform_real_distribution<float> scale(config.scale_min, config.scale_max);
  std::bernoulli_distribution invert(config.invert_prob);
  Appearance a;
  a.scale = scale(rng);
  a.invert = invert(rng);
  return a;
}

std::vector<float> apply_appearance(std::span<const float> sequence, Appearance look,
                                    float noise_sigma, Rng& rng) {
  std::vector<float> out(sequence.size());
  std::normal_distribution<float> noise(0.0f, 1.0f);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    float y = look.scale * sequence[i];
    if (look.invert) y = 1.0f - y;
    if (noise_sigma > 0.0f) y += noise_sigma * noise(rng);
    out[i] = std::clamp(y, 0.0f, 1.0f);
  }
  return out;
}

std::vector<float> motion_aug(std::span<const float> sequence, const AugmentConfig& config,
                              Rng& rng) {
  const Appearance look = draw_appearance(config, rng);
  return apply_appearance(sequence, look, config.noise_sigma, rng);
}

namespace {

template <typename F>
ad::Tensor per_sequence(const ad::Tensor& frames, F&& f) {
  if (frames.rank() != 3) throw DimensionError("augment: expected [T, batch, P] frames");
  const int steps = frames.dim(0), batch = frames.dim(1), fs = frames.dim(2);
  std::vector<std::vector<float>> seqs;
  seqs.reserve(static_cast<std::size_t>(batch));
  for (int m = 0; m < batch; ++m) seqs.push_back(f(model::sequence_from_batch(frames, m)));
  return model::batch_frames(seqs, steps, fs);
}

}  // namespace

ad::Tensor content_aug_batch(const ad::Tensor& frames, const AugmentConfig& config, Rng& rng) {
  const int steps = frames.rank() == 3 ? frames.dim(0) : 0;
  return per_sequence(frames, [&](const std::vector<float>& s) {
    return content_aug(s, steps, config, rng);
  });
}

ad::Tensor motion_aug_batch(const ad::Tensor& frames, const AugmentConfig& config, Rng& rng) {
  return per_sequence(frames, [&](const std::vector<float>& s) {
    return motion_aug(s, config, rng);
  });
}

}  // namespace cdsvae::aug
