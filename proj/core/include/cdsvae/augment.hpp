#pragma once

#include <span>
#include <vector>

#include "cdsvae/nn.hpp"
#include "cdsvae/tensor.hpp"

namespace cdsvae::aug {

using nn::Rng;

enum class ContentMode { kReverse, kShuffle };

struct AugmentConfig {
  ContentMode content_mode = ContentMode::kShuffle;
  float scale_min = 0.8f;
  float scale_max = 1.2f;
  float noise_sigma = 0.05f;
  float invert_prob = 0.5f;

  void validate() const;
};

// Frame order for a content augmentation of a `steps`-frame sequence: the
// reversal, or a uniformly random permutation other than the identity.
std::vector<int> content_permutation(int steps, ContentMode mode, Rng& rng);

// Reorders the frames of a sequence stored as steps * frame_size values.
std::vector<float> permute_frames(std::span<const float> sequence, int steps,
                                  std::span<const int> order);

std::vector<float> content_aug(std::span<const float> sequence, int steps,
                               const AugmentConfig& config, Rng& rng);

// Per-sequence appearance transform: y = scale * x, then 1 - y if inverted,
// then per-pixel Gaussian noise, clamped to [0, 1].
struct Appearance {
  float scale = 1.0f;
  bool invert = false;
};

Appearance draw_appearance(const AugmentConfig& config, Rng& rng);
std::vector<float> apply_appearance(std::span<const float> sequence, Appearance look,
                                    float noise_sigma, Rng& rng);

std::vector<float> motion_aug(std::span<const float> sequence, const AugmentConfig& config,
                              Rng& rng);

// Batched versions over time-major [T, batch, P] tensors, one independent
// draw per sequence. The results carry no autodiff history.
ad::Tensor content_aug_batch(const ad::Tensor& frames, const AugmentConfig& config, Rng& rng);
ad::Tensor motion_aug_batch(const ad::Tensor& frames, const AugmentConfig& config, Rng& rng);

}  // namespace cdsvae::aug
