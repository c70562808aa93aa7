#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cdsvae/seqvae.hpp"
#include "cdsvae/tensor.hpp"

namespace cdsvae::obj {

using ad::Tensor;
using model::DiagGaussian;

struct LossWeights {
  float alpha = 1.0f;  // KL terms
  float beta = 1.0f;   // contrastive MI surrogates
  float gamma = 1.0f;  // MWS I(s; z) penalty
  float tau = 0.5f;    // contrastive temperature

  void validate() const;
};

struct LossBreakdown {
  float recon = 0.0f;
  float kl_s = 0.0f;
  float kl_z = 0.0f;
  float c_motion = 0.0f;
  float c_content = 0.0f;
  float mi_sz = 0.0f;
  float total = 0.0f;

  // recon + alpha (kl_s + kl_z) - beta (c_motion + c_content) + gamma mi_sz,
  // evaluated exactly as total_loss() does (in double, rounded once).
  float recombine(const LossWeights& w) const;
};

// KL(q || p) per batch row, summed over dimensions: [batch].
Tensor gauss_kl(const DiagGaussian& q, const DiagGaussian& p);

// Single-trajectory estimate of KL[q(z_1:T|x) || p(z_1:T)] per batch row:
// sum_t KL(q_t || p(z_t | z_<t)) with the prior conditioned on `z`.
Tensor kl_dynamic(std::span<const DiagGaussian> z_dists, std::span<const Tensor> z,
                  const model::SeqVae& model);

// 0.5 / std^2 * sum (x - x_hat)^2 over steps and pixels, averaged over the
// batch axis (axis 1 of [T, batch, P]).
Tensor recon_nll(const Tensor& x, const Tensor& x_hat, float likelihood_std = 1.0f);

// Norm floor used by every cosine similarity.
inline constexpr float kNormFloor = 1e-8f;

// Cosine similarity of two vectors (rank 1).
Tensor cosine_sim(const Tensor& u, const Tensor& v);
// Pairwise cosine similarities of the rows of a [n,d] and b [m,d]: [n, m].
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

// mean_i [pos_i - logsumexp(pos_i, neg_i1..neg_in)] + log(n + 1)
// pos: [batch], neg: [batch, n] (already divided by the temperature).
Tensor info_nce_logits(const Tensor& pos, const Tensor& neg);

// InfoNCE with phi = exp(cos / tau). `negatives[i]` is [n, d] for anchor i
// and every anchor must have the same n >= 1.
Tensor info_nce(const Tensor& anchors, const Tensor& positives,
                std::span<const Tensor> negatives, float tau);

// Symmetric batch InfoNCE: both views serve as anchors, the other view of the
// same sequence is the positive and the 2M-2 features of other sequences are
// negatives. Equals (C(view) + C(aug)) / 2.
Tensor contrastive_mi(const Tensor& features, const Tensor& aug_features, float tau);
inline Tensor contrastive_mi_motion(const Tensor& z_features, const Tensor& z_aug_features,
                                    float tau) {
  return contrastive_mi(z_features, z_aug_features, tau);
}
inline Tensor contrastive_mi_content(const Tensor& s_features, const Tensor& s_aug_features,
                                     float tau) {
  return contrastive_mi(s_features, s_aug_features, tau);
}

// log N(samples_i; mu_j, exp(logvar_j)) for all (i, j): [n, m].
Tensor pairwise_log_density(const Tensor& samples, const Tensor& mu, const Tensor& logvar);
inline Tensor pairwise_log_density(const Tensor& samples, const DiagGaussian& d) {
  return pairwise_log_density(samples, d.mu, d.logvar);
}

// Minibatch-weighted-sampling entropy of the aggregated posterior:
// -(1/M) sum_i [log sum_j q(sample_i | x_j) - log(N M)].
Tensor mws_entropy(const DiagGaussian& dists, const Tensor& samples, std::size_t dataset_size);

// Concatenates per-step distributions / samples into one block-diagonal
// Gaussian over the whole trajectory.
DiagGaussian flatten_trajectory(std::span<const DiagGaussian> steps);
Tensor flatten_trajectory(std::span<const Tensor> samples);
DiagGaussian join(const DiagGaussian& a, const DiagGaussian& b);

// H(s) + H(z) - H(s, z), each by mws_entropy.
Tensor mws_mi_sz(const DiagGaussian& s_dists, const Tensor& s_samples,
                 std::span<const DiagGaussian> z_dists, std::span<const Tensor> z_samples,
                 std::size_t dataset_size);

// H_MWS(latent) - H(latent | x), the latter from the samples' own posteriors.
Tensor mws_mi_latent_input(const DiagGaussian& dists, const Tensor& samples,
                           std::size_t dataset_size);

// Posterior statistics of augmented views; empty when the view is disabled.
struct AugmentedViews {
  std::optional<DiagGaussian> content;             // q(s | x^c)
  std::optional<std::vector<DiagGaussian>> motion;  // q(z_t | ., x^m)
};

struct Objective {
  Tensor total;
  LossBreakdown values;
};

// Weighted objective in minimisation form. Reconstruction and KLs use the
// original sequences; augmented views enter only through the contrastive
// terms.
Objective total_loss(const model::SeqVae& model, const Tensor& frames,
                     const model::Reconstruction& out, const AugmentedViews& aug,
                     const LossWeights& weights, std::size_t dataset_size);

}  // namespace cdsvae::obj
