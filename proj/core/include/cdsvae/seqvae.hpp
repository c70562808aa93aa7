#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cdsvae/nn.hpp"
#include "cdsvae/tensor.hpp"

namespace cdsvae::model {

using ad::Tensor;
using nn::Rng;

struct ModelConfig {
  int steps = 8;
  int height = 16;
  int width = 16;
  int channels = 1;
  int static_dim = 16;
  int dynamic_dim = 4;
  // Also the width of the per-frame embedding.
  int enc_hidden = 64;
  int prior_hidden = 64;
  int dec_hidden = 64;
  // Fixed standard deviation of the Gaussian frame likelihood.
  float likelihood_std = 0.1f;

  void validate() const;
  int frame_size() const { return height * width * channels; }
};

inline constexpr float kLogvarMin = -10.0f;
inline constexpr float kLogvarMax = 10.0f;

// Batch of diagonal Gaussians: mu and logvar are [batch, dim].
struct DiagGaussian {
  Tensor mu;
  Tensor logvar;

  int batch() const { return mu.dim(0); }
  int dim() const { return mu.dim(1); }
};

// Splits a [batch, 2d] head output into (mu, clamped logvar).
DiagGaussian gaussian_from_head(const Tensor& head, int dim);
DiagGaussian standard_gaussian(int batch, int dim);

// mu + exp(logvar / 2) * eps
Tensor sample_reparam(const DiagGaussian& d, const Tensor& eps);

// Supplies standard-normal noise of the requested shape.
using NoiseFn = std::function<Tensor(const ad::Dims&)>;
NoiseFn gaussian_noise(Rng& rng);
NoiseFn zero_noise();

// What the motion posterior feeds back as z_{t-1}.
enum class Feedback { kSample, kMean };

struct MotionPosterior {
  std::vector<DiagGaussian> dists;  // T entries
  std::vector<Tensor> samples;      // T entries, [batch, d_m]
};

struct LatentSample {
  DiagGaussian s_dist;
  Tensor s;
  std::vector<DiagGaussian> z_dists;
  std::vector<Tensor> z;
};

struct Reconstruction {
  LatentSample latent;
  Tensor frames;  // [T, batch, P]
};

// Sequential VAE: content posterior q(s|x) from a bidirectional LSTM, motion
// posterior q(z_t|z_<t, x_<=t) from a unidirectional LSTM with sampled-z
// feedback, LSTM prior p(z_t|z_<t) and a per-frame decoder p(x_t|s, z_t).
//
// Frames are passed time-major as [T, batch, P] with P = H*W*C.
class SeqVae {
 public:
  SeqVae(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Per-frame embeddings, T tensors of [batch, enc_hidden].
  std::vector<Tensor> embed(const Tensor& frames) const;

  DiagGaussian encode_content(const Tensor& frames) const;
  DiagGaussian encode_content(std::span<const Tensor> features) const;

  MotionPosterior encode_motion(const Tensor& frames, const NoiseFn& noise,
                                Feedback feedback = Feedback::kSample) const;
  MotionPosterior encode_motion(std::span<const Tensor> features, const NoiseFn& noise,
                                Feedback feedback = Feedback::kSample) const;

  // Motion posterior with a given trajectory fed back as z_{t-1}.
  std::vector<DiagGaussian> motion_along(std::span<const Tensor> features,
                                         std::span<const Tensor> z) const;

  // Prior distributions p(z_t | z_<t) along a given trajectory (z_0 = 0).
  std::vector<DiagGaussian> prior_along(std::span<const Tensor> z) const;
  // Ancestral sample of s ~ N(0, I) and z_1..z_T from the LSTM prior.
  LatentSample prior_rollout(int steps, int batch, Rng& rng) const;

  Tensor decode(const Tensor& s, const Tensor& z_t) const;  // [batch, P]
  Tensor decode_sequence(const Tensor& s, std::span<const Tensor> z) const;  // [T, batch, P]

  Reconstruction autoencode(const Tensor& frames, Rng& rng) const;

 private:
  void check_frames(const Tensor& frames) const;

  ModelConfig config_;
  nn::ParamSet params_;
  nn::Linear embed1_, embed2_;
  nn::LstmCell content_fwd_, content_bwd_;
  nn::Linear content_head_;
  nn::LstmCell motion_cell_;
  nn::Linear motion_head_;
  nn::LstmCell prior_cell_;
  nn::Linear prior_head_;
  nn::Linear dec1_, dec2_, dec3_;
};

// Stacks sequences of T*P floats into a time-major [T, batch, P] tensor.
Tensor batch_frames(std::span<const std::vector<float>> sequences, int steps, int frame_size);
// Inverse of batch_frames for one sequence.
std::vector<float> sequence_from_batch(const Tensor& frames, int index);

// ---- checkpoints ----------------------------------------------------------

struct NamedTensor {
  std::string name;
  ad::Dims dims;
  std::vector<float> values;
};

void write_tensors(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(const nn::ParamSet& params);
// Copies values into `params`; names, order and dims must match.
void restore(nn::ParamSet& params, const std::vector<NamedTensor>& tensors);

// Recovers the architecture sizes from a model checkpoint. Sequence length
// and frame geometry are not stored and come from `frames_like`.
ModelConfig infer_config(const std::vector<NamedTensor>& tensors, const ModelConfig& frames_like);

void save_model(const SeqVae& model, const std::filesystem::path& path);
SeqVae load_model(const std::filesystem::path& path, const ModelConfig& frames_like);

}  // namespace cdsvae::model
