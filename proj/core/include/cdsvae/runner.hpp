#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdsvae/grad_check.hpp"
#include "cdsvae/metrics.hpp"
#include "cdsvae/run_config.hpp"

namespace cdsvae::run {

namespace fs = std::filesystem;

// MWS estimates logged during training.
struct MiEstimates {
  double mi_sz = 0.0;
  double mi_sx = 0.0;
  double mi_zx = 0.0;
};

struct EpochLog {
  int epoch = 0;
  obj::LossBreakdown mean;  // averaged over the epoch's batches
  std::optional<MiEstimates> mi;
  double wall_seconds = 0.0;
};

std::string log_header();
std::string log_row(const EpochLog& row);

// One forward pass of the weighted objective on a batch: posterior samples,
// augmented views (when enabled) and every loss term.
obj::Objective batch_objective(const model::SeqVae& model, const ad::Tensor& frames,
                               const RunConfig& config, std::size_t dataset_size, nn::Rng& rng);
obj::Objective batch_objective(const model::SeqVae& model, const ad::Tensor& frames,
                               const RunConfig& config, const obj::LossWeights& weights,
                               std::size_t dataset_size, nn::Rng& rng);

class Trainer {
 public:
  Trainer(const RunConfig& config, const synth::Dataset& train);

  // One optimizer step on the given training indices.
  obj::LossBreakdown step(std::span<const std::size_t> indices);
  // Loss weights of the next step, with alpha scaled by the KL warm-up.
  obj::LossWeights current_weights() const;
  // A full shuffled pass over the training set.
  EpochLog epoch();
  MiEstimates mi_estimates() const;
  // Mean objective over `data` with fixed noise, no parameter update.
  double evaluate_loss(const synth::Dataset& data) const;

  model::SeqVae& model() { return model_; }
  const model::SeqVae& model() const { return model_; }
  int epochs_done() const { return epoch_; }

 private:
  RunConfig config_;
  const synth::Dataset& train_;
  model::SeqVae model_;
  std::vector<ad::Tensor> params_;
  ad::Adam adam_;
  nn::Rng rng_;
  std::vector<std::size_t> order_;
  int epoch_ = 0;
  std::size_t steps_ = 0;
  std::size_t steps_per_epoch_ = 1;
};

struct TrainResult {
  std::vector<EpochLog> log;
  fs::path log_path;
  fs::path best_checkpoint;
  fs::path final_checkpoint;
  int best_epoch = 0;
};

// Trains for config.epochs and writes train_log.csv, ckpt_best.cdsv,
// ckpt_final.cdsv and config.toml into `out_dir`.
TrainResult run_train(const RunConfig& config, const synth::Dataset& train, const fs::path& out_dir,
                      const synth::Dataset* val = nullptr);

// Swap metrics, factor EER and the s-leakage probe against a qualified oracle.
metrics::MetricReport run_eval(const model::SeqVae& model, const synth::Dataset& data,
                               const metrics::OracleClassifier& oracle, std::uint64_t seed,
                               const std::string& run_id, int passes = 1);
void write_report(const metrics::MetricReport& report, const fs::path& path);

// Posterior means of one sequence, encoded on its own.
struct SequenceCode {
  ad::Tensor s;               // [1, d_s]
  std::vector<ad::Tensor> z;  // T x [1, d_m]
};
SequenceCode encode_means(const model::SeqVae& model, const synth::Dataset& data, std::size_t index);
// decode(s, z) as a single-sequence [T * P] vector.
std::vector<float> decode_code(const model::SeqVae& model, const ad::Tensor& s,
                               std::span<const ad::Tensor> z);

struct SwapResult {
  std::vector<float> original_i, original_j;
  std::vector<float> recon_i, recon_j;
  std::vector<float> s_i_z_j, s_j_z_i;
};
SwapResult swap_pair(const model::SeqVae& model, const synth::Dataset& data, std::size_t i,
                     std::size_t j);
SwapResult run_swap(const model::SeqVae& model, const synth::Dataset& data, std::size_t i,
                    std::size_t j, const fs::path& out_dir);

// Decodes with s = (1 - l) s_a + l s_b for l = 0, 1/(k+1), ..., 1 and z from a.
std::vector<std::vector<float>> interpolate_pair(const model::SeqVae& model,
                                                 const synth::Dataset& data, std::size_t a,
                                                 std::size_t b, int k);
std::vector<std::vector<float>> run_interpolate(const model::SeqVae& model,
                                                const synth::Dataset& data, std::size_t a,
                                                std::size_t b, int k, const fs::path& out_dir);

// Netpbm P5, 8-bit. Values are clamped to [0, 1] and rounded.
void write_pgm(const fs::path& path, std::span<const float> pixels, int width, int height);
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const fs::path& path);
// Writes seq{index}_t{step}.pgm for every frame of a [T * H * W * C] sequence.
void write_sequence_pgm(const fs::path& dir, std::size_t index, std::span<const float> sequence,
                        const synth::SyntheticConfig& geometry);

struct NamedCheck {
  std::string name;
  ad::GradCheckReport report;
};
// Gradient check of every primitive op, the model blocks and the full
// objective on a T=3, d_s=4, d_m=2, batch-4 model (loss weights from `config`).
std::vector<NamedCheck> grad_check_suite(const RunConfig& config, double tol);

}  // namespace cdsvae::run
