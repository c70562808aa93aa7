#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cdsvae/adam.hpp"
#include "cdsvae/augment.hpp"
#include "cdsvae/objectives.hpp"
#include "cdsvae/oracle.hpp"
#include "cdsvae/seqvae.hpp"
#include "cdsvae/synthseq.hpp"

namespace cdsvae::run {

struct SynthSection {
  synth::SyntheticConfig geometry;
  int train_count = 2000;
  int test_count = 512;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data;      // training set
  std::string val_data;  // optional, selects the best checkpoint
  int epochs = 100;
  int batch_size = 64;
  // Log MWS estimates of I(s;x), I(z;x), I(s;z) every this many epochs on the
  // first mi_log_batch training sequences.
  int mi_log_every = 1;
  int mi_log_batch = 256;
  // When false the wall_seconds column is written as 0 so logs of identical
  // runs compare equal byte for byte.
  bool record_wall_time = true;

  model::ModelConfig model;
  obj::LossWeights loss;
  ad::AdamConfig optim;
  // Global gradient-norm clip, 0 disables.
  float grad_clip = 0.0f;
  // alpha ramps linearly from 0 over this many epochs, 0 disables.
  int kl_warmup_epochs = 0;

  bool content_aug = true;
  bool motion_aug = true;
  aug::AugmentConfig augment;

  SynthSection synth;
  metrics::OracleConfig oracle;

  void validate() const;
};

// Parses TOML text; unknown tables or keys and ill-typed values throw
// ConfigError.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);
std::string to_toml(const RunConfig& config);

}  // namespace cdsvae::run
