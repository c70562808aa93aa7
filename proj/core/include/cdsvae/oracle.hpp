#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdsvae/error.hpp"
#include "cdsvae/nn.hpp"
#include "cdsvae/synthseq.hpp"
#include "cdsvae/tensor.hpp"

namespace cdsvae::metrics {

using ad::Tensor;

// Row-wise class probabilities.
using ProbMatrix = std::vector<std::vector<double>>;

// A classifier that failed its qualification gate.
class GateError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kOracleGate = 0.95;

struct OracleConfig {
  int hidden = 64;
  int max_epochs = 40;
  int batch = 64;
  float lr = 3e-3f;
  // Pixel noise added to training inputs so the judge tolerates blurry decodes.
  float input_noise = 0.05f;
  // Training stops once both validation accuracies reach this.
  double target_acc = 0.995;
  std::uint64_t seed = 0;
};

struct OraclePrediction {
  ProbMatrix content;
  ProbMatrix motion;
};

// Sequence classifier with a content head (time-pooled frame features) and a
// motion head (time-concatenated frame features).
class OracleClassifier {
 public:
  OracleClassifier(int steps, int frame_size, int content_classes, int motion_classes,
                   int hidden, std::uint64_t seed);

  // Logits for time-major [T, batch, P] frames.
  std::pair<Tensor, Tensor> logits(const Tensor& frames) const;
  OraclePrediction predict(const Tensor& frames) const;

  int steps() const { return steps_; }
  int frame_size() const { return frame_size_; }
  int content_classes() const { return content_classes_; }
  int motion_classes() const { return motion_classes_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  double val_acc_content = 0.0;
  double val_acc_motion = 0.0;
  bool qualified() const {
    return val_acc_content >= kOracleGate && val_acc_motion >= kOracleGate;
  }

 private:
  int steps_, frame_size_, content_classes_, motion_classes_;
  nn::ParamSet params_;
  nn::Linear frame1_, frame2_, content_head_, motion1_, motion2_;
};

// Mean softmax cross-entropy of logits [batch, K] against labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
double accuracy(const ProbMatrix& probs, const std::vector<int>& labels);

// Trains on `train`, measures both heads on `val`. Throws GateError when the
// best validation accuracies stay below the gate.
OracleClassifier train_oracle(const synth::Dataset& train, const synth::Dataset& val,
                              const OracleConfig& config = {});

// Same training loop with caller-supplied labels (e.g. permuted controls);
// returns without enforcing the gate.
OracleClassifier fit_oracle(const synth::Dataset& train, const std::vector<int>& train_content,
                            const std::vector<int>& train_motion, const synth::Dataset& val,
                            const OracleConfig& config);

void save_oracle(const OracleClassifier& oracle, const std::filesystem::path& path);
OracleClassifier load_oracle(const std::filesystem::path& path);

}  // namespace cdsvae::metrics
