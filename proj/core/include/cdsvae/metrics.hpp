#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdsvae/oracle.hpp"
#include "cdsvae/seqvae.hpp"
#include "cdsvae/synthseq.hpp"

namespace cdsvae::metrics {

// Acc, IS, H(y) and H(y|x) of a set of predicted label distributions.
struct ClassScores {
  double acc = 0.0;
  double is_score = 1.0;
  double h_y = 0.0;
  double h_y_given_x = 0.0;
  std::size_t n = 0;
};

// exp(mean_i KL(p(y|x_i) || p(y))) with p(y) the mean prediction.
double inception_score(const ProbMatrix& probs);
double marginal_entropy(const ProbMatrix& probs);
double conditional_entropy(const ProbMatrix& probs);
// `labels` may be empty, in which case acc is left at 0.
ClassScores score_predictions(const ProbMatrix& probs, const std::vector<int>& labels);

// Equal error rate of a same/different verification task: positives should
// score high. Computed on the convex hull of the ROC (ties resolved as
// diagonal segments), so it is exact for step-shaped curves.
double eer(std::span<const double> positive, std::span<const double> negative);

// Posterior-mean factor representations of every sequence, computed one
// sequence at a time: s is [d_s], z is the flattened [T * d_m].
struct FactorFeatures {
  std::vector<std::vector<float>> s;
  std::vector<std::vector<float>> z;
};
FactorFeatures factor_features(const model::SeqVae& model, const synth::Dataset& data);

double cosine(std::span<const float> a, std::span<const float> b);

struct FactorEer {
  double content_eer = 0.5;
  double motion_eer = 0.5;
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
  std::size_t skipped_classes = 0;  // content classes with fewer than two sequences
};
// Pairs sharing y_s are positives; content EER scores them with cosine
// similarity of s means, motion EER with cosine similarity of z means.
FactorEer factor_eer(const FactorFeatures& features, const std::vector<int>& content_labels);
FactorEer factor_eer(const model::SeqVae& model, const synth::Dataset& data);

// Fix the motion posterior means, draw s from the prior, decode and score
// the oracle's motion head against the true motion labels.
ClassScores swap_eval_motion(const model::SeqVae& model, const synth::Dataset& data,
                             const OracleClassifier& oracle, nn::Rng& rng, int passes = 1);
// Fix the content posterior means, roll z out of the prior, decode and score
// the oracle's content head.
ClassScores swap_eval_content(const model::SeqVae& model, const synth::Dataset& data,
                              const OracleClassifier& oracle, nn::Rng& rng, int passes = 1);

// Softmax-regression probe: fits on the first half of (features, labels) and
// reports accuracy on the second half.
double linear_probe(const std::vector<std::vector<float>>& features, const std::vector<int>& labels,
                    int classes, std::uint64_t seed = 0);

struct MetricReport {
  std::string run_id;
  ClassScores motion;   // swap_eval_motion
  ClassScores content;  // swap_eval_content
  FactorEer eer;
  double leakage_acc = 0.0;  // y_s predicted from z means
  double oracle_val_acc_content = 0.0;
  double oracle_val_acc_motion = 0.0;
  int passes = 1;

  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace cdsvae::metrics
