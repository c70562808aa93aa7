#include "cdsvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "cdsvae/adam.hpp"
#include "cdsvae/batching.hpp"
#include "cdsvae/error.hpp"

namespace cdsvae::metrics {

namespace ops = cdsvae::ad;

namespace {

std::vector<double> marginal(const ProbMatrix& probs) {
  if (probs.empty()) throw ContractError("metrics: empty prediction set");
  std::vector<double> py(probs.front().size(), 0.0);
  for (const auto& p : probs) {
    if (p.size() != py.size()) throw DimensionError("metrics: ragged prediction set");
    for (std::size_t k = 0; k < p.size(); ++k) py[k] += p[k];
  }
  for (auto& v : py) v /= static_cast<double>(probs.size());
  return py;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

double inception_score(const ProbMatrix& probs) {
  const auto py = marginal(probs);
  double kl = 0.0;
  for (const auto& p : probs) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(py[k]));
    }
  }
  return std::exp(kl / static_cast<double>(probs.size()));
}

double marginal_entropy(const ProbMatrix& probs) { return entropy(marginal(probs)); }

double conditional_entropy(const ProbMatrix& probs) {
  if (probs.empty()) throw ContractError("metrics: empty prediction set");
  double h = 0.0;
  for (const auto& p : probs) h += entropy(p);
  return h / static_cast<double>(probs.size());
}

ClassScores score_predictions(const ProbMatrix& probs, const std::vector<int>& labels) {
  ClassScores s;
  s.n = probs.size();
  s.is_score = inception_score(probs);
  s.h_y = marginal_entropy(probs);
  s.h_y_given_x = conditional_entropy(probs);
  if (!labels.empty()) s.acc = accuracy(probs, labels);
  return s;
}

double eer(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) throw ContractError("eer: empty score list");
  std::vector<std::pair<double, int>> scores;  // (score, 1 = positive)
  for (double v : positive) scores.emplace_back(v, 1);
  for (double v : negative) scores.emplace_back(v, 0);
  std::sort(scores.begin(), scores.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());

  // Operating points (false acceptance, false rejection) as the acceptance
  // threshold sweeps down through each distinct score.
  std::vector<std::pair<double, double>> roc{{0.0, 1.0}};
  std::size_t accepted_pos = 0, accepted_neg = 0;
  for (std::size_t i = 0; i < scores.size();) {
    std::size_t j = i;
    while (j < scores.size() && scores[j].first == scores[i].first) {
      (scores[j].second ? accepted_pos : accepted_neg) += 1;
      ++j;
    }
    roc.emplace_back(accepted_neg / nn, 1.0 - accepted_pos / np);
    i = j;
  }

  // Lower convex hull; points arrive with non-decreasing x.
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : roc) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      const double cross = (b.first - a.first) * (p.second - a.second) -
                           (b.second - a.second) * (p.first - a.first);
      if (cross <= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(p);
  }

  for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
    const auto [x1, y1] = hull[k];
    const auto [x2, y2] = hull[k + 1];
    const double d1 = y1 - x1, d2 = y2 - x2;
    if (d1 >= 0.0 && d2 <= 0.0) {
      if (d1 == d2) return x1;
      const double t = d1 / (d1 - d2);
      return x1 + t * (x2 - x1);
    }
  }
  return 0.5;
}

FactorFeatures factor_features(const model::SeqVae& model, const synth::Dataset& data) {
  FactorFeatures f;
  f.s.reserve(data.size());
  f.z.reserve(data.size());
  const auto noise = model::zero_noise();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t idx[] = {i};
    const auto feats = model.embed(data::gather_frames(data, idx));
    const auto s = model.encode_content(feats);
    const auto z = model.encode_motion(feats, noise, model::Feedback::kMean);
    f.s.emplace_back(s.mu.data().begin(), s.mu.data().end());
    std::vector<float> zf;
    for (const auto& d : z.dists) zf.insert(zf.end(), d.mu.data().begin(), d.mu.data().end());
    f.z.push_back(std::move(zf));
  }
  return f;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double floor = 1e-8;
  return dot / (std::max(std::sqrt(na), floor) * std::max(std::sqrt(nb), floor));
}

FactorEer factor_eer(const FactorFeatures& features, const std::vector<int>& content_labels) {
  const std::size_t n = content_labels.size();
  if (features.s.size() != n || features.z.size() != n) {
    throw DimensionError("factor_eer: feature count does not match labels");
  }
  std::map<int, std::size_t> counts;
  for (int y : content_labels) ++counts[y];
  FactorEer out;
  for (const auto& [label, c] : counts) {
    if (c < 2) ++out.skipped_classes;
  }
  std::vector<double> pos_s, neg_s, pos_z, neg_z;
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[content_labels[i]] < 2) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (counts[content_labels[j]] < 2) continue;
      const double cs = cosine(features.s[i], features.s[j]);
      const double cz = cosine(features.z[i], features.z[j]);
      if (content_labels[i] == content_labels[j]) {
        pos_s.push_back(cs);
        pos_z.push_back(cz);
      } else {
        neg_s.push_back(cs);
        neg_z.push_back(cz);
      }
    }
  }
  out.positive_pairs = pos_s.size();
  out.negative_pairs = neg_s.size();
  if (pos_s.empty() || neg_s.empty()) {
    throw ContractError("factor_eer: need at least two content classes with two sequences each");
  }
  out.content_eer = eer(pos_s, neg_s);
  out.motion_eer = eer(pos_z, neg_z);
  return out;
}

FactorEer factor_eer(const model::SeqVae& model, const synth::Dataset& data) {
  return factor_eer(factor_features(model, data), data::content_labels(data));
}

namespace {

constexpr std::size_t kEvalBatch = 128;

void check_compatible(const model::SeqVae& model, const OracleClassifier& oracle,
                      const synth::Dataset& data) {
  if (!oracle.qualified()) {
    throw GateError("refusing to evaluate against an unqualified oracle");
  }
  const auto& mc = model.config();
  if (oracle.steps() != mc.steps || oracle.frame_size() != mc.frame_size() ||
      data.config.steps != mc.steps ||
      static_cast<int>(data.config.frame_size()) != mc.frame_size()) {
    throw DimensionError("model, oracle and dataset geometries differ");
  }
  if (oracle.content_classes() != data.config.content_classes ||
      oracle.motion_classes() != data.config.motion_classes) {
    throw DimensionError("oracle class counts do not match the dataset");
  }
}

}  // namespace

ClassScores swap_eval_motion(const model::SeqVae& model, const synth::Dataset& data,
                             const OracleClassifier& oracle, nn::Rng& rng, int passes) {
  check_compatible(model, oracle, data);
  if (passes < 1) throw ContractError("swap_eval: passes must be >= 1");
  const auto labels = data::motion_labels(data);
  ProbMatrix probs;
  std::vector<int> truth;
  const auto noise = model::zero_noise();
  for (int pass = 0; pass < passes; ++pass) {
    for (auto [b, e] : data::chunks(data.size(), kEvalBatch)) {
      std::vector<std::size_t> idx(e - b);
      std::iota(idx.begin(), idx.end(), b);
      const auto motion = model.encode_motion(data::gather_frames(data, idx), noise,
                                              model::Feedback::kMean);
      std::vector<Tensor> z;
      for (const auto& d : motion.dists) z.push_back(d.mu);
      const int batch = static_cast<int>(idx.size());
      Tensor s = nn::standard_normal({batch, model.config().static_dim}, rng);
      const auto pred = oracle.predict(model.decode_sequence(s, z));
      probs.insert(probs.end(), pred.motion.begin(), pred.motion.end());
      for (std::size_t i : idx) truth.push_back(labels[i]);
    }
  }
  return score_predictions(probs, truth);
}

ClassScores swap_eval_content(const model::SeqVae& model, const synth::Dataset& data,
                              const OracleClassifier& oracle, nn::Rng& rng, int passes) {
  check_compatible(model, oracle, data);
  if (passes < 1) throw ContractError("swap_eval: passes must be >= 1");
  const auto labels = data::content_labels(data);
  ProbMatrix probs;
  std::vector<int> truth;
  for (int pass = 0; pass < passes; ++pass) {
    for (auto [b, e] : data::chunks(data.size(), kEvalBatch)) {
      std::vector<std::size_t> idx(e - b);
      std::iota(idx.begin(), idx.end(), b);
      const auto s = model.encode_content(data::gather_frames(data, idx));
      const int batch = static_cast<int>(idx.size());
      const auto prior = model.prior_rollout(model.config().steps, batch, rng);
      const auto pred = oracle.predict(model.decode_sequence(s.mu, prior.z));
      probs.insert(probs.end(), pred.content.begin(), pred.content.end());
      for (std::size_t i : idx) truth.push_back(labels[i]);
    }
  }
  return score_predictions(probs, truth);
}

double linear_probe(const std::vector<std::vector<float>>& features, const std::vector<int>& labels,
                    int classes, std::uint64_t seed) {
  const std::size_t n = features.size();
  if (n < 4 || labels.size() != n) throw ContractError("linear_probe: need >= 4 labeled rows");
  const int d = static_cast<int>(features.front().size());
  const std::size_t n_train = n / 2;

  // Standardise with training statistics.
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0), sd(static_cast<std::size_t>(d), 0.0);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (int k = 0; k < d; ++k) mean[k] += features[i][k];
  }
  for (auto& m : mean) m /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (int k = 0; k < d; ++k) sd[k] += std::pow(features[i][k] - mean[k], 2);
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n_train)) + 1e-6;
  auto matrix = [&](std::size_t b, std::size_t e) {
    std::vector<float> v;
    v.reserve((e - b) * static_cast<std::size_t>(d));
    for (std::size_t i = b; i < e; ++i) {
      for (int k = 0; k < d; ++k) v.push_back(static_cast<float>((features[i][k] - mean[k]) / sd[k]));
    }
    return Tensor::from({static_cast<int>(e - b), d}, std::move(v));
  };
  const Tensor x_train = matrix(0, n_train);
  const Tensor x_test = matrix(n_train, n);
  const std::vector<int> y_train(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<int> y_test(labels.begin() + static_cast<std::ptrdiff_t>(n_train), labels.end());

  nn::ParamSet params;
  nn::Rng rng(seed);
  nn::Linear probe(params, "probe", d, classes, rng);
  auto tensors = params.tensors();
  ad::Adam adam(tensors, {.lr = 0.05f});
  for (int it = 0; it < 300; ++it) {
    ad::Tape tape;
    Tensor loss;
    {
      ad::TapeScope scope(tape);
      loss = cross_entropy(probe(x_train), y_train);
    }
    ad::backward(tape, loss, tensors);
    adam.step();
  }
  const Tensor logits = probe(x_test);
  const auto v = logits.data();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_test.size(); ++i) {
    const float* row = v.data() + i * static_cast<std::size_t>(classes);
    if (std::max_element(row, row + classes) - row == y_test[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(y_test.size());
}

std::string MetricReport::csv_header() {
  return "run_id,acc,is,h_y,h_y_given_x,content_eer,motion_eer,n_eval,"
         "oracle_val_acc_content,oracle_val_acc_motion,"
         "content_acc,content_is,content_h_y,content_h_y_given_x,leakage_acc,passes";
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os.precision(9);
  os << run_id << ',' << motion.acc << ',' << motion.is_score << ',' << motion.h_y << ','
     << motion.h_y_given_x << ',' << eer.content_eer << ',' << eer.motion_eer << ',' << motion.n
     << ',' << oracle_val_acc_content << ',' << oracle_val_acc_motion << ',' << content.acc << ','
     << content.is_score << ',' << content.h_y << ',' << content.h_y_given_x << ',' << leakage_acc
     << ',' << passes;
  return os.str();
}

}  // namespace cdsvae::metrics
