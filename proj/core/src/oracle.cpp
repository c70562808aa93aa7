#include "cdsvae/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cdsvae/adam.hpp"
#include "cdsvae/batching.hpp"
#include "cdsvae/seqvae.hpp"

namespace cdsvae::metrics {

namespace ops = cdsvae::ad;

OracleClassifier::OracleClassifier(int steps, int frame_size, int content_classes,
                                   int motion_classes, int hidden, std::uint64_t seed)
    : steps_(steps),
      frame_size_(frame_size),
      content_classes_(content_classes),
      motion_classes_(motion_classes) {
  if (steps < 1 || frame_size < 1 || content_classes < 2 || motion_classes < 2 || hidden < 1) {
    throw ContractError("oracle: invalid sizes");
  }
  nn::Rng rng(seed);
  frame1_ = nn::Linear(params_, "oracle.frame.0", frame_size, hidden, rng);
  frame2_ = nn::Linear(params_, "oracle.frame.1", hidden, hidden, rng);
  content_head_ = nn::Linear(params_, "oracle.content", hidden, content_classes, rng);
  motion1_ = nn::Linear(params_, "oracle.motion.0", steps * hidden, hidden, rng);
  motion2_ = nn::Linear(params_, "oracle.motion.1", hidden, motion_classes, rng);
}

std::pair<Tensor, Tensor> OracleClassifier::logits(const Tensor& frames) const {
  if (frames.rank() != 3 || frames.dim(0) != steps_ || frames.dim(2) != frame_size_) {
    throw DimensionError("oracle: frames must be [" + std::to_string(steps_) + ", batch, " +
                         std::to_string(frame_size_) + "], got " + ad::to_string(frames.dims()));
  }
  const int batch = frames.dim(1);
  Tensor flat = ops::reshape(frames, {steps_ * batch, frame_size_});
  Tensor h = ops::tanh(frame2_(ops::tanh(frame1_(flat))));
  std::vector<Tensor> per_step;
  for (int t = 0; t < steps_; ++t) per_step.push_back(ops::slice(h, 0, t * batch, batch));
  Tensor pooled = per_step.front();
  for (int t = 1; t < steps_; ++t) pooled = ops::add(pooled, per_step[t]);
  pooled = ops::scale(pooled, 1.0f / static_cast<float>(steps_));
  Tensor content = content_head_(pooled);
  Tensor motion = motion2_(ops::tanh(motion1_(ops::concat(per_step, 1))));
  return {content, motion};
}

namespace {

ProbMatrix softmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  const auto v = logits.data();
  ProbMatrix out(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(k)));
  for (int i = 0; i < n; ++i) {
    const float* row = v.data() + static_cast<std::size_t>(i) * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j) out[i][j] = std::exp(row[j] - mx) / z;
  }
  return out;
}

OraclePrediction predict_chunked(const OracleClassifier& oracle, const synth::Dataset& data) {
  OraclePrediction out;
  for (auto [b, e] : data::chunks(data.size(), 256)) {
    std::vector<std::size_t> idx(e - b);
    std::iota(idx.begin(), idx.end(), b);
    auto p = oracle.predict(data::gather_frames(data, idx));
    out.content.insert(out.content.end(), p.content.begin(), p.content.end());
    out.motion.insert(out.motion.end(), p.motion.begin(), p.motion.end());
  }
  return out;
}

}  // namespace

OraclePrediction OracleClassifier::predict(const Tensor& frames) const {
  auto [c, m] = logits(frames.detach());
  return {softmax_rows(c), softmax_rows(m)};
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + ad::to_string(logits.dims()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<float> onehot(static_cast<std::size_t>(n) * k, 0.0f);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw ContractError("cross_entropy: label out of range");
    onehot[static_cast<std::size_t>(i) * k + labels[i]] = 1.0f;
  }
  Tensor picked = ops::sum(ops::mul(logits, Tensor::from({n, k}, std::move(onehot))), 1);
  return ops::mean(ops::sub(ops::logsumexp(logits, 1), picked));
}

double accuracy(const ProbMatrix& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw ContractError("accuracy: need one non-empty prediction per label");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto best = std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin();
    if (best == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

OracleClassifier fit_oracle(const synth::Dataset& train, const std::vector<int>& train_content,
                            const std::vector<int>& train_motion, const synth::Dataset& val,
                            const OracleConfig& config) {
  if (train.size() == 0 || val.size() == 0) throw ContractError("oracle: empty dataset");
  if (train_content.size() != train.size() || train_motion.size() != train.size()) {
    throw ContractError("oracle: label count does not match the dataset");
  }
  const auto& sc = train.config;
  OracleClassifier oracle(sc.steps, static_cast<int>(sc.frame_size()), sc.content_classes,
                          sc.motion_classes, config.hidden, config.seed);
  auto params = oracle.params().tensors();
  ad::Adam adam(params, {.lr = config.lr});
  nn::Rng rng(config.seed ^ 0x6f7261636c65ULL);
  std::normal_distribution<float> noise(0.0f, 1.0f);

  const auto val_c = data::content_labels(val);
  const auto val_m = data::motion_labels(val);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto best = model::snapshot(oracle.params());
  double best_score = -1.0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto [b, e] : data::chunks(order.size(), static_cast<std::size_t>(config.batch))) {
      std::span<const std::size_t> idx(order.data() + b, e - b);
      Tensor x = data::gather_frames(train, idx);
      if (config.input_noise > 0.0f) {
        for (float& v : x.mutable_data()) v += config.input_noise * noise(rng);
      }
      std::vector<int> yc, ym;
      for (std::size_t i : idx) {
        yc.push_back(train_content[i]);
        ym.push_back(train_motion[i]);
      }
      ad::Tape tape;
      Tensor loss;
      {
        ad::TapeScope scope(tape);
        auto [lc, lm] = oracle.logits(x);
        loss = ops::add(cross_entropy(lc, yc), cross_entropy(lm, ym));
      }
      ad::backward(tape, loss, params);
      adam.step();
    }
    const auto pred = predict_chunked(oracle, val);
    const double ac = accuracy(pred.content, val_c);
    const double am = accuracy(pred.motion, val_m);
    if (std::min(ac, am) > best_score) {
      best_score = std::min(ac, am);
      best = model::snapshot(oracle.params());
      oracle.val_acc_content = ac;
      oracle.val_acc_motion = am;
    }
    if (ac >= config.target_acc && am >= config.target_acc) break;
  }
  const double ac = oracle.val_acc_content, am = oracle.val_acc_motion;
  model::restore(oracle.params(), best);
  oracle.val_acc_content = ac;
  oracle.val_acc_motion = am;
  return oracle;
}

OracleClassifier train_oracle(const synth::Dataset& train, const synth::Dataset& val,
                              const OracleConfig& config) {
  auto oracle = fit_oracle(train, data::content_labels(train), data::motion_labels(train), val,
                           config);
  if (!oracle.qualified()) {
    throw GateError("oracle failed its qualification gate: validation accuracy content " +
                    std::to_string(oracle.val_acc_content) + ", motion " +
                    std::to_string(oracle.val_acc_motion) + " (need >= " +
                    std::to_string(kOracleGate) + ")");
  }
  return oracle;
}

void save_oracle(const OracleClassifier& oracle, const std::filesystem::path& path) {
  auto tensors = model::snapshot(oracle.params());
  tensors.push_back({"oracle.val_acc", {2},
                     {static_cast<float>(oracle.val_acc_content),
                      static_cast<float>(oracle.val_acc_motion)}});
  model::write_tensors(tensors, path);
}

OracleClassifier load_oracle(const std::filesystem::path& path) {
  auto tensors = model::read_tensors(path);
  if (tensors.empty() || tensors.back().name != "oracle.val_acc" || tensors.back().values.size() != 2) {
    throw FormatError(path.string() + " is not an oracle checkpoint");
  }
  const auto acc = tensors.back().values;
  tensors.pop_back();
  auto find = [&](const std::string& name) -> const model::NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name && t.dims.size() == 2) return t;
    }
    throw FormatError("oracle checkpoint is missing '" + name + "'");
  };
  const auto& f0 = find("oracle.frame.0.weight");
  const auto& head = find("oracle.content.weight");
  const auto& m0 = find("oracle.motion.0.weight");
  const auto& m1 = find("oracle.motion.1.weight");
  const int hidden = f0.dims[1];
  if (m0.dims[0] % hidden != 0) throw FormatError("oracle checkpoint has inconsistent sizes");
  OracleClassifier oracle(m0.dims[0] / hidden, f0.dims[0], head.dims[1], m1.dims[1], hidden, 0);
  model::restore(oracle.params(), tensors);
  oracle.val_acc_content = acc[0];
  oracle.val_acc_motion = acc[1];
  return oracle;
}

}  // namespace cdsvae::metrics
