#include "cdsvae/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdsvae/batching.hpp"
#include "cdsvae/error.hpp"

namespace cdsvae::run {

namespace ops = cdsvae::ad;
using ad::Tensor;

namespace {

constexpr std::uint64_t kMiNoiseSalt = 0x6d692d6c6f67ULL;
constexpr std::uint64_t kValNoiseSalt = 0x76616c2d6c6fULL;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

void check_finite(const obj::LossBreakdown& b) {
  const std::pair<const char*, float> terms[] = {
      {"recon", b.recon},     {"kl_s", b.kl_s},           {"kl_z", b.kl_z},
      {"c_motion", b.c_motion}, {"c_content", b.c_content}, {"mi_sz", b.mi_sz},
      {"total", b.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term '") + name + "'");
  }
}

void clip_gradients(std::span<Tensor> params, float max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float k = static_cast<float>(max_norm / norm);
  for (auto& p : params) {
    for (float& g : p.mutable_grad()) g *= k;
  }
}

}  // namespace

std::string log_header() {
  return "epoch,recon,kl_s,kl_z,c_motion,c_content,mi_sz_mws,mi_sx_mws,mi_zx_mws,total,wall_seconds";
}

std::string log_row(const EpochLog& r) {
  std::ostringstream os;
  os << r.epoch << ',' << fmt(r.mean.recon) << ',' << fmt(r.mean.kl_s) << ',' << fmt(r.mean.kl_z)
     << ',' << fmt(r.mean.c_motion) << ',' << fmt(r.mean.c_content) << ',';
  if (r.mi) {
    os << fmt(r.mi->mi_sz) << ',' << fmt(r.mi->mi_sx) << ',' << fmt(r.mi->mi_zx);
  } else {
    os << ",,";
  }
  os << ',' << fmt(r.mean.total) << ',' << fmt(r.wall_seconds);
  return os.str();
}

obj::Objective batch_objective(const model::SeqVae& model, const Tensor& frames,
                               const RunConfig& config, std::size_t dataset_size, nn::Rng& rng) {
  return batch_objective(model, frames, config, config.loss, dataset_size, rng);
}

obj::Objective batch_objective(const model::SeqVae& model, const Tensor& frames,
                               const RunConfig& config, const obj::LossWeights& weights,
                               std::size_t dataset_size, nn::Rng& rng) {
  const auto out = model.autoencode(frames, rng);
  obj::AugmentedViews views;
  if (config.content_aug) {
    views.content = model.encode_content(aug::content_aug_batch(frames, config.augment, rng));
  }
  if (config.motion_aug) {
    Tensor xm = aug::motion_aug_batch(frames, config.augment, rng);
    views.motion = model.encode_motion(xm, model::gaussian_noise(rng)).dists;
  }
  return obj::total_loss(model, frames, out, views, weights, dataset_size);
}

Trainer::Trainer(const RunConfig& config, const synth::Dataset& train)
    : config_(config),
      train_(train),
      model_(data::fit_to(train, config.model), config.seed),
      params_(model_.params().tensors()),
      adam_(params_, config.optim),
      rng_(config.seed ^ 0x747261696eULL) {
  config_.validate();
  if (train.size() < 2) throw ContractError("training set needs at least 2 sequences");
  order_.resize(train.size());
  std::iota(order_.begin(), order_.end(), 0);
  const std::size_t b = static_cast<std::size_t>(config_.batch_size);
  steps_per_epoch_ = (train.size() + b - 1) / b;
  if (steps_per_epoch_ > 1 && train.size() % b == 1) --steps_per_epoch_;
}

obj::LossWeights Trainer::current_weights() const {
  obj::LossWeights w = config_.loss;
  if (config_.kl_warmup_epochs > 0) {
    const double ramp = static_cast<double>(config_.kl_warmup_epochs) *
                        static_cast<double>(steps_per_epoch_);
    w.alpha = static_cast<float>(w.alpha * std::min(1.0, static_cast<double>(steps_) / ramp));
  }
  return w;
}

obj::LossBreakdown Trainer::step(std::span<const std::size_t> indices) {
  const Tensor frames = data::gather_frames(train_, indices);
  ad::Tape tape;
  obj::Objective o;
  {
    ad::TapeScope scope(tape);
    o = batch_objective(model_, frames, config_, current_weights(), train_.size(), rng_);
  }
  check_finite(o.values);
  ad::backward(tape, o.total, params_);
  if (config_.grad_clip > 0.0f) clip_gradients(params_, config_.grad_clip);
  adam_.step();
  ++steps_;
  return o.values;
}

EpochLog Trainer::epoch() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  // A trailing batch of one sequence has no negatives; it joins the previous one.
  auto ranges = data::chunks(order_.size(), batch);
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
    ranges[ranges.size() - 2].second = ranges.back().second;
    ranges.pop_back();
  }
  double sums[7] = {};
  for (auto [b, e] : ranges) {
    const auto v = step(std::span<const std::size_t>(order_.data() + b, e - b));
    const float terms[7] = {v.recon, v.kl_s, v.kl_z, v.c_motion, v.c_content, v.mi_sz, v.total};
    for (int k = 0; k < 7; ++k) sums[k] += terms[k];
  }
  const double n = static_cast<double>(ranges.size());
  EpochLog log;
  log.epoch = ++epoch_;
  log.mean.recon = static_cast<float>(sums[0] / n);
  log.mean.kl_s = static_cast<float>(sums[1] / n);
  log.mean.kl_z = static_cast<float>(sums[2] / n);
  log.mean.c_motion = static_cast<float>(sums[3] / n);
  log.mean.c_content = static_cast<float>(sums[4] / n);
  log.mean.mi_sz = static_cast<float>(sums[5] / n);
  log.mean.total = static_cast<float>(sums[6] / n);
  if (epoch_ % config_.mi_log_every == 0 || epoch_ == config_.epochs || epoch_ == 1) {
    log.mi = mi_estimates();
  }
  return log;
}

MiEstimates Trainer::mi_estimates() const {
  const std::size_t m = std::min<std::size_t>(train_.size(), static_cast<std::size_t>(config_.mi_log_batch));
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  nn::Rng rng(config_.seed ^ kMiNoiseSalt);
  const auto out = model_.autoencode(data::gather_frames(train_, idx), rng);
  const auto& l = out.latent;
  const std::size_t n = train_.size();
  MiEstimates e;
  e.mi_sz = obj::mws_mi_sz(l.s_dist, l.s, l.z_dists, l.z, n).item();
  e.mi_sx = obj::mws_mi_latent_input(l.s_dist, l.s, n).item();
  e.mi_zx = obj::mws_mi_latent_input(obj::flatten_trajectory(l.z_dists),
                                     obj::flatten_trajectory(l.z), n)
                .item();
  return e;
}

double Trainer::evaluate_loss(const synth::Dataset& data) const {
  nn::Rng rng(config_.seed ^ kValNoiseSalt);
  double total = 0.0;
  std::size_t batches = 0;
  auto ranges = data::chunks(data.size(), static_cast<std::size_t>(config_.batch_size));
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
    ranges[ranges.size() - 2].second = ranges.back().second;
    ranges.pop_back();
  }
  for (auto [b, e] : ranges) {
    if (e - b < 2) continue;
    std::vector<std::size_t> idx(e - b);
    std::iota(idx.begin(), idx.end(), b);
    const auto o = batch_objective(model_, data::gather_frames(data, idx), config_,
                                   std::max(data.size(), train_.size()), rng);
    total += o.values.total;
    ++batches;
  }
  if (batches == 0) throw ContractError("validation set needs at least 2 sequences");
  return total / static_cast<double>(batches);
}

TrainResult run_train(const RunConfig& config, const synth::Dataset& train, const fs::path& out_dir,
                      const synth::Dataset* val) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

  TrainResult result;
  result.log_path = out_dir / "train_log.csv";
  result.best_checkpoint = out_dir / "ckpt_best.cdsv";
  result.final_checkpoint = out_dir / "ckpt_final.cdsv";
  {
    std::ofstream cfg(out_dir / "config.toml", std::ios::trunc);
    if (!cfg) throw IoError("cannot write " + (out_dir / "config.toml").string());
    cfg << to_toml(config);
  }
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + result.log_path.string());
  log << log_header() << '\n';

  Trainer trainer(config, train);
  const auto start = std::chrono::steady_clock::now();
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < config.epochs; ++e) {
    EpochLog row = trainer.epoch();
    if (config.record_wall_time) {
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    log << log_row(row) << '\n' << std::flush;
    if (!log) throw IoError("write failed for " + result.log_path.string());
    const double score = val != nullptr ? trainer.evaluate_loss(*val) : row.mean.total;
    if (score < best) {
      best = score;
      result.best_epoch = row.epoch;
      model::save_model(trainer.model(), result.best_checkpoint);
    }
    result.log.push_back(std::move(row));
  }
  model::save_model(trainer.model(), result.final_checkpoint);
  return result;
}

metrics::MetricReport run_eval(const model::SeqVae& model, const synth::Dataset& data,
                               const metrics::OracleClassifier& oracle, std::uint64_t seed,
                               const std::string& run_id, int passes) {
  nn::Rng rng(seed);
  metrics::MetricReport r;
  r.run_id = run_id;
  r.passes = passes;
  r.motion = metrics::swap_eval_motion(model, data, oracle, rng, passes);
  r.content = metrics::swap_eval_content(model, data, oracle, rng, passes);
  const auto features = metrics::factor_features(model, data);
  r.eer = metrics::factor_eer(features, data::content_labels(data));
  r.leakage_acc = metrics::linear_probe(features.z, data::content_labels(data),
                                        data.config.content_classes, seed);
  r.oracle_val_acc_content = oracle.val_acc_content;
  r.oracle_val_acc_motion = oracle.val_acc_motion;
  return r;
}

void write_report(const metrics::MetricReport& report, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << metrics::MetricReport::csv_header() << '\n' << report.csv_row() << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

SequenceCode encode_means(const model::SeqVae& model, const synth::Dataset& data, std::size_t index) {
  if (index >= data.size()) {
    throw ContractError("sequence index " + std::to_string(index) + " out of range (dataset has " +
                        std::to_string(data.size()) + ")");
  }
  const std::size_t idx[] = {index};
  const auto feats = model.embed(data::gather_frames(data, idx));
  SequenceCode c;
  c.s = model.encode_content(feats).mu;
  for (const auto& d : model.encode_motion(feats, model::zero_noise(), model::Feedback::kMean).dists) {
    c.z.push_back(d.mu);
  }
  return c;
}

std::vector<float> decode_code(const model::SeqVae& model, const Tensor& s,
                               std::span<const Tensor> z) {
  return model::sequence_from_batch(model.decode_sequence(s, z), 0);
}

SwapResult swap_pair(const model::SeqVae& model, const synth::Dataset& data, std::size_t i,
                     std::size_t j) {
  const auto ci = encode_means(model, data, i);
  const auto cj = encode_means(model, data, j);
  SwapResult r;
  r.original_i = data.sequences[i].frames;
  r.original_j = data.sequences[j].frames;
  r.recon_i = decode_code(model, ci.s, ci.z);
  r.recon_j = decode_code(model, cj.s, cj.z);
  r.s_i_z_j = decode_code(model, ci.s, cj.z);
  r.s_j_z_i = decode_code(model, cj.s, ci.z);
  return r;
}

SwapResult run_swap(const model::SeqVae& model, const synth::Dataset& data, std::size_t i,
                    std::size_t j, const fs::path& out_dir) {
  if (i == j) throw ContractError("swap needs two different sequences");
  auto r = swap_pair(model, data, i, j);
  const auto& g = data.config;
  const std::string si = std::to_string(i), sj = std::to_string(j);
  write_sequence_pgm(out_dir / "original", i, r.original_i, g);
  write_sequence_pgm(out_dir / "original", j, r.original_j, g);
  write_sequence_pgm(out_dir / "reconstruction", i, r.recon_i, g);
  write_sequence_pgm(out_dir / "reconstruction", j, r.recon_j, g);
  write_sequence_pgm(out_dir / ("s" + si + "_z" + sj), i, r.s_i_z_j, g);
  write_sequence_pgm(out_dir / ("s" + sj + "_z" + si), j, r.s_j_z_i, g);
  return r;
}

std::vector<std::vector<float>> interpolate_pair(const model::SeqVae& model,
                                                 const synth::Dataset& data, std::size_t a,
                                                 std::size_t b, int k) {
  if (k < 1) throw ContractError("interpolate: steps must be >= 1");
  const auto ca = encode_means(model, data, a);
  const auto cb = encode_means(model, data, b);
  std::vector<std::vector<float>> out;
  for (int n = 0; n <= k + 1; ++n) {
    const float lambda = static_cast<float>(n) / static_cast<float>(k + 1);
    Tensor s = ops::add(ops::scale(ca.s, 1.0f - lambda), ops::scale(cb.s, lambda));
    out.push_back(decode_code(model, s, ca.z));
  }
  return out;
}

std::vector<std::vector<float>> run_interpolate(const model::SeqVae& model,
                                                const synth::Dataset& data, std::size_t a,
                                                std::size_t b, int k, const fs::path& out_dir) {
  auto seqs = interpolate_pair(model, data, a, b, k);
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    write_sequence_pgm(out_dir / ("lambda" + std::to_string(n)), a, seqs[n], data.config);
  }
  return seqs;
}

void write_pgm(const fs::path& path, std::span<const float> pixels, int width, int height) {
  if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("write_pgm: pixel count does not match " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<char> bytes(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const float v = std::isfinite(pixels[i]) ? std::clamp(pixels[i], 0.0f, 1.0f) : 0.0f;
    bytes[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (is.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(is, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P5") throw FormatError(path.string() + " is not a binary PGM");
  GrayImage img;
  int maxval = 0;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0 || maxval != 255) {
    throw FormatError(path.string() + ": unsupported PGM header");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw FormatError(path.string() + ": truncated pixel data");
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return img;
}

void write_sequence_pgm(const fs::path& dir, std::size_t index, std::span<const float> sequence,
                        const synth::SyntheticConfig& g) {
  if (sequence.size() != g.sequence_size()) throw DimensionError("write_sequence_pgm: wrong length");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  const std::size_t hw = static_cast<std::size_t>(g.height) * g.width;
  for (int t = 0; t < g.steps; ++t) {
    std::vector<float> gray(hw);
    const float* frame = sequence.data() + static_cast<std::size_t>(t) * g.frame_size();
    for (std::size_t p = 0; p < hw; ++p) {
      float acc = 0.0f;
      for (int ch = 0; ch < g.channels; ++ch) acc += frame[p * g.channels + ch];
      gray[p] = acc / static_cast<float>(g.channels);
    }
    write_pgm(dir / ("seq" + std::to_string(index) + "_t" + std::to_string(t) + ".pgm"), gray,
              g.width, g.height);
  }
}

}  // namespace cdsvae::run
