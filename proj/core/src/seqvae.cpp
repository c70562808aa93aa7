#include "cdsvae/seqvae.hpp"

#include <fstream>

#include "cdsvae/binary_io.hpp"
#include "cdsvae/error.hpp"

namespace cdsvae::model {

namespace ops = cdsvae::ad;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  if (steps < 2) throw ContractError("model config: steps must be >= 2");
  for (int v : {height, width, channels, static_dim, dynamic_dim, enc_hidden, prior_hidden,
                dec_hidden}) {
    if (v <= 0) throw ContractError("model config: sizes must be positive");
  }
  if (!(likelihood_std > 0.0f)) throw ContractError("model config: likelihood_std must be > 0");
}

DiagGaussian gaussian_from_head(const Tensor& head, int dim) {
  if (head.rank() != 2 || head.dim(1) != 2 * dim) {
    throw DimensionError("gaussian head: expected [batch, " + std::to_string(2 * dim) +
                         "], got " + ad::to_string(head.dims()));
  }
  return {ops::slice(head, 1, 0, dim),
          ops::clamp(ops::slice(head, 1, dim, dim), kLogvarMin, kLogvarMax)};
}

DiagGaussian standard_gaussian(int batch, int dim) {
  return {Tensor::zeros({batch, dim}), Tensor::zeros({batch, dim})};
}

Tensor sample_reparam(const DiagGaussian& d, const Tensor& eps) {
  if (eps.dims() != d.mu.dims()) {
    throw DimensionError("sample_reparam: noise dims " + ad::to_string(eps.dims()) +
                         " vs distribution dims " + ad::to_string(d.mu.dims()));
  }
  return ops::add(d.mu, ops::mul(ops::exp(ops::scale(d.logvar, 0.5f)), eps));
}

NoiseFn gaussian_noise(Rng& rng) {
  return [&rng](const ad::Dims& dims) { return nn::standard_normal(dims, rng); };
}

NoiseFn zero_noise() {
  return [](const ad::Dims& dims) { return Tensor::zeros(dims); };
}

SeqVae::SeqVae(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int p = config_.frame_size();
  const int e = config_.enc_hidden;
  const int ds = config_.static_dim;
  const int dm = config_.dynamic_dim;
  embed1_ = nn::Linear(params_, "embed.0", p, e, rng);
  embed2_ = nn::Linear(params_, "embed.1", e, e, rng);
  content_fwd_ = nn::LstmCell(params_, "content.fwd", e, e, rng);
  content_bwd_ = nn::LstmCell(params_, "content.bwd", e, e, rng);
  content_head_ = nn::Linear(params_, "content.head", 2 * e, 2 * ds, rng);
  motion_cell_ = nn::LstmCell(params_, "motion.cell", e + dm, e, rng);
  motion_head_ = nn::Linear(params_, "motion.head", e, 2 * dm, rng);
  prior_cell_ = nn::LstmCell(params_, "prior.cell", dm, config_.prior_hidden, rng);
  prior_head_ = nn::Linear(params_, "prior.head", config_.prior_hidden, 2 * dm, rng);
  dec1_ = nn::Linear(params_, "decoder.0", ds + dm, config_.dec_hidden, rng);
  dec2_ = nn::Linear(params_, "decoder.1", config_.dec_hidden, config_.dec_hidden, rng);
  dec3_ = nn::Linear(params_, "decoder.2", config_.dec_hidden, p, rng);
}

void SeqVae::check_frames(const Tensor& frames) const {
  if (frames.rank() != 3 || frames.dim(0) != config_.steps ||
      frames.dim(2) != config_.frame_size()) {
    throw DimensionError("frames must be [" + std::to_string(config_.steps) + ", batch, " +
                         std::to_string(config_.frame_size()) + "], got " +
                         ad::to_string(frames.dims()));
  }
}

std::vector<Tensor> SeqVae::embed(const Tensor& frames) const {
  check_frames(frames);
  const int t_len = frames.dim(0), batch = frames.dim(1);
  Tensor flat = ops::reshape(frames, {t_len * batch, config_.frame_size()});
  Tensor h = ops::tanh(embed2_(ops::tanh(embed1_(flat))));
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) out.push_back(ops::slice(h, 0, t * batch, batch));
  return out;
}

DiagGaussian SeqVae::encode_content(const Tensor& frames) const {
  return encode_content(embed(frames));
}

DiagGaussian SeqVae::encode_content(std::span<const Tensor> features) const {
  if (features.empty()) throw ContractError("encode_content: empty sequence");
  const int batch = features.front().dim(0);
  const int t_len = static_cast<int>(features.size());
  Tensor all = ops::concat(features, 0);
  Tensor proj_f = ops::matmul(all, content_fwd_.w_input);
  Tensor proj_b = ops::matmul(all, content_bwd_.w_input);
  nn::LstmState fwd = content_fwd_.zero_state(batch);
  nn::LstmState bwd = content_bwd_.zero_state(batch);
  for (int t = 0; t < t_len; ++t) {
    fwd = content_fwd_.step(ops::slice(proj_f, 0, t * batch, batch), fwd);
    bwd = content_bwd_.step(ops::slice(proj_b, 0, (t_len - 1 - t) * batch, batch), bwd);
  }
  return gaussian_from_head(content_head_(ops::concat({fwd.h, bwd.h}, 1)), config_.static_dim);
}

MotionPosterior SeqVae::encode_motion(const Tensor& frames, const NoiseFn& noise,
                                      Feedback feedback) const {
  return encode_motion(embed(frames), noise, feedback);
}

MotionPosterior SeqVae::encode_motion(std::span<const Tensor> features, const NoiseFn& noise,
                                      Feedback feedback) const {
  if (features.empty()) throw ContractError("encode_motion: empty sequence");
  const int batch = features.front().dim(0);
  const int t_len = static_cast<int>(features.size());
  const int e = config_.enc_hidden;
  const int dm = config_.dynamic_dim;
  Tensor w_feat = ops::slice(motion_cell_.w_input, 0, 0, e);
  Tensor w_z = ops::slice(motion_cell_.w_input, 0, e, dm);
  Tensor proj = ops::matmul(ops::concat(features, 0), w_feat);
  nn::LstmState state = motion_cell_.zero_state(batch);
  Tensor z_prev = Tensor::zeros({batch, dm});
  MotionPosterior out;
  for (int t = 0; t < t_len; ++t) {
    Tensor step_in = ops::slice(proj, 0, t * batch, batch);
    if (t > 0) step_in = ops::add(step_in, ops::matmul(z_prev, w_z));
    state = motion_cell_.step(step_in, state);
    DiagGaussian d = gaussian_from_head(motion_head_(state.h), dm);
    Tensor z = sample_reparam(d, noise({batch, dm}));
    z_prev = feedback == Feedback::kSample ? z : d.mu;
    out.dists.push_back(std::move(d));
    out.samples.push_back(std::move(z));
  }
  return out;
}

std::vector<DiagGaussian> SeqVae::motion_along(std::span<const Tensor> features,
                                               std::span<const Tensor> z) const {
  if (features.empty() || features.size() != z.size()) {
    throw ContractError("motion_along: need one z per frame");
  }
  const int batch = features.front().dim(0);
  const int t_len = static_cast<int>(features.size());
  const int e = config_.enc_hidden;
  const int dm = config_.dynamic_dim;
  Tensor w_feat = ops::slice(motion_cell_.w_input, 0, 0, e);
  Tensor w_z = ops::slice(motion_cell_.w_input, 0, e, dm);
  Tensor proj = ops::matmul(ops::concat(features, 0), w_feat);
  nn::LstmState state = motion_cell_.zero_state(batch);
  std::vector<DiagGaussian> out;
  for (int t = 0; t < t_len; ++t) {
    Tensor step_in = ops::slice(proj, 0, t * batch, batch);
    if (t > 0) step_in = ops::add(step_in, ops::matmul(z[t - 1], w_z));
    state = motion_cell_.step(step_in, state);
    out.push_back(gaussian_from_head(motion_head_(state.h), dm));
  }
  return out;
}

std::vector<DiagGaussian> SeqVae::prior_along(std::span<const Tensor> z) const {
  if (z.empty()) throw ContractError("prior_along: empty trajectory");
  const int batch = z.front().dim(0);
  const int dm = config_.dynamic_dim;
  nn::LstmState state = prior_cell_.zero_state(batch);
  Tensor z_prev = Tensor::zeros({batch, dm});
  std::vector<DiagGaussian> out;
  for (std::size_t t = 0; t < z.size(); ++t) {
    state = prior_cell_.step(ops::matmul(z_prev, prior_cell_.w_input), state);
    out.push_back(gaussian_from_head(prior_head_(state.h), dm));
    z_prev = z[t];
  }
  return out;
}

LatentSample SeqVae::prior_rollout(int steps, int batch, Rng& rng) const {
  if (steps < 1) throw ContractError("prior_rollout: need at least one step");
  if (batch < 1) throw ContractError("prior_rollout: need batch >= 1");
  const int dm = config_.dynamic_dim;
  LatentSample out;
  out.s_dist = standard_gaussian(batch, config_.static_dim);
  out.s = nn::standard_normal({batch, config_.static_dim}, rng);
  nn::LstmState state = prior_cell_.zero_state(batch);
  Tensor z_prev = Tensor::zeros({batch, dm});
  for (int t = 0; t < steps; ++t) {
    state = prior_cell_.step(ops::matmul(z_prev, prior_cell_.w_input), state);
    DiagGaussian d = gaussian_from_head(prior_head_(state.h), dm);
    z_prev = sample_reparam(d, nn::standard_normal({batch, dm}, rng));
    out.z_dists.push_back(std::move(d));
    out.z.push_back(z_prev);
  }
  return out;
}

Tensor SeqVae::decode(const Tensor& s, const Tensor& z_t) const {
  if (s.rank() != 2 || z_t.rank() != 2 || s.dim(1) != config_.static_dim ||
      z_t.dim(1) != config_.dynamic_dim || s.dim(0) != z_t.dim(0)) {
    throw DimensionError("decode: s " + ad::to_string(s.dims()) + ", z " +
                         ad::to_string(z_t.dims()));
  }
  Tensor h = ops::tanh(dec1_(ops::concat({s, z_t}, 1)));
  return dec3_(ops::tanh(dec2_(h)));
}

Tensor SeqVae::decode_sequence(const Tensor& s, std::span<const Tensor> z) const {
  if (z.empty()) throw ContractError("decode_sequence: empty trajectory");
  const int batch = s.dim(0);
  const int t_len = static_cast<int>(z.size());
  std::vector<Tensor> s_rep(z.size(), s);
  Tensor flat = decode(ops::concat(s_rep, 0), ops::concat(z, 0));
  return ops::reshape(flat, {t_len, batch, config_.frame_size()});
}

Reconstruction SeqVae::autoencode(const Tensor& frames, Rng& rng) const {
  const auto features = embed(frames);
  Reconstruction r;
  r.latent.s_dist = encode_content(features);
  r.latent.s = sample_reparam(r.latent.s_dist,
                              nn::standard_normal(r.latent.s_dist.mu.dims(), rng));
  MotionPosterior motion = encode_motion(features, gaussian_noise(rng));
  r.latent.z_dists = std::move(motion.dists);
  r.latent.z = std::move(motion.samples);
  r.frames = decode_sequence(r.latent.s, r.latent.z);
  return r;
}

Tensor batch_frames(std::span<const std::vector<float>> sequences, int steps, int frame_size) {
  const int batch = static_cast<int>(sequences.size());
  if (batch == 0) throw ContractError("batch_frames: empty batch");
  const std::size_t fs = static_cast<std::size_t>(frame_size);
  std::vector<float> out(static_cast<std::size_t>(steps) * batch * fs);
  for (int m = 0; m < batch; ++m) {
    const auto& seq = sequences[static_cast<std::size_t>(m)];
    if (seq.size() != static_cast<std::size_t>(steps) * fs) {
      throw DimensionError("batch_frames: sequence " + std::to_string(m) + " has " +
                           std::to_string(seq.size()) + " values");
    }
    for (int t = 0; t < steps; ++t) {
      std::copy_n(seq.begin() + static_cast<std::ptrdiff_t>(t * fs), fs,
                  out.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(t) * batch + m) * fs));
    }
  }
  return Tensor::from({steps, batch, frame_size}, std::move(out));
}

std::vector<float> sequence_from_batch(const Tensor& frames, int index) {
  const int steps = frames.dim(0), batch = frames.dim(1), fs = frames.dim(2);
  if (index < 0 || index >= batch) throw ContractError("sequence_from_batch: index out of range");
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(steps) * fs);
  const auto v = frames.data();
  for (int t = 0; t < steps; ++t) {
    const auto* src = v.data() + (static_cast<std::size_t>(t) * batch + index) * fs;
    out.insert(out.end(), src, src + fs);
  }
  return out;
}

void write_tensors(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write("CDSV", 4);
  io::put<std::uint32_t>(os, kCheckpointVersion);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.values.size() != ad::numel(t.dims)) {
      throw DimensionError("write_tensors: '" + t.name + "' value count mismatch");
    }
    io::put<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    io::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (int d : t.dims) io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    io::put_floats(os, t.values);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  io::expect_magic(is, "CDSV");
  const auto version = io::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = io::get<std::uint32_t>(is);
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    const auto len = io::get<std::uint16_t>(is);
    t.name.resize(len);
    is.read(t.name.data(), len);
    if (!is) throw FormatError("unexpected end of file");
    const auto ndim = io::get<std::uint8_t>(is);
    t.dims.resize(ndim);
    for (auto& d : t.dims) {
      const auto v = io::get<std::uint32_t>(is);
      if (v == 0 || v > (1u << 30)) throw FormatError("bad extent in '" + t.name + "'");
      d = static_cast<int>(v);
    }
    t.values.resize(ad::numel(t.dims));
    io::get_floats(is, t.values);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  return out;
}

std::vector<NamedTensor> snapshot(const nn::ParamSet& params) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params.entries()) {
    out.push_back({name, t.dims(), {t.data().begin(), t.data().end()}});
  }
  return out;
}

void restore(nn::ParamSet& params, const std::vector<NamedTensor>& tensors) {
  auto& entries = params.entries();
  if (entries.size() != tensors.size()) {
    throw FormatError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, t] = entries[i];
    if (name != tensors[i].name || t.dims() != tensors[i].dims) {
      throw FormatError("checkpoint tensor '" + tensors[i].name + "' " +
                        ad::to_string(tensors[i].dims) + " does not match '" + name + "' " +
                        ad::to_string(t.dims()));
    }
    std::copy(tensors[i].values.begin(), tensors[i].values.end(), t.mutable_data().begin());
  }
}

ModelConfig infer_config(const std::vector<NamedTensor>& tensors, const ModelConfig& frames_like) {
  auto find = [&](const std::string& name) -> const NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw FormatError("checkpoint is missing tensor '" + name + "'");
  };
  ModelConfig c = frames_like;
  const auto& embed = find("embed.0.weight");
  if (embed.dims.size() != 2 || embed.dims[0] != c.frame_size()) {
    throw FormatError("checkpoint frame size does not match the data");
  }
  c.enc_hidden = embed.dims[1];
  c.static_dim = find("content.head.weight").dims.at(1) / 2;
  c.dynamic_dim = find("motion.head.weight").dims.at(1) / 2;
  c.prior_hidden = find("prior.head.weight").dims.at(0);
  c.dec_hidden = find("decoder.0.weight").dims.at(1);
  return c;
}

void save_model(const SeqVae& model, const std::filesystem::path& path) {
  write_tensors(snapshot(model.params()), path);
}

SeqVae load_model(const std::filesystem::path& path, const ModelConfig& frames_like) {
  const auto tensors = read_tensors(path);
  SeqVae model(infer_config(tensors, frames_like), 0);
  restore(model.params(), tensors);
  return model;
}

}  // namespace cdsvae::model
