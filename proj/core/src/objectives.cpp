#include "cdsvae/objectives.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <numbers>

#include "cdsvae/error.hpp"

namespace cdsvae::obj {

namespace ops = cdsvae::ad;

namespace {

// Finite stand-in for -inf when masking logits.
constexpr float kMasked = -1e9f;

Tensor row_normalize(const Tensor& x) {
  Tensor norm = ops::sqrt(ops::add_scalar(ops::sum(ops::square(x), 1), kNormFloor * kNormFloor));
  Tensor floored = ops::clamp(norm, kNormFloor, std::numeric_limits<float>::max());
  return ops::transpose(ops::div(ops::transpose(x), floored));
}

void check_same_dims(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw DimensionError(std::string(op) + ": dims " + ad::to_string(a.dims()) + " vs " +
                         ad::to_string(b.dims()));
  }
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0) throw ContractError("loss weights must be >= 0");
  if (!(tau > 0)) throw ContractError("temperature must be > 0");
}

namespace {

double combine(const LossWeights& w, double recon, double kl_s, double kl_z, double c_motion,
               double c_content, double mi_sz) {
  return recon + static_cast<double>(w.alpha) * (kl_s + kl_z) -
         static_cast<double>(w.beta) * (c_motion + c_content) +
         static_cast<double>(w.gamma) * mi_sz;
}

}  // namespace

float LossBreakdown::recombine(const LossWeights& w) const {
  return static_cast<float>(combine(w, recon, kl_s, kl_z, c_motion, c_content, mi_sz));
}

Tensor gauss_kl(const DiagGaussian& q, const DiagGaussian& p) {
  check_same_dims("gauss_kl", q.mu, p.mu);
  check_same_dims("gauss_kl", q.logvar, p.logvar);
  check_same_dims("gauss_kl", q.mu, q.logvar);
  // 0.5 * (lv_p - lv_q + (exp(lv_q) + (mu_q - mu_p)^2) / exp(lv_p) - 1)
  Tensor num = ops::add(ops::exp(q.logvar), ops::square(ops::sub(q.mu, p.mu)));
  Tensor ratio = ops::mul(num, ops::exp(ops::neg(p.logvar)));
  Tensor term = ops::add_scalar(ops::add(ops::sub(p.logvar, q.logvar), ratio), -1.0f);
  return ops::scale(ops::sum(term, 1), 0.5f);
}

Tensor kl_dynamic(std::span<const DiagGaussian> z_dists, std::span<const Tensor> z,
                  const model::SeqVae& model) {
  if (z_dists.size() != z.size() || z.empty()) {
    throw ContractError("kl_dynamic: " + std::to_string(z_dists.size()) + " distributions for " +
                        std::to_string(z.size()) + " samples");
  }
  const auto prior = model.prior_along(z);
  Tensor total = gauss_kl(z_dists[0], prior[0]);
  for (std::size_t t = 1; t < z.size(); ++t) total = ops::add(total, gauss_kl(z_dists[t], prior[t]));
  return total;
}

Tensor recon_nll(const Tensor& x, const Tensor& x_hat, float likelihood_std) {
  check_same_dims("recon_nll", x, x_hat);
  if (x.rank() != 3) throw DimensionError("recon_nll: expected [T, batch, P]");
  const double w = 0.5 / (static_cast<double>(likelihood_std) * likelihood_std) / x.dim(1);
  const auto a = x.data();
  const auto b = x_hat.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  Tensor xx = x, xh = x_hat;
  return ops::make_op("recon_nll", {}, {static_cast<float>(w * acc)}, {x, x_hat},
                      [xx, xh, w](std::span<const float> g) mutable {
                        const auto a = xx.data();
                        const auto b = xh.data();
                        std::span<float> ga, gb;
                        if (xx.requires_grad()) ga = xx.mutable_grad();
                        if (xh.requires_grad()) gb = xh.mutable_grad();
                        const double k = 2.0 * w * g[0];
                        for (std::size_t i = 0; i < a.size(); ++i) {
                          const float d = static_cast<float>(k * (static_cast<double>(a[i]) - b[i]));
                          if (!ga.empty()) ga[i] += d;
                          if (!gb.empty()) gb[i] -= d;
                        }
                      });
}

Tensor cosine_sim(const Tensor& u, const Tensor& v) {
  check_same_dims("cosine_sim", u, v);
  if (u.rank() != 1) throw DimensionError("cosine_sim: expected vectors");
  const float nu = std::sqrt(ops::sum(ops::square(u)).item());
  const float nv = std::sqrt(ops::sum(ops::square(v)).item());
  if (nu < kNormFloor && nv < kNormFloor && std::getenv("CDSVAE_DEBUG") != nullptr) {
    std::clog << "[debug] cosine_sim: both vectors are zero, returning 0\n";
  }
  Tensor a = ops::reshape(u, {1, u.dim(0)});
  Tensor b = ops::reshape(v, {1, v.dim(0)});
  return ops::reshape(cosine_matrix(a, b), {});
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("cosine_matrix: dims " + ad::to_string(a.dims()) + " vs " +
                         ad::to_string(b.dims()));
  }
  return ops::matmul(row_normalize(a), ops::transpose(row_normalize(b)));
}

Tensor info_nce_logits(const Tensor& pos, const Tensor& neg) {
  if (pos.rank() != 1 || neg.rank() != 2 || neg.dim(0) != pos.dim(0)) {
    throw DimensionError("info_nce: pos " + ad::to_string(pos.dims()) + ", neg " +
                         ad::to_string(neg.dims()));
  }
  const int n = neg.dim(1);
  if (n < 1) throw ContractError("info_nce: need at least one negative");
  Tensor logits = ops::concat({ops::reshape(pos, {pos.dim(0), 1}), neg}, 1);
  Tensor ratio = ops::sub(pos, ops::logsumexp(logits, 1));
  return ops::add_scalar(ops::mean(ratio), static_cast<float>(std::log(n + 1.0)));
}

Tensor info_nce(const Tensor& anchors, const Tensor& positives,
                std::span<const Tensor> negatives, float tau) {
  check_same_dims("info_nce", anchors, positives);
  if (!(tau > 0)) throw ContractError("info_nce: temperature must be > 0");
  const int batch = anchors.dim(0);
  if (negatives.size() != static_cast<std::size_t>(batch)) {
    throw ContractError("info_nce: one negative set per anchor required");
  }
  if (negatives.empty() || negatives.front().rank() != 2 || negatives.front().dim(0) < 1) {
    throw ContractError("info_nce: need at least one negative per anchor");
  }
  const int n = negatives.front().dim(0);
  std::vector<Tensor> pos_rows, neg_rows;
  for (int i = 0; i < batch; ++i) {
    if (negatives[i].rank() != 2 || negatives[i].dim(0) != n) {
      throw ContractError("info_nce: every anchor needs the same number of negatives");
    }
    Tensor a = ops::slice(anchors, 0, i, 1);
    pos_rows.push_back(cosine_matrix(a, ops::slice(positives, 0, i, 1)));
    neg_rows.push_back(cosine_matrix(a, negatives[i]));
  }
  Tensor pos = ops::reshape(ops::concat(pos_rows, 0), {batch});
  Tensor neg = ops::concat(neg_rows, 0);
  return info_nce_logits(ops::scale(pos, 1.0f / tau), ops::scale(neg, 1.0f / tau));
}

Tensor contrastive_mi(const Tensor& features, const Tensor& aug_features, float tau) {
  check_same_dims("contrastive_mi", features, aug_features);
  if (features.rank() != 2) throw DimensionError("contrastive_mi: expected [batch, d]");
  const int m = features.dim(0);
  if (m < 2) throw ContractError("contrastive_mi: batch must be >= 2 to have negatives");
  if (!(tau > 0)) throw ContractError("contrastive_mi: temperature must be > 0");
  const int n2 = 2 * m;
  Tensor all = ops::concat({features, aug_features}, 0);
  Tensor logits = ops::scale(cosine_matrix(all, all), 1.0f / tau);
  std::vector<float> self_mask(static_cast<std::size_t>(n2) * n2, 0.0f);
  std::vector<float> pos_pick(static_cast<std::size_t>(n2) * n2, 0.0f);
  for (int r = 0; r < n2; ++r) {
    self_mask[static_cast<std::size_t>(r) * n2 + r] = kMasked;
    pos_pick[static_cast<std::size_t>(r) * n2 + (r + m) % n2] = 1.0f;
  }
  Tensor pos = ops::sum(ops::mul(logits, Tensor::from({n2, n2}, std::move(pos_pick))), 1);
  Tensor lse = ops::logsumexp(ops::add(logits, Tensor::from({n2, n2}, std::move(self_mask))), 1);
  return ops::add_scalar(ops::mean(ops::sub(pos, lse)),
                         static_cast<float>(std::log(static_cast<double>(n2) - 1.0)));
}

Tensor pairwise_log_density(const Tensor& samples, const Tensor& mu, const Tensor& logvar) {
  check_same_dims("pairwise_log_density", mu, logvar);
  if (samples.rank() != 2 || mu.rank() != 2 || samples.dim(1) != mu.dim(1)) {
    throw DimensionError("pairwise_log_density: samples " + ad::to_string(samples.dims()) +
                         ", mu " + ad::to_string(mu.dims()));
  }
  const int n = samples.dim(0), m = mu.dim(0), d = mu.dim(1);
  const auto xs = samples.data();
  const auto mv = mu.data();
  const auto lv = logvar.data();
  std::vector<float> inv_var(lv.size());
  std::vector<double> base(static_cast<std::size_t>(m));
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (int j = 0; j < m; ++j) {
    double acc = d * log2pi;
    for (int k = 0; k < d; ++k) {
      const std::size_t jk = static_cast<std::size_t>(j) * d + k;
      inv_var[jk] = std::exp(-lv[jk]);
      acc += lv[jk];
    }
    base[static_cast<std::size_t>(j)] = acc;
  }
  std::vector<float> out(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    const float* x = xs.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const float* mj = mv.data() + static_cast<std::size_t>(j) * d;
      const float* wj = inv_var.data() + static_cast<std::size_t>(j) * d;
      double q = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = x[k] - mj[k];
        q += diff * diff * wj[k];
      }
      out[static_cast<std::size_t>(i) * m + j] =
          static_cast<float>(-0.5 * (base[static_cast<std::size_t>(j)] + q));
    }
  }
  Tensor s = samples, mm = mu, ll = logvar;
  auto iv = std::make_shared<std::vector<float>>(std::move(inv_var));
  return ops::make_op(
      "pairwise_log_density", {n, m}, std::move(out), {samples, mu, logvar},
      [s, mm, ll, iv, n, m, d](std::span<const float> g) mutable {
        const auto xs = s.data();
        const auto mv = mm.data();
        std::span<float> gs, gm, gl;
        if (s.requires_grad()) gs = s.mutable_grad();
        if (mm.requires_grad()) gm = mm.mutable_grad();
        if (ll.requires_grad()) gl = ll.mutable_grad();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < m; ++j) {
            const float gij = g[static_cast<std::size_t>(i) * m + j];
            if (gij == 0.0f) continue;
            for (int k = 0; k < d; ++k) {
              const std::size_t ik = static_cast<std::size_t>(i) * d + k;
              const std::size_t jk = static_cast<std::size_t>(j) * d + k;
              const float diff = xs[ik] - mv[jk];
              const float w = (*iv)[jk];
              // d/dx = -diff w ; d/dmu = diff w ; d/dlogvar = -0.5 (1 - diff^2 w)
              if (!gs.empty()) gs[ik] -= gij * diff * w;
              if (!gm.empty()) gm[jk] += gij * diff * w;
              if (!gl.empty()) gl[jk] -= 0.5f * gij * (1.0f - diff * diff * w);
            }
          }
        }
      });
}

namespace {

// One Gaussian block of a (block-diagonal) latent: distributions and samples,
// all [M, d].
struct LatentBlock {
  Tensor mu, logvar, x;
};

// A weighted entropy term over a subset of the blocks.
struct EntropyTerm {
  double coef;
  std::vector<int> blocks;
  bool aggregate;  // MWS aggregated entropy, otherwise conditional -mean log q(x_i|i)
};

// sum_k coef_k * H_k evaluated in double precision as a single op. Summing the
// entropies in float would cancel large, nearly equal magnitudes.
Tensor mws_combination(const char* name, std::vector<LatentBlock> blocks,
                       std::vector<EntropyTerm> terms, std::size_t dataset_size) {
  const int m = blocks.front().x.dim(0);
  for (const auto& b : blocks) {
    check_same_dims(name, b.mu, b.logvar);
    check_same_dims(name, b.mu, b.x);
    if (b.x.rank() != 2 || b.x.dim(0) != m) throw DimensionError(std::string(name) + ": batch sizes differ");
  }
  if (dataset_size < static_cast<std::size_t>(m)) {
    throw ContractError(std::string(name) + ": dataset size " + std::to_string(dataset_size) +
                        " smaller than batch " + std::to_string(m));
  }
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double log_nm = std::log(static_cast<double>(dataset_size) * m);
  const std::size_t mm = static_cast<std::size_t>(m) * m;

  // Per-block log-density matrices L_b[i, j] = log N(x_i; mu_j, var_j).
  std::vector<std::vector<double>> dens(blocks.size(), std::vector<double>(mm));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const int d = blocks[b].x.dim(1);
    const auto xs = blocks[b].x.data();
    const auto mv = blocks[b].mu.data();
    const auto lv = blocks[b].logvar.data();
    for (int j = 0; j < m; ++j) {
      double base = d * log2pi;
      for (int k = 0; k < d; ++k) base += lv[static_cast<std::size_t>(j) * d + k];
      for (int i = 0; i < m; ++i) {
        double q = 0.0;
        for (int k = 0; k < d; ++k) {
          const std::size_t jk = static_cast<std::size_t>(j) * d + k;
          const double diff = static_cast<double>(xs[static_cast<std::size_t>(i) * d + k]) - mv[jk];
          q += diff * diff * std::exp(-static_cast<double>(lv[jk]));
        }
        dens[b][static_cast<std::size_t>(i) * m + j] = -0.5 * (base + q);
      }
    }
  }

  // Value and dT/dL[i, j] per term.
  double value = 0.0;
  std::vector<std::vector<double>> dl(terms.size(), std::vector<double>(mm, 0.0));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    std::vector<double> l(mm, 0.0);
    for (int b : terms[t].blocks) {
      for (std::size_t q = 0; q < mm; ++q) l[q] += dens[static_cast<std::size_t>(b)][q];
    }
    double h = 0.0;
    for (int i = 0; i < m; ++i) {
      const double* row = l.data() + static_cast<std::size_t>(i) * m;
      if (terms[t].aggregate) {
        const double mx = *std::max_element(row, row + m);
        double z = 0.0;
        for (int j = 0; j < m; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        h -= lse - log_nm;
        for (int j = 0; j < m; ++j) {
          dl[t][static_cast<std::size_t>(i) * m + j] =
              -terms[t].coef * std::exp(row[j] - lse) / m;
        }
      } else {
        h -= row[i];
        dl[t][static_cast<std::size_t>(i) * m + i] = -terms[t].coef / m;
      }
    }
    value += terms[t].coef * h / m;
  }

  std::vector<Tensor> inputs;
  for (const auto& b : blocks) {
    inputs.push_back(b.x);
    inputs.push_back(b.mu);
    inputs.push_back(b.logvar);
  }
  return ops::make_op(
      name, {}, {static_cast<float>(value)}, inputs,
      [blocks, terms, dl = std::move(dl), m](std::span<const float> g) mutable {
        const double go = g[0];
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          // Total dOut/dL for this block: sum of the terms that include it.
          std::vector<double> w(static_cast<std::size_t>(m) * m, 0.0);
          bool used = false;
          for (std::size_t t = 0; t < terms.size(); ++t) {
            if (std::find(terms[t].blocks.begin(), terms[t].blocks.end(), static_cast<int>(b)) ==
                terms[t].blocks.end()) {
              continue;
            }
            used = true;
            for (std::size_t q = 0; q < w.size(); ++q) w[q] += dl[t][q];
          }
          if (!used) continue;
          auto& blk = blocks[b];
          const int d = blk.x.dim(1);
          const auto xs = blk.x.data();
          const auto mv = blk.mu.data();
          const auto lv = blk.logvar.data();
          std::vector<double> gx(xs.size(), 0.0), gm(mv.size(), 0.0), gl(lv.size(), 0.0);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
              const double wij = go * w[static_cast<std::size_t>(i) * m + j];
              if (wij == 0.0) continue;
              for (int k = 0; k < d; ++k) {
                const std::size_t ik = static_cast<std::size_t>(i) * d + k;
                const std::size_t jk = static_cast<std::size_t>(j) * d + k;
                const double inv = std::exp(-static_cast<double>(lv[jk]));
                const double diff = static_cast<double>(xs[ik]) - mv[jk];
                gx[ik] -= wij * diff * inv;
                gm[jk] += wij * diff * inv;
                gl[jk] -= 0.5 * wij * (1.0 - diff * diff * inv);
              }
            }
          }
          auto accumulate = [](Tensor& t, const std::vector<double>& src) {
            if (!t.requires_grad()) return;
            auto dst = t.mutable_grad();
            for (std::size_t q = 0; q < src.size(); ++q) dst[q] += static_cast<float>(src[q]);
          };
          accumulate(blk.x, gx);
          accumulate(blk.mu, gm);
          accumulate(blk.logvar, gl);
        }
      });
}

}  // namespace

Tensor mws_entropy(const DiagGaussian& dists, const Tensor& samples, std::size_t dataset_size) {
  check_same_dims("mws_entropy", dists.mu, samples);
  return mws_combination("mws_entropy", {{dists.mu, dists.logvar, samples}},
                         {{1.0, {0}, true}}, dataset_size);
}

DiagGaussian flatten_trajectory(std::span<const DiagGaussian> steps) {
  if (steps.empty()) throw ContractError("flatten_trajectory: empty");
  std::vector<Tensor> mus, lvs;
  for (const auto& d : steps) {
    mus.push_back(d.mu);
    lvs.push_back(d.logvar);
  }
  return {ops::concat(mus, 1), ops::concat(lvs, 1)};
}

Tensor flatten_trajectory(std::span<const Tensor> samples) {
  if (samples.empty()) throw ContractError("flatten_trajectory: empty");
  return ops::concat(samples, 1);
}

DiagGaussian join(const DiagGaussian& a, const DiagGaussian& b) {
  return {ops::concat({a.mu, b.mu}, 1), ops::concat({a.logvar, b.logvar}, 1)};
}

Tensor mws_mi_sz(const DiagGaussian& s_dists, const Tensor& s_samples,
                 std::span<const DiagGaussian> z_dists, std::span<const Tensor> z_samples,
                 std::size_t dataset_size) {
  if (z_dists.size() != z_samples.size()) {
    throw ContractError("mws_mi_sz: trajectory and distribution counts differ");
  }
  const DiagGaussian z = flatten_trajectory(z_dists);
  const Tensor zs = flatten_trajectory(z_samples);
  check_same_dims("mws_mi_sz", s_dists.mu, s_samples);
  if (zs.dim(0) != s_samples.dim(0)) throw DimensionError("mws_mi_sz: batch sizes differ");
  // H(s) + H(z) - H(s, z); the joint is block-diagonal over (s, z).
  return mws_combination("mws_mi_sz",
                         {{s_dists.mu, s_dists.logvar, s_samples}, {z.mu, z.logvar, zs}},
                         {{1.0, {0}, true}, {1.0, {1}, true}, {-1.0, {0, 1}, true}},
                         dataset_size);
}

Tensor mws_mi_latent_input(const DiagGaussian& dists, const Tensor& samples,
                           std::size_t dataset_size) {
  check_same_dims("mws_mi_latent_input", dists.mu, samples);
  // H_MWS(latent) - H(latent | x)
  return mws_combination("mws_mi_latent_input", {{dists.mu, dists.logvar, samples}},
                         {{1.0, {0}, true}, {-1.0, {0}, false}}, dataset_size);
}

Objective total_loss(const model::SeqVae& model, const Tensor& frames,
                     const model::Reconstruction& out, const AugmentedViews& aug,
                     const LossWeights& w, std::size_t dataset_size) {
  w.validate();
  const auto& latent = out.latent;
  const int batch = latent.s.dim(0);
  const float inv_batch = 1.0f / static_cast<float>(batch);

  Tensor recon = recon_nll(frames, out.frames, model.config().likelihood_std);
  Tensor kl_s = ops::scale(ops::sum(gauss_kl(latent.s_dist, model::standard_gaussian(
                                                                batch, latent.s_dist.dim()))),
                           inv_batch);
  Tensor kl_z = ops::scale(ops::sum(kl_dynamic(latent.z_dists, latent.z, model)), inv_batch);

  Tensor c_motion = Tensor::scalar(0.0f);
  if (aug.motion) {
    Tensor feats = flatten_trajectory(latent.z_dists).mu;
    Tensor aug_feats = flatten_trajectory(*aug.motion).mu;
    c_motion = contrastive_mi_motion(feats, aug_feats, w.tau);
  }
  Tensor c_content = Tensor::scalar(0.0f);
  if (aug.content) c_content = contrastive_mi_content(latent.s_dist.mu, aug.content->mu, w.tau);

  Tensor mi = mws_mi_sz(latent.s_dist, latent.s, latent.z_dists, latent.z, dataset_size);

  // Weighted sum in double, rounded once.
  const double value = combine(w, recon.item(), kl_s.item(), kl_z.item(), c_motion.item(),
                               c_content.item(), mi.item());
  const double a = w.alpha, b = w.beta, g = w.gamma;
  Tensor total = ops::make_op(
      "total_loss", {}, {static_cast<float>(value)}, {recon, kl_s, kl_z, c_motion, c_content, mi},
      [recon, kl_s, kl_z, c_motion, c_content, mi, a, b, g](std::span<const float> grad) mutable {
        const std::pair<Tensor*, double> parts[] = {{&recon, 1.0}, {&kl_s, a},      {&kl_z, a},
                                                    {&c_motion, -b}, {&c_content, -b}, {&mi, g}};
        for (auto& [t, c] : parts) {
          if (t->requires_grad()) t->mutable_grad()[0] += static_cast<float>(c * grad[0]);
        }
      });

  Objective o{total, {}};
  o.values.recon = recon.item();
  o.values.kl_s = kl_s.item();
  o.values.kl_z = kl_z.item();
  o.values.c_motion = c_motion.item();
  o.values.c_content = c_content.item();
  o.values.mi_sz = mi.item();
  o.values.total = total.item();
  return o;
}

}  // namespace cdsvae::obj
