#include <cmath>
#include <functional>

#include "cdsvae/error.hpp"
#include "cdsvae/runner.hpp"

namespace cdsvae::run {

namespace ops = cdsvae::ad;
using ad::Tensor;

namespace {

Tensor random_tensor(ad::Dims dims, nn::Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(ad::numel(dims));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(dims), std::move(v));
}

// Random projection so every output coordinate carries a distinct weight.
std::function<Tensor(const Tensor&)> projected(std::function<Tensor(const Tensor&)> f,
                                               nn::Rng& rng, const ad::Dims& out_dims) {
  Tensor w = random_tensor(out_dims, rng);
  return [f = std::move(f), w](const Tensor& x) { return ops::sum(ops::mul(f(x), w)); };
}

}  // namespace

std::vector<NamedCheck> grad_check_suite(const RunConfig& config, double tol) {
  nn::Rng rng(config.seed + 17);
  std::vector<NamedCheck> out;
  auto unary = [&](const char* name, const ad::Dims& in, const ad::Dims& outd,
                   std::function<Tensor(const Tensor&)> f, float lo = -1.0f, float hi = 1.0f) {
    Tensor x = random_tensor(in, rng, lo, hi);
    out.push_back({name, ad::grad_check(projected(std::move(f), rng, outd), x, tol)});
  };
  // Both operands of a binary op, each with the other held fixed.
  auto binary = [&](const char* name, const ad::Dims& da, const ad::Dims& db, const ad::Dims& outd,
                    std::function<Tensor(const Tensor&, const Tensor&)> f, float lo = -1.0f,
                    float hi = 1.0f) {
    Tensor a = random_tensor(da, rng, lo, hi);
    Tensor b = random_tensor(db, rng, lo, hi);
    out.push_back({std::string(name) + "[lhs]",
                   ad::grad_check(projected([&f, b](const Tensor& x) { return f(x, b); }, rng, outd),
                                  a, tol)});
    out.push_back({std::string(name) + "[rhs]",
                   ad::grad_check(projected([&f, a](const Tensor& x) { return f(a, x); }, rng, outd),
                                  b, tol)});
  };

  binary("matmul", {3, 4}, {4, 2}, {3, 2}, [](auto& a, auto& b) { return ops::matmul(a, b); });
  {
    Tensor w = random_tensor({4, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor x = random_tensor({3, 4}, rng);
    out.push_back({"affine[x]", ad::grad_check(projected([=](auto& v) { return ops::affine(v, w, b); },
                                                         rng, {3, 2}),
                                               x, tol)});
    out.push_back({"affine[w]", ad::grad_check(projected([=](auto& v) { return ops::affine(x, v, b); },
                                                         rng, {3, 2}),
                                               w, tol)});
    out.push_back({"affine[b]", ad::grad_check(projected([=](auto& v) { return ops::affine(x, w, v); },
                                                         rng, {3, 2}),
                                               b, tol)});
  }
  binary("lstm_gates", {3, 8}, {3, 2}, {3, 4},
         [](auto& g, auto& c) { return ops::lstm_gates(g, c); });
  binary("add", {3, 4}, {4}, {3, 4}, [](auto& a, auto& b) { return ops::add(a, b); });
  binary("sub", {3, 4}, {3, 4}, {3, 4}, [](auto& a, auto& b) { return ops::sub(a, b); });
  binary("mul", {2, 3, 2}, {3, 2}, {2, 3, 2}, [](auto& a, auto& b) { return ops::mul(a, b); });
  binary("div", {3, 4}, {3, 4}, {3, 4}, [](auto& a, auto& b) { return ops::div(a, b); }, 0.5f,
         1.5f);
  unary("scale", {3, 4}, {3, 4}, [](auto& x) { return ops::scale(x, -1.7f); });
  unary("add_scalar", {3, 4}, {3, 4}, [](auto& x) { return ops::add_scalar(x, 0.3f); });
  unary("neg", {3, 4}, {3, 4}, [](auto& x) { return ops::neg(x); });
  unary("exp", {3, 4}, {3, 4}, [](auto& x) { return ops::exp(x); });
  unary("log", {3, 4}, {3, 4}, [](auto& x) { return ops::log(x); }, 0.5f, 2.0f);
  unary("tanh", {3, 4}, {3, 4}, [](auto& x) { return ops::tanh(x); });
  unary("sigmoid", {3, 4}, {3, 4}, [](auto& x) { return ops::sigmoid(x); });
  // Kinks are kept out of reach of the finite-difference step.
  unary("relu", {3, 4}, {3, 4}, [](auto& x) { return ops::relu(x); }, 0.1f,
        1.0f);
  unary("relu_neg", {3, 4}, {3, 4}, [](auto& x) { return ops::relu(x); }, -1.0f, -0.1f);
  unary("square", {3, 4}, {3, 4}, [](auto& x) { return ops::square(x); });
  unary("sqrt", {3, 4}, {3, 4}, [](auto& x) { return ops::sqrt(x); }, 0.5f, 2.0f);
  unary("clamp", {3, 4}, {3, 4}, [](auto& x) { return ops::clamp(x, -2.0f, 2.0f); });
  unary("clamp_saturated", {3, 4}, {3, 4}, [](auto& x) { return ops::clamp(x, -0.5f, -0.4f); },
        0.0f, 1.0f);
  unary("sum", {3, 4}, {}, [](auto& x) { return ops::sum(x); });
  unary("sum_axis0", {3, 4}, {4}, [](auto& x) { return ops::sum(x, 0); });
  unary("sum_axis1", {3, 4}, {3}, [](auto& x) { return ops::sum(x, 1); });
  unary("mean", {3, 4}, {}, [](auto& x) { return ops::mean(x); });
  unary("mean_axis1", {2, 3, 4}, {2, 4}, [](auto& x) { return ops::mean(x, 1); });
  unary("logsumexp", {3, 4}, {3}, [](auto& x) { return ops::logsumexp(x, 1); });
  unary("logsumexp_axis0", {3, 4}, {4}, [](auto& x) { return ops::logsumexp(x, 0); });
  binary("concat", {2, 3}, {2, 2}, {2, 5},
         [](auto& a, auto& b) { return ops::concat({a, b}, 1); });
  unary("slice", {4, 5}, {4, 2}, [](auto& x) { return ops::slice(x, 1, 2, 2); });
  unary("transpose", {3, 4}, {4, 3}, [](auto& x) { return ops::transpose(x); });
  unary("reshape", {3, 4}, {2, 6}, [](auto& x) { return ops::reshape(x, {2, 6}); });
  unary("broadcast_to", {4}, {3, 4}, [](auto& x) { return ops::broadcast_to(x, {3, 4}); });

  {
    Tensor mu = random_tensor({3, 2}, rng);
    Tensor lv = random_tensor({3, 2}, rng, -0.5f, 0.5f);
    Tensor x = random_tensor({4, 2}, rng);
    out.push_back({"pairwise_log_density[samples]",
                   ad::grad_check(projected([=](auto& v) { return obj::pairwise_log_density(v, mu, lv); },
                                            rng, {4, 3}),
                                  x, tol)});
    out.push_back({"pairwise_log_density[mu]",
                   ad::grad_check(projected([=](auto& v) { return obj::pairwise_log_density(x, v, lv); },
                                            rng, {4, 3}),
                                  mu, tol)});
    out.push_back({"pairwise_log_density[logvar]",
                   ad::grad_check(projected([=](auto& v) { return obj::pairwise_log_density(x, mu, v); },
                                            rng, {4, 3}),
                                  lv, tol)});
  }
  {
    Tensor p_mu = random_tensor({3, 2}, rng);
    Tensor p_lv = random_tensor({3, 2}, rng, -0.5f, 0.5f);
    Tensor q = random_tensor({3, 4}, rng, -0.5f, 0.5f);
    unary("gauss_kl", {3, 4}, {3}, [=](auto& x) {
      model::DiagGaussian qd{ops::slice(x, 1, 0, 2), ops::slice(x, 1, 2, 2)};
      return obj::gauss_kl(qd, {p_mu, p_lv});
    });
  }
  {
    Tensor aug = random_tensor({4, 3}, rng);
    unary("contrastive_mi", {4, 3}, {}, [=](auto& x) { return obj::contrastive_mi(x, aug, 0.5f); });
  }
  {
    Tensor mu = random_tensor({4, 3}, rng);
    Tensor lv = random_tensor({4, 3}, rng, -0.5f, 0.5f);
    unary("mws_entropy", {4, 3}, {}, [=](auto& x) {
      return obj::mws_entropy({mu, lv}, x, 100);
    });
  }

  // Full objective on a tiny model, checked against every parameter.
  {
    model::ModelConfig mc;
    mc.steps = 3;
    // Small frames keep the loss near 1, where float32 finite differences
    // with step 1e-3 resolve gradients well below the tolerance.
    mc.height = 2;
    mc.width = 2;
    mc.channels = 1;
    mc.static_dim = 4;
    mc.dynamic_dim = 2;
    mc.enc_hidden = 8;
    mc.prior_hidden = 8;
    mc.dec_hidden = 8;
    mc.likelihood_std = 1.0f;
    model::SeqVae model(mc, config.seed);
    const int batch = 4;
    Tensor frames = random_tensor({mc.steps, batch, mc.frame_size()}, rng, 0.0f, 1.0f);
    Tensor content_aug = random_tensor({mc.steps, batch, mc.frame_size()}, rng, 0.0f, 1.0f);
    Tensor motion_aug = random_tensor({mc.steps, batch, mc.frame_size()}, rng, 0.0f, 1.0f);
    // Pre-drawn noise keeps every evaluation of the loss identical.
    std::vector<Tensor> eps;
    for (int i = 0; i < 2 * mc.steps + 1; ++i) {
      eps.push_back(random_tensor({batch, i == 0 ? mc.static_dim : mc.dynamic_dim}, rng, -1.0f, 1.0f));
    }
    auto loss = [&]() {
      std::size_t next = 1;
      auto noise = [&](const ad::Dims&) { return eps.at(next++); };
      const auto feats = model.embed(frames);
      model::Reconstruction r;
      r.latent.s_dist = model.encode_content(feats);
      r.latent.s = model::sample_reparam(r.latent.s_dist, eps[0]);
      auto motion = model.encode_motion(feats, noise);
      r.latent.z_dists = motion.dists;
      r.latent.z = motion.samples;
      r.frames = model.decode_sequence(r.latent.s, r.latent.z);
      obj::AugmentedViews views;
      views.content = model.encode_content(content_aug);
      views.motion = model.encode_motion(motion_aug, noise).dists;
      return obj::total_loss(model, frames, r, views, config.loss, 64).total;
    };
    out.push_back({"total_loss", ad::grad_check_params(loss, model.params().tensors(), tol)});
  }
  return out;
}

}  // namespace cdsvae::run
