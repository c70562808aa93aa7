#include <cmath>
#include <numbers>
#include <random>

#include "cdsvae/error.hpp"
#include "cdsvae/objectives.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cdsvae;
using ad::Tensor;
using model::DiagGaussian;
namespace ops = cdsvae::ad;

namespace {

DiagGaussian gauss(std::vector<float> mu, std::vector<float> logvar) {
  const int d = static_cast<int>(mu.size());
  return {Tensor::from({1, d}, std::move(mu)), Tensor::from({1, d}, std::move(logvar))};
}

// Reference symmetric InfoNCE over 2M rows in double precision.
double reference_contrastive(const std::vector<std::vector<double>>& a,
                             const std::vector<std::vector<double>>& b, double tau) {
  const std::size_t m = a.size();
  std::vector<std::vector<double>> rows = a;
  rows.insert(rows.end(), b.begin(), b.end());
  auto cos = [](const std::vector<double>& u, const std::vector<double>& v) {
    double d = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      d += u[i] * v[i];
      nu += u[i] * u[i];
      nv += v[i] * v[i];
    }
    return d / (std::max(std::sqrt(nu), 1e-8) * std::max(std::sqrt(nv), 1e-8));
  };
  double total = 0;
  for (std::size_t r = 0; r < 2 * m; ++r) {
    const std::size_t pos = (r + m) % (2 * m);
    double denom = 0;
    for (std::size_t c = 0; c < 2 * m; ++c) {
      if (c != r) denom += std::exp(cos(rows[r], rows[c]) / tau);
    }
    total += cos(rows[r], rows[pos]) / tau - std::log(denom);
  }
  return total / static_cast<double>(2 * m) + std::log(static_cast<double>(2 * m - 1));
}

Tensor as_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<float> v;
  for (const auto& r : rows) {
    for (double x : r) v.push_back(static_cast<float>(x));
  }
  return Tensor::from({static_cast<int>(rows.size()), static_cast<int>(rows[0].size())}, v);
}

double log_normal(double x, double mu, double logvar) {
  return -0.5 * (std::log(2 * std::numbers::pi) + logvar + (x - mu) * (x - mu) / std::exp(logvar));
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("gauss_kl closed-form cases") {
  CHECK(obj::gauss_kl(gauss({0}, {0}), gauss({0}, {0})).item() == 0.0f);
  CHECK(obj::gauss_kl(gauss({1}, {0}), gauss({0}, {0})).item() == doctest::Approx(0.5).epsilon(1e-7));
  const double kl4 = 0.5 * (4.0 - 1.0 - std::log(4.0));
  CHECK(obj::gauss_kl(gauss({0}, {static_cast<float>(std::log(4.0))}), gauss({0}, {0})).item() ==
        doctest::Approx(kl4).epsilon(1e-6));
  CHECK(kl4 == doctest::Approx(0.806853).epsilon(1e-6));
  CHECK_THROWS_AS(obj::gauss_kl(gauss({0, 0}, {0, 0}), gauss({0}, {0})), DimensionError);
}

TEST_CASE("gauss_kl of N(0,4) against N(0,1) agrees with Monte Carlo") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int n = 100000;
  const double lv = std::log(4.0);
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = 2.0 * n01(rng);
    const double r = log_normal(x, 0, lv) - log_normal(x, 0, 0);
    sum += r;
    sq += r * r;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  const double kl = obj::gauss_kl(gauss({0}, {static_cast<float>(lv)}), gauss({0}, {0})).item();
  CHECK(std::abs(mean - kl) < 3 * se);
}

TEST_CASE("gauss_kl is non-negative and zero only at equality") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  for (int i = 0; i < 10000; ++i) {
    const float m = u(rng), l = u(rng);
    const auto p = gauss({m, l}, {l, m});
    CHECK(obj::gauss_kl(p, p).item() == doctest::Approx(0.0).epsilon(1e-6));
    const auto q = gauss({m + 0.05f * u(rng), l}, {l, m + 0.01f});
    CHECK(obj::gauss_kl(q, p).item() > 0.0f);
  }
}

TEST_CASE("recon_nll") {
  Tensor x = testutil::random_tensor({2, 3, 4}, 1, 0, 1);
  CHECK(obj::recon_nll(x, x).item() == 0.0f);
  Tensor one = Tensor::from({1, 1, 1}, {1.0f});
  CHECK(obj::recon_nll(one, Tensor::zeros({1, 1, 1})).item() == 0.5f);
  Tensor y = testutil::random_tensor({2, 3, 4}, 2, 0, 1);
  Tensor y2 = ops::sub(ops::scale(y, 2.0f), x);  // residual doubled
  CHECK(obj::recon_nll(x, y2).item() == doctest::Approx(4.0 * obj::recon_nll(x, y).item()));
  // Scaling the likelihood std by k divides the loss by k^2.
  CHECK(obj::recon_nll(x, y, 0.5f).item() == doctest::Approx(4.0 * obj::recon_nll(x, y).item()));
  CHECK_THROWS_AS(obj::recon_nll(x, Tensor::zeros({2, 3, 5})), DimensionError);
}

TEST_CASE("cosine similarity") {
  Tensor v = Tensor::from({3}, {0.3f, -1.0f, 2.0f});
  CHECK(obj::cosine_sim(v, v).item() == doctest::Approx(1.0));
  CHECK(obj::cosine_sim(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})).item() == 0.0f);
  CHECK(obj::cosine_sim(Tensor::from({2}, {1, 1}), Tensor::from({2}, {1, 0})).item() ==
        doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(obj::cosine_sim(Tensor::zeros({2}), Tensor::zeros({2})).item() == 0.0f);
}

TEST_CASE("info_nce special cases") {
  SUBCASE("all similarities equal give zero") {
    Tensor f = Tensor::full({3, 4}, 1.0f);
    std::vector<Tensor> negs(3, Tensor::full({5, 4}, 1.0f));
    CHECK(std::abs(obj::info_nce(f, f, negs, 0.5f).item()) < 1e-6);
  }
  SUBCASE("one negative at similarity 0, positive at 1") {
    Tensor a = Tensor::from({1, 2}, {1, 0});
    std::vector<Tensor> negs{Tensor::from({1, 2}, {0, 1})};
    const double expect = 2.0 - std::log(std::exp(2.0) + 1.0) + std::log(2.0);
    CHECK(expect == doctest::Approx(0.566219).epsilon(1e-6));
    CHECK(obj::info_nce(a, a, negs, 0.5f).item() == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("no negatives is a contract error") {
    Tensor a = Tensor::from({1, 2}, {1, 0});
    std::vector<Tensor> none;
    CHECK_THROWS_AS(obj::info_nce(a, a, none, 0.5f), ContractError);
  }
}

TEST_CASE("info_nce never exceeds log(n + 1)") {
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 7;
    Tensor a = testutil::random_tensor({3, 4}, 1000 + trial);
    Tensor p = testutil::random_tensor({3, 4}, 2000 + trial);
    std::vector<Tensor> negs;
    for (int i = 0; i < 3; ++i) negs.push_back(testutil::random_tensor({n, 4}, 3000 + 10 * trial + i));
    CHECK(obj::info_nce(a, p, negs, 0.1f).item() <= std::log(n + 1.0) + 1e-6);
  }
}

TEST_CASE("contrastive_mi on two aligned, cross-orthogonal pairs") {
  const std::vector<std::vector<double>> a{{1, 0}, {0, 1}};
  const double expect = reference_contrastive(a, a, 0.5);
  // Each row sees its positive at cos 1 and two negatives at cos 0 and 0,
  // except that the same-view other row is orthogonal too.
  const double hand = 2.0 - std::log(std::exp(2.0) + 2.0) + std::log(3.0);
  CHECK(expect == doctest::Approx(hand).epsilon(1e-12));
  CHECK(expect == doctest::Approx(0.859068).epsilon(1e-6));
  CHECK(obj::contrastive_mi(as_tensor(a), as_tensor(a), 0.5f).item() ==
        doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("contrastive_mi matches a direct double-precision evaluation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int m : {2, 3, 8}) {
    std::vector<std::vector<double>> a(m, std::vector<double>(5)), b = a;
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < 5; ++k) {
        a[i][k] = n01(rng);
        b[i][k] = a[i][k] + 0.3 * n01(rng);
      }
    }
    const double ref = reference_contrastive(a, b, 0.5);
    CHECK(obj::contrastive_mi(as_tensor(a), as_tensor(b), 0.5f).item() ==
          doctest::Approx(ref).epsilon(1e-5));
    CHECK(ref <= std::log(2.0 * m - 1.0) + 1e-6);
  }
}

TEST_CASE("contrastive_mi degenerate inputs") {
  Tensor same = Tensor::full({4, 3}, 0.7f);
  CHECK(std::abs(obj::contrastive_mi(same, same, 0.5f).item()) < 1e-6);
  CHECK(std::abs(obj::contrastive_mi_content(same, same, 0.5f).item()) < 1e-6);
  CHECK_THROWS_AS(obj::contrastive_mi(Tensor::zeros({1, 3}), Tensor::zeros({1, 3}), 0.5f),
                  ContractError);
}

TEST_CASE("mws_entropy") {
  SUBCASE("single standard-normal posterior sampled at its mean") {
    DiagGaussian d = gauss({0}, {0});
    const double expect = 0.5 * std::log(2 * std::numbers::pi) + std::log(10.0);
    CHECK(expect == doctest::Approx(3.221524).epsilon(1e-6));
    CHECK(obj::mws_entropy(d, Tensor::zeros({1, 1}), 10).item() ==
          doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("identical posteriors reduce to -log q + log N per sample") {
    const int m = 4;
    Tensor mu = Tensor::full({m, 2}, 0.3f);
    Tensor lv = Tensor::full({m, 2}, -0.2f);
    Tensor s = testutil::random_tensor({m, 2}, 6);
    double expect = 0;
    for (int i = 0; i < m; ++i) {
      expect -= log_normal(s.at(2 * i), 0.3, -0.2) + log_normal(s.at(2 * i + 1), 0.3, -0.2);
    }
    expect = expect / m + std::log(50.0);
    CHECK(obj::mws_entropy({mu, lv}, s, 50).item() == doctest::Approx(expect).epsilon(1e-5));
  }
  SUBCASE("invariant under permutation of the batch") {
    Tensor mu = testutil::random_tensor({5, 3}, 7);
    Tensor lv = testutil::random_tensor({5, 3}, 8, -0.5f, 0.5f);
    Tensor s = testutil::random_tensor({5, 3}, 9);
    const std::vector<int> perm{3, 0, 4, 1, 2};
    auto permute = [&](const Tensor& t) {
      std::vector<float> v;
      for (int i : perm) {
        for (int k = 0; k < 3; ++k) v.push_back(t.at(i * 3 + k));
      }
      return Tensor::from({5, 3}, v);
    };
    CHECK(obj::mws_entropy({mu, lv}, s, 100).item() ==
          doctest::Approx(obj::mws_entropy({permute(mu), permute(lv)}, permute(s), 100).item())
              .epsilon(1e-6));
  }
  SUBCASE("finite for far-apart samples") {
    Tensor mu = Tensor::from({2, 1}, {-50, 50});
    Tensor lv = Tensor::full({2, 1}, -10.0f);
    CHECK(std::isfinite(obj::mws_entropy({mu, lv}, mu, 2).item()));
  }
  SUBCASE("dataset smaller than the batch is a contract error") {
    CHECK_THROWS_AS(obj::mws_entropy({Tensor::zeros({3, 1}), Tensor::zeros({3, 1})},
                                     Tensor::zeros({3, 1}), 2),
                    ContractError);
  }
}

TEST_CASE("mws_mi_sz") {
  SUBCASE("batch of one gives log N") {
    DiagGaussian s = gauss({0.2f, -0.1f}, {0.1f, 0.3f});
    std::vector<DiagGaussian> z{gauss({0.5f}, {-0.4f}), gauss({0.0f}, {0.2f})};
    std::vector<Tensor> zs{Tensor::from({1, 1}, {0.1f}), Tensor::from({1, 1}, {-0.3f})};
    CHECK(obj::mws_mi_sz(s, Tensor::from({1, 2}, {0.3f, 0.0f}), z, zs, 37).item() ==
          doctest::Approx(std::log(37.0)).epsilon(1e-5));
  }
  SUBCASE("independent factors estimate near zero at M = 256, after the log N offset") {
    // With the dataset-size weighting, an uninformative factor makes every
    // entropy pick up the same log N, so the estimator's floor is log N.
    const int m = 256;
    const std::size_t n = 2000;
    std::mt19937_64 rng(10);
    std::normal_distribution<float> n01;
    // s posteriors are sharp around their own inputs; z posteriors come from
    // an independently drawn input set whose spread is small next to their width.
    auto make = [&](int d, float spread, float logvar) {
      std::vector<float> mu(m * d), smp(m * d);
      for (std::size_t i = 0; i < mu.size(); ++i) {
        mu[i] = spread * n01(rng);
        smp[i] = mu[i] + std::exp(0.5f * logvar) * n01(rng);
      }
      return std::make_pair(DiagGaussian{Tensor::from({m, d}, mu), Tensor::full({m, d}, logvar)},
                            Tensor::from({m, d}, smp));
    };
    auto [sd, ss] = make(2, 2.0f, -4.0f);
    auto [zd, zsample] = make(2, 0.02f, 0.0f);
    std::vector<DiagGaussian> zdl{zd};
    std::vector<Tensor> zsl{zsample};
    const double mi = obj::mws_mi_sz(sd, ss, zdl, zsl, n).item();
    CHECK(std::abs(mi - std::log(static_cast<double>(n))) < 0.1);
  }
  SUBCASE("z copied from s is clearly positive") {
    const int m = 256;
    Tensor mu = testutil::random_tensor({m, 2}, 11, -3, 3);
    Tensor lv = Tensor::full({m, 2}, -2.0f);
    Tensor smp = ops::add(mu, ops::scale(testutil::random_tensor({m, 2}, 12), 0.3f));
    const DiagGaussian s{mu, lv};
    std::vector<DiagGaussian> z{s};
    std::vector<Tensor> zs{smp};
    const double h_s = obj::mws_entropy(s, smp, m).item();
    const double mi = obj::mws_mi_sz(s, smp, z, zs, m).item();
    CHECK(mi > 0.0);
    CHECK(mi >= 0.5 * h_s);
  }
}

TEST_CASE("kl_dynamic") {
  model::ModelConfig c;
  c.steps = 3;
  c.height = 2;
  c.width = 2;
  c.static_dim = 2;
  c.dynamic_dim = 2;
  c.enc_hidden = 4;
  c.prior_hidden = 4;
  c.dec_hidden = 4;
  model::SeqVae m(c, 1);
  std::vector<Tensor> z{testutil::random_tensor({2, 2}, 1), testutil::random_tensor({2, 2}, 2),
                        testutil::random_tensor({2, 2}, 3)};
  SUBCASE("posterior equal to the prior along the same trajectory is zero") {
    const auto prior = m.prior_along(z);
    const Tensor kl = obj::kl_dynamic(prior, z, m);
    for (float v : kl.data()) CHECK(v == doctest::Approx(0.0));
  }
  SUBCASE("one step reduces to gauss_kl against the first prior") {
    std::vector<DiagGaussian> q{{testutil::random_tensor({2, 2}, 4), testutil::random_tensor({2, 2}, 5)}};
    std::vector<Tensor> z1{z[0]};
    const auto p0 = m.prior_along(z1)[0];
    CHECK(testutil::values(obj::kl_dynamic(q, z1, m)) == testutil::values(obj::gauss_kl(q[0], p0)));
  }
  SUBCASE("count mismatch is a contract error") {
    std::vector<DiagGaussian> q(2, DiagGaussian{Tensor::zeros({2, 2}), Tensor::zeros({2, 2})});
    CHECK_THROWS_AS(obj::kl_dynamic(q, z, m), ContractError);
  }
}

TEST_CASE("single-trajectory dynamic KL agrees with a nested Monte-Carlo of the sequence KL") {
  model::ModelConfig c;
  c.steps = 3;
  c.height = 2;
  c.width = 2;
  c.static_dim = 2;
  c.dynamic_dim = 2;
  c.enc_hidden = 6;
  c.prior_hidden = 6;
  c.dec_hidden = 6;
  model::SeqVae m(c, 2);
  const int n = 10000;
  // One input sequence repeated n times; each row is an independent trajectory.
  Tensor one = testutil::random_tensor({c.steps, 1, c.frame_size()}, 3, 0, 1);
  std::vector<float> rep;
  for (int t = 0; t < c.steps; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < c.frame_size(); ++k) rep.push_back(one.at(t * c.frame_size() + k));
    }
  }
  const Tensor x = Tensor::from({c.steps, n, c.frame_size()}, rep);
  nn::Rng rng(4);
  const auto post = m.encode_motion(x, model::gaussian_noise(rng));
  const auto prior = m.prior_along(post.samples);
  // Analytic per-step KLs along each trajectory.
  const Tensor single = obj::kl_dynamic(post.dists, post.samples, m);
  double est = 0;
  for (float v : single.data()) est += v;
  est /= n;
  // Brute force: log q(z_1:T|x) - log p(z_1:T) on the same sampled trajectories.
  double brute = 0;
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < c.steps; ++t) {
      for (int k = 0; k < c.dynamic_dim; ++k) {
        const std::size_t j = static_cast<std::size_t>(i * c.dynamic_dim + k);
        const double zv = post.samples[t].at(j);
        brute += log_normal(zv, post.dists[t].mu.at(j), post.dists[t].logvar.at(j)) -
                 log_normal(zv, prior[t].mu.at(j), prior[t].logvar.at(j));
      }
    }
  }
  brute /= n;
  CHECK(std::abs(est - brute) <= 0.05 * std::abs(brute));
}

TEST_CASE("total_loss") {
  model::ModelConfig c;
  c.steps = 3;
  c.height = 3;
  c.width = 3;
  c.static_dim = 3;
  c.dynamic_dim = 2;
  c.enc_hidden = 6;
  c.prior_hidden = 6;
  c.dec_hidden = 6;
  model::SeqVae m(c, 5);
  const Tensor x = testutil::random_tensor({c.steps, 4, c.frame_size()}, 6, 0, 1);
  nn::Rng rng(7);
  const auto out = m.autoencode(x, rng);
  obj::AugmentedViews views;
  views.content = m.encode_content(testutil::random_tensor({c.steps, 4, c.frame_size()}, 8, 0, 1));
  views.motion = m.encode_motion(testutil::random_tensor({c.steps, 4, c.frame_size()}, 9, 0, 1),
                                 model::zero_noise())
                     .dists;
  SUBCASE("breakdown recombines to the total bitwise") {
    for (const obj::LossWeights w : {obj::LossWeights{}, obj::LossWeights{0.6f, 0.2f, 1.0f, 0.5f},
                                     obj::LossWeights{2.0f, 5.0f, 0.3f, 0.1f}}) {
      const auto o = obj::total_loss(m, x, out, views, w, 100);
      CHECK(o.values.recombine(w) == o.values.total);
      CHECK(o.total.item() == o.values.total);
    }
  }
  SUBCASE("beta = gamma = 0 is the negative ELBO") {
    const obj::LossWeights w{1.0f, 0.0f, 0.0f, 0.5f};
    const auto o = obj::total_loss(m, x, out, views, w, 100);
    CHECK(o.values.total == doctest::Approx(o.values.recon + o.values.kl_s + o.values.kl_z));
  }
  SUBCASE("absent views contribute zero contrastive terms") {
    const auto o = obj::total_loss(m, x, out, {}, obj::LossWeights{}, 100);
    CHECK(o.values.c_motion == 0.0f);
    CHECK(o.values.c_content == 0.0f);
  }
  SUBCASE("invalid weights are rejected") {
    CHECK_THROWS_AS(obj::total_loss(m, x, out, views, obj::LossWeights{-1, 1, 1, 0.5f}, 100),
                    ContractError);
    CHECK_THROWS_AS(obj::total_loss(m, x, out, views, obj::LossWeights{1, 1, 1, 0}, 100),
                    ContractError);
  }
}

}
