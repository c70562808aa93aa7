#include <algorithm>
#include <cmath>
#include <vector>

#include "cdsvae/augment.hpp"
#include "cdsvae/error.hpp"
#include "cdsvae/synthseq.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cdsvae;
using namespace cdsvae::aug;

namespace {

std::vector<std::vector<float>> split_frames(const std::vector<float>& seq, int steps) {
  const std::size_t fs = seq.size() / steps;
  std::vector<std::vector<float>> out;
  for (int t = 0; t < steps; ++t) out.emplace_back(seq.begin() + t * fs, seq.begin() + (t + 1) * fs);
  return out;
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("reverse of three frames") {
  const std::vector<float> seq{1, 1, 2, 2, 3, 3};
  AugmentConfig c;
  c.content_mode = ContentMode::kReverse;
  Rng rng(1);
  CHECK(content_aug(seq, 3, c, rng) == std::vector<float>{3, 3, 2, 2, 1, 1});
}

TEST_CASE("content augmentation permutes whole frames") {
  synth::SyntheticConfig sc;
  sc.seed = 2;
  const auto data = synth::generate(sc, 50);
  Rng rng(3);
  for (ContentMode mode : {ContentMode::kReverse, ContentMode::kShuffle}) {
    AugmentConfig c;
    c.content_mode = mode;
    for (const auto& s : data.sequences) {
      auto a = split_frames(s.frames, sc.steps);
      auto b = split_frames(content_aug(s.frames, sc.steps, c, rng), sc.steps);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("shuffle never returns the identity") {
  Rng rng(4);
  for (int steps : {2, 3, 8}) {
    for (int i = 0; i < 2000; ++i) {
      const auto p = content_permutation(steps, ContentMode::kShuffle, rng);
      bool identity = true;
      for (int t = 0; t < steps; ++t) identity &= p[t] == t;
      CHECK_FALSE(identity);
    }
  }
  CHECK_THROWS_AS(content_permutation(1, ContentMode::kShuffle, rng), ContractError);
}

TEST_CASE("shuffle is uniform over non-identity permutations of three frames") {
  Rng rng(5);
  std::vector<int> counts(6, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto p = content_permutation(3, ContentMode::kShuffle, rng);
    ++counts[p[0] * 2 + (p[1] > p[2] ? 1 : 0)];
  }
  CHECK(counts[0] == 0);  // (0, 1, 2)
  for (int k = 1; k < 6; ++k) CHECK(std::abs(counts[k] - n / 5) < 500);
}

TEST_CASE("identity appearance transform") {
  const auto seq = testutil::values(testutil::random_tensor({40}, 6, 0, 1));
  Rng rng(7);
  CHECK(apply_appearance(seq, {1.0f, false}, 0.0f, rng) == seq);
}

TEST_CASE("inversion and scale apply the same map to every frame") {
  const std::vector<float> seq{0.1f, 0.2f, 0.1f, 0.2f, 0.4f, 0.0f};
  Rng rng(8);
  const auto y = apply_appearance(seq, {0.5f, true}, 0.0f, rng);
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(y[i] == doctest::Approx(1.0f - 0.5f * seq[i]));
}

TEST_CASE("motion augmentation keeps outputs in range and blobs in place") {
  synth::SyntheticConfig sc;
  sc.seed = 9;
  const auto data = synth::generate(sc, 1000);
  AugmentConfig c;
  Rng rng(10);
  double worst = 0;
  for (const auto& s : data.sequences) {
    const auto y = motion_aug(s.frames, c, rng);
    REQUIRE(y.size() == s.frames.size());
    for (float v : y) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (int t = 0; t < sc.steps; ++t) {
      const std::span<const float> a(s.frames.data() + t * sc.frame_size(), sc.frame_size());
      const std::span<const float> b(y.data() + t * sc.frame_size(), sc.frame_size());
      const auto p = synth::frame_centroid(sc, a);
      const auto q = synth::frame_centroid(sc, b);
      worst = std::max(worst, static_cast<double>(std::hypot(p.x - q.x, p.y - q.y)));
    }
  }
  CHECK(worst < 1.0);
}

TEST_CASE("batched augmentations treat each sequence independently") {
  const auto x = testutil::random_tensor({4, 3, 5}, 11, 0, 1);
  AugmentConfig c;
  c.content_mode = ContentMode::kReverse;
  Rng rng(12);
  const auto y = content_aug_batch(x, c, rng);
  for (int t = 0; t < 4; ++t) {
    for (int b = 0; b < 3; ++b) {
      for (int p = 0; p < 5; ++p) CHECK(y.at((t * 3 + b) * 5 + p) == x.at(((3 - t) * 3 + b) * 5 + p));
    }
  }
  const auto m = motion_aug_batch(x, c, rng);
  CHECK(m.dims() == x.dims());
  CHECK_FALSE(m.requires_grad());
}

TEST_CASE("config validation") {
  AugmentConfig c;
  c.scale_min = 1.5f;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = {};
  c.invert_prob = 2.0f;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = {};
  c.noise_sigma = -0.1f;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

}
