#include <string>

#include "cdsvae/error.hpp"
#include "cdsvae/run_config.hpp"
#include "doctest.h"

using namespace cdsvae;
using namespace cdsvae::run;

TEST_SUITE("config") {

TEST_CASE("empty text gives the defaults") {
  const RunConfig c = parse_config("");
  const RunConfig d;
  CHECK(c.epochs == d.epochs);
  CHECK(c.batch_size == d.batch_size);
  CHECK(c.loss.alpha == 1.0f);
  CHECK(c.loss.beta == 1.0f);
  CHECK(c.loss.gamma == 1.0f);
  CHECK(c.loss.tau == 0.5f);
  CHECK(c.model.static_dim == d.model.static_dim);
  CHECK(c.content_aug);
  CHECK(c.motion_aug);
}

TEST_CASE("values are read from their tables") {
  const RunConfig c = parse_config(R"(
seed = 7
epochs = 3
[loss]
beta = 2.5
[model]
static_dim = 5
[augment]
content_mode = "reverse"
motion_aug = false
[synth]
train_count = 100
)");
  CHECK(c.seed == 7u);
  CHECK(c.epochs == 3);
  CHECK(c.loss.beta == 2.5f);
  CHECK(c.model.static_dim == 5);
  CHECK(c.augment.content_mode == aug::ContentMode::kReverse);
  CHECK_FALSE(c.motion_aug);
  CHECK(c.synth.train_count == 100);
}

TEST_CASE("unknown keys, tables and ill-typed values are config errors") {
  CHECK_THROWS_AS(parse_config("epoch = 3"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\ndelta = 1.0"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("epochs = \"ten\""), ConfigError);
  CHECK_THROWS_AS(parse_config("epochs = "), ConfigError);
  CHECK_THROWS_AS(parse_config("[augment]\ncontent_mode = \"sideways\""), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.toml"), ConfigError);
}

TEST_CASE("out-of-range values are config errors") {
  CHECK_THROWS_AS(parse_config("epochs = 0"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\ntau = 0.0"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\nbeta = -1.0"), ConfigError);
  CHECK_THROWS_AS(parse_config("kl_warmup_epochs = -1"), ConfigError);
}

TEST_CASE("to_toml round trips") {
  RunConfig c;
  c.seed = 11;
  c.epochs = 17;
  c.loss.tau = 0.1f;
  c.model.likelihood_std = 0.3f;
  c.optim.lr = 2e-3f;
  c.augment.noise_sigma = 0.07f;
  c.content_aug = false;
  const std::string text = to_toml(c);
  const RunConfig back = parse_config(text);
  CHECK(to_toml(back) == text);
  CHECK(back.loss.tau == c.loss.tau);
  CHECK(back.model.likelihood_std == c.model.likelihood_std);
  CHECK(back.optim.lr == c.optim.lr);
  CHECK(back.augment.noise_sigma == c.augment.noise_sigma);
  CHECK_FALSE(back.content_aug);
  CHECK(back.seed == 11u);
}

}
