#include "cdsvae/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cdsvae/error.hpp"
#include "toml.hpp"

namespace cdsvae::run {

namespace {

// The double nearest the float's shortest decimal form, so 0.05f is written
// as the double 0.05 rather than the float's own binary expansion.
double shortest(float v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf) - 1, v);
  *r.ptr = '\0';
  return std::strtod(buf, nullptr);
}

class Reader {
 public:
  Reader(const toml::table& table, std::string scope) : table_(table), scope_(std::move(scope)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v || !node->is_boolean()) fail(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!node->is_string()) fail(key, "a string");
      out = *node->value<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!node->is_integer()) fail(key, "an integer");
      const auto v = *node->value<std::int64_t>();
      if (v < 0 && std::is_unsigned_v<T>) fail(key, "a non-negative integer");
      out = static_cast<T>(v);
    } else {
      if (!node->is_number()) fail(key, "a number");
      out = static_cast<T>(*node->value<double>());
    }
  }

  const toml::table* sub(const char* key) {
    seen_.insert(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return nullptr;
    if (!node->is_table()) fail(key, "a table");
    return node->as_table();
  }

  void finish() const {
    for (const auto& [k, v] : table_) {
      if (!seen_.contains(std::string(k.str()))) {
        throw ConfigError("unknown config key '" + scope_ + std::string(k.str()) + "'");
      }
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config key '" + scope_ + key + "' must be " + what);
  }

  const toml::table& table_;
  std::string scope_;
  std::set<std::string> seen_;
};

aug::ContentMode parse_mode(const std::string& s) {
  if (s == "shuffle") return aug::ContentMode::kShuffle;
  if (s == "reverse") return aug::ContentMode::kReverse;
  throw ConfigError("augment.content_mode must be \"shuffle\" or \"reverse\", got \"" + s + "\"");
}

const char* mode_name(aug::ContentMode m) {
  return m == aug::ContentMode::kShuffle ? "shuffle" : "reverse";
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
    loss.validate();
    augment.validate();
    synth.geometry.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (mi_log_every < 1) throw ConfigError("mi_log_every must be >= 1");
  if (mi_log_batch < 2) throw ConfigError("mi_log_batch must be >= 2");
  if (!(optim.lr > 0) || !(optim.beta1 >= 0 && optim.beta1 < 1) ||
      !(optim.beta2 >= 0 && optim.beta2 < 1) || !(optim.epsilon > 0)) {
    throw ConfigError("optimizer settings out of range");
  }
  if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (kl_warmup_epochs < 0) throw ConfigError("kl_warmup_epochs must be >= 0");
  if (synth.train_count < 1 || synth.test_count < 1) throw ConfigError("synth counts must be >= 1");
  if (oracle.hidden < 1 || oracle.max_epochs < 1 || oracle.batch < 1 || !(oracle.lr > 0)) {
    throw ConfigError("oracle settings out of range");
  }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e;
    throw ConfigError("cannot parse " + source + ": " + os.str());
  }
  RunConfig c;
  Reader top(root, "");
  top.get("seed", c.seed);
  top.get("data", c.data);
  top.get("val_data", c.val_data);
  top.get("epochs", c.epochs);
  top.get("batch_size", c.batch_size);
  top.get("mi_log_every", c.mi_log_every);
  top.get("mi_log_batch", c.mi_log_batch);
  top.get("record_wall_time", c.record_wall_time);
  top.get("grad_clip", c.grad_clip);
  top.get("kl_warmup_epochs", c.kl_warmup_epochs);

  if (const auto* t = top.sub("model")) {
    Reader r(*t, "model.");
    r.get("static_dim", c.model.static_dim);
    r.get("dynamic_dim", c.model.dynamic_dim);
    r.get("enc_hidden", c.model.enc_hidden);
    r.get("prior_hidden", c.model.prior_hidden);
    r.get("dec_hidden", c.model.dec_hidden);
    r.get("likelihood_std", c.model.likelihood_std);
    r.finish();
  }
  if (const auto* t = top.sub("loss")) {
    Reader r(*t, "loss.");
    r.get("alpha", c.loss.alpha);
    r.get("beta", c.loss.beta);
    r.get("gamma", c.loss.gamma);
    r.get("tau", c.loss.tau);
    r.finish();
  }
  if (const auto* t = top.sub("optim")) {
    Reader r(*t, "optim.");
    r.get("lr", c.optim.lr);
    r.get("beta1", c.optim.beta1);
    r.get("beta2", c.optim.beta2);
    r.get("epsilon", c.optim.epsilon);
    r.finish();
  }
  if (const auto* t = top.sub("augment")) {
    Reader r(*t, "augment.");
    r.get("content_aug", c.content_aug);
    r.get("motion_aug", c.motion_aug);
    std::string mode = mode_name(c.augment.content_mode);
    r.get("content_mode", mode);
    c.augment.content_mode = parse_mode(mode);
    r.get("scale_min", c.augment.scale_min);
    r.get("scale_max", c.augment.scale_max);
    r.get("noise_sigma", c.augment.noise_sigma);
    r.get("invert_prob", c.augment.invert_prob);
    r.finish();
  }
  if (const auto* t = top.sub("synth")) {
    Reader r(*t, "synth.");
    auto& g = c.synth.geometry;
    r.get("height", g.height);
    r.get("width", g.width);
    r.get("steps", g.steps);
    r.get("content_classes", g.content_classes);
    r.get("motion_classes", g.motion_classes);
    r.get("radius", g.radius);
    r.get("seed", g.seed);
    r.get("train_count", c.synth.train_count);
    r.get("test_count", c.synth.test_count);
    r.finish();
  }
  if (const auto* t = top.sub("oracle")) {
    Reader r(*t, "oracle.");
    r.get("hidden", c.oracle.hidden);
    r.get("max_epochs", c.oracle.max_epochs);
    r.get("batch", c.oracle.batch);
    r.get("lr", c.oracle.lr);
    r.get("input_noise", c.oracle.input_noise);
    r.get("seed", c.oracle.seed);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_toml(const RunConfig& c) {
  toml::table root{
      {"seed", static_cast<std::int64_t>(c.seed)},
      {"data", c.data},
      {"val_data", c.val_data},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"mi_log_every", c.mi_log_every},
      {"mi_log_batch", c.mi_log_batch},
      {"record_wall_time", c.record_wall_time},
      {"grad_clip", shortest(c.grad_clip)},
      {"kl_warmup_epochs", c.kl_warmup_epochs},
      {"model", toml::table{{"static_dim", c.model.static_dim},
                            {"dynamic_dim", c.model.dynamic_dim},
                            {"enc_hidden", c.model.enc_hidden},
                            {"prior_hidden", c.model.prior_hidden},
                            {"dec_hidden", c.model.dec_hidden},
                            {"likelihood_std", shortest(c.model.likelihood_std)}}},
      {"loss", toml::table{{"alpha", shortest(c.loss.alpha)},
                           {"beta", shortest(c.loss.beta)},
                           {"gamma", shortest(c.loss.gamma)},
                           {"tau", shortest(c.loss.tau)}}},
      {"optim", toml::table{{"lr", shortest(c.optim.lr)},
                            {"beta1", shortest(c.optim.beta1)},
                            {"beta2", shortest(c.optim.beta2)},
                            {"epsilon", shortest(c.optim.epsilon)}}},
      {"augment", toml::table{{"content_aug", c.content_aug},
                              {"motion_aug", c.motion_aug},
                              {"content_mode", mode_name(c.augment.content_mode)},
                              {"scale_min", shortest(c.augment.scale_min)},
                              {"scale_max", shortest(c.augment.scale_max)},
                              {"noise_sigma", shortest(c.augment.noise_sigma)},
                              {"invert_prob", shortest(c.augment.invert_prob)}}},
      {"synth", toml::table{{"height", c.synth.geometry.height},
                            {"width", c.synth.geometry.width},
                            {"steps", c.synth.geometry.steps},
                            {"content_classes", c.synth.geometry.content_classes},
                            {"motion_classes", c.synth.geometry.motion_classes},
                            {"radius", shortest(c.synth.geometry.radius)},
                            {"seed", static_cast<std::int64_t>(c.synth.geometry.seed)},
                            {"train_count", c.synth.train_count},
                            {"test_count", c.synth.test_count}}},
      {"oracle", toml::table{{"hidden", c.oracle.hidden},
                             {"max_epochs", c.oracle.max_epochs},
                             {"batch", c.oracle.batch},
                             {"lr", shortest(c.oracle.lr)},
                             {"input_noise", shortest(c.oracle.input_noise)},
                             {"seed", static_cast<std::int64_t>(c.oracle.seed)}}},
  };
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

}  // namespace cdsvae::run
