#include <cstdio>
#include <iostream>
#include <string>
#include <utility>

#include "CLI11.hpp"
#include "cdsvae/batching.hpp"
#include "cdsvae/error.hpp"
#include "cdsvae/runner.hpp"

namespace {

using namespace cdsvae;

enum Exit : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kOther = 1 };

std::pair<std::size_t, std::size_t> parse_pair(const std::string& text, const char* what) {
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const auto a = std::stoull(text.substr(0, comma), &used);
    const auto b = std::stoull(text.substr(comma + 1), &used);
    return {a, b};
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + " must look like i,j (got \"" + text + "\")");
  }
}

run::RunConfig config_or_default(const std::string& path) {
  return path.empty() ? run::RunConfig{} : run::load_config(path);
}

model::SeqVae load_checkpoint(const std::string& ckpt, const synth::Dataset& data) {
  return model::load_model(ckpt, data::fit_to(data, model::ModelConfig{}));
}

int dispatch(CLI::App& app, int argc, char** argv) {
  app.require_subcommand(1);

  std::string config_path, out, data_path, ckpt, oracle_path, report, indices, pair;
  std::uint64_t seed = 0;
  int steps = 1;
  double tol = 1e-3;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train and test sets");
  gen->add_option("--config", config_path, "TOML config");
  gen->add_option("--out", out, "Training set output; the test set goes next to it")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "TOML config");
  train->add_option("--data", data_path, "Training set (overrides the config)");
  train->add_option("--out", out, "Run directory")->required();
  auto* seed_opt = train->add_option("--seed", seed, "Overrides the config seed");

  auto* oracle_cmd = app.add_subcommand("train-oracle", "Train the judge classifier");
  oracle_cmd->add_option("--config", config_path, "TOML config");
  oracle_cmd->add_option("--data", data_path, "Training set")->required();
  oracle_cmd->add_option("--val", report, "Validation set (default: <data stem>_test.synq)");
  oracle_cmd->add_option("--out", out, "Oracle checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "Swap metrics and factor EER");
  eval->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  eval->add_option("--data", data_path, "Evaluation set")->required();
  eval->add_option("--oracle", oracle_path, "Oracle checkpoint")->required();
  eval->add_option("--report", out, "CSV report")->required();
  eval->add_option("--seed", seed, "Prior sampling seed");

  auto* swap = app.add_subcommand("swap", "Exchange the factors of two sequences");
  swap->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  swap->add_option("--data", data_path, "Dataset")->required();
  swap->add_option("--indices", indices, "i,j")->required();
  swap->add_option("--out", out, "Output directory")->required();

  auto* interp = app.add_subcommand("interpolate", "Interpolate between two content codes");
  interp->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  interp->add_option("--data", data_path, "Dataset")->required();
  interp->add_option("--pair", pair, "a,b")->required();
  interp->add_option("--steps", steps, "Intermediate points")->required();
  interp->add_option("--out", out, "Output directory")->required();

  auto* gc = app.add_subcommand("grad-check", "Compare tape gradients with finite differences");
  gc->add_option("--config", config_path, "TOML config");
  gc->add_option("--tol", tol, "Relative tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*gen) {
    const auto cfg = config_or_default(config_path);
    synth::SyntheticConfig g = cfg.synth.geometry;
    const auto train_set = synth::generate(g, static_cast<std::size_t>(cfg.synth.train_count));
    g.seed = g.seed + 1000003;
    const auto test_set = synth::generate(g, static_cast<std::size_t>(cfg.synth.test_count));
    const std::filesystem::path p(out);
    const auto test_path = p.parent_path() / (p.stem().string() + "_test" + p.extension().string());
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    synth::write_dataset(train_set, p);
    synth::write_dataset(test_set, test_path);
    std::cout << "wrote " << train_set.size() << " sequences to " << p.string() << " and "
              << test_set.size() << " to " << test_path.string() << '\n';
  } else if (*train) {
    auto cfg = config_or_default(config_path);
    if (!data_path.empty()) cfg.data = data_path;
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (cfg.data.empty()) throw ConfigError("no training data: pass --data or set data in the config");
    const auto train_set = synth::read_dataset(cfg.data);
    std::optional<synth::Dataset> val;
    if (!cfg.val_data.empty()) val = synth::read_dataset(cfg.val_data);
    const auto result = run::run_train(cfg, train_set, out, val ? &*val : nullptr);
    const auto& last = result.log.back();
    std::cout << "trained " << result.log.size() << " epochs, final total " << last.mean.total
              << ", best epoch " << result.best_epoch << "\n";
  } else if (*oracle_cmd) {
    const auto cfg = config_or_default(config_path);
    const auto train_set = synth::read_dataset(data_path);
    std::string val_path = report;
    if (val_path.empty()) {
      const std::filesystem::path p(data_path);
      val_path = (p.parent_path() / (p.stem().string() + "_test" + p.extension().string())).string();
    }
    const auto val_set = synth::read_dataset(val_path);
    const auto oracle = metrics::train_oracle(train_set, val_set, cfg.oracle);
    metrics::save_oracle(oracle, out);
    std::cout << "oracle validation accuracy: content " << oracle.val_acc_content << ", motion "
              << oracle.val_acc_motion << '\n';
  } else if (*eval) {
    const auto data = synth::read_dataset(data_path);
    const auto oracle = metrics::load_oracle(oracle_path);
    const auto model = load_checkpoint(ckpt, data);
    const auto r = run::run_eval(model, data, oracle, seed, ckpt);
    run::write_report(r, out);
    std::cout << metrics::MetricReport::csv_header() << '\n' << r.csv_row() << '\n';
  } else if (*swap) {
    const auto [i, j] = parse_pair(indices, "--indices");
    const auto data = synth::read_dataset(data_path);
    const auto model = load_checkpoint(ckpt, data);
    run::run_swap(model, data, i, j, out);
    std::cout << "wrote swap frames to " << out << '\n';
  } else if (*interp) {
    const auto [a, b] = parse_pair(pair, "--pair");
    const auto data = synth::read_dataset(data_path);
    const auto model = load_checkpoint(ckpt, data);
    run::run_interpolate(model, data, a, b, steps, out);
    std::cout << "wrote interpolation frames to " << out << '\n';
  } else if (*gc) {
    const auto cfg = config_or_default(config_path);
    bool ok = true;
    for (const auto& c : run::grad_check_suite(cfg, tol)) {
      std::printf("%-34s %-4s max_rel_err=%.3e checked=%zu\n", c.name.c_str(),
                  c.report.passed ? "ok" : "FAIL", c.report.max_rel_error, c.report.checked);
      ok = ok && c.report.passed;
    }
    if (!ok) {
      std::cerr << "gradient check failed\n";
      return kNumeric;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastively disentangled sequential VAE on synthetic blob sequences"};
  try {
    return dispatch(app, argc, argv);
  } catch (const cdsvae::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const cdsvae::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const cdsvae::FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const cdsvae::IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const cdsvae::metrics::GateError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const cdsvae::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
