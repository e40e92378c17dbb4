// acs: command-line front end for corpus generation, training, localization,
// evaluation, ablation, sensitivity sweeps and the self-test.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "acs/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::string> variants;
  std::optional<std::string> manifest;
  std::optional<std::string> checkpoint;
  std::optional<std::string> detections;
  std::optional<std::string> resume;
  std::optional<std::string> split;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

acs::RunConfig resolve(const Flags& f, const std::string& command) {
  acs::RunConfig cfg = f.config.empty() ? acs::RunConfig{} : acs::load_run_config(f.config);
  if (f.seed) cfg.set_seed(*f.seed);
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  if (f.manifest) cfg.manifest = *f.manifest;
  if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
  if (f.detections) cfg.detections = *f.detections;
  if (f.split) cfg.split = acs::detail::parse_split(*f.split);
  if (f.alpha) {
    cfg.train.alpha = *f.alpha;
    cfg.alphas = {*f.alpha};
  }
  if (f.beta) {
    cfg.inference.beta = *f.beta;
    cfg.betas = {*f.beta};
  }
  if (f.variants) {
    cfg.variants = split_list(*f.variants);
    if (command == "localize") {
      if (cfg.variants.size() != 1) throw acs::ConfigError("localize takes a single variant");
      const acs::Variant v = acs::parse_variant(cfg.variants.front());
      cfg.inference = acs::with_variant(cfg.inference, v);
      cfg.c4_explicit = true;
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action-context separation for weakly supervised temporal action localization"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "seed for generation, initialization and data order");
    sub->add_option("--out-dir", f.out_dir, "output directory");
    sub->add_option("--alpha", f.alpha, "partition margin alpha, 0 < alpha < 0.5");
    sub->add_option("--beta", f.beta, "rgb weight of the two-stream fusion, in [0, 1]");
    sub->add_option("--variants", f.variants, "comma-separated variants, e.g. 0#,3#,5#");
    sub->add_option("--manifest", f.manifest, "dataset manifest");
    sub->add_option("--split", f.split, "split to localize/evaluate (train|test)");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* train = app.add_subcommand("train", "train a model");
  auto* localize = app.add_subcommand("localize", "write detections for a split");
  auto* eval = app.add_subcommand("eval", "evaluate detections against ground truth");
  auto* ablate = app.add_subcommand("ablate", "ablation over variants 0#..5#");
  auto* sweep = app.add_subcommand("sweep", "alpha x beta sensitivity grid");
  auto* selftest = app.add_subcommand("selftest", "gradient checks and brute-force oracles");
  for (auto* s : {synth, train, localize, eval, ablate, sweep}) common(s);
  train->add_option("--resume", f.resume, "checkpoint to continue training from");
  localize->add_option("--checkpoint", f.checkpoint, "trained model checkpoint");
  eval->add_option("--detections", f.detections, "detections CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? acs::kOk : acs::kConfigError;
  }

  try {
    if (selftest->parsed()) return acs::cmd_selftest();
    CLI::App* sub = app.get_subcommands().front();
    const acs::RunConfig cfg = resolve(f, sub->get_name());
    if (synth->parsed()) return acs::cmd_synth(cfg);
    if (train->parsed()) {
      std::optional<std::filesystem::path> resume;
      if (f.resume) resume = *f.resume;
      return acs::cmd_train(cfg, resume);
    }
    if (localize->parsed()) return acs::cmd_localize(cfg);
    if (eval->parsed()) return acs::cmd_eval(cfg);
    if (ablate->parsed()) return acs::cmd_ablate(cfg);
    if (sweep->parsed()) return acs::cmd_sweep(cfg);
  } catch (const acs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return acs::kConfigError;
  } catch (const acs::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return acs::kConfigError;
  } catch (const acs::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return acs::kIoError;
  } catch (const acs::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return acs::kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return acs::kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return acs::kFailure;
  }
  return acs::kFailure;
}
