// mcaae: train, fit-classifier, analyze-attractors, eval, decide.
// Exit codes: 0 ok, 2 config or input error, 3 numeric failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mcaae/error.hpp"
#include "mcaae/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> n_recursions;
  std::optional<std::size_t> m_inferences;
  std::optional<double> threshold;
  std::optional<std::string> checkpoint;
  std::optional<std::string> classifier;
};

void add_common(CLI::App* sub, Flags& f, bool models) {
  sub->add_option("--config", f.config, "key = value config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "override the run seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--n-recursions", f.n_recursions, "recursion depth N");
  sub->add_option("--m-inferences", f.m_inferences, "Monte-Carlo runs M")->check(CLI::PositiveNumber);
  sub->add_option("--threshold", f.threshold, "entropy threshold U in [0, 1]")->check(CLI::Range(0.0, 1.0));
  if (models) {
    sub->add_option("--checkpoint", f.checkpoint, "autoencoder checkpoint (default <out>/autoencoder.ckpt)");
  }
}

mcaae::RunConfig resolve(const Flags& f) {
  mcaae::RunConfig cfg = mcaae::RunConfig::load(f.config);
  mcaae::Overrides o;
  o.seed = f.seed;
  if (f.out) o.out_dir = *f.out;
  o.n_recursions = f.n_recursions;
  o.m_inferences = f.m_inferences;
  o.threshold = f.threshold;
  mcaae::apply_overrides(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo attractor autoencoder toolkit"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train the denoising autoencoder");
  add_common(train, f, false);
  auto* fit = app.add_subcommand("fit-classifier", "fit the latent classifier on a trained autoencoder");
  add_common(fit, f, true);
  auto* attract = app.add_subcommand("analyze-attractors", "residuals, spectral radii, basins and orbit strips");
  add_common(attract, f, true);
  auto* eval = app.add_subcommand("eval", "uncertainty and OOD metrics");
  add_common(eval, f, true);
  eval->add_option("--classifier", f.classifier, "classifier checkpoint (default <out>/classifier.ckpt)");
  auto* decide = app.add_subcommand("decide", "accept or reject each sample at threshold U");
  add_common(decide, f, true);
  decide->add_option("--classifier", f.classifier, "classifier checkpoint (default <out>/classifier.ckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const mcaae::RunConfig cfg = resolve(f);
    const auto ae = f.checkpoint ? std::filesystem::path(*f.checkpoint) : mcaae::autoencoder_path(cfg);
    const auto clf = f.classifier ? std::filesystem::path(*f.classifier) : mcaae::classifier_path(cfg);
    if (train->parsed()) {
      mcaae::cmd_train(cfg, std::cout);
    } else if (fit->parsed()) {
      mcaae::cmd_fit_classifier(cfg, ae, std::cout);
    } else if (attract->parsed()) {
      mcaae::cmd_analyze_attractors(cfg, ae, std::cout);
    } else if (eval->parsed()) {
      mcaae::cmd_eval(cfg, ae, clf, std::cout);
    } else if (decide->parsed()) {
      mcaae::cmd_decide(cfg, ae, clf, std::cout);
    }
  } catch (const mcaae::TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mcaae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
