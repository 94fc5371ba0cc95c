#pragma once

// End-to-end commands behind the CLI: train, fit-classifier,
// analyze-attractors, eval and decide. Every command writes its resolved
// configuration next to its outputs, so rerunning from that file reproduces
// the run.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcaae/autoencoder.hpp"
#include "mcaae/config.hpp"
#include "mcaae/dynamics.hpp"
#include "mcaae/mca.hpp"
#include "mcaae/metrics.hpp"

namespace mcaae {

struct DatasetSpec {
  std::string kind = "synth";  // synth | idx | dir
  std::string generator;       // synth
  std::size_t per_class = 0;   // synth: samples per class
  std::uint64_t seed = 0;      // synth
  std::filesystem::path images, labels;  // idx
  std::filesystem::path path;            // dir
  std::size_t subsample = 0;             // per-class cap after loading, 0 keeps all
};

struct AttractorSpec {
  std::string data = "train";
  std::vector<std::string> compare;  // further datasets analysed with the same columns
  std::size_t max_samples = 100;     // per dataset, 0 = all
  std::size_t orbit_steps = 7;
  std::size_t orbit_dumps = 4;
  double epsilon = kDefaultFixedPointEpsilon;
  std::size_t power_iters = 100;
  double power_tol = 1e-4;
  double basin_radius = 0.5;
  std::size_t basin_trials = 10;
  bool masked = false;  // analyse a sampled dropout mask per sample instead of the mean network
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  std::size_t image_size = 64;
  std::map<std::string, DatasetSpec> datasets;

  std::string train_data = "train";
  Architecture arch;
  TrainConfig train;
  AugmentationConfig augment;
  ClassifierConfig classifier;

  std::size_t m_inferences = 20;
  std::size_t n_recursions = 2;
  double keep_prob = 0.67;
  std::optional<double> threshold;

  std::string eval_in = "test";
  std::vector<std::string> eval_out;
  std::string reference_out;  // defaults to the first eval_out entry
  std::size_t pair_total = 0;  // 0 pairs min(|in|, |out|) samples per side
  std::size_t histogram_bins = 20;

  AttractorSpec attractors;

  /// Unknown keys are rejected so typos surface as config errors.
  static RunConfig from_kv(const KeyValueConfig& kv);
  static RunConfig load(const std::filesystem::path& path);
  KeyValueConfig to_kv() const;
  /// Ranges, dataset references and referenced input paths.
  void validate() const;
};

/// Sets derived seeds: train/classifier seeds follow the run seed.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::size_t> n_recursions;
  std::optional<std::size_t> m_inferences;
  std::optional<double> threshold;
};
void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Loads (and for synthetic kinds generates) a named dataset, preprocessed to
/// the configured image size.
ImageDataset load_dataset(const RunConfig& cfg, const std::string& name);

struct EvalReport {
  std::vector<MetricRow> rows;
  std::optional<SeparationSummary> separation;
  std::map<std::string, std::vector<double>> entropies;  // per dataset, full sets
};

/// The untrained model cmd_train starts from.
Autoencoder initial_autoencoder(const RunConfig& cfg, std::size_t input_dim);

std::filesystem::path autoencoder_path(const RunConfig& cfg);
std::filesystem::path classifier_path(const RunConfig& cfg);

/// `log` receives human-readable progress; pass a null stream to silence it.
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_fit_classifier(const RunConfig& cfg, const std::filesystem::path& ae_path, std::ostream& log);
void cmd_analyze_attractors(const RunConfig& cfg, const std::filesystem::path& ae_path, std::ostream& log);
EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& ae_path,
                    const std::filesystem::path& clf_path, std::ostream& log);
void cmd_decide(const RunConfig& cfg, const std::filesystem::path& ae_path, const std::filesystem::path& clf_path,
                std::ostream& log);

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
std::string metrics_json(const EvalReport& report, const RunConfig& cfg);

}  // namespace mcaae
