#include "mcaae/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

#include "mcaae/data.hpp"
#include "mcaae/dynamics.hpp"
#include "mcaae/error.hpp"

namespace mcaae {

namespace fs = std::filesystem;

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derived_seed(std::uint64_t seed, const std::string& purpose) {
  Rng rng = substream(seed, {name_hash(purpose)});
  return rng();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& items) {
  std::vector<std::string> s;
  for (std::size_t v : items) s.push_back(std::to_string(v));
  return join(s);
}

std::string range_text(const std::pair<double, double>& r) {
  return format_double(r.first) + ", " + format_double(r.second);
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ValidationError("cannot create output directory " + p.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  return out;
}

void write_resolved(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  open_out(cfg.out_dir / "resolved_config.txt") << cfg.to_kv().serialize();
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ValidationError(what + " " + p.string() + " does not exist");
}

const std::set<std::string>& known_dataset_fields() {
  static const std::set<std::string> f{"kind", "generator", "per_class", "seed", "images", "labels", "path", "subsample"};
  return f;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> k{
      "seed", "output.dir", "data.image_size", "train.data", "train.epochs", "train.batch_size",
      "train.learning_rate", "train.keep_prob", "augment.blur_sigma", "augment.noise_std", "augment.brightness",
      "augment.contrast", "model.latent_dim", "model.hidden", "classifier.epochs", "classifier.batch_size",
      "classifier.learning_rate", "inference.m", "inference.n", "inference.keep_prob", "inference.threshold",
      "eval.in", "eval.out", "eval.reference_out", "eval.pair_total", "eval.histogram_bins", "attractors.data",
      "attractors.compare", "attractors.max_samples", "attractors.orbit_steps", "attractors.orbit_dumps",
      "attractors.epsilon", "attractors.power_iters", "attractors.power_tol", "attractors.basin_radius",
      "attractors.basin_trials", "attractors.masked"};
  return k;
}

std::map<std::string, DatasetSpec> default_datasets() {
  std::map<std::string, DatasetSpec> d;
  d["train"] = {"synth", "bars-vs-blobs", 250, 0, {}, {}, {}, 0};
  d["test"] = {"synth", "bars-vs-blobs", 100, 0, {}, {}, {}, 0};
  d["triangles"] = {"synth", "triangles", 200, 0, {}, {}, {}, 0};
  d["crosses"] = {"synth", "crosses", 200, 0, {}, {}, {}, 0};
  return d;
}

McaOptions mca_options(const RunConfig& cfg, const std::string& dataset) {
  McaOptions o;
  o.m_inferences = cfg.m_inferences;
  o.n_recursions = cfg.n_recursions;
  o.keep_prob = cfg.keep_prob;
  o.seed = derived_seed(cfg.seed, "mca/" + dataset);
  return o;
}

void check_model_pair(const Autoencoder& ae, const LatentClassifier& clf, const ImageDataset& data) {
  if (data.pixels() != ae.input_dim()) {
    throw ValidationError("dataset " + data.name + " has " + std::to_string(data.pixels()) +
                          " pixels but the autoencoder expects " + std::to_string(ae.input_dim()));
  }
  if (clf.latent_dim() != ae.latent_dim()) throw ValidationError("classifier does not match the autoencoder latent width");
}

}  // namespace

// --- RunConfig ------------------------------------------------------------------------

RunConfig RunConfig::from_kv(const KeyValueConfig& kv) {
  RunConfig c;
  bool any_data = false;
  for (const auto& [key, value] : kv.values()) {
    if (key.rfind("data.", 0) == 0 && key != "data.image_size") {
      const auto dot = key.rfind('.');
      const std::string name = key.substr(5, dot - 5);
      const std::string field = key.substr(dot + 1);
      if (dot <= 5 || name.empty() || !known_dataset_fields().count(field)) {
        throw ValidationError("unknown config key '" + key + "'");
      }
      any_data = true;
      c.datasets[name];
      continue;
    }
    if (!known_keys().count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  if (!any_data) c.datasets = default_datasets();
  for (auto& [name, spec] : c.datasets) {
    const std::string p = "data." + name + ".";
    if (!any_data) continue;
    spec.kind = kv.get_string(p + "kind", "synth");
    spec.generator = kv.get_string(p + "generator", "");
    spec.per_class = kv.get_size(p + "per_class", 0);
    spec.seed = static_cast<std::uint64_t>(kv.get_int(p + "seed", 0));
    spec.images = kv.get_string(p + "images", "");
    spec.labels = kv.get_string(p + "labels", "");
    spec.path = kv.get_string(p + "path", "");
    spec.subsample = kv.get_size(p + "subsample", 0);
  }

  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.out_dir = kv.get_string("output.dir", "run");
  c.image_size = kv.get_size("data.image_size", 64);
  c.train_data = kv.get_string("train.data", "train");
  c.train.epochs = kv.get_size("train.epochs", c.train.epochs);
  c.train.batch_size = kv.get_size("train.batch_size", c.train.batch_size);
  c.train.learning_rate = kv.get_double("train.learning_rate", c.train.learning_rate);
  c.train.keep_prob = kv.get_double("train.keep_prob", c.train.keep_prob);
  c.augment.blur_sigma = kv.get_range("augment.blur_sigma", c.augment.blur_sigma);
  c.augment.noise_std = kv.get_range("augment.noise_std", c.augment.noise_std);
  c.augment.brightness_delta = kv.get_range("augment.brightness", c.augment.brightness_delta);
  c.augment.contrast_factor = kv.get_range("augment.contrast", c.augment.contrast_factor);
  c.arch.latent_dim = kv.get_size("model.latent_dim", c.arch.latent_dim);
  if (kv.has("model.hidden")) {
    c.arch.hidden.clear();
    for (const auto& w : kv.get_list("model.hidden", {})) {
      KeyValueConfig tmp;
      tmp.set("w", w);
      c.arch.hidden.push_back(tmp.get_size("w", 0));
    }
  }
  c.classifier.epochs = kv.get_size("classifier.epochs", c.classifier.epochs);
  c.classifier.batch_size = kv.get_size("classifier.batch_size", c.classifier.batch_size);
  c.classifier.learning_rate = kv.get_double("classifier.learning_rate", c.classifier.learning_rate);
  c.m_inferences = kv.get_size("inference.m", c.m_inferences);
  c.n_recursions = kv.get_size("inference.n", c.n_recursions);
  c.keep_prob = kv.get_double("inference.keep_prob", c.train.keep_prob);
  if (kv.has("inference.threshold")) c.threshold = kv.get_double("inference.threshold", 0.0);
  c.eval_in = kv.get_string("eval.in", "test");
  c.eval_out = kv.get_list("eval.out", any_data ? std::vector<std::string>{} : std::vector<std::string>{"triangles", "crosses"});
  c.reference_out = kv.get_string("eval.reference_out", c.eval_out.empty() ? "" : c.eval_out.front());
  c.pair_total = kv.get_size("eval.pair_total", 0);
  c.histogram_bins = kv.get_size("eval.histogram_bins", 20);

  AttractorSpec& a = c.attractors;
  a.data = kv.get_string("attractors.data", c.train_data);
  a.compare = kv.get_list("attractors.compare", {});
  a.max_samples = kv.get_size("attractors.max_samples", a.max_samples);
  a.orbit_steps = kv.get_size("attractors.orbit_steps", a.orbit_steps);
  a.orbit_dumps = kv.get_size("attractors.orbit_dumps", a.orbit_dumps);
  a.epsilon = kv.get_double("attractors.epsilon", a.epsilon);
  a.power_iters = kv.get_size("attractors.power_iters", a.power_iters);
  a.power_tol = kv.get_double("attractors.power_tol", a.power_tol);
  a.basin_radius = kv.get_double("attractors.basin_radius", a.basin_radius);
  a.basin_trials = kv.get_size("attractors.basin_trials", a.basin_trials);
  a.masked = kv.get_bool("attractors.masked", a.masked);

  c.train.seed = derived_seed(c.seed, "train");
  c.classifier.seed = derived_seed(c.seed, "classifier");
  c.classifier.keep_prob = c.train.keep_prob;
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return from_kv(KeyValueConfig::load(path)); }

KeyValueConfig RunConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("seed", std::to_string(seed));
  kv.set("output.dir", out_dir.string());
  kv.set("data.image_size", std::to_string(image_size));
  for (const auto& [name, s] : datasets) {
    const std::string p = "data." + name + ".";
    kv.set(p + "kind", s.kind);
    if (s.kind == "synth") {
      kv.set(p + "generator", s.generator);
      kv.set(p + "per_class", std::to_string(s.per_class));
      if (s.seed != 0) kv.set(p + "seed", std::to_string(s.seed));
    } else if (s.kind == "idx") {
      kv.set(p + "images", s.images.string());
      kv.set(p + "labels", s.labels.string());
    } else {
      kv.set(p + "path", s.path.string());
    }
    if (s.subsample != 0) kv.set(p + "subsample", std::to_string(s.subsample));
  }
  kv.set("train.data", train_data);
  kv.set("train.epochs", std::to_string(train.epochs));
  kv.set("train.batch_size", std::to_string(train.batch_size));
  kv.set("train.learning_rate", format_double(train.learning_rate));
  kv.set("train.keep_prob", format_double(train.keep_prob));
  kv.set("augment.blur_sigma", range_text(augment.blur_sigma));
  kv.set("augment.noise_std", range_text(augment.noise_std));
  kv.set("augment.brightness", range_text(augment.brightness_delta));
  kv.set("augment.contrast", range_text(augment.contrast_factor));
  kv.set("model.latent_dim", std::to_string(arch.latent_dim));
  kv.set("model.hidden", join_sizes(arch.hidden));
  kv.set("classifier.epochs", std::to_string(classifier.epochs));
  kv.set("classifier.batch_size", std::to_string(classifier.batch_size));
  kv.set("classifier.learning_rate", format_double(classifier.learning_rate));
  kv.set("inference.m", std::to_string(m_inferences));
  kv.set("inference.n", std::to_string(n_recursions));
  kv.set("inference.keep_prob", format_double(keep_prob));
  if (threshold) kv.set("inference.threshold", format_double(*threshold));
  kv.set("eval.in", eval_in);
  kv.set("eval.out", join(eval_out));
  if (!reference_out.empty()) kv.set("eval.reference_out", reference_out);
  kv.set("eval.pair_total", std::to_string(pair_total));
  kv.set("eval.histogram_bins", std::to_string(histogram_bins));
  kv.set("attractors.data", attractors.data);
  kv.set("attractors.compare", join(attractors.compare));
  kv.set("attractors.max_samples", std::to_string(attractors.max_samples));
  kv.set("attractors.orbit_steps", std::to_string(attractors.orbit_steps));
  kv.set("attractors.orbit_dumps", std::to_string(attractors.orbit_dumps));
  kv.set("attractors.epsilon", format_double(attractors.epsilon));
  kv.set("attractors.power_iters", std::to_string(attractors.power_iters));
  kv.set("attractors.power_tol", format_double(attractors.power_tol));
  kv.set("attractors.basin_radius", format_double(attractors.basin_radius));
  kv.set("attractors.basin_trials", std::to_string(attractors.basin_trials));
  kv.set("attractors.masked", attractors.masked ? "true" : "false");
  return kv;
}

void RunConfig::validate() const {
  if (image_size < 8) throw ValidationError("data.image_size must be at least 8");
  if (m_inferences < 1) throw ValidationError("inference.m must be at least 1");
  if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0)) {
    throw ValidationError("inference.threshold must lie in [0, 1]");
  }
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("inference.keep_prob must lie in (0, 1]");
  if (arch.latent_dim == 0) throw ValidationError("model.latent_dim must be positive");
  for (std::size_t h : arch.hidden) {
    if (h == 0) throw ValidationError("model.hidden widths must be positive");
  }
  train.validate();
  augment.validate();
  classifier.validate();
  if (histogram_bins == 0) throw ValidationError("eval.histogram_bins must be positive");

  for (const auto& [name, s] : datasets) {
    if (s.kind == "synth") {
      const auto kinds = synth_kinds();
      if (std::find(kinds.begin(), kinds.end(), s.generator) == kinds.end()) {
        throw ValidationError("dataset " + name + ": unknown generator '" + s.generator + "'");
      }
    } else if (s.kind == "idx") {
      require_file(s.images, "dataset " + name + ": image file");
      require_file(s.labels, "dataset " + name + ": label file");
    } else if (s.kind == "dir") {
      if (!fs::is_directory(s.path)) throw ValidationError("dataset " + name + ": directory " + s.path.string() + " does not exist");
    } else {
      throw ValidationError("dataset " + name + ": unknown kind '" + s.kind + "'");
    }
  }
  auto require_dataset = [&](const std::string& name, const char* key) {
    if (!datasets.count(name)) throw ValidationError(std::string(key) + " refers to undefined dataset '" + name + "'");
  };
  require_dataset(train_data, "train.data");
  require_dataset(eval_in, "eval.in");
  for (const auto& o : eval_out) require_dataset(o, "eval.out");
  if (!reference_out.empty() &&
      std::find(eval_out.begin(), eval_out.end(), reference_out) == eval_out.end()) {
    throw ValidationError("eval.reference_out must be one of eval.out");
  }
  require_dataset(attractors.data, "attractors.data");
  for (const auto& o : attractors.compare) require_dataset(o, "attractors.compare");
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.train.seed = derived_seed(cfg.seed, "train");
    cfg.classifier.seed = derived_seed(cfg.seed, "classifier");
  }
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.n_recursions) cfg.n_recursions = *o.n_recursions;
  if (o.m_inferences) cfg.m_inferences = *o.m_inferences;
  if (o.threshold) cfg.threshold = *o.threshold;
}

ImageDataset load_dataset(const RunConfig& cfg, const std::string& name) {
  const auto it = cfg.datasets.find(name);
  if (it == cfg.datasets.end()) throw ValidationError("undefined dataset '" + name + "'");
  const DatasetSpec& s = it->second;
  ImageDataset ds;
  if (s.kind == "synth") {
    const std::uint64_t seed = s.seed != 0 ? s.seed : derived_seed(cfg.seed, "data/" + name);
    ds = synth_generate(s.generator, s.per_class, cfg.image_size, seed);
  } else if (s.kind == "idx") {
    ds = preprocess_dataset(load_idx(s.images, s.labels), cfg.image_size);
  } else if (s.kind == "dir") {
    ds = load_image_directory(s.path, cfg.image_size);
  } else {
    throw ValidationError("dataset " + name + ": unknown kind '" + s.kind + "'");
  }
  if (s.subsample != 0) ds = subsample_per_class(ds, s.subsample, derived_seed(cfg.seed, "subsample/" + name));
  ds.name = name;
  ds.validate();
  return ds;
}

Autoencoder initial_autoencoder(const RunConfig& cfg, std::size_t input_dim) {
  Architecture arch = cfg.arch;
  arch.input_dim = input_dim;
  return Autoencoder::make(arch, derived_seed(cfg.seed, "init"));
}

fs::path autoencoder_path(const RunConfig& cfg) { return cfg.out_dir / "autoencoder.ckpt"; }
fs::path classifier_path(const RunConfig& cfg) { return cfg.out_dir / "classifier.ckpt"; }

// --- commands ---------------------------------------------------------------------------

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ImageDataset data = load_dataset(cfg, cfg.train_data);
  if (data.empty()) throw ValidationError("training dataset '" + cfg.train_data + "' is empty");
  write_resolved(cfg);
  log << "training autoencoder on " << data.size() << " images (" << cfg.train.epochs << " epochs)\n";
  const std::size_t every = std::max<std::size_t>(1, cfg.train.epochs / 20);
  TrainResult result = train(initial_autoencoder(cfg, data.pixels()), data, cfg.train, cfg.augment,
                             [&](std::size_t epoch, double loss) {
                               if (epoch % every == 0 || epoch + 1 == cfg.train.epochs) {
                                 log << "  epoch " << epoch << " loss " << format_double(loss) << "\n";
                               }
                             });
  save_autoencoder(result.model, autoencoder_path(cfg));
  std::ofstream csv = open_out(cfg.out_dir / "loss.csv");
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) csv << e << "," << format_double(result.loss_history[e]) << "\n";
  log << "wrote " << autoencoder_path(cfg).string() << "\n";
}

void cmd_fit_classifier(const RunConfig& cfg, const fs::path& ae_path, std::ostream& log) {
  cfg.validate();
  require_file(ae_path, "autoencoder checkpoint");
  const Autoencoder ae = load_autoencoder(ae_path);
  const ImageDataset data = load_dataset(cfg, cfg.train_data);
  if (data.pixels() != ae.input_dim()) throw ValidationError("training images do not match the checkpoint input width");
  write_resolved(cfg);
  log << "fitting latent classifier (N = " << cfg.n_recursions << ", " << cfg.classifier.epochs << " epochs)\n";
  const LatentClassifier clf = train_classifier(ae, data, cfg.n_recursions, cfg.classifier);
  save_classifier(clf, classifier_path(cfg));
  log << "training accuracy (dropout off) " << format_double(classifier_accuracy(ae, clf, data, cfg.n_recursions))
      << "\nwrote " << classifier_path(cfg).string() << "\n";
}

void cmd_analyze_attractors(const RunConfig& cfg, const fs::path& ae_path, std::ostream& log) {
  cfg.validate();
  require_file(ae_path, "autoencoder checkpoint");
  const Autoencoder ae = load_autoencoder(ae_path);
  write_resolved(cfg);
  const AttractorSpec& spec = cfg.attractors;
  ensure_dir(cfg.out_dir / "orbits");

  std::vector<std::string> names{spec.data};
  for (const auto& c : spec.compare) {
    if (std::find(names.begin(), names.end(), c) == names.end()) names.push_back(c);
  }
  std::ofstream csv = open_out(cfg.out_dir / "attractors.csv");
  csv << "dataset,sample,label,residual,is_fixed,spectral_radius,spectral_converged,spectral_iterations,"
         "basin_fraction,basin_delta,orbit_final_residual\n";
  for (const std::string& name : names) {
    const ImageDataset data = load_dataset(cfg, name);
    if (!data.empty() && data.pixels() != ae.input_dim()) {
      throw ValidationError("dataset " + name + " does not match the checkpoint input width");
    }
    const std::size_t count = spec.max_samples == 0 ? data.size() : std::min(spec.max_samples, data.size());
    std::vector<double> residuals;
    std::size_t contracting = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Tensor& x = data.images[i];
      std::optional<AutoencoderMask> mask;
      if (spec.masked) {
        Rng rng = substream(derived_seed(cfg.seed, "attractor-mask/" + name), {i});
        mask = sample_autoencoder_mask(ae, cfg.keep_prob, rng);
      }
      const AutoencoderMask* m = mask ? &*mask : nullptr;
      const FixedPointReport fp = fixed_point_residual(ae, x, m, spec.epsilon);
      const SpectralReport sr =
          jacobian_spectral_radius(ae, x, m, {spec.power_iters, spec.power_tol, 1e-4, derived_seed(cfg.seed, name) + i});
      BasinReport basin;
      if (spec.basin_trials > 0) {
        basin = basin_probe(ae, x, m, spec.basin_radius, spec.basin_trials, spec.orbit_steps,
                            derived_seed(cfg.seed, "basin/" + name) + i);
      }
      const Orbit orbit = iterate(ae, x, m, spec.orbit_steps);
      residuals.push_back(fp.residual);
      if (sr.radius_estimate < 1.0) ++contracting;
      csv << name << "," << i << "," << data.labels[i] << "," << format_double(fp.residual) << ","
          << (fp.is_fixed ? 1 : 0) << "," << format_double(sr.radius_estimate) << "," << (sr.converged ? 1 : 0) << ","
          << sr.iterations_used << "," << (spec.basin_trials > 0 ? format_double(basin.fraction) : "") << ","
          << (spec.basin_trials > 0 ? format_double(basin.delta) : "") << ","
          << (orbit.residuals.empty() ? "" : format_double(orbit.residuals.back())) << "\n";

      if (name == spec.data && i < spec.orbit_dumps) {
        const std::size_t h = data.height(), w = data.width();
        Tensor strip({h, w * orbit.iterates.size()});
        for (std::size_t s = 0; s < orbit.iterates.size(); ++s) {
          for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) strip.at(r, s * w + c) = orbit.iterates[s][r * w + c];
          }
        }
        char file[64];
        std::snprintf(file, sizeof file, "%s_%04zu.pgm", name.c_str(), i);
        save_pgm(strip, cfg.out_dir / "orbits" / file);
      }
    }
    if (!residuals.empty()) {
      std::vector<double> sorted = residuals;
      std::sort(sorted.begin(), sorted.end());
      log << name << ": median residual " << format_double(sorted[sorted.size() / 2]) << ", spectral radius < 1 on "
          << contracting << "/" << count << " samples\n";
    }
  }
  log << "wrote " << (cfg.out_dir / "attractors.csv").string() << "\n";
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "d_in,d_out,auroc,aupr,fpr95,n_in,n_out\n";
  for (const MetricRow& r : rows) {
    out << r.d_in << "," << r.d_out << "," << format_double(r.auroc) << "," << format_double(r.aupr) << ","
        << format_double(r.fpr95) << "," << r.n_in << "," << r.n_out << "\n";
  }
}

std::string metrics_json(const EvalReport& report, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["m_inferences"] = cfg.m_inferences;
  j["n_recursions"] = cfg.n_recursions;
  j["keep_prob"] = cfg.keep_prob;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const MetricRow& r : report.rows) {
    rows.push_back({{"d_in", r.d_in},
                    {"d_out", r.d_out},
                    {"auroc", r.auroc},
                    {"aupr", r.aupr},
                    {"fpr95", r.fpr95},
                    {"n_in", r.n_in},
                    {"n_out", r.n_out}});
  }
  j["rows"] = rows;
  if (report.separation) {
    j["separation"] = {{"reference_out", cfg.reference_out}, {"td", report.separation->td}, {"od", report.separation->od}};
  }
  return j.dump(2) + "\n";
}

namespace {

void write_predictions(const fs::path& path, const ImageDataset& data, const std::vector<PredictiveDistribution>& preds,
                       const std::optional<double>& threshold, std::size_t m) {
  std::ofstream out = open_out(path);
  out << "sample_id,true_label";
  for (std::size_t l = 0; l < m; ++l) out << ",run" << l;
  const std::size_t classes = preds.empty() ? 0 : static_cast<std::size_t>(preds.front().mean_p.size());
  for (std::size_t c = 0; c < classes; ++c) out << ",p" << c;
  out << ",entropy,decision\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out << i << "," << data.labels[i];
    for (std::size_t lbl : preds[i].run_labels()) out << "," << lbl;
    for (Eigen::Index c = 0; c < preds[i].mean_p.size(); ++c) out << "," << format_double(preds[i].mean_p(c));
    out << "," << format_double(preds[i].entropy) << ",";
    if (threshold) {
      const Decision d = decide(preds[i], *threshold);
      out << (d.accepted ? "accepted:" + std::to_string(d.label) : std::string("rejected"));
    } else {
      out << "-";
    }
    out << "\n";
  }
}

}  // namespace

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& ae_path, const fs::path& clf_path, std::ostream& log) {
  cfg.validate();
  require_file(ae_path, "autoencoder checkpoint");
  require_file(clf_path, "classifier checkpoint");
  const Autoencoder ae = load_autoencoder(ae_path);
  const LatentClassifier clf = load_classifier(clf_path);
  write_resolved(cfg);

  const ImageDataset in = load_dataset(cfg, cfg.eval_in);
  if (in.empty()) throw ValidationError("evaluation dataset '" + cfg.eval_in + "' is empty");
  check_model_pair(ae, clf, in);
  log << "MC attractor inference: M = " << cfg.m_inferences << ", N = " << cfg.n_recursions << "\n";

  EvalReport report;
  const auto in_preds = mca_predict_dataset(ae, clf, in, mca_options(cfg, cfg.eval_in));
  write_predictions(cfg.out_dir / ("predictions_" + cfg.eval_in + ".csv"), in, in_preds, cfg.threshold,
                    cfg.m_inferences);
  std::vector<double> in_entropy;
  for (const auto& p : in_preds) in_entropy.push_back(p.entropy);
  report.entropies[cfg.eval_in] = in_entropy;

  EntropyHistogramSet hists;
  hists.in_dist = in_entropy;
  for (const std::string& name : cfg.eval_out) {
    const ImageDataset out = load_dataset(cfg, name);
    if (out.empty()) throw ValidationError("OOD dataset '" + name + "' is empty");
    check_model_pair(ae, clf, out);
    const auto preds = mca_predict_dataset(ae, clf, out, mca_options(cfg, name));
    write_predictions(cfg.out_dir / ("predictions_" + name + ".csv"), out, preds, cfg.threshold, cfg.m_inferences);
    std::vector<double> ent;
    for (const auto& p : preds) ent.push_back(p.entropy);
    report.entropies[name] = ent;
    hists.out_dists[name] = ent;

    const std::size_t total = cfg.pair_total != 0 ? cfg.pair_total : 2 * std::min(in.size(), out.size());
    const OodPairing pairing = make_ood_pairing(in, out, total, derived_seed(cfg.seed, "pairing/" + name));
    ScoredPopulations pops;
    for (std::size_t i : pairing.in_source_index) pops.negative_scores.push_back(in_entropy[i]);
    for (std::size_t i : pairing.out_source_index) pops.positive_scores.push_back(ent[i]);
    report.rows.push_back(metric_row(cfg.eval_in, name, pops));
  }

  if (cfg.eval_out.empty()) {
    // Uncertainty mode: misclassified in-distribution samples are the positives.
    ScoredPopulations pops;
    for (std::size_t i = 0; i < in.size(); ++i) {
      (in_preds[i].label() == in.labels[i] ? pops.negative_scores : pops.positive_scores).push_back(in_entropy[i]);
    }
    if (pops.positive_scores.empty() || pops.negative_scores.empty()) {
      log << "uncertainty mode: no misclassified (or no correct) samples, metrics skipped\n";
    } else {
      report.rows.push_back(metric_row(cfg.eval_in, "misclassified", pops));
    }
  }
  if (!hists.out_dists.empty()) report.separation = td_od(hists, cfg.reference_out);

  write_metrics_csv(report.rows, cfg.out_dir / "metrics.csv");
  open_out(cfg.out_dir / "metrics.json") << metrics_json(report, cfg);
  std::ofstream hist = open_out(cfg.out_dir / "histograms.csv");
  hist << "bin_left,bin_right,count,dataset\n";
  for (const auto& [name, values] : report.entropies) {
    for (const HistogramBin& b : entropy_histogram(values, cfg.histogram_bins)) {
      hist << format_double(b.left) << "," << format_double(b.right) << "," << b.count << "," << name << "\n";
    }
  }
  for (const MetricRow& r : report.rows) {
    log << r.d_in << " vs " << r.d_out << ": auroc " << format_double(r.auroc) << " aupr " << format_double(r.aupr)
        << " fpr95 " << format_double(r.fpr95) << "\n";
  }
  if (report.separation) {
    log << "TD " << format_double(report.separation->td) << " OD " << format_double(report.separation->od) << "\n";
  }
  return report;
}

void cmd_decide(const RunConfig& cfg, const fs::path& ae_path, const fs::path& clf_path, std::ostream& log) {
  cfg.validate();
  if (!cfg.threshold) throw ValidationError("decide needs a threshold (--threshold or inference.threshold)");
  require_file(ae_path, "autoencoder checkpoint");
  require_file(clf_path, "classifier checkpoint");
  const Autoencoder ae = load_autoencoder(ae_path);
  const LatentClassifier clf = load_classifier(clf_path);
  write_resolved(cfg);

  std::ofstream out = open_out(cfg.out_dir / "decisions.csv");
  out << "dataset,sample_id,true_label,label,entropy,threshold,outcome\n";
  std::vector<std::string> names{cfg.eval_in};
  names.insert(names.end(), cfg.eval_out.begin(), cfg.eval_out.end());
  for (const std::string& name : names) {
    const ImageDataset data = load_dataset(cfg, name);
    if (data.empty()) continue;
    check_model_pair(ae, clf, data);
    const auto preds = mca_predict_dataset(ae, clf, data, mca_options(cfg, name));
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const Decision d = decide(preds[i], *cfg.threshold);
      accepted += d.accepted ? 1 : 0;
      out << name << "," << i << "," << data.labels[i] << "," << d.label << "," << format_double(d.entropy) << ","
          << format_double(d.threshold) << "," << (d.accepted ? "accepted" : "rejected") << "\n";
    }
    log << name << ": accepted " << accepted << "/" << preds.size() << "\n";
  }
}

}  // namespace mcaae
