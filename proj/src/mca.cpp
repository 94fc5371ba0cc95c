#include "mcaae/mca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mcaae/checkpoint.hpp"
#include "mcaae/error.hpp"

namespace mcaae {

namespace {

constexpr std::size_t kSamplesPerChunk = 16;

std::size_t argmax(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace

LatentClassifier::LatentClassifier(Network net) : net_(std::move(net)) {
  if (net_.output_dim() < 2) throw ValidationError("classifier needs at least two classes");
}

LatentClassifier LatentClassifier::make(std::size_t latent_dim, std::size_t classes, std::uint64_t seed) {
  if (classes < 2) throw ValidationError("classifier needs at least two classes");
  Rng rng(seed);
  return LatentClassifier(
      Network::glorot({latent_dim, latent_dim, classes}, {Activation::relu, Activation::identity}, rng));
}

Matrix LatentClassifier::probabilities(const Matrix& latents) const {
  return softmax_columns(evaluate_batch(net_, latents, nullptr));
}

void ClassifierConfig::validate() const {
  if (batch_size == 0) throw ValidationError("classifier batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw ValidationError("classifier learning_rate must be >= 0");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
}

Matrix recursive_latent(const Autoencoder& ae, const Matrix& x, std::size_t n_recursions,
                        const AutoencoderBatchMask* mask) {
  Matrix z = encode_batch(ae, x, mask);
  for (std::size_t k = 1; k < n_recursions; ++k) z = encode_batch(ae, decode_batch(ae, z, mask), mask);
  return z;
}

LatentClassifier train_classifier(const Autoencoder& ae, const ImageDataset& data, std::size_t n_recursions,
                                  const ClassifierConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ValidationError("classifier training set is empty");
  data.validate();
  if (data.class_count() < 2) throw ValidationError("classifier training needs at least two classes");
  if (data.pixels() != ae.input_dim()) throw DimensionError("dataset does not match the autoencoder input width");

  LatentClassifier clf = LatentClassifier::make(ae.latent_dim(), data.class_count(), cfg.seed);
  Rng rng(cfg.seed ^ 0xC2B2AE3D27D4EB4FULL);
  AdamState state = AdamState::for_network(clf.network(), cfg.learning_rate);
  const Matrix inputs = data.columns();
  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const AutoencoderBatchMask ae_mask = AutoencoderBatchMask::sample(ae, cfg.keep_prob, data.size(), rng);
    const Matrix latents = recursive_latent(ae, inputs, n_recursions, &ae_mask);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto batch = static_cast<Eigen::Index>(stop - start);
      Matrix z(latents.rows(), batch);
      for (Eigen::Index c = 0; c < batch; ++c) z.col(c) = latents.col(static_cast<Eigen::Index>(order[start + c]));
      const BatchMask mask = BatchMask::sample(clf.network(), cfg.keep_prob, static_cast<std::size_t>(batch), rng);
      const ActivationTrace trace = forward_batch(clf.network(), z, &mask);
      Matrix grad = softmax_columns(trace.output());
      for (Eigen::Index c = 0; c < batch; ++c) {
        const auto label = static_cast<Eigen::Index>(data.labels[order[start + c]]);
        epoch_loss -= std::log(std::max(grad(label, c), 1e-300));
        grad(label, c) -= 1.0;
      }
      grad /= static_cast<double>(batch);
      if (!std::isfinite(epoch_loss)) {
        throw TrainingError("classifier training diverged at epoch " + std::to_string(epoch));
      }
      const ParamGradients g = backward_batch(clf.network(), trace, grad, &mask);
      adam_step(clf.network(), g, state);
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(n));
  }
  return clf;
}

double classifier_accuracy(const Autoencoder& ae, const LatentClassifier& clf, const ImageDataset& data,
                           std::size_t n_recursions) {
  if (data.empty()) return 0.0;
  const Matrix probs = clf.probabilities(recursive_latent(ae, data.columns(), n_recursions));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (argmax(probs.col(static_cast<Eigen::Index>(i))) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::size_t PredictiveDistribution::label() const { return argmax(mean_p); }

std::vector<std::size_t> PredictiveDistribution::run_labels() const {
  std::vector<std::size_t> out;
  for (const Vector& y : per_run) out.push_back(argmax(y));
  return out;
}

std::vector<PredictiveDistribution> mca_predict_batch(const Autoencoder& ae, const LatentClassifier& clf,
                                                      const Matrix& x, std::span<const std::size_t> sample_ids,
                                                      const McaOptions& opts) {
  if (opts.m_inferences == 0) throw ValidationError("M must be at least 1");
  if (!(opts.keep_prob > 0.0 && opts.keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
  if (static_cast<std::size_t>(x.cols()) != sample_ids.size()) throw DimensionError("one sample id per column");
  if (static_cast<std::size_t>(x.rows()) != ae.input_dim()) throw DimensionError("input width mismatch");
  if (clf.latent_dim() != ae.latent_dim()) throw DimensionError("classifier does not match the latent width");

  const std::size_t m = opts.m_inferences;
  const std::size_t n_rec = opts.n_recursions;
  std::vector<PredictiveDistribution> out(sample_ids.size());

  for (std::size_t s0 = 0; s0 < sample_ids.size(); s0 += kSamplesPerChunk) {
    const std::size_t s1 = std::min(sample_ids.size(), s0 + kSamplesPerChunk);
    const auto cols = static_cast<Eigen::Index>((s1 - s0) * m);
    Matrix xs(x.rows(), cols);
    std::vector<AutoencoderMask> masks;
    masks.reserve(static_cast<std::size_t>(cols));
    for (std::size_t s = s0; s < s1; ++s) {
      for (std::size_t l = 0; l < m; ++l) {
        Rng rng = substream(opts.seed, {sample_ids[s], l});
        masks.push_back(sample_autoencoder_mask(ae, opts.keep_prob, rng));
        xs.col(static_cast<Eigen::Index>((s - s0) * m + l)) = x.col(static_cast<Eigen::Index>(s));
      }
    }
    std::vector<const AutoencoderMask*> ptrs;
    for (const auto& mk : masks) ptrs.push_back(&mk);
    const AutoencoderBatchMask bm = AutoencoderBatchMask::from_masks(ae, ptrs);

    auto observe = [&](std::size_t step) {
      if (!opts.observer) return;
      for (std::size_t s = s0; s < s1; ++s) {
        for (std::size_t l = 0; l < m; ++l) {
          opts.observer(sample_ids[s], l, step, bm.column_id((s - s0) * m + l, opts.keep_prob));
        }
      }
    };

    // Recursion k encodes the current reconstruction, then decodes it; the
    // classifier reads the code of the last recursion.
    Matrix cur = xs;
    Matrix z;
    if (n_rec == 0) {
      observe(0);
      z = encode_batch(ae, cur, &bm);
    }
    for (std::size_t k = 1; k <= n_rec; ++k) {
      observe(k);
      z = encode_batch(ae, cur, &bm);
      if (k < n_rec) cur = decode_batch(ae, z, &bm);
    }
    const Matrix probs = clf.probabilities(z);

    for (std::size_t s = s0; s < s1; ++s) {
      PredictiveDistribution& pd = out[s];
      pd.mean_p = Vector::Zero(probs.rows());
      for (std::size_t l = 0; l < m; ++l) {
        pd.per_run.emplace_back(probs.col(static_cast<Eigen::Index>((s - s0) * m + l)));
        pd.mean_p += pd.per_run.back();
      }
      pd.mean_p /= static_cast<double>(m);
      pd.entropy = normalized_entropy(pd.mean_p);
    }
  }
  return out;
}

PredictiveDistribution mca_predict(const Autoencoder& ae, const LatentClassifier& clf, const Tensor& x,
                                   const McaOptions& opts, std::size_t sample_id) {
  Matrix col(static_cast<Eigen::Index>(x.size()), 1);
  col.col(0) = x.flat();
  const std::size_t ids[] = {sample_id};
  return mca_predict_batch(ae, clf, col, ids, opts).front();
}

std::vector<PredictiveDistribution> mca_predict_dataset(const Autoencoder& ae, const LatentClassifier& clf,
                                                        const ImageDataset& data, const McaOptions& opts) {
  if (data.empty()) return {};
  std::vector<std::size_t> ids(data.size());
  std::iota(ids.begin(), ids.end(), 0);
  return mca_predict_batch(ae, clf, data.columns(), ids, opts);
}

double normalized_entropy(std::span<const double> p) {
  if (p.size() < 2) throw ValidationError("normalized entropy needs at least two classes");
  double sum = 0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("probabilities must be finite and non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("probabilities do not sum to 1");
  // summing C equal terms can miss log C by an ulp
  if (std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); })) return 1.0;
  double h = 0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::clamp(h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

double normalized_entropy(const Vector& p) {
  return normalized_entropy(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

Decision decide(const PredictiveDistribution& pd, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold must lie in [0, 1]");
  Decision d;
  d.entropy = pd.entropy;
  d.threshold = threshold;
  d.label = pd.label();
  d.accepted = pd.entropy <= threshold;
  return d;
}

void save_classifier(const LatentClassifier& clf, const std::filesystem::path& path) {
  save_networks(path, {clf.network()});
}

LatentClassifier load_classifier(const std::filesystem::path& path) {
  return LatentClassifier(std::move(load_networks(path, 1).front()));
}

}  // namespace mcaae
