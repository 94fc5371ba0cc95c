#pragma once

// Monte-Carlo attractor inference. Each of M runs samples one autoencoder
// dropout mask, holds it fixed through N encode/decode recursions, and
// classifies the last latent code with a small MLP. The mean of the M class
// distributions and its normalised entropy drive accept/reject decisions.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mcaae/autoencoder.hpp"

namespace mcaae {

/// latent -> relu(latent) -> C logits; probabilities are the softmax of the logits.
class LatentClassifier {
 public:
  explicit LatentClassifier(Network net);
  static LatentClassifier make(std::size_t latent_dim, std::size_t classes, std::uint64_t seed);

  const Network& network() const noexcept { return net_; }
  Network& network() noexcept { return net_; }
  std::size_t latent_dim() const { return net_.input_dim(); }
  std::size_t class_count() const { return net_.output_dim(); }

  /// Class distributions (one column per latent column), evaluated without dropout.
  Matrix probabilities(const Matrix& latents) const;

 private:
  Network net_;
};

struct ClassifierConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double keep_prob = 0.67;  // for both the autoencoder masks and the classifier hidden layer
  std::uint64_t seed = 0;

  void validate() const;
};

/// Called once per (sample, run, recursion step) with the id of the mask that
/// was applied. N = 0 reports a single step 0.
using MaskObserver =
    std::function<void(std::size_t sample_id, std::size_t run, std::size_t step, std::uint64_t mask_id)>;

/// Latent codes after N recursions: z = e(f^(N-1)(x)) for N >= 1 and e(x) for
/// N = 0. One column per input column; `mask` may be null.
Matrix recursive_latent(const Autoencoder& ae, const Matrix& x, std::size_t n_recursions,
                        const AutoencoderBatchMask* mask = nullptr);

/// Cross-entropy training of a fresh classifier on latent codes taken after N
/// recursions with dropout active in the autoencoder (fresh mask per sample
/// per epoch). The autoencoder is only read.
LatentClassifier train_classifier(const Autoencoder& ae, const ImageDataset& data, std::size_t n_recursions,
                                  const ClassifierConfig& cfg, const EpochCallback& on_epoch = {});

/// Fraction of samples whose argmax class under the dropout-free pipeline matches the label.
double classifier_accuracy(const Autoencoder& ae, const LatentClassifier& clf, const ImageDataset& data,
                           std::size_t n_recursions);

struct PredictiveDistribution {
  std::vector<Vector> per_run;  // y_l, one class distribution per run
  Vector mean_p;
  double entropy = 0;

  std::size_t label() const;  // argmax of mean_p, smallest index on ties
  std::vector<std::size_t> run_labels() const;
};

struct McaOptions {
  std::size_t m_inferences = 20;
  std::size_t n_recursions = 2;
  double keep_prob = 0.67;
  std::uint64_t seed = 0;
  MaskObserver observer;
};

/// Run l of sample s draws its mask from substream(seed, {s, l}), so results do
/// not depend on batching. `x` holds one sample per column.
std::vector<PredictiveDistribution> mca_predict_batch(const Autoencoder& ae, const LatentClassifier& clf,
                                                      const Matrix& x, std::span<const std::size_t> sample_ids,
                                                      const McaOptions& opts);
PredictiveDistribution mca_predict(const Autoencoder& ae, const LatentClassifier& clf, const Tensor& x,
                                   const McaOptions& opts, std::size_t sample_id = 0);
/// Predictions for every sample of a dataset, sample id = dataset index.
std::vector<PredictiveDistribution> mca_predict_dataset(const Autoencoder& ae, const LatentClassifier& clf,
                                                        const ImageDataset& data, const McaOptions& opts);

/// -(1/log C) sum p_c log p_c with 0 log 0 = 0. Requires C >= 2, p_c >= 0 and
/// sum p = 1 within 1e-9.
double normalized_entropy(std::span<const double> p);
double normalized_entropy(const Vector& p);

struct Decision {
  bool accepted = false;
  std::size_t label = 0;  // argmax of mean_p; kept for diagnostics when rejected
  double entropy = 0;
  double threshold = 0;
};

/// Accept iff entropy <= threshold.
Decision decide(const PredictiveDistribution& pd, double threshold);

void save_classifier(const LatentClassifier& clf, const std::filesystem::path& path);
LatentClassifier load_classifier(const std::filesystem::path& path);

}  // namespace mcaae
