#pragma once

// Denoising autoencoder on top of nncore. Dropout is active in every hidden
// layer of the encoder and decoder; the latent code (encoder output) and the
// reconstruction (decoder output) are never masked.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mcaae/augment.hpp"
#include "mcaae/data.hpp"
#include "mcaae/nncore.hpp"

namespace mcaae {

struct Architecture {
  std::size_t input_dim = 64 * 64;
  std::vector<std::size_t> hidden{256, 64};  // encoder widths; decoder mirrors them
  std::size_t latent_dim = 10;
};

class Autoencoder {
 public:
  Autoencoder(Network encoder, Network decoder);

  /// ReLU hidden layers, identity latent layer, sigmoid output.
  static Autoencoder make(const Architecture& arch, std::uint64_t seed);

  const Network& encoder() const noexcept { return encoder_; }
  const Network& decoder() const noexcept { return decoder_; }
  Network& encoder() noexcept { return encoder_; }
  Network& decoder() noexcept { return decoder_; }
  std::size_t latent_dim() const { return encoder_.output_dim(); }
  std::size_t input_dim() const { return encoder_.input_dim(); }

  friend bool operator==(const Autoencoder&, const Autoencoder&) = default;

 private:
  Network encoder_;
  Network decoder_;
};

/// The frozen masks of one sampled map f_j = d_j o e_j.
struct AutoencoderMask {
  DropoutMask encoder;
  DropoutMask decoder;

  std::uint64_t id() const noexcept;
  double keep_prob() const noexcept { return encoder.keep_prob(); }
};

AutoencoderMask sample_autoencoder_mask(const Autoencoder& ae, double keep_prob, Rng& rng);

/// Per-column masks for batched evaluation.
struct AutoencoderBatchMask {
  BatchMask encoder;
  BatchMask decoder;

  static AutoencoderBatchMask from_masks(const Autoencoder& ae, std::span<const AutoencoderMask* const> masks);
  static AutoencoderBatchMask sample(const Autoencoder& ae, double keep_prob, std::size_t batch, Rng& rng);
  std::uint64_t column_id(std::size_t column, double keep_prob) const;
};

Vector encode(const Autoencoder& ae, const Vector& x, const AutoencoderMask* mask = nullptr);
Vector decode(const Autoencoder& ae, const Vector& z, const AutoencoderMask* mask = nullptr);
/// decode(encode(x)).
Vector reconstruct(const Autoencoder& ae, const Vector& x, const AutoencoderMask* mask = nullptr);

/// Tensor forms: encode accepts any tensor with input_dim elements and returns
/// a rank-1 latent; decode returns a rank-1 tensor of input_dim elements.
Tensor encode(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask = nullptr);
Tensor decode(const Autoencoder& ae, const Tensor& z, const AutoencoderMask* mask = nullptr);

Matrix encode_batch(const Autoencoder& ae, const Matrix& x, const AutoencoderBatchMask* mask = nullptr);
Matrix decode_batch(const Autoencoder& ae, const Matrix& z, const AutoencoderBatchMask* mask = nullptr);

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double keep_prob = 0.67;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  Autoencoder model;
  std::vector<double> loss_history;  // mean training loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Denoising training: loss = 1 - ssim(f(augment(x)), x), with a fresh dropout
/// mask per sample per step and Adam on both networks. Throws TrainingError
/// naming the epoch when the loss or a gradient becomes non-finite.
TrainResult train(Autoencoder ae, const ImageDataset& data, const TrainConfig& cfg, const AugmentationConfig& aug,
                  const EpochCallback& on_epoch = {});

/// 1 - ssim(reconstruct(corrupted), clean) for one image.
double reconstruction_loss(const Autoencoder& ae, const Tensor& corrupted, const Tensor& clean,
                           const AutoencoderMask* mask = nullptr);

/// Encoder record followed by decoder record.
void save_autoencoder(const Autoencoder& ae, const std::filesystem::path& path);
Autoencoder load_autoencoder(const std::filesystem::path& path);

}  // namespace mcaae
