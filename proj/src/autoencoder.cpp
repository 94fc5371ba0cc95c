#include "mcaae/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mcaae/checkpoint.hpp"
#include "mcaae/error.hpp"
#include "mcaae/ssim.hpp"

namespace mcaae {

Autoencoder::Autoencoder(Network encoder, Network decoder)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  if (encoder_.output_dim() != decoder_.input_dim()) {
    throw DimensionError("encoder output width " + std::to_string(encoder_.output_dim()) +
                         " differs from decoder input width " + std::to_string(decoder_.input_dim()));
  }
  if (decoder_.output_dim() != encoder_.input_dim()) {
    throw DimensionError("decoder output width differs from encoder input width");
  }
}

Autoencoder Autoencoder::make(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.latent_dim == 0) throw ValidationError("architecture widths must be positive");
  for (std::size_t h : arch.hidden) {
    if (h == 0) throw ValidationError("architecture widths must be positive");
  }
  Rng rng(seed);
  std::vector<std::size_t> enc_widths{arch.input_dim};
  enc_widths.insert(enc_widths.end(), arch.hidden.begin(), arch.hidden.end());
  enc_widths.push_back(arch.latent_dim);
  std::vector<Activation> enc_act(arch.hidden.size(), Activation::relu);
  enc_act.push_back(Activation::identity);

  std::vector<std::size_t> dec_widths(enc_widths.rbegin(), enc_widths.rend());
  std::vector<Activation> dec_act(arch.hidden.size(), Activation::relu);
  dec_act.push_back(Activation::sigmoid);

  Network enc = Network::glorot(enc_widths, enc_act, rng);
  Network dec = Network::glorot(dec_widths, dec_act, rng);
  return Autoencoder(std::move(enc), std::move(dec));
}

std::uint64_t AutoencoderMask::id() const noexcept {
  // Order-dependent combination of the two content hashes.
  return encoder.id() * 0x9E3779B97F4A7C15ULL ^ decoder.id();
}

AutoencoderMask sample_autoencoder_mask(const Autoencoder& ae, double keep_prob, Rng& rng) {
  DropoutMask enc = sample_dropout_mask(ae.encoder(), keep_prob, rng);
  DropoutMask dec = sample_dropout_mask(ae.decoder(), keep_prob, rng);
  return {std::move(enc), std::move(dec)};
}

AutoencoderBatchMask AutoencoderBatchMask::from_masks(const Autoencoder& ae,
                                                      std::span<const AutoencoderMask* const> masks) {
  std::vector<const DropoutMask*> enc, dec;
  for (const AutoencoderMask* m : masks) {
    enc.push_back(&m->encoder);
    dec.push_back(&m->decoder);
  }
  return {BatchMask::from_masks(ae.encoder(), enc), BatchMask::from_masks(ae.decoder(), dec)};
}

AutoencoderBatchMask AutoencoderBatchMask::sample(const Autoencoder& ae, double keep_prob, std::size_t batch,
                                                  Rng& rng) {
  std::vector<AutoencoderMask> masks;
  masks.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) masks.push_back(sample_autoencoder_mask(ae, keep_prob, rng));
  std::vector<const AutoencoderMask*> ptrs;
  for (const auto& m : masks) ptrs.push_back(&m);
  return from_masks(ae, ptrs);
}

std::uint64_t AutoencoderBatchMask::column_id(std::size_t column, double keep_prob) const {
  return encoder.column_id(column, keep_prob) * 0x9E3779B97F4A7C15ULL ^ decoder.column_id(column, keep_prob);
}

Vector encode(const Autoencoder& ae, const Vector& x, const AutoencoderMask* mask) {
  return evaluate(ae.encoder(), x, mask ? &mask->encoder : nullptr);
}

Vector decode(const Autoencoder& ae, const Vector& z, const AutoencoderMask* mask) {
  return evaluate(ae.decoder(), z, mask ? &mask->decoder : nullptr);
}

Vector reconstruct(const Autoencoder& ae, const Vector& x, const AutoencoderMask* mask) {
  return decode(ae, encode(ae, x, mask), mask);
}

Tensor encode(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask) {
  return Tensor::from_vector(encode(ae, Vector(x.flat()), mask));
}

Tensor decode(const Autoencoder& ae, const Tensor& z, const AutoencoderMask* mask) {
  return Tensor::from_vector(decode(ae, Vector(z.flat()), mask));
}

Matrix encode_batch(const Autoencoder& ae, const Matrix& x, const AutoencoderBatchMask* mask) {
  return evaluate_batch(ae.encoder(), x, mask ? &mask->encoder : nullptr);
}

Matrix decode_batch(const Autoencoder& ae, const Matrix& z, const AutoencoderBatchMask* mask) {
  return evaluate_batch(ae.decoder(), z, mask ? &mask->decoder : nullptr);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be >= 0");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
}

TrainResult train(Autoencoder ae, const ImageDataset& data, const TrainConfig& cfg, const AugmentationConfig& aug,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  aug.validate();
  if (data.empty()) throw ValidationError("training dataset is empty");
  data.validate();
  if (data.pixels() != ae.input_dim()) {
    throw DimensionError("dataset images have " + std::to_string(data.pixels()) + " pixels, autoencoder expects " +
                         std::to_string(ae.input_dim()));
  }

  const std::size_t h = data.height();
  const std::size_t w = data.width();
  const auto d = static_cast<Eigen::Index>(ae.input_dim());
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);
  AdamState enc_state = AdamState::for_network(ae.encoder(), cfg.learning_rate);
  AdamState dec_state = AdamState::for_network(ae.decoder(), cfg.learning_rate);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  history.reserve(cfg.epochs);
  std::vector<double> grad_buf(static_cast<std::size_t>(d));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto batch = static_cast<Eigen::Index>(stop - start);
      Matrix clean(d, batch), corrupted(d, batch);
      for (Eigen::Index c = 0; c < batch; ++c) {
        const Tensor& img = data.images[order[start + static_cast<std::size_t>(c)]];
        clean.col(c) = img.flat();
        augment_into(img.data(), h, w, aug, rng,
                     std::span<double>(corrupted.col(c).data(), static_cast<std::size_t>(d)));
      }
      const AutoencoderBatchMask mask =
          AutoencoderBatchMask::sample(ae, cfg.keep_prob, static_cast<std::size_t>(batch), rng);

      const ActivationTrace enc_trace = forward_batch(ae.encoder(), corrupted, &mask.encoder);
      if (!enc_trace.output().allFinite()) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": latent code is not finite");
      }
      const ActivationTrace dec_trace = forward_batch(ae.decoder(), enc_trace.output(), &mask.decoder);
      const Matrix& recon = dec_trace.output();

      Matrix grad(d, batch);
      double batch_loss = 0;
      for (Eigen::Index c = 0; c < batch; ++c) {
        const double s = ssim_with_gradient(
            std::span<const double>(recon.col(c).data(), static_cast<std::size_t>(d)),
            std::span<const double>(clean.col(c).data(), static_cast<std::size_t>(d)), h, w, grad_buf);
        batch_loss += 1.0 - s;
        for (Eigen::Index i = 0; i < d; ++i) grad(i, c) = -grad_buf[static_cast<std::size_t>(i)] / static_cast<double>(batch);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
      }
      epoch_loss += batch_loss;

      const ParamGradients dec_grad = backward_batch(ae.decoder(), dec_trace, grad, &mask.decoder);
      const ParamGradients enc_grad = backward_batch(ae.encoder(), enc_trace, dec_grad.input, &mask.encoder);
      try {
        adam_step(ae.decoder(), dec_grad, dec_state);
        adam_step(ae.encoder(), enc_grad, enc_state);
      } catch (const TrainingError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(data.size());
    history.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return {std::move(ae), std::move(history)};
}

double reconstruction_loss(const Autoencoder& ae, const Tensor& corrupted, const Tensor& clean,
                           const AutoencoderMask* mask) {
  if (clean.rank() != 2) throw DimensionError("reconstruction_loss expects rank-2 images");
  const Vector r = reconstruct(ae, Vector(corrupted.flat()), mask);
  if (static_cast<std::size_t>(r.size()) != clean.size()) throw DimensionError("reconstruction size mismatch");
  return 1.0 - ssim(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), clean.data(),
                    clean.shape()[0], clean.shape()[1]);
}

void save_autoencoder(const Autoencoder& ae, const std::filesystem::path& path) {
  save_networks(path, {ae.encoder(), ae.decoder()});
}

Autoencoder load_autoencoder(const std::filesystem::path& path) {
  std::vector<Network> nets = load_networks(path, 2);
  return Autoencoder(std::move(nets[0]), std::move(nets[1]));
}

}  // namespace mcaae
