#pragma once

#include <span>
#include <utility>

#include "mcaae/nncore.hpp"

namespace mcaae {

/// Sampling ranges for the denoising corruption. Each call draws one value
/// uniformly from every range.
struct AugmentationConfig {
  std::pair<double, double> blur_sigma{0.0, 1.5};      // pixels
  std::pair<double, double> noise_std{0.0, 0.1};       // intensity units
  std::pair<double, double> brightness_delta{-0.1, 0.1};
  std::pair<double, double> contrast_factor{0.9, 1.1};

  /// All ranges collapsed to the identity transform.
  static AugmentationConfig identity();
  void validate() const;
};

/// Gaussian blur, contrast scaling about the image mean, brightness shift and
/// additive Gaussian noise, applied in that order, then clamped to [0, 1].
/// `image` is row-major height x width.
void augment_into(std::span<const double> image, std::size_t height, std::size_t width,
                  const AugmentationConfig& cfg, Rng& rng, std::span<double> out);

Tensor augment(const Tensor& image, const AugmentationConfig& cfg, Rng& rng);

/// Separable Gaussian blur with replicated borders; sigma <= 0 copies the input.
void gaussian_blur(std::span<const double> image, std::size_t height, std::size_t width, double sigma,
                   std::span<double> out);

}  // namespace mcaae
