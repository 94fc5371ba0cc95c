#include "mcaae/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcaae/error.hpp"

namespace mcaae {

namespace {

double draw(const std::pair<double, double>& range, Rng& rng) {
  if (range.first == range.second) return range.first;
  return std::uniform_real_distribution<double>(range.first, range.second)(rng);
}

void check_range(const std::pair<double, double>& r, const char* name) {
  if (!(r.first <= r.second)) throw ValidationError(std::string("augmentation range ") + name + " is not ordered");
}

}  // namespace

AugmentationConfig AugmentationConfig::identity() { return {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}}; }

void AugmentationConfig::validate() const {
  check_range(blur_sigma, "blur_sigma");
  check_range(noise_std, "noise_std");
  check_range(brightness_delta, "brightness_delta");
  check_range(contrast_factor, "contrast_factor");
  if (blur_sigma.first < 0 || noise_std.first < 0) throw ValidationError("blur sigma and noise std must be >= 0");
}

void gaussian_blur(std::span<const double> image, std::size_t height, std::size_t width, double sigma,
                   std::span<double> out) {
  if (image.size() != height * width || out.size() != image.size()) throw DimensionError("blur: size mismatch");
  if (sigma <= 0.0) {
    std::copy(image.begin(), image.end(), out.begin());
    return;
  }
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const auto h = static_cast<int>(height);
  const auto w = static_cast<int>(width);
  std::vector<double> tmp(image.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * image[r * w + std::clamp(c + k, 0, w - 1)];
      tmp[r * w + c] = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[std::clamp(r + k, 0, h - 1) * w + c];
      out[r * w + c] = acc;
    }
  }
}

void augment_into(std::span<const double> image, std::size_t height, std::size_t width,
                  const AugmentationConfig& cfg, Rng& rng, std::span<double> out) {
  const double sigma = draw(cfg.blur_sigma, rng);
  const double noise = draw(cfg.noise_std, rng);
  const double delta = draw(cfg.brightness_delta, rng);
  const double factor = draw(cfg.contrast_factor, rng);

  gaussian_blur(image, height, width, sigma, out);
  if (factor != 1.0) {
    double mean = 0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(out.size());
    for (double& v : out) v = mean + factor * (v - mean);
  }
  if (delta != 0.0) {
    for (double& v : out) v += delta;
  }
  if (noise > 0.0) {
    std::normal_distribution<double> gauss(0.0, noise);
    for (double& v : out) v += gauss(rng);
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
}

Tensor augment(const Tensor& image, const AugmentationConfig& cfg, Rng& rng) {
  if (image.rank() != 2) throw DimensionError("augment expects a rank-2 image");
  Tensor out(image.shape());
  augment_into(image.data(), image.shape()[0], image.shape()[1], cfg, rng, out.data());
  return out;
}

}  // namespace mcaae
