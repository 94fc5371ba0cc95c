#pragma once

#include <cstddef>
#include <span>

#include "mcaae/tensor.hpp"

namespace mcaae {

/// Structural similarity over non-overlapping square windows with uniform
/// weights. Edge windows are truncated when the image size is not a multiple
/// of the window. The result is the mean of the per-window SSIM values.
struct SsimParams {
  std::size_t window = 8;
  double c1 = 0.01 * 0.01;  // (K1 * L)^2 with dynamic range L = 1
  double c2 = 0.03 * 0.03;
};

double ssim(std::span<const double> a, std::span<const double> b, std::size_t height, std::size_t width,
            const SsimParams& params = {});

/// Rank-2 tensors of equal shape.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

/// SSIM plus its gradient with respect to `a`, written into `grad_a`.
double ssim_with_gradient(std::span<const double> a, std::span<const double> b, std::size_t height,
                          std::size_t width, std::span<double> grad_a, const SsimParams& params = {});

}  // namespace mcaae
