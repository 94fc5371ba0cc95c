#pragma once

// The autoencoder with a frozen dropout mask seen as a discrete dynamical
// system x -> f(x) = d(e(x)): orbits, fixed-point residuals, a Jacobian
// spectral-radius estimate, and basin-of-attraction probes.

#include <cstdint>
#include <functional>
#include <vector>

#include "mcaae/autoencoder.hpp"

namespace mcaae {

using VectorMap = std::function<Vector(const Vector&)>;

/// f(x) = decode(encode(x)) under a copy of `mask` (null means no dropout).
/// The returned map keeps a reference to `ae`.
VectorMap autoencoder_map(const Autoencoder& ae, const AutoencoderMask* mask);

/// The iterates x, f(x), ..., f^k(x) and the step lengths between them.
struct Orbit {
  std::vector<Tensor> iterates;
  std::vector<double> residuals;  // residuals[i] = ||iterates[i+1] - iterates[i]||_2
  std::uint64_t mask_id = 0;      // 0 when iterated without dropout

  std::size_t steps() const noexcept { return residuals.size(); }
};

/// `mask_id` only labels the result; the map already carries its mask.
Orbit iterate(const VectorMap& f, const Tensor& x, std::size_t k, std::uint64_t mask_id = 0);
Orbit iterate(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask, std::size_t k);

inline constexpr double kDefaultFixedPointEpsilon = 0.05;

struct FixedPointReport {
  double residual = 0;
  double epsilon = kDefaultFixedPointEpsilon;
  bool is_fixed = false;  // residual <= epsilon
};

FixedPointReport fixed_point_residual(const VectorMap& f, const Tensor& x,
                                      double epsilon = kDefaultFixedPointEpsilon);
FixedPointReport fixed_point_residual(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask,
                                      double epsilon = kDefaultFixedPointEpsilon);

struct PowerIterationOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;   // relative change of the estimate between iterations
  double step = 1e-4;  // central-difference step h
  std::uint64_t seed = 0;
};

struct SpectralReport {
  double radius_estimate = 0;
  std::size_t iterations_used = 0;
  bool converged = false;
};

/// Power iteration on the Jacobian of f at x using central-difference
/// Jacobian-vector products (f(x + h v) - f(x - h v)) / 2h. A vanishing
/// product restarts from a fresh random direction, at most three times.
SpectralReport jacobian_spectral_radius(const VectorMap& f, const Vector& x, const PowerIterationOptions& opts = {});
SpectralReport jacobian_spectral_radius(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask,
                                        const PowerIterationOptions& opts = {});

struct BasinReport {
  double fraction = 0;   // share of perturbed starts that end within delta of x_star
  double delta = 0;      // max(3 * ||f(x_star) - x_star||, 1e-3)
  std::size_t trials = 0;
};

/// Perturbs x_star uniformly inside an L2 ball of `radius` (clamped to [0, 1]),
/// iterates each start k times and counts endpoints within delta of x_star.
/// Trial t draws from its own generator seeded with (seed, t).
BasinReport basin_probe(const VectorMap& f, const Tensor& x_star, double radius, std::size_t trials, std::size_t k,
                        std::uint64_t seed);
BasinReport basin_probe(const Autoencoder& ae, const Tensor& x_star, const AutoencoderMask* mask, double radius,
                        std::size_t trials, std::size_t k, std::uint64_t seed);

}  // namespace mcaae
