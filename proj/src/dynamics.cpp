#include "mcaae/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "mcaae/error.hpp"

namespace mcaae {

VectorMap autoencoder_map(const Autoencoder& ae, const AutoencoderMask* mask) {
  std::optional<AutoencoderMask> frozen;
  if (mask) frozen = *mask;
  return [&ae, frozen](const Vector& x) { return reconstruct(ae, x, frozen ? &*frozen : nullptr); };
}

Orbit iterate(const VectorMap& f, const Tensor& x, std::size_t k, std::uint64_t mask_id) {
  Orbit orbit;
  orbit.mask_id = mask_id;
  orbit.iterates.push_back(x);
  Vector cur = x.flat();
  for (std::size_t i = 0; i < k; ++i) {
    Vector next = f(cur);
    if (next.size() != cur.size()) throw DimensionError("map changed the state dimension");
    orbit.residuals.push_back((next - cur).norm());
    orbit.iterates.emplace_back(x.shape(), std::vector<double>(next.data(), next.data() + next.size()));
    cur = std::move(next);
  }
  return orbit;
}

Orbit iterate(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask, std::size_t k) {
  if (x.size() != ae.input_dim()) throw DimensionError("orbit start does not match the autoencoder input width");
  return iterate(autoencoder_map(ae, mask), x, k, mask ? mask->id() : 0);
}

FixedPointReport fixed_point_residual(const VectorMap& f, const Tensor& x, double epsilon) {
  const Vector v = x.flat();
  const Vector fx = f(v);
  if (fx.size() != v.size()) throw DimensionError("map changed the state dimension");
  FixedPointReport r;
  r.residual = (fx - v).norm();
  r.epsilon = epsilon;
  r.is_fixed = r.residual <= epsilon;
  return r;
}

FixedPointReport fixed_point_residual(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask,
                                      double epsilon) {
  if (x.size() != ae.input_dim()) throw DimensionError("point does not match the autoencoder input width");
  return fixed_point_residual(autoencoder_map(ae, mask), x, epsilon);
}

SpectralReport jacobian_spectral_radius(const VectorMap& f, const Vector& x, const PowerIterationOptions& opts) {
  if (opts.step <= 0) throw ValidationError("power iteration step must be positive");
  Rng rng = substream(opts.seed, {0x6a09e667ULL});
  std::normal_distribution<double> gauss;
  auto random_direction = [&] {
    Vector v(x.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gauss(rng);
    return Vector(v / v.norm());
  };

  SpectralReport report;
  Vector v = random_direction();
  int restarts = 0;
  double previous = -1;
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    const Vector jv = (f(x + opts.step * v) - f(x - opts.step * v)) / (2.0 * opts.step);
    if (jv.size() != x.size()) throw DimensionError("map changed the state dimension");
    const double estimate = jv.norm();
    report.iterations_used = it + 1;
    if (!(estimate > 0.0) || !std::isfinite(estimate)) {
      if (restarts == 3) {
        report.radius_estimate = 0;
        report.converged = false;
        return report;
      }
      ++restarts;
      v = random_direction();
      previous = -1;
      continue;
    }
    report.radius_estimate = estimate;
    v = jv / estimate;
    if (previous > 0 && std::abs(estimate - previous) < opts.tol * estimate) {
      report.converged = true;
      return report;
    }
    previous = estimate;
  }
  return report;
}

SpectralReport jacobian_spectral_radius(const Autoencoder& ae, const Tensor& x, const AutoencoderMask* mask,
                                        const PowerIterationOptions& opts) {
  if (x.size() != ae.input_dim()) throw DimensionError("point does not match the autoencoder input width");
  return jacobian_spectral_radius(autoencoder_map(ae, mask), Vector(x.flat()), opts);
}

BasinReport basin_probe(const VectorMap& f, const Tensor& x_star, double radius, std::size_t trials, std::size_t k,
                        std::uint64_t seed) {
  if (trials == 0) throw ValidationError("basin probe needs at least one trial");
  if (!(radius >= 0)) throw ValidationError("basin radius must be >= 0");
  const Vector anchor = x_star.flat();
  BasinReport report;
  report.trials = trials;
  report.delta = std::max(3.0 * fixed_point_residual(f, x_star).residual, 1e-3);
  const auto dim = static_cast<double>(anchor.size());

  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = substream(seed, {t});
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector dir(anchor.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = gauss(rng);
    const double r = radius * std::pow(unit(rng), 1.0 / dim);
    Vector cur = (anchor + r * dir / dir.norm()).cwiseMax(0.0).cwiseMin(1.0);
    for (std::size_t i = 0; i < k; ++i) cur = f(cur);
    if ((cur - anchor).norm() <= report.delta) ++hits;
  }
  report.fraction = static_cast<double>(hits) / static_cast<double>(trials);
  return report;
}

BasinReport basin_probe(const Autoencoder& ae, const Tensor& x_star, const AutoencoderMask* mask, double radius,
                        std::size_t trials, std::size_t k, std::uint64_t seed) {
  if (x_star.size() != ae.input_dim()) throw DimensionError("anchor does not match the autoencoder input width");
  return basin_probe(autoencoder_map(ae, mask), x_star, radius, trials, k, seed);
}

}  // namespace mcaae
