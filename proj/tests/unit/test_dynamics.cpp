#include "doctest.h"

#include <cmath>

#include "mcaae/autoencoder.hpp"
#include "mcaae/dynamics.hpp"
#include "mcaae/error.hpp"

using namespace mcaae;

namespace {

// Autoencoder whose map is exactly the identity on [0, 1]^d with identity
// activations throughout (decoder output layer swapped to identity).
Autoencoder identity_autoencoder(std::size_t d) {
  DenseLayer enc{Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)),
                 Vector::Zero(static_cast<Eigen::Index>(d)), Activation::identity};
  DenseLayer dec = enc;
  return Autoencoder(Network({enc}), Network({dec}));
}

}  // namespace

TEST_CASE("residual of the identity map is zero") {
  const Autoencoder ae = identity_autoencoder(16);
  const Tensor x = Tensor::image(4, 4, std::vector<double>(16, 0.3));
  const auto r = fixed_point_residual(ae, x, nullptr);
  CHECK(r.residual == 0.0);
  CHECK(r.is_fixed);
}

TEST_CASE("residual is the euclidean norm of f(x) - x") {
  VectorMap f = [](const Vector& v) { return Vector(v.array() + 0.1); };
  const Tensor x = Tensor::from_vector(Vector::Zero(4));
  CHECK(fixed_point_residual(f, x).residual == doctest::Approx(0.2).epsilon(1e-14));
  CHECK_FALSE(fixed_point_residual(f, x, 0.1).is_fixed);
  CHECK(fixed_point_residual(f, x, 0.25).is_fixed);
}

TEST_CASE("orbit of a contraction") {
  VectorMap half = [](const Vector& v) { return Vector(0.5 * v); };
  const Orbit o = iterate(half, Tensor::from_vector(Vector::Constant(2, 1.0)), 3);
  REQUIRE(o.iterates.size() == 4);
  REQUIRE(o.steps() == 3);
  CHECK(o.iterates[3][0] == 0.125);
  CHECK(o.residuals[0] == doctest::Approx(std::sqrt(2.0) * 0.5));
  CHECK(o.residuals[2] == doctest::Approx(std::sqrt(2.0) * 0.125));
}

TEST_CASE("power iteration recovers known spectral radii") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 0.9;
  a(1, 1) = 0.2;
  VectorMap lin = [a](const Vector& v) { return Vector(a * v); };
  const auto r = jacobian_spectral_radius(lin, Vector::Constant(2, 0.3), {200, 1e-12, 1e-4, 1});
  CHECK(r.radius_estimate == doctest::Approx(0.9).epsilon(1e-3 / 0.9));

  VectorMap half = [](const Vector& v) { return Vector(0.5 * v); };
  CHECK(jacobian_spectral_radius(half, Vector::Constant(5, 0.1)).radius_estimate ==
        doctest::Approx(0.5).epsilon(1e-3));

  // Nonlinear map: f(x) = x^2 / 2 at x = (1, 0.5) has Jacobian diag(1, 0.5).
  VectorMap sq = [](const Vector& v) { return Vector(0.5 * v.array().square()); };
  Vector x(2);
  x << 1.0, 0.5;
  CHECK(jacobian_spectral_radius(sq, x, {300, 1e-12, 1e-4, 2}).radius_estimate == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("power iteration restarts after a vanishing product") {
  VectorMap zero = [](const Vector& v) { return Vector(Vector::Zero(v.size())); };
  const auto r = jacobian_spectral_radius(zero, Vector::Constant(3, 0.5));
  CHECK(r.radius_estimate == 0.0);
}

TEST_CASE("basin probe geometric oracle") {
  // Identity map in 2-D: every start stays put, residual 0 so delta = 1e-3.
  // Starts uniform in a disc of radius 2e-3 land within delta with
  // probability (1e-3 / 2e-3)^2 = 0.25.
  VectorMap id = [](const Vector& v) { return v; };
  const Tensor x = Tensor::from_vector(Vector::Constant(2, 0.5));
  const auto b = basin_probe(id, x, 2e-3, 20000, 3, 7);
  CHECK(b.delta == 1e-3);
  CHECK(b.trials == 20000);
  CHECK(b.fraction == doctest::Approx(0.25).epsilon(0.04));
  CHECK(basin_probe(id, x, 2e-3, 500, 3, 7).fraction == basin_probe(id, x, 2e-3, 500, 3, 7).fraction);
}

TEST_CASE("contraction attracts the whole probed ball") {
  const Vector centre = Vector::Constant(3, 0.4);
  VectorMap pull = [centre](const Vector& v) { return Vector(centre + 0.1 * (v - centre)); };
  const auto b = basin_probe(pull, Tensor::from_vector(centre), 0.3, 50, 5, 1);
  CHECK(b.fraction == 1.0);
}

TEST_CASE("autoencoder orbit carries the mask id") {
  Autoencoder ae = Autoencoder::make({16, {8}, 3}, 1);
  Rng rng(2);
  const AutoencoderMask m = sample_autoencoder_mask(ae, 0.67, rng);
  const Tensor x = Tensor::image(4, 4, std::vector<double>(16, 0.5));
  const Orbit o = iterate(ae, x, &m, 4);
  CHECK(o.mask_id == m.id());
  CHECK(iterate(ae, x, nullptr, 4).mask_id == 0);
  // Same frozen mask, same orbit.
  CHECK(iterate(ae, x, &m, 4).iterates == o.iterates);
}
