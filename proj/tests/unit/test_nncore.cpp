#include "doctest.h"

#include <cmath>

#include "../support/gradcheck.hpp"
#include "mcaae/error.hpp"
#include "mcaae/nncore.hpp"

using namespace mcaae;

namespace {

Network tiny_net() {
  DenseLayer a{Matrix(2, 2), Vector(2), Activation::relu};
  a.weights << 1, -1, 0.5, 2;
  a.bias << 0.1, -0.2;
  DenseLayer b{Matrix(1, 2), Vector(1), Activation::identity};
  b.weights << 2, -3;
  b.bias << 0.5;
  return Network({a, b});
}

}  // namespace

TEST_CASE("forward pass of a hand-computed two-layer net") {
  Network net = tiny_net();
  Vector x(2);
  x << 1.0, 0.5;
  // h = relu([0.5 + 0.1, 0.5 + 1.0 - 0.2]) = [0.6, 1.3]; y = 1.2 - 3.9 + 0.5
  CHECK(evaluate(net, x)(0) == doctest::Approx(-2.2).epsilon(1e-12));
}

TEST_CASE("layers must chain") {
  DenseLayer a{Matrix::Zero(3, 2), Vector::Zero(3), Activation::relu};
  DenseLayer b{Matrix::Zero(1, 4), Vector::Zero(1), Activation::identity};
  CHECK_THROWS_AS(Network({a, b}), DimensionError);
  CHECK_THROWS_AS(evaluate(tiny_net(), Vector::Zero(3)), DimensionError);
}

TEST_CASE("backward matches central differences on random nets") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = testing::check_random_network(seed);
    INFO("seed " << seed);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("dropout mask keeps about keep_prob of the units") {
  Rng rng(42);
  Network net = Network::glorot({4, 10000, 2}, {Activation::relu, Activation::identity}, rng);
  const DropoutMask m = sample_dropout_mask(net, 0.67, rng);
  REQUIRE(m.keep_bits().size() == 2);
  CHECK(m.keep_bits()[1].empty());  // output layer never masked
  double kept = 0;
  for (auto b : m.keep_bits()[0]) kept += b;
  CHECK(kept / 10000.0 == doctest::Approx(0.67).epsilon(0.02 / 0.67));
}

TEST_CASE("inverted dropout preserves the expected activation") {
  Rng rng(3);
  Network net = Network::glorot({3, 50, 1}, {Activation::relu, Activation::identity}, rng);
  Vector x(3);
  x << 0.3, -0.7, 1.1;
  const double plain = evaluate(net, x)(0);
  double acc = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const DropoutMask m = sample_dropout_mask(net, 0.67, rng);
    acc += evaluate(net, x, &m)(0);
  }
  CHECK(std::abs(acc / draws - plain) <= 0.02 * std::abs(plain) + 1e-3);
}

TEST_CASE("full mask equals no mask and ids track content") {
  Network net = tiny_net();
  const DropoutMask full = full_mask(net);
  Vector x(2);
  x << -0.4, 0.9;
  CHECK(evaluate(net, x, &full) == evaluate(net, x));
  Rng r1(9), r2(9);
  const DropoutMask a = sample_dropout_mask(net, 0.5, r1), b = sample_dropout_mask(net, 0.5, r2);
  CHECK(a == b);
  CHECK(a.id() == b.id());
}

TEST_CASE("batched pass agrees with per-sample passes under per-column masks") {
  Rng rng(5);
  Network net = Network::glorot({4, 6, 5, 3}, {Activation::relu, Activation::sigmoid, Activation::identity}, rng);
  std::vector<DropoutMask> masks;
  for (int i = 0; i < 3; ++i) masks.push_back(sample_dropout_mask(net, 0.67, rng));
  std::vector<const DropoutMask*> ptrs{&masks[0], &masks[1], &masks[2]};
  const BatchMask bm = BatchMask::from_masks(net, ptrs);
  Matrix x = Matrix::Random(4, 3);
  const Matrix y = evaluate_batch(net, x, &bm);
  for (int c = 0; c < 3; ++c) {
    const Vector single = evaluate(net, x.col(c), &masks[static_cast<std::size_t>(c)]);
    CHECK((single - y.col(c)).norm() < 1e-12);
    CHECK(bm.column_id(static_cast<std::size_t>(c), 0.67) == masks[static_cast<std::size_t>(c)].id());
  }
}

TEST_CASE("first Adam step moves each parameter by about lr") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{0.5, -3.0};
  AdamState st = AdamState::for_blocks({2}, 0.1);
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  adam_step(ps, gs, st);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(st.step_count == 1);
}

TEST_CASE("Adam refuses non-finite gradients and leaves parameters untouched") {
  std::vector<double> p{1.0, 2.0, 3.0};
  std::vector<double> g{0.1, NAN, 0.2};
  AdamState st = AdamState::for_blocks({3}, 0.1);
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  try {
    adam_step(ps, gs, st);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK(p == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(st.step_count == 0);
}

TEST_CASE("softmax columns are normalised and stable") {
  Matrix logits(3, 2);
  logits << 1000, 0, 1001, 0, 999, 0;
  const Matrix p = softmax_columns(logits);
  CHECK(p.allFinite());
  CHECK(p.col(0).sum() == doctest::Approx(1.0));
  CHECK(p(0, 1) == doctest::Approx(1.0 / 3));
}

TEST_CASE("substreams are reproducible and distinct") {
  Rng a = substream(1, {2, 3}), b = substream(1, {2, 3}), c = substream(1, {3, 2});
  const auto va = a();
  CHECK(va == b());
  CHECK(va != c());
}
