#include "doctest.h"

#include <cmath>
#include <map>
#include <set>

#include "mcaae/autoencoder.hpp"
#include "mcaae/error.hpp"
#include "mcaae/mca.hpp"

using namespace mcaae;

namespace {

struct Toy {
  ImageDataset data = synth_generate("bars-vs-blobs", 6, 8, 3);
  Autoencoder ae = Autoencoder::make({64, {16}, 4}, 5);
  LatentClassifier clf = LatentClassifier::make(4, 2, 6);
};

}  // namespace

TEST_CASE("normalized entropy values") {
  CHECK(normalized_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 1.0);
  CHECK(normalized_entropy(std::vector<double>{0.0, 1.0, 0.0}) == 0.0);
  // -(0.9 ln 0.9 + 0.1 ln 0.1) / ln 2 = 0.4689955935892812
  CHECK(normalized_entropy(std::vector<double>{0.9, 0.1}) == doctest::Approx(0.4689955935892812).epsilon(1e-14));
  CHECK_THROWS_AS(normalized_entropy(std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(normalized_entropy(std::vector<double>{0.6, 0.6}), ValidationError);
  CHECK_THROWS_AS(normalized_entropy(std::vector<double>{1.1, -0.1}), ValidationError);
}

TEST_CASE("decide accepts at or below the threshold") {
  PredictiveDistribution pd;
  pd.mean_p = Vector(2);
  pd.mean_p << 0.9, 0.1;
  pd.entropy = normalized_entropy(pd.mean_p);
  CHECK(decide(pd, 0.5).accepted);
  CHECK(decide(pd, 0.5).label == 0);
  CHECK_FALSE(decide(pd, 0.4).accepted);
  CHECK(decide(pd, pd.entropy).accepted);
  CHECK_THROWS_AS(decide(pd, 1.5), ValidationError);
}

TEST_CASE("mask schedule: frozen within a run, resampled across runs") {
  Toy t;
  std::map<std::pair<std::size_t, std::size_t>, std::set<std::uint64_t>> per_run;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> steps;
  McaOptions o;
  o.m_inferences = 8;
  o.n_recursions = 3;
  o.seed = 11;
  o.observer = [&](std::size_t s, std::size_t l, std::size_t, std::uint64_t id) {
    per_run[{s, l}].insert(id);
    ++steps[{s, l}];
  };
  mca_predict_dataset(t.ae, t.clf, t.data, o);
  REQUIRE(per_run.size() == t.data.size() * 8);
  for (const auto& [key, ids] : per_run) {
    CHECK(ids.size() == 1);
    CHECK(steps[key] == 3);
  }
  for (std::size_t s = 0; s < t.data.size(); ++s) {
    std::set<std::uint64_t> distinct;
    for (std::size_t l = 0; l < 8; ++l) distinct.insert(*per_run[{s, l}].begin());
    CHECK(distinct.size() == 8);
  }
}

TEST_CASE("predictions do not depend on batching") {
  Toy t;
  McaOptions o;
  o.m_inferences = 5;
  o.seed = 4;
  const auto all = mca_predict_dataset(t.ae, t.clf, t.data, o);
  for (std::size_t i : {std::size_t{0}, std::size_t{7}}) {
    const auto one = mca_predict(t.ae, t.clf, t.data.images[i], o, i);
    CHECK((one.mean_p - all[i].mean_p).norm() < 1e-14);
    CHECK(one.entropy == all[i].entropy);
  }
  for (const auto& p : all) {
    CHECK(p.per_run.size() == 5);
    CHECK(p.mean_p.sum() == doctest::Approx(1.0));
    CHECK((p.entropy >= 0.0 && p.entropy <= 1.0));
  }
}

TEST_CASE("recursive latent follows e(f^(N-1)(x))") {
  Toy t;
  const Matrix x = t.data.columns({0, 1});
  const Matrix z0 = recursive_latent(t.ae, x, 0);
  CHECK((z0 - encode_batch(t.ae, x)).norm() == 0.0);
  CHECK((recursive_latent(t.ae, x, 1) - z0).norm() == 0.0);
  const Matrix f1 = decode_batch(t.ae, encode_batch(t.ae, x));
  CHECK((recursive_latent(t.ae, x, 2) - encode_batch(t.ae, f1)).norm() < 1e-12);
}

TEST_CASE("single run without dropout reproduces the classifier output") {
  Toy t;
  McaOptions o;
  o.m_inferences = 1;
  o.keep_prob = 1.0;
  o.n_recursions = 0;
  const auto pd = mca_predict(t.ae, t.clf, t.data.images[2], o);
  const Matrix p = t.clf.probabilities(encode_batch(t.ae, t.data.columns({2})));
  CHECK((pd.mean_p - p.col(0)).norm() < 1e-14);
}

TEST_CASE("latent classifier learns a separable toy task") {
  const ImageDataset data = synth_generate("bars-vs-blobs", 20, 16, 1);
  const Autoencoder ae = Autoencoder::make({256, {32}, 6}, 2);
  ClassifierConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const Autoencoder before = ae;
  const LatentClassifier clf = train_classifier(ae, data, 0, cfg);
  CHECK(ae == before);
  CHECK(classifier_accuracy(ae, clf, data, 0) >= 0.75);
  CHECK(train_classifier(ae, data, 0, cfg).network() == clf.network());
}

TEST_CASE("classifier checkpoint round trip") {
  const LatentClassifier clf = LatentClassifier::make(4, 3, 1);
  const auto path = std::filesystem::temp_directory_path() / "mcaae-unit-clf.ckpt";
  save_classifier(clf, path);
  CHECK(load_classifier(path).network() == clf.network());
}
