#include "doctest.h"

#include <algorithm>
#include <set>

#include "mcaae/data.hpp"
#include "mcaae/error.hpp"

using namespace mcaae;

TEST_CASE("bilinear resize with half-pixel centres, hand oracle") {
  // 2x2 -> 4x4. Output centre (0.25 + k/2) - 0.5 maps to source coordinate
  // -0.25, 0.25, 0.75, 1.25, clamped to [0, 1].
  const Tensor src = Tensor::image(2, 2, {0.0, 1.0, 0.5, 0.25});
  const Tensor out = resize_bilinear(src, 4, 4);
  const double w[4] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double top = (1 - w[c]) * 0.0 + w[c] * 1.0;
      const double bot = (1 - w[c]) * 0.5 + w[c] * 0.25;
      CHECK(out.at(r, c) == doctest::Approx((1 - w[r]) * top + w[r] * bot).epsilon(1e-14));
    }
  }
}

TEST_CASE("resize to the same size is the identity") {
  const ImageDataset ds = synth_generate("rings", 1, 16, 2);
  CHECK(resize_bilinear(ds.images[0], 16, 16) == ds.images[0]);
}

TEST_CASE("preprocess crops, averages channels and is idempotent") {
  Tensor rgb({4, 6, 3});
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<double>(i % 7) / 7.0;
  const Tensor g = preprocess(rgb, 4);
  CHECK(g.shape() == std::vector<std::size_t>{4, 4});
  // Centre crop of a 4x6 image keeps columns 1..4.
  const double avg = (rgb[(0 * 6 + 1) * 3] + rgb[(0 * 6 + 1) * 3 + 1] + rgb[(0 * 6 + 1) * 3 + 2]) / 3.0;
  CHECK(g.at(0, 0) == doctest::Approx(avg).epsilon(1e-14));
  CHECK(preprocess(g, 4) == g);

  const ImageDataset ds = synth_generate("shapes-4", 2, 20, 4);
  for (const auto& img : ds.images) {
    const Tensor once = preprocess(img, 12);
    CHECK(preprocess(once, 12) == once);
  }
}

TEST_CASE("synthetic generators satisfy the dataset invariants") {
  for (const auto& kind : synth_kinds()) {
    const ImageDataset ds = synth_generate(kind, 5, 24, 11);
    INFO(kind);
    CHECK_NOTHROW(ds.validate());
    CHECK(ds.size() == 5 * ds.class_count());
    for (std::size_t c = 0; c < ds.class_count(); ++c) {
      CHECK(std::count(ds.labels.begin(), ds.labels.end(), c) == 5);
    }
    for (const auto& img : ds.images) {
      CHECK(img.shape() == std::vector<std::size_t>{24, 24});
      const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
      CHECK(*lo >= 0.0);
      CHECK(*hi <= 1.0);
      CHECK(*hi > 0.5);  // a visible shape
    }
  }
  CHECK(synth_generate("bars-vs-blobs", 3, 16, 1).images == synth_generate("bars-vs-blobs", 3, 16, 1).images);
  CHECK(synth_generate("bars-vs-blobs", 3, 16, 1).images != synth_generate("bars-vs-blobs", 3, 16, 2).images);
  CHECK_THROWS_AS(synth_generate("nope", 1, 16, 1), ValidationError);
}

TEST_CASE("validate flags bad datasets") {
  ImageDataset ds = synth_generate("bars-vs-blobs", 2, 8, 1);
  ds.labels[0] = 7;
  CHECK_THROWS_AS(ds.validate(), ValidationError);
  ds = synth_generate("bars-vs-blobs", 2, 8, 1);
  ds.images[1][3] = 1.5;
  CHECK_THROWS_AS(ds.validate(), ValidationError);
}

TEST_CASE("subsample keeps at most n per class in original order") {
  const ImageDataset ds = synth_generate("shapes-4", 10, 8, 3);
  const ImageDataset sub = subsample_per_class(ds, 4, 9);
  CHECK(sub.size() == 16);
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::count(sub.labels.begin(), sub.labels.end(), c) == 4);
  CHECK(subsample_per_class(ds, 4, 9).images == sub.images);
  CHECK(subsample_per_class(ds, 50, 9).size() == ds.size());
}

TEST_CASE("OOD pairing is balanced and stratified") {
  const ImageDataset in = synth_generate("shapes-4", 25, 8, 1);
  const ImageDataset out = synth_generate("triangles", 30, 8, 2);
  const OodPairing p = make_ood_pairing(in, out, 50, 3);
  CHECK(p.in_samples.size() == 25);
  CHECK(p.out_samples.size() == 25);
  std::vector<std::size_t> per_class(4, 0);
  for (std::size_t l : p.in_samples.labels) ++per_class[l];
  CHECK(*std::max_element(per_class.begin(), per_class.end()) - *std::min_element(per_class.begin(), per_class.end()) <= 1);
  CHECK(std::set<std::size_t>(p.in_source_index.begin(), p.in_source_index.end()).size() == 25);
  for (std::size_t k = 0; k < p.in_source_index.size(); ++k) {
    CHECK(p.in_samples.images[k] == in.images[p.in_source_index[k]]);
  }
  // limited by the smaller side
  CHECK(make_ood_pairing(in, synth_generate("triangles", 7, 8, 2), 1000, 3).in_samples.size() == 7);
}

TEST_CASE("image directory loader reads class subfolders") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "mcaae-unit-dir";
  fs::remove_all(root);
  const ImageDataset ds = synth_generate("bars-vs-blobs", 2, 10, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const fs::path dir = root / ds.class_names[ds.labels[i]];
    fs::create_directories(dir);
    save_pgm(ds.images[i], dir / ("img" + std::to_string(i) + ".pgm"));
  }
  const ImageDataset back = load_image_directory(root, 10);
  CHECK(back.size() == 4);
  CHECK(back.class_count() == 2);
  CHECK_THROWS_AS(load_image_directory(root / "missing", 10), ValidationError);
}
