#include "mcaae/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>

#include "mcaae/checkpoint.hpp"
#include "mcaae/error.hpp"

namespace mcaae {

// --- ImageDataset --------------------------------------------------------------

void ImageDataset::validate() const {
  if (images.size() != labels.size()) {
    throw ValidationError(name + ": " + std::to_string(images.size()) + " images but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (images.empty()) return;
  const auto& shape = images.front().shape();
  if (shape.size() != 2) throw ValidationError(name + ": images must be rank 2");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != shape) throw ValidationError(name + ": image " + std::to_string(i) + " has a different shape");
    for (double v : images[i].data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(name + ": image " + std::to_string(i) + " leaves [0, 1]");
    }
    if (labels[i] >= class_names.size()) {
      throw ValidationError(name + ": label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                            " is out of range");
    }
  }
}

Matrix ImageDataset::columns(const std::vector<std::size_t>& indices) const {
  Matrix m(static_cast<Eigen::Index>(pixels()), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t c = 0; c < indices.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = images.at(indices[c]).flat();
  return m;
}

Matrix ImageDataset::columns() const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), 0);
  return columns(all);
}

std::vector<std::vector<std::size_t>> ImageDataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> out(class_names.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
  return out;
}

ImageDataset ImageDataset::subset(const std::vector<std::size_t>& indices) const {
  ImageDataset out;
  out.name = name;
  out.class_names = class_names;
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

// --- IDX -------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at, const char* what) {
  if (b.size() < at + 4) throw FormatError(std::string("truncated IDX header: missing ") + what, at);
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

ImageDataset parse_idx(const std::vector<std::uint8_t>& image_bytes, const std::vector<std::uint8_t>& label_bytes,
                       std::string name) {
  if (image_bytes.empty()) throw FormatError("IDX image file is empty", 0);
  if (label_bytes.empty()) throw FormatError("IDX label file is empty", 0);
  if (read_be32(image_bytes, 0, "magic") != kIdxImagesMagic) throw FormatError("bad IDX image magic", 0);
  if (read_be32(label_bytes, 0, "magic") != kIdxLabelsMagic) throw FormatError("bad IDX label magic", 0);
  const std::uint32_t n = read_be32(image_bytes, 4, "image count");
  const std::uint32_t rows = read_be32(image_bytes, 8, "row count");
  const std::uint32_t cols = read_be32(image_bytes, 12, "column count");
  const std::uint32_t n_labels = read_be32(label_bytes, 4, "label count");
  if (rows == 0 || cols == 0) throw FormatError("IDX images have a zero dimension", 8);
  if (n != n_labels) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels",
                      4);
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t need = 16 + pixels * n;
  if (image_bytes.size() < need) throw FormatError("IDX image payload truncated", image_bytes.size());
  if (label_bytes.size() < 8 + std::size_t{n}) throw FormatError("IDX label payload truncated", label_bytes.size());

  ImageDataset ds;
  ds.name = std::move(name);
  std::size_t max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> px(pixels);
    const std::size_t base = 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) px[p] = image_bytes[base + p] / 255.0;
    ds.images.push_back(Tensor::image(rows, cols, std::move(px)));
    ds.labels.push_back(label_bytes[8 + i]);
    max_label = std::max<std::size_t>(max_label, label_bytes[8 + i]);
  }
  const std::size_t classes = n == 0 ? 0 : max_label + 1;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

ImageDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return parse_idx(read_file_bytes(images_path), read_file_bytes(labels_path), images_path.stem().string());
}

std::vector<std::uint8_t> encode_idx_images(const ImageDataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  put_be32(out, ds.empty() ? 0 : static_cast<std::uint32_t>(ds.height()));
  put_be32(out, ds.empty() ? 0 : static_cast<std::uint32_t>(ds.width()));
  for (const Tensor& img : ds.images) {
    for (double v : img.data()) out.push_back(quantize(v));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const ImageDataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t l : ds.labels) {
    if (l > 255) throw ValidationError("IDX labels are limited to one byte");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

void save_idx(const ImageDataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  write_file_bytes(images_path, encode_idx_images(ds));
  write_file_bytes(labels_path, encode_idx_labels(ds));
}

// --- PGM ---------------------------------------------------------------------------

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::vector<std::uint8_t>& b, std::size_t& at) {
  auto is_space = [](std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  while (at < b.size()) {
    if (is_space(b[at])) {
      ++at;
    } else if (b[at] == '#') {
      while (at < b.size() && b[at] != '\n') ++at;
    } else {
      break;
    }
  }
  const std::size_t start = at;
  while (at < b.size() && !is_space(b[at]) && b[at] != '#') ++at;
  if (start == at) throw FormatError("truncated PGM header", start);
  return {b.begin() + static_cast<std::ptrdiff_t>(start), b.begin() + static_cast<std::ptrdiff_t>(at)};
}

std::size_t pgm_number(const std::vector<std::uint8_t>& b, std::size_t& at, const char* what) {
  const std::size_t start = at;
  const std::string tok = pgm_token(b, at);
  std::size_t v = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') throw FormatError(std::string("PGM ") + what + " is not a number", start);
    v = v * 10 + static_cast<std::size_t>(c - '0');
    if (v > 1u << 24) throw FormatError(std::string("PGM ") + what + " is too large", start);
  }
  return v;
}

}  // namespace

Tensor parse_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw FormatError("PGM file is empty", 0);
  std::size_t at = 0;
  if (pgm_token(bytes, at) != "P5") throw FormatError("not a binary PGM (P5)", 0);
  const std::size_t w = pgm_number(bytes, at, "width");
  const std::size_t h = pgm_number(bytes, at, "height");
  const std::size_t maxval_at = at;
  const std::size_t maxval = pgm_number(bytes, at, "maxval");
  if (w == 0 || h == 0) throw FormatError("PGM has a zero dimension", 0);
  if (maxval == 0 || maxval > 255) throw FormatError("PGM maxval must be in 1..255", maxval_at);
  if (at >= bytes.size()) throw FormatError("PGM pixel data missing", at);
  ++at;  // single whitespace byte after maxval
  if (bytes.size() < at + w * h) throw FormatError("PGM pixel data truncated", bytes.size());
  std::vector<double> px(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const std::uint8_t v = bytes[at + i];
    if (v > maxval) throw FormatError("PGM sample exceeds maxval", at + i);
    px[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return Tensor::image(h, w, std::move(px));
}

Tensor load_pgm(const std::filesystem::path& path) { return parse_pgm(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_pgm(const Tensor& image) {
  if (image.rank() != 2) throw DimensionError("PGM export needs a rank-2 image");
  const std::string header =
      "P5\n" + std::to_string(image.shape()[1]) + " " + std::to_string(image.shape()[0]) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.data()) out.push_back(quantize(v));
  return out;
}

void save_pgm(const Tensor& image, const std::filesystem::path& path) { write_file_bytes(path, encode_pgm(image)); }

ImageDataset load_image_directory(const std::filesystem::path& root, std::size_t target_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ValidationError("image directory " + root.string() + " does not exist");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  ImageDataset ds;
  ds.name = root.filename().string();
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c])) {
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ds.images.push_back(preprocess(load_pgm(f), target_size));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

// --- preprocessing -------------------------------------------------------------------

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 2) throw DimensionError("resize expects a rank-2 image");
  const std::size_t in_h = image.shape()[0];
  const std::size_t in_w = image.shape()[1];
  if (in_h == out_h && in_w == out_w) return image;
  auto coord = [](std::size_t o, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1, double& t) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    t = s - static_cast<double>(i0);
  };
  Tensor out({out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double ty;
    coord(y, in_h, out_h, y0, y1, ty);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double tx;
      coord(x, in_w, out_w, x0, x1, tx);
      const double top = (1 - tx) * image.at(y0, x0) + tx * image.at(y0, x1);
      const double bottom = (1 - tx) * image.at(y1, x0) + tx * image.at(y1, x1);
      out.at(y, x) = (1 - ty) * top + ty * bottom;
    }
  }
  return out;
}

Tensor preprocess(const Tensor& image, std::size_t target_size) {
  if (image.empty()) throw ValidationError("cannot preprocess an empty image");
  if (target_size == 0) throw ValidationError("target size must be positive");
  Tensor gray;
  if (image.rank() == 3) {
    const std::size_t h = image.shape()[0], w = image.shape()[1], ch = image.shape()[2];
    gray = Tensor({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
      double s = 0;
      for (std::size_t c = 0; c < ch; ++c) s += image[i * ch + c];
      gray[i] = s / static_cast<double>(ch);
    }
  } else if (image.rank() == 2) {
    gray = image;
  } else {
    throw DimensionError("preprocess expects a rank-2 or rank-3 image");
  }

  const std::size_t h = gray.shape()[0], w = gray.shape()[1];
  const std::size_t side = std::min(h, w);
  Tensor cropped = gray;
  if (h != w) {
    const std::size_t top = (h - side) / 2, left = (w - side) / 2;
    cropped = Tensor({side, side});
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) cropped.at(r, c) = gray.at(top + r, left + c);
    }
  }
  Tensor out = resize_bilinear(cropped, target_size, target_size);
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ImageDataset preprocess_dataset(const ImageDataset& ds, std::size_t target_size) {
  ImageDataset out = ds;
  for (Tensor& img : out.images) img = preprocess(img, target_size);
  return out;
}

ImageDataset subsample_per_class(const ImageDataset& ds, std::size_t n_per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto idx : ds.indices_by_class()) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), n_per_class));
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

// --- synthetic shapes ---------------------------------------------------------------------

namespace {

struct Point {
  double x, y;
};

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

// Signed distance to a convex polygon given counter-clockwise vertices.
// Exact inside, a lower bound outside; enough for a one-pixel soft edge.
double convex_polygon_sd(Point p, const std::vector<Point>& v) {
  double sd = -1e300;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point a = v[i], b = v[(i + 1) % v.size()];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len = std::hypot(ex, ey);
    // Outward normal of a counter-clockwise edge is (ey, -ex).
    sd = std::max(sd, ((p.x - a.x) * ey - (p.y - a.y) * ex) / len);
  }
  return sd;
}

std::vector<Point> regular_polygon(Point c, double radius, double angle, int sides) {
  std::vector<Point> v;
  for (int i = 0; i < sides; ++i) {
    const double a = angle + 2.0 * std::numbers::pi * i / sides;
    v.push_back({c.x + radius * std::cos(a), c.y + radius * std::sin(a)});
  }
  return v;
}

using Sdf = std::function<double(Point)>;

Tensor rasterize(const Sdf& sdf, std::size_t size, double intensity) {
  Tensor img({size, size});
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double sd = sdf({static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5});
      img.at(r, c) = intensity * std::clamp(0.5 - sd, 0.0, 1.0);
    }
  }
  return img;
}

class ShapeSampler {
 public:
  ShapeSampler(std::size_t size, Rng& rng) : s_(static_cast<double>(size)), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Point centre(double lo, double hi) { return {uniform(lo, hi) * s_, uniform(lo, hi) * s_}; }
  double frac(double lo, double hi) { return uniform(lo, hi) * s_; }

  Sdf bar() {
    const Point c = centre(0.35, 0.65);
    const double angle = uniform(0.0, std::numbers::pi);
    const double half_len = frac(0.2, 0.32);
    const double half_width = frac(0.04, 0.07);
    const Point d{half_len * std::cos(angle), half_len * std::sin(angle)};
    const Point a{c.x - d.x, c.y - d.y}, b{c.x + d.x, c.y + d.y};
    return [=](Point p) { return segment_distance(p, a, b) - half_width; };
  }

  Sdf disc() {
    const Point c = centre(0.38, 0.62);
    const double r = frac(0.12, 0.22);
    return [=](Point p) { return std::hypot(p.x - c.x, p.y - c.y) - r; };
  }

  Sdf square() {
    const Point c = centre(0.38, 0.62);
    const double half = frac(0.12, 0.2);
    const auto verts = regular_polygon(c, half * std::numbers::sqrt2, uniform(0.0, std::numbers::pi / 2), 4);
    return [=](Point p) { return convex_polygon_sd(p, verts); };
  }

  Sdf cross(double width_lo, double width_hi, double angle_lo, double angle_hi) {
    const Point c = centre(0.4, 0.6);
    const double angle = uniform(angle_lo, angle_hi);
    const double half_len = frac(0.2, 0.3);
    const double half_width = frac(width_lo, width_hi);
    std::array<std::pair<Point, Point>, 2> arms;
    for (int k = 0; k < 2; ++k) {
      const double a = angle + k * std::numbers::pi / 2;
      const Point d{half_len * std::cos(a), half_len * std::sin(a)};
      arms[static_cast<std::size_t>(k)] = {{c.x - d.x, c.y - d.y}, {c.x + d.x, c.y + d.y}};
    }
    return [=](Point p) {
      return std::min(segment_distance(p, arms[0].first, arms[0].second),
                      segment_distance(p, arms[1].first, arms[1].second)) -
             half_width;
    };
  }

  Sdf ring() {
    const Point c = centre(0.4, 0.6);
    const double r = frac(0.15, 0.24);
    const double t = frac(0.035, 0.06);
    return [=](Point p) { return std::abs(std::hypot(p.x - c.x, p.y - c.y) - r) - t; };
  }

  Sdf triangle() {
    const Point c = centre(0.38, 0.62);
    const auto verts = regular_polygon(c, frac(0.16, 0.26), uniform(0.0, 2.0 * std::numbers::pi / 3), 3);
    return [=](Point p) { return convex_polygon_sd(p, verts); };
  }

 private:
  double s_;
  Rng& rng_;
};

struct Kind {
  const char* name;
  std::vector<std::string> classes;
};

const std::vector<Kind>& kinds() {
  static const std::vector<Kind> k{
      {"bars-vs-blobs", {"bar", "blob"}},
      {"shapes-4", {"disc", "square", "cross", "ring"}},
      {"triangles", {"triangle"}},
      {"crosses", {"cross"}},
      {"rings", {"ring"}},
  };
  return k;
}

Sdf draw_class(ShapeSampler& s, const std::string& cls) {
  if (cls == "bar") return s.bar();
  if (cls == "blob" || cls == "disc") return s.disc();
  if (cls == "square") return s.square();
  if (cls == "ring") return s.ring();
  if (cls == "triangle") return s.triangle();
  return s.cross(0.035, 0.06, 0.0, std::numbers::pi / 2);
}

}  // namespace

std::vector<std::string> synth_kinds() {
  std::vector<std::string> out;
  for (const auto& k : kinds()) out.emplace_back(k.name);
  return out;
}

ImageDataset synth_generate(const std::string& kind, std::size_t n_per_class, std::size_t image_size,
                            std::uint64_t seed) {
  const auto it = std::find_if(kinds().begin(), kinds().end(), [&](const Kind& k) { return kind == k.name; });
  if (it == kinds().end()) throw ValidationError("unknown synthetic dataset kind '" + kind + "'");
  if (image_size < 8) throw ValidationError("synthetic images must be at least 8 pixels wide");
  Rng rng(seed);
  ShapeSampler sampler(image_size, rng);
  ImageDataset ds;
  ds.name = kind;
  ds.class_names = it->classes;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t c = 0; c < it->classes.size(); ++c) {
      // The "crosses" OOD kind uses thin arms near the diagonals so it differs
      // from the shapes-4 cross class.
      Sdf sdf = kind == "crosses" ? sampler.cross(0.02, 0.03, std::numbers::pi / 4 - 0.2, std::numbers::pi / 4 + 0.2)
                                  : draw_class(sampler, it->classes[c]);
      const double intensity = sampler.uniform(0.75, 1.0);
      ds.images.push_back(rasterize(sdf, image_size, intensity));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

// --- OOD pairing -------------------------------------------------------------------------

std::vector<std::size_t> stratified_indices(const ImageDataset& ds, std::size_t n, Rng& rng) {
  auto by_class = ds.indices_by_class();
  std::vector<std::size_t> quota(by_class.size(), 0);
  std::size_t assigned = 0;
  n = std::min(n, ds.size());
  while (assigned < n) {
    for (std::size_t c = 0; c < by_class.size() && assigned < n; ++c) {
      if (quota[c] < by_class[c].size()) {
        ++quota[c];
        ++assigned;
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    out.insert(out.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

OodPairing make_ood_pairing(const ImageDataset& in_test, const ImageDataset& out, std::size_t target_total,
                            std::uint64_t seed) {
  if (in_test.empty() || out.empty()) throw ValidationError("OOD pairing needs two nonempty datasets");
  Rng rng(seed);
  const std::size_t n = std::min({target_total / 2, in_test.size(), out.size()});
  OodPairing p;
  p.in_source_index = stratified_indices(in_test, n, rng);
  p.out_source_index = stratified_indices(out, n, rng);
  p.in_samples = in_test.subset(p.in_source_index);
  p.out_samples = out.subset(p.out_source_index);
  return p;
}

}  // namespace mcaae
