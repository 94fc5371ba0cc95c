#pragma once

// Dataset ingestion and generation: IDX and PGM files, class-per-folder image
// directories, preprocessing to square grayscale inputs, per-class
// subsampling, synthetic shape datasets, and balanced in/out pairings for OOD
// evaluation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcaae/nncore.hpp"

namespace mcaae {

struct ImageDataset {
  std::string name;
  std::vector<Tensor> images;  // rank-2 {height, width}, values in [0, 1]
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  std::size_t height() const { return images.front().shape()[0]; }
  std::size_t width() const { return images.front().shape()[1]; }
  std::size_t pixels() const { return images.front().size(); }
  std::size_t class_count() const noexcept { return class_names.size(); }

  /// Invariant audit: uniform rank-2 shapes, values in [0, 1], labels in range.
  /// Throws ValidationError on the first violation.
  void validate() const;
  /// Pixels of the selected samples as columns.
  Matrix columns(const std::vector<std::size_t>& indices) const;
  Matrix columns() const;
  /// Indices of the samples of each class.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
  ImageDataset subset(const std::vector<std::size_t>& indices) const;
};

// --- IDX ---------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses an IDX image/label pair (big-endian, unsigned byte payloads). Pixel
/// bytes are scaled by 1/255. Errors carry the byte offset of the problem.
ImageDataset parse_idx(const std::vector<std::uint8_t>& image_bytes, const std::vector<std::uint8_t>& label_bytes,
                       std::string name = "idx");
ImageDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Quantises pixels to bytes (round to nearest) and writes both files.
std::vector<std::uint8_t> encode_idx_images(const ImageDataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const ImageDataset& ds);
void save_idx(const ImageDataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

// --- PGM ---------------------------------------------------------------------

/// Binary PGM (P5). maxval up to 255 is supported; values are scaled to [0, 1].
Tensor parse_pgm(const std::vector<std::uint8_t>& bytes);
Tensor load_pgm(const std::filesystem::path& path);
/// Writes P5 with maxval 255; values are clamped to [0, 1] and rounded.
std::vector<std::uint8_t> encode_pgm(const Tensor& image);
void save_pgm(const Tensor& image, const std::filesystem::path& path);

/// One subdirectory per class (sorted by name), each holding .pgm files
/// (sorted by name). Every image is preprocessed to target_size.
ImageDataset load_image_directory(const std::filesystem::path& root, std::size_t target_size);

// --- preprocessing -------------------------------------------------------------

/// Centre-crop to the shorter side, bilinear resize to target x target
/// (half-pixel centres), and average channels when the input is rank 3
/// {height, width, channels}. Output is rank 2 and clamped to [0, 1].
Tensor preprocess(const Tensor& image, std::size_t target_size = 64);
/// Bilinear resize of a rank-2 image with half-pixel centres and clamped borders.
Tensor resize_bilinear(const Tensor& image, std::size_t out_height, std::size_t out_width);
ImageDataset preprocess_dataset(const ImageDataset& ds, std::size_t target_size);

/// Uniform draw without replacement of up to n samples per class; classes with
/// fewer samples are kept whole. Sample order follows the original dataset.
ImageDataset subsample_per_class(const ImageDataset& ds, std::size_t n_per_class, std::uint64_t seed);

// --- synthetic shapes ------------------------------------------------------------

/// Generator kinds:
///   bars-vs-blobs  2 classes: "bar" (oriented rounded segment), "blob" (disc)
///   shapes-4       4 classes: disc, square, cross, ring
///   triangles      1 class, filled triangles (held-out shape for OOD)
///   crosses        1 class, thin diagonal crosses (held-out shape for OOD)
///   rings          1 class, annuli
/// Shapes are white on black with a one-pixel soft edge. Size, position,
/// rotation and intensity are randomised; every class has exactly
/// n_per_class samples, interleaved by class.
ImageDataset synth_generate(const std::string& kind, std::size_t n_per_class, std::size_t image_size,
                            std::uint64_t seed);
std::vector<std::string> synth_kinds();

// --- OOD pairing -------------------------------------------------------------------

struct OodPairing {
  ImageDataset in_samples;
  ImageDataset out_samples;
  std::vector<std::size_t> in_source_index;   // index into the in-distribution dataset
  std::vector<std::size_t> out_source_index;  // index into the OOD dataset
};

/// Draws n = min(target_total / 2, |in|, |out|) samples from each side,
/// stratified by class so per-class counts differ by at most one where
/// availability allows.
OodPairing make_ood_pairing(const ImageDataset& in_test, const ImageDataset& out, std::size_t target_total,
                            std::uint64_t seed);

/// Stratified draw of n indices from a dataset (per-class counts differ by at
/// most one where availability allows). Returned indices are sorted.
std::vector<std::size_t> stratified_indices(const ImageDataset& ds, std::size_t n, Rng& rng);

}  // namespace mcaae
