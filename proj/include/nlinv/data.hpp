#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlinv/binary_io.hpp"
#include "nlinv/linalg.hpp"

namespace nlinv {

/// N x D features with optional column names and optional per-row labels
/// (0 = in-distribution, 1 = OOD).
struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> column_names;
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  bool has_labels() const { return labels.has_value(); }

  /// Rows selected by index, labels carried along.
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
};

/// Parses comma separated numeric text. A first line whose feature cells are
/// not all numeric is taken as a header. When `has_label_column` is set the
/// last column is the label and accepts 0/1 or n/o (normal/outlier).
FeatureMatrix parse_csv(std::string_view text, bool has_label_column,
                        const std::string& context = "csv");
FeatureMatrix load_csv(const std::filesystem::path& path, bool has_label_column);
void save_csv(const std::filesystem::path& path, const FeatureMatrix& fm);

/// "NLFM1\0", u32 rows, u32 cols, u8 has_labels, f64 row-major data, u8 labels.
Bytes encode_bin(const FeatureMatrix& fm);
FeatureMatrix decode_bin(std::span<const std::uint8_t> bytes);
FeatureMatrix load_bin(const std::filesystem::path& path);
void save_bin(const std::filesystem::path& path, const FeatureMatrix& fm);

/// Binary when the file starts with the NLFM1 magic, CSV otherwise.
FeatureMatrix load_features(const std::filesystem::path& path, bool csv_has_label_column);

/// Points around a circle: angle ~ U[0, 2pi), radius ~ radius + N(0, sigma).
FeatureMatrix gen_circle(std::size_t n, double radius, double noise_sigma, std::uint64_t seed);
/// Unit-circle arc with angle ~ U[pi/6, 11pi/6) plus isotropic N(0, sigma) noise.
FeatureMatrix gen_ushape(std::size_t n, double noise_sigma, std::uint64_t seed);
/// Uniform samples in [-half_width, half_width]^dim.
FeatureMatrix gen_box(std::size_t n, std::size_t dim, double half_width, std::uint64_t seed);

/// Vertical stack; labels kept only if every part has them.
FeatureMatrix concat_rows(const FeatureMatrix& a, const FeatureMatrix& b);
/// Copy of `fm` with every label set to `label`.
FeatureMatrix with_label(FeatureMatrix fm, std::uint8_t label);

struct ShallowSplit {
  FeatureMatrix train;
  FeatureMatrix test;
  /// Provenance: row indices into the full dataset.
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// All outliers plus an equal-size seeded sample of inliers form the test
/// set; the remaining inliers are the training set.
ShallowSplit make_shallow_split(const FeatureMatrix& full, std::uint64_t seed);

/// Per-column z-scoring with training statistics.
struct Standardizer {
  Vector mean;
  Vector scale;

  static constexpr double kMinScale = 1e-8;

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(std::size_t dim);
  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& x) const;
};

struct DatasetEntry {
  std::string name;
  std::string file;
  std::size_t train_rows = 0;
  std::size_t cols = 0;
};

/// Dataset registry JSON: {"datasets": {name: {"file", "train_rows", "cols"}}}.
std::map<std::string, DatasetEntry> load_registry(const std::filesystem::path& path);

/// Loads a labelled dataset from `data_dir` and checks its column count.
FeatureMatrix load_dataset(const DatasetEntry& entry, const std::filesystem::path& data_dir);

}  // namespace nlinv
