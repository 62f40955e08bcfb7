#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "nlinv/data.hpp"
#include "nlinv/invariant.hpp"
#include "nlinv/linalg.hpp"

namespace nlinv {

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// count one half. Label 1 marks the positive (OOD) class.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(const Vector& scores, std::span<const std::uint8_t> labels);

/// Train/test pair for the 2-D toy problems: training rows on the shape,
/// test rows = `n_test` fresh shape samples (label 0) + `n_test` uniform
/// samples from [-box, box]^2 (label 1).
struct ToyTask {
  FeatureMatrix train;
  FeatureMatrix test;
};

struct ToyTaskConfig {
  std::string shape = "circle";
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  double noise = 0.05;
  double box_half_width = 2.0;
};

ToyTask make_toy_task(const ToyTaskConfig& cfg, std::uint64_t seed);

enum class Method { NlInvs, NlInvsNoBwd, LinearInvariants, MahaAD, DN2 };
enum class ScoreKind { Inv, Final };

Method parse_method(const std::string& name);
std::string to_string(Method m);
ScoreKind parse_score_kind(const std::string& name);
std::string to_string(ScoreKind s);

struct DatasetRef {
  std::string name;
  /// Registry lookup when neither path nor toy nor explicit splits are set.
  std::optional<std::string> path;
  std::optional<ToyTaskConfig> toy;
  /// Pre-split multi-scale data: one training file and one labelled test
  /// file per scale.
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;
};

struct BenchmarkConfig {
  Method method = Method::NlInvs;
  ScoreKind score = ScoreKind::Final;
  std::vector<DatasetRef> datasets;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::uint64_t split_seed = 0;
  ScaleConfig scale;
  std::size_t dn2_k = 30;
  std::string registry = "data/datasets.json";
  std::string data_dir = "data";
  std::optional<std::string> output;

  /// Rejects method/score pairs that are not an ablation row or baseline.
  void validate() const;
  static BenchmarkConfig from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double auc = 0.0;
  std::string model_hash;
};

struct DatasetResult {
  std::string dataset;
  std::vector<SeedResult> per_seed;
  double mean = 0.0;
  /// Population standard deviation over seeds.
  double std = 0.0;
  double wall_time_s = 0.0;
};

struct BenchmarkReport {
  nlohmann::json config;
  std::vector<DatasetResult> results;
  double wall_time_s = 0.0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Per-scale train matrices and a labelled test set.
struct PreparedData {
  std::vector<Matrix> train;
  std::vector<Matrix> test;
  std::vector<std::uint8_t> labels;
};

PreparedData prepare_dataset(const BenchmarkConfig& cfg, const DatasetRef& ref, std::uint64_t seed);

/// Scores for one run of `method` (training with `seed`), plus a model hash
/// for the trained methods.
struct MethodRun {
  Vector scores;
  std::string model_hash;
};
MethodRun run_method(const BenchmarkConfig& cfg, const PreparedData& data, std::uint64_t seed);

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

struct LandscapeCell {
  double x = 0.0;
  double y = 0.0;
  double loss = 0.0;
  double auc = 0.0;
};

struct LandscapeGrid {
  std::size_t grid_n = 0;
  double range = 0.0;
  /// Row-major over (y, x), grid_n * grid_n cells.
  std::vector<LandscapeCell> cells;

  std::string to_csv() const;
};

/// Training loss (forward + backward, on the retained training features) and
/// S_inv AUC on the test set along two seeded random directions, each
/// rescaled per parameter tensor to that tensor's norm.
LandscapeGrid landscape(const TrainedScale& ts, const Matrix& test_raw,
                        std::span<const std::uint8_t> labels, std::size_t grid_n, double range,
                        std::uint64_t seed);

/// Loss and AUC of a single-scale VPN detector at its trained parameters,
/// computed exactly as landscape() does at the origin.
LandscapeCell evaluate_scale(const TrainedScale& ts, const Matrix& test_raw,
                             std::span<const std::uint8_t> labels);

}  // namespace nlinv
