#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"

#include "nlinv/binary_io.hpp"
#include "nlinv/invariant.hpp"
#include "nlinv/knn.hpp"

namespace nlinv {

/// A trained multi-scale detector plus its optional 2-NN index.
struct Detector {
  InvariantDetector invariants;
  std::optional<KnnIndex> knn;
  /// Fully resolved training configuration, echoed into the file header.
  nlohmann::json config;

  std::size_t num_scales() const { return invariants.scales.size(); }
};

nlohmann::json to_json(const ScaleConfig& cfg);

/// Trains one scale per input matrix (scale l uses seed cfg.seed + l) and
/// builds the 2-NN index when `build_knn` is set.
Detector fit_detector(std::span<const Matrix> per_scale, const ScaleConfig& cfg, bool build_knn,
                      const EpochCallback& on_epoch = nullptr);

ScoreTriple score_detector(const Detector& det, std::span<const Matrix> per_scale, bool with_knn);

/// Container: "NLDET1\0", JSON header, per-scale sections holding the
/// standardization stats, K, e, the invariant map (an embedded NLINV1 model
/// or the affine solution) and the retained features as NLFM1, then the
/// optional 2-NN normalizers and a SHA-256 trailer.
Bytes encode_detector(const Detector& det);
Detector decode_detector(std::span<const std::uint8_t> bytes);
void save_detector(const std::filesystem::path& path, const Detector& det);
Detector load_detector(const std::filesystem::path& path);

/// Hex SHA-256 of the encoded container.
std::string detector_hash(const Detector& det);

}  // namespace nlinv
