#include "nlinv/detector.hpp"

#include <string>

#include "nlinv/error.hpp"

namespace nlinv {

namespace {

constexpr std::string_view kDetectorMagic{"NLDET1\0", 7};

void write_vector(ByteWriter& w, const Vector& v) {
  w.f64s(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Vector read_vector(ByteReader& r, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  r.f64s(std::span<double>(v.data(), n));
  return v;
}

void write_blob(ByteWriter& w, const Bytes& blob) {
  w.u64(blob.size());
  w.raw(blob);
}

std::span<const std::uint8_t> read_blob(ByteReader& r) {
  const std::uint64_t n = r.u64();
  require(n <= r.remaining(), ErrorKind::Format, "detector file: truncated section");
  return r.raw(static_cast<std::size_t>(n));
}

}  // namespace

nlohmann::json to_json(const ScaleConfig& cfg) {
  nlohmann::json j;
  j["p"] = cfg.p_percent;
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch_size;
  j["lr"] = cfg.lr_start;
  j["lr_end"] = cfg.lr_end;
  j["seed"] = cfg.seed;
  j["blocks"] = cfg.blocks;
  j["backward_loss"] = cfg.backward_loss;
  j["standardize"] = cfg.standardize;
  j["linear"] = cfg.linear;
  j["force_k"] = cfg.force_k ? nlohmann::json(*cfg.force_k) : nlohmann::json(nullptr);
  return j;
}

Detector fit_detector(std::span<const Matrix> per_scale, const ScaleConfig& cfg, bool build_knn,
                      const EpochCallback& on_epoch) {
  require(!per_scale.empty(), ErrorKind::InvalidArgument, "fit_detector: no feature scales");
  Detector det;
  for (std::size_t l = 0; l < per_scale.size(); ++l) {
    require(per_scale[l].rows() == per_scale[0].rows(), ErrorKind::InvalidArgument,
            "fit_detector: every scale must have the same number of rows (scale " +
                std::to_string(l + 1) + " has " + std::to_string(per_scale[l].rows()) + ", scale 1 has " +
                std::to_string(per_scale[0].rows()) + ")");
    ScaleConfig sc = cfg;
    sc.seed = cfg.seed + l;
    det.invariants.scales.push_back(train_scale(per_scale[l], sc, on_epoch));
  }
  if (build_knn) det.knn = KnnIndex::build(det.invariants);
  det.config = to_json(cfg);
  det.config["scales"] = per_scale.size();
  det.config["knn"] = build_knn;
  return det;
}

ScoreTriple score_detector(const Detector& det, std::span<const Matrix> per_scale, bool with_knn) {
  require(!with_knn || det.knn.has_value(), ErrorKind::InvalidArgument,
          "this detector was trained without a 2-NN index; only S_inv is available");
  return final_score(det.invariants, with_knn ? &*det.knn : nullptr, per_scale);
}

Bytes encode_detector(const Detector& det) {
  nlohmann::json header;
  header["format"] = "nlinv-detector";
  header["version"] = 1;
  header["config"] = det.config;
  header["scales"] = nlohmann::json::array();
  for (const auto& ts : det.invariants.scales) {
    header["scales"].push_back({{"kind", ts.kind == InvariantKind::Vpn ? "vpn" : "affine"},
                                {"K", ts.k},
                                {"dim", ts.dim()},
                                {"train_rows", ts.features.rows()}});
  }
  const std::string header_text = header.dump();

  ByteWriter w;
  w.raw(kDetectorMagic);
  w.u32(static_cast<std::uint32_t>(header_text.size()));
  w.raw(header_text);
  w.u32(static_cast<std::uint32_t>(det.invariants.scales.size()));
  for (const auto& ts : det.invariants.scales) {
    w.u8(static_cast<std::uint8_t>(ts.kind));
    w.u32(static_cast<std::uint32_t>(ts.k));
    w.u32(static_cast<std::uint32_t>(ts.dim()));
    write_vector(w, ts.standardizer.mean);
    write_vector(w, ts.standardizer.scale);
    write_vector(w, ts.errors);
    if (ts.kind == InvariantKind::Vpn) {
      write_blob(w, serialize(ts.model));
    } else {
      write_vector(w, ts.affine.mean);
      w.f64s(std::span<const double>(ts.affine.directions.data(),
                                     static_cast<std::size_t>(ts.affine.directions.size())));
    }
    FeatureMatrix store;
    store.values = ts.features;
    write_blob(w, encode_bin(store));
  }
  w.u8(det.knn ? 1 : 0);
  if (det.knn) {
    require(det.knn->scales.size() == det.invariants.scales.size(), ErrorKind::InvalidArgument,
            "encode_detector: index and detector disagree on the number of scales");
    for (const auto& ks : det.knn->scales) w.f64(ks.loo_mean);
  }
  Bytes out = w.take();
  append_sha256_trailer(out);
  return out;
}

Detector decode_detector(std::span<const std::uint8_t> bytes) {
  const std::string ctx = "detector file";
  {
    ByteReader probe(bytes, ctx);
    probe.expect_magic(kDetectorMagic);
  }
  const auto payload = verify_sha256_trailer(bytes, ctx);
  ByteReader r(payload, ctx);
  r.expect_magic(kDetectorMagic);
  const std::uint32_t header_len = r.u32();
  const auto header_bytes = r.raw(header_len);
  Detector det;
  try {
    const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    det.config = header.at("config");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, ctx + ": bad JSON header: " + e.what());
  }

  const std::uint32_t scales = r.u32();
  require(scales >= 1, ErrorKind::Format, ctx + ": no scales");
  for (std::uint32_t l = 0; l < scales; ++l) {
    TrainedScale ts;
    const std::uint8_t kind = r.u8();
    require(kind <= 1, ErrorKind::Format, ctx + ": unknown invariant kind");
    ts.kind = static_cast<InvariantKind>(kind);
    ts.k = r.u32();
    const std::size_t dim = r.u32();
    require(ts.k >= 1 && dim >= 1 && ts.k <= dim, ErrorKind::Format, ctx + ": bad K/dim");
    ts.standardizer.mean = read_vector(r, dim);
    ts.standardizer.scale = read_vector(r, dim);
    ts.errors = read_vector(r, ts.k);
    if (ts.kind == InvariantKind::Vpn) {
      ts.model = deserialize(read_blob(r));
      require(ts.model.dim() == dim, ErrorKind::Format, ctx + ": model dimension mismatch");
    } else {
      ts.affine.mean = read_vector(r, dim);
      ts.affine.directions.resize(static_cast<Eigen::Index>(ts.k), static_cast<Eigen::Index>(dim));
      r.f64s(std::span<double>(ts.affine.directions.data(), ts.k * dim));
    }
    ts.features = decode_bin(read_blob(r)).values;
    require(static_cast<std::size_t>(ts.features.cols()) == dim, ErrorKind::Format,
            ctx + ": feature store dimension mismatch");
    det.invariants.scales.push_back(std::move(ts));
  }
  if (r.u8()) {
    KnnIndex index;
    for (const auto& ts : det.invariants.scales) {
      KnnScale ks;
      ks.loo_mean = r.f64();
      ks.features = ts.features;
      ks.k = ts.k;
      index.scales.push_back(std::move(ks));
    }
    det.knn = std::move(index);
  }
  require(r.remaining() == 0, ErrorKind::Format, ctx + ": trailing bytes");
  return det;
}

void save_detector(const std::filesystem::path& path, const Detector& det) {
  write_file(path, encode_detector(det));
}

Detector load_detector(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::Io, "model file not found: " + path.string());
  return decode_detector(read_file(path));
}

std::string detector_hash(const Detector& det) {
  const Bytes b = encode_detector(det);
  const auto digest = sha256(b);
  return to_hex(digest);
}

}  // namespace nlinv
