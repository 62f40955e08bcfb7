#include "nlinv/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "nlinv/baselines.hpp"
#include "nlinv/detector.hpp"
#include "nlinv/error.hpp"
#include "nlinv/parallel.hpp"

namespace nlinv {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorKind::InvalidArgument,
          "auroc: " + std::to_string(scores.size()) + " scores but " +
              std::to_string(labels.size()) + " labels");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto l : labels) {
    require(l <= 1, ErrorKind::InvalidArgument, "auroc: labels must be 0 or 1");
    n_pos += l;
  }
  const std::size_t n_neg = n - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorKind::InvalidArgument,
          "auroc: both classes must be present (" + std::to_string(n_pos) + " positive, " +
              std::to_string(n_neg) + " negative)");
  for (double s : scores) require(!std::isnan(s), ErrorKind::InvalidArgument, "auroc: NaN score");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the mid-rank keeps every rank an integer.
  double pos_rank_sum_x2 = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank_x2 = static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) pos_rank_sum_x2 += rank_x2;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u_x2 = pos_rank_sum_x2 - np * (np + 1.0);
  return u_x2 / (2.0 * np * static_cast<double>(n_neg));
}

double auroc(const Vector& scores, std::span<const std::uint8_t> labels) {
  return auroc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), labels);
}

ToyTask make_toy_task(const ToyTaskConfig& cfg, std::uint64_t seed) {
  auto sample = [&](std::size_t n, std::uint64_t s) {
    if (cfg.shape == "circle") return gen_circle(n, 1.0, cfg.noise, s);
    if (cfg.shape == "ushape") return gen_ushape(n, cfg.noise, s);
    fail(ErrorKind::InvalidArgument, "unknown toy shape '" + cfg.shape + "' (expected circle or ushape)");
  };
  // Distinct streams for train, test inliers and test outliers.
  ToyTask task;
  task.train = sample(cfg.n_train, seed * 3 + 0);
  FeatureMatrix inl = with_label(sample(cfg.n_test, seed * 3 + 1), 0);
  FeatureMatrix out = with_label(gen_box(cfg.n_test, 2, cfg.box_half_width, seed * 3 + 2), 1);
  task.test = concat_rows(inl, out);
  return task;
}

Method parse_method(const std::string& name) {
  if (name == "nlinvs") return Method::NlInvs;
  if (name == "nlinvs-no-bwd") return Method::NlInvsNoBwd;
  if (name == "linear-invariants") return Method::LinearInvariants;
  if (name == "mahaad") return Method::MahaAD;
  if (name == "dn2") return Method::DN2;
  fail(ErrorKind::InvalidArgument,
       "unknown method '" + name + "' (expected nlinvs, nlinvs-no-bwd, linear-invariants, mahaad, dn2)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::NlInvs: return "nlinvs";
    case Method::NlInvsNoBwd: return "nlinvs-no-bwd";
    case Method::LinearInvariants: return "linear-invariants";
    case Method::MahaAD: return "mahaad";
    case Method::DN2: return "dn2";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& name) {
  if (name == "S_inv" || name == "inv") return ScoreKind::Inv;
  if (name == "S_final" || name == "final") return ScoreKind::Final;
  fail(ErrorKind::InvalidArgument, "unknown score '" + name + "' (expected S_inv or S_final)");
}

std::string to_string(ScoreKind s) { return s == ScoreKind::Inv ? "S_inv" : "S_final"; }

void BenchmarkConfig::validate() const {
  scale.validate();
  require(!datasets.empty(), ErrorKind::InvalidArgument, "bench: no datasets");
  require(!seeds.empty(), ErrorKind::InvalidArgument, "bench: no seeds");
  const bool final_ok = method == Method::NlInvs;
  require(score == ScoreKind::Inv || final_ok, ErrorKind::InvalidArgument,
          "bench: method " + to_string(method) + " does not support score S_final");
  for (const auto& d : datasets) {
    require(d.train_files.size() == d.test_files.size(), ErrorKind::InvalidArgument,
            "bench: dataset '" + d.name + "' needs one test file per training file");
  }
}

namespace {

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return p;
  return (base / path).string();
}

}  // namespace

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  BenchmarkConfig cfg;
  try {
    cfg.method = parse_method(j.value("method", std::string("nlinvs")));
    const std::string default_score = cfg.method == Method::NlInvs ? "S_final" : "S_inv";
    cfg.score = parse_score_kind(j.value("score", default_score));
    for (const auto& d : j.at("datasets")) {
      DatasetRef ref;
      if (d.is_string()) {
        ref.name = d.get<std::string>();
      } else {
        ref.name = d.at("name").get<std::string>();
        if (d.contains("path")) ref.path = resolve(base_dir, d["path"].get<std::string>());
        if (d.contains("toy")) {
          const auto& t = d["toy"];
          ToyTaskConfig tc;
          tc.shape = t.value("shape", tc.shape);
          tc.n_train = t.value("n_train", tc.n_train);
          tc.n_test = t.value("n_test", tc.n_test);
          tc.noise = t.value("noise", tc.noise);
          tc.box_half_width = t.value("box", tc.box_half_width);
          ref.toy = tc;
        }
        for (const auto& f : d.value("train", nlohmann::json::array())) {
          ref.train_files.push_back(resolve(base_dir, f.get<std::string>()));
        }
        for (const auto& f : d.value("test", nlohmann::json::array())) {
          ref.test_files.push_back(resolve(base_dir, f.get<std::string>()));
        }
      }
      cfg.datasets.push_back(std::move(ref));
    }
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    cfg.split_seed = j.value("split_seed", cfg.split_seed);
    cfg.scale.p_percent = j.value("p", cfg.scale.p_percent);
    cfg.scale.epochs = j.value("epochs", cfg.scale.epochs);
    cfg.scale.batch_size = j.value("batch", cfg.scale.batch_size);
    cfg.scale.lr_start = j.value("lr", cfg.scale.lr_start);
    cfg.scale.lr_end = j.value("lr_end", cfg.scale.lr_end);
    cfg.scale.blocks = j.value("blocks", cfg.scale.blocks);
    cfg.scale.standardize = j.value("standardize", cfg.scale.standardize);
    if (j.contains("k") && !j["k"].is_null()) cfg.scale.force_k = j["k"].get<std::size_t>();
    cfg.dn2_k = j.value("dn2_k", cfg.dn2_k);
    cfg.registry = resolve(base_dir, j.value("registry", cfg.registry));
    cfg.data_dir = resolve(base_dir, j.value("data_dir", cfg.data_dir));
    if (j.contains("output")) cfg.output = resolve(base_dir, j["output"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("bench config: ") + e.what());
  }
  cfg.scale.backward_loss = cfg.method != Method::NlInvsNoBwd;
  cfg.scale.linear = cfg.method == Method::LinearInvariants;
  cfg.validate();
  return cfg;
}

nlohmann::json BenchmarkConfig::to_json() const {
  nlohmann::json j;
  j["method"] = to_string(method);
  j["score"] = to_string(score);
  j["seeds"] = seeds;
  j["split_seed"] = split_seed;
  j["training"] = nlinv::to_json(scale);
  j["dn2_k"] = dn2_k;
  j["registry"] = registry;
  j["data_dir"] = data_dir;
  j["datasets"] = nlohmann::json::array();
  for (const auto& d : datasets) {
    nlohmann::json dj{{"name", d.name}};
    if (d.path) dj["path"] = *d.path;
    if (d.toy) {
      dj["toy"] = {{"shape", d.toy->shape}, {"n_train", d.toy->n_train}, {"n_test", d.toy->n_test},
                   {"noise", d.toy->noise}, {"box", d.toy->box_half_width}};
    }
    if (!d.train_files.empty()) {
      dj["train"] = d.train_files;
      dj["test"] = d.test_files;
    }
    j["datasets"].push_back(std::move(dj));
  }
  if (output) j["output"] = *output;
  return j;
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["wall_time_s"] = wall_time_s;
  j["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json rj;
    rj["dataset"] = r.dataset;
    rj["per_seed"] = nlohmann::json::array();
    rj["model_hashes"] = nlohmann::json::array();
    for (const auto& s : r.per_seed) {
      rj["per_seed"].push_back({{"seed", s.seed}, {"auc", s.auc}});
      if (!s.model_hash.empty()) rj["model_hashes"].push_back(s.model_hash);
    }
    rj["mean"] = r.mean;
    rj["std"] = r.std;
    rj["wall_time_s"] = r.wall_time_s;
    j["results"].push_back(std::move(rj));
  }
  return j;
}

std::string BenchmarkReport::to_csv() const {
  std::ostringstream out;
  out << "dataset,method,score,seed,auc\n";
  const std::string method = config.value("method", std::string());
  const std::string score = config.value("score", std::string());
  char buf[32];
  for (const auto& r : results) {
    for (const auto& s : r.per_seed) {
      const auto res = std::to_chars(buf, buf + sizeof buf, s.auc);
      out << r.dataset << ',' << method << ',' << score << ',' << s.seed << ','
          << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
    }
  }
  return out.str();
}

PreparedData prepare_dataset(const BenchmarkConfig& cfg, const DatasetRef& ref, std::uint64_t seed) {
  PreparedData out;
  auto take_labels = [&](const FeatureMatrix& test) {
    require(test.has_labels(), ErrorKind::Format, "dataset '" + ref.name + "': test data has no labels");
    out.labels = *test.labels;
  };

  if (ref.toy) {
    const ToyTask task = make_toy_task(*ref.toy, seed);
    out.train.push_back(task.train.values);
    out.test.push_back(task.test.values);
    take_labels(task.test);
    return out;
  }
  if (!ref.train_files.empty()) {
    for (std::size_t l = 0; l < ref.train_files.size(); ++l) {
      out.train.push_back(load_features(ref.train_files[l], false).values);
      const FeatureMatrix test = load_features(ref.test_files[l], true);
      if (l == 0) take_labels(test);
      require(test.has_labels() && *test.labels == out.labels, ErrorKind::Format,
              "dataset '" + ref.name + "': test files disagree on labels");
      out.test.push_back(test.values);
    }
    return out;
  }

  FeatureMatrix full;
  if (ref.path) {
    full = load_features(*ref.path, true);
  } else {
    const auto registry = load_registry(cfg.registry);
    const auto it = registry.find(ref.name);
    require(it != registry.end(), ErrorKind::InvalidArgument,
            "dataset '" + ref.name + "' is not in the registry " + cfg.registry);
    full = load_dataset(it->second, cfg.data_dir);
  }
  const ShallowSplit split = make_shallow_split(full, cfg.split_seed);
  out.train.push_back(split.train.values);
  out.test.push_back(split.test.values);
  take_labels(split.test);
  return out;
}

MethodRun run_method(const BenchmarkConfig& cfg, const PreparedData& data, std::uint64_t seed) {
  MethodRun run;
  switch (cfg.method) {
    case Method::MahaAD: {
      const MahaModel m = MahaModel::fit(data.train, cfg.scale.standardize);
      run.scores = maha_score(m, data.test);
      return run;
    }
    case Method::DN2: {
      const Dn2Model m = Dn2Model::fit(data.train, cfg.dn2_k, cfg.scale.standardize);
      run.scores = dn2_score(m, data.test);
      return run;
    }
    case Method::NlInvs:
    case Method::NlInvsNoBwd:
    case Method::LinearInvariants: {
      ScaleConfig sc = cfg.scale;
      sc.seed = seed;
      sc.backward_loss = cfg.method != Method::NlInvsNoBwd;
      sc.linear = cfg.method == Method::LinearInvariants;
      const bool knn = cfg.score == ScoreKind::Final;
      const Detector det = fit_detector(data.train, sc, knn);
      const ScoreTriple s = score_detector(det, data.test, knn);
      run.scores = knn ? s.s_final : s.s_inv;
      run.model_hash = detector_hash(det);
      return run;
    }
  }
  return run;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  BenchmarkReport report;
  report.config = cfg.to_json();
  for (const auto& ref : cfg.datasets) {
    const auto d0 = Clock::now();
    DatasetResult res;
    res.dataset = ref.name;
    std::optional<PreparedData> shared;
    for (std::uint64_t seed : cfg.seeds) {
      try {
        // Toy tasks draw fresh data per seed; file datasets keep one split.
        if (ref.toy || !shared) shared = prepare_dataset(cfg, ref, seed);
        const MethodRun run = run_method(cfg, *shared, seed);
        res.per_seed.push_back({seed, auroc(run.scores, shared->labels), run.model_hash});
      } catch (const Error& e) {
        throw Error(e.kind(), "dataset '" + ref.name + "', method " + to_string(cfg.method) +
                                  ", seed " + std::to_string(seed) + ": " + e.what());
      }
    }
    double sum = 0.0;
    for (const auto& s : res.per_seed) sum += s.auc;
    res.mean = sum / static_cast<double>(res.per_seed.size());
    double var = 0.0;
    for (const auto& s : res.per_seed) var += (s.auc - res.mean) * (s.auc - res.mean);
    res.std = std::sqrt(var / static_cast<double>(res.per_seed.size()));
    res.wall_time_s = std::chrono::duration<double>(Clock::now() - d0).count();
    report.results.push_back(std::move(res));
  }
  report.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
  return report;
}

std::string LandscapeGrid::to_csv() const {
  std::ostringstream out;
  out << "x,y,loss,auc\n";
  char buf[32];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
  };
  for (const auto& c : cells) {
    put(c.x);
    out << ',';
    put(c.y);
    out << ',';
    put(c.loss);
    out << ',';
    put(c.auc);
    out << '\n';
  }
  return out.str();
}

LandscapeCell evaluate_scale(const TrainedScale& ts, const Matrix& test_raw,
                             std::span<const std::uint8_t> labels) {
  require(ts.kind == InvariantKind::Vpn, ErrorKind::InvalidArgument,
          "landscape: needs a trained VPN scale, not the affine solution");
  TrainedScale probe = ts;
  probe.errors = invariant_errors(probe, probe.features);
  LandscapeCell cell;
  cell.loss = forward_loss(probe.model, probe.features, probe.k) +
              backward_loss(probe.model, probe.features, probe.k);
  cell.auc = auroc(invariant_score_scale(probe, test_raw), labels);
  return cell;
}

LandscapeGrid landscape(const TrainedScale& ts, const Matrix& test_raw,
                        std::span<const std::uint8_t> labels, std::size_t grid_n, double range,
                        std::uint64_t seed) {
  require(grid_n >= 3, ErrorKind::InvalidArgument, "landscape: grid size must be >= 3");
  require(range > 0.0, ErrorKind::InvalidArgument, "landscape: range must be positive");
  require(ts.kind == InvariantKind::Vpn, ErrorKind::InvalidArgument,
          "landscape: needs a trained VPN scale, not the affine solution");

  const std::vector<const Matrix*> params = ts.model.parameters();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto direction = [&] {
    std::vector<Matrix> d;
    for (const Matrix* p : params) {
      Matrix block(p->rows(), p->cols());
      for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = normal(rng);
      const double pn = p->norm();
      const double bn = block.norm();
      if (pn == 0.0 || bn == 0.0) {
        block.setZero();
      } else {
        block *= pn / bn;
      }
      d.push_back(std::move(block));
    }
    return d;
  };
  const std::vector<Matrix> dir_x = direction();
  const std::vector<Matrix> dir_y = direction();

  LandscapeGrid grid;
  grid.grid_n = grid_n;
  grid.range = range;
  grid.cells.resize(grid_n * grid_n);
  const double denom = static_cast<double>(grid_n - 1);
  auto coord = [&](std::size_t i) {
    return range * (2.0 * static_cast<double>(i) - denom) / denom;
  };

  parallel_for(grid.cells.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const double x = coord(c % grid_n);
      const double y = coord(c / grid_n);
      TrainedScale moved = ts;
      auto moved_params = moved.model.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        *moved_params[i] = *params[i] + x * dir_x[i] + y * dir_y[i];
      }
      LandscapeCell cell;
      try {
        cell = evaluate_scale(moved, test_raw, labels);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::InvalidArgument) throw;
        cell.loss = std::numeric_limits<double>::infinity();
        cell.auc = std::numeric_limits<double>::quiet_NaN();
      }
      cell.x = x;
      cell.y = y;
      grid.cells[c] = cell;
    }
  });
  return grid;
}

}  // namespace nlinv
