// nlinv: train, score and evaluate non-linear invariant OOD detectors.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlinv/data.hpp"
#include "nlinv/detector.hpp"
#include "nlinv/error.hpp"
#include "nlinv/evaluation.hpp"

namespace fs = std::filesystem;
using namespace nlinv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

/// Flag validation failures are usage errors, not data errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void validate_usage(const ScaleConfig& cfg) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::vector<Matrix> load_scales(const std::vector<std::string>& paths, bool labeled,
                                std::optional<std::vector<std::uint8_t>>* labels = nullptr) {
  std::vector<Matrix> out;
  for (const auto& p : paths) {
    FeatureMatrix fm = load_features(p, labeled);
    if (labels && !*labels && fm.labels) *labels = fm.labels;
    out.push_back(std::move(fm.values));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

std::string scores_csv(const ScoreTriple& s) {
  std::ostringstream out;
  out << "id,S_inv,S_2nn,S_final\n";
  const bool knn = s.s_2nn.size() > 0;
  for (Eigen::Index i = 0; i < s.s_inv.size(); ++i) {
    out << i << ',' << fmt_double(s.s_inv(i)) << ',';
    if (knn) out << fmt_double(s.s_2nn(i)) << ',' << fmt_double(s.s_final(i));
    else out << ',';
    out << '\n';
  }
  return out.str();
}

struct TrainFlags {
  std::vector<std::string> features;
  ScaleConfig cfg;
  std::optional<std::size_t> k;
  bool no_standardize = false;
  bool no_bwd = false;
  bool no_knn = false;
  bool labeled = false;
  bool quiet = false;
  std::string out;
};

void add_training_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--p", f.cfg.p_percent, "Variance percentage defining K per scale")->capture_default_str();
  cmd->add_option("--epochs", f.cfg.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", f.cfg.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", f.cfg.lr_start, "Initial learning rate")->capture_default_str();
  cmd->add_option("--lr-end", f.cfg.lr_end, "Final learning rate")->capture_default_str();
  cmd->add_option("--seed", f.cfg.seed, "Random seed")->capture_default_str();
  cmd->add_option("--blocks", f.cfg.blocks, "Rotation/coupling blocks before the final rotation")
      ->capture_default_str();
  cmd->add_option("--k", f.k, "Force the number of invariants per scale");
  cmd->add_flag("--no-standardize", f.no_standardize, "Skip per-column z-scoring");
  cmd->add_flag("--no-bwd-loss", f.no_bwd, "Train on the forward loss only");
  cmd->add_flag("--linear", f.cfg.linear, "Use closed-form affine (PCA) invariants instead of a VPN");
  cmd->add_flag("--quiet", f.quiet, "Do not print per-epoch losses");
}

ScaleConfig resolve(TrainFlags& f) {
  ScaleConfig cfg = f.cfg;
  cfg.force_k = f.k;
  cfg.standardize = !f.no_standardize;
  cfg.backward_loss = !f.no_bwd;
  validate_usage(cfg);
  return cfg;
}

EpochCallback epoch_printer(bool quiet) {
  if (quiet) return nullptr;
  return [](const EpochStats& s) {
    std::printf("epoch %zu lr %.3e loss_fwd %.6e loss_bwd %.6e\n", s.epoch, s.lr, s.forward_loss,
                s.backward_loss);
    std::fflush(stdout);
  };
}

int cmd_train(TrainFlags& f) {
  const ScaleConfig cfg = resolve(f);
  nlohmann::json echo = to_json(cfg);
  echo["features"] = f.features;
  echo["knn"] = !f.no_knn;
  echo["out"] = f.out;
  std::cout << "# config " << echo.dump() << '\n';

  const std::vector<Matrix> scales = load_scales(f.features, f.labeled);
  const Detector det = fit_detector(scales, cfg, !f.no_knn, epoch_printer(f.quiet));
  save_detector(f.out, det);
  for (std::size_t l = 0; l < det.num_scales(); ++l) {
    const auto& ts = det.invariants.scales[l];
    std::cout << "scale " << (l + 1) << ": D=" << ts.dim() << " K=" << ts.k
              << " kind=" << (ts.kind == InvariantKind::Vpn ? "vpn" : "affine") << '\n';
  }
  std::cout << "wrote " << f.out << " sha256=" << detector_hash(det) << '\n';
  return kExitOk;
}

struct ScoreFlags {
  std::string model;
  std::vector<std::string> features;
  std::string score = "final";
  std::string out;
  bool labeled = false;
};

int cmd_score(const ScoreFlags& f) {
  if (f.score != "inv" && f.score != "final") throw UsageError("--score must be inv or final");
  const Detector det = load_detector(f.model);
  const bool knn = f.score == "final";
  nlohmann::json echo{{"model", f.model}, {"features", f.features}, {"score", f.score}, {"out", f.out},
                      {"training", det.config}};
  std::cout << "# config " << echo.dump() << '\n';
  require(f.features.size() == det.num_scales(), ErrorKind::InvalidArgument,
          "model has " + std::to_string(det.num_scales()) + " scales but " +
              std::to_string(f.features.size()) + " feature files were given");
  const std::vector<Matrix> scales = load_scales(f.features, f.labeled);
  const ScoreTriple s = score_detector(det, scales, knn);
  write_text(f.out, scores_csv(s));
  std::cout << "scored " << s.s_inv.size() << " rows -> " << f.out << '\n';
  return kExitOk;
}

struct EvalFlags {
  std::string scores;
  std::string labels;
  std::string test_with_labels;
  std::string column;
};

std::vector<std::uint8_t> read_label_file(const std::string& path) {
  const FeatureMatrix fm = load_features(path, false);
  if (fm.has_labels()) return *fm.labels;
  require(fm.cols() == 1, ErrorKind::Format, path + ": expected a single label column");
  std::vector<std::uint8_t> out;
  for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
    const double v = fm.values(i, 0);
    require(v == 0.0 || v == 1.0, ErrorKind::Format, path + ": labels must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

int cmd_eval(const EvalFlags& f) {
  if (f.labels.empty() == f.test_with_labels.empty()) {
    throw UsageError("give exactly one of --labels or --test-with-labels");
  }
  const Bytes raw = read_file(f.scores);
  const std::string_view text(reinterpret_cast<const char*>(raw.data()), raw.size());
  const auto header_end = text.find('\n');
  require(header_end != std::string_view::npos, ErrorKind::Parse, f.scores + ": empty file");
  std::vector<std::string> names;
  {
    std::stringstream hs{std::string(text.substr(0, header_end))};
    std::string cell;
    while (std::getline(hs, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      names.push_back(cell);
    }
  }
  std::string column = f.column;
  std::vector<std::vector<std::string>> rows;
  {
    std::stringstream body{std::string(text.substr(header_end + 1))};
    std::string line;
    while (std::getline(body, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      cells.resize(names.size());
      rows.push_back(std::move(cells));
    }
  }
  if (column.empty()) {
    const auto it = std::find(names.begin(), names.end(), "S_final");
    const bool has_final = it != names.end() && !rows.empty() &&
                           !rows[0][static_cast<std::size_t>(it - names.begin())].empty();
    column = has_final ? "S_final" : "S_inv";
  }
  const auto it = std::find(names.begin(), names.end(), column);
  require(it != names.end(), ErrorKind::Format, f.scores + ": no column " + column);
  const auto col = static_cast<std::size_t>(it - names.begin());
  std::vector<double> scores;
  for (const auto& r : rows) {
    double v = 0.0;
    const auto& c = r[col];
    const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
    require(res.ec == std::errc() && !c.empty(), ErrorKind::Parse,
            f.scores + ": bad value '" + c + "' in column " + column);
    scores.push_back(v);
  }
  const std::vector<std::uint8_t> labels =
      f.labels.empty() ? *load_features(f.test_with_labels, true).labels : read_label_file(f.labels);
  const double auc = auroc(scores, labels);
  std::cout << "# config " << nlohmann::json{{"scores", f.scores}, {"column", column}}.dump() << '\n';
  std::cout << "AUC " << fmt_double(auc) << '\n';
  return kExitOk;
}

int cmd_bench(const std::string& config_path, const std::string& out_override) {
  const Bytes raw = read_file(config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, config_path + ": " + e.what());
  }
  BenchmarkConfig cfg;
  try {
    cfg = BenchmarkConfig::from_json(j, fs::path(config_path).parent_path());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) throw UsageError(e.what());
    throw;
  }
  if (!out_override.empty()) cfg.output = out_override;
  std::cout << "# config " << cfg.to_json().dump() << '\n';
  const BenchmarkReport report = run_benchmark(cfg);
  for (const auto& r : report.results) {
    std::printf("%-20s %s/%s AUC %.4f +- %.4f (%zu seeds, %.1fs)\n", r.dataset.c_str(),
                to_string(cfg.method).c_str(), to_string(cfg.score).c_str(), r.mean, r.std,
                r.per_seed.size(), r.wall_time_s);
  }
  if (cfg.output) {
    write_text(*cfg.output, report.to_json().dump(2) + "\n");
    fs::path csv(*cfg.output);
    csv.replace_extension(".csv");
    write_text(csv, report.to_csv());
    std::cout << "wrote " << *cfg.output << " and " << csv.string() << '\n';
  }
  return kExitOk;
}

struct ToyFlags {
  TrainFlags train;
  std::string shape = "circle";
  std::size_t n = 1000;
  std::size_t n_test = 500;
  double noise = 0.05;
  double box = 2.0;
  std::string out = "toy_out";
};

int cmd_toy(ToyFlags& f) {
  if (!f.train.k) f.train.k = 1;
  const ScaleConfig cfg = resolve(f.train);
  ToyTaskConfig tc;
  tc.shape = f.shape;
  tc.n_train = f.n;
  tc.n_test = f.n_test;
  tc.noise = f.noise;
  tc.box_half_width = f.box;
  nlohmann::json echo = to_json(cfg);
  echo["shape"] = tc.shape;
  echo["n"] = tc.n_train;
  echo["n_test"] = tc.n_test;
  echo["noise"] = tc.noise;
  echo["box"] = tc.box_half_width;
  echo["out"] = f.out;
  std::cout << "# config " << echo.dump() << '\n';

  const ToyTask task = make_toy_task(tc, cfg.seed);
  fs::create_directories(f.out);
  const fs::path dir(f.out);
  save_csv(dir / "train.csv", task.train);
  save_csv(dir / "test.csv", task.test);

  const std::vector<Matrix> train{task.train.values};
  const Detector det = fit_detector(train, cfg, true, epoch_printer(f.train.quiet));
  save_detector(dir / "model.nld", det);

  const TrainedScale& ts = det.invariants.scales[0];
  const Matrix x = ts.features;
  FeatureMatrix rep;
  FeatureMatrix rec;
  if (ts.kind == InvariantKind::Vpn) {
    Matrix z = vpn_forward(ts.model, x);
    rep.values = z;
    z.leftCols(static_cast<Eigen::Index>(ts.k)).setZero();
    rec.values = ts.standardizer.invert(vpn_inverse(ts.model, z));
  } else {
    rep.values = ts.invariants(x);
    // Remove the invariant components: f - W^T W (f - mu).
    const Matrix centered = x.rowwise() - ts.affine.mean.transpose();
    rec.values = ts.standardizer.invert(x - centered * ts.affine.directions.transpose() * ts.affine.directions);
  }
  for (Eigen::Index c = 0; c < rep.values.cols(); ++c) rep.column_names.push_back("z" + std::to_string(c + 1));
  rec.column_names = {"x", "y"};
  save_csv(dir / "representation.csv", rep);
  save_csv(dir / "reconstruction.csv", rec);

  const ScoreTriple s = score_detector(det, std::vector<Matrix>{task.test.values}, true);
  write_text(dir / "scores.csv", scores_csv(s));
  std::printf("AUC S_inv %.4f S_final %.4f\n", auroc(s.s_inv, *task.test.labels),
              auroc(s.s_final, *task.test.labels));
  std::cout << "wrote train.csv test.csv representation.csv reconstruction.csv scores.csv model.nld to "
            << f.out << '\n';
  return kExitOk;
}

struct LandscapeFlags {
  std::string model;
  std::string test;
  std::size_t grid = 25;
  double range = 1.0;
  std::uint64_t seed = 0;
  std::size_t scale = 1;
  std::string out = "landscape.csv";
};

int cmd_landscape(const LandscapeFlags& f) {
  if (f.grid < 3) throw UsageError("--grid must be >= 3");
  const Detector det = load_detector(f.model);
  require(f.scale >= 1 && f.scale <= det.num_scales(), ErrorKind::InvalidArgument,
          "--scale out of range (model has " + std::to_string(det.num_scales()) + " scales)");
  std::cout << "# config "
            << nlohmann::json{{"model", f.model}, {"test", f.test}, {"grid", f.grid}, {"range", f.range},
                              {"seed", f.seed}, {"scale", f.scale}, {"out", f.out}}
                   .dump()
            << '\n';
  const FeatureMatrix test = load_features(f.test, true);
  require(test.has_labels(), ErrorKind::Format, f.test + ": landscape needs labelled test data");
  const TrainedScale& ts = det.invariants.scales[f.scale - 1];
  const LandscapeGrid grid = landscape(ts, test.values, *test.labels, f.grid, f.range, f.seed);
  write_text(f.out, grid.to_csv());
  std::cout << "wrote " << grid.cells.size() << " cells to " << f.out << '\n';
  return kExitOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Numeric:
    case ErrorKind::TrainingDiverged:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

void report_error(bool as_json, const std::string& kind, const std::string& message) {
  if (as_json) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
  } else {
    std::cerr << "error (" << kind << "): " << message << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-linear invariant out-of-distribution detection"};
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json", json_errors, "Print errors to stderr as JSON");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train a detector on per-scale training features");
  train_cmd->add_option("--features", train.features, "Feature file per scale (CSV or NLFM1)")
      ->required()
      ->expected(1, -1);
  add_training_flags(train_cmd, train);
  train_cmd->add_flag("--no-knn", train.no_knn, "Skip the 2-NN index (S_inv only)");
  train_cmd->add_flag("--labeled", train.labeled, "CSV inputs carry a trailing label column");
  train_cmd->add_option("--out", train.out, "Detector file to write")->required();

  ScoreFlags score;
  auto* score_cmd = app.add_subcommand("score", "Score samples with a trained detector");
  score_cmd->add_option("--model", score.model, "Detector file")->required();
  score_cmd->add_option("--features", score.features, "Feature file per scale")->required()->expected(1, -1);
  score_cmd->add_option("--score", score.score, "inv or final")->capture_default_str();
  score_cmd->add_option("--out", score.out, "Output CSV (id,S_inv,S_2nn,S_final)")->required();
  score_cmd->add_flag("--labeled", score.labeled, "CSV inputs carry a trailing label column");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "AUROC of a score column against labels");
  eval_cmd->add_option("--scores", eval.scores, "Scores CSV from `score`")->required();
  eval_cmd->add_option("--labels", eval.labels, "File with one 0/1 label per row");
  eval_cmd->add_option("--test-with-labels", eval.test_with_labels, "Labelled feature file");
  eval_cmd->add_option("--column", eval.column, "Score column (default S_final if present)");

  std::string bench_config, bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark/ablation configuration");
  bench_cmd->add_option("--config", bench_config, "Benchmark JSON")->required();
  bench_cmd->add_option("--out", bench_out, "Report JSON (a CSV is written next to it)");

  ToyFlags toy;
  auto* toy_cmd = app.add_subcommand("toy", "Train on a 2-D toy problem and dump its representations");
  toy_cmd->add_option("--shape", toy.shape, "circle or ushape")->capture_default_str();
  toy_cmd->add_option("--n", toy.n, "Training samples")->capture_default_str();
  toy_cmd->add_option("--n-test", toy.n_test, "Test inliers (and as many box outliers)")->capture_default_str();
  toy_cmd->add_option("--noise", toy.noise, "Noise standard deviation")->capture_default_str();
  toy_cmd->add_option("--box", toy.box, "Half width of the outlier box")->capture_default_str();
  toy_cmd->add_option("--out", toy.out, "Output directory")->capture_default_str();
  add_training_flags(toy_cmd, toy.train);

  LandscapeFlags land;
  auto* land_cmd = app.add_subcommand("landscape", "Loss/AUC landscape along two random directions");
  land_cmd->add_option("--model", land.model, "Detector file")->required();
  land_cmd->add_option("--test", land.test, "Labelled test features")->required();
  land_cmd->add_option("--grid", land.grid, "Grid points per axis")->capture_default_str();
  land_cmd->add_option("--range", land.range, "Grid extent")->capture_default_str();
  land_cmd->add_option("--seed", land.seed, "Direction seed")->capture_default_str();
  land_cmd->add_option("--scale", land.scale, "Scale to perturb (1-based)")->capture_default_str();
  land_cmd->add_option("--out", land.out, "Grid CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    if (json_errors) {
      report_error(true, "usage", e.what());
      return kExitUsage;
    }
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*score_cmd) return cmd_score(score);
    if (*eval_cmd) return cmd_eval(eval);
    if (*bench_cmd) return cmd_bench(bench_config, bench_out);
    if (*toy_cmd) return cmd_toy(toy);
    if (*land_cmd) return cmd_landscape(land);
  } catch (const UsageError& e) {
    report_error(json_errors, "usage", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    report_error(json_errors, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error(json_errors, "internal", e.what());
    return kExitData;
  }
  return kExitUsage;
}
