#include "nlinv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "nlinv/error.hpp"

namespace nlinv {

namespace {

constexpr std::string_view kMatrixMagic{"NLFM1\0", 6};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

std::optional<std::uint8_t> parse_label(std::string_view cell) {
  cell = trim(cell);
  if (cell == "0" || cell == "n") return 0;
  if (cell == "1" || cell == "o") return 1;
  if (auto v = parse_number(cell)) {
    if (*v == 0.0) return 0;
    if (*v == 1.0) return 1;
  }
  return std::nullopt;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

}  // namespace

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  out.column_names = column_names;
  if (labels) out.labels.emplace();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
    if (labels) out.labels->push_back((*labels)[rows[i]]);
  }
  return out;
}

FeatureMatrix parse_csv(std::string_view text, bool has_label_column, const std::string& context) {
  std::vector<double> data;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> header;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool first = true;

  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    const auto cells = split_line(line);
    const std::size_t n_features = cells.size() - (has_label_column ? 1 : 0);
    require(!has_label_column || cells.size() >= 2, ErrorKind::Parse,
            context + ": line " + std::to_string(line_no) + " has no feature columns");

    if (first) {
      first = false;
      const bool numeric = std::all_of(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(n_features),
                                       [](std::string_view c) { return parse_number(c).has_value(); });
      width = n_features;
      if (!numeric) {
        for (std::size_t c = 0; c < n_features; ++c) header.emplace_back(trim(cells[c]));
        continue;
      }
    }
    require(n_features == width, ErrorKind::Parse,
            context + ": line " + std::to_string(line_no) + " has " + std::to_string(n_features) +
                " feature columns, expected " + std::to_string(width));
    for (std::size_t c = 0; c < n_features; ++c) {
      const auto v = parse_number(cells[c]);
      require(v.has_value(), ErrorKind::Parse,
              context + ": line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                  ": not a number '" + std::string(trim(cells[c])) + "'");
      data.push_back(*v);
    }
    if (has_label_column) {
      const auto l = parse_label(cells.back());
      require(l.has_value(), ErrorKind::Parse,
              context + ": line " + std::to_string(line_no) + ", column " +
                  std::to_string(cells.size()) + ": bad label '" +
                  std::string(trim(cells.back())) + "' (expected 0/1 or n/o)");
      labels.push_back(*l);
    }
    ++rows;
  }

  FeatureMatrix fm;
  fm.values = Eigen::Map<Matrix>(data.data(), static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(width));
  fm.column_names = std::move(header);
  if (has_label_column) fm.labels = std::move(labels);
  return fm;
}

FeatureMatrix load_csv(const std::filesystem::path& path, bool has_label_column) {
  const Bytes raw = read_file(path);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()),
                   has_label_column, path.string());
}

void save_csv(const std::filesystem::path& path, const FeatureMatrix& fm) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  char buf[32];
  if (!fm.column_names.empty()) {
    for (std::size_t c = 0; c < fm.column_names.size(); ++c) {
      out << (c ? "," : "") << fm.column_names[c];
    }
    if (fm.labels) out << ",label";
    out << '\n';
  }
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    for (std::size_t c = 0; c < fm.cols(); ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf,
                                     fm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      if (c) out << ',';
      out.write(buf, res.ptr - buf);
    }
    if (fm.labels) out << ',' << static_cast<int>((*fm.labels)[r]);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

Bytes encode_bin(const FeatureMatrix& fm) {
  ByteWriter w;
  w.raw(kMatrixMagic);
  w.u32(static_cast<std::uint32_t>(fm.rows()));
  w.u32(static_cast<std::uint32_t>(fm.cols()));
  w.u8(fm.labels ? 1 : 0);
  w.f64s(std::span<const double>(fm.values.data(), static_cast<std::size_t>(fm.values.size())));
  if (fm.labels) w.raw(*fm.labels);
  return w.take();
}

FeatureMatrix decode_bin(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "feature matrix");
  r.expect_magic(kMatrixMagic);
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  const std::uint8_t has_labels = r.u8();
  require(has_labels <= 1, ErrorKind::Format, "feature matrix: bad label flag");
  const std::size_t expected = static_cast<std::size_t>(rows) * cols * 8 + (has_labels ? rows : 0);
  require(r.remaining() == expected, ErrorKind::Format,
          "feature matrix: size mismatch, header says " + std::to_string(rows) + "x" +
              std::to_string(cols) + " (" + std::to_string(expected) + " payload bytes) but " +
              std::to_string(r.remaining()) + " remain");
  FeatureMatrix fm;
  fm.values.resize(rows, cols);
  r.f64s(std::span<double>(fm.values.data(), static_cast<std::size_t>(fm.values.size())));
  if (has_labels) {
    const auto raw = r.raw(rows);
    fm.labels.emplace(raw.begin(), raw.end());
    for (auto l : *fm.labels) require(l <= 1, ErrorKind::Format, "feature matrix: label not in {0,1}");
  }
  return fm;
}

FeatureMatrix load_bin(const std::filesystem::path& path) { return decode_bin(read_file(path)); }

void save_bin(const std::filesystem::path& path, const FeatureMatrix& fm) {
  write_file(path, encode_bin(fm));
}

FeatureMatrix load_features(const std::filesystem::path& path, bool csv_has_label_column) {
  const Bytes raw = read_file(path);
  if (raw.size() >= kMatrixMagic.size() &&
      std::equal(kMatrixMagic.begin(), kMatrixMagic.end(), raw.begin(),
                 [](char c, std::uint8_t b) { return static_cast<std::uint8_t>(c) == b; })) {
    return decode_bin(raw);
  }
  return parse_csv(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()),
                   csv_has_label_column, path.string());
}

FeatureMatrix gen_circle(std::size_t n, double radius, double noise_sigma, std::uint64_t seed) {
  require(noise_sigma >= 0.0, ErrorKind::InvalidArgument, "gen_circle: noise sigma must be >= 0");
  require(n >= 1, ErrorKind::InvalidArgument, "gen_circle: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
    const double t = angle(rng);
    const double r = radius + noise_sigma * noise(rng);
    fm.values(i, 0) = r * std::cos(t);
    fm.values(i, 1) = r * std::sin(t);
  }
  return fm;
}

FeatureMatrix gen_ushape(std::size_t n, double noise_sigma, std::uint64_t seed) {
  require(noise_sigma >= 0.0, ErrorKind::InvalidArgument, "gen_ushape: noise sigma must be >= 0");
  require(n >= 1, ErrorKind::InvalidArgument, "gen_ushape: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(std::numbers::pi / 6.0, 11.0 * std::numbers::pi / 6.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
    const double t = angle(rng);
    fm.values(i, 0) = std::cos(t) + noise_sigma * noise(rng);
    fm.values(i, 1) = std::sin(t) + noise_sigma * noise(rng);
  }
  return fm;
}

FeatureMatrix gen_box(std::size_t n, std::size_t dim, double half_width, std::uint64_t seed) {
  require(half_width > 0.0 && dim >= 1, ErrorKind::InvalidArgument,
          "gen_box: need half_width > 0 and dim >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < fm.values.size(); ++i) fm.values.data()[i] = u(rng);
  return fm;
}

FeatureMatrix concat_rows(const FeatureMatrix& a, const FeatureMatrix& b) {
  require(a.cols() == b.cols(), ErrorKind::InvalidArgument,
          "concat_rows: column counts differ (" + std::to_string(a.cols()) + " vs " +
              std::to_string(b.cols()) + ")");
  FeatureMatrix out;
  out.values.resize(a.values.rows() + b.values.rows(), a.values.cols());
  out.values << a.values, b.values;
  out.column_names = a.column_names;
  if (a.labels && b.labels) {
    out.labels = *a.labels;
    out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
  }
  return out;
}

FeatureMatrix with_label(FeatureMatrix fm, std::uint8_t label) {
  fm.labels = std::vector<std::uint8_t>(fm.rows(), label);
  return fm;
}

ShallowSplit make_shallow_split(const FeatureMatrix& full, std::uint64_t seed) {
  require(full.has_labels(), ErrorKind::InvalidArgument, "make_shallow_split: dataset has no labels");
  std::vector<std::size_t> inliers, outliers;
  for (std::size_t i = 0; i < full.rows(); ++i) {
    ((*full.labels)[i] ? outliers : inliers).push_back(i);
  }
  require(!outliers.empty(), ErrorKind::InvalidArgument, "make_shallow_split: dataset has no outliers");
  require(inliers.size() >= outliers.size() + 2, ErrorKind::InsufficientData,
          "make_shallow_split: need at least " + std::to_string(outliers.size() + 2) +
              " inliers to hold out " + std::to_string(outliers.size()) + ", have " +
              std::to_string(inliers.size()));

  std::vector<std::size_t> shuffled = inliers;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<std::size_t> held(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(outliers.size()));
  std::vector<std::size_t> train(shuffled.begin() + static_cast<std::ptrdiff_t>(outliers.size()), shuffled.end());
  std::sort(train.begin(), train.end());

  std::vector<std::size_t> test = held;
  test.insert(test.end(), outliers.begin(), outliers.end());
  std::sort(test.begin(), test.end());

  ShallowSplit split;
  split.train = full.select_rows(train);
  split.train.labels.reset();
  split.test = full.select_rows(test);
  split.train_rows = std::move(train);
  split.test_rows = std::move(test);
  return split;
}

Standardizer Standardizer::fit(const Matrix& x) {
  require(x.rows() >= 1, ErrorKind::InsufficientData, "standardize_fit: empty matrix");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - s.mean.transpose();
  s.scale = (centered.colwise().squaredNorm() / static_cast<double>(x.rows()))
                .transpose()
                .cwiseSqrt()
                .cwiseMax(kMinScale);
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  return Standardizer{Vector::Zero(static_cast<Eigen::Index>(dim)),
                      Vector::Ones(static_cast<Eigen::Index>(dim))};
}

Matrix Standardizer::apply(const Matrix& x) const {
  require(x.cols() == mean.size(), ErrorKind::InvalidArgument,
          "standardize_apply: expected " + std::to_string(mean.size()) + " columns, got " +
              std::to_string(x.cols()));
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Matrix Standardizer::invert(const Matrix& x) const {
  require(x.cols() == mean.size(), ErrorKind::InvalidArgument, "standardize_invert: column mismatch");
  return (x.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
}

std::map<std::string, DatasetEntry> load_registry(const std::filesystem::path& path) {
  const Bytes raw = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  std::map<std::string, DatasetEntry> out;
  try {
    for (const auto& [name, fields] : j.at("datasets").items()) {
      DatasetEntry e;
      e.name = name;
      e.file = fields.at("file").get<std::string>();
      e.train_rows = fields.at("train_rows").get<std::size_t>();
      e.cols = fields.at("cols").get<std::size_t>();
      out.emplace(name, std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return out;
}

FeatureMatrix load_dataset(const DatasetEntry& entry, const std::filesystem::path& data_dir) {
  const auto path = data_dir / entry.file;
  require(std::filesystem::exists(path), ErrorKind::Io,
          "dataset '" + entry.name + "' not found at " + path.string());
  FeatureMatrix fm = load_features(path, true);
  require(fm.has_labels(), ErrorKind::Format, "dataset '" + entry.name + "' has no labels");
  require(fm.cols() == entry.cols, ErrorKind::Format,
          "dataset '" + entry.name + "': expected " + std::to_string(entry.cols) + " columns, got " +
              std::to_string(fm.cols()));
  return fm;
}

}  // namespace nlinv
