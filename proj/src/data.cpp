#include "ssvi/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include "ssvi/error.hpp"
#include "ssvi/random.hpp"

namespace ssvi {

namespace {

std::string hex_bytes(const std::vector<std::uint8_t>& bytes, std::size_t from, std::size_t n) {
  std::ostringstream os;
  for (std::size_t i = from; i < from + n && i < bytes.size(); ++i) {
    if (i != from) os << ' ';
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(bytes[i]);
  }
  return os.str();
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_number(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace

void Dataset::validate() const {
  if (!features.allFinite()) throw Error(Errc::parse_error, "features contain NaN or Inf");
  if (task == Task::Classification) {
    if (labels.size() != size()) throw Error(Errc::dimension_mismatch, "one label per row required");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw Error(Errc::parse_error, "label " + std::to_string(y) + " outside [0, " +
                                           std::to_string(num_classes) + ")");
  } else {
    if (static_cast<std::size_t>(targets.size()) != size())
      throw Error(Errc::dimension_mismatch, "one target per row required");
    if (!targets.allFinite()) throw Error(Errc::parse_error, "targets contain NaN or Inf");
  }
}

Batch Dataset::batch(const std::vector<std::size_t>& idx) const {
  Batch b;
  b.x.resize(features.cols(), static_cast<Eigen::Index>(idx.size()));
  if (task == Task::Classification)
    b.labels.reserve(idx.size());
  else
    b.values.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(idx[j]);
    b.x.col(static_cast<Eigen::Index>(j)) = features.row(row).transpose();
    if (task == Task::Classification)
      b.labels.push_back(labels[idx[j]]);
    else
      b.values(static_cast<Eigen::Index>(j)) = targets(row);
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return batch(idx);
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
  if (task == Task::Regression) out.targets.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(idx[j]);
    out.features.row(static_cast<Eigen::Index>(j)) = features.row(row);
    if (task == Task::Classification)
      out.labels.push_back(labels[idx[j]]);
    else
      out.targets(static_cast<Eigen::Index>(j)) = targets(row);
  }
  return out;
}

NormStats fit_normalization(const Dataset& train) {
  NormStats s;
  const auto n = static_cast<double>(train.size());
  s.mean = train.features.colwise().mean().transpose();
  s.scale.resize(train.features.cols());
  for (Eigen::Index c = 0; c < train.features.cols(); ++c) {
    const double var = (train.features.col(c).array() - s.mean(c)).square().sum() / n;
    s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

void apply_normalization(Dataset& data, const NormStats& stats) {
  if (stats.mean.size() != data.features.cols())
    throw Error(Errc::dimension_mismatch, "normalization statistics do not match feature width");
  data.features = (data.features.rowwise() - stats.mean.transpose()).array().rowwise() /
                  stats.scale.transpose().array();
}

SplitDataset split_and_normalize(const Dataset& all, std::size_t n_test, std::uint64_t seed,
                                 bool normalize) {
  if (n_test >= all.size())
    throw Error(Errc::invalid_config, "test split must leave at least one training row");
  std::vector<std::size_t> perm(all.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  SplitDataset out{all.subset(train_idx), all.subset(test_idx), {}};
  if (normalize) {
    out.norm = fit_normalization(out.train);
  } else {
    out.norm.mean = Vector::Zero(all.input_dim());
    out.norm.scale = Vector::Ones(all.input_dim());
  }
  apply_normalization(out.train, out.norm);
  apply_normalization(out.test, out.norm);
  return out;
}

Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw Error(Errc::invalid_config, "two-moons needs n >= 2");
  if (!(noise >= 0.0)) throw Error(Errc::invalid_config, "noise must be nonnegative");
  const std::size_t n_outer = n - n / 2;
  const std::size_t n_inner = n / 2;
  Dataset d;
  d.task = Task::Classification;
  d.num_classes = 2;
  d.features.resize(static_cast<Eigen::Index>(n), 2);
  d.labels.resize(n);
  auto angle = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0
                      : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = angle(i, n_outer);
    d.features.row(static_cast<Eigen::Index>(i)) << std::cos(t), std::sin(t);
    d.labels[i] = 0;
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = angle(i, n_inner);
    d.features.row(static_cast<Eigen::Index>(n_outer + i)) << 1.0 - std::cos(t),
        0.5 - std::sin(t);
    d.labels[n_outer + i] = 1;
  }

  Rng rng(seed);
  if (noise > 0.0) d.features += noise * standard_normal(d.features.rows(), 2, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return d.subset(perm);
}

Dataset gen_sine(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::invalid_config, "sine regression needs n >= 1");
  Dataset d;
  d.task = Task::Regression;
  d.features.resize(static_cast<Eigen::Index>(n), 1);
  d.targets.resize(static_cast<Eigen::Index>(n));
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = unif(rng);
    d.features(static_cast<Eigen::Index>(i), 0) = x;
    d.targets(static_cast<Eigen::Index>(i)) = std::sin(x) + noise * normal(rng);
  }
  return d;
}

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < 4) {
    throw Error(Errc::truncated_file, source + ": " + std::to_string(bytes.size()) +
                                          " bytes, need a 4-byte magic at offset 0");
  }
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 || (bytes[3] != 1 && bytes[3] != 3)) {
    throw Error(Errc::bad_magic, source + ": magic bytes at offset 0 are [" +
                                     hex_bytes(bytes, 0, 4) +
                                     "], expected [00 00 08 03] or [00 00 08 01]");
  }
  IdxTensor t;
  const std::size_t ndims = bytes[3];
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw Error(Errc::truncated_file, source + ": dimension table ends at offset " +
                                          std::to_string(bytes.size()) + ", expected " +
                                          std::to_string(header));
  }
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    const std::size_t o = 4 + 4 * i;
    const std::uint32_t dim = (std::uint32_t{bytes[o]} << 24) | (std::uint32_t{bytes[o + 1]} << 16) |
                              (std::uint32_t{bytes[o + 2]} << 8) | std::uint32_t{bytes[o + 3]};
    t.dims.push_back(dim);
    total *= dim;
  }
  if (bytes.size() < header + total) {
    throw Error(Errc::truncated_file, source + ": payload of " + std::to_string(total) +
                                          " bytes starting at offset " + std::to_string(header) +
                                          " is cut off at offset " + std::to_string(bytes.size()));
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                bytes.begin() + static_cast<std::ptrdiff_t>(header + total));
  return t;
}

IdxTensor read_idx(const std::filesystem::path& path) { return parse_idx(slurp(path), path.string()); }

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  const IdxTensor img = read_idx(images);
  const IdxTensor lab = read_idx(labels);
  if (img.dims.size() != 3)
    throw Error(Errc::dimension_mismatch, images.string() + ": expected a 3-d image tensor");
  if (lab.dims.size() != 1)
    throw Error(Errc::dimension_mismatch, labels.string() + ": expected a 1-d label vector");
  if (img.dims[0] != lab.dims[0]) {
    throw Error(Errc::dimension_mismatch, "image count " + std::to_string(img.dims[0]) +
                                              " differs from label count " +
                                              std::to_string(lab.dims[0]));
  }
  std::size_t n = img.dims[0];
  if (limit > 0) n = std::min(n, limit);
  const std::size_t pixels = std::size_t{img.dims[1]} * img.dims[2];

  Dataset d;
  d.task = Task::Classification;
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  d.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          static_cast<double>(img.data[i * pixels + p]) / 255.0;
    d.labels[i] = lab.data[i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = max_label + 1;
  return d;
}

Dataset parse_csv(const std::string& text, const CsvSchema& schema, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      for (auto cell : split_commas(line)) header.emplace_back(cell);
      break;
    }
  }
  if (header.empty()) throw Error(Errc::schema_error, source + ": missing header row");

  auto column_of = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : std::distance(header.begin(), it);
  };
  const std::ptrdiff_t label_col = column_of(schema.label_column);
  if (label_col < 0)
    throw Error(Errc::schema_error, source + ": label column '" + schema.label_column +
                                        "' not in header");
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (static_cast<std::ptrdiff_t>(c) != label_col) feature_cols.push_back(c);
  } else {
    for (const auto& name : schema.feature_columns) {
      const std::ptrdiff_t c = column_of(name);
      if (c < 0) throw Error(Errc::schema_error, source + ": feature column '" + name + "' not in header");
      feature_cols.push_back(static_cast<std::size_t>(c));
    }
  }
  if (feature_cols.empty()) throw Error(Errc::schema_error, source + ": no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> label_values;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw Error(Errc::parse_error, source + ": line " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " cells, header has " +
                                         std::to_string(header.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const bool used = static_cast<std::ptrdiff_t>(c) == label_col ||
                        std::find(feature_cols.begin(), feature_cols.end(), c) != feature_cols.end();
      if (used && !parse_number(cells[c], v)) {
        throw Error(Errc::parse_error, source + ": line " + std::to_string(line_no) +
                                           ", column " + std::to_string(c + 1) + " ('" +
                                           header[c] + "'): '" + std::string(cells[c]) +
                                           "' is not a finite number");
      }
      row.push_back(v);
    }
    label_values.push_back(row[static_cast<std::size_t>(label_col)]);
    std::vector<double> feats;
    for (std::size_t c : feature_cols) feats.push_back(row[c]);
    rows.push_back(std::move(feats));
  }

  Dataset d;
  d.task = schema.task;
  d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < feature_cols.size(); ++c)
      d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  if (schema.task == Task::Classification) {
    int max_label = -1;
    for (std::size_t r = 0; r < label_values.size(); ++r) {
      const double v = label_values[r];
      if (v < 0.0 || v != std::floor(v)) {
        throw Error(Errc::parse_error, source + ": data row " + std::to_string(r + 1) +
                                           " has non-integer class label " + std::to_string(v));
      }
      d.labels.push_back(static_cast<int>(v));
      max_label = std::max(max_label, d.labels.back());
    }
    d.num_classes = max_label + 1;
  } else {
    d.targets = Eigen::Map<const Eigen::VectorXd>(label_values.data(),
                                                   static_cast<Eigen::Index>(label_values.size()));
  }
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const auto bytes = slurp(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()), schema, path.string());
}

}  // namespace ssvi
