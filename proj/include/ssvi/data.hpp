#pragma once

// Dataset containers, synthetic generators and file loaders.
//
// IDX layout (all integers big-endian):
//   bytes 0-1  zero
//   byte  2    element type, 0x08 = unsigned byte (the only type accepted)
//   byte  3    number of dimensions n (3 for images, 1 for labels)
//   4 * n      dimension sizes as uint32
//   ...        row-major payload, one byte per element
// Image files therefore start with 00 00 08 03 and label files with 00 00 08 01.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvi/network.hpp"

namespace ssvi {

struct Dataset {
  Matrix features;             // [n x in_dim]
  std::vector<int> labels;     // classification
  Eigen::VectorXd targets;     // regression
  Task task = Task::Classification;
  int num_classes = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  Eigen::Index input_dim() const { return features.cols(); }
  // Throws parse_error on NaN/Inf features or out-of-range labels.
  void validate() const;
  // Rows `idx` as a feature-major batch.
  Batch batch(const std::vector<std::size_t>& idx) const;
  Batch all() const;
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

struct NormStats {
  Vector mean;
  Vector scale;  // standard deviation, 1 where a feature is constant
};

NormStats fit_normalization(const Dataset& train);
void apply_normalization(Dataset& data, const NormStats& stats);

struct SplitDataset {
  Dataset train;
  Dataset test;
  NormStats norm;
};

// Shuffles `all` under `seed`, holds out `n_test` rows, then standardises
// both parts with statistics of the training part only.
SplitDataset split_and_normalize(const Dataset& all, std::size_t n_test, std::uint64_t seed,
                                 bool normalize = true);

// Two interleaved half circles: class 0 on the unit circle around the
// origin (upper half), class 1 on the unit circle around (1, 0.5) (lower
// half). Gaussian noise of the given standard deviation is added.
Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed);

// y = sin(x) + noise with x uniform on [-3, 3].
Dataset gen_sine(std::size_t n, double noise, std::uint64_t seed);

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxTensor read_idx(const std::filesystem::path& path);
IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

// Pairs an image file with a label file. Pixels are scaled to [0, 1] and
// flattened row-major. `limit` > 0 keeps only the first `limit` items.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

struct CsvSchema {
  std::string label_column;
  Task task = Task::Classification;
  std::vector<std::string> feature_columns;  // empty: every other column
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Dataset parse_csv(const std::string& text, const CsvSchema& schema,
                  const std::string& source = "<memory>");

}  // namespace ssvi
