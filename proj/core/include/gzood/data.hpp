#pragma once

// GZSL dataset bundles.
//
// On disk a bundle is a directory holding `manifest.txt` (key = value lines)
// and one raw array per field: little-endian float32 row-major matrices for
// features and class attributes, little-endian int64 vectors for labels,
// class sets and split indices. See README.md for the full key list.

#include <gzood/types.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gzood::data {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DatasetBundle {
  FloatMatrix features;               // n x feature_dim
  std::vector<std::int64_t> labels;   // n, values index rows of `attributes`
  FloatMatrix attributes;             // num_classes x attribute_dim
  std::vector<std::int64_t> seen_classes;
  std::vector<std::int64_t> unseen_classes;
  std::vector<std::int64_t> train_idx;
  std::vector<std::int64_t> test_seen_idx;
  std::vector<std::int64_t> test_unseen_idx;

  Index num_samples() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
  Index num_classes() const { return attributes.rows(); }
  Index attribute_dim() const { return attributes.cols(); }

  /// Throws DataError naming the first violated invariant.
  void validate() const;

  /// Selected feature rows as double precision.
  Matrix feature_rows(const std::vector<std::int64_t>& rows) const;
  /// Attribute rows for the given class ids.
  Matrix attribute_rows(const std::vector<std::int64_t>& class_ids) const;
  std::vector<int> label_rows(const std::vector<std::int64_t>& rows) const;
};

DatasetBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);

struct SyntheticSpec {
  int n_seen = 8;
  int n_unseen = 4;
  int attr_dim = 16;
  int feat_dim = 64;
  int samples_per_class = 100;
  double noise_scale = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Class attributes uniform on the unit sphere; a sample of class c is
/// L (a_c + noise_scale * xi) + offset with xi ~ N(0, I) and a fixed random
/// lift L (feat_dim x attr_dim). Seen classes are ids [0, n_seen). The first
/// 80% of each seen class trains, the rest is test_seen; every unseen sample
/// is test_unseen. Values are rounded to float32 like any stored bundle.
DatasetBundle make_synthetic(const SyntheticSpec& spec);

/// Per-dimension standardization with statistics from the train rows only.
DatasetBundle standardize(const DatasetBundle& bundle);

}  // namespace gzood::data
