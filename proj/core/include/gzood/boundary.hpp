#pragma once

// Per-class centers and cosine-similarity thresholds in the latent space,
// and the resulting seen/unseen decision.

#include <gzood/data.hpp>
#include <gzood/networks.hpp>

#include <filesystem>
#include <vector>

namespace gzood::boundary {

struct ClassCenter {
  int class_id;
  UnitVector center;
};

struct ClassBoundary {
  int class_id;
  UnitVector center;
  double eta;  // in [-1, 1]
};

struct BoundarySet {
  std::vector<ClassBoundary> boundaries;  // sorted by class_id, ids unique
  double gamma = 0.9;

  void validate() const;
  bool empty() const { return boundaries.empty(); }
  Index dim() const { return boundaries.empty() ? 0 : boundaries.front().center.dim(); }
};

/// Attribute-encoder mean direction for each row of `attributes`.
std::vector<ClassCenter> compute_centers(const Matrix& attributes, const std::vector<int>& class_ids,
                                         const nn::Model& model);

/// Feature-encoder mean directions (n x m). Inference never samples.
Matrix encode_mean_directions(const Matrix& features, const nn::Model& model);

/// The threshold such that ceil(gamma * n) of the similarities are >= it,
/// i.e. the lower order statistic at level 1 - gamma.
double quantile_threshold(std::vector<double> similarities, double gamma);

/// One threshold per center from the training rows of that class.
BoundarySet compute_thresholds(const Matrix& features, const std::vector<int>& labels,
                               const std::vector<ClassCenter>& centers, double gamma, const nn::Model& model);

/// Centers from the seen attributes and thresholds from the train split.
BoundarySet build_boundaries(const data::DatasetBundle& bundle, const nn::Model& model, double gamma);

struct OodDecision {
  int label = 0;               // 1 = seen, 0 = unseen
  double max_similarity = 0;   // max_i cos(z, center_i)
  double margin = 0;           // max_similarity - eta of the nearest class
  int nearest_class = -1;      // ties break to the lowest class_id
};

/// Decision for a latent direction: seen iff max similarity >= eta of its argmax class.
OodDecision decide(const Eigen::Ref<const Vector>& z, const BoundarySet& boundaries);

OodDecision classify_ood(const Vector& feature, const BoundarySet& boundaries, const nn::Model& model);
std::vector<OodDecision> classify_ood(const Matrix& features, const BoundarySet& boundaries, const nn::Model& model);

/// Text table: a `gamma` line, a `dim` line, a header, then one row per class:
/// class_id eta c_1 ... c_m, reals printed with 17 significant digits.
void save_boundaries(const std::filesystem::path& path, const BoundarySet& boundaries);
BoundarySet load_boundaries(const std::filesystem::path& path);

}  // namespace gzood::boundary
