#pragma once

// Hard-gated GZSL prediction: the boundary gate sends a sample to exactly one
// of a seen expert (feature encoder + latent softmax) or an unseen expert.

#include <gzood/boundary.hpp>
#include <gzood/networks.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <vector>

namespace gzood::experts {

/// Classifier over the unseen classes only.
class UnseenExpert {
 public:
  virtual ~UnseenExpert() = default;

  /// `row` is the bundle row index of the test sample; `feature` its feature vector.
  virtual int predict(Index row, const Vector& feature) const = 0;
  virtual const std::vector<int>& classes() const = 0;
};

/// Nearest unseen center (attribute-encoder mean direction) by cosine
/// similarity of the feature's latent mean direction; ties go to the lowest id.
class NearestCenterExpert final : public UnseenExpert {
 public:
  NearestCenterExpert(std::vector<boundary::ClassCenter> centers, const nn::Model& model);

  int predict(Index row, const Vector& feature) const override;
  int predict_latent(const Eigen::Ref<const Vector>& z) const;
  const std::vector<int>& classes() const override { return classes_; }

 private:
  std::vector<boundary::ClassCenter> centers_;  // sorted by class_id
  std::vector<int> classes_;
  const nn::Model* model_;
};

std::unique_ptr<NearestCenterExpert> nearest_center_unseen_expert(const Matrix& unseen_attributes,
                                                                  const std::vector<int>& unseen_ids,
                                                                  const nn::Model& model);

/// Predictions of an external expert, read from text lines "test_index, class_id".
class FilePredictionExpert final : public UnseenExpert {
 public:
  /// Throws MissingPrediction listing every row of `required_rows` without a
  /// prediction, and InvalidArgument for a class outside `unseen_ids`.
  static FilePredictionExpert load(const std::filesystem::path& path, const std::vector<int>& unseen_ids,
                                   const std::vector<Index>& required_rows);

  int predict(Index row, const Vector& feature) const override;
  const std::vector<int>& classes() const override { return classes_; }

 private:
  std::map<Index, int> predictions_;
  std::vector<int> classes_;
};

int seen_expert_predict(const Vector& feature, const nn::Model& model);
std::vector<int> seen_expert_predict(const Matrix& features, const nn::Model& model);

enum class Route { Seen, Unseen };

struct GZSLPrediction {
  int class_id = -1;
  Route route = Route::Unseen;
  double gate_score = 0.0;  // margin from the gate
};

GZSLPrediction gzsl_predict(Index row, const Vector& feature, const boundary::BoundarySet& boundaries,
                            const nn::Model& model, const UnseenExpert& unseen_expert);

/// Batched form; row k of `features` is bundle row `rows[k]`.
std::vector<GZSLPrediction> gzsl_predict(const std::vector<Index>& rows, const Matrix& features,
                                         const boundary::BoundarySet& boundaries, const nn::Model& model,
                                         const UnseenExpert& unseen_expert);

}  // namespace gzood::experts
