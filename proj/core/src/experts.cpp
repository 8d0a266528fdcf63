#include <gzood/error.hpp>
#include <gzood/experts.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace gzood::experts {

NearestCenterExpert::NearestCenterExpert(std::vector<boundary::ClassCenter> centers, const nn::Model& model)
    : centers_(std::move(centers)), model_(&model) {
  if (centers_.empty()) throw InvalidArgument("unseen expert needs at least one class");
  std::sort(centers_.begin(), centers_.end(),
            [](const boundary::ClassCenter& l, const boundary::ClassCenter& r) { return l.class_id < r.class_id; });
  for (const auto& c : centers_) classes_.push_back(c.class_id);
}

int NearestCenterExpert::predict_latent(const Eigen::Ref<const Vector>& z) const {
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t k = 0; k < centers_.size(); ++k) {
    const double s = z.dot(centers_[k].center.values());
    if (s > best_sim) {
      best_sim = s;
      best = k;
    }
  }
  return centers_[best].class_id;
}

int NearestCenterExpert::predict(Index /*row*/, const Vector& feature) const {
  const Matrix z = boundary::encode_mean_directions(Matrix(feature.transpose()), *model_);
  return predict_latent(z.row(0).transpose());
}

std::unique_ptr<NearestCenterExpert> nearest_center_unseen_expert(const Matrix& unseen_attributes,
                                                                  const std::vector<int>& unseen_ids,
                                                                  const nn::Model& model) {
  return std::make_unique<NearestCenterExpert>(boundary::compute_centers(unseen_attributes, unseen_ids, model), model);
}

FilePredictionExpert FilePredictionExpert::load(const std::filesystem::path& path, const std::vector<int>& unseen_ids,
                                                const std::vector<Index>& required_rows) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "prediction file not found: " + path.string());
  const std::set<int> allowed(unseen_ids.begin(), unseen_ids.end());
  FilePredictionExpert expert;
  expert.classes_.assign(allowed.begin(), allowed.end());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    long long row = 0;
    long long cls = 0;
    if (!(fields >> row >> cls)) {
      throw DataError(DataError::Kind::Malformed,
                      path.string() + ":" + std::to_string(lineno) + ": expected 'test_index, class_id'");
    }
    if (!allowed.count(static_cast<int>(cls))) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": class " + std::to_string(cls) +
                            " is not an unseen class");
    }
    expert.predictions_[static_cast<Index>(row)] = static_cast<int>(cls);
  }
  std::vector<long> missing;
  for (Index r : required_rows) {
    if (!expert.predictions_.count(r)) missing.push_back(static_cast<long>(r));
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "prediction file " << path.string() << " has no prediction for " << missing.size() << " test rows:";
    for (std::size_t k = 0; k < missing.size(); ++k) msg << (k ? ", " : " ") << missing[k];
    throw MissingPrediction(msg.str(), std::move(missing));
  }
  return expert;
}

int FilePredictionExpert::predict(Index row, const Vector& /*feature*/) const {
  const auto it = predictions_.find(row);
  if (it == predictions_.end()) {
    throw MissingPrediction("no external prediction for test row " + std::to_string(row), {static_cast<long>(row)});
  }
  return it->second;
}

std::vector<int> seen_expert_predict(const Matrix& features, const nn::Model& model) {
  const Matrix z = boundary::encode_mean_directions(features, model);
  const Matrix log_probs = nn::classify_latent(model.params.phi_cls, z);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) {
    Index k = 0;
    log_probs.row(i).maxCoeff(&k);
    out.push_back(model.spec.class_ids[static_cast<std::size_t>(k)]);
  }
  return out;
}

int seen_expert_predict(const Vector& feature, const nn::Model& model) {
  return seen_expert_predict(Matrix(feature.transpose()), model).front();
}

std::vector<GZSLPrediction> gzsl_predict(const std::vector<Index>& rows, const Matrix& features,
                                         const boundary::BoundarySet& boundaries, const nn::Model& model,
                                         const UnseenExpert& unseen_expert) {
  if (static_cast<Index>(rows.size()) != features.rows()) throw InvalidArgument("gzsl_predict: rows/features mismatch");
  const Matrix z = boundary::encode_mean_directions(features, model);
  const Matrix log_probs = nn::classify_latent(model.params.phi_cls, z);
  std::vector<GZSLPrediction> out;
  out.reserve(rows.size());
  for (Index i = 0; i < z.rows(); ++i) {
    const auto gate = boundary::decide(z.row(i).transpose(), boundaries);
    GZSLPrediction p;
    p.gate_score = gate.margin;
    if (gate.label == 1) {
      Index k = 0;
      log_probs.row(i).maxCoeff(&k);
      p.route = Route::Seen;
      p.class_id = model.spec.class_ids[static_cast<std::size_t>(k)];
    } else {
      p.route = Route::Unseen;
      p.class_id = unseen_expert.predict(rows[static_cast<std::size_t>(i)], features.row(i).transpose());
    }
    out.push_back(p);
  }
  return out;
}

GZSLPrediction gzsl_predict(Index row, const Vector& feature, const boundary::BoundarySet& boundaries,
                            const nn::Model& model, const UnseenExpert& unseen_expert) {
  return gzsl_predict(std::vector<Index>{row}, Matrix(feature.transpose()), boundaries, model, unseen_expert).front();
}

}  // namespace gzood::experts
