#include <gzood/boundary.hpp>
#include <gzood/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gzood::boundary {

void BoundarySet::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  std::set<int> ids;
  for (const auto& b : boundaries) {
    if (!ids.insert(b.class_id).second) throw InvalidArgument("duplicate boundary for class " + std::to_string(b.class_id));
    if (!(b.eta >= -1.0 && b.eta <= 1.0)) throw InvalidArgument("eta outside [-1, 1]");
    if (b.center.dim() != dim()) throw InvalidArgument("boundary centers disagree on dimension");
  }
}

std::vector<ClassCenter> compute_centers(const Matrix& attributes, const std::vector<int>& class_ids,
                                         const nn::Model& model) {
  if (attributes.rows() != static_cast<Index>(class_ids.size())) {
    throw InvalidArgument("compute_centers: one attribute row per class id required");
  }
  if (attributes.cols() != model.spec.attribute_encoder.input_dim) {
    throw InvalidArgument("compute_centers: attribute dimension mismatch");
  }
  // One row at a time: a batched product may round differently per row
  // position, and equal attributes must give bit-identical centers.
  std::vector<ClassCenter> out;
  out.reserve(class_ids.size());
  for (std::size_t k = 0; k < class_ids.size(); ++k) {
    const Matrix row = attributes.row(static_cast<Index>(k));
    const PosteriorBatch post = nn::encode(model.spec.attribute_encoder, model.params.theta_a, row);
    out.push_back({class_ids[k], UnitVector(post.mu.row(0).transpose())});
  }
  return out;
}

Matrix encode_mean_directions(const Matrix& features, const nn::Model& model) {
  return nn::encode(model.spec.feature_encoder, model.params.theta_f, features).mu;
}

double quantile_threshold(std::vector<double> similarities, double gamma) {
  if (similarities.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  std::sort(similarities.begin(), similarities.end());
  const auto n = static_cast<long>(similarities.size());
  // keep = ceil(gamma n), guarded against representation error in gamma * n
  long keep = static_cast<long>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
  keep = std::clamp(keep, 1L, n);
  return similarities[static_cast<std::size_t>(n - keep)];
}

BoundarySet compute_thresholds(const Matrix& features, const std::vector<int>& labels,
                               const std::vector<ClassCenter>& centers, double gamma, const nn::Model& model) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  if (features.rows() != static_cast<Index>(labels.size())) {
    throw InvalidArgument("compute_thresholds: features and labels differ in length");
  }
  std::map<int, std::size_t> slot;
  for (std::size_t k = 0; k < centers.size(); ++k) slot.emplace(centers[k].class_id, k);

  const Matrix z = encode_mean_directions(features, model);
  std::vector<std::vector<double>> sims(centers.size());
  for (Index i = 0; i < z.rows(); ++i) {
    const auto it = slot.find(labels[static_cast<std::size_t>(i)]);
    if (it == slot.end()) {
      throw InvalidArgument("training row " + std::to_string(i) + " has class " +
                            std::to_string(labels[static_cast<std::size_t>(i)]) + " with no center");
    }
    sims[it->second].push_back(z.row(i).dot(centers[it->second].center.values()));
  }

  BoundarySet set;
  set.gamma = gamma;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (sims[k].empty()) {
      throw MissingClass("seen class " + std::to_string(centers[k].class_id) + " has no training samples",
                         centers[k].class_id);
    }
    const double eta = std::clamp(quantile_threshold(sims[k], gamma), -1.0, 1.0);
    set.boundaries.push_back({centers[k].class_id, centers[k].center, eta});
  }
  std::sort(set.boundaries.begin(), set.boundaries.end(),
            [](const ClassBoundary& l, const ClassBoundary& r) { return l.class_id < r.class_id; });
  set.validate();
  return set;
}

BoundarySet build_boundaries(const data::DatasetBundle& bundle, const nn::Model& model, double gamma) {
  const std::vector<int>& ids = model.spec.class_ids;
  const std::vector<std::int64_t> ids64(ids.begin(), ids.end());
  const auto centers = compute_centers(bundle.attribute_rows(ids64), ids, model);
  return compute_thresholds(bundle.feature_rows(bundle.train_idx), bundle.label_rows(bundle.train_idx), centers,
                            gamma, model);
}

OodDecision decide(const Eigen::Ref<const Vector>& z, const BoundarySet& boundaries) {
  if (boundaries.empty()) throw InvalidState("classify_ood: empty boundary set");
  if (z.size() != boundaries.dim()) throw InvalidArgument("classify_ood: latent dimension mismatch");
  std::size_t best = 0;
  double best_sim = -2.0;
  // Boundaries are sorted by class_id, so a strict comparison keeps the lowest id on ties.
  for (std::size_t k = 0; k < boundaries.boundaries.size(); ++k) {
    const double s = z.dot(boundaries.boundaries[k].center.values());
    if (s > best_sim) {
      best_sim = s;
      best = k;
    }
  }
  const auto& b = boundaries.boundaries[best];
  OodDecision d;
  d.max_similarity = best_sim;
  d.margin = best_sim - b.eta;
  d.nearest_class = b.class_id;
  d.label = best_sim >= b.eta ? 1 : 0;
  return d;
}

OodDecision classify_ood(const Vector& feature, const BoundarySet& boundaries, const nn::Model& model) {
  return classify_ood(Matrix(feature.transpose()), boundaries, model).front();
}

std::vector<OodDecision> classify_ood(const Matrix& features, const BoundarySet& boundaries, const nn::Model& model) {
  if (boundaries.empty()) throw InvalidState("classify_ood: empty boundary set");
  const Matrix z = encode_mean_directions(features, model);
  std::vector<OodDecision> out;
  out.reserve(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) out.push_back(decide(z.row(i).transpose(), boundaries));
  return out;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_boundaries(const std::filesystem::path& path, const BoundarySet& set) {
  set.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot write " + path.string());
  out << "gamma " << fmt17(set.gamma) << "\n";
  out << "dim " << set.dim() << "\n";
  out << "class_id eta center\n";
  for (const auto& b : set.boundaries) {
    out << b.class_id << ' ' << fmt17(b.eta);
    for (Index k = 0; k < b.center.dim(); ++k) out << ' ' << fmt17(b.center[k]);
    out << '\n';
  }
  if (!out) throw DataError(DataError::Kind::Malformed, "failed writing " + path.string());
}

BoundarySet load_boundaries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "boundary file not found: " + path.string());
  auto malformed = [&](const std::string& why) {
    return DataError(DataError::Kind::Malformed, path.string() + ": " + why);
  };
  std::string key, line;
  BoundarySet set;
  Index dim = 0;
  if (!(in >> key >> set.gamma) || key != "gamma") throw malformed("expected 'gamma <value>'");
  if (!(in >> key >> dim) || key != "dim" || dim < 2) throw malformed("expected 'dim <m>'");
  std::getline(in, line);
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    int id = 0;
    double eta = 0.0;
    Vector c(dim);
    // strtod-based parsing keeps 17-digit decimals exact.
    std::string tok;
    if (!(row >> id >> tok)) throw malformed("bad boundary row");
    eta = std::stod(tok);
    for (Index k = 0; k < dim; ++k) {
      if (!(row >> tok)) throw malformed("boundary row has fewer than dim center entries");
      c[k] = std::stod(tok);
    }
    set.boundaries.push_back({id, UnitVector(std::move(c)), eta});
  }
  std::sort(set.boundaries.begin(), set.boundaries.end(),
            [](const ClassBoundary& l, const ClassBoundary& r) { return l.class_id < r.class_id; });
  set.validate();
  return set;
}

}  // namespace gzood::boundary
