#include <gzood/error.hpp>
#include <gzood/experts.hpp>
#include <gzood/training.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

using namespace gzood;
namespace fs = std::filesystem;

namespace {

Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> n01;
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = n01(rng);
  return m;
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

const nn::Model& toy_model() {
  static const nn::Model m = nn::init_model(nn::ModelSpec::make(6, 5, 16, 4, {0, 1, 2}), 21);
  return m;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const auto p = fs::path(::testing::TempDir()) / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(NearestCenter, GeometricCases) {
  const auto& model = toy_model();
  experts::NearestCenterExpert expert({{9, UnitVector(Vector::Unit(4, 1))}, {4, UnitVector(Vector::Unit(4, 0))}},
                                      model);
  EXPECT_EQ(expert.classes(), (std::vector<int>{4, 9}));
  EXPECT_EQ(expert.predict_latent(Vector::Unit(4, 1)), 9);
  EXPECT_EQ(expert.predict_latent(Vector::Unit(4, 0)), 4);
  // Antipodal to class 4, orthogonal to class 9.
  EXPECT_EQ(expert.predict_latent(-Vector::Unit(4, 0)), 9);
  // Orthogonal to both: the lowest id.
  EXPECT_EQ(expert.predict_latent(Vector::Unit(4, 3)), 4);

  experts::NearestCenterExpert single({{7, UnitVector(Vector::Unit(4, 2))}}, model);
  Rng rng(1);
  const Matrix x = gaussian(20, 6, rng);
  for (Index i = 0; i < x.rows(); ++i) EXPECT_EQ(single.predict(i, x.row(i).transpose()), 7);
  EXPECT_THROW(experts::NearestCenterExpert({}, model), InvalidArgument);
}

TEST(NearestCenter, BuiltFromAttributes) {
  const auto& model = toy_model();
  Rng rng(2);
  const Matrix attrs = gaussian(2, 5, rng);
  const auto expert = experts::nearest_center_unseen_expert(attrs, {3, 4}, model);
  const auto centers = boundary::compute_centers(attrs, {3, 4}, model);
  EXPECT_EQ(expert->predict_latent(centers[1].center.values()), 4);
  EXPECT_EQ(expert->predict_latent(centers[0].center.values()), 3);
}

TEST(SeenExpert, DeterministicAndInSeenSet) {
  const auto& model = toy_model();
  Rng rng(3);
  const Matrix x = gaussian(50, 6, rng);
  const auto a = experts::seen_expert_predict(x, model);
  const auto b = experts::seen_expert_predict(x, model);
  EXPECT_EQ(a, b);
  for (Index i = 0; i < x.rows(); ++i) {
    EXPECT_TRUE(contains(model.spec.class_ids, a[static_cast<std::size_t>(i)]));
    EXPECT_EQ(experts::seen_expert_predict(Vector(x.row(i).transpose()), model), a[static_cast<std::size_t>(i)]);
  }
}

TEST(SeenExpert, RecoversTrainingClassesAfterFit) {
  data::SyntheticSpec s;
  s.n_seen = 3;
  s.n_unseen = 1;
  s.attr_dim = 6;
  s.feat_dim = 12;
  s.samples_per_class = 20;
  s.noise_scale = 0.05;
  s.seed = 5;
  const auto bundle = data::make_synthetic(s);
  train::TrainConfig cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 32;
  cfg.samples_per_posterior = 4;
  cfg.batch_size = 16;
  cfg.epochs = 100;
  cfg.learning_rate = 1e-2;
  cfg.seed = 1;
  const auto result = train::fit(bundle, cfg);
  const auto pred = experts::seen_expert_predict(bundle.feature_rows(bundle.train_idx), result.model);
  const auto truth = bundle.label_rows(bundle.train_idx);
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(pred.size()), 0.95);
}

TEST(Gate, RoutingPartition) {
  const auto& model = toy_model();
  Rng rng(4);
  const Matrix train_x = gaussian(30, 6, rng);
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
  const auto centers = boundary::compute_centers(gaussian(3, 5, rng), {0, 1, 2}, model);
  const auto unseen = experts::nearest_center_unseen_expert(gaussian(2, 5, rng), {3, 4}, model);
  const Matrix test_x = gaussian(200, 6, rng);
  std::vector<Index> rows(200);
  std::iota(rows.begin(), rows.end(), Index{0});
  int routed_seen = 0;
  for (double gamma : {0.2, 0.6, 0.9}) {
    const auto set = boundary::compute_thresholds(train_x, labels, centers, gamma, model);
    const auto preds = experts::gzsl_predict(rows, test_x, set, model, *unseen);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto& p = preds[i];
      const auto single = experts::gzsl_predict(rows[i], test_x.row(static_cast<Index>(i)).transpose(), set, model, *unseen);
      EXPECT_EQ(single.class_id, p.class_id);
      if (p.route == experts::Route::Seen) {
        ++routed_seen;
        EXPECT_TRUE(contains({0, 1, 2}, p.class_id));
        EXPECT_GE(p.gate_score, 0.0);
      } else {
        EXPECT_TRUE(contains({3, 4}, p.class_id));
        EXPECT_LT(p.gate_score, 0.0);
      }
    }
  }
  EXPECT_GT(routed_seen, 0);
  EXPECT_LT(routed_seen, 600);
}

TEST(Gate, RaisingGammaNeverReroutesToUnseen) {
  const auto& model = toy_model();
  Rng rng(6);
  const Matrix train_x = gaussian(60, 6, rng);
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(i % 3);
  const auto centers = boundary::compute_centers(gaussian(3, 5, rng), {0, 1, 2}, model);
  const auto unseen = experts::nearest_center_unseen_expert(gaussian(2, 5, rng), {3, 4}, model);
  const Matrix test_x = gaussian(300, 6, rng);
  std::vector<Index> rows(300);
  std::iota(rows.begin(), rows.end(), Index{0});
  std::vector<experts::GZSLPrediction> prev;
  for (double gamma : {0.1, 0.4, 0.7, 0.9, 0.99}) {
    const auto preds =
        experts::gzsl_predict(rows, test_x, boundary::compute_thresholds(train_x, labels, centers, gamma, model), model,
                              *unseen);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (prev[i].route == experts::Route::Seen) {
        EXPECT_EQ(preds[i].route, experts::Route::Seen);
      }
    }
    prev = preds;
  }
}

// The gate is hard: an expert that would fail on every call is never consulted
// for rows the gate keeps as seen.
TEST(Gate, UnselectedExpertIsNotConsulted) {
  const auto& model = toy_model();
  boundary::BoundarySet accept_all;
  for (int c = 0; c < 3; ++c) accept_all.boundaries.push_back({c, UnitVector(Vector::Unit(4, c)), -1.0});
  const auto p = write_file("gzood_empty_preds.txt", "");
  const auto expert = experts::FilePredictionExpert::load(p, {3}, {});
  Rng rng(7);
  const Matrix x = gaussian(10, 6, rng);
  std::vector<Index> rows(10);
  std::iota(rows.begin(), rows.end(), Index{100});
  for (const auto& pred : experts::gzsl_predict(rows, x, accept_all, model, expert))
    EXPECT_EQ(pred.route, experts::Route::Seen);

  boundary::BoundarySet reject_all = accept_all;
  for (auto& b : reject_all.boundaries) b.eta = 1.0;
  EXPECT_THROW(experts::gzsl_predict(rows, x, reject_all, model, expert), MissingPrediction);
}

TEST(FileExpert, ReadsPredictions) {
  const auto p = write_file("gzood_preds.txt", "# test_index, class_id\n10, 3\n11,4\n\n12 , 3\n");
  const auto expert = experts::FilePredictionExpert::load(p, {3, 4}, {10, 11, 12});
  EXPECT_EQ(expert.predict(10, Vector()), 3);
  EXPECT_EQ(expert.predict(11, Vector()), 4);
  EXPECT_EQ(expert.classes(), (std::vector<int>{3, 4}));
}

TEST(FileExpert, ListsMissingRows) {
  const auto p = write_file("gzood_partial.txt", "10, 3\n12, 4\n");
  try {
    experts::FilePredictionExpert::load(p, {3, 4}, {10, 11, 12, 13});
    FAIL() << "expected MissingPrediction";
  } catch (const MissingPrediction& e) {
    EXPECT_EQ(e.rows(), (std::vector<long>{11, 13}));
    EXPECT_NE(std::string(e.what()).find("11, 13"), std::string::npos);
  }
}

TEST(FileExpert, RejectsBadInput) {
  EXPECT_THROW(experts::FilePredictionExpert::load(write_file("gzood_seen.txt", "10, 1\n"), {3, 4}, {10}),
               InvalidArgument);
  EXPECT_THROW(experts::FilePredictionExpert::load(write_file("gzood_junk.txt", "ten, three\n"), {3}, {}), DataError);
  EXPECT_THROW(experts::FilePredictionExpert::load(fs::path(::testing::TempDir()) / "gzood_nope.txt", {3}, {}),
               DataError);
}
