#include <gzood/error.hpp>
#include <gzood/metrics.hpp>
#include <gzood/types.hpp>

#include <json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace gzood;
namespace fs = std::filesystem;

namespace {

// Probability that a random positive outscores a random negative, ties half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

double trapezoid(const metrics::RocCurve& c) {
  double a = 0;
  for (std::size_t k = 1; k < c.points.size(); ++k)
    a += 0.5 * (c.points[k].fpr - c.points[k - 1].fpr) * (c.points[k].tpr + c.points[k - 1].tpr);
  return a;
}

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

Sample random_sample(std::size_t n, Rng& rng, bool discrete = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 9);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(discrete ? coarse(rng) : u(rng));
    s.labels.push_back(static_cast<int>(i % 2));
  }
  return s;
}

// Reference (ts, tr, H) triples, percentages rounded to one decimal.
struct Triple {
  double ts, tr, h;
};
const std::vector<Triple> kTriples = {
    {51.9, 72.7, 60.6}, {53.4, 75.9, 62.7}, {46.8, 50.2, 48.4}, {59.4, 81.2, 68.6}, {37.6, 33.9, 35.6},
    {54.7, 72.7, 62.4}, {55.6, 75.9, 64.2}, {49.5, 50.2, 49.8}, {60.0, 81.2, 69.0}, {40.7, 33.9, 37.0},
};

}  // namespace

TEST(Roc, SeparatedScores) {
  const auto c = metrics::roc_auc({0.9, 0.1, 0.8, 0.2}, {1, 0, 1, 0});
  EXPECT_EQ(c.auc, 1.0);
  EXPECT_EQ(metrics::fpr_at_tpr(c, 0.95), 0.0);
  EXPECT_EQ(metrics::fpr_at_tpr(c, 0.0), 0.0);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.front().tpr, 0.0);
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  EXPECT_TRUE(std::isinf(c.thresholds.front()));
}

TEST(Roc, TiesFormOneStep) {
  const auto c = metrics::roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_DOUBLE_EQ(c.auc, 0.5);
  EXPECT_DOUBLE_EQ(metrics::fpr_at_tpr(c, 0.95), 0.95);
}

TEST(Roc, MatchesPairwiseOracle) {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const auto s = random_sample(40 + static_cast<std::size_t>(t), rng, t % 2 == 0);
    const auto c = metrics::roc_auc(s.scores, s.labels);
    EXPECT_NEAR(c.auc, pairwise_auc(s.scores, s.labels), 1e-12);
    EXPECT_NEAR(c.auc, trapezoid(c), 1e-9);
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      EXPECT_GE(c.points[k].fpr, c.points[k - 1].fpr);
      EXPECT_GE(c.points[k].tpr, c.points[k - 1].tpr);
    }
  }
}

TEST(Roc, RandomScoresAreChance) {
  Rng rng(2);
  const auto s = random_sample(20000, rng);
  const auto c = metrics::roc_auc(s.scores, s.labels);
  EXPECT_NEAR(c.auc, 0.5, 0.02);
  EXPECT_NEAR(metrics::fpr_at_tpr(c, 0.95), 0.95, 0.03);
}

TEST(Roc, IncreasingTransformInvariance) {
  Rng rng(3);
  const auto s = random_sample(500, rng, true);
  auto shifted = s.scores;
  for (auto& v : shifted) v = std::exp(3.0 * v) - 7.0;
  EXPECT_EQ(metrics::roc_auc(s.scores, s.labels).auc, metrics::roc_auc(shifted, s.labels).auc);
}

TEST(Roc, ReversedLabels) {
  Rng rng(4);
  const auto s = random_sample(301, rng, true);
  auto flipped = s.labels;
  for (auto& l : flipped) l = 1 - l;
  EXPECT_NEAR(metrics::roc_auc(s.scores, flipped).auc, 1.0 - metrics::roc_auc(s.scores, s.labels).auc, 1e-12);
}

TEST(Roc, InterpolatesBetweenPoints) {
  // Points: (0,0) (0,0.5) (0.5,0.5) (0.5,1) (1,1).
  const auto c = metrics::roc_auc({4, 3, 2, 1}, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(metrics::fpr_at_tpr(c, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(metrics::fpr_at_tpr(c, 0.75), 0.5);
  EXPECT_DOUBLE_EQ(c.auc, 0.75);
}

TEST(Roc, Errors) {
  EXPECT_THROW(metrics::roc_auc({0.1, 0.2}, {1, 1}), UndefinedMetric);
  EXPECT_THROW(metrics::roc_auc({0.1, 0.2}, {0, 0}), UndefinedMetric);
  EXPECT_THROW(metrics::roc_auc({0.1, 0.2}, {0, 2}), InvalidArgument);
  EXPECT_THROW(metrics::roc_auc({0.1}, {0, 1}), InvalidArgument);
}

TEST(PerClass, Accuracy) {
  std::vector<int> labels(100), preds(100);
  for (int i = 0; i < 100; ++i) {
    labels[static_cast<std::size_t>(i)] = i < 10 ? 0 : 1;
    preds[static_cast<std::size_t>(i)] = 0;
  }
  EXPECT_DOUBLE_EQ(metrics::per_class_top1(preds, labels, {0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(metrics::per_class_top1(labels, labels, {0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(metrics::per_class_top1(preds, labels, {0, 1, 7}), 0.5);
  EXPECT_DOUBLE_EQ(metrics::per_class_top1(preds, labels, {1}), 0.0);
  EXPECT_THROW(metrics::per_class_top1(preds, labels, {5, 6}), UndefinedMetric);
  EXPECT_THROW(metrics::per_class_top1({0}, labels, {0}), InvalidArgument);
}

TEST(Harmonic, Cases) {
  EXPECT_NEAR(metrics::harmonic_mean(54.7, 72.7), 62.4, 0.05);
  EXPECT_NEAR(metrics::harmonic_mean(55.6, 75.9), 64.2, 0.05);
  EXPECT_EQ(metrics::harmonic_mean(0.0, 0.0), 0.0);
  EXPECT_EQ(metrics::harmonic_mean(0.0, 0.8), 0.0);
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double a = u(rng), b = u(rng);
    EXPECT_DOUBLE_EQ(metrics::harmonic_mean(a, a), a);
    EXPECT_EQ(metrics::harmonic_mean(a, b), metrics::harmonic_mean(b, a));
    EXPECT_LE(metrics::harmonic_mean(a, b), 2.0 * std::min(a, b));
    const auto r = metrics::gzsl_report(a, b);
    EXPECT_NEAR(r.h, 2.0 * r.tr * r.ts / (r.tr + r.ts), 1e-9);
  }
}

// Every reference triple is consistent with some unrounded (ts, tr) that
// rounds to the printed inputs. The direct recomputation is checked by the
// acceptance suite.
TEST(Harmonic, ReferenceTriplesConsistentUnderRounding) {
  for (const auto& t : kTriples) {
    const double lo = metrics::harmonic_mean(t.ts - 0.05, t.tr - 0.05);
    const double hi = metrics::harmonic_mean(t.ts + 0.05, t.tr + 0.05);
    EXPECT_LE(lo, t.h + 0.05) << t.ts << " " << t.tr;
    EXPECT_GE(hi, t.h - 0.05) << t.ts << " " << t.tr;
  }
}

TEST(Digest, StableAndSensitive) {
  const std::map<std::string, std::string> a{{"alpha", "1"}, {"seed", "7"}};
  auto b = a;
  b["seed"] = "8";
  EXPECT_EQ(metrics::config_digest(a), metrics::config_digest(a));
  EXPECT_NE(metrics::config_digest(a), metrics::config_digest(b));
  EXPECT_EQ(metrics::config_digest(a).size(), 16u);
  // FNV-1a 64 of the empty input is its offset basis.
  EXPECT_EQ(metrics::config_digest({}), "cbf29ce484222325");
}

TEST(Report, JsonAndCsv) {
  metrics::EvalReport r;
  r.auc = 0.91;
  r.fpr_at_95tpr = 0.2;
  r.gamma = 0.9;
  r.seed = 42;
  r.config = {{"gamma", "0.9"}, {"seed", "42"}};
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.at("auc").get<double>(), 0.91);
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 42u);
  EXPECT_EQ(j.at("config_digest").get<std::string>(), metrics::config_digest(r.config));
  EXPECT_EQ(j.at("config").at("gamma").get<std::string>(), "0.9");
  EXPECT_FALSE(j.contains("ts"));

  const auto path = fs::path(::testing::TempDir()) / "gzood_roc.csv";
  metrics::write_roc_csv(path, metrics::roc_auc({4, 3, 2, 1}, {1, 0, 1, 0}));
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "fpr,tpr");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
}
