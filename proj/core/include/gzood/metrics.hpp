#pragma once

// OOD and GZSL evaluation. Rates and accuracies are fractions in [0, 1];
// conversion to percentages happens only when formatting reports.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gzood::metrics {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;   // from (0,0) to (1,1), fpr nondecreasing
  std::vector<double> thresholds; // score threshold of each point (+inf for the first)
  double auc = 0.0;
};

/// Seen (label 1) is the positive class; a sample is kept as seen when its
/// score is >= the threshold. Tied scores form a single step.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// FPR at the first ROC point reaching `tpr_target`, linearly interpolated
/// from the preceding point.
double fpr_at_tpr(const RocCurve& curve, double tpr_target);

/// Mean over classes of `class_set` present in `labels` of per-class top-1 accuracy.
double per_class_top1(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<int>& class_set);

/// 2 tr ts / (tr + ts), 0 when both are 0.
double harmonic_mean(double ts, double tr);

struct GZSLReport {
  double ts = 0.0;
  double tr = 0.0;
  double h = 0.0;
};

GZSLReport gzsl_report(double ts, double tr);

/// FNV-1a 64 over "key=value\n" lines in key order, as 16 hex digits.
std::string config_digest(const std::map<std::string, std::string>& config);

struct EvalReport {
  std::optional<double> auc;
  std::optional<double> fpr_at_95tpr;
  std::optional<double> ts;
  std::optional<double> tr;
  std::optional<double> h;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;

  /// JSON object with the metrics, gamma, seed, config_digest and the config itself.
  std::string to_json() const;
};

void write_report(const std::filesystem::path& path, const EvalReport& report);

/// Two columns "fpr,tpr" with a header line.
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

}  // namespace gzood::metrics
