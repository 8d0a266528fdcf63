#include <gzood/error.hpp>
#include <gzood/metrics.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace gzood::metrics {

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("roc_auc: scores and labels differ in length");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("roc_auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetric("roc_auc needs both seen and unseen samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    while (k < order.size() && scores[order[k]] == t) {
      (labels[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    curve.points.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives});
    curve.thresholds.push_back(t);
  }
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    curve.auc += 0.5 * (b.fpr - a.fpr) * (a.tpr + b.tpr);
  }
  return curve;
}

double fpr_at_tpr(const RocCurve& curve, double tpr_target) {
  if (curve.points.empty()) throw InvalidArgument("fpr_at_tpr: empty curve");
  if (curve.points.front().tpr >= tpr_target) return curve.points.front().fpr;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& b = curve.points[k];
    if (b.tpr >= tpr_target) {
      const auto& a = curve.points[k - 1];
      const double frac = (tpr_target - a.tpr) / (b.tpr - a.tpr);
      return a.fpr + frac * (b.fpr - a.fpr);
    }
  }
  return curve.points.back().fpr;
}

double per_class_top1(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<int>& class_set) {
  if (predictions.size() != labels.size()) throw InvalidArgument("per_class_top1: length mismatch");
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
  for (int c : class_set) tally.emplace(c, std::make_pair(0, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = tally.find(labels[i]);
    if (it == tally.end()) continue;
    it->second.second += 1;
    if (predictions[i] == labels[i]) it->second.first += 1;
  }
  double sum = 0.0;
  int present = 0;
  for (const auto& [cls, counts] : tally) {
    if (counts.second == 0) continue;
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    ++present;
  }
  if (present == 0) throw UndefinedMetric("per_class_top1: no label belongs to the class set");
  return sum / present;
}

double harmonic_mean(double ts, double tr) {
  if (ts + tr == 0.0) return 0.0;
  return 2.0 * tr * ts / (tr + ts);
}

GZSLReport gzsl_report(double ts, double tr) { return {ts, tr, harmonic_mean(ts, tr)}; }

std::string config_digest(const std::map<std::string, std::string>& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [k, v] : config) feed(k + "=" + v + "\n");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("auc", auc);
  put("fpr_at_95tpr", fpr_at_95tpr);
  put("ts", ts);
  put("tr", tr);
  put("h", h);
  j["gamma"] = gamma;
  j["seed"] = seed;
  j["config_digest"] = config_digest(config);
  j["config"] = config;
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot write " + path.string());
  out << report.to_json();
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot write " + path.string());
  out << "fpr,tpr\n";
  char buf[64];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.fpr, p.tpr);
    out << buf;
  }
}

}  // namespace gzood::metrics
