#include "cli.hpp"

#include <gzood/boundary.hpp>
#include <gzood/checkpoint.hpp>
#include <gzood/data.hpp>
#include <gzood/error.hpp>
#include <gzood/experts.hpp>
#include <gzood/metrics.hpp>
#include <gzood/training.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

namespace gzood::cli {
namespace fs = std::filesystem;

namespace {

using KeyValues = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Keys owned by training; evaluation takes them from the checkpoint.
std::set<std::string> training_keys() {
  std::set<std::string> keys;
  for (const auto& [k, v] : train::TrainConfig{}.to_map()) keys.insert(k);
  keys.insert("standardize");
  return keys;
}

KeyValues defaults() {
  KeyValues kv = train::TrainConfig{}.to_map();
  kv["gamma"] = "0.9";
  kv["standardize"] = "0";
  kv["checkpoint_every"] = "0";
  kv["expert"] = "baseline";
  return kv;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k;
    for (const auto& [key, v] : defaults()) k.insert(key);
    for (const char* extra : {"data", "out", "checkpoint", "gamma_grid"}) k.insert(extra);
    return k;
  }();
  return keys;
}

double number(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw InvalidArgument("missing config key '" + key + "'");
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw InvalidArgument("config key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

bool flag(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) return false;
  if (it->second == "1" || it->second == "true") return true;
  if (it->second == "0" || it->second == "false") return false;
  throw InvalidArgument("config key '" + key + "' expects 0/1, got '" + it->second + "'");
}

const std::string& required(const KeyValues& kv, const std::string& key, const std::string& option) {
  const auto it = kv.find(key);
  if (it == kv.end() || it->second.empty()) throw InvalidArgument(option + " is required");
  return it->second;
}

std::vector<double> gamma_list(const KeyValues& kv) {
  std::vector<double> out;
  const auto grid = kv.find("gamma_grid");
  if (grid == kv.end() || grid->second.empty()) {
    out.push_back(number(kv, "gamma"));
  } else {
    std::stringstream ss(grid->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      KeyValues one{{"gamma_grid", trim(item)}};
      out.push_back(number(one, "gamma_grid"));
    }
    if (out.empty()) throw InvalidArgument("--gamma-grid is empty");
  }
  for (double g : out) {
    if (!(g > 0.0 && g < 1.0)) throw InvalidArgument("gamma must lie in (0, 1), got " + fmt17(g));
  }
  return out;
}

// Training options normalized through TrainConfig so that equal settings print identically.
train::TrainConfig canonical_training(KeyValues& kv) {
  const auto cfg = train::TrainConfig::from_map(kv);
  cfg.validate();
  for (const auto& [k, v] : cfg.to_map()) kv[k] = v;
  kv["standardize"] = flag(kv, "standardize") ? "1" : "0";
  return cfg;
}

data::DatasetBundle load_data(const KeyValues& kv) {
  auto bundle = data::load_bundle(required(kv, "data", "--data"));
  if (flag(kv, "standardize")) bundle = data::standardize(bundle);
  return bundle;
}

void check_compatible(const data::DatasetBundle& bundle, const nn::Model& model) {
  if (bundle.feature_dim() != model.spec.feature_encoder.input_dim ||
      bundle.attribute_dim() != model.spec.attribute_encoder.input_dim) {
    throw DataError(DataError::Kind::ShapeMismatch, "bundle dimensions do not match the checkpoint");
  }
  std::vector<int> seen(bundle.seen_classes.begin(), bundle.seen_classes.end());
  std::sort(seen.begin(), seen.end());
  if (seen != model.spec.class_ids) {
    throw DataError(DataError::Kind::ShapeMismatch, "bundle seen classes do not match the checkpoint");
  }
}

// Evaluation config: defaults < config file < flags, then training keys from the checkpoint.
nn::Checkpoint load_for_eval(KeyValues& kv) {
  auto ckpt = nn::load_checkpoint(required(kv, "checkpoint", "--checkpoint"));
  const auto owned = training_keys();
  for (const auto& [k, v] : ckpt.config) {
    if (!owned.count(k)) continue;
    const auto it = kv.find(k);
    if (it != kv.end() && it->second != v && it->second != defaults()[k]) {
      std::cerr << "note: " << k << " is taken from the checkpoint (" << v << "), ignoring " << it->second << "\n";
    }
    kv[k] = v;
  }
  canonical_training(kv);
  return ckpt;
}

// The config embedded in reports: everything that determines the numbers.
// The output directory does not, so a rerun elsewhere reproduces the report.
KeyValues report_config(KeyValues kv) {
  kv.erase("out");
  return kv;
}

std::vector<int> to_int(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

std::uint64_t seed_of(const KeyValues& kv) { return train::TrainConfig::from_map(kv).seed; }

int cmd_train(KeyValues kv) {
  const auto cfg = canonical_training(kv);
  const auto every = static_cast<long>(number(kv, "checkpoint_every"));
  if (every < 0) throw InvalidArgument("--checkpoint-every must be >= 0");
  const fs::path out = required(kv, "out", "--out");
  const auto bundle = load_data(kv);

  fs::create_directories(out);
  write_config_file((out / "resolved_config.txt").string(), kv);
  std::ofstream log(out / "train_log.csv", std::ios::trunc);
  if (!log) throw DataError(DataError::Kind::MissingFile, "cannot write " + (out / "train_log.csv").string());
  train::write_log_header(log);

  train::FitCallbacks callbacks;
  callbacks.on_step = [&log](const train::StepRecord& r) { train::write_log_record(log, r); };
  callbacks.on_epoch = [&](int epoch, const train::LossBreakdown& loss, const nn::Model& model) {
    std::fprintf(stderr, "epoch %d  overall %.6g  f %.6g  a %.6g  cr %.6g  cls %.6g\n", epoch, loss.l_overall,
                 loss.l_f_svae, loss.l_a_svae, loss.l_cr, loss.l_cls);
    if (every > 0 && epoch % every == 0) {
      nn::save_checkpoint(out / ("checkpoint_epoch_" + std::to_string(epoch) + ".ckpt"), model, kv);
    }
  };
  const auto result = train::fit(bundle, cfg, callbacks);
  log.flush();
  nn::save_checkpoint(out / "model.ckpt", result.model, kv);
  if (result.emd_nonconverged > 0) {
    std::fprintf(stderr, "warning: %ld Sinkhorn solves stopped at max_iters\n", result.emd_nonconverged);
  }
  std::cout << (out / "model.ckpt").string() << "\n";
  return kOk;
}

struct OodSweepRow {
  double gamma;
  metrics::RocCurve curve;
  double fpr95;
  boundary::BoundarySet set;
};

int cmd_eval_ood(KeyValues kv) {
  const auto gammas = gamma_list(kv);
  const fs::path out = required(kv, "out", "--out");
  const auto ckpt = load_for_eval(kv);
  const auto bundle = load_data(kv);
  check_compatible(bundle, ckpt.model);

  std::vector<std::int64_t> rows = bundle.test_seen_idx;
  rows.insert(rows.end(), bundle.test_unseen_idx.begin(), bundle.test_unseen_idx.end());
  std::vector<int> labels(bundle.test_seen_idx.size(), 1);
  labels.resize(rows.size(), 0);
  const Matrix z = boundary::encode_mean_directions(bundle.feature_rows(rows), ckpt.model);

  std::vector<OodSweepRow> sweep;
  for (double g : gammas) {
    auto set = boundary::build_boundaries(bundle, ckpt.model, g);
    std::vector<double> scores;
    scores.reserve(rows.size());
    for (Index i = 0; i < z.rows(); ++i) scores.push_back(boundary::decide(z.row(i).transpose(), set).margin);
    auto curve = metrics::roc_auc(scores, labels);
    const double fpr95 = metrics::fpr_at_tpr(curve, 0.95);
    sweep.push_back({g, std::move(curve), fpr95, std::move(set)});
  }

  fs::create_directories(out);
  write_config_file((out / "resolved_config.txt").string(), kv);
  const auto seed = seed_of(kv);
  if (sweep.size() == 1) {
    const auto& r = sweep.front();
    metrics::EvalReport report;
    report.auc = r.curve.auc;
    report.fpr_at_95tpr = r.fpr95;
    report.gamma = r.gamma;
    report.seed = seed;
    report.config = report_config(kv);
    metrics::write_report(out / "report.json", report);
    metrics::write_roc_csv(out / "roc.csv", r.curve);
    boundary::save_boundaries(out / "boundaries.txt", r.set);
    std::printf("auc %.6f  fpr@95tpr %.6f  gamma %g\n", r.curve.auc, r.fpr95, r.gamma);
  } else {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["config_digest"] = metrics::config_digest(report_config(kv));
    j["config"] = report_config(kv);
    j["rows"] = nlohmann::json::array();
    std::ofstream csv(out / "sweep.csv", std::ios::trunc);
    csv << "gamma,auc,fpr_at_95tpr\n";
    for (const auto& r : sweep) {
      j["rows"].push_back({{"gamma", r.gamma}, {"auc", r.curve.auc}, {"fpr_at_95tpr", r.fpr95}});
      csv << fmt17(r.gamma) << ',' << fmt17(r.curve.auc) << ',' << fmt17(r.fpr95) << '\n';
      std::printf("gamma %g  auc %.6f  fpr@95tpr %.6f\n", r.gamma, r.curve.auc, r.fpr95);
    }
    std::ofstream(out / "sweep.json", std::ios::trunc) << j.dump(2) << "\n";
  }
  return kOk;
}

int cmd_eval_gzsl(KeyValues kv) {
  const double gamma = number(kv, "gamma");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  const std::string expert_spec = kv.at("expert");
  if (expert_spec != "baseline" && expert_spec.rfind("file:", 0) != 0) {
    throw InvalidArgument("--expert must be 'baseline' or 'file:<path>'");
  }
  const fs::path out = required(kv, "out", "--out");
  const auto ckpt = load_for_eval(kv);
  const auto bundle = load_data(kv);
  check_compatible(bundle, ckpt.model);

  std::vector<std::int64_t> rows64 = bundle.test_seen_idx;
  rows64.insert(rows64.end(), bundle.test_unseen_idx.begin(), bundle.test_unseen_idx.end());
  const std::vector<Index> rows(rows64.begin(), rows64.end());
  const auto unseen_ids = to_int(bundle.unseen_classes);

  std::unique_ptr<experts::UnseenExpert> expert;
  if (expert_spec == "baseline") {
    expert = experts::nearest_center_unseen_expert(bundle.attribute_rows(bundle.unseen_classes), unseen_ids,
                                                   ckpt.model);
  } else {
    expert = std::make_unique<experts::FilePredictionExpert>(
        experts::FilePredictionExpert::load(expert_spec.substr(5), unseen_ids, rows));
  }

  const auto set = boundary::build_boundaries(bundle, ckpt.model, gamma);
  const auto preds = experts::gzsl_predict(rows, bundle.feature_rows(rows64), set, ckpt.model, *expert);

  std::vector<int> pred_ids, true_ids;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    pred_ids.push_back(preds[k].class_id);
    true_ids.push_back(static_cast<int>(bundle.labels[static_cast<std::size_t>(rows[k])]));
  }
  const std::size_t n_seen = bundle.test_seen_idx.size();
  const std::vector<int> seen_pred(pred_ids.begin(), pred_ids.begin() + static_cast<long>(n_seen));
  const std::vector<int> seen_true(true_ids.begin(), true_ids.begin() + static_cast<long>(n_seen));
  const std::vector<int> unseen_pred(pred_ids.begin() + static_cast<long>(n_seen), pred_ids.end());
  const std::vector<int> unseen_true(true_ids.begin() + static_cast<long>(n_seen), true_ids.end());
  const double tr = metrics::per_class_top1(seen_pred, seen_true, to_int(bundle.seen_classes));
  const double ts = metrics::per_class_top1(unseen_pred, unseen_true, unseen_ids);
  const auto g = metrics::gzsl_report(ts, tr);

  fs::create_directories(out);
  write_config_file((out / "resolved_config.txt").string(), kv);
  metrics::EvalReport report;
  report.ts = g.ts;
  report.tr = g.tr;
  report.h = g.h;
  report.gamma = gamma;
  report.seed = seed_of(kv);
  report.config = report_config(kv);
  metrics::write_report(out / "report.json", report);
  std::ofstream csv(out / "predictions.csv", std::ios::trunc);
  csv << "test_index,true_class,predicted_class,route,gate_score\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    csv << rows[k] << ',' << true_ids[k] << ',' << pred_ids[k] << ','
        << (preds[k].route == experts::Route::Seen ? "seen" : "unseen") << ',' << fmt17(preds[k].gate_score) << '\n';
  }
  std::printf("ts %.6f  tr %.6f  H %.6f\n", g.ts, g.tr, g.h);
  return kOk;
}

int cmd_export_boundaries(KeyValues kv) {
  const double gamma = number(kv, "gamma");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  const fs::path out = required(kv, "out", "--out");
  const auto ckpt = load_for_eval(kv);
  const auto bundle = load_data(kv);
  check_compatible(bundle, ckpt.model);
  const auto set = boundary::build_boundaries(bundle, ckpt.model, gamma);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  boundary::save_boundaries(out, set);
  return kOk;
}

// One command-line option bound to a config key.
struct Binding {
  std::string key;
  CLI::Option* option;
  std::string value;
};

class Options {
 public:
  void add(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    auto b = std::make_unique<Binding>();
    b->key = key;
    b->option = app->add_option(name, b->value, help);
    bindings_.push_back(std::move(b));
  }
  void add_flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    auto b = std::make_unique<Binding>();
    b->key = key;
    b->value = "1";
    b->option = app->add_flag(name, help);
    bindings_.push_back(std::move(b));
  }
  void overlay(KeyValues& kv) const {
    for (const auto& b : bindings_) {
      if (b->option->count() > 0) kv[b->key] = b->value;
    }
  }

 private:
  std::vector<std::unique_ptr<Binding>> bindings_;
};

void add_training_options(CLI::App* app, Options& o) {
  o.add(app, "--epochs", "epochs", "training epochs");
  o.add(app, "--latent-dim", "latent_dim", "latent sphere dimension m");
  o.add(app, "--hidden-dim", "hidden_dim", "hidden layer width");
  o.add(app, "--batch-size", "batch_size", "minibatch size");
  o.add(app, "--lr", "learning_rate", "Adam learning rate");
  o.add(app, "--seed", "seed", "random seed");
  o.add(app, "--alpha", "alpha", "cross-reconstruction weight");
  o.add(app, "--beta", "beta", "classification weight");
  o.add(app, "--lambda-f", "lambda_f", "EMD weight in the feature SVAE term");
  o.add(app, "--lambda-a", "lambda_a", "EMD weight in the attribute SVAE term");
  o.add(app, "--samples", "samples_per_posterior", "posterior samples per datum for the EMD");
  o.add(app, "--kappa-max", "kappa_max", "upper clamp of the concentration");
  o.add(app, "--sinkhorn-eps", "sinkhorn_eps", "entropic regularization");
  o.add(app, "--sinkhorn-iters", "sinkhorn_max_iters", "Sinkhorn iteration cap");
  o.add_flag(app, "--standardize", "standardize", "standardize features with train-split statistics");
}

}  // namespace

KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config file not found: " + path);
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    if (!known_keys().count(key)) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

void write_config_file(const std::string& path, const KeyValues& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot write " + path);
  for (const auto& [k, v] : config) out << k << " = " << v << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Boundary-based out-of-distribution gate for generalized zero-shot learning"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file; command-line flags win");

  Options o_train, o_ood, o_gzsl, o_export;

  auto* train_cmd = app.add_subcommand("train", "train the paired hyperspherical VAEs on the seen split");
  o_train.add(train_cmd, "--data", "data", "dataset bundle directory");
  o_train.add(train_cmd, "--out", "out", "output directory");
  o_train.add(train_cmd, "--checkpoint-every", "checkpoint_every", "write a checkpoint every k epochs (0 = off)");
  add_training_options(train_cmd, o_train);

  auto* ood_cmd = app.add_subcommand("eval-ood", "seen/unseen gate evaluation: AUC, FPR@95TPR, ROC");
  o_ood.add(ood_cmd, "--data", "data", "dataset bundle directory");
  o_ood.add(ood_cmd, "--checkpoint", "checkpoint", "trained model");
  o_ood.add(ood_cmd, "--out", "out", "output directory");
  o_ood.add(ood_cmd, "--gamma", "gamma", "fraction of training latents inside each boundary");
  o_ood.add(ood_cmd, "--gamma-grid", "gamma_grid", "comma-separated gamma values; writes sweep.csv");

  auto* gzsl_cmd = app.add_subcommand("eval-gzsl", "hard-gated GZSL evaluation: ts, tr, H");
  o_gzsl.add(gzsl_cmd, "--data", "data", "dataset bundle directory");
  o_gzsl.add(gzsl_cmd, "--checkpoint", "checkpoint", "trained model");
  o_gzsl.add(gzsl_cmd, "--out", "out", "output directory");
  o_gzsl.add(gzsl_cmd, "--gamma", "gamma", "fraction of training latents inside each boundary");
  o_gzsl.add(gzsl_cmd, "--expert", "expert", "unseen expert: baseline | file:<path>");

  auto* export_cmd = app.add_subcommand("export-boundaries", "write per-class centers and thresholds");
  o_export.add(export_cmd, "--data", "data", "dataset bundle directory");
  o_export.add(export_cmd, "--checkpoint", "checkpoint", "trained model");
  o_export.add(export_cmd, "--out", "out", "boundary file to write");
  o_export.add(export_cmd, "--gamma", "gamma", "fraction of training latents inside each boundary");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset bundle");
  data::SyntheticSpec synth;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "bundle directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--n-seen", synth.n_seen, "number of seen classes");
  synth_cmd->add_option("--n-unseen", synth.n_unseen, "number of unseen classes");
  synth_cmd->add_option("--attr-dim", synth.attr_dim, "attribute dimension");
  synth_cmd->add_option("--feat-dim", synth.feat_dim, "feature dimension");
  synth_cmd->add_option("--samples-per-class", synth.samples_per_class, "samples per class");
  synth_cmd->add_option("--noise", synth.noise_scale, "noise scale in attribute space");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (synth_cmd->parsed()) {
      synth.validate();
      data::save_bundle(synth_out, data::make_synthetic(synth));
      return kOk;
    }
    KeyValues kv = defaults();
    if (!config_path.empty()) {
      for (const auto& [k, v] : read_config_file(config_path)) kv[k] = v;
    }
    if (train_cmd->parsed()) {
      o_train.overlay(kv);
      return cmd_train(kv);
    }
    if (ood_cmd->parsed()) {
      o_ood.overlay(kv);
      return cmd_eval_ood(kv);
    }
    if (gzsl_cmd->parsed()) {
      o_gzsl.overlay(kv);
      return cmd_eval_gzsl(kv);
    }
    o_export.overlay(kv);
    return cmd_export_boundaries(kv);
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const MissingClass& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const MissingPrediction& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const UndefinedMetric& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << " (batch " << e.batch_index() << ", " << e.component() << ")\n";
    return kNumericFailure;
  } catch (const SamplingFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "gzood");
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gzood::cli
