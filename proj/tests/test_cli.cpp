#include "cli.hpp"

#include <gzood/boundary.hpp>
#include <gzood/checkpoint.hpp>
#include <gzood/data.hpp>
#include <gzood/metrics.hpp>

#include <json.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gzood;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

nlohmann::json json_of(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

class Cli : public ::testing::Test {
 protected:
  static fs::path root() { return fs::path(::testing::TempDir()) / "gzood_cli"; }
  static fs::path bundle() { return root() / "bundle"; }
  static fs::path run_dir() { return root() / "run"; }
  static fs::path ckpt() { return run_dir() / "model.ckpt"; }

  static std::vector<std::string> train_args(const fs::path& out) {
    return {"train", "--data", bundle().string(), "--out", out.string(), "--epochs", "5", "--latent-dim", "4",
            "--hidden-dim", "16", "--batch-size", "16", "--samples", "4", "--seed", "3"};
  }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    ASSERT_EQ(cli::run({"synth", "--out", bundle().string(), "--n-seen", "3", "--n-unseen", "2", "--attr-dim", "6",
                        "--feat-dim", "12", "--samples-per-class", "20", "--seed", "5"}),
              cli::kOk);
    auto args = train_args(run_dir());
    args.insert(args.end(), {"--checkpoint-every", "2"});
    ASSERT_EQ(cli::run(args), cli::kOk);
  }

  fs::path fresh(const std::string& name) {
    const auto p = root() / name;
    fs::remove_all(p);
    return p;
  }
};

}  // namespace

TEST_F(Cli, TrainWritesReloadableCheckpoint) {
  const auto ck = nn::load_checkpoint(ckpt());
  EXPECT_EQ(ck.model.spec.latent_dim(), 4);
  EXPECT_EQ(ck.model.spec.class_ids, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(ck.config.at("epochs"), "5");
  EXPECT_TRUE(fs::exists(run_dir() / "checkpoint_epoch_2.ckpt"));
  EXPECT_TRUE(fs::exists(run_dir() / "checkpoint_epoch_4.ckpt"));
  EXPECT_FALSE(fs::exists(run_dir() / "checkpoint_epoch_5.ckpt"));
  const auto log = lines(run_dir() / "train_log.csv");
  ASSERT_EQ(log.size(), 1u + 5u * 3u);  // 48 training rows, batch 16
  EXPECT_EQ(log.front(), "epoch,step,l_f_svae,l_a_svae,l_cr,l_cls,l_overall,wall_clock_s");
  const auto resolved = cli::read_config_file((run_dir() / "resolved_config.txt").string());
  EXPECT_EQ(resolved.at("latent_dim"), "4");
  EXPECT_EQ(resolved.at("seed"), "3");
}

TEST_F(Cli, MissingDataLeavesNoOutput) {
  const auto out = fresh("no_data");
  EXPECT_EQ(cli::run({"train", "--data", (root() / "absent").string(), "--out", out.string()}), cli::kDataError);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(cli::run({"train", "--out", out.string()}), cli::kOk);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, TrainingIsDeterministic) {
  const auto out = fresh("again");
  ASSERT_EQ(cli::run(train_args(out)), cli::kOk);
  auto strip_clock = [](std::string s) { return s.substr(0, s.rfind(',')); };
  const auto a = lines(run_dir() / "train_log.csv"), b = lines(out / "train_log.csv");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(strip_clock(a[k]), strip_clock(b[k]));
  const auto ca = nn::load_checkpoint(ckpt()), cb = nn::load_checkpoint(out / "model.ckpt");
  const auto ma = ca.model.params.tensors(), mb = cb.model.params.tensors();
  for (std::size_t t = 0; t < ma.size(); ++t)
    for (Index k = 0; k < ma[t].size(); ++k) ASSERT_EQ(ma[t].data[k], mb[t].data[k]);
}

TEST_F(Cli, EvalOodWritesReportRocAndBoundaries) {
  const auto out = fresh("ood");
  ASSERT_EQ(cli::run({"eval-ood", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out", out.string(),
                      "--gamma", "0.85"}),
            cli::kOk);
  const auto j = json_of(out / "report.json");
  EXPECT_GE(j.at("auc").get<double>(), 0.0);
  EXPECT_LE(j.at("auc").get<double>(), 1.0);
  EXPECT_EQ(j.at("gamma").get<double>(), 0.85);
  EXPECT_EQ(j.at("seed").get<int>(), 3);
  EXPECT_EQ(j.at("config").at("gamma").get<std::string>(), "0.85");
  EXPECT_EQ(lines(out / "roc.csv").front(), "fpr,tpr");
  EXPECT_EQ(boundary::load_boundaries(out / "boundaries.txt").boundaries.size(), 3u);
}

TEST_F(Cli, GammaGridGivesOneRowPerValue) {
  const auto out = fresh("grid");
  ASSERT_EQ(cli::run({"eval-ood", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out", out.string(),
                      "--gamma-grid", "0.8, 0.9,0.95"}),
            cli::kOk);
  const auto csv = lines(out / "sweep.csv");
  ASSERT_EQ(csv.size(), 4u);
  EXPECT_EQ(csv[0], "gamma,auc,fpr_at_95tpr");
  EXPECT_EQ(std::stod(csv[2].substr(0, csv[2].find(','))), 0.9);
  EXPECT_EQ(json_of(out / "sweep.json").at("rows").size(), 3u);
  EXPECT_EQ(cli::run({"eval-ood", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out",
                      fresh("grid_bad").string(), "--gamma-grid", "0.5,1.5"}),
            cli::kConfigError);
}

TEST_F(Cli, NoUnseenTestRowsIsUndefined) {
  auto b = data::load_bundle(bundle());
  b.test_unseen_idx.clear();
  const auto dir = fresh("degenerate_bundle");
  data::save_bundle(dir, b);
  const auto out = fresh("degenerate");
  EXPECT_EQ(cli::run({"eval-ood", "--data", dir.string(), "--checkpoint", ckpt().string(), "--out", out.string()}),
            cli::kDataError);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, IncompatibleCheckpointIsDataError) {
  const auto dir = fresh("other_bundle");
  ASSERT_EQ(cli::run({"synth", "--out", dir.string(), "--feat-dim", "10", "--attr-dim", "6", "--n-seen", "3"}),
            cli::kOk);
  EXPECT_EQ(cli::run({"eval-ood", "--data", dir.string(), "--checkpoint", ckpt().string(), "--out",
                      fresh("incompatible").string()}),
            cli::kDataError);
}

TEST_F(Cli, EvalGzslReportSatisfiesHarmonicIdentity) {
  const auto out = fresh("gzsl");
  ASSERT_EQ(cli::run({"eval-gzsl", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out",
                      out.string()}),
            cli::kOk);
  const auto j = json_of(out / "report.json");
  const double ts = j.at("ts").get<double>(), tr = j.at("tr").get<double>(), h = j.at("h").get<double>();
  EXPECT_NEAR(h, ts + tr == 0.0 ? 0.0 : 2.0 * ts * tr / (ts + tr), 1e-9);
  const auto csv = lines(out / "predictions.csv");
  EXPECT_EQ(csv.front(), "test_index,true_class,predicted_class,route,gate_score");
  EXPECT_EQ(csv.size(), 1u + 12u + 40u);
  for (std::size_t k = 1; k < csv.size(); ++k) {
    const bool seen_route = csv[k].find(",seen,") != std::string::npos;
    const int predicted = std::stoi(csv[k].substr(csv[k].find(',', csv[k].find(',') + 1) + 1));
    EXPECT_EQ(seen_route, predicted < 3) << csv[k];
  }
}

TEST_F(Cli, ExternalPredictionsMustCoverEveryTestRow) {
  const auto b = data::load_bundle(bundle());
  std::vector<std::int64_t> rows = b.test_seen_idx;
  rows.insert(rows.end(), b.test_unseen_idx.begin(), b.test_unseen_idx.end());

  const auto partial = root() / "partial.txt";
  {
    std::ofstream f(partial);
    for (std::size_t k = 0; k + 2 < rows.size(); ++k) f << rows[k] << ", 3\n";
  }
  const auto out = fresh("gzsl_partial");
  ::testing::internal::CaptureStderr();
  const int code = cli::run({"eval-gzsl", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out",
                             out.string(), "--expert", "file:" + partial.string()});
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_EQ(code, cli::kDataError);
  EXPECT_NE(err.find(std::to_string(rows[rows.size() - 2]) + ", " + std::to_string(rows.back())), std::string::npos)
      << err;
  EXPECT_FALSE(fs::exists(out));

  const auto full = root() / "full.txt";
  {
    std::ofstream f(full);
    for (auto r : rows) f << r << ", 4\n";
  }
  const auto ok = fresh("gzsl_file");
  ASSERT_EQ(cli::run({"eval-gzsl", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out", ok.string(),
                      "--expert", "file:" + full.string()}),
            cli::kOk);
  for (std::size_t k = 1; const auto& line : lines(ok / "predictions.csv")) {
    if (k++ == 1) continue;
    if (line.find(",unseen,") != std::string::npos) {
      EXPECT_NE(line.find(",4,unseen,"), std::string::npos) << line;
    }
  }
}

TEST_F(Cli, ResolvedConfigReproducesReport) {
  const auto a = fresh("repro_a");
  ASSERT_EQ(cli::run({"eval-ood", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out", a.string(),
                      "--gamma", "0.8"}),
            cli::kOk);
  const auto b = fresh("repro_b");
  ASSERT_EQ(cli::run({"--config", (a / "resolved_config.txt").string(), "eval-ood", "--out", b.string()}), cli::kOk);
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_EQ(slurp(a / "roc.csv"), slurp(b / "roc.csv"));

  const auto g1 = fresh("repro_gzsl_a"), g2 = fresh("repro_gzsl_b");
  ASSERT_EQ(cli::run({"eval-gzsl", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out", g1.string()}),
            cli::kOk);
  ASSERT_EQ(cli::run({"--config", (g1 / "resolved_config.txt").string(), "eval-gzsl", "--out", g2.string()}),
            cli::kOk);
  EXPECT_EQ(slurp(g1 / "report.json"), slurp(g2 / "report.json"));
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  const auto cfg = root() / "settings.txt";
  cli::write_config_file(cfg.string(), {{"epochs", "1"}, {"lambda-f", "0.5"}, {"latent_dim", "4"}, {"hidden_dim", "8"},
                                        {"batch_size", "64"}, {"samples_per_posterior", "2"}});
  const auto out = fresh("precedence");
  ASSERT_EQ(cli::run({"--config", cfg.string(), "train", "--data", bundle().string(), "--out", out.string(),
                      "--epochs", "2"}),
            cli::kOk);
  const auto resolved = cli::read_config_file((out / "resolved_config.txt").string());
  EXPECT_EQ(resolved.at("epochs"), "2");
  EXPECT_EQ(resolved.at("lambda_f"), "0.5");
  EXPECT_EQ(resolved.at("hidden_dim"), "8");
}

TEST_F(Cli, ConfigErrors) {
  const auto bad = root() / "bad.txt";
  std::ofstream(bad) << "no_such_key = 1\n";
  EXPECT_EQ(cli::run({"--config", bad.string(), "train", "--data", bundle().string(), "--out",
                      fresh("e1").string()}),
            cli::kConfigError);
  EXPECT_EQ(cli::run({"train", "--data", bundle().string(), "--out", fresh("e2").string(), "--alpha", "-1"}),
            cli::kConfigError);
  EXPECT_EQ(cli::run({"train", "--data", bundle().string(), "--out", fresh("e3").string(), "--no-such-flag"}),
            cli::kConfigError);
  EXPECT_EQ(cli::run({"eval-gzsl", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out",
                      fresh("e4").string(), "--expert", "oracle"}),
            cli::kConfigError);
  EXPECT_EQ(cli::run({"eval-ood", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out",
                      fresh("e5").string(), "--gamma", "1"}),
            cli::kConfigError);
  EXPECT_FALSE(fs::exists(root() / "e2"));
}

TEST_F(Cli, ExportBoundaries) {
  const auto path = root() / "export" / "bounds.txt";
  ASSERT_EQ(cli::run({"export-boundaries", "--data", bundle().string(), "--checkpoint", ckpt().string(), "--out",
                      path.string(), "--gamma", "0.7"}),
            cli::kOk);
  const auto set = boundary::load_boundaries(path);
  EXPECT_EQ(set.gamma, 0.7);
  EXPECT_EQ(set.boundaries.size(), 3u);
}
