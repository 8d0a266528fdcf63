#include <gzood/networks.hpp>
#include <gzood/sinkhorn.hpp>
#include <gzood/training.hpp>
#include <gzood/vmf.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace gzood;

namespace {

Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> n01;
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = n01(rng);
  return m;
}

Matrix unit_rows(Index rows, Index cols, Rng& rng) {
  Matrix m = gaussian(rows, cols, rng);
  m.rowwise().normalize();
  return m;
}

void BM_LogNormConst(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  double kappa = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(vmf::log_norm_const(m, kappa));
    kappa = kappa > 4000.0 ? 0.5 : kappa * 1.7;
  }
}
BENCHMARK(BM_LogNormConst)->Arg(3)->Arg(32)->Arg(128);

void BM_VmfDraw(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const double kappa = static_cast<double>(state.range(1));
  Rng rng(1);
  const Vector mu = Vector::Unit(m, 0);
  for (auto _ : state) benchmark::DoNotOptimize(vmf::draw(mu, kappa, 16, rng));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_VmfDraw)->Args({32, 10})->Args({32, 1000})->Args({128, 100});

void BM_Emd(benchmark::State& state) {
  const Index s = state.range(0);
  Rng rng(2);
  const Matrix a = unit_rows(s, 32, rng), b = unit_rows(s, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ot::emd(a, b, {}));
}
BENCHMARK(BM_Emd)->Arg(4)->Arg(16)->Arg(64);

void BM_EmdWithGradient(benchmark::State& state) {
  Rng rng(3);
  const Matrix a = unit_rows(16, 32, rng), b = unit_rows(16, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ot::emd_with_gradient(a, b, {}));
}
BENCHMARK(BM_EmdWithGradient);

void BM_EncoderForward(benchmark::State& state) {
  const Index hidden = state.range(0);
  const auto spec = nn::ModelSpec::make(2048, 85, hidden, 128, {0, 1});
  const auto model = nn::init_model(spec, 4);
  Rng rng(5);
  const Matrix x = gaussian(128, 2048, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::encode(spec.feature_encoder, model.params.theta_f, x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_EncoderForward)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  const auto spec = nn::ModelSpec::make(64, 16, 256, 32, {0, 1, 2, 3, 4, 5, 6, 7});
  auto model = nn::init_model(spec, 6);
  Rng rng(7);
  train::Batch batch{gaussian(128, 64, rng), unit_rows(128, 16, rng), {}};
  for (int i = 0; i < 128; ++i) batch.y.push_back(i % 8);
  train::TrainConfig cfg;
  cfg.latent_dim = 32;
  cfg.hidden_dim = 256;
  train::Adam adam(spec, cfg.learning_rate);
  for (auto _ : state) {
    auto grad = nn::ModelParams::zeros(spec);
    benchmark::DoNotOptimize(train::loss_overall(model, batch, cfg, rng, &grad));
    adam.step(model.params, grad);
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
