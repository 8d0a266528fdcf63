#pragma once

// Finite-difference check of the training objective on toy shapes, shared by
// the unit tests and the acceptance suite.

#include "oracles.hpp"

#include <gzood/training.hpp>

#include <random>
#include <string>
#include <vector>

namespace gradcheck {

using namespace gzood;

struct Toy {
  nn::Model model;
  train::Batch batch;
  train::TrainConfig cfg;
  ot::PairSamples samples;
};

/// Feature 8, attribute 4, latent 4, hidden 8, three seen classes, six rows.
/// Sinkhorn runs a fixed number of iterations so the objective is smooth.
inline Toy make_toy(std::uint64_t seed) {
  Toy t;
  t.cfg.latent_dim = 4;
  t.cfg.hidden_dim = 8;
  t.cfg.samples_per_posterior = 4;
  t.cfg.sinkhorn.epsilon = 0.05;
  t.cfg.sinkhorn.max_iters = 30;
  t.cfg.sinkhorn.convergence_tol = 1e-300;
  t.cfg.lambda_f = 0.7;
  t.cfg.lambda_a = 1.3;
  t.cfg.alpha = 0.9;
  t.cfg.beta = 1.1;
  t.cfg.seed = seed;
  t.model = nn::init_model(nn::ModelSpec::make(8, 4, 8, 4, {0, 1, 2}), seed);

  Rng rng(seed * 7919 + 1);
  std::normal_distribution<double> n01;
  Matrix attrs(3, 4);
  for (Index k = 0; k < attrs.size(); ++k) attrs.data()[k] = n01(rng);
  const Index n = 6;
  t.batch.x.resize(n, 8);
  t.batch.a.resize(n, 4);
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 3);
    t.batch.y.push_back(y);
    t.batch.a.row(i) = attrs.row(y);
    for (Index k = 0; k < 8; ++k) t.batch.x(i, k) = n01(rng);
  }
  const auto pf = nn::encode(t.model.spec.feature_encoder, t.model.params.theta_f, t.batch.x);
  const auto pa = nn::encode(t.model.spec.attribute_encoder, t.model.params.theta_a, t.batch.a);
  t.samples = ot::draw_pair_samples(pf, pa, t.cfg.samples_per_posterior, rng);
  return t;
}

struct Result {
  double max_rel = 0.0;
  std::string worst;
  long checked = 0;
};

/// Compares the analytic gradient of the weighted objective with central
/// differences over every parameter entry.
inline Result check(Toy toy, const train::TermWeights& weights, double h = 1e-6, double floor = 1e-6) {
  auto grad = nn::ModelParams::zeros(toy.model.spec);
  train::evaluate(toy.model, toy.batch, toy.cfg, weights, toy.samples, &grad);
  auto f = [&] { return train::evaluate(toy.model, toy.batch, toy.cfg, weights, toy.samples, nullptr).value; };
  Result r;
  auto params = toy.model.params.tensors();
  const auto g = grad.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Index k = 0; k < params[t].size(); ++k) {
      const double fd = oracle::central_difference(f, params[t].data[k], h);
      const double rel = oracle::relative_error(g[t].data[k], fd, floor);
      ++r.checked;
      if (rel > r.max_rel) {
        r.max_rel = rel;
        r.worst = params[t].name + "[" + std::to_string(k) + "] analytic " + std::to_string(g[t].data[k]) + " fd " +
                  std::to_string(fd);
      }
    }
  }
  return r;
}

struct Term {
  const char* name;
  train::TermWeights weights;
};

/// The objective terms as minimized: f-SVAE, a-SVAE, cross-reconstruction,
/// classification and the overall weighted sum.
inline std::vector<Term> terms(const train::TrainConfig& cfg) {
  return {
      {"l_f_svae", {.recon_f = 1.0, .emd = cfg.lambda_f}},
      {"l_a_svae", {.recon_a = 1.0, .emd = cfg.lambda_a}},
      {"l_cr", {.cross = 1.0}},
      {"l_cls", {.cls = 1.0}},
      {"l_overall", train::overall_weights(cfg)},
  };
}

}  // namespace gradcheck
