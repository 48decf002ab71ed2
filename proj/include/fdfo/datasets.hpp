#pragma once
// Synthetic conditional datasets and conditional flow-matching pre-training.

#include <cstdint>
#include <string>
#include <vector>

#include "fdfo/adamw.hpp"
#include "fdfo/linalg.hpp"
#include "fdfo/net.hpp"
#include "fdfo/rng.hpp"

namespace fdfo {

struct DatasetSpec {
  enum Kind { kGaussMixture, kRing8, kCheckerboard, kGauss1d };
  Kind kind = kRing8;
  double sigma_d = 1.0;  // global data scale

  int d() const { return kind == kGauss1d ? 1 : 2; }
  int C() const;            // condition vocabulary size
  int n_modes() const;      // mode table size (>= C)
  Vec mode_center(int m) const;
  int mode_condition(int m) const;  // which condition a mode belongs to
  double mode_std() const;          // per-mode standard deviation
};

DatasetSpec dataset_from_name(const std::string& name, double sigma_d);
std::string dataset_name(const DatasetSpec& spec);

// One draw from condition c's distribution.
Vec sample_dataset_one(const DatasetSpec& spec, int c, Rng& rng);
std::vector<Vec> sample_dataset(const DatasetSpec& spec, int n, int c, Rng& rng);

// Index of the nearest mode center (Euclidean).
int nearest_mode(const DatasetSpec& spec, const Vec& y);

struct TrainBatch {
  std::vector<Vec> x0;   // clean samples
  std::vector<int> c;    // condition fed to the net (may be null id)
  std::vector<double> t; // interpolation times in (0,1)
  std::vector<Vec> eps;  // unit Gaussian noises
};

TrainBatch make_batch(const DatasetSpec& spec, const VelocityNet& net, int n,
                      double p_uncond, Rng& rng);

// mean over the batch of |v(x_t, t, c) - (eps - x0)|^2, x_t = (1-t)x0 + t eps
double cfm_loss(const VelocityNet& net, const TrainBatch& batch);

struct PretrainConfig {
  int steps = 20000;
  int batch = 128;
  int hidden = 64, layers = 3, embed = 8;  // network shape
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps_opt = 1e-8;
  double weight_decay = 0.0;
  double p_uncond = 0.1;
  int log_every = 200;
  uint64_t seed = 1;
};

struct PretrainResult {
  VelocityNet net;
  std::vector<std::pair<int, double>> loss_log;  // (step, loss)
};

// AdamW on the CFM objective; throws std::runtime_error on divergence.
PretrainResult pretrain(const DatasetSpec& spec, const PretrainConfig& cfg);

}  // namespace fdfo
