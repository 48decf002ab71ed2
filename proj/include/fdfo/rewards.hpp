#pragma once
// Toy scalar rewards over sample endpoints, including non-differentiable
// variants, plus weighted combination.

#include <string>
#include <vector>

#include "fdfo/datasets.hpp"
#include "fdfo/linalg.hpp"

namespace fdfo {

struct RewardSpec {
  enum Kind { kSigmoidHalfplane, kRadial, kModeIndicator, kLinear, kStep };
  Kind kind = kSigmoidHalfplane;
  Vec u;                        // direction (sigmoid_halfplane, step)
  double gain = 4.0;            // sigmoid gain k
  Vec mu;                       // radial target center
  Vec b;                        // linear coefficients
  double tau = 0.0;             // step threshold
  std::vector<int> preferred;   // mode_indicator preferred mode ids
  DatasetSpec modes;            // mode table provider for mode_indicator

  bool differentiable() const {
    return kind == kSigmoidHalfplane || kind == kRadial || kind == kLinear;
  }
};

RewardSpec::Kind reward_kind_from_name(const std::string& name);
std::string reward_kind_name(RewardSpec::Kind k);

double reward(const RewardSpec& spec, const Vec& y);
// Exact analytic gradient; throws std::invalid_argument on
// non-differentiable variants.
Vec reward_grad(const RewardSpec& spec, const Vec& y);

struct CombinedReward {
  std::vector<std::pair<RewardSpec, double>> terms;  // (spec, weight)
};

double combine(const CombinedReward& cr, const Vec& y);

// Binds a reward to the sampling condition: mode_indicator with an empty
// preferred set scores alignment with the sample's own condition; all other
// variants ignore the condition. scale multiplies the reward when it is used
// as a training advantage.
struct RewardBinding {
  RewardSpec spec;
  double scale = 1.0;

  double operator()(const Vec& y, int c) const;
  Vec grad(const Vec& y, int c) const;
};

}  // namespace fdfo
