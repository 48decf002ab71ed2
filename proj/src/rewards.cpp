#include "fdfo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fdfo {

RewardSpec::Kind reward_kind_from_name(const std::string& name) {
  if (name == "sigmoid_halfplane") return RewardSpec::kSigmoidHalfplane;
  if (name == "radial") return RewardSpec::kRadial;
  if (name == "mode_indicator") return RewardSpec::kModeIndicator;
  if (name == "linear") return RewardSpec::kLinear;
  if (name == "step") return RewardSpec::kStep;
  throw std::invalid_argument("unknown reward kind: " + name);
}

std::string reward_kind_name(RewardSpec::Kind k) {
  switch (k) {
    case RewardSpec::kSigmoidHalfplane: return "sigmoid_halfplane";
    case RewardSpec::kRadial: return "radial";
    case RewardSpec::kModeIndicator: return "mode_indicator";
    case RewardSpec::kLinear: return "linear";
    case RewardSpec::kStep: return "step";
  }
  throw std::logic_error("unreachable reward kind");
}

namespace {

double dot_checked(const Vec& a, const Vec& y, const char* what) {
  if (a.size() != y.size()) {
    throw std::invalid_argument(std::string(what) +
                                ": coefficient/input dimension mismatch");
  }
  return dot(a, y);
}

}  // namespace

double reward(const RewardSpec& spec, const Vec& y) {
  require_finite(y, "reward input");
  switch (spec.kind) {
    case RewardSpec::kSigmoidHalfplane: {
      const double z = spec.gain * dot_checked(spec.u, y, "sigmoid_halfplane");
      return 100.0 / (1.0 + std::exp(-z));
    }
    case RewardSpec::kRadial: {
      if (spec.mu.size() != y.size()) {
        throw std::invalid_argument("radial: center/input dimension mismatch");
      }
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - spec.mu[i];
        s += d * d;
      }
      return -s;
    }
    case RewardSpec::kModeIndicator: {
      const int m = nearest_mode(spec.modes, y);
      const bool hit = std::find(spec.preferred.begin(), spec.preferred.end(),
                                 m) != spec.preferred.end();
      return hit ? 100.0 : 0.0;
    }
    case RewardSpec::kLinear:
      return dot_checked(spec.b, y, "linear");
    case RewardSpec::kStep:
      return dot_checked(spec.u, y, "step") > spec.tau ? 100.0 : 0.0;
  }
  throw std::logic_error("unreachable reward kind");
}

Vec reward_grad(const RewardSpec& spec, const Vec& y) {
  require_finite(y, "reward_grad input");
  switch (spec.kind) {
    case RewardSpec::kSigmoidHalfplane: {
      const double z = spec.gain * dot_checked(spec.u, y, "sigmoid_halfplane");
      const double s = 1.0 / (1.0 + std::exp(-z));
      const double coef = 100.0 * spec.gain * s * (1.0 - s);
      Vec g(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) g[i] = coef * spec.u[i];
      return g;
    }
    case RewardSpec::kRadial: {
      if (spec.mu.size() != y.size()) {
        throw std::invalid_argument("radial: center/input dimension mismatch");
      }
      Vec g(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        g[i] = -2.0 * (y[i] - spec.mu[i]);
      }
      return g;
    }
    case RewardSpec::kLinear:
      if (spec.b.size() != y.size()) {
        throw std::invalid_argument("linear: coefficient dimension mismatch");
      }
      return spec.b;
    case RewardSpec::kModeIndicator:
    case RewardSpec::kStep:
      throw std::invalid_argument("reward_grad: " +
                                  reward_kind_name(spec.kind) +
                                  " is not differentiable");
  }
  throw std::logic_error("unreachable reward kind");
}

double combine(const CombinedReward& cr, const Vec& y) {
  double s = 0.0;
  for (const auto& [spec, w] : cr.terms) s += w * reward(spec, y);
  return s;
}

namespace {

// Resolve an empty preferred set against the sampling condition: the
// preferred modes become exactly those whose assigned condition matches c.
RewardSpec bind_condition(const RewardSpec& spec, int c) {
  if (spec.kind != RewardSpec::kModeIndicator || !spec.preferred.empty()) {
    return spec;
  }
  RewardSpec bound = spec;
  for (int m = 0; m < spec.modes.n_modes(); ++m) {
    if (spec.modes.mode_condition(m) == c) bound.preferred.push_back(m);
  }
  return bound;
}

}  // namespace

double RewardBinding::operator()(const Vec& y, int c) const {
  return scale * reward(bind_condition(spec, c), y);
}

Vec RewardBinding::grad(const Vec& y, int c) const {
  Vec g = reward_grad(bind_condition(spec, c), y);
  for (double& v : g) v *= scale;
  return g;
}

}  // namespace fdfo
