#pragma once
// Executable oracles: the analytic Gaussian flow, a Monte-Carlo check of the
// smoothed-gradient identity for linear flows, the finite-difference ascent
// prototype, Jacobian positive-definiteness statistics, and sampler marginal
// checks with fault-injection controls.

#include <cstdint>
#include <functional>
#include <vector>

#include "fdfo/linalg.hpp"
#include "fdfo/net.hpp"
#include "fdfo/rewards.hpp"
#include "fdfo/sampler.hpp"

namespace fdfo {

// Exact conditional-expectation velocity for x0 ~ N(0, sigma_d^2 I) under the
// linear interpolation path: v*(x,t) = (t - (1-t) sigma_d^2) x / ((1-t)^2
// sigma_d^2 + t^2).
double analytic_gaussian_velocity1(double x, double t, double sigma_d);
Vec analytic_gaussian_velocity(const Vec& x, double t, double sigma_d);

// Marginal variance of the analytic flow at time t.
double gaussian_marginal_var(double t, double sigma_d);

// --- smoothed-gradient identity -------------------------------------------

// Linear flow f(x) = A x, so the Jacobian is A everywhere and first-order
// Taylor reasoning is exact. Only linear and radial (quadratic) rewards are
// admitted: for these the smoothed reward has the same gradient as the raw
// one, making the analytic side exact.
struct LinearFlowOracle {
  Mat A;
  RewardSpec reward;
  double sigma_c = 0.1;
  Vec x0;  // base point (defaults to the origin if empty)
};

struct SteinReport {
  Vec mc_estimate;   // E[dR * dx] Monte-Carlo mean
  Vec analytic;      // sigma_c^2 * A A^T * grad R(A x0)
  Vec stderr_mc;     // per-component MC standard errors
  double rel_error;  // |mc - analytic| / |analytic| (L2)
  long long n_samples = 0;
};

// With baseline_override, R(A x0) is replaced by that constant in dR; the
// expectation is unchanged (the baseline only reduces variance).
SteinReport stein_check(const LinearFlowOracle& oracle, long long n,
                        uint64_t seed, const double* baseline_override = nullptr);

// --- finite-difference ascent prototype ------------------------------------

struct AscentReport {
  double mean = 0.0;    // empirical mean of grad R(x_T)^T J (dR * dx)
  double stderr_mc = 0.0;
  long long n_samples = 0;
  double t_stat() const { return stderr_mc > 0.0 ? mean / stderr_mc : 0.0; }
};

// Linear-flow version subs the exact Jacobian A.
AscentReport prototype_fdfo_step(const LinearFlowOracle& oracle, long long n,
                                 uint64_t seed);

// Net version: per perturbation draws (c, initial noise), integrates the
// deterministic sampler to step j, perturbs the state by N(0, sigma_c^2 I),
// completes both trajectories deterministically, and applies the completion
// Jacobian to dR*dx by a central finite difference.
AscentReport prototype_fdfo_step(const VelocityNet& net,
                                 const RewardBinding& reward, int j,
                                 const TimeGrid& grid, double sigma_c,
                                 long long n, uint64_t seed, double h = 1e-4,
                                 double cfg_w = -1.0);

// --- Jacobian statistics ----------------------------------------------------

// Minimum eigenvalue of the symmetric part of the central finite-difference
// Jacobian of map at x. Throws std::runtime_error on non-finite entries.
double jacobian_psd_stat(const std::function<Vec(const Vec&)>& map, const Vec& x,
                         double h = 1e-4);

// Same, for the deterministic completion map from grid step step_idx to t=0.
double jacobian_psd_stat(const VelocityNet& net, const Vec& x,
                         const TimeGrid& grid, int step_idx, int c,
                         double h = 1e-4, double cfg_w = -1.0);

// Deterministic completion of the flow from state x at grid step step_idx.
Vec complete_deterministic(const VelocityNet& net, const Vec& x,
                           const TimeGrid& grid, int step_idx, int c,
                           double cfg_w = -1.0);

// --- marginal preservation ---------------------------------------------------

enum class TransportMode {
  kExact,  // per-step exact integral of the analytic flow (variance scaling)
  kEuler,  // per-step Euler update (carries integration bias into the stats)
};

struct MarginalReport {
  std::vector<double> t;       // grid times (T+1 entries)
  std::vector<double> z_mean;  // per-time mean z-scores
  std::vector<double> z_var;   // per-time variance z-scores
  double max_abs_z = 0.0;
  int n_chains = 0;
};

// Runs n scalar chains of the stochastic sampler on the analytic Gaussian
// flow and z-scores the per-time empirical mean/variance against (0,
// (1-t)^2 sigma_d^2 + t^2). break_mixer doubles the injected-noise
// coefficient (negative control).
MarginalReport marginal_check(double sigma_d, const TimeGrid& grid,
                              const StochasticitySchedule& sched, int n,
                              uint64_t seed,
                              TransportMode mode = TransportMode::kExact,
                              bool break_mixer = false);

// --- autodiff spot check ------------------------------------------------------

// Max relative error between tape gradients and central finite differences of
// the full per-sample training loss over `cases` randomized nets/inputs.
double gradcheck_max_rel_err(int cases, uint64_t seed);

}  // namespace fdfo
