#pragma once
// Deterministic Euler sampling and the overshoot-based stochastic flow
// sampler, plus stochasticity-schedule generators and per-step gradient
// weights. Scale/noise schedules: s(t) = 1-t, sigma(t) = t/(1-t).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fdfo/linalg.hpp"
#include "fdfo/net.hpp"
#include "fdfo/rng.hpp"

namespace fdfo {

struct TimeGrid {
  std::vector<double> t;  // t[0] = 1 > ... > t[T] = 0
  int T() const { return static_cast<int>(t.size()) - 1; }
  static TimeGrid uniform(int steps);
  void validate() const;
};

struct StochasticitySchedule {
  enum Family { kUniform, kInterval, kPrior };
  Family family = kUniform;
  std::vector<double> gamma;  // length T, all >= 0
};

struct Trajectory {
  std::vector<Vec> x;      // T+1 states; x[0] is the initial noise
  std::vector<double> t;   // grid times
  std::vector<Vec> v_ref;  // velocity recorded at each of the T steps
  std::vector<Vec> eps;    // injected noise per step (zeros where gamma = 0)
  int c = 0;
  StochasticitySchedule sched;
};

// t_tilde = t_next / (1 - gamma*t_next + gamma); sigma(t_tilde)*(1+gamma) =
// sigma(t_next).
double overshoot_time(double t_next, double gamma);

// (x_tilde + t_tilde*sqrt(gamma^2+2gamma)*eps) / (gamma*t_tilde + 1)
Vec noise_mix(const Vec& x_tilde, double t_tilde, double t_next, double gamma,
              const Vec& eps_new);

// Generic velocity source: writes v(x, t) into out (d components).
using VelocityFn = std::function<void(const double* x, double t, double* out)>;

// Shared stepping core. Pass gamma = nullptr for plain Euler. rng may be
// null when the schedule is identically zero (no draws are consumed).
Trajectory sample_flow(const VelocityFn& vf, int d, const Vec& eps0,
                       const TimeGrid& grid, const StochasticitySchedule* sched,
                       Rng* rng);

Trajectory euler_sample(const VelocityNet& net, const Vec& eps0, int c,
                        const TimeGrid& grid, double cfg_w = -1.0);
Trajectory stochastic_sample(const VelocityNet& net, const Vec& eps0, int c,
                             const TimeGrid& grid,
                             const StochasticitySchedule& sched, Rng& rng,
                             double cfg_w = -1.0);

StochasticitySchedule schedule_uniform(int T, double gamma_const);

// exp(-(logit(x)-mu)^2/(2 sigma^2)) / (sigma*sqrt(2 pi)*x*(1-x)); 0 at x in {0,1}.
double logit_normal_density(double x, double mu, double sigma);

// gamma_i = LN(t_{i+1}; center, sigma_int) with center ~ N(mu_center,
// sigma_center), normalized to sum 1, then gamma <- exp(w_int*gamma) - 1.
StochasticitySchedule schedule_interval(const TimeGrid& grid, double mu_center,
                                        double sigma_center, double sigma_int,
                                        double w_int, Rng& rng);

// gamma_0 = exp(exp(W)) - 1 with W ~ N(mu_logw, sigma_logw); rest zero.
StochasticitySchedule schedule_prior(int T, double mu_logw, double sigma_logw,
                                     Rng& rng);

enum class WeightMode { kUniform, kLowNoise, kHighNoise };
WeightMode weight_mode_from_name(const std::string& name);

// Per-step loss weights, nonnegative, summing to 1. Logit-normal modes are
// evaluated at step midpoints (t_i + t_{i+1})/2.
std::vector<double> gradient_weights(const TimeGrid& grid, WeightMode mode);

// CSV dump (step, t, x..., v_ref...) for debugging.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace fdfo
