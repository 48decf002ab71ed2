#include "fdfo/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fdfo {

TimeGrid TimeGrid::uniform(int steps) {
  if (steps < 1) throw std::invalid_argument("TimeGrid: steps must be >= 1");
  TimeGrid g;
  g.t.resize(steps + 1);
  for (int i = 0; i <= steps; ++i)
    g.t[i] = static_cast<double>(steps - i) / static_cast<double>(steps);
  return g;
}

void TimeGrid::validate() const {
  if (t.size() < 2 || t.front() != 1.0 || t.back() != 0.0)
    throw std::invalid_argument("TimeGrid: endpoints must be exactly 1 and 0");
  for (size_t i = 1; i < t.size(); ++i)
    if (!(t[i] < t[i - 1])) throw std::invalid_argument("TimeGrid: not strictly decreasing");
}

double overshoot_time(double t_next, double gamma) {
  if (!(t_next >= 0.0 && t_next < 1.0))
    throw std::invalid_argument("overshoot_time: t_next must be in [0,1)");
  if (gamma < 0.0) throw std::invalid_argument("overshoot_time: gamma must be >= 0");
  return t_next / (1.0 - gamma * t_next + gamma);
}

Vec noise_mix(const Vec& x_tilde, double t_tilde, double t_next, double gamma,
              const Vec& eps_new) {
  (void)t_next;  // the mixed state lands at t_next; the formula needs t_tilde
  if (x_tilde.size() != eps_new.size())
    throw std::invalid_argument("noise_mix: dimension mismatch");
  double coef = t_tilde * std::sqrt(gamma * gamma + 2.0 * gamma);
  double denom = gamma * t_tilde + 1.0;
  Vec out(x_tilde.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = (x_tilde[i] + coef * eps_new[i]) / denom;
  return out;
}

Trajectory sample_flow(const VelocityFn& vf, int d, const Vec& eps0,
                       const TimeGrid& grid, const StochasticitySchedule* sched,
                       Rng* rng) {
  grid.validate();
  int T = grid.T();
  if (sched && static_cast<int>(sched->gamma.size()) != T)
    throw std::invalid_argument("sample_flow: schedule length != T");
  Trajectory traj;
  traj.t = grid.t;
  if (sched) traj.sched = *sched;
  traj.x.reserve(T + 1);
  traj.v_ref.reserve(T);
  traj.eps.reserve(T);
  traj.x.push_back(eps0);
  Vec v(d), xt(d);
  for (int i = 0; i < T; ++i) {
    const Vec& x = traj.x.back();
    require_finite(x, "sample_flow state");
    vf(x.data(), grid.t[i], v.data());
    traj.v_ref.push_back(v);
    // gamma is forced to zero on the final step (sigma(0) = 0 makes the
    // injection vacuous and the formulas degenerate cleanly)
    double g = (sched && grid.t[i + 1] > 0.0) ? sched->gamma[i] : 0.0;
    double tt = overshoot_time(grid.t[i + 1], g);
    for (int k = 0; k < d; ++k) xt[k] = x[k] + (tt - grid.t[i]) * v[k];
    if (g > 0.0) {
      Vec e(d);
      for (double& z : e) z = rng->gaussian();
      traj.eps.push_back(e);
      traj.x.push_back(noise_mix(xt, tt, grid.t[i + 1], g, e));
    } else {
      traj.eps.push_back(Vec(d, 0.0));
      traj.x.push_back(xt);
    }
  }
  return traj;
}

static VelocityFn net_velocity_fn(const VelocityNet& net, int c, double cfg_w) {
  if (cfg_w >= 0.0) {
    return [&net, c, cfg_w](const double* x, double t, double* out) {
      Vec xv(x, x + net.d);
      Vec v = cfg_velocity(net, xv, t, c, cfg_w);
      for (int k = 0; k < net.d; ++k) out[k] = v[k];
    };
  }
  return [&net, c](const double* x, double t, double* out) {
    velocity_into(net, x, t, c, out);
  };
}

Trajectory euler_sample(const VelocityNet& net, const Vec& eps0, int c,
                        const TimeGrid& grid, double cfg_w) {
  Trajectory traj =
      sample_flow(net_velocity_fn(net, c, cfg_w), net.d, eps0, grid, nullptr, nullptr);
  traj.c = c;
  return traj;
}

Trajectory stochastic_sample(const VelocityNet& net, const Vec& eps0, int c,
                             const TimeGrid& grid,
                             const StochasticitySchedule& sched, Rng& rng,
                             double cfg_w) {
  Trajectory traj =
      sample_flow(net_velocity_fn(net, c, cfg_w), net.d, eps0, grid, &sched, &rng);
  traj.c = c;
  return traj;
}

StochasticitySchedule schedule_uniform(int T, double gamma_const) {
  if (gamma_const < 0.0) throw std::invalid_argument("schedule_uniform: gamma < 0");
  StochasticitySchedule s;
  s.family = StochasticitySchedule::kUniform;
  s.gamma.assign(T, gamma_const);
  return s;
}

double logit_normal_density(double x, double mu, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("logit_normal_density: sigma <= 0");
  if (x <= 0.0 || x >= 1.0) return 0.0;  // endpoint values by continuity
  double z = std::log(x / (1.0 - x)) - mu;
  constexpr double kSqrt2Pi = 2.506628274631000502415765284811;
  return std::exp(-z * z / (2.0 * sigma * sigma)) /
         (sigma * kSqrt2Pi * x * (1.0 - x));
}

StochasticitySchedule schedule_interval(const TimeGrid& grid, double mu_center,
                                        double sigma_center, double sigma_int,
                                        double w_int, Rng& rng) {
  if (sigma_center <= 0.0 || sigma_int <= 0.0)
    throw std::invalid_argument("schedule_interval: sigmas must be > 0");
  int T = grid.T();
  StochasticitySchedule s;
  s.family = StochasticitySchedule::kInterval;
  s.gamma.assign(T, 0.0);
  double center = mu_center + sigma_center * rng.gaussian();
  double sum = 0.0;
  for (int i = 0; i < T; ++i) {
    // densities at the step's target time; endpoints contribute 0
    s.gamma[i] = logit_normal_density(grid.t[i + 1], center, sigma_int);
    sum += s.gamma[i];
  }
  if (sum > 0.0)
    for (double& g : s.gamma) g /= sum;
  for (double& g : s.gamma) g = std::expm1(w_int * g);
  return s;
}

StochasticitySchedule schedule_prior(int T, double mu_logw, double sigma_logw,
                                     Rng& rng) {
  if (sigma_logw <= 0.0) throw std::invalid_argument("schedule_prior: sigma <= 0");
  StochasticitySchedule s;
  s.family = StochasticitySchedule::kPrior;
  s.gamma.assign(T, 0.0);
  double w = mu_logw + sigma_logw * rng.gaussian();
  double e = std::exp(w);
  if (e > 700.0) e = 700.0;  // overflow guard for absurd tail draws
  s.gamma[0] = std::expm1(e);
  return s;
}

WeightMode weight_mode_from_name(const std::string& name) {
  if (name == "uniform") return WeightMode::kUniform;
  if (name == "low_noise") return WeightMode::kLowNoise;
  if (name == "high_noise") return WeightMode::kHighNoise;
  throw std::invalid_argument("unknown gradient weight mode: " + name);
}

std::vector<double> gradient_weights(const TimeGrid& grid, WeightMode mode) {
  int T = grid.T();
  std::vector<double> w(T, 1.0 / static_cast<double>(T));
  if (mode == WeightMode::kUniform) return w;
  double mu = mode == WeightMode::kLowNoise ? -0.3 : 0.3;
  double sum = 0.0;
  for (int i = 0; i < T; ++i) {
    double mid = 0.5 * (grid.t[i] + grid.t[i + 1]);
    w[i] = logit_normal_density(mid, mu, 1.0);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  int d = static_cast<int>(traj.x[0].size());
  out << "step,t";
  for (int k = 0; k < d; ++k) out << ",x" << k;
  for (int k = 0; k < d; ++k) out << ",v" << k;
  out << "\n";
  char buf[64];
  int T = static_cast<int>(traj.x.size()) - 1;
  for (int i = 0; i <= T; ++i) {
    out << i;
    std::snprintf(buf, sizeof buf, ",%.10g", traj.t[i]);
    out << buf;
    for (int k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, ",%.10g", traj.x[i][k]);
      out << buf;
    }
    for (int k = 0; k < d; ++k) {
      double v = i < T ? traj.v_ref[i][k] : 0.0;  // no velocity at the endpoint
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace fdfo
