#include "fdfo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "fdfo/posttrain.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/tape.hpp"
#include "fdfo/threadpool.hpp"

namespace fdfo {

double analytic_gaussian_velocity1(double x, double t, double sigma_d) {
  if (t < 0.0 || t > 1.0) {
    throw std::invalid_argument("analytic velocity: t outside [0,1]");
  }
  double s2 = sigma_d * sigma_d;
  double denom = (1.0 - t) * (1.0 - t) * s2 + t * t;
  return (t - (1.0 - t) * s2) * x / denom;
}

Vec analytic_gaussian_velocity(const Vec& x, double t, double sigma_d) {
  Vec v(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    v[i] = analytic_gaussian_velocity1(x[i], t, sigma_d);
  }
  return v;
}

double gaussian_marginal_var(double t, double sigma_d) {
  return (1.0 - t) * (1.0 - t) * sigma_d * sigma_d + t * t;
}

namespace {

Mat transpose(const Mat& m) {
  Mat out(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) out(c, r) = m(r, c);
  }
  return out;
}

void check_oracle(const LinearFlowOracle& o) {
  if (o.A.rows != o.A.cols || o.A.rows < 1) {
    throw std::invalid_argument("linear flow oracle: A must be square");
  }
  require_finite(o.A.a, "linear flow oracle A");
  if (!(o.sigma_c > 0.0)) {
    throw std::invalid_argument("linear flow oracle: sigma_c must be > 0");
  }
  if (o.reward.kind != RewardSpec::kLinear && o.reward.kind != RewardSpec::kRadial) {
    throw std::invalid_argument(
        "linear flow oracle admits only linear or radial rewards");
  }
}

Vec oracle_base_point(const LinearFlowOracle& o) {
  return o.x0.empty() ? Vec(o.A.rows, 0.0) : o.x0;
}

}  // namespace

SteinReport stein_check(const LinearFlowOracle& oracle, long long n,
                        uint64_t seed, const double* baseline_override) {
  check_oracle(oracle);
  if (n < 10000) {
    throw std::invalid_argument("stein_check: need at least 1e4 samples");
  }
  const int d = oracle.A.rows;
  const Vec x0 = oracle_base_point(oracle);
  const Vec y0 = matvec(oracle.A, x0);
  const double r0 =
      baseline_override ? *baseline_override : reward(oracle.reward, y0);

  // Fixed-size blocks with independent streams, reduced in block order, so
  // the estimate is identical for any thread count.
  const long long block = 8192;
  const long long n_blocks = (n + block - 1) / block;
  std::vector<Vec> bsum(n_blocks, Vec(d, 0.0));
  std::vector<Vec> bsq(n_blocks, Vec(d, 0.0));
  parallel_for(static_cast<int>(n_blocks), [&](int b) {
    Rng rng(seed, stream_id(StreamKind::mc, static_cast<uint32_t>(b), 1));
    long long lo = b * block;
    long long hi = std::min(n, lo + block);
    Vec x1(d), g(d);
    for (long long s = lo; s < hi; ++s) {
      for (int i = 0; i < d; ++i) x1[i] = x0[i] + oracle.sigma_c * rng.gaussian();
      Vec y1 = matvec(oracle.A, x1);
      double dr = reward(oracle.reward, y1) - r0;
      for (int i = 0; i < d; ++i) {
        g[i] = dr * (y1[i] - y0[i]);
        bsum[b][i] += g[i];
        bsq[b][i] += g[i] * g[i];
      }
    }
  });

  SteinReport rep;
  rep.n_samples = n;
  rep.mc_estimate.assign(d, 0.0);
  rep.stderr_mc.assign(d, 0.0);
  Vec sumsq(d, 0.0);
  for (long long b = 0; b < n_blocks; ++b) {
    for (int i = 0; i < d; ++i) {
      rep.mc_estimate[i] += bsum[b][i];
      sumsq[i] += bsq[b][i];
    }
  }
  for (int i = 0; i < d; ++i) {
    rep.mc_estimate[i] /= static_cast<double>(n);
    double var =
        std::max(0.0, sumsq[i] / n - rep.mc_estimate[i] * rep.mc_estimate[i]);
    rep.stderr_mc[i] = std::sqrt(var / static_cast<double>(n));
  }

  Mat aat(d, d);
  Mat at = transpose(oracle.A);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += oracle.A(r, k) * at(k, c);
      aat(r, c) = s;
    }
  }
  Vec grad0 = reward_grad(oracle.reward, y0);
  rep.analytic = matvec(aat, grad0);
  for (int i = 0; i < d; ++i) rep.analytic[i] *= oracle.sigma_c * oracle.sigma_c;

  double num = 0.0, den = 0.0;
  for (int i = 0; i < d; ++i) {
    double e = rep.mc_estimate[i] - rep.analytic[i];
    num += e * e;
    den += rep.analytic[i] * rep.analytic[i];
  }
  rep.rel_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return rep;
}

AscentReport prototype_fdfo_step(const LinearFlowOracle& oracle, long long n,
                                 uint64_t seed) {
  check_oracle(oracle);
  if (n < 2) throw std::invalid_argument("prototype: need at least 2 samples");
  const int d = oracle.A.rows;
  const Vec x0 = oracle_base_point(oracle);
  const Vec y0 = matvec(oracle.A, x0);
  const double r0 = reward(oracle.reward, y0);
  const Vec grad0 = reward_grad(oracle.reward, y0);

  Rng rng(seed, stream_id(StreamKind::mc, 0, 2));
  double sum = 0.0, sumsq = 0.0;
  Vec x1(d), g(d);
  for (long long s = 0; s < n; ++s) {
    for (int i = 0; i < d; ++i) x1[i] = x0[i] + oracle.sigma_c * rng.gaussian();
    Vec y1 = matvec(oracle.A, x1);
    double dr = reward(oracle.reward, y1) - r0;
    for (int i = 0; i < d; ++i) g[i] = dr * (y1[i] - y0[i]);
    Vec jg = matvec(oracle.A, g);  // exact Jacobian application
    double stat = dot(grad0, jg);
    sum += stat;
    sumsq += stat * stat;
  }
  AscentReport rep;
  rep.n_samples = n;
  rep.mean = sum / static_cast<double>(n);
  double var = std::max(0.0, sumsq / n - rep.mean * rep.mean);
  rep.stderr_mc = std::sqrt(var / static_cast<double>(n));
  return rep;
}

Vec complete_deterministic(const VelocityNet& net, const Vec& x,
                           const TimeGrid& grid, int step_idx, int c,
                           double cfg_w) {
  if (step_idx < 0 || step_idx > grid.T()) {
    throw std::invalid_argument("complete_deterministic: step index out of range");
  }
  Vec cur = x;
  Vec v(net.d);
  for (int i = step_idx; i < grid.T(); ++i) {
    if (cfg_w >= 0.0) {
      v = cfg_velocity(net, cur, grid.t[i], c, cfg_w);
    } else {
      velocity_into(net, cur.data(), grid.t[i], c, v.data());
    }
    double dt = grid.t[i + 1] - grid.t[i];
    for (int k = 0; k < net.d; ++k) cur[k] += dt * v[k];
  }
  return cur;
}

AscentReport prototype_fdfo_step(const VelocityNet& net,
                                 const RewardBinding& reward, int j,
                                 const TimeGrid& grid, double sigma_c,
                                 long long n, uint64_t seed, double h,
                                 double cfg_w) {
  if (!(sigma_c > 0.0)) throw std::invalid_argument("prototype: sigma_c must be > 0");
  if (!(h > 0.0)) throw std::invalid_argument("prototype: h must be > 0");
  if (j < 0 || j >= grid.T()) {
    throw std::invalid_argument("prototype: step index out of range");
  }
  if (!reward.spec.differentiable()) {
    throw std::invalid_argument("prototype requires a differentiable reward");
  }
  if (n < 2) throw std::invalid_argument("prototype: need at least 2 samples");

  const int d = net.d;
  std::vector<double> stats(n);
  parallel_for(static_cast<int>(n), [&](int s) {
    Rng rng(seed, stream_id(StreamKind::mc, static_cast<uint32_t>(s), 2));
    int c = std::min(net.C - 1, static_cast<int>(rng.uniform() * net.C));
    // deterministic prefix to step j
    Vec xj(d);
    for (int i = 0; i < d; ++i) xj[i] = rng.gaussian();
    Vec v(d);
    for (int i = 0; i < j; ++i) {
      if (cfg_w >= 0.0) {
        v = cfg_velocity(net, xj, grid.t[i], c, cfg_w);
      } else {
        velocity_into(net, xj.data(), grid.t[i], c, v.data());
      }
      double dt = grid.t[i + 1] - grid.t[i];
      for (int k = 0; k < d; ++k) xj[k] += dt * v[k];
    }

    Vec x_t = complete_deterministic(net, xj, grid, j, c, cfg_w);
    double r0 = reward(x_t, c);
    Vec grad_r = reward.grad(x_t, c);

    Vec xj_pert = xj;
    for (int k = 0; k < d; ++k) xj_pert[k] += sigma_c * rng.gaussian();
    Vec x_t2 = complete_deterministic(net, xj_pert, grid, j, c, cfg_w);
    double dr = reward(x_t2, c) - r0;
    Vec g(d);
    for (int k = 0; k < d; ++k) g[k] = dr * (x_t2[k] - x_t[k]);

    double gn = std::sqrt(sq_norm(g));
    if (gn == 0.0) {
      stats[s] = 0.0;
      return;
    }
    // central finite difference applies the completion Jacobian to g
    Vec xp = xj, xm = xj;
    for (int k = 0; k < d; ++k) {
      xp[k] += h * g[k] / gn;
      xm[k] -= h * g[k] / gn;
    }
    Vec fp = complete_deterministic(net, xp, grid, j, c, cfg_w);
    Vec fm = complete_deterministic(net, xm, grid, j, c, cfg_w);
    double stat = 0.0;
    for (int k = 0; k < d; ++k) {
      stat += grad_r[k] * (fp[k] - fm[k]) / (2.0 * h) * gn;
    }
    stats[s] = stat;
  });

  double sum = 0.0, sumsq = 0.0;
  for (double s : stats) {
    sum += s;
    sumsq += s * s;
  }
  AscentReport rep;
  rep.n_samples = n;
  rep.mean = sum / static_cast<double>(n);
  double var = std::max(0.0, sumsq / n - rep.mean * rep.mean);
  rep.stderr_mc = std::sqrt(var / static_cast<double>(n));
  return rep;
}

double jacobian_psd_stat(const std::function<Vec(const Vec&)>& map, const Vec& x,
                         double h) {
  if (!(h > 0.0)) throw std::invalid_argument("jacobian_psd_stat: h must be > 0");
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd sym(d, d);
  Mat jac(d, d);
  for (int k = 0; k < d; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    Vec fp = map(xp);
    Vec fm = map(xm);
    if (static_cast<int>(fp.size()) != d || static_cast<int>(fm.size()) != d) {
      throw std::invalid_argument("jacobian_psd_stat: map must preserve dimension");
    }
    for (int r = 0; r < d; ++r) jac(r, k) = (fp[r] - fm[r]) / (2.0 * h);
  }
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      double v = 0.5 * (jac(r, c) + jac(c, r));
      if (!std::isfinite(v)) {
        throw std::runtime_error("jacobian_psd_stat: non-finite Jacobian entry");
      }
      sym(r, c) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("jacobian_psd_stat: eigensolver failed");
  }
  return es.eigenvalues().minCoeff();
}

double jacobian_psd_stat(const VelocityNet& net, const Vec& x,
                         const TimeGrid& grid, int step_idx, int c, double h,
                         double cfg_w) {
  return jacobian_psd_stat(
      [&](const Vec& y) {
        return complete_deterministic(net, y, grid, step_idx, c, cfg_w);
      },
      x, h);
}

MarginalReport marginal_check(double sigma_d, const TimeGrid& grid,
                              const StochasticitySchedule& sched, int n,
                              uint64_t seed, TransportMode mode,
                              bool break_mixer) {
  grid.validate();
  const int T = grid.T();
  if (static_cast<int>(sched.gamma.size()) != T) {
    throw std::invalid_argument("marginal_check: schedule length mismatch");
  }
  if (n < 2) throw std::invalid_argument("marginal_check: need at least 2 chains");

  // Fixed-size blocks, each with its own stream, reduced in block order.
  const int block = 512;
  const int n_blocks = (n + block - 1) / block;
  std::vector<std::vector<double>> bsum(n_blocks),
      bsq(n_blocks);  // per grid index
  parallel_for(n_blocks, [&](int b) {
    bsum[b].assign(T + 1, 0.0);
    bsq[b].assign(T + 1, 0.0);
    Rng rng(seed, stream_id(StreamKind::mc, static_cast<uint32_t>(b), 3));
    int lo = b * block;
    int hi = std::min(n, lo + block);
    for (int chain = lo; chain < hi; ++chain) {
      double x = rng.gaussian();  // marginal at t=1 is N(0,1)
      bsum[b][0] += x;
      bsq[b][0] += x * x;
      for (int i = 0; i < T; ++i) {
        double t = grid.t[i];
        double t_next = grid.t[i + 1];
        double g = t_next == 0.0 ? 0.0 : sched.gamma[i];
        double tt = overshoot_time(t_next, g);
        if (mode == TransportMode::kExact) {
          x *= std::sqrt(gaussian_marginal_var(tt, sigma_d) /
                         gaussian_marginal_var(t, sigma_d));
        } else {
          x += (tt - t) * analytic_gaussian_velocity1(x, t, sigma_d);
        }
        if (g > 0.0) {
          double coef = tt * std::sqrt(g * g + 2.0 * g);
          if (break_mixer) coef *= 2.0;
          x = (x + coef * rng.gaussian()) / (g * tt + 1.0);
        }
        bsum[b][i + 1] += x;
        bsq[b][i + 1] += x * x;
      }
    }
  });

  std::vector<double> sum(T + 1, 0.0), sumsq(T + 1, 0.0);
  for (int b = 0; b < n_blocks; ++b) {
    for (int i = 0; i <= T; ++i) {
      sum[i] += bsum[b][i];
      sumsq[i] += bsq[b][i];
    }
  }

  MarginalReport rep;
  rep.t = grid.t;
  rep.n_chains = n;
  rep.z_mean.resize(T + 1);
  rep.z_var.resize(T + 1);
  for (int i = 0; i <= T; ++i) {
    double target = gaussian_marginal_var(grid.t[i], sigma_d);
    double mean = sum[i] / n;
    double var = sumsq[i] / n - mean * mean;
    rep.z_mean[i] = std::abs(mean) / std::sqrt(target / n);
    rep.z_var[i] = std::abs(var - target) / (target * std::sqrt(2.0 / n));
    rep.max_abs_z = std::max({rep.max_abs_z, rep.z_mean[i], rep.z_var[i]});
  }
  return rep;
}

double gradcheck_max_rel_err(int cases, uint64_t seed) {
  if (cases < 1) throw std::invalid_argument("gradcheck: need at least 1 case");
  double max_rel = 0.0;
  for (int k = 0; k < cases; ++k) {
    Rng rng(seed, stream_id(StreamKind::init, static_cast<uint32_t>(k), 9));
    VelocityNet net = make_net(2, 3, seed + k, 12, 2, 4);
    for (double& th : net.theta) th = 0.4 * rng.gaussian();
    VelocityNet base = net;
    for (double& th : base.theta) th += 0.05 * rng.gaussian();

    Vec x = {rng.gaussian(), rng.gaussian()};
    double t = rng.uniform();
    int c = std::min(net.C, static_cast<int>(rng.uniform() * (net.C + 1)));
    Vec v_ref = velocity(net, x, t, c);
    Vec delta = {0.3 * rng.gaussian(), 0.3 * rng.gaussian()};
    // nudge the reference so the proxy ratio sits away from 1 (keeps the
    // finite-difference probe inside a single piecewise branch)
    for (double& v : v_ref) v += 0.2 * rng.gaussian();
    Vec v_target = velocity_target(v_ref, delta);
    double adv = rng.gaussian();
    double lambda = 0.5;
    ClipStyle style = k % 2 == 0 ? ClipStyle::kPpo : ClipStyle::kSpo;
    const double eps_clip = 0.8, eps_spo = 2.0;

    auto loss_at = [&](const Vec& theta) {
      VelocityNet probe = net;
      probe.theta = theta;
      Vec v_cur = velocity(probe, x, t, c);
      double ratio = proxy_ratio(v_target, v_ref, v_cur);
      Vec v_base = velocity(base, x, t, c);
      return clipped_objective(ratio, adv, style, style == ClipStyle::kPpo
                                                      ? eps_clip
                                                      : eps_spo) +
             kl_penalty(v_base, v_cur, lambda);
    };

    // tape gradient
    Vec grad(net.theta.size(), 0.0);
    Tape tape(net.theta, &grad);
    int vc = velocity_on_tape(net, tape, x, t, c);
    int vt = tape.constant(v_target.data(), 2);
    double ref_sq = sq_norm(v_target - v_ref);
    int logr = tape.sub(tape.constant_scalar(ref_sq),
                        tape.sq_norm_op(tape.sub(vt, vc)));
    int ratio_node = tape.exp_clamp(logr, -20.0, 20.0);
    double ratio = proxy_ratio(v_target, v_ref, velocity(net, x, t, c));
    bool clipped = false;
    int loss = objective_on_tape(tape, ratio_node, ratio, adv, style, eps_clip,
                                 eps_spo, &clipped);
    Vec v_base = velocity(base, x, t, c);
    int vb = tape.constant(v_base.data(), 2);
    loss = tape.add(loss, tape.scale(tape.sq_norm_op(tape.sub(vb, vc)), lambda));
    tape.backward(loss, 1.0);

    // central finite difference along a random direction
    Vec u(net.theta.size());
    double un = 0.0;
    for (double& ui : u) {
      ui = rng.gaussian();
      un += ui * ui;
    }
    un = std::sqrt(un);
    for (double& ui : u) ui /= un;
    const double h = 1e-5;
    Vec tp = net.theta, tm = net.theta;
    for (size_t i = 0; i < u.size(); ++i) {
      tp[i] += h * u[i];
      tm[i] -= h * u[i];
    }
    double fd = (loss_at(tp) - loss_at(tm)) / (2.0 * h);
    double ad = dot(grad, u);
    double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-10});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace fdfo
