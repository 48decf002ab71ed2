#include "fdfo/posttrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>

#include "fdfo/checkpoint.hpp"
#include "fdfo/errors.hpp"
#include "fdfo/metrics.hpp"
#include "fdfo/tape.hpp"
#include "fdfo/threadpool.hpp"

namespace fdfo {

void PostTrainConfig::validate() const {
  if (algo != "fdfo" && algo != "grpo") {
    throw std::invalid_argument("algo must be fdfo or grpo, got " + algo);
  }
  if (pairs < 1 || batches < 1 || steps < 1) {
    throw std::invalid_argument("pairs, batches, steps must all be >= 1");
  }
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) {
    throw std::invalid_argument("eps_clip must lie in (0,1)");
  }
  if (!(eps_spo > 0.0)) throw std::invalid_argument("eps_spo must be positive");
  if (kl_weight < 0.0) throw std::invalid_argument("kl_weight must be >= 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
  clip_style_from_name(clip_style);          // throws on unknown
  weight_mode_from_name(weight_mode);        // throws on unknown
  if (sched.family != "uniform" && sched.family != "interval" &&
      sched.family != "prior") {
    throw std::invalid_argument("unknown schedule family: " + sched.family);
  }
  if (sched.family == "uniform" && sched.gamma < 0.0) {
    throw std::invalid_argument("uniform schedule gamma must be >= 0");
  }
  if (algo == "grpo") {
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if ((2 * pairs) % group_size != 0) {
      throw std::invalid_argument(
          "grpo rollout budget 2*pairs must be divisible by group_size");
    }
  }
}

const std::vector<std::string>& EpochMetrics::csv_columns() {
  static const std::vector<std::string> cols = {
      "epoch",      "mean_reward",   "reward_std", "mean_abs_dR",
      "mean_rms_dx", "clip_fraction", "kl_value",   "grad_norm",
      "diversity",  "wall_s",        "net_evals",  "reward_evals"};
  return cols;
}

std::vector<double> EpochMetrics::csv_row() const {
  return {static_cast<double>(epoch),
          mean_reward,
          reward_std,
          mean_abs_dr,
          mean_rms_dx,
          clip_fraction,
          kl_value,
          grad_norm,
          diversity,
          wall_s,
          static_cast<double>(net_evals),
          static_cast<double>(reward_evals)};
}

bool timing_enabled() { return std::getenv("FDFO_TIMING") != nullptr; }

Vec normalize_delta(const Vec& dx) {
  if (dx.empty()) return dx;
  double r = rms_norm(dx);
  double denom = r * r + 1e-6;
  Vec out(dx.size());
  for (size_t i = 0; i < dx.size(); ++i) out[i] = dx[i] / denom;
  return out;
}

Vec velocity_target(const Vec& v_ref, const Vec& delta) {
  if (v_ref.size() != delta.size()) {
    throw std::invalid_argument("velocity_target: dimension mismatch");
  }
  Vec out(v_ref.size());
  for (size_t i = 0; i < v_ref.size(); ++i) out[i] = v_ref[i] - delta[i];
  return out;
}

namespace {

constexpr double kLogRatioClamp = 20.0;

double log_proxy_ratio(const Vec& v_target, const Vec& v_ref, const Vec& v_cur) {
  if (v_target.size() != v_ref.size() || v_target.size() != v_cur.size()) {
    throw std::invalid_argument("proxy_ratio: dimension mismatch");
  }
  double a = 0.0, b = 0.0;
  for (size_t i = 0; i < v_target.size(); ++i) {
    double dr = v_target[i] - v_ref[i];
    double dc = v_target[i] - v_cur[i];
    a += dr * dr;
    b += dc * dc;
  }
  return std::clamp(a - b, -kLogRatioClamp, kLogRatioClamp);
}

}  // namespace

double proxy_ratio(const Vec& v_target, const Vec& v_ref, const Vec& v_cur) {
  return std::exp(log_proxy_ratio(v_target, v_ref, v_cur));
}

ClipStyle clip_style_from_name(const std::string& name) {
  if (name == "ppo") return ClipStyle::kPpo;
  if (name == "spo") return ClipStyle::kSpo;
  throw std::invalid_argument("unknown clip style: " + name);
}

double clipped_objective(double ratio, double adv, ClipStyle style, double eps) {
  if (style == ClipStyle::kPpo) {
    double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    return -std::min(ratio * adv, clipped * adv);
  }
  double down = 1.0 - std::abs(ratio - 1.0) / eps;
  return -ratio * adv * std::max(0.0, down);
}

double kl_penalty(const Vec& v_base, const Vec& v_cur, double lambda) {
  if (v_base.size() != v_cur.size()) {
    throw std::invalid_argument("kl_penalty: dimension mismatch");
  }
  if (lambda < 0.0) throw std::invalid_argument("kl_penalty: lambda must be >= 0");
  double s = 0.0;
  for (size_t i = 0; i < v_base.size(); ++i) {
    double d = v_base[i] - v_cur[i];
    s += d * d;
  }
  return lambda * s;
}

double endpoint_diversity(const std::vector<Vec>& endpoints,
                          const std::vector<int>& conds) {
  if (endpoints.size() != conds.size()) {
    throw std::invalid_argument("endpoint_diversity: size mismatch");
  }
  int max_c = -1;
  for (int c : conds) max_c = std::max(max_c, c);
  double total = 0.0;
  int groups = 0;
  for (int c = 0; c <= max_c; ++c) {
    std::vector<const Vec*> pts;
    for (size_t i = 0; i < conds.size(); ++i) {
      if (conds[i] == c) pts.push_back(&endpoints[i]);
    }
    if (pts.size() < 2) continue;
    double sum = 0.0;
    size_t npairs = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
      for (size_t j = i + 1; j < pts.size(); ++j) {
        double d2 = 0.0;
        for (size_t k = 0; k < pts[i]->size(); ++k) {
          double d = (*pts[i])[k] - (*pts[j])[k];
          d2 += d * d;
        }
        sum += std::sqrt(d2);
        ++npairs;
      }
    }
    total += sum / static_cast<double>(npairs);
    ++groups;
  }
  return groups == 0 ? 0.0 : total / groups;
}

StochasticitySchedule draw_schedule(const ScheduleParams& p, const TimeGrid& grid,
                                    Rng& rng) {
  if (p.family == "uniform") return schedule_uniform(grid.T(), p.gamma);
  if (p.family == "interval") {
    return schedule_interval(grid, p.mu, p.sigma, p.width, p.gain, rng);
  }
  if (p.family == "prior") return schedule_prior(grid.T(), p.mu, p.sigma, rng);
  throw std::invalid_argument("unknown schedule family: " + p.family);
}

namespace {

int draw_condition(Rng& rng, int C) {
  int c = static_cast<int>(rng.uniform() * C);
  return std::min(c, C - 1);
}

double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

// Velocity through the same path (plain or guided) the rollouts used.
Vec eval_velocity(const VelocityNet& net, const Vec& x, double t, int c,
                  double cfg_scale) {
  return cfg_scale >= 0.0 ? cfg_velocity(net, x, t, c, cfg_scale)
                          : velocity(net, x, t, c);
}

int eval_velocity_on_tape(const VelocityNet& net, Tape& tape, const Vec& x,
                          double t, int c, double cfg_scale) {
  return cfg_scale >= 0.0 ? cfg_velocity_on_tape(net, tape, x, t, c, cfg_scale)
                          : velocity_on_tape(net, tape, x, t, c);
}

}  // namespace

int objective_on_tape(Tape& tape, int ratio_node, double ratio, double adv,
                      ClipStyle style, double eps_clip, double eps_spo,
                      bool* clipped_out) {
  if (style == ClipStyle::kPpo) {
    double unclipped = ratio * adv;
    double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv;
    *clipped_out = ratio < 1.0 - eps_clip || ratio > 1.0 + eps_clip;
    if (unclipped <= clipped) {
      // ties take the unclipped branch so gradients flow at ratio = 1
      return tape.scale(ratio_node, -adv);
    }
    return tape.constant_scalar(-clipped);
  }
  double a = std::abs(ratio - 1.0);
  *clipped_out = a >= eps_spo;
  if (a >= eps_spo) return tape.constant_scalar(0.0);
  double s = ratio >= 1.0 ? 1.0 : -1.0;
  // 1 - s*(ratio-1)/eps  ==  (1 + s/eps) - (s/eps) * ratio
  int factor = tape.sub(tape.constant_scalar(1.0 + s / eps_spo),
                        tape.scale(ratio_node, s / eps_spo));
  return tape.scale(tape.mul(ratio_node, factor), -adv);
}

namespace {

struct ShuffledBatches {
  std::vector<std::vector<int>> batches;  // sample indices, each sorted
};

ShuffledBatches shuffle_and_split(int n, int B, uint64_t seed, int epoch_idx) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, stream_id(StreamKind::shuffle, epoch_idx, 0));
  for (int i = n - 1; i >= 1; --i) {
    int j = std::min(i, static_cast<int>(rng.uniform() * (i + 1)));
    std::swap(order[i], order[j]);
  }
  ShuffledBatches out;
  out.batches.resize(B);
  for (int b = 0; b < B; ++b) {
    int lo = static_cast<int>(static_cast<long long>(b) * n / B);
    int hi = static_cast<int>(static_cast<long long>(b + 1) * n / B);
    out.batches[b].assign(order.begin() + lo, order.begin() + hi);
    // deterministic accumulation order within the batch
    std::sort(out.batches[b].begin(), out.batches[b].end());
  }
  return out;
}

struct Timer {
  bool on = timing_enabled();
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    if (!on) return 0.0;
    auto dt = std::chrono::steady_clock::now() - t0;
    return std::chrono::duration<double>(dt).count();
  }
};

}  // namespace

std::vector<RolloutPair> generate_pairs(const VelocityNet& net,
                                        const DatasetSpec& data,
                                        const RewardBinding& reward,
                                        const PostTrainConfig& cfg,
                                        const TimeGrid& grid, int epoch_idx) {
  (void)data;  // conditions come from the net's vocabulary, kept for symmetry
  const int P = cfg.pairs;
  const int d = net.d;
  const int T = grid.T();
  std::vector<RolloutPair> pairs(P);
  parallel_for(P, [&](int p) {
    RolloutPair& out = pairs[p];
    Rng rs(cfg.seed, stream_id(StreamKind::schedule, epoch_idx, p));
    out.c = draw_condition(rs, net.C);
    StochasticitySchedule sched = draw_schedule(cfg.sched, grid, rs);

    Rng r1(cfg.seed, stream_id(StreamKind::pair, epoch_idx, p));
    Rng r2(cfg.seed, stream_id(StreamKind::pair_hat, epoch_idx, p));
    out.eps.resize(d);
    for (int i = 0; i < d; ++i) out.eps[i] = r1.gaussian();
    Vec eps_hat = out.eps;
    if (!cfg.shared_init_noise) {
      for (int i = 0; i < d; ++i) eps_hat[i] = r2.gaussian();
    }

    if (cfg.deterministic_second) {
      out.tau = euler_sample(net, out.eps, out.c, grid, cfg.cfg_scale);
    } else {
      out.tau =
          stochastic_sample(net, out.eps, out.c, grid, sched, r1, cfg.cfg_scale);
    }
    out.tau_hat =
        stochastic_sample(net, eps_hat, out.c, grid, sched, r2, cfg.cfg_scale);

    out.r = reward(out.tau.x[T], out.c);
    out.r_hat = reward(out.tau_hat.x[T], out.c);
    out.dr = out.r_hat - out.r;
    out.dx.resize(d);
    for (int i = 0; i < d; ++i) out.dx[i] = out.tau_hat.x[T][i] - out.tau.x[T][i];
    out.dx_bar = normalize_delta(out.dx);

    // Direction invariant: the reward-weighted difference must point from the
    // lower- to the higher-reward endpoint (also traps NaN rewards/states).
    if (out.dr != 0.0) {
      double ip = sign_of(out.dr) * out.dr * dot(out.dx_bar, out.dx);
      if (!(ip >= 0.0)) {
        throw std::logic_error("rollout pair violates direction invariant");
      }
    }
  });
  return pairs;
}

EpochMetrics fdfo_epoch(VelocityNet& net, const VelocityNet& base_net,
                        const DatasetSpec& data, const RewardBinding& reward,
                        const PostTrainConfig& cfg, int epoch_idx,
                        AdamWState& opt) {
  Timer timer;
  const int P = cfg.pairs;
  const int T = cfg.steps;
  TimeGrid grid = TimeGrid::uniform(T);
  std::vector<double> weights =
      gradient_weights(grid, weight_mode_from_name(cfg.weight_mode));

  std::vector<RolloutPair> pairs =
      generate_pairs(net, data, reward, cfg, grid, epoch_idx);

  // Flatten both members of every pair into per-step training samples.
  std::vector<TrainSample> samples;
  samples.reserve(static_cast<size_t>(2) * P * T);
  int idx = 0;
  for (const RolloutPair& pr : pairs) {
    for (const Trajectory* traj : {&pr.tau, &pr.tau_hat}) {
      Vec delta;
      double adv;
      if (cfg.reward_gradient_mode) {
        delta = normalize_delta(reward.grad(traj->x[T], pr.c));
        adv = 1.0;
      } else {
        delta = pr.dx_bar;
        adv = pr.dr;
      }
      for (int i = 0; i < T; ++i) {
        TrainSample s;
        s.x = traj->x[i];
        s.t = grid.t[i];
        s.c = pr.c;
        s.v_ref = traj->v_ref[i];
        s.v_target = velocity_target(traj->v_ref[i], delta);
        s.adv = adv;
        s.w = weights[i];
        s.idx = idx++;
        samples.push_back(std::move(s));
      }
    }
  }

  const int n = static_cast<int>(samples.size());
  ShuffledBatches split = shuffle_and_split(n, cfg.batches, cfg.seed, epoch_idx);
  const ClipStyle style = clip_style_from_name(cfg.clip_style);

  Vec grad(net.theta.size(), 0.0);
  Tape tape(net.theta, &grad);
  EpochMetrics m;
  m.epoch = epoch_idx;
  long long clipped_count = 0;
  double kl_sum = 0.0;
  double grad_norm_sum = 0.0;

  for (int b = 0; b < cfg.batches; ++b) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (int si : split.batches[b]) {
      const TrainSample& s = samples[si];
      Vec v_cur = eval_velocity(net, s.x, s.t, s.c, cfg.cfg_scale);
      double logr = log_proxy_ratio(s.v_target, s.v_ref, v_cur);
      double ratio = std::exp(logr);
      if (b == 0 && ratio != 1.0) {
        // before the first optimizer step the current velocity is the rollout
        // velocity bit-for-bit, so the ratio must be exactly one
        throw std::logic_error("refresh identity violated: ratio != 1 on "
                               "freshly generated rollouts");
      }

      tape.reset();
      int vc = eval_velocity_on_tape(net, tape, s.x, s.t, s.c, cfg.cfg_scale);
      int vt = tape.constant(s.v_target.data(), static_cast<int>(s.v_target.size()));
      double ref_sq = 0.0;
      for (size_t k = 0; k < s.v_target.size(); ++k) {
        double d = s.v_target[k] - s.v_ref[k];
        ref_sq += d * d;
      }
      int logr_node = tape.sub(tape.constant_scalar(ref_sq),
                               tape.sq_norm_op(tape.sub(vt, vc)));
      int ratio_node = tape.exp_clamp(logr_node, -kLogRatioClamp, kLogRatioClamp);
      bool clipped = false;
      int loss_node = objective_on_tape(tape, ratio_node, ratio, s.adv, style,
                                        cfg.eps_clip, cfg.eps_spo, &clipped);
      if (clipped) ++clipped_count;
      if (cfg.kl_weight > 0.0) {
        Vec v_base = eval_velocity(base_net, s.x, s.t, s.c, cfg.cfg_scale);
        int vb = tape.constant(v_base.data(), static_cast<int>(v_base.size()));
        int kl_node =
            tape.scale(tape.sq_norm_op(tape.sub(vb, vc)), cfg.kl_weight);
        kl_sum += tape.value(kl_node);
        loss_node = tape.add(loss_node, kl_node);
      }
      batch_loss += s.w * tape.value(loss_node);
      tape.backward(loss_node, s.w);
    }
    if (!std::isfinite(batch_loss)) {
      throw DivergenceError("non-finite loss in epoch " +
                               std::to_string(epoch_idx) + ", batch " +
                               std::to_string(b));
    }
    grad_norm_sum += std::sqrt(sq_norm(grad));
    adamw_step(net.theta, grad, opt);
  }

  // Reward statistics over all 2P endpoints; pair statistics over P pairs.
  std::vector<Vec> endpoints;
  std::vector<int> conds;
  double rsum = 0.0, rsq = 0.0;
  for (const RolloutPair& pr : pairs) {
    for (double r : {pr.r, pr.r_hat}) {
      rsum += r;
      rsq += r * r;
    }
    m.mean_abs_dr += std::abs(pr.dr);
    m.mean_rms_dx += rms_norm(pr.dx);
    endpoints.push_back(pr.tau.x[T]);
    endpoints.push_back(pr.tau_hat.x[T]);
    conds.push_back(pr.c);
    conds.push_back(pr.c);
  }
  const double n_end = 2.0 * P;
  m.mean_reward = rsum / n_end;
  m.reward_std = std::sqrt(std::max(0.0, rsq / n_end - m.mean_reward * m.mean_reward));
  m.mean_abs_dr /= P;
  m.mean_rms_dx /= P;
  m.clip_fraction = static_cast<double>(clipped_count) / n;
  m.kl_value = kl_sum / n;
  m.grad_norm = grad_norm_sum / cfg.batches;
  m.diversity = endpoint_diversity(endpoints, conds);

  const long long cfg_cost = cfg.cfg_scale >= 0.0 ? 2 : 1;
  const long long rollout_evals = 2LL * P * T * cfg_cost;
  m.net_evals = rollout_evals                       // rollouts
                + 2LL * P * T * cfg_cost            // current velocity per sample
                + (cfg.kl_weight > 0.0 ? 2LL * P * T * cfg_cost : 0);
  m.reward_evals = 2LL * P + (cfg.reward_gradient_mode ? 2LL * P : 0);
  m.wall_s = timer.seconds();
  (void)data;
  return m;
}

namespace {

struct GrpoSample {
  Vec x;        // state at step i
  double t;     // grid time t_i
  int c;
  Vec xn;       // recorded next state
  Vec mu_old;   // transition mean under the rollout-time parameters
  double dt;    // overshoot time minus t_i
  double denom; // gamma * t_tilde + 1
  double sigma; // per-step transition std (0 at the final step)
  double adv;
  double w;     // gradient weight; 0 where sigma = 0
  int idx;
};

}  // namespace

EpochMetrics baseline_grpo_epoch(VelocityNet& net, const DatasetSpec& data,
                                 const RewardBinding& reward,
                                 const PostTrainConfig& cfg, int epoch_idx,
                                 AdamWState& opt) {
  Timer timer;
  const int G = cfg.group_size;
  const int n_roll = 2 * cfg.pairs;  // matched rollout budget
  const int n_groups = n_roll / G;
  const int T = cfg.steps;
  TimeGrid grid = TimeGrid::uniform(T);
  std::vector<double> weights =
      gradient_weights(grid, weight_mode_from_name(cfg.weight_mode));

  // Group conditions and schedules (one per group, shared by members).
  std::vector<int> group_c(n_groups);
  std::vector<StochasticitySchedule> group_sched(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    Rng rg(cfg.seed, stream_id(StreamKind::group, epoch_idx, g));
    group_c[g] = draw_condition(rg, net.C);
    group_sched[g] = draw_schedule(cfg.sched, grid, rg);
  }

  std::vector<Trajectory> rollouts(n_roll);
  std::vector<double> rewards(n_roll);
  parallel_for(n_roll, [&](int j) {
    int g = j / G;
    Rng rj(cfg.seed, stream_id(StreamKind::pair, epoch_idx, j));
    Vec eps0(net.d);
    for (int i = 0; i < net.d; ++i) eps0[i] = rj.gaussian();
    rollouts[j] = stochastic_sample(net, eps0, group_c[g], grid, group_sched[g],
                                    rj, cfg.cfg_scale);
    rewards[j] = reward(rollouts[j].x[T], group_c[g]);
  });

  // Group-standardized advantages.
  std::vector<double> adv(n_roll);
  double abs_dev_sum = 0.0;
  for (int g = 0; g < n_groups; ++g) {
    double mean = 0.0;
    for (int r = 0; r < G; ++r) mean += rewards[g * G + r];
    mean /= G;
    double var = 0.0;
    for (int r = 0; r < G; ++r) {
      double d = rewards[g * G + r] - mean;
      var += d * d;
      abs_dev_sum += std::abs(d);
    }
    double std_dev = std::sqrt(var / G);
    for (int r = 0; r < G; ++r) {
      adv[g * G + r] = (rewards[g * G + r] - mean) / (std_dev + 1e-6);
    }
  }

  // Per-step transition samples.
  std::vector<GrpoSample> samples;
  samples.reserve(static_cast<size_t>(n_roll) * T);
  int idx = 0;
  for (int j = 0; j < n_roll; ++j) {
    const Trajectory& traj = rollouts[j];
    for (int i = 0; i < T; ++i) {
      GrpoSample s;
      s.x = traj.x[i];
      s.t = grid.t[i];
      s.c = traj.c;
      s.xn = traj.x[i + 1];
      double t_next = grid.t[i + 1];
      double g_eff = t_next == 0.0 ? 0.0 : traj.sched.gamma[i];
      double tt = overshoot_time(t_next, g_eff);
      s.dt = tt - grid.t[i];
      s.denom = g_eff * tt + 1.0;
      s.sigma = tt * std::sqrt(g_eff * g_eff + 2.0 * g_eff) / s.denom;
      s.mu_old.resize(net.d);
      for (int k = 0; k < net.d; ++k) {
        s.mu_old[k] = (traj.x[i][k] + s.dt * traj.v_ref[i][k]) / s.denom;
      }
      s.adv = adv[j];
      s.w = s.sigma > 0.0 ? weights[i] : 0.0;  // degenerate steps are masked
      s.idx = idx++;
      samples.push_back(std::move(s));
    }
  }

  const int n = static_cast<int>(samples.size());
  ShuffledBatches split = shuffle_and_split(n, cfg.batches, cfg.seed, epoch_idx);
  const ClipStyle style = clip_style_from_name(cfg.clip_style);

  Vec grad(net.theta.size(), 0.0);
  Tape tape(net.theta, &grad);
  EpochMetrics m;
  m.epoch = epoch_idx;
  long long clipped_count = 0;
  long long ratio_count = 0;
  double grad_norm_sum = 0.0;

  for (int b = 0; b < cfg.batches; ++b) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (int si : split.batches[b]) {
      const GrpoSample& s = samples[si];
      Vec v_cur = eval_velocity(net, s.x, s.t, s.c, cfg.cfg_scale);
      if (s.sigma == 0.0) continue;  // evaluated for budget parity, zero weight

      double old_sq = 0.0, new_sq = 0.0;
      for (int k = 0; k < net.d; ++k) {
        double mu_new = (s.x[k] + s.dt * v_cur[k]) / s.denom;
        double d_old = s.xn[k] - s.mu_old[k];
        double d_new = s.xn[k] - mu_new;
        old_sq += d_old * d_old;
        new_sq += d_new * d_new;
      }
      double inv_two_var = 1.0 / (2.0 * s.sigma * s.sigma);
      double logr = std::clamp((old_sq - new_sq) * inv_two_var, -kLogRatioClamp,
                               kLogRatioClamp);
      double ratio = std::exp(logr);
      if (b == 0 && ratio != 1.0) {
        throw std::logic_error("refresh identity violated: transition ratio "
                               "!= 1 on freshly generated rollouts");
      }

      tape.reset();
      int vc = eval_velocity_on_tape(net, tape, s.x, s.t, s.c, cfg.cfg_scale);
      int mu_new_node = tape.scale(
          tape.add(tape.constant(s.x.data(), net.d), tape.scale(vc, s.dt)),
          1.0 / s.denom);
      int diff = tape.sub(tape.constant(s.xn.data(), net.d), mu_new_node);
      int logr_node = tape.scale(tape.sub(tape.constant_scalar(old_sq),
                                          tape.sq_norm_op(diff)),
                                 inv_two_var);
      int ratio_node = tape.exp_clamp(logr_node, -kLogRatioClamp, kLogRatioClamp);
      bool clipped = false;
      int loss_node = objective_on_tape(tape, ratio_node, ratio, s.adv, style,
                                        cfg.eps_clip, cfg.eps_spo, &clipped);
      if (clipped) ++clipped_count;
      ++ratio_count;
      batch_loss += s.w * tape.value(loss_node);
      tape.backward(loss_node, s.w);
    }
    if (!std::isfinite(batch_loss)) {
      throw DivergenceError("non-finite loss in epoch " +
                               std::to_string(epoch_idx) + ", batch " +
                               std::to_string(b));
    }
    grad_norm_sum += std::sqrt(sq_norm(grad));
    adamw_step(net.theta, grad, opt);
  }

  std::vector<Vec> endpoints;
  std::vector<int> conds;
  double rsum = 0.0, rsq = 0.0;
  for (int j = 0; j < n_roll; ++j) {
    rsum += rewards[j];
    rsq += rewards[j] * rewards[j];
    endpoints.push_back(rollouts[j].x[T]);
    conds.push_back(rollouts[j].c);
  }
  m.mean_reward = rsum / n_roll;
  m.reward_std =
      std::sqrt(std::max(0.0, rsq / n_roll - m.mean_reward * m.mean_reward));
  m.mean_abs_dr = abs_dev_sum / n_roll;  // mean |R - group mean|
  m.mean_rms_dx = 0.0;                   // no paired differences here
  m.clip_fraction =
      ratio_count == 0 ? 0.0 : static_cast<double>(clipped_count) / ratio_count;
  m.kl_value = 0.0;
  m.grad_norm = grad_norm_sum / cfg.batches;
  m.diversity = endpoint_diversity(endpoints, conds);

  const long long cfg_cost = cfg.cfg_scale >= 0.0 ? 2 : 1;
  m.net_evals = 2LL * cfg.pairs * T * cfg_cost    // rollouts
                + 2LL * cfg.pairs * T * cfg_cost; // current velocity per sample
  m.reward_evals = 2LL * cfg.pairs;
  m.wall_s = timer.seconds();
  (void)data;
  return m;
}

TrainResult posttrain_run(const VelocityNet& init, const DatasetSpec& data,
                          const RewardBinding& reward, const PostTrainConfig& cfg,
                          const std::string& out_dir, uint64_t config_hash) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  result.net = init;
  VelocityNet base_net = init;
  AdamWState opt(result.net.theta.size(), cfg.lr, cfg.beta1, cfg.beta2,
                 cfg.eps_opt, cfg.weight_decay);

  CsvWriter csv(out_dir + "/metrics.csv", EpochMetrics::csv_columns());
  auto export_ckpt = [&](int epoch) {
    Checkpoint ck;
    ck.net = result.net;
    ck.has_opt = true;
    ck.opt = opt;
    ck.config_hash = config_hash;
    ck.epoch = epoch;
    save_checkpoint(out_dir + "/epoch_" + std::to_string(epoch) + ".ckpt", ck);
  };

  for (int e = 0; e < cfg.epochs; ++e) {
    EpochMetrics m =
        cfg.algo == "grpo"
            ? baseline_grpo_epoch(result.net, data, reward, cfg, e, opt)
            : fdfo_epoch(result.net, base_net, data, reward, cfg, e, opt);
    csv.append(m.csv_row());
    result.history.push_back(m);
    if (cfg.ckpt_every > 0 && (e + 1) % cfg.ckpt_every == 0 &&
        e + 1 != cfg.epochs) {
      export_ckpt(e + 1);
    }
  }
  export_ckpt(cfg.epochs);
  return result;
}

}  // namespace fdfo
