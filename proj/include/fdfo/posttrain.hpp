#pragma once
// Reward post-training of a pretrained flow.
//
// Primary algorithm: paired stochastic rollouts from shared initial noise;
// the reward-weighted, RMS-normalized endpoint difference turns each recorded
// reference velocity into a regression target; a proxy likelihood ratio
// between the current and reference velocities feeds a PPO-style clipped
// objective with an optional L2 anchor to the frozen base model.
//
// Baseline: group-relative policy gradient over the stochastic sampler's
// per-step Gaussian transitions, run at an identical rollout/eval budget.

#include <cstdint>
#include <string>
#include <vector>

#include "fdfo/adamw.hpp"
#include "fdfo/datasets.hpp"
#include "fdfo/linalg.hpp"
#include "fdfo/net.hpp"
#include "fdfo/rewards.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/sampler.hpp"

namespace fdfo {

struct ScheduleParams {
  std::string family = "uniform";  // uniform | interval | prior
  double gamma = 0.0025;           // uniform: constant level
  double mu = 0.0;                 // interval: center draw mean (logit space)
  double sigma = 0.3;              // interval: center draw std
  double width = 0.35;             // interval: bump width in logit space
  double gain = 0.05;              // interval: level gain
};

struct PostTrainConfig {
  std::string algo = "fdfo";  // fdfo | grpo
  int pairs = 64;             // P rollout pairs per epoch
  int batches = 4;            // B optimizer steps per epoch
  int steps = 40;             // T sampler steps
  ScheduleParams sched;
  std::string clip_style = "ppo";  // ppo | spo
  double eps_clip = 0.2;
  double eps_spo = 0.2;
  double kl_weight = 0.0;
  double cfg_scale = -1.0;  // >= 0 enables guided velocities everywhere
  std::string weight_mode = "uniform";
  bool shared_init_noise = true;
  bool deterministic_second = false;
  bool reward_gradient_mode = false;
  double lr = 3e-4;
  double beta1 = 0.9, beta2 = 0.999, eps_opt = 1e-8;
  double weight_decay = 0.0;
  int epochs = 300;
  int group_size = 8;  // baseline group size G
  int ckpt_every = 50;
  uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument on bad ranges
};

struct RolloutPair {
  Vec eps;             // shared initial noise
  int c = 0;           // condition
  Trajectory tau;      // first member
  Trajectory tau_hat;  // second member
  double r = 0.0;      // reward at tau endpoint
  double r_hat = 0.0;  // reward at tau_hat endpoint
  Vec dx;              // tau_hat endpoint - tau endpoint
  Vec dx_bar;          // normalized difference
  double dr = 0.0;     // r_hat - r
};

struct TrainSample {
  Vec x;         // state at step i
  double t;      // grid time t_i
  int c;
  Vec v_ref;     // velocity recorded at rollout time
  Vec v_target;  // v_ref - delta
  double adv;    // advantage weighting the clipped objective
  double w;      // gradient weight for step i
  int idx;       // flatten-order index (deterministic accumulation order)
};

struct EpochMetrics {
  int epoch = 0;
  double mean_reward = 0.0;
  double reward_std = 0.0;
  double mean_abs_dr = 0.0;
  double mean_rms_dx = 0.0;
  double clip_fraction = 0.0;
  double kl_value = 0.0;
  double grad_norm = 0.0;
  double diversity = 0.0;
  double wall_s = 0.0;
  int64_t net_evals = 0;     // velocity-network forward passes
  int64_t reward_evals = 0;  // reward (and reward-gradient) calls

  static const std::vector<std::string>& csv_columns();
  std::vector<double> csv_row() const;
};

// --- elementary pieces (unit-testable in isolation) ---

// dx / (rms(dx)^2 + 1e-6); the zero vector maps to itself.
Vec normalize_delta(const Vec& dx);

// v_ref - delta.
Vec velocity_target(const Vec& v_ref, const Vec& delta);

// exp(clamp(|v_t - v_ref|^2 - |v_t - v_cur|^2, -20, 20)).
double proxy_ratio(const Vec& v_target, const Vec& v_ref, const Vec& v_cur);

enum class ClipStyle { kPpo, kSpo };
ClipStyle clip_style_from_name(const std::string& name);

// Loss contribution (to be minimized).
//   ppo: -min(ratio*A, clamp(ratio, 1-eps, 1+eps)*A)
//   spo: -ratio*A*max(0, 1 - |ratio-1|/eps)
double clipped_objective(double ratio, double adv, ClipStyle style, double eps);

// lambda * |v_base - v_cur|^2.
double kl_penalty(const Vec& v_base, const Vec& v_cur, double lambda);

// Records clipped_objective as the branch active at the current ratio value
// (piecewise parts enter the tape as their active branch). Returns the scalar
// node id; *clipped_out reports whether the ratio fell outside the trust
// region.
int objective_on_tape(Tape& tape, int ratio_node, double ratio, double adv,
                      ClipStyle style, double eps_clip, double eps_spo,
                      bool* clipped_out);

// Mean pairwise Euclidean distance within each condition's endpoint group,
// averaged over conditions with at least two points.
double endpoint_diversity(const std::vector<Vec>& endpoints,
                          const std::vector<int>& conds);

// Draws the per-pair stochasticity schedule for the configured family.
StochasticitySchedule draw_schedule(const ScheduleParams& p, const TimeGrid& grid,
                                    Rng& rng);

// --- epoch drivers ---

// P pairs rolled out in parallel from an immutable net snapshot. Conditions
// uniform over the vocabulary; both members share the initial noise and the
// schedule unless the corresponding toggle says otherwise.
std::vector<RolloutPair> generate_pairs(const VelocityNet& net,
                                        const DatasetSpec& data,
                                        const RewardBinding& reward,
                                        const PostTrainConfig& cfg,
                                        const TimeGrid& grid, int epoch_idx);

// One pass: rollouts -> 2*P*T samples -> shuffle -> B clipped-objective
// batches, one AdamW step each. Throws std::runtime_error on non-finite loss.
EpochMetrics fdfo_epoch(VelocityNet& net, const VelocityNet& base_net,
                        const DatasetSpec& data, const RewardBinding& reward,
                        const PostTrainConfig& cfg, int epoch_idx,
                        AdamWState& opt);

// Group-relative baseline at the same rollout and evaluation budget:
// 2*P rollouts in groups of G, advantages standardized within each group,
// per-step Gaussian transition likelihood ratios with the same clipping.
EpochMetrics baseline_grpo_epoch(VelocityNet& net, const DatasetSpec& data,
                                 const RewardBinding& reward,
                                 const PostTrainConfig& cfg, int epoch_idx,
                                 AdamWState& opt);

// --- full run ---

struct TrainResult {
  VelocityNet net;
  std::vector<EpochMetrics> history;
};

// Runs cfg.epochs epochs of the configured algorithm, appending one metrics
// row per epoch to {out_dir}/metrics.csv and exporting
// {out_dir}/epoch_{N}.ckpt every ckpt_every epochs and at the end. With
// epochs = 0 the metrics file holds only the header and the exported
// checkpoint equals the input.
TrainResult posttrain_run(const VelocityNet& init, const DatasetSpec& data,
                          const RewardBinding& reward, const PostTrainConfig& cfg,
                          const std::string& out_dir, uint64_t config_hash = 0);

// True when FDFO_TIMING is set; epoch wall_s stays 0.0 otherwise so metrics
// files are reproducible byte-for-byte.
bool timing_enabled();

}  // namespace fdfo
