#include "fdfo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fdfo/checkpoint.hpp"
#include "fdfo/datasets.hpp"
#include "fdfo/errors.hpp"
#include "fdfo/linalg.hpp"
#include "fdfo/metrics.hpp"
#include "fdfo/posttrain.hpp"
#include "fdfo/rewards.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/sampler.hpp"
#include "fdfo/svgplot.hpp"
#include "fdfo/threadpool.hpp"
#include "fdfo/verify.hpp"

namespace fdfo {
namespace {

using nlohmann::json;

void apply_seed_override(ExperimentConfig& cfg, long long seed) {
  if (seed < 0) return;
  cfg.seed = static_cast<uint64_t>(seed);
  cfg.pretrain.seed = cfg.seed;
  cfg.posttrain.seed = cfg.seed;
}

std::string resolve_out(const ExperimentConfig& cfg, const std::string& flag) {
  return flag.empty() ? cfg.out : flag;
}

void check_arch(const VelocityNet& net, const DatasetSpec& data,
                const ModelConfig& model, const std::string& ckpt_path) {
  auto dims = [](int d, int C, int h, int l, int e) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "d=%d C=%d hidden=%d layers=%d embed=%d", d,
                  C, h, l, e);
    return std::string(buf);
  };
  if (net.d != data.d() || net.C != data.C() || net.hidden != model.hidden ||
      net.layers != model.layers || net.embed != model.embed) {
    throw ConfigError("checkpoint " + ckpt_path + " (" +
                      dims(net.d, net.C, net.hidden, net.layers, net.embed) +
                      ") does not match the configured architecture (" +
                      dims(data.d(), data.C(), model.hidden, model.layers,
                           model.embed) +
                      ")");
  }
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(const std::string& config_path, const std::string& out_flag,
                 long long seed_flag) {
  ExperimentConfig cfg = load_config(config_path);
  apply_seed_override(cfg, seed_flag);
  const std::string out = resolve_out(cfg, out_flag);
  DatasetSpec data = make_dataset(cfg);

  PretrainResult res = pretrain(data, cfg.pretrain);

  std::filesystem::create_directories(out);
  Checkpoint ck;
  ck.net = res.net;
  ck.has_opt = false;
  ck.config_hash = cfg.text_hash;
  ck.epoch = 0;
  save_checkpoint(out + "/pre.ckpt", ck);

  CsvWriter loss_csv(out + "/pretrain_loss.csv", {"step", "loss"});
  for (const auto& [step, loss] : res.loss_log)
    loss_csv.append({static_cast<double>(step), loss});

  double final_loss = res.loss_log.empty() ? 0.0 : res.loss_log.back().second;
  std::printf("pretrain: %d steps on %s, final loss %.6g\n", cfg.pretrain.steps,
              cfg.dataset.c_str(), final_loss);
  std::printf("wrote %s/pre.ckpt and %s/pretrain_loss.csv\n", out.c_str(),
              out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// posttrain

int cmd_posttrain(const std::string& config_path, const std::string& init_path,
                  const std::string& out_flag, long long seed_flag,
                  bool baseline, long long epochs_flag) {
  ExperimentConfig cfg = load_config(config_path);
  apply_seed_override(cfg, seed_flag);
  if (baseline) cfg.posttrain.algo = "grpo";
  if (epochs_flag >= 0) cfg.posttrain.epochs = static_cast<int>(epochs_flag);
  const std::string out = resolve_out(cfg, out_flag);

  DatasetSpec data = make_dataset(cfg);
  RewardBinding reward = make_reward(cfg, data);
  Checkpoint ck = load_checkpoint(init_path);
  check_arch(ck.net, data, cfg.model, init_path);

  TrainResult res =
      posttrain_run(ck.net, data, reward, cfg.posttrain, out, cfg.text_hash);

  if (!res.history.empty()) {
    const EpochMetrics& last = res.history.back();
    std::printf("posttrain (%s): %zu epochs, final mean reward %.6g\n",
                cfg.posttrain.algo.c_str(), res.history.size(),
                last.mean_reward);
  } else {
    std::printf("posttrain (%s): 0 epochs (checkpoint copied)\n",
                cfg.posttrain.algo.c_str());
  }
  std::printf("wrote %s/metrics.csv\n", out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& config_path, const std::string& init_path,
             const std::string& out_csv, long long seed_flag, int n_per_cond) {
  ExperimentConfig cfg = load_config(config_path);
  DatasetSpec data = make_dataset(cfg);
  RewardBinding reward = make_reward(cfg, data);
  Checkpoint ck = load_checkpoint(init_path);
  check_arch(ck.net, data, cfg.model, init_path);

  uint64_t seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : 1000;
  std::vector<EvalRow> rows =
      evaluate_net(ck.net, data, reward, n_per_cond, cfg.posttrain.steps, seed,
                   cfg.posttrain.cfg_scale);

  std::printf("%-10s %6s %14s %10s %10s\n", "condition", "n", "mean_reward",
              "alignment", "diversity");
  for (const EvalRow& r : rows) {
    std::printf("%-10d %6d %14.6g %10.4f %10.6g\n", r.condition, r.n,
                r.mean_reward, r.alignment, r.diversity);
  }

  if (!out_csv.empty()) {
    CsvWriter w(out_csv,
                {"condition", "n", "mean_reward", "alignment", "diversity"});
    for (const EvalRow& r : rows) {
      w.append({static_cast<double>(r.condition), static_cast<double>(r.n),
                r.mean_reward, r.alignment, r.diversity});
    }
    std::printf("wrote %s\n", out_csv.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify

Mat mat2(double a00, double a01, double a10, double a11) {
  Mat m(2, 2);
  m(0, 0) = a00;
  m(0, 1) = a01;
  m(1, 0) = a10;
  m(1, 1) = a11;
  return m;
}

// Upper-triangular flow with a linear reward: the identity's two sides are
// known in closed form and the components are unequal, so index mix-ups fail.
LinearFlowOracle smoothing_oracle() {
  LinearFlowOracle o;
  o.A = mat2(2.0, 1.0, 0.0, 1.0);
  o.sigma_c = 0.1;
  o.reward.kind = RewardSpec::kLinear;
  o.reward.b = {1.0, 0.0};
  return o;
}

// Symmetric positive-definite flow: the ascent statistic's expectation
// sigma_c^2 u^T A u (u = A^T b) is strictly positive.
LinearFlowOracle ascent_oracle() {
  LinearFlowOracle o;
  o.A = mat2(2.0, 1.0, 1.0, 1.0);
  o.sigma_c = 0.1;
  o.reward.kind = RewardSpec::kLinear;
  o.reward.b = {1.0, 0.0};
  return o;
}

void emit_report(const json& report, const std::string& out_path) {
  std::string text = report.dump(2);
  std::printf("%s\n", text.c_str());
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open report file: " + out_path);
    f << text << "\n";
  }
}

int verify_stein(long long n, uint64_t seed, json& rep) {
  SteinReport r = stein_check(smoothing_oracle(), n, seed);
  rep["n_samples"] = r.n_samples;
  rep["mc_estimate"] = r.mc_estimate;
  rep["analytic"] = r.analytic;
  rep["stderr"] = r.stderr_mc;
  rep["rel_error"] = r.rel_error;
  rep["tolerance"] = 0.02;
  bool pass = r.rel_error < 0.02;
  rep["pass"] = pass;
  return pass ? 0 : 1;
}

int verify_marginal(int n, uint64_t seed, bool break_mixer, json& rep) {
  const TimeGrid grid = TimeGrid::uniform(40);
  std::vector<double> gammas =
      break_mixer ? std::vector<double>{0.2} : std::vector<double>{0.0, 0.05, 0.2};
  rep["n_chains"] = n;
  rep["threshold"] = 4.0;
  rep["break_mixer"] = break_mixer;
  json runs = json::array();
  bool pass = true;
  for (double g : gammas) {
    MarginalReport mr = marginal_check(1.0, grid, schedule_uniform(grid.T(), g),
                                       n, seed, TransportMode::kExact,
                                       break_mixer);
    runs.push_back({{"gamma", g}, {"max_abs_z", mr.max_abs_z}});
    pass = pass && mr.max_abs_z < 4.0;
  }
  rep["runs"] = runs;
  rep["pass"] = pass;
  return pass ? 0 : 1;
}

int verify_gradcheck(int cases, uint64_t seed, json& rep) {
  double max_rel = gradcheck_max_rel_err(cases, seed);
  rep["cases"] = cases;
  rep["max_rel_error"] = max_rel;
  rep["tolerance"] = 1e-4;
  bool pass = max_rel < 1e-4;
  rep["pass"] = pass;
  return pass ? 0 : 1;
}

int verify_sampler_degeneracy(int trials, uint64_t seed, json& rep) {
  int mismatches = 0;
  bool rng_untouched = true;
  for (int trial = 0; trial < trials; ++trial) {
    const int C = 3;
    VelocityNet net = make_net(2, C, seed + trial, 16, 2, 4);
    Rng jitter(seed, stream_id(StreamKind::mc, trial, 7));
    for (double& th : net.theta) th += 0.3 * jitter.gaussian();

    Vec eps0 = {jitter.gaussian(), jitter.gaussian()};
    int c = trial % (C + 1);  // includes the null condition id
    TimeGrid grid = TimeGrid::uniform(8 + trial % 5);

    Trajectory te = euler_sample(net, eps0, c, grid);
    StochasticitySchedule sched = schedule_uniform(grid.T(), 0.0);
    Rng noise(seed, stream_id(StreamKind::mc, trial, 11));
    Trajectory ts = stochastic_sample(net, eps0, c, grid, sched, noise);

    bool equal = te.x.size() == ts.x.size();
    for (size_t i = 0; equal && i < te.x.size(); ++i) equal = te.x[i] == ts.x[i];
    for (size_t i = 0; equal && i < te.v_ref.size(); ++i)
      equal = te.v_ref[i] == ts.v_ref[i];
    if (!equal) ++mismatches;

    Rng fresh(seed, stream_id(StreamKind::mc, trial, 11));
    if (noise.next_u64() != fresh.next_u64()) rng_untouched = false;
  }
  rep["trials"] = trials;
  rep["mismatches"] = mismatches;
  rep["rng_untouched"] = rng_untouched;
  bool pass = mismatches == 0 && rng_untouched;
  rep["pass"] = pass;
  return pass ? 0 : 1;
}

int verify_prototype(long long n, uint64_t seed, const std::string& init_path,
                     const std::string& config_path, json& rep) {
  AscentReport r = prototype_fdfo_step(ascent_oracle(), n, seed);
  rep["oracle"] = {{"mean", r.mean},
                   {"stderr", r.stderr_mc},
                   {"t_stat", r.t_stat()},
                   {"n_samples", r.n_samples},
                   {"threshold", 5.0}};
  bool pass = r.t_stat() >= 5.0;

  if (!init_path.empty()) {
    if (config_path.empty())
      throw ConfigError("verify prototype: --init requires --config");
    ExperimentConfig cfg = load_config(config_path);
    DatasetSpec data = make_dataset(cfg);
    RewardBinding reward = make_reward(cfg, data);
    Checkpoint ck = load_checkpoint(init_path);
    check_arch(ck.net, data, cfg.model, init_path);
    TimeGrid grid = TimeGrid::uniform(cfg.posttrain.steps);
    AscentReport rn = prototype_fdfo_step(ck.net, reward, grid.T() / 2, grid,
                                          0.05, 1000, seed);
    rep["net"] = {{"mean", rn.mean},
                  {"stderr", rn.stderr_mc},
                  {"t_stat", rn.t_stat()},
                  {"n_samples", rn.n_samples},
                  {"threshold", 3.0}};
    pass = pass && rn.t_stat() >= 3.0;
  }
  rep["pass"] = pass;
  return pass ? 0 : 1;
}

int verify_jacobian(uint64_t seed, json& rep) {
  // Identity-flow fixture: a freshly initialized net has a zero output layer,
  // so the completion map is the identity and the minimum symmetric-part
  // eigenvalue must be exactly 1.
  VelocityNet zero_net = make_net(2, 2, seed);
  TimeGrid grid = TimeGrid::uniform(40);
  Vec x = {0.3, -0.2};
  double id_stat = jacobian_psd_stat(zero_net, x, grid, grid.T() / 2, 0);
  rep["identity_lambda_min"] = id_stat;
  rep["identity_expected"] = 1.0;

  // Linear SPD fixture: min eigenvalue of [[2,1],[1,1]] is (3 - sqrt(5)) / 2.
  Mat A = mat2(2.0, 1.0, 1.0, 1.0);
  auto lin = [&A](const Vec& v) { return matvec(A, v); };
  double spd_stat = jacobian_psd_stat(lin, x, 1e-4);
  double spd_expected = (3.0 - std::sqrt(5.0)) / 2.0;
  rep["spd_lambda_min"] = spd_stat;
  rep["spd_expected"] = spd_expected;

  bool pass = std::abs(id_stat - 1.0) < 1e-9 &&
              std::abs(spd_stat - spd_expected) < 1e-3;
  rep["pass"] = pass;
  return pass ? 0 : 1;
}

int cmd_verify(const std::string& check, double n_flag, long long seed_flag,
               bool break_mixer, const std::string& init_path,
               const std::string& config_path, const std::string& out_path) {
  uint64_t seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : 1;
  json rep;
  rep["check"] = check;
  rep["seed"] = seed;
  int rc = 0;
  if (check == "stein") {
    long long n = n_flag > 0 ? static_cast<long long>(n_flag) : 1000000;
    rc = verify_stein(n, seed, rep);
  } else if (check == "marginal") {
    int n = n_flag > 0 ? static_cast<int>(n_flag) : 10000;
    rc = verify_marginal(n, seed, break_mixer, rep);
  } else if (check == "gradcheck") {
    int cases = n_flag > 0 ? static_cast<int>(n_flag) : 100;
    rc = verify_gradcheck(cases, seed, rep);
  } else if (check == "sampler-degeneracy") {
    int trials = n_flag > 0 ? static_cast<int>(n_flag) : 100;
    rc = verify_sampler_degeneracy(trials, seed, rep);
  } else if (check == "prototype") {
    long long n = n_flag > 0 ? static_cast<long long>(n_flag) : 100000;
    rc = verify_prototype(n, seed, init_path, config_path, rep);
  } else if (check == "jacobian") {
    rc = verify_jacobian(seed, rep);
  } else {
    throw ConfigError(
        "unknown verify check '" + check +
        "' (expected stein, marginal, gradcheck, sampler-degeneracy, "
        "prototype, or jacobian)");
  }
  emit_report(rep, out_path);
  return rc;
}

// ---------------------------------------------------------------------------
// plot

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out_path,
             const std::string& ycol, const std::string& xcol) {
  std::vector<Series> series;
  for (const std::string& path : inputs) {
    Table t;
    try {
      t = read_table(path);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    int xi = t.col_index(xcol);
    int yi = t.col_index(ycol);
    if (xi < 0) throw ConfigError(path + ": no column named '" + xcol + "'");
    if (yi < 0) throw ConfigError(path + ": no column named '" + ycol + "'");
    Series s;
    s.name = std::filesystem::path(path).stem().string();
    s.x.reserve(t.rows.size());
    s.y.reserve(t.rows.size());
    for (const auto& row : t.rows) {
      s.x.push_back(row[xi]);
      s.y.push_back(row[yi]);
    }
    series.push_back(std::move(s));
  }
  write_svg_plot(out_path, ycol, xcol, ycol, series);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// evaluation protocol shared with tests

std::vector<EvalRow> evaluate_net(const VelocityNet& net, const DatasetSpec& data,
                                  const RewardBinding& reward, int n_per_cond,
                                  int steps, uint64_t seed, double cfg_scale) {
  if (n_per_cond < 1) throw std::invalid_argument("evaluate_net: n_per_cond < 1");
  if (steps < 1) throw std::invalid_argument("evaluate_net: steps < 1");
  const TimeGrid grid = TimeGrid::uniform(steps);
  const int C = data.C();
  const int d = data.d();

  std::vector<EvalRow> rows;
  double sum_r = 0.0, sum_align = 0.0, sum_div = 0.0;
  int total_n = 0, div_conds = 0;

  for (int c = 0; c < C; ++c) {
    std::vector<Vec> ys(static_cast<size_t>(n_per_cond));
    parallel_for(n_per_cond, [&](int i) {
      Rng rng(seed, stream_id(StreamKind::eval, static_cast<uint64_t>(c),
                              static_cast<uint64_t>(i)));
      Vec eps(static_cast<size_t>(d));
      for (double& e : eps) e = rng.gaussian();
      Trajectory tr = euler_sample(net, eps, c, grid, cfg_scale);
      ys[static_cast<size_t>(i)] = tr.x.back();
    });

    EvalRow row;
    row.condition = c;
    row.n = n_per_cond;
    double r_sum = 0.0, a_sum = 0.0;
    for (const Vec& y : ys) {
      r_sum += reward(y, c);
      a_sum += data.mode_condition(nearest_mode(data, y)) == c ? 1.0 : 0.0;
    }
    row.mean_reward = r_sum / n_per_cond;
    row.alignment = a_sum / n_per_cond;

    double dist_sum = 0.0;
    long long pairs = 0;
    for (size_t i = 0; i < ys.size(); ++i) {
      for (size_t j = i + 1; j < ys.size(); ++j) {
        double sq = 0.0;
        for (int k = 0; k < d; ++k) {
          double dv = ys[i][k] - ys[j][k];
          sq += dv * dv;
        }
        dist_sum += std::sqrt(sq);
        ++pairs;
      }
    }
    row.diversity = pairs > 0 ? dist_sum / static_cast<double>(pairs) : 0.0;

    sum_r += r_sum;
    sum_align += a_sum;
    total_n += n_per_cond;
    if (n_per_cond >= 2) {
      sum_div += row.diversity;
      ++div_conds;
    }
    rows.push_back(row);
  }

  EvalRow overall;
  overall.condition = -1;
  overall.n = total_n;
  overall.mean_reward = sum_r / total_n;
  overall.alignment = sum_align / total_n;
  overall.diversity = div_conds > 0 ? sum_div / div_conds : 0.0;
  rows.push_back(overall);
  return rows;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "flow-matching lab: pretrain toy flows, post-train them against "
      "rewards, and verify the sampler/gradient machinery"};
  app.require_subcommand(1);

  // shared option storage
  std::string config_path, init_path, out_flag, verify_check, plot_x = "epoch",
              plot_col = "mean_reward";
  std::vector<std::string> plot_inputs;
  long long seed_flag = -1, epochs_flag = -1;
  int eval_n = 64;
  double verify_n = 0.0;
  bool baseline = false, break_mixer = false;

  CLI::App* pre = app.add_subcommand("pretrain", "fit a flow to a dataset");
  pre->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  pre->add_option("--out", out_flag, "output directory (defaults to config)");
  pre->add_option("--seed", seed_flag, "override the config seed");

  CLI::App* post =
      app.add_subcommand("posttrain", "reward post-training of a checkpoint");
  post->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  post->add_option("--init", init_path, "initial checkpoint")->required();
  post->add_option("--out", out_flag, "output directory (defaults to config)");
  post->add_option("--seed", seed_flag, "override the config seed");
  post->add_option("--epochs", epochs_flag, "override the epoch count");
  post->add_flag("--baseline", baseline,
                 "run the group-relative baseline instead");

  CLI::App* ev =
      app.add_subcommand("eval", "deterministic evaluation of a checkpoint");
  ev->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  ev->add_option("--init", init_path, "checkpoint to evaluate")->required();
  ev->add_option("--out", out_flag, "write per-condition rows to this CSV");
  ev->add_option("--seed", seed_flag, "evaluation seed (default 1000)");
  ev->add_option("--n", eval_n, "rollouts per condition (default 64)");

  CLI::App* ver = app.add_subcommand(
      "verify", "run a named self-check and print a JSON report");
  ver->add_option("check", verify_check,
                  "stein | marginal | gradcheck | sampler-degeneracy | "
                  "prototype | jacobian")
      ->required();
  ver->add_option("--n", verify_n, "sample/trial count override");
  ver->add_option("--seed", seed_flag, "check seed (default 1)");
  ver->add_flag("--break-mixer", break_mixer,
                "fault-inject the noise mixer (negative control)");
  ver->add_option("--init", init_path, "checkpoint for net-based checks");
  ver->add_option("--config", config_path, "config for net-based checks");
  ver->add_option("--out", out_flag, "also write the JSON report here");

  CLI::App* plot = app.add_subcommand("plot", "render CSV columns as an SVG");
  plot->add_option("inputs", plot_inputs, "metrics CSV files");
  plot->add_option("--out", out_flag, "output SVG path")->required();
  plot->add_option("--col", plot_col, "y column (default mean_reward)");
  plot->add_option("--x", plot_x, "x column (default epoch)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(config_path, out_flag, seed_flag);
    if (post->parsed())
      return cmd_posttrain(config_path, init_path, out_flag, seed_flag,
                           baseline, epochs_flag);
    if (ev->parsed())
      return cmd_eval(config_path, init_path, out_flag, seed_flag, eval_n);
    if (ver->parsed())
      return cmd_verify(verify_check, verify_n, seed_flag, break_mixer,
                        init_path, config_path, out_flag);
    if (plot->parsed()) return cmd_plot(plot_inputs, out_flag, plot_col, plot_x);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace fdfo
