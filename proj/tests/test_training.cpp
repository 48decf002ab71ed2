#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "fdfo/cli.hpp"
#include "fdfo/datasets.hpp"
#include "fdfo/net.hpp"
#include "fdfo/posttrain.hpp"
#include "fdfo/rewards.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/sampler.hpp"

using namespace fdfo;

TEST_CASE("a trained scalar flow transports noise to the data marginal") {
  DatasetSpec data = dataset_from_name("gauss1d", 1.7);
  PretrainConfig cfg;
  cfg.steps = 2500;
  cfg.batch = 64;
  cfg.hidden = 16;
  cfg.layers = 2;
  cfg.embed = 4;
  cfg.seed = 3;
  PretrainResult res = pretrain(data, cfg);
  REQUIRE_FALSE(res.loss_log.empty());
  CHECK(res.loss_log.back().second < res.loss_log.front().second);

  TimeGrid grid = TimeGrid::uniform(64);
  const int n = 800;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng(100, stream_id(StreamKind::eval, 0, i));
    Trajectory tr = euler_sample(res.net, {rng.gaussian()}, 0, grid);
    double x = tr.x.back()[0];
    s1 += x;
    s2 += x * x;
  }
  double mean = s1 / n;
  double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 * 1.7 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var / (1.7 * 1.7) - 1.0) < 0.2);
}

TEST_CASE("a trained conditional flow lands in the requested mode") {
  DatasetSpec data = dataset_from_name("ring8", 1.0);
  PretrainConfig cfg;
  cfg.steps = 4000;
  cfg.batch = 128;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.embed = 8;
  cfg.seed = 7;
  PretrainResult res = pretrain(data, cfg);

  RewardBinding rb;
  rb.spec.kind = RewardSpec::kSigmoidHalfplane;
  rb.spec.u = {0.0, 1.0};
  rb.spec.gain = 4.0;
  std::vector<EvalRow> rows = evaluate_net(res.net, data, rb, 32, 40, 1000, -1.0);
  REQUIRE(rows.size() == 9);  // eight conditions plus the overall row
  const EvalRow& overall = rows.back();
  CHECK(overall.condition == -1);
  CHECK(overall.n == 8 * 32);
  CHECK(overall.alignment >= 0.8);
  // a symmetric sigmoid reward over the ring sits near 50 before post-training
  CHECK(overall.mean_reward > 35.0);
  CHECK(overall.mean_reward < 65.0);
  CHECK(overall.diversity > 0.0);
}

TEST_CASE("reward post-training raises the rollout reward") {
  DatasetSpec data = dataset_from_name("ring8", 1.0);
  PretrainConfig pre;
  pre.steps = 3000;
  pre.batch = 128;
  pre.hidden = 32;
  pre.layers = 2;
  pre.embed = 8;
  pre.seed = 7;
  VelocityNet net = pretrain(data, pre).net;
  VelocityNet base = net;

  RewardBinding rb;
  rb.spec.kind = RewardSpec::kSigmoidHalfplane;
  rb.spec.u = {0.0, 1.0};
  rb.spec.gain = 4.0;

  PostTrainConfig cfg;
  cfg.pairs = 16;
  cfg.batches = 2;
  cfg.steps = 16;
  cfg.sched.family = "uniform";
  cfg.sched.gamma = 0.01;
  cfg.seed = 1;
  AdamWState opt(net.theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt,
                 cfg.weight_decay);
  double before =
      evaluate_net(net, data, rb, 32, cfg.steps, 500, -1.0).back().mean_reward;
  for (int e = 0; e < 60; ++e) fdfo_epoch(net, base, data, rb, cfg, e, opt);
  double after =
      evaluate_net(net, data, rb, 32, cfg.steps, 500, -1.0).back().mean_reward;
  CHECK(after > before + 5.0);
}

TEST_CASE("paired-difference training accepts non-differentiable rewards") {
  DatasetSpec data = dataset_from_name("ring8", 1.0);
  VelocityNet net = make_net(2, 8, 13, 16, 2, 4);
  Rng rng(13, stream_id(StreamKind::mc, 60, 0));
  for (double& th : net.theta) th += 0.2 * rng.gaussian();
  VelocityNet base = net;

  RewardBinding rb;
  rb.spec.kind = RewardSpec::kStep;
  rb.spec.u = {0.0, 1.0};
  rb.spec.tau = 0.0;

  PostTrainConfig cfg;
  cfg.pairs = 8;
  cfg.batches = 2;
  cfg.steps = 6;
  cfg.sched.gamma = 0.05;
  cfg.seed = 2;
  AdamWState opt(net.theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt,
                 cfg.weight_decay);
  CHECK_NOTHROW(fdfo_epoch(net, base, data, rb, cfg, 0, opt));

  PostTrainConfig gcfg = cfg;
  gcfg.algo = "grpo";
  gcfg.group_size = 4;
  VelocityNet gnet = base;
  AdamWState gopt(gnet.theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt,
                  cfg.weight_decay);
  CHECK_NOTHROW(baseline_grpo_epoch(gnet, data, rb, gcfg, 0, gopt));

  // the endpoint-gradient variant needs analytic reward gradients
  PostTrainConfig rgrad = cfg;
  rgrad.reward_gradient_mode = true;
  VelocityNet rnet = base;
  AdamWState ropt(rnet.theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt,
                  cfg.weight_decay);
  CHECK_THROWS_AS(fdfo_epoch(rnet, base, data, rb, rgrad, 0, ropt),
                  std::invalid_argument);
}

TEST_CASE("training rejects invalid evaluation parameters") {
  DatasetSpec data = dataset_from_name("gauss1d", 1.0);
  VelocityNet net = make_net(1, 1, 2, 8, 2, 2);
  RewardBinding rb;
  rb.spec.kind = RewardSpec::kLinear;
  rb.spec.b = {1.0};
  CHECK_THROWS_AS(evaluate_net(net, data, rb, 0, 10, 1, -1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(evaluate_net(net, data, rb, 4, 0, 1, -1.0),
                  std::invalid_argument);
}
