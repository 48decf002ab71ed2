#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "fdfo/net.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/sampler.hpp"
#include "fdfo/verify.hpp"

using namespace fdfo;

namespace {

// A = [[2,1],[0,1]] with a linear reward along e1: the smoothed-gradient
// identity gives sigma_c^2 * A A^T b = sigma_c^2 * (5, 1).
LinearFlowOracle smoothing_oracle() {
  LinearFlowOracle o;
  o.A = Mat(2, 2);
  o.A(0, 0) = 2.0;
  o.A(0, 1) = 1.0;
  o.A(1, 0) = 0.0;
  o.A(1, 1) = 1.0;
  o.reward.kind = RewardSpec::kLinear;
  o.reward.b = {1.0, 0.0};
  o.sigma_c = 0.1;
  return o;
}

// Symmetric positive-definite A = [[2,1],[1,1]]; with u = A^T b = (2,1) the
// ascent statistic has exact mean sigma_c^2 * u^T A u = 13 sigma_c^2.
LinearFlowOracle ascent_oracle() {
  LinearFlowOracle o = smoothing_oracle();
  o.A(1, 0) = 1.0;
  return o;
}

}  // namespace

TEST_CASE("analytic velocity and marginal variance hand values") {
  CHECK(analytic_gaussian_velocity1(3.0, 0.5, 1.0) == 0.0);
  CHECK(analytic_gaussian_velocity1(3.0, 1.0, 1.0) == 3.0);
  CHECK(analytic_gaussian_velocity1(3.0, 0.0, 1.0) == -3.0);
  CHECK(analytic_gaussian_velocity1(1.0, 0.3, 2.0) ==
        doctest::Approx((0.3 - 0.7 * 4.0) / (0.49 * 4.0 + 0.09)).epsilon(1e-15));
  CHECK_THROWS_AS(analytic_gaussian_velocity1(0.0, 1.5, 1.0),
                  std::invalid_argument);
  CHECK(gaussian_marginal_var(0.0, 3.0) == 9.0);
  CHECK(gaussian_marginal_var(1.0, 3.0) == 1.0);
  CHECK(gaussian_marginal_var(0.5, 3.0) == doctest::Approx(2.5).epsilon(1e-15));
  Vec v = analytic_gaussian_velocity({1.0, -2.0}, 1.0, 1.0);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == -2.0);
}

TEST_CASE("smoothed-gradient identity: analytic side and MC agreement") {
  LinearFlowOracle o = smoothing_oracle();
  SteinReport rep = stein_check(o, 100000, 1);
  CHECK(rep.analytic[0] == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(rep.analytic[1] == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(rep.rel_error < 0.05);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(rep.mc_estimate[i] - rep.analytic[i]) <
          5.0 * rep.stderr_mc[i]);
  }
  CHECK(rep.n_samples == 100000);
}

TEST_CASE("MC error shrinks with the sample count") {
  LinearFlowOracle o = smoothing_oracle();
  SteinReport small = stein_check(o, 10000, 1);
  SteinReport big = stein_check(o, 100000, 1);
  CHECK(big.stderr_mc[0] < small.stderr_mc[0]);
  CHECK(big.stderr_mc[1] < small.stderr_mc[1]);
  CHECK(big.rel_error < small.rel_error);
}

TEST_CASE("a reward baseline changes the variance, not the expectation") {
  LinearFlowOracle o = smoothing_oracle();
  double off_baseline = 123.0;
  SteinReport natural = stein_check(o, 50000, 2);
  SteinReport shifted = stein_check(o, 50000, 2, &off_baseline);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(shifted.mc_estimate[i] - shifted.analytic[i]) <
          6.0 * shifted.stderr_mc[i]);
    CHECK(shifted.stderr_mc[i] > natural.stderr_mc[i]);
  }
}

TEST_CASE("radial rewards are admitted; others and bad shapes are not") {
  LinearFlowOracle o = smoothing_oracle();
  o.reward.kind = RewardSpec::kRadial;
  o.reward.mu = {0.5, 0.0};
  CHECK_NOTHROW(stein_check(o, 10000, 3));

  LinearFlowOracle bad = smoothing_oracle();
  bad.reward.kind = RewardSpec::kSigmoidHalfplane;
  bad.reward.u = {1.0, 0.0};
  CHECK_THROWS_AS(stein_check(bad, 10000, 3), std::invalid_argument);

  LinearFlowOracle few = smoothing_oracle();
  CHECK_THROWS_AS(stein_check(few, 100, 3), std::invalid_argument);

  LinearFlowOracle nosig = smoothing_oracle();
  nosig.sigma_c = 0.0;
  CHECK_THROWS_AS(stein_check(nosig, 10000, 3), std::invalid_argument);

  LinearFlowOracle rect = smoothing_oracle();
  rect.A = Mat(2, 3);
  CHECK_THROWS_AS(stein_check(rect, 10000, 3), std::invalid_argument);
}

TEST_CASE("a constant reward yields an exactly zero estimate") {
  LinearFlowOracle o = smoothing_oracle();
  o.reward.b = {0.0, 0.0};
  SteinReport rep = stein_check(o, 10000, 4);
  CHECK(rep.mc_estimate[0] == 0.0);
  CHECK(rep.mc_estimate[1] == 0.0);
  CHECK(rep.rel_error == 0.0);
}

TEST_CASE("linear-flow ascent statistic matches its closed form") {
  LinearFlowOracle o = ascent_oracle();
  AscentReport rep = prototype_fdfo_step(o, 200000, 1);
  CHECK(rep.t_stat() >= 5.0);
  CHECK(std::abs(rep.mean - 0.13) < 5.0 * rep.stderr_mc);

  LinearFlowOracle half = o;
  half.sigma_c = 0.05;
  AscentReport rep2 = prototype_fdfo_step(half, 200000, 1);
  CHECK(rep2.t_stat() >= 5.0);
  CHECK(std::abs(rep2.mean - 13.0 * 0.0025) < 5.0 * rep2.stderr_mc);
}

TEST_CASE("network ascent statistic is positive at a mid-trajectory step") {
  VelocityNet net = make_net(2, 8, 77, 16, 2, 4);
  Rng rng(77, stream_id(StreamKind::mc, 40, 0));
  for (double& th : net.theta) th += 0.1 * rng.gaussian();
  RewardBinding rb;
  rb.spec.kind = RewardSpec::kSigmoidHalfplane;
  rb.spec.u = {0.0, 1.0};
  rb.spec.gain = 4.0;
  TimeGrid grid = TimeGrid::uniform(8);
  AscentReport rep = prototype_fdfo_step(net, rb, 4, grid, 0.05, 500, 9);
  CHECK(rep.t_stat() >= 3.0);

  CHECK_THROWS_AS(prototype_fdfo_step(net, rb, 8, grid, 0.05, 100, 9),
                  std::invalid_argument);
  CHECK_THROWS_AS(prototype_fdfo_step(net, rb, 4, grid, 0.0, 100, 9),
                  std::invalid_argument);
  RewardBinding nd;
  nd.spec.kind = RewardSpec::kStep;
  nd.spec.u = {0.0, 1.0};
  CHECK_THROWS_AS(prototype_fdfo_step(net, nd, 4, grid, 0.05, 100, 9),
                  std::invalid_argument);
}

TEST_CASE("Jacobian statistic recovers eigenvalues of known maps") {
  Vec x = {0.3, -0.2};
  auto ident = [](const Vec& y) { return y; };
  CHECK(jacobian_psd_stat(ident, x) == doctest::Approx(1.0).epsilon(1e-9));

  auto lin = [](const Vec& y) {
    return Vec{2.0 * y[0] + y[1], y[0] + y[1]};
  };
  CHECK(jacobian_psd_stat(lin, x) ==
        doctest::Approx((3.0 - std::sqrt(5.0)) / 2.0).epsilon(1e-9));

  auto rot = [](const Vec& y) { return Vec{-y[1], y[0]}; };
  CHECK(jacobian_psd_stat(rot, x) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

  auto neg = [](const Vec& y) { return Vec{-y[0], -y[1]}; };
  CHECK(jacobian_psd_stat(neg, x) == doctest::Approx(-1.0).epsilon(1e-9));

  auto blowup = [](const Vec& y) {
    return Vec{std::numeric_limits<double>::infinity(), y[1]};
  };
  CHECK_THROWS_AS(jacobian_psd_stat(blowup, x), std::runtime_error);
  auto shrink = [](const Vec& y) { return Vec{y[0]}; };
  CHECK_THROWS_AS(jacobian_psd_stat(shrink, x), std::invalid_argument);
}

TEST_CASE("a zero-velocity completion has the identity Jacobian") {
  VelocityNet net = make_net(2, 3, 5, 8, 2, 4);  // output layer zero at init
  TimeGrid grid = TimeGrid::uniform(6);
  Vec x = {0.7, -0.1};
  CHECK(jacobian_psd_stat(net, x, grid, 2, 1) ==
        doctest::Approx(1.0).epsilon(1e-9));
  Vec done = complete_deterministic(net, x, grid, 2, 1);
  CHECK(done[0] == x[0]);
  CHECK(done[1] == x[1]);
  CHECK_THROWS_AS(complete_deterministic(net, x, grid, 7, 1),
                  std::invalid_argument);
}

TEST_CASE("stochastic chains preserve the analytic marginal; a broken mixer "
          "is caught") {
  TimeGrid grid = TimeGrid::uniform(40);
  StochasticitySchedule sched = schedule_uniform(40, 0.2);
  MarginalReport ok =
      marginal_check(1.0, grid, sched, 10000, 1, TransportMode::kExact, false);
  CHECK(ok.max_abs_z < 4.0);
  CHECK(static_cast<int>(ok.z_var.size()) == 41);

  MarginalReport broken =
      marginal_check(1.0, grid, sched, 10000, 1, TransportMode::kExact, true);
  CHECK(broken.max_abs_z > 10.0);

  // Euler transport carries integration bias the exact transport does not
  MarginalReport euler =
      marginal_check(1.0, grid, sched, 10000, 1, TransportMode::kEuler, false);
  CHECK(euler.max_abs_z > ok.max_abs_z);

  StochasticitySchedule wrong = schedule_uniform(39, 0.2);
  CHECK_THROWS_AS(marginal_check(1.0, grid, wrong, 100, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(marginal_check(1.0, grid, sched, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("tape gradients of the full training loss match finite differences") {
  CHECK(gradcheck_max_rel_err(20, 123) < 1e-4);
  CHECK_THROWS_AS(gradcheck_max_rel_err(0, 1), std::invalid_argument);
}
