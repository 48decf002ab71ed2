#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fdfo/net.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/tape.hpp"

using namespace fdfo;

TEST_CASE("time features expose raw t plus the sin/cos ladder") {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double f[kTimeFeatures];
  time_features(0.25, f);
  CHECK(f[0] == 0.25);
  CHECK(f[1] == doctest::Approx(std::sin(kTwoPi * 0.25)).epsilon(1e-15));
  CHECK(f[2] == doctest::Approx(std::cos(kTwoPi * 0.25)).epsilon(1e-15));
  // highest frequency is 8 cycles
  CHECK(f[7] == doctest::Approx(std::sin(kTwoPi * 8 * 0.25)).epsilon(1e-12));
  CHECK(f[8] == doctest::Approx(std::cos(kTwoPi * 8 * 0.25)).epsilon(1e-12));
}

TEST_CASE("freshly initialized net is the zero velocity field") {
  VelocityNet net = make_net(2, 4, 123);
  for (double t : {0.0, 0.3, 1.0}) {
    for (int c = 0; c <= 4; ++c) {
      Vec v = velocity(net, {0.7, -1.2}, t, c);
      CHECK(v[0] == 0.0);
      CHECK(v[1] == 0.0);
    }
  }
}

TEST_CASE("parameter layout is contiguous and exhaustive") {
  VelocityNet net = make_net(3, 5, 7, 16, 2, 6);
  CHECK(net.n_params() == static_cast<int>(net.theta.size()));
  // walk layers: each W/b block starts where the previous ended
  int expect = 0;
  for (int l = 0; l <= net.layers; ++l) {
    CHECK(net.w_off(l) == expect);
    expect += net.layer_in(l) * net.layer_out(l);
    CHECK(net.b_off(l) == expect);
    expect += net.layer_out(l);
  }
  CHECK(net.embed_off(0) == expect);
  expect += (net.C + 1) * net.embed;
  CHECK(expect == net.n_params());
}

TEST_CASE("evaluation is pure and deterministic") {
  VelocityNet net = make_net(2, 3, 99);
  Rng rng(1, stream_id(StreamKind::mc, 0, 0));
  for (double& th : net.theta) th = 0.4 * rng.gaussian();
  Vec x = {0.3, -0.8};
  Vec v1 = velocity(net, x, 0.6, 1);
  Vec v2 = velocity(net, x, 0.6, 1);
  CHECK(v1[0] == v2[0]);
  CHECK(v1[1] == v2[1]);
  // distinct conditions route through different embeddings
  Vec v3 = velocity(net, x, 0.6, 2);
  CHECK(v1[0] != v3[0]);
}

TEST_CASE("input contract rejects bad t, condition, and non-finite x") {
  VelocityNet net = make_net(2, 3, 5);
  CHECK_THROWS_AS(velocity(net, {0.0, 0.0}, -0.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(velocity(net, {0.0, 0.0}, 1.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(velocity(net, {0.0, 0.0}, 0.5, -1), std::invalid_argument);
  CHECK_THROWS_AS(velocity(net, {0.0, 0.0}, 0.5, 4), std::invalid_argument);
  double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(velocity(net, {inf, 0.0}, 0.5, 0), std::runtime_error);
  // null condition id C itself is valid
  CHECK_NOTHROW(velocity(net, {0.0, 0.0}, 0.5, 3));
}

TEST_CASE("guided velocity reduces to the parts at w = 0 and w = 1") {
  VelocityNet net = make_net(2, 3, 31);
  Rng rng(2, stream_id(StreamKind::mc, 1, 0));
  for (double& th : net.theta) th = 0.3 * rng.gaussian();
  Vec x = {0.5, 0.1};
  Vec vc = velocity(net, x, 0.4, 1);
  Vec vn = velocity(net, x, 0.4, 3);  // null id
  Vec g0 = cfg_velocity(net, x, 0.4, 1, 0.0);
  Vec g1 = cfg_velocity(net, x, 0.4, 1, 1.0);
  CHECK(g0[0] == vn[0]);
  CHECK(g0[1] == vn[1]);
  CHECK(g1[0] == vc[0]);
  CHECK(g1[1] == vc[1]);
  // w=2 extrapolates: v_null + 2 (v_c - v_null)
  Vec g2 = cfg_velocity(net, x, 0.4, 1, 2.0);
  CHECK(g2[0] == doctest::Approx(vn[0] + 2 * (vc[0] - vn[0])).epsilon(1e-15));
  // guiding toward the null condition is rejected
  CHECK_THROWS_AS(cfg_velocity(net, x, 0.4, 3, 1.0), std::invalid_argument);
}

TEST_CASE("tape-recorded evaluation matches the fast path bit-for-bit") {
  VelocityNet net = make_net(2, 4, 77);
  Rng rng(3, stream_id(StreamKind::mc, 2, 0));
  for (double& th : net.theta) th = 0.5 * rng.gaussian();
  for (int c : {0, 2, 4}) {
    for (double t : {0.0, 0.37, 1.0}) {
      Vec x = {rng.gaussian(), rng.gaussian()};
      Vec fast = velocity(net, x, t, c);
      Vec grad(net.theta.size(), 0.0);
      Tape tape(net.theta, &grad);
      int out = velocity_on_tape(net, tape, x, t, c);
      CHECK(tape.size(out) == 2);
      CHECK(tape.data(out)[0] == fast[0]);
      CHECK(tape.data(out)[1] == fast[1]);
    }
  }
  // guided variant too
  Vec x = {0.2, -0.4};
  Vec fast = cfg_velocity(net, x, 0.5, 1, 1.7);
  Vec grad(net.theta.size(), 0.0);
  Tape tape(net.theta, &grad);
  int out = cfg_velocity_on_tape(net, tape, x, 0.5, 1, 1.7);
  CHECK(tape.data(out)[0] == fast[0]);
  CHECK(tape.data(out)[1] == fast[1]);
}

TEST_CASE("tape gradient of a velocity component matches finite differences") {
  VelocityNet net = make_net(2, 2, 55, 8, 2, 4);
  Rng rng(4, stream_id(StreamKind::mc, 3, 0));
  for (double& th : net.theta) th = 0.4 * rng.gaussian();
  Vec x = {0.6, -0.2};
  const double t = 0.45;
  const int c = 1;

  Vec grad(net.theta.size(), 0.0);
  {
    Tape tape(net.theta, &grad);
    int out = velocity_on_tape(net, tape, x, t, c);
    int s = tape.sq_norm_op(out);
    tape.backward(s, 1.0);
  }
  auto f = [&](int i, double h) {
    VelocityNet n2 = net;
    n2.theta[i] += h;
    return sq_norm(velocity(n2, x, t, c));
  };
  int checked = 0;
  for (int i = 0; i < static_cast<int>(net.theta.size()); i += 7) {
    double fd = (f(i, 1e-6) - f(i, -1e-6)) / 2e-6;
    CHECK(std::abs(grad[i] - fd) <
          1e-5 * std::max({1.0, std::abs(fd), std::abs(grad[i])}));
    ++checked;
  }
  CHECK(checked > 20);
}
