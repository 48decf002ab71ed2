#pragma once
// Conditional velocity network v(x; t, c): a small tanh MLP over
// [x, time features, condition embedding], with a reserved null condition
// for classifier-free guidance. The final layer is zero-initialized so the
// untrained flow is the identity map over time.

#include <cstdint>

#include "fdfo/linalg.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/tape.hpp"

namespace fdfo {

constexpr int kTimeFreqs = 4;                      // sin/cos at 1,2,4,8 cycles
constexpr int kTimeFeatures = 1 + 2 * kTimeFreqs;  // raw t + pairs

// t in [0,1] -> [t, sin(2pi f t), cos(2pi f t) for f in 1,2,4,8]
void time_features(double t, double out[kTimeFeatures]);

struct VelocityNet {
  int d = 2;        // data dimension; equals output dimension
  int hidden = 64;  // width of each hidden layer
  int layers = 3;   // hidden layer count
  int embed = 8;    // condition embedding dimension
  int C = 1;        // real conditions; id C is the reserved null condition
  Vec theta;

  // flat layout: [W1 b1 | W2 b2 ... | Wout bout | E], E is (C+1) x embed
  int input_dim() const { return d + kTimeFeatures + embed; }
  int n_params() const;
  int w_off(int layer) const;  // layer 0..layers (layers = output layer)
  int b_off(int layer) const;
  int embed_off(int c) const;
  int layer_in(int layer) const { return layer == 0 ? input_dim() : hidden; }
  int layer_out(int layer) const { return layer == layers ? d : hidden; }
};

// Gaussian fan-in init for hidden layers, 0.5-scaled Gaussian embeddings,
// zero-initialized output layer.
VelocityNet make_net(int d, int C, uint64_t seed, int hidden = 64,
                     int layers = 3, int embed = 8);

// Fast (non-recording) evaluation. out must hold d doubles.
// Validates t in [0,1] and finite x per the contract.
void velocity_into(const VelocityNet& net, const double* x, double t, int c,
                   double* out);
Vec velocity(const VelocityNet& net, const Vec& x, double t, int c);

// v_null + w * (v_c - v_null); rejects the null condition.
Vec cfg_velocity(const VelocityNet& net, const Vec& x, double t, int c, double w);

// Tape-recorded evaluation (identical bits to velocity()); returns the node id
// of the d-dimensional output.
int velocity_on_tape(const VelocityNet& net, Tape& tape, const Vec& x, double t,
                     int c);
int cfg_velocity_on_tape(const VelocityNet& net, Tape& tape, const Vec& x,
                         double t, int c, double w);

}  // namespace fdfo
