#pragma once
// Reverse-mode autodiff over a small fixed primitive set (affine, tanh,
// sigmoid, exp, log, sum, squared norm, plus structural concat/view ops).
// Nodes hold whole vectors; values are computed eagerly at record time with
// the same kernels the non-recording fast path uses, so replaying a tape
// reproduces the forward values bit-exactly.
//
// Piecewise constructs (clamp, min) are recorded as the branch that was
// active at record time; their subgradients are exact away from kinks.

#include <cstdint>
#include <vector>

#include "fdfo/linalg.hpp"

namespace fdfo {

// y[j] = b[j] + sum_i x[i] * W[i*nout + j].  Shared by Tape and the fast
// evaluation path so both produce identical bits.
inline void affine_forward(const double* x, const double* W, const double* b,
                           double* y, int nin, int nout) {
  for (int j = 0; j < nout; ++j) {
    double s = b[j];
    for (int i = 0; i < nin; ++i) s += x[i] * W[static_cast<size_t>(i) * nout + j];
    y[j] = s;
  }
}

class Tape {
 public:
  // theta: flat parameter vector (read-only); grad: same-size accumulator
  // that backward() adds into. The caller owns zeroing grad.
  Tape(const Vec& theta, Vec* grad) : theta_(&theta), grad_(grad) {}

  int constant(const double* v, int n);
  int constant_scalar(double v) { return constant(&v, 1); }
  // View of theta[off, off+n); backward scatters into grad[off, off+n).
  int param_view(int off, int n);
  int concat3(int a, int b, int c);
  // y = x·W + b with W = theta[w_off ...] (nin×nout row-major),
  // b = theta[b_off ...]. Parameter gradients accumulate directly.
  int affine(int x, int w_off, int b_off, int nout);
  int tanh_op(int a);
  int sigmoid_op(int a);
  int exp_op(int a);
  int log_op(int a);
  int sum_op(int a);  // scalar: sum of components
  int sub(int a, int b);
  int add(int a, int b);
  int mul(int a, int b);  // elementwise product, equal lengths
  int scale(int a, double k);
  int sq_norm_op(int a);  // scalar: sum of squares
  // exp(clamp(a, lo, hi)) for scalar a; gradient is zero when clamped.
  int exp_clamp(int a, double lo, double hi);

  double value(int id) const { return val_[nodes_[id].off]; }
  const double* data(int id) const { return val_.data() + nodes_[id].off; }
  int size(int id) const { return nodes_[id].len; }
  size_t node_count() const { return nodes_.size(); }

  // Reverse sweep from a scalar output node; seeds d(output) = seed.
  void backward(int out, double seed);

  void reset() {
    nodes_.clear();
    val_.clear();
  }

 private:
  enum Op : uint8_t {
    kConst,
    kParamView,
    kConcat3,
    kAffine,
    kTanh,
    kSigmoid,
    kExp,
    kLog,
    kSum,
    kSub,
    kAdd,
    kMul,
    kScale,
    kSqNorm,
    kExpClamp,
  };
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;  // operand node ids
    int aux = -1, aux2 = -1;     // theta offsets (param view / affine W,b)
    double k = 0.0, k2 = 0.0;    // scalar payload (scale factor, clamp bounds)
    int off = 0, len = 0;        // value slice in the arena
  };

  int push(Node n, int len);

  const Vec* theta_;
  Vec* grad_;
  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> adj_;
};

}  // namespace fdfo
