#pragma once
// Bias-corrected AdamW with decoupled weight decay.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "fdfo/linalg.hpp"

namespace fdfo {

struct AdamWState {
  Vec m, v;            // first/second moments, same size as params
  uint64_t step = 0;   // completed updates
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999;
  double eps_opt = 1e-8;
  double weight_decay = 0.0;

  AdamWState() = default;
  AdamWState(size_t n, double lr_, double b1 = 0.9, double b2 = 0.999,
             double eps = 1e-8, double wd = 0.0)
      : m(n, 0.0), v(n, 0.0), lr(lr_), beta1(b1), beta2(b2), eps_opt(eps),
        weight_decay(wd) {}
};

// theta <- theta - lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
inline void adamw_step(Vec& theta, const Vec& grad, AdamWState& st) {
  if (theta.size() != grad.size() || theta.size() != st.m.size())
    throw std::invalid_argument("adamw_step: dimension mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::runtime_error("adamw_step: non-finite gradient");
  st.step += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    double mhat = st.m[i] / bc1;
    double vhat = st.v[i] / bc2;
    theta[i] -= st.lr * (mhat / (std::sqrt(vhat) + st.eps_opt) +
                         st.weight_decay * theta[i]);
  }
}

}  // namespace fdfo
