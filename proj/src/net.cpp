#include "fdfo/net.hpp"

#include <cmath>
#include <stdexcept>

namespace fdfo {

void time_features(double t, double out[kTimeFeatures]) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  out[0] = t;
  double f = 1.0;
  for (int k = 0; k < kTimeFreqs; ++k) {
    out[1 + 2 * k] = std::sin(kTwoPi * f * t);
    out[2 + 2 * k] = std::cos(kTwoPi * f * t);
    f *= 2.0;
  }
}

int VelocityNet::n_params() const {
  int n = 0;
  for (int l = 0; l <= layers; ++l) n += layer_in(l) * layer_out(l) + layer_out(l);
  n += (C + 1) * embed;
  return n;
}

int VelocityNet::w_off(int layer) const {
  int off = 0;
  for (int l = 0; l < layer; ++l) off += layer_in(l) * layer_out(l) + layer_out(l);
  return off;
}

int VelocityNet::b_off(int layer) const {
  return w_off(layer) + layer_in(layer) * layer_out(layer);
}

int VelocityNet::embed_off(int c) const {
  return w_off(layers) + layer_in(layers) * layer_out(layers) + layer_out(layers) +
         c * embed;
}

VelocityNet make_net(int d, int C, uint64_t seed, int hidden, int layers,
                     int embed) {
  VelocityNet net;
  net.d = d;
  net.hidden = hidden;
  net.layers = layers;
  net.embed = embed;
  net.C = C;
  net.theta.assign(net.n_params(), 0.0);
  Rng rng(seed, stream_id(StreamKind::init));
  for (int l = 0; l < layers; ++l) {
    int nin = net.layer_in(l), nout = net.layer_out(l);
    double s = 1.0 / std::sqrt(static_cast<double>(nin));
    for (int i = 0; i < nin * nout; ++i) net.theta[net.w_off(l) + i] = s * rng.gaussian();
    // biases stay zero
  }
  // output layer stays zero (identity flow at init)
  for (int i = 0; i < (C + 1) * embed; ++i)
    net.theta[net.embed_off(0) + i] = 0.5 * rng.gaussian();
  return net;
}

static void check_inputs(const VelocityNet& net, const double* x, double t, int c) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("velocity: t outside [0,1]");
  if (c < 0 || c > net.C) throw std::invalid_argument("velocity: condition id out of range");
  for (int i = 0; i < net.d; ++i)
    if (!std::isfinite(x[i])) throw std::runtime_error("velocity: non-finite x");
}

void velocity_into(const VelocityNet& net, const double* x, double t, int c,
                   double* out) {
  check_inputs(net, x, t, c);
  // input = [x | time features | embedding row]
  constexpr int kMaxIn = 512;
  double buf_a[kMaxIn], buf_b[kMaxIn];
  double* in = buf_a;
  double* hid = buf_b;
  for (int i = 0; i < net.d; ++i) in[i] = x[i];
  time_features(t, in + net.d);
  const double* erow = net.theta.data() + net.embed_off(c);
  for (int i = 0; i < net.embed; ++i) in[net.d + kTimeFeatures + i] = erow[i];
  for (int l = 0; l < net.layers; ++l) {
    int nin = net.layer_in(l), nout = net.layer_out(l);
    affine_forward(in, net.theta.data() + net.w_off(l),
                   net.theta.data() + net.b_off(l), hid, nin, nout);
    for (int j = 0; j < nout; ++j) hid[j] = std::tanh(hid[j]);
    std::swap(in, hid);
  }
  affine_forward(in, net.theta.data() + net.w_off(net.layers),
                 net.theta.data() + net.b_off(net.layers), out,
                 net.layer_in(net.layers), net.d);
}

Vec velocity(const VelocityNet& net, const Vec& x, double t, int c) {
  if (static_cast<int>(x.size()) != net.d)
    throw std::invalid_argument("velocity: dimension mismatch");
  Vec out(net.d);
  velocity_into(net, x.data(), t, c, out.data());
  return out;
}

Vec cfg_velocity(const VelocityNet& net, const Vec& x, double t, int c, double w) {
  if (c == net.C) throw std::invalid_argument("cfg_velocity: null condition not allowed");
  Vec vn = velocity(net, x, t, net.C);
  Vec vc = velocity(net, x, t, c);
  Vec out(net.d);
  for (int i = 0; i < net.d; ++i) out[i] = vn[i] + w * (vc[i] - vn[i]);
  return out;
}

int velocity_on_tape(const VelocityNet& net, Tape& tape, const Vec& x, double t,
                     int c) {
  check_inputs(net, x.data(), t, c);
  double tf[kTimeFeatures];
  time_features(t, tf);
  int nx = tape.constant(x.data(), net.d);
  int nt = tape.constant(tf, kTimeFeatures);
  int ne = tape.param_view(net.embed_off(c), net.embed);
  int h = tape.concat3(nx, nt, ne);
  for (int l = 0; l < net.layers; ++l) {
    h = tape.affine(h, net.w_off(l), net.b_off(l), net.layer_out(l));
    h = tape.tanh_op(h);
  }
  return tape.affine(h, net.w_off(net.layers), net.b_off(net.layers), net.d);
}

int cfg_velocity_on_tape(const VelocityNet& net, Tape& tape, const Vec& x,
                         double t, int c, double w) {
  if (c == net.C) throw std::invalid_argument("cfg_velocity: null condition not allowed");
  int vn = velocity_on_tape(net, tape, x, t, net.C);
  int vc = velocity_on_tape(net, tape, x, t, c);
  // vn + w (vc - vn)
  return tape.add(vn, tape.scale(tape.sub(vc, vn), w));
}

}  // namespace fdfo
