#include "fdfo/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace fdfo {

int Tape::push(Node n, int len) {
  n.off = static_cast<int>(val_.size());
  n.len = len;
  nodes_.push_back(n);
  val_.resize(val_.size() + len, 0.0);
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(const double* v, int n) {
  int id = push({kConst}, n);
  for (int i = 0; i < n; ++i) val_[nodes_[id].off + i] = v[i];
  return id;
}

int Tape::param_view(int off, int n) {
  Node nd{kParamView};
  nd.aux = off;
  int id = push(nd, n);
  for (int i = 0; i < n; ++i) val_[nodes_[id].off + i] = (*theta_)[off + i];
  return id;
}

int Tape::concat3(int a, int b, int c) {
  Node nd{kConcat3};
  nd.a = a;
  nd.b = b;
  nd.c = c;
  int n = nodes_[a].len + nodes_[b].len + nodes_[c].len;
  int id = push(nd, n);
  double* out = val_.data() + nodes_[id].off;
  for (int i = 0; i < nodes_[a].len; ++i) *out++ = val_[nodes_[a].off + i];
  for (int i = 0; i < nodes_[b].len; ++i) *out++ = val_[nodes_[b].off + i];
  for (int i = 0; i < nodes_[c].len; ++i) *out++ = val_[nodes_[c].off + i];
  return id;
}

int Tape::affine(int x, int w_off, int b_off, int nout) {
  Node nd{kAffine};
  nd.a = x;
  nd.aux = w_off;
  nd.aux2 = b_off;
  int id = push(nd, nout);
  affine_forward(val_.data() + nodes_[x].off, theta_->data() + w_off,
                 theta_->data() + b_off, val_.data() + nodes_[id].off,
                 nodes_[x].len, nout);
  return id;
}

int Tape::tanh_op(int a) {
  Node nd{kTanh};
  nd.a = a;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = std::tanh(val_[nodes_[a].off + i]);
  return id;
}

int Tape::sigmoid_op(int a) {
  Node nd{kSigmoid};
  nd.a = a;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = 1.0 / (1.0 + std::exp(-val_[nodes_[a].off + i]));
  return id;
}

int Tape::exp_op(int a) {
  Node nd{kExp};
  nd.a = a;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = std::exp(val_[nodes_[a].off + i]);
  return id;
}

int Tape::log_op(int a) {
  Node nd{kLog};
  nd.a = a;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = std::log(val_[nodes_[a].off + i]);
  return id;
}

int Tape::sum_op(int a) {
  Node nd{kSum};
  nd.a = a;
  int id = push(nd, 1);
  double s = 0.0;
  for (int i = 0; i < nodes_[a].len; ++i) s += val_[nodes_[a].off + i];
  val_[nodes_[id].off] = s;
  return id;
}

int Tape::sub(int a, int b) {
  if (nodes_[a].len != nodes_[b].len) throw std::invalid_argument("tape sub: length mismatch");
  Node nd{kSub};
  nd.a = a;
  nd.b = b;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = val_[nodes_[a].off + i] - val_[nodes_[b].off + i];
  return id;
}

int Tape::add(int a, int b) {
  if (nodes_[a].len != nodes_[b].len) throw std::invalid_argument("tape add: length mismatch");
  Node nd{kAdd};
  nd.a = a;
  nd.b = b;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = val_[nodes_[a].off + i] + val_[nodes_[b].off + i];
  return id;
}

int Tape::mul(int a, int b) {
  if (nodes_[a].len != nodes_[b].len) throw std::invalid_argument("tape mul: length mismatch");
  Node nd{kMul};
  nd.a = a;
  nd.b = b;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = val_[nodes_[a].off + i] * val_[nodes_[b].off + i];
  return id;
}

int Tape::scale(int a, double k) {
  Node nd{kScale};
  nd.a = a;
  nd.k = k;
  int id = push(nd, nodes_[a].len);
  for (int i = 0; i < nodes_[a].len; ++i)
    val_[nodes_[id].off + i] = k * val_[nodes_[a].off + i];
  return id;
}

int Tape::sq_norm_op(int a) {
  Node nd{kSqNorm};
  nd.a = a;
  int id = push(nd, 1);
  double s = 0.0;
  for (int i = 0; i < nodes_[a].len; ++i) {
    double x = val_[nodes_[a].off + i];
    s += x * x;
  }
  val_[nodes_[id].off] = s;
  return id;
}

int Tape::exp_clamp(int a, double lo, double hi) {
  if (nodes_[a].len != 1) throw std::invalid_argument("exp_clamp: scalar input required");
  Node nd{kExpClamp};
  nd.a = a;
  nd.k = lo;
  nd.k2 = hi;
  int id = push(nd, 1);
  double x = val_[nodes_[a].off];
  double c = x < lo ? lo : (x > hi ? hi : x);
  val_[nodes_[id].off] = std::exp(c);
  return id;
}

void Tape::backward(int out, double seed) {
  if (nodes_[out].len != 1) throw std::invalid_argument("backward: output must be scalar");
  if (!std::isfinite(val_[nodes_[out].off]))
    throw std::runtime_error("backward: non-finite forward value");
  adj_.assign(val_.size(), 0.0);
  adj_[nodes_[out].off] = seed;
  for (int id = out; id >= 0; --id) {
    const Node& n = nodes_[id];
    const double* dy = adj_.data() + n.off;
    switch (n.op) {
      case kConst:
        break;
      case kParamView:
        for (int i = 0; i < n.len; ++i) (*grad_)[n.aux + i] += dy[i];
        break;
      case kConcat3: {
        double* p = adj_.data() + n.off;
        for (int i = 0; i < nodes_[n.a].len; ++i) adj_[nodes_[n.a].off + i] += *p++;
        for (int i = 0; i < nodes_[n.b].len; ++i) adj_[nodes_[n.b].off + i] += *p++;
        for (int i = 0; i < nodes_[n.c].len; ++i) adj_[nodes_[n.c].off + i] += *p++;
        break;
      }
      case kAffine: {
        const Node& xn = nodes_[n.a];
        const double* x = val_.data() + xn.off;
        const double* W = theta_->data() + n.aux;
        double* dx = adj_.data() + xn.off;
        double* gW = grad_->data() + n.aux;
        double* gb = grad_->data() + n.aux2;
        int nin = xn.len, nout = n.len;
        for (int j = 0; j < nout; ++j) gb[j] += dy[j];
        for (int i = 0; i < nin; ++i) {
          double s = 0.0;
          const double* wrow = W + static_cast<size_t>(i) * nout;
          double* growW = gW + static_cast<size_t>(i) * nout;
          for (int j = 0; j < nout; ++j) {
            s += wrow[j] * dy[j];
            growW[j] += x[i] * dy[j];
          }
          dx[i] += s;
        }
        break;
      }
      case kTanh:
        for (int i = 0; i < n.len; ++i) {
          double y = val_[n.off + i];
          adj_[nodes_[n.a].off + i] += (1.0 - y * y) * dy[i];
        }
        break;
      case kSigmoid:
        for (int i = 0; i < n.len; ++i) {
          double y = val_[n.off + i];
          adj_[nodes_[n.a].off + i] += y * (1.0 - y) * dy[i];
        }
        break;
      case kExp:
        for (int i = 0; i < n.len; ++i)
          adj_[nodes_[n.a].off + i] += val_[n.off + i] * dy[i];
        break;
      case kLog:
        for (int i = 0; i < n.len; ++i)
          adj_[nodes_[n.a].off + i] += dy[i] / val_[nodes_[n.a].off + i];
        break;
      case kSum:
        for (int i = 0; i < nodes_[n.a].len; ++i) adj_[nodes_[n.a].off + i] += dy[0];
        break;
      case kSub:
        for (int i = 0; i < n.len; ++i) {
          adj_[nodes_[n.a].off + i] += dy[i];
          adj_[nodes_[n.b].off + i] -= dy[i];
        }
        break;
      case kAdd:
        for (int i = 0; i < n.len; ++i) {
          adj_[nodes_[n.a].off + i] += dy[i];
          adj_[nodes_[n.b].off + i] += dy[i];
        }
        break;
      case kMul:
        for (int i = 0; i < n.len; ++i) {
          adj_[nodes_[n.a].off + i] += val_[nodes_[n.b].off + i] * dy[i];
          adj_[nodes_[n.b].off + i] += val_[nodes_[n.a].off + i] * dy[i];
        }
        break;
      case kScale:
        for (int i = 0; i < n.len; ++i) adj_[nodes_[n.a].off + i] += n.k * dy[i];
        break;
      case kSqNorm:
        for (int i = 0; i < nodes_[n.a].len; ++i)
          adj_[nodes_[n.a].off + i] += 2.0 * val_[nodes_[n.a].off + i] * dy[0];
        break;
      case kExpClamp: {
        double x = val_[nodes_[n.a].off];
        if (x > n.k && x < n.k2) adj_[nodes_[n.a].off] += val_[n.off] * dy[0];
        break;
      }
    }
  }
}

}  // namespace fdfo
