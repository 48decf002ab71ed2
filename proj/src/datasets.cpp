#include "fdfo/datasets.hpp"

#include <cmath>
#include <stdexcept>

#include "fdfo/errors.hpp"

namespace fdfo {

namespace {
constexpr double kRingRadius = 1.0;   // times sigma_d
constexpr double kRingStd = 0.1;      // times sigma_d
constexpr double kMixCoord = 0.8;     // gauss_mixture centers (+-c, +-c)
constexpr double kMixStd = 0.25;
constexpr int kBoardCells = 4;        // checkerboard is kBoardCells^2 on [-1,1]^2
}  // namespace

int DatasetSpec::C() const {
  switch (kind) {
    case kGaussMixture: return 4;
    case kRing8: return 8;
    case kCheckerboard: return 2;
    case kGauss1d: return 1;
  }
  return 1;
}

int DatasetSpec::n_modes() const {
  switch (kind) {
    case kGaussMixture: return 4;
    case kRing8: return 8;
    case kCheckerboard: return kBoardCells * kBoardCells;
    case kGauss1d: return 1;
  }
  return 1;
}

Vec DatasetSpec::mode_center(int m) const {
  switch (kind) {
    case kGaussMixture: {
      double x = (m & 1) ? kMixCoord : -kMixCoord;
      double y = (m & 2) ? kMixCoord : -kMixCoord;
      return {sigma_d * x, sigma_d * y};
    }
    case kRing8: {
      double ang = 2.0 * M_PI * m / 8.0;
      return {sigma_d * kRingRadius * std::cos(ang),
              sigma_d * kRingRadius * std::sin(ang)};
    }
    case kCheckerboard: {
      int r = m / kBoardCells, c = m % kBoardCells;
      double w = 2.0 / kBoardCells;
      return {sigma_d * (-1.0 + w * (c + 0.5)), sigma_d * (-1.0 + w * (r + 0.5))};
    }
    case kGauss1d: return {0.0};
  }
  return {0.0};
}

int DatasetSpec::mode_condition(int m) const {
  switch (kind) {
    case kCheckerboard: {
      int r = m / kBoardCells, c = m % kBoardCells;
      return (r + c) & 1;
    }
    default: return m;
  }
}

double DatasetSpec::mode_std() const {
  switch (kind) {
    case kGaussMixture: return sigma_d * kMixStd;
    case kRing8: return sigma_d * kRingStd;
    case kCheckerboard: return 0.0;  // uniform cells, no Gaussian mode
    case kGauss1d: return sigma_d;
  }
  return sigma_d;
}

DatasetSpec dataset_from_name(const std::string& name, double sigma_d) {
  DatasetSpec s;
  s.sigma_d = sigma_d;
  if (name == "gauss_mixture") s.kind = DatasetSpec::kGaussMixture;
  else if (name == "ring8") s.kind = DatasetSpec::kRing8;
  else if (name == "checkerboard") s.kind = DatasetSpec::kCheckerboard;
  else if (name == "gauss1d") s.kind = DatasetSpec::kGauss1d;
  else throw std::invalid_argument("unknown dataset name: " + name);
  if (!(sigma_d > 0.0)) throw std::invalid_argument("dataset sigma_d must be > 0");
  return s;
}

std::string dataset_name(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetSpec::kGaussMixture: return "gauss_mixture";
    case DatasetSpec::kRing8: return "ring8";
    case DatasetSpec::kCheckerboard: return "checkerboard";
    case DatasetSpec::kGauss1d: return "gauss1d";
  }
  return "?";
}

Vec sample_dataset_one(const DatasetSpec& spec, int c, Rng& rng) {
  if (c < 0 || c >= spec.C()) throw std::invalid_argument("sample_dataset: bad condition");
  switch (spec.kind) {
    case DatasetSpec::kGauss1d:
      return {spec.sigma_d * rng.gaussian()};
    case DatasetSpec::kGaussMixture: {
      Vec ctr = spec.mode_center(c);
      double s = spec.mode_std();
      return {ctr[0] + s * rng.gaussian(), ctr[1] + s * rng.gaussian()};
    }
    case DatasetSpec::kRing8: {
      // Gaussian blob truncated at 4 sigma, so membership tests are exact.
      Vec ctr = spec.mode_center(c);
      double s = spec.mode_std();
      for (;;) {
        double gx = rng.gaussian(), gy = rng.gaussian();
        if (gx * gx + gy * gy <= 16.0) return {ctr[0] + s * gx, ctr[1] + s * gy};
      }
    }
    case DatasetSpec::kCheckerboard: {
      // uniform over the cells whose parity matches the condition
      int n = spec.n_modes();
      int pick = static_cast<int>(rng.uniform() * (n / 2));
      if (pick >= n / 2) pick = n / 2 - 1;
      int k = 0;
      for (int m = 0; m < n; ++m)
        if (spec.mode_condition(m) == c && pick-- == 0) {
          k = m;
          break;
        }
      Vec ctr = spec.mode_center(k);
      double half = spec.sigma_d / kBoardCells;  // half cell width
      return {ctr[0] + (2.0 * rng.uniform() - 1.0) * half,
              ctr[1] + (2.0 * rng.uniform() - 1.0) * half};
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<Vec> sample_dataset(const DatasetSpec& spec, int n, int c, Rng& rng) {
  std::vector<Vec> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sample_dataset_one(spec, c, rng));
  return out;
}

int nearest_mode(const DatasetSpec& spec, const Vec& y) {
  int best = 0;
  double best_d = 0.0;
  for (int m = 0; m < spec.n_modes(); ++m) {
    Vec ctr = spec.mode_center(m);
    double d2 = 0.0;
    for (size_t i = 0; i < y.size(); ++i) d2 += (y[i] - ctr[i]) * (y[i] - ctr[i]);
    if (m == 0 || d2 < best_d) {
      best = m;
      best_d = d2;
    }
  }
  return best;
}

TrainBatch make_batch(const DatasetSpec& spec, const VelocityNet& net, int n,
                      double p_uncond, Rng& rng) {
  TrainBatch b;
  b.x0.reserve(n);
  b.c.reserve(n);
  b.t.reserve(n);
  b.eps.reserve(n);
  for (int i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.uniform() * spec.C());
    if (c >= spec.C()) c = spec.C() - 1;
    b.x0.push_back(sample_dataset_one(spec, c, rng));
    Vec e(spec.d());
    for (double& x : e) x = rng.gaussian();
    b.eps.push_back(std::move(e));
    // t strictly inside (0,1): uniform() is (0,1], flip to [0,1) then reject 0
    double t;
    do {
      t = 1.0 - rng.uniform();
    } while (t == 0.0);
    b.t.push_back(t);
    if (rng.uniform() <= p_uncond) c = net.C;  // drop to null for CFG training
    b.c.push_back(c);
  }
  return b;
}

double cfm_loss(const VelocityNet& net, const TrainBatch& batch) {
  size_t n = batch.x0.size();
  if (n == 0) throw std::invalid_argument("cfm_loss: empty batch");
  double total = 0.0;
  Vec xt(net.d), v(net.d);
  for (size_t i = 0; i < n; ++i) {
    require_finite(batch.x0[i], "cfm_loss x0");
    require_finite(batch.eps[i], "cfm_loss eps");
    double t = batch.t[i];
    for (int k = 0; k < net.d; ++k)
      xt[k] = (1.0 - t) * batch.x0[i][k] + t * batch.eps[i][k];
    velocity_into(net, xt.data(), t, batch.c[i], v.data());
    for (int k = 0; k < net.d; ++k) {
      double diff = v[k] - (batch.eps[i][k] - batch.x0[i][k]);
      total += diff * diff;
    }
  }
  return total / static_cast<double>(n);
}

PretrainResult pretrain(const DatasetSpec& spec, const PretrainConfig& cfg) {
  PretrainResult res;
  res.net = make_net(spec.d(), spec.C(), cfg.seed, cfg.hidden, cfg.layers, cfg.embed);
  VelocityNet& net = res.net;
  AdamWState opt(net.theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt,
                 cfg.weight_decay);
  Vec grad(net.theta.size(), 0.0);
  Tape tape(net.theta, &grad);
  double inv_n = 1.0 / cfg.batch;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(cfg.seed, stream_id(StreamKind::pretrain, static_cast<uint64_t>(step)));
    TrainBatch batch = make_batch(spec, net, cfg.batch, cfg.p_uncond, rng);
    tape.reset();
    std::fill(grad.begin(), grad.end(), 0.0);
    int loss_node = -1;
    Vec xt(net.d), u(net.d);
    for (int i = 0; i < cfg.batch; ++i) {
      double t = batch.t[i];
      for (int k = 0; k < net.d; ++k) {
        xt[k] = (1.0 - t) * batch.x0[i][k] + t * batch.eps[i][k];
        u[k] = batch.eps[i][k] - batch.x0[i][k];
      }
      int v = velocity_on_tape(net, tape, xt, t, batch.c[i]);
      int target = tape.constant(u.data(), net.d);
      int item = tape.scale(tape.sq_norm_op(tape.sub(v, target)), inv_n);
      loss_node = loss_node < 0 ? item : tape.add(loss_node, item);
    }
    double loss = tape.value(loss_node);
    if (!std::isfinite(loss))
      throw DivergenceError("pretrain diverged: non-finite loss at step " +
                            std::to_string(step));
    tape.backward(loss_node, 1.0);
    adamw_step(net.theta, grad, opt);
    if (step % cfg.log_every == 0 || step == cfg.steps - 1)
      res.loss_log.emplace_back(step, loss);
  }
  return res;
}

}  // namespace fdfo
