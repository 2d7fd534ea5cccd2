#include "occtip/ssm.hpp"

#include <cmath>

#include "occtip/error.hpp"

namespace occtip::ssm {

Discretized zoh_discretize(double a, double b, double dt) {
  if (!(dt > 0.0)) fail(ErrorKind::InvalidInput, "discretization step must be positive");
  if (!(a < 0.0)) fail(ErrorKind::InvalidInput, "state coefficient must be negative");
  return {std::exp(dt * a), dt * b};
}

double zoh_exact_b(double a, double b, double dt) { return std::expm1(dt * a) / a * b; }

S6Params::S6Params(int channels_, int n_state_)
    : channels(channels_),
      n_state(n_state_),
      dt_rank(rank_for(channels_)),
      a_log(channels_, n_state_),
      b_proj(channels_, n_state_),
      c_proj(channels_, n_state_),
      dt_down(channels_, rank_for(channels_), false),
      dt_up(rank_for(channels_), channels_),
      d_skip(1, channels_) {}

void S6Params::init(Rng& rng) {
  b_proj.init_uniform(rng);
  c_proj.init_uniform(rng);
  dt_down.init_uniform(rng);
  dt_up.init_uniform(rng);
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  for (int d = 0; d < channels; ++d) {
    dt_up.bias.value(0, d) = softplus_inverse(std::exp(log_dt(rng)));
  }
  for (int d = 0; d < channels; ++d) {
    for (int n = 0; n < n_state; ++n) {
      const double frac = n_state == 1 ? 0.0 : static_cast<double>(n) / (n_state - 1);
      a_log.value(d, n) = frac * std::log(16.0);
    }
  }
  d_skip.value.setOnes();
}

double S6Params::a(int channel, int state) const { return -std::exp(a_log.value(channel, state)); }

void S6Params::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".a_log", &a_log, false});
  b_proj.collect(prefix + ".b_proj", out);
  c_proj.collect(prefix + ".c_proj", out);
  dt_down.collect(prefix + ".dt_down", out);
  dt_up.collect(prefix + ".dt_up", out);
  if (use_skip) out.push_back({prefix + ".d_skip", &d_skip, false});
}

std::size_t S6Params::num_params() const { return count(channels, n_state); }

std::size_t S6Params::count(int channels, int n_state) {
  const int rank = rank_for(channels);
  return static_cast<std::size_t>(channels) * n_state + 2 * Linear::count(channels, n_state) +
         Linear::count(channels, rank, false) + Linear::count(rank, channels) +
         static_cast<std::size_t>(channels);
}

namespace {

void check_input(const Mat& x, const S6Params& params) {
  if (x.cols() != params.channels) {
    fail(ErrorKind::ShapeError, "scan expects " + std::to_string(params.channels) + " channels");
  }
  if (!all_finite(x)) throw NumericalError("selective_scan", -1, "non-finite input");
}

}  // namespace

Mat selective_scan(const Mat& x, const S6Params& params, ScanTrace* trace) {
  check_input(x, params);
  const Eigen::Index len = x.rows();
  const int dim = params.channels;
  const int n_state = params.n_state;

  Mat dt_low = params.dt_down.forward(x);
  Mat delta_raw = params.dt_up.forward(dt_low);
  Mat delta = delta_raw.unaryExpr([](double v) { return softplus(v); });
  Mat b = params.b_proj.forward(x);
  Mat c = params.c_proj.forward(x);
  const Mat a = -params.a_log.value.array().exp().matrix();

  std::vector<double> h(static_cast<std::size_t>(dim) * n_state, 0.0);
  std::vector<double> states;
  if (trace) states.resize(static_cast<std::size_t>(len) * dim * n_state);
  Mat y(len, dim);
  const bool skip = params.use_skip;

  for (Eigen::Index t = 0; t < len; ++t) {
    const double* bt = b.row(t).data();
    const double* ct = c.row(t).data();
    for (int d = 0; d < dim; ++d) {
      const double dt = delta(t, d);
      const double xd = x(t, d);
      const double* ad = a.row(d).data();
      double* hd = h.data() + static_cast<std::size_t>(d) * n_state;
      double acc = 0.0;
      for (int n = 0; n < n_state; ++n) {
        hd[n] = std::exp(dt * ad[n]) * hd[n] + dt * bt[n] * xd;
        acc += ct[n] * hd[n];
      }
      y(t, d) = acc + (skip ? params.d_skip.value(0, d) * xd : 0.0);
    }
    if (!y.row(t).allFinite()) throw NumericalError("selective_scan", static_cast<long>(t), "non-finite output");
    if (trace) {
      std::copy(h.begin(), h.end(), states.begin() + static_cast<std::ptrdiff_t>(t * dim * n_state));
    }
  }

  if (trace) {
    trace->x = x;
    trace->dt_low = std::move(dt_low);
    trace->delta_raw = std::move(delta_raw);
    trace->delta = std::move(delta);
    trace->b = std::move(b);
    trace->c = std::move(c);
    trace->states = std::move(states);
  }
  return y;
}

Mat selective_scan_reference(const Mat& x, const S6Params& params) {
  check_input(x, params);
  const Eigen::Index len = x.rows();
  const int dim = params.channels;
  const int n_state = params.n_state;
  const int rank = params.dt_rank;

  std::vector<ScanState> states(static_cast<std::size_t>(dim));
  for (auto& s : states) s.h.assign(static_cast<std::size_t>(n_state), 0.0);

  Mat y(len, dim);
  std::vector<double> b_t(n_state), c_t(n_state), low(rank);
  for (Eigen::Index t = 0; t < len; ++t) {
    for (int n = 0; n < n_state; ++n) {
      double bv = params.b_proj.bias.value(0, n);
      double cv = params.c_proj.bias.value(0, n);
      for (int d = 0; d < dim; ++d) {
        bv += params.b_proj.weight.value(n, d) * x(t, d);
        cv += params.c_proj.weight.value(n, d) * x(t, d);
      }
      b_t[n] = bv;
      c_t[n] = cv;
    }
    for (int r = 0; r < rank; ++r) {
      double v = 0.0;
      for (int d = 0; d < dim; ++d) v += params.dt_down.weight.value(r, d) * x(t, d);
      low[r] = v;
    }
    for (int d = 0; d < dim; ++d) {
      double raw = params.dt_up.bias.value(0, d);
      for (int r = 0; r < rank; ++r) raw += params.dt_up.weight.value(d, r) * low[r];
      const double dt = softplus(raw);
      ScanState& state = states[static_cast<std::size_t>(d)];
      double out = 0.0;
      for (int n = 0; n < n_state; ++n) {
        const Discretized disc = zoh_discretize(params.a(d, n), b_t[n], dt);
        state.h[n] = disc.a_bar * state.h[n] + disc.b_bar * x(t, d);
        out += c_t[n] * state.h[n];
      }
      if (params.use_skip) out += params.d_skip.value(0, d) * x(t, d);
      y(t, d) = out;
      state.position = t + 1;
    }
    if (!y.row(t).allFinite()) {
      throw NumericalError("selective_scan_reference", static_cast<long>(t), "non-finite output");
    }
  }
  return y;
}

Mat selective_scan_backward(const ScanTrace& trace, S6Params& params, const Mat& dy) {
  const Mat& x = trace.x;
  const Eigen::Index len = x.rows();
  const int dim = params.channels;
  const int n_state = params.n_state;
  const Mat a = -params.a_log.value.array().exp().matrix();

  Mat dx = Mat::Zero(len, dim);
  Mat db = Mat::Zero(len, n_state);
  Mat dc = Mat::Zero(len, n_state);
  Mat ddelta = Mat::Zero(len, dim);
  Mat da = Mat::Zero(dim, n_state);
  std::vector<double> carry(static_cast<std::size_t>(dim) * n_state, 0.0);
  const std::size_t stride = static_cast<std::size_t>(dim) * n_state;

  for (Eigen::Index t = len - 1; t >= 0; --t) {
    const double* ht = trace.states.data() + static_cast<std::size_t>(t) * stride;
    const double* hprev = t > 0 ? ht - stride : nullptr;
    for (int d = 0; d < dim; ++d) {
      const double gy = dy(t, d);
      const double xd = x(t, d);
      const double dt = trace.delta(t, d);
      if (params.use_skip) {
        dx(t, d) += gy * params.d_skip.value(0, d);
        params.d_skip.grad(0, d) += gy * xd;
      }
      double* g = carry.data() + static_cast<std::size_t>(d) * n_state;
      double ddt = 0.0;
      double dxd = 0.0;
      for (int n = 0; n < n_state; ++n) {
        const std::size_t idx = static_cast<std::size_t>(d) * n_state + n;
        dc(t, n) += gy * ht[idx];
        g[n] += gy * trace.c(t, n);
        const double a_dn = a(d, n);
        const double a_bar = std::exp(dt * a_dn);
        const double h_prev = hprev ? hprev[idx] : 0.0;
        const double da_bar = g[n] * h_prev;
        const double b_tn = trace.b(t, n);
        ddt += da_bar * a_bar * a_dn + g[n] * b_tn * xd;
        da(d, n) += da_bar * a_bar * dt;
        db(t, n) += g[n] * dt * xd;
        dxd += g[n] * dt * b_tn;
        g[n] *= a_bar;
      }
      ddelta(t, d) += ddt;
      dx(t, d) += dxd;
    }
  }

  params.a_log.grad += da.cwiseProduct(a);
  const Mat ddelta_raw =
      ddelta.cwiseProduct(trace.delta_raw.unaryExpr([](double v) { return sigmoid(v); }));
  const Mat ddt_low = params.dt_up.backward(trace.dt_low, ddelta_raw);
  dx += params.dt_down.backward(x, ddt_low);
  dx += params.b_proj.backward(x, db);
  dx += params.c_proj.backward(x, dc);
  return dx;
}

}  // namespace occtip::ssm
