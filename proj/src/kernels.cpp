#include "abc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/rng.hpp"

namespace abc {

namespace {

void check_same_dim(const State& a, const State& b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": state dimension mismatch");
}

// log(1e-300): densities below this are treated as underflow.
const double kLogDensityFloor = std::log(1e-300);

}  // namespace

NoisingKernelParams noising_kernel(const VolatilitySchedule& sched, double t_prev, double t_next,
                                   const State& x_prev, const State& x_next, double t) {
  check_same_dim(x_prev, x_next, "noising_kernel");
  if (!(t >= t_prev && t <= t_next)) throw DomainError("noising_kernel requires t in [t_prev, t_next]");
  const double c_nn = cov_kernel(sched, t_prev, t_next, t_next);
  if (!(c_nn > 0.0)) throw NumericError("noising_kernel: degenerate segment (C(t_next,t_next) = 0)");
  if (t == t_prev) return {x_prev, 0.0};
  if (t == t_next) return {x_next, 0.0};

  const double phi_pt = resolvent(sched, t_prev, t);
  const double phi_pn = resolvent(sched, t_prev, t_next);
  const double c_tn = cov_kernel(sched, t_prev, t, t_next);
  const double c_tt = cov_kernel(sched, t_prev, t, t);
  const double gain = c_tn / c_nn;

  NoisingKernelParams out;
  out.mean.resize(x_prev.size());
  for (std::size_t k = 0; k < x_prev.size(); ++k) {
    out.mean[k] = phi_pt * x_prev[k] + gain * (x_next[k] - phi_pn * x_prev[k]);
  }
  out.var = std::max(0.0, c_tt - c_tn * gain);
  return out;
}

double score_precision(const VolatilitySchedule& sched, double t, double t_next) {
  if (!(t < t_next)) throw DomainError("score target is singular at t = t_next");
  const double c = cov_kernel(sched, t, t_next, t_next);
  return resolvent(sched, t, t_next) / c;
}

double dsm_weight(const VolatilitySchedule& sched, double t, double t_next) {
  if (!(t < t_next)) throw DomainError("loss weight requires t < t_next");
  return cov_kernel(sched, t, t_next, t_next) / resolvent(sched, t, t_next);
}

State score_target(const VolatilitySchedule& sched, double t, double t_next, const State& x_t,
                   const State& x_next) {
  check_same_dim(x_t, x_next, "score_target");
  const double phi = resolvent(sched, t, t_next);
  const double prec = score_precision(sched, t, t_next);
  State out(x_t.size());
  for (std::size_t k = 0; k < x_t.size(); ++k) out[k] = prec * (x_next[k] - phi * x_t[k]);
  return out;
}

State bridge_pull(const VolatilitySchedule& sched, double t, double t_target, const State& x_t,
                  const State& x_target, double denom_eps) {
  check_same_dim(x_t, x_target, "bridge_pull");
  if (!(t <= t_target)) throw DomainError("bridge_pull requires t <= t_target");
  const double phi = resolvent(sched, t, t_target);
  const double c = cov_kernel(sched, t, t_target, t_target);
  const double prec = phi / (c + denom_eps);
  State out(x_t.size());
  for (std::size_t k = 0; k < x_t.size(); ++k) out[k] = prec * (x_target[k] - phi * x_t[k]);
  return out;
}

void GaussianMixtureNext::validate() const {
  if (weights.empty() || weights.size() != means.size()) {
    throw ConfigError("mixture needs matching, non-empty weights and means");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("mixture weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  if (!(var > 0.0)) throw ConfigError("mixture variance must be positive");
  for (const auto& m : means) {
    if (m.size() != means.front().size()) throw ShapeError("mixture means differ in dimension");
  }
}

State oracle_score(const VolatilitySchedule& sched, double t, double t_prev, double t_next,
                   const State& x_prev, const GaussianMixtureNext& mixture, const State& x_t) {
  mixture.validate();
  check_same_dim(x_prev, x_t, "oracle_score");
  check_same_dim(x_t, mixture.means.front(), "oracle_score");
  if (!(t >= t_prev && t < t_next)) throw DomainError("oracle_score requires t in [t_prev, t_next)");
  const std::size_t d = x_t.size();
  const std::size_t n_comp = mixture.weights.size();

  if (t == t_prev) {
    const double phi = resolvent(sched, t, t_next);
    const double prec = score_precision(sched, t, t_next);
    State out(d, 0.0);
    for (std::size_t j = 0; j < n_comp; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        out[k] += mixture.weights[j] * prec * (mixture.means[j][k] - phi * x_t[k]);
      }
    }
    return out;
  }

  const double phi_pt = resolvent(sched, t_prev, t);
  const double phi_pn = resolvent(sched, t_prev, t_next);
  const double c_nn = cov_kernel(sched, t_prev, t_next, t_next);
  const double c_tn = cov_kernel(sched, t_prev, t, t_next);
  const double c_tt = cov_kernel(sched, t_prev, t, t);
  const double beta = c_tn / c_nn;
  const double sigma_bridge = std::max(0.0, c_tt - c_tn * beta);

  // x_t | component j ~ N(offset + beta m_j, (sigma_bridge + beta^2 var) I).
  State offset(d);
  for (std::size_t k = 0; k < d; ++k) offset[k] = phi_pt * x_prev[k] - beta * phi_pn * x_prev[k];
  const double s = sigma_bridge + beta * beta * mixture.var;

  std::vector<double> log_w(n_comp);
  std::vector<State> resid(n_comp, State(d));
  double log_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n_comp; ++j) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      resid[j][k] = x_t[k] - offset[k] - beta * mixture.means[j][k];
      sq += resid[j][k] * resid[j][k];
    }
    log_w[j] = (mixture.weights[j] > 0.0 ? std::log(mixture.weights[j])
                                         : -std::numeric_limits<double>::infinity()) -
               0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * s) - 0.5 * sq / s;
    log_max = std::max(log_max, log_w[j]);
  }
  double z = 0.0;
  for (double lw : log_w) z += std::exp(lw - log_max);
  const double log_density = log_max + std::log(z);
  if (!(log_density > kLogDensityFloor)) {
    std::ostringstream msg;
    msg << "oracle_score: mixture density underflow at t = " << t << " (log density "
        << log_density << ", bridge var " << s << ")";
    throw NumericError(msg.str());
  }

  State out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = (x_t[k] - phi_pt * x_prev[k]) / c_tt;
  for (std::size_t j = 0; j < n_comp; ++j) {
    const double r = std::exp(log_w[j] - log_density);
    for (std::size_t k = 0; k < d; ++k) out[k] -= r * resid[j][k] / s;
  }
  return out;
}

GaussianMixtureNext data_conditional(const SyntheticProcess& proc,
                                     const std::vector<Waypoint>& history, double t_next) {
  if (history.empty() || history.front().time != 0.0) {
    throw ConfigError("data_conditional needs a history starting at t = 0");
  }
  const Waypoint& last = history.back();
  if (!(t_next > last.time)) throw DomainError("data_conditional requires t_next after the history");
  const std::size_t d = last.value.size();
  GaussianMixtureNext mix;

  switch (proc.kind) {
    case ProcessKind::GaussianAR: {
      const double dt = t_next - last.time;
      const double rho = std::exp(-proc.reversion * dt);
      mix.var = proc.reversion == 0.0
                    ? proc.noise * proc.noise * dt
                    : proc.noise * proc.noise * -std::expm1(-2.0 * proc.reversion * dt) /
                          (2.0 * proc.reversion);
      State m(d);
      for (std::size_t k = 0; k < d; ++k) m[k] = rho * last.value[k];
      mix.weights = {1.0};
      mix.means = {m};
      break;
    }
    case ProcessKind::MixtureNonMarkov: {
      const TimeGrid grid = *proc.native_grid();
      const auto j = grid.index_of(t_next, 1e-9);
      if (!j) throw DomainError("mixture process is only defined on its native grid");
      const double patterns[2][4] = {{0.0, 1.0, -1.0, -1.0}, {0.0, -1.0, 1.0, 1.0}};
      double loglik[2] = {0.0, 0.0};
      for (const auto& wp : history) {
        const auto i = grid.index_of(wp.time, 1e-9);
        if (!i) throw DomainError("mixture history is off the native grid");
        if (*i == 0) continue;
        for (int b = 0; b < 2; ++b) {
          for (std::size_t k = 0; k < d; ++k) {
            const double r = wp.value[k] - proc.amplitude * patterns[b][*i];
            loglik[b] -= 0.5 * r * r / (proc.jitter * proc.jitter);
          }
        }
      }
      const double mx = std::max(loglik[0], loglik[1]);
      const double w0 = std::exp(loglik[0] - mx), w1 = std::exp(loglik[1] - mx);
      mix.weights = {w0 / (w0 + w1), w1 / (w0 + w1)};
      mix.means = {State(d, proc.amplitude * patterns[0][*j]),
                   State(d, proc.amplitude * patterns[1][*j])};
      mix.var = proc.jitter * proc.jitter;
      break;
    }
    case ProcessKind::PinnedBrownian: {
      const double pins[2] = {0.8 * proc.horizon, proc.horizon};
      const double pin_t = t_next <= pins[0] + 1e-12 ? pins[0] : pins[1];
      const State pin_v(d, pin_t == pins[0] ? -proc.x0_mean : proc.x0_mean);
      if (std::abs(t_next - pin_t) <= 1e-12) {
        mix.weights = {1.0};
        mix.means = {pin_v};
        mix.var = 1e-12;
        break;
      }
      const double w = (t_next - last.time) / (pin_t - last.time);
      State m(d);
      for (std::size_t k = 0; k < d; ++k) m[k] = last.value[k] + w * (pin_v[k] - last.value[k]);
      mix.weights = {1.0};
      mix.means = {m};
      mix.var = proc.noise * proc.noise * (t_next - last.time) * (pin_t - t_next) /
                (pin_t - last.time);
      break;
    }
  }
  mix.validate();
  return mix;
}

}  // namespace abc

namespace abc {

namespace {

double rel_err(double value, double reference) {
  const double denom = std::max(std::abs(reference), 1e-300);
  return std::abs(value - reference) / denom;
}

}  // namespace

std::vector<KernelCheck> kernel_property_suite(const VolatilitySchedule& sched, int evaluations,
                                               std::uint64_t seed) {
  if (evaluations < 1) throw ConfigError("kernel suite needs at least one evaluation");
  constexpr double kRelTol = 1e-8;
  const double h = sched.horizon();
  std::vector<KernelCheck> out;
  RandomStream rng(seed, StreamTag::Validation, 0);
  for (int e = 0; e < evaluations; ++e) {
    const double anchor = rng.uniform(0.0, 0.9 * h);
    const double ta = rng.uniform(anchor, h);
    const double tb = rng.uniform(anchor, h);
    KernelCheck c{"cov", anchor, ta, tb};
    c.value = cov_kernel(sched, anchor, ta, tb);
    c.reference = cov_kernel_quadrature(sched, anchor, ta, tb);
    c.error = rel_err(c.value, c.reference);
    c.pass = c.error < kRelTol;
    out.push_back(c);

    KernelCheck r{"phi", anchor, ta, ta};
    r.value = resolvent(sched, anchor, ta);
    r.reference = resolvent_quadrature(sched, anchor, ta);
    r.error = rel_err(r.value, r.reference);
    r.pass = r.error < kRelTol;
    out.push_back(r);
  }

  // Bridge variance on random segments: exactly 0 at the ends, > 0 inside.
  const State zero{0.0};
  for (int e = 0; e < std::max(1, evaluations / 10); ++e) {
    const double t0 = rng.uniform(0.0, 0.8 * h);
    const double t1 = rng.uniform(t0 + 0.05 * h, h);
    double worst_end = 0.0;
    double min_inside = std::numeric_limits<double>::infinity();
    worst_end = std::max(worst_end, noising_kernel(sched, t0, t1, zero, zero, t0).var);
    worst_end = std::max(worst_end, noising_kernel(sched, t0, t1, zero, zero, t1).var);
    for (int i = 1; i <= 50; ++i) {
      const double t = t0 + (t1 - t0) * i / 51.0;
      min_inside = std::min(min_inside, noising_kernel(sched, t0, t1, zero, zero, t).var);
    }
    KernelCheck ends{"bridge_end_variance", t0, t0, t1, worst_end, 0.0, worst_end, worst_end == 0.0};
    KernelCheck inside{"bridge_interior_variance", t0, t0, t1, min_inside, 0.0, 0.0, min_inside > 0.0};
    out.push_back(ends);
    out.push_back(inside);
  }
  return out;
}

}  // namespace abc
