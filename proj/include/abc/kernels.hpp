#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abc/paths.hpp"
#include "abc/schedule.hpp"

namespace abc {

// p_base(x_t | x_prev, x_next) = N(mean, var I).
struct NoisingKernelParams {
  State mean;
  double var = 0.0;
};

// Gaussian bridge of the base process between (t_prev, x_prev) and (t_next, x_next),
// evaluated at t in [t_prev, t_next]. All covariances are anchored at t_prev:
//   mean = Phi(t_prev,t) x_prev + C(t,t_next)/C(t_next,t_next) (x_next - Phi(t_prev,t_next) x_prev)
//   var  = C(t,t) - C(t,t_next)^2 / C(t_next,t_next)
// The endpoints return x_prev / x_next with var = 0 exactly.
NoisingKernelParams noising_kernel(const VolatilitySchedule& sched, double t_prev, double t_next,
                                   const State& x_prev, const State& x_next, double t);

// grad_{x_t} log p_base(x_next | x_t) = Phi(t,t_next)/C_t(t_next,t_next) (x_next - Phi(t,t_next) x_t).
State score_target(const VolatilitySchedule& sched, double t, double t_next, const State& x_t,
                   const State& x_next);

// Phi(t,t_next) / C_t(t_next,t_next): the linear coefficient of the score target.
double score_precision(const VolatilitySchedule& sched, double t, double t_next);

// DSM loss weight w = C_t(t_next,t_next) / Phi(t,t_next).
double dsm_weight(const VolatilitySchedule& sched, double t, double t_next);

// grad_{x_t} log p_base(x_target | x_t) with `denom_eps` added to the variance.
// This is the Brownian-bridge pull toward a known future constraint.
State bridge_pull(const VolatilitySchedule& sched, double t, double t_target, const State& x_t,
                  const State& x_target, double denom_eps);

// A Gaussian-mixture model of p_data(x_next | history) with shared isotropic variance.
struct GaussianMixtureNext {
  std::vector<double> weights;
  std::vector<State> means;
  double var = 1.0;

  void validate() const;
};

// Closed-form path-dependent score for mixture next-state data:
//   -grad log p_base(x_t | x_prev) + grad log int p_data(x_next | .) p_base(x_t | x_prev, x_next) dx_next.
// The integral is again a Gaussian mixture in x_t; everything is evaluated in
// log space. At t == t_prev the t -> t_prev+ limit is returned. Test-only: the
// learned model never sees this.
State oracle_score(const VolatilitySchedule& sched, double t, double t_prev, double t_next,
                   const State& x_prev, const GaussianMixtureNext& mixture, const State& x_t);

// p_data(x_next | history) for the synthetic processes, as a mixture. `history`
// holds the waypoints observed so far (sorted, starting at t = 0).
GaussianMixtureNext data_conditional(const SyntheticProcess& proc,
                                     const std::vector<Waypoint>& history, double t_next);

}  // namespace abc

namespace abc {

struct KernelCheck {
  std::string check;
  double t_anchor = 0.0;
  double tau_a = 0.0;
  double tau_b = 0.0;
  double value = 0.0;
  double reference = 0.0;
  double error = 0.0;
  bool pass = false;
};

// Closed forms against quadrature (C and Phi, relative error < 1e-8) and the
// noising-kernel bridge properties (zero variance at both ends, positive
// strictly inside) on `evaluations` random arguments.
std::vector<KernelCheck> kernel_property_suite(const VolatilitySchedule& sched, int evaluations,
                                               std::uint64_t seed);

}  // namespace abc
