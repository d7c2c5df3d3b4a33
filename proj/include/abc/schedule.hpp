#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace abc {

enum class ScheduleKind { Constant, ExponentialDecay, Periodic, CosineDecay, Custom };

enum class KernelMethod { ClosedForm, Quadrature };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Tabulated (t, a(t), sigma(t)) samples, interpolated piecewise-linearly.
struct ScheduleTable {
  std::vector<double> t;
  std::vector<double> a;
  std::vector<double> sigma;
};

// Drift a(t) and volatility sigma(t) of the base process
//   dX = -a(t) X dt + sigma(t) dB
// on [0, horizon]. Construction enforces sigma >= 1e-6 on a 1024-point grid;
// the kernels below rely on it for non-degenerate conditioning.
class VolatilitySchedule {
 public:
  static VolatilitySchedule constant(double sigma, double horizon = 1.0);
  // a(t) = A, sigma(t) = K exp(-B t).
  static VolatilitySchedule exponential_decay(double A, double B, double K, double horizon = 1.0);
  // a(t) = 0, sigma(t) = alpha/2 (1 - cos(2 pi k t)) + eps.
  static VolatilitySchedule periodic(double alpha, double k, double eps, double horizon = 1.0);
  // The periodic form with k = 0.5, shifted so its trough sits at the horizon.
  static VolatilitySchedule cosine_decay(double alpha, double eps, double horizon = 1.0);
  static VolatilitySchedule custom(ScheduleTable table);
  // Reads a 3-column CSV with header `t,a,sigma`.
  static VolatilitySchedule from_csv(const std::filesystem::path& path);

  ScheduleKind kind() const { return kind_; }
  double horizon() const { return horizon_; }

  double drift(double t) const;
  double sigma(double t) const;

  // Same schedule with sigma multiplied by `factor` (C scales by factor^2).
  VolatilitySchedule with_sigma_scale(double factor) const;
  double sigma_scale() const { return sigma_scale_; }

  // Raw parameters, meaning depends on kind:
  //   Constant {sigma}; ExponentialDecay {A, B, K}; Periodic {alpha, k, eps};
  //   CosineDecay {alpha, eps}.
  const std::vector<double>& params() const { return params_; }
  const ScheduleTable& table() const { return table_; }

  // Checks t lies in [0, horizon] up to rounding slack.
  void check_time(double t, const char* what) const;

 private:
  VolatilitySchedule() = default;
  void validate() const;
  double sigma_unscaled(double t) const;

  ScheduleKind kind_ = ScheduleKind::Constant;
  double horizon_ = 1.0;
  double sigma_scale_ = 1.0;
  std::vector<double> params_;
  ScheduleTable table_;
};

struct KernelEval {
  double phi = 1.0;  // Phi(t_anchor, max(tau_a, tau_b))
  double cov = 0.0;  // C_{t_anchor}(tau_a, tau_b)
  KernelMethod method = KernelMethod::ClosedForm;
};

// Phi(s, t) = exp(-int_s^t a(u) du), closed form where the schedule has one.
double resolvent(const VolatilitySchedule& sched, double s, double t);

// C_{t_anchor}(tau_a, tau_b) = int_{t_anchor}^{min} Phi(s, tau_a) Phi(s, tau_b) sigma(s)^2 ds.
double cov_kernel(const VolatilitySchedule& sched, double t_anchor, double tau_a, double tau_b);
KernelEval cov_kernel_eval(const VolatilitySchedule& sched, double t_anchor, double tau_a,
                           double tau_b);

// Quadrature-only routes, independent of the closed forms. Used for Custom
// schedules and as the oracle the closed forms are checked against.
double resolvent_quadrature(const VolatilitySchedule& sched, double s, double t);
double cov_kernel_quadrature(const VolatilitySchedule& sched, double t_anchor, double tau_a,
                             double tau_b);

// sigma(t)^2, the density of the quadratic variation of the base process.
double quadratic_variation_rate(const VolatilitySchedule& sched, double t);

}  // namespace abc
