#include "abc/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/quadrature.hpp"

namespace abc {

namespace {

constexpr double kSigmaMin = 1e-6;
constexpr int kValidationPoints = 1024;
constexpr double kSigmaMax = 1e6;
constexpr double kTimeSlack = 1e-9;

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

// sin(x) - sin(y) without cancellation for nearby arguments.
double sin_diff(double x, double y) { return 2.0 * std::cos(0.5 * (x + y)) * std::sin(0.5 * (x - y)); }

// int_lo^hi (alpha/2 (1 - cos(2 pi k s)) + eps)^2 ds, from the antiderivative
//   (3a^2/8 + a e + e^2) s - a(a + 2e)/(4 pi k) sin(2 pi k s) + a^2/(32 pi k) sin(4 pi k s).
double periodic_sq_integral(double alpha, double k, double eps, double lo, double hi) {
  const double w = 2.0 * std::numbers::pi * k;
  const double linear = 3.0 * alpha * alpha / 8.0 + alpha * eps + eps * eps;
  return linear * (hi - lo) -
         alpha * (alpha + 2.0 * eps) / (2.0 * w) * sin_diff(w * hi, w * lo) +
         alpha * alpha / (16.0 * w) * sin_diff(2.0 * w * hi, 2.0 * w * lo);
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::ExponentialDecay: return "exponential";
    case ScheduleKind::Periodic: return "periodic";
    case ScheduleKind::CosineDecay: return "cosine_decay";
    case ScheduleKind::Custom: return "custom";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") return ScheduleKind::Constant;
  if (name == "exponential" || name == "exponential_decay") return ScheduleKind::ExponentialDecay;
  if (name == "periodic") return ScheduleKind::Periodic;
  if (name == "cosine_decay") return ScheduleKind::CosineDecay;
  if (name == "custom") return ScheduleKind::Custom;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

VolatilitySchedule VolatilitySchedule::constant(double sigma, double horizon) {
  if (!(sigma > 0.0)) throw ConfigError("constant schedule requires sigma > 0");
  VolatilitySchedule s;
  s.kind_ = ScheduleKind::Constant;
  s.horizon_ = horizon;
  s.params_ = {sigma};
  s.validate();
  return s;
}

VolatilitySchedule VolatilitySchedule::exponential_decay(double A, double B, double K,
                                                         double horizon) {
  if (!(A >= 0.0) || !(B >= 0.0) || !(K > 0.0)) {
    throw ConfigError("exponential schedule requires A >= 0, B >= 0, K > 0");
  }
  VolatilitySchedule s;
  s.kind_ = ScheduleKind::ExponentialDecay;
  s.horizon_ = horizon;
  s.params_ = {A, B, K};
  s.validate();
  return s;
}

VolatilitySchedule VolatilitySchedule::periodic(double alpha, double k, double eps,
                                                double horizon) {
  if (!(alpha >= 0.0) || !(k > 0.0) || !(eps > 0.0)) {
    throw ConfigError("periodic schedule requires alpha >= 0, k > 0, eps > 0");
  }
  VolatilitySchedule s;
  s.kind_ = ScheduleKind::Periodic;
  s.horizon_ = horizon;
  s.params_ = {alpha, k, eps};
  s.validate();
  return s;
}

VolatilitySchedule VolatilitySchedule::cosine_decay(double alpha, double eps, double horizon) {
  if (!(alpha >= 0.0) || !(eps > 0.0)) {
    throw ConfigError("cosine_decay schedule requires alpha >= 0, eps > 0");
  }
  VolatilitySchedule s;
  s.kind_ = ScheduleKind::CosineDecay;
  s.horizon_ = horizon;
  s.params_ = {alpha, eps};
  s.validate();
  return s;
}

VolatilitySchedule VolatilitySchedule::custom(ScheduleTable table) {
  const std::size_t n = table.t.size();
  if (n < 2 || table.a.size() != n || table.sigma.size() != n) {
    throw ConfigError("custom schedule needs >= 2 rows of (t, a, sigma)");
  }
  if (table.t.front() != 0.0) throw ConfigError("custom schedule must start at t = 0");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(table.t[i]) || !std::isfinite(table.a[i]) ||
        !std::isfinite(table.sigma[i])) {
      throw ConfigError("custom schedule has non-finite entries");
    }
    if (std::abs(table.a[i]) > kSigmaMax || table.sigma[i] > kSigmaMax) {
      throw ConfigError("custom schedule is unbounded");
    }
    if (i > 0 && !(table.t[i] > table.t[i - 1])) {
      throw ConfigError("custom schedule times must be strictly increasing");
    }
  }
  VolatilitySchedule s;
  s.kind_ = ScheduleKind::Custom;
  s.horizon_ = table.t.back();
  s.table_ = std::move(table);
  s.validate();
  return s;
}

VolatilitySchedule VolatilitySchedule::from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schedule table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty schedule table " + path.string());
  line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
  if (line != "t,a,sigma") throw ConfigError("schedule table header must be 't,a,sigma'");
  ScheduleTable table;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double t, a, sig;
    if (!(row >> t >> a >> sig)) throw ConfigError("malformed schedule row: " + line);
    table.t.push_back(t);
    table.a.push_back(a);
    table.sigma.push_back(sig);
  }
  return custom(std::move(table));
}

void VolatilitySchedule::validate() const {
  if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
    throw ConfigError("schedule horizon must be positive and finite");
  }
  for (int i = 0; i < kValidationPoints; ++i) {
    const double t = horizon_ * static_cast<double>(i) / (kValidationPoints - 1);
    const double sig = sigma(t);
    const double a = drift(t);
    if (!std::isfinite(sig) || !std::isfinite(a) || std::abs(a) > kSigmaMax || sig > kSigmaMax) {
      throw ConfigError("schedule is not bounded on [0, horizon]");
    }
    if (sig < kSigmaMin) {
      std::ostringstream msg;
      msg << to_string(kind_) << " schedule violates sigma >= " << kSigmaMin << " at t = " << t
          << " (sigma = " << sig << ")";
      throw ConfigError(msg.str());
    }
  }
}

void VolatilitySchedule::check_time(double t, const char* what) const {
  if (!(t >= -kTimeSlack && t <= horizon_ + kTimeSlack)) {
    std::ostringstream msg;
    msg << what << ": time " << t << " outside [0, " << horizon_ << "]";
    throw DomainError(msg.str());
  }
}

double VolatilitySchedule::drift(double t) const {
  switch (kind_) {
    case ScheduleKind::ExponentialDecay: return params_[0];
    case ScheduleKind::Custom: return interpolate(table_.t, table_.a, t);
    default: return 0.0;
  }
}

double VolatilitySchedule::sigma_unscaled(double t) const {
  switch (kind_) {
    case ScheduleKind::Constant: return params_[0];
    case ScheduleKind::ExponentialDecay: return params_[2] * std::exp(-params_[1] * t);
    case ScheduleKind::Periodic: {
      const double alpha = params_[0], k = params_[1], eps = params_[2];
      return 0.5 * alpha * (1.0 - std::cos(2.0 * std::numbers::pi * k * t)) + eps;
    }
    case ScheduleKind::CosineDecay: {
      const double alpha = params_[0], eps = params_[1];
      return 0.5 * alpha * (1.0 - std::cos(std::numbers::pi * (t - horizon_))) + eps;
    }
    case ScheduleKind::Custom: return interpolate(table_.t, table_.sigma, t);
  }
  return 0.0;
}

double VolatilitySchedule::sigma(double t) const { return sigma_scale_ * sigma_unscaled(t); }

VolatilitySchedule VolatilitySchedule::with_sigma_scale(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ConfigError("sigma scale factor must be positive");
  }
  VolatilitySchedule s = *this;
  s.sigma_scale_ *= factor;
  s.validate();
  return s;
}

double resolvent(const VolatilitySchedule& sched, double s, double t) {
  sched.check_time(s, "resolvent");
  sched.check_time(t, "resolvent");
  if (s > t) throw DomainError("resolvent requires s <= t");
  switch (sched.kind()) {
    case ScheduleKind::ExponentialDecay: return std::exp(-sched.params()[0] * (t - s));
    case ScheduleKind::Custom: return resolvent_quadrature(sched, s, t);
    default: return 1.0;
  }
}

double resolvent_quadrature(const VolatilitySchedule& sched, double s, double t) {
  if (s > t) throw DomainError("resolvent requires s <= t");
  const double integral = adaptive_simpson([&](double u) { return sched.drift(u); }, s, t);
  return std::exp(-integral);
}

namespace {

void check_cov_args(const VolatilitySchedule& sched, double t_anchor, double tau_a, double tau_b) {
  sched.check_time(t_anchor, "cov_kernel");
  sched.check_time(tau_a, "cov_kernel");
  sched.check_time(tau_b, "cov_kernel");
  if (t_anchor > std::min(tau_a, tau_b)) {
    throw DomainError("cov_kernel requires t_anchor <= min(tau_a, tau_b)");
  }
}

}  // namespace

double cov_kernel(const VolatilitySchedule& sched, double t_anchor, double tau_a, double tau_b) {
  check_cov_args(sched, t_anchor, tau_a, tau_b);
  const double m = std::min(tau_a, tau_b);
  const double scale2 = sched.sigma_scale() * sched.sigma_scale();
  const auto& p = sched.params();
  switch (sched.kind()) {
    case ScheduleKind::Constant: return scale2 * p[0] * p[0] * (m - t_anchor);
    case ScheduleKind::ExponentialDecay: {
      const double A = p[0], B = p[1], K = p[2];
      const double c = 2.0 * (A - B);
      const double base = scale2 * K * K * std::exp(-A * (tau_a + tau_b) + c * t_anchor);
      // c == 0 is the removable singularity A == B.
      if (c == 0.0) return base * (m - t_anchor);
      return base * std::expm1(c * (m - t_anchor)) / c;
    }
    case ScheduleKind::Periodic:
      return scale2 * periodic_sq_integral(p[0], p[1], p[2], t_anchor, m);
    case ScheduleKind::CosineDecay: {
      const double h = sched.horizon();
      return scale2 * periodic_sq_integral(p[0], 0.5, p[1], t_anchor - h, m - h);
    }
    case ScheduleKind::Custom: return cov_kernel_quadrature(sched, t_anchor, tau_a, tau_b);
  }
  return 0.0;
}

KernelEval cov_kernel_eval(const VolatilitySchedule& sched, double t_anchor, double tau_a,
                           double tau_b) {
  KernelEval out;
  out.cov = cov_kernel(sched, t_anchor, tau_a, tau_b);
  out.phi = resolvent(sched, t_anchor, std::max(tau_a, tau_b));
  out.method =
      sched.kind() == ScheduleKind::Custom ? KernelMethod::Quadrature : KernelMethod::ClosedForm;
  return out;
}

double cov_kernel_quadrature(const VolatilitySchedule& sched, double t_anchor, double tau_a,
                             double tau_b) {
  check_cov_args(sched, t_anchor, tau_a, tau_b);
  const double m = std::min(tau_a, tau_b);
  auto integrand = [&](double s) {
    const double sig = sched.sigma(s);
    return resolvent_quadrature(sched, s, tau_a) * resolvent_quadrature(sched, s, tau_b) * sig *
           sig;
  };
  return adaptive_simpson(integrand, t_anchor, m);
}

double quadratic_variation_rate(const VolatilitySchedule& sched, double t) {
  sched.check_time(t, "quadratic_variation_rate");
  const double sig = sched.sigma(t);
  return sig * sig;
}

}  // namespace abc
