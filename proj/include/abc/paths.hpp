#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace abc {

class RandomStream;

using State = std::vector<double>;

// Waypoint times t_0 = 0 < t_1 < ... < t_L.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times);
  static TimeGrid uniform(int intervals, double horizon = 1.0);

  const std::vector<double>& times() const { return times_; }
  std::size_t size() const { return times_.size(); }
  double operator[](std::size_t i) const { return times_[i]; }
  double horizon() const { return times_.back(); }
  double min_gap() const;

  // Index of `t` if it is a grid time (within `tol`).
  std::optional<std::size_t> index_of(double t, double tol = 1e-12) const;
  // Throws ConfigError unless every gap exceeds twice the step size.
  void require_min_gap(double step) const;

 private:
  std::vector<double> times_;
};

struct Waypoint {
  double time = 0.0;
  State value;
};

// The observed subset O of grid waypoints, kept sorted by time. The initial
// waypoint (0, x_0) is always present. During sampling, generated waypoints
// are appended with `absorb`.
class ConditioningSet {
 public:
  ConditioningSet() = default;
  ConditioningSet(const TimeGrid& grid, std::vector<Waypoint> observed);

  const std::vector<Waypoint>& observed() const { return observed_; }
  std::size_t size() const { return observed_.size(); }
  bool contains(double time, double tol = 1e-12) const;
  const Waypoint* find(double time, double tol = 1e-12) const;
  void absorb(Waypoint wp);

  // Latest observed waypoint with time <= t.
  const Waypoint& last_at_or_before(double t) const;
  // Earliest observed waypoint with time > t, if any.
  const Waypoint* first_after(double t) const;

 private:
  std::vector<Waypoint> observed_;
};

struct SegmentLocation {
  double t_prev_observed = 0.0;
  double t_next_grid = 0.0;
  std::optional<double> next_constraint;
};

// t_prev_observed = max{observed tau <= t}; t_next_grid = min{grid tau > t};
// next_constraint = min{observed tau > t}. Requires t in [0, t_L).
SegmentLocation locate_segment(const TimeGrid& grid, const ConditioningSet& cond, double t);

struct TracePoint {
  double time = 0.0;
  State value;
};

// One realized trajectory. `waypoint_values` is aligned with `grid`; observed
// entries hold the conditioned value exactly. `arrival_values` keeps the raw
// simulated state at each waypoint crossing before teacher forcing.
struct PathSample {
  TimeGrid grid;
  std::vector<State> waypoint_values;
  std::vector<bool> observed;
  std::vector<State> arrival_values;
  std::vector<TracePoint> trace;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

enum class ProcessKind { GaussianAR, MixtureNonMarkov, PinnedBrownian };

std::string to_string(ProcessKind kind);
ProcessKind process_kind_from_string(const std::string& name);

// Data-generating processes with exact joint sampling on a grid.
//
//   GaussianAR:        x_0 ~ N(x0_mean, x0_std^2); between grid times the state
//                      follows the exact OU transition with reversion `reversion`
//                      and volatility `noise` (reversion = noise = 0 keeps the
//                      state at x_0).
//   MixtureNonMarkov:  native grid {0, 1, 2, 3} scaled to the horizon; x_0 = x0_mean,
//                      branch red gives (+amp, -amp, -amp), blue (-amp, +amp, +amp),
//                      plus isotropic jitter of std `jitter`.
//   PinnedBrownian:    Brownian motion with volatility `noise` from x_0 = x0_mean,
//                      pinned to X(4/5) = -x_0 and X(1) = +x_0.
struct SyntheticProcess {
  ProcessKind kind = ProcessKind::GaussianAR;
  int dim = 1;
  double x0_mean = 0.0;
  double x0_std = 0.0;
  double reversion = 0.0;
  double noise = 1.0;
  double amplitude = 0.5;
  double jitter = 0.01;
  double horizon = 1.0;

  static SyntheticProcess gaussian_ar(int dim, double x0_mean, double x0_std, double reversion,
                                      double noise);
  static SyntheticProcess mixture_non_markov(int dim, double jitter = 0.01);
  static SyntheticProcess pinned_brownian(int dim, double x0 = 1.0, double noise = 1.0);

  // Grid the process is defined on, if it only lives on fixed times.
  std::optional<TimeGrid> native_grid() const;
  // Times that must be part of any sampling grid.
  std::vector<double> required_times() const;
  void check_grid(const TimeGrid& grid) const;
};

// Exact joint draws of the waypoint values; trajectory i uses the stream
// (seed, Data, i) so results do not depend on execution order.
std::vector<PathSample> sample_data_joint(const SyntheticProcess& proc, const TimeGrid& grid,
                                          std::size_t n, std::uint64_t seed);
PathSample sample_data_path(const SyntheticProcess& proc, const TimeGrid& grid,
                            std::uint64_t seed, std::uint64_t index);
PathSample sample_data_path(const SyntheticProcess& proc, const TimeGrid& grid, RandomStream& rng);

// Per-time mean and variance of a GaussianAR process (per coordinate).
struct GaussianMoments {
  double mean = 0.0;
  double var = 0.0;
};
GaussianMoments gaussian_ar_marginal(const SyntheticProcess& proc, double t);

// PathSample CSV: `sample_id,time,dim_0..dim_{d-1},is_waypoint,is_observed`.
// Waypoint rows are written first for every sample; trace rows (is_waypoint = 0)
// follow when `with_trace` is set.
void write_paths_csv(std::ostream& out, const std::vector<PathSample>& samples,
                     bool with_trace = false);
// Reads waypoint rows back; trace rows are skipped.
std::vector<PathSample> read_paths_csv(std::istream& in);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace abc
