#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "abc/paths.hpp"

namespace abc {

struct QVEstimate {
  double t_a = 0.0;
  double t_b = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

// Mean over trajectories of the sum of squared trace increments (all
// coordinates) whose start time lies in [t_a, t_b).
QVEstimate quadratic_variation(const std::vector<PathSample>& paths, double t_a, double t_b);

struct MarginalStats {
  double time = 0.0;
  int dim = 0;
  double mean = 0.0;
  double var = 0.0;  // unbiased
  std::size_t n = 0;

  double mean_se() const;
  // Normal-theory standard error of the sample variance.
  double var_se() const;
};

// Per-waypoint, per-coordinate moments.
std::vector<MarginalStats> waypoint_marginals(const std::vector<PathSample>& paths);

// Pearson correlation of coordinate `dim` between waypoints i and j.
double waypoint_correlation(const std::vector<PathSample>& paths, std::size_t i, std::size_t j,
                            int dim = 0);

// Rows are samples, flattened waypoint vectors.
using SampleMatrix = std::vector<std::vector<double>>;
SampleMatrix flatten_waypoints(const std::vector<PathSample>& paths);

// Pairwise Euclidean distances of the pooled rows [x; y].
std::vector<double> distance_matrix(const SampleMatrix& pooled, bool parallel = true);
std::vector<double> distance_matrix_serial(const SampleMatrix& pooled);

// V-statistic energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| where the first
// `n_x` rows of the pooled matrix belong to X.
double energy_distance_from_matrix(const std::vector<double>& dist, std::size_t n_pooled,
                                   std::size_t n_x, const std::vector<std::size_t>& order);
double energy_distance(const SampleMatrix& x, const SampleMatrix& y);

struct PermutationTest {
  double statistic = 0.0;
  double p_value = 1.0;  // (1 + #{perm >= observed}) / (1 + permutations)
  int permutations = 0;
};

// Label-permutation test; permutation p draws from (seed, Permutation, p).
PermutationTest energy_permutation_test(const SampleMatrix& x, const SampleMatrix& y,
                                        int permutations, std::uint64_t seed,
                                        bool parallel = true);

struct TwoSampleReport {
  std::vector<MarginalStats> generated;
  std::vector<MarginalStats> reference;
  // corr[k][i][j] for coordinate k.
  std::vector<std::vector<std::vector<double>>> corr_generated;
  std::vector<std::vector<std::vector<double>>> corr_reference;
  PermutationTest energy;
};

// Both sets must share the grid and hold at least 100 samples each.
TwoSampleReport joint_report(const std::vector<PathSample>& generated,
                             const std::vector<PathSample>& reference, int permutations = 200,
                             std::uint64_t seed = 0, bool parallel = true);

void write_joint_report_csv(std::ostream& out, const TwoSampleReport& rep, const TimeGrid& grid);

// The pinned-Brownian comparison: X simulated by ABC with the bridge drift,
// Y by chained unit-time bridges, both pinned at (0, x0), (4/5, -x0), (1, x0).
struct ToyConfig {
  std::size_t trajectories = 1000;
  int steps = 4000;
  double x0 = 1.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  bool parallel = true;
  std::vector<double> probe_times = {0.5, 0.8, 0.9, 1.0};
};

struct ToyMarginal {
  double time = 0.0;
  double mean_x = 0.0;
  double var_x = 0.0;
  double mean_y = 0.0;
  double var_y = 0.0;
};

struct ToyReport {
  QVEstimate qv_x_first;   // [0, 4/5)
  QVEstimate qv_y_first;
  QVEstimate qv_x_second;  // [4/5, 1)
  QVEstimate qv_y_second;
  std::vector<ToyMarginal> marginals;
  // Pin check on the pre-teacher-forcing arrival values; errors are in units of pin_tol.
  double pin_tol = 0.0;
  double max_pin_mean_err = 0.0;
  double max_pin_sd = 0.0;
  bool pins_hit = false;
  std::vector<PathSample> x_paths;
  std::vector<PathSample> y_paths;
};

ToyReport toy_experiment(const ToyConfig& cfg);

// Writes qv.csv, marginals.csv and toy_overlay.svg.
void write_toy_report(const ToyReport& rep, const std::filesystem::path& dir);

// Value of the trace at the recorded time closest to t.
const State& trace_value_near(const PathSample& path, double t);

}  // namespace abc
