#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "abc/method.hpp"
#include "abc/paths.hpp"
#include "abc/scorenet.hpp"

namespace abc {

// Source of the score f in the drift.
//   Network  trained score net (raw output times the output scale)
//   Oracle   closed-form score of a synthetic process (ABC only)
//   Zero     f = 0, leaving only the base drift and the optional bridge pull
enum class ScoreSource { Network, Oracle, Zero };

std::string to_string(ScoreSource s);
ScoreSource score_source_from_string(const std::string& name);

struct SampleConfig {
  MethodSpec spec;
  int steps = 1000;
  double eps_t = 1e-6;
  bool bb_drift = false;
  double bb_eps = 1e-7;
  ScoreSource score = ScoreSource::Network;
  HistoryMode history = HistoryMode::Full;
  bool trace = false;
  std::optional<SyntheticProcess> process;  // required by ScoreSource::Oracle
  bool parallel = true;

  // N >= 2 (L + 1), every gap > 2 t_L / N, eps_t below the smallest gap.
  void validate(const TimeGrid& grid) const;
};

struct StepSize {
  double dt = 0.0;
  double leftover = 0.0;
  bool clipped = false;  // the step was shortened to land just past t_next
};

// One step of the waypoint-adaptive schedule with uniform step h = horizon / N:
// if t + h > t_next + eps_t the step lands at t_next + eps_t and the rest of h
// is banked, otherwise the step is h plus whatever was banked.
StepSize step_size(double t, int steps, double t_next, double leftover, double eps_t,
                   double horizon = 1.0);

// Drift and (scalar) diffusion in physical time at (t, x).
struct DriftTerms {
  State drift;
  double diffusion = 0.0;
};

DriftTerms drift(const SampleConfig& cfg, const ScoreNet* net, const TimeGrid& grid,
                 const ConditioningSet& cond, double t, const State& x);

struct SimStats {
  int steps = 0;
  int crossings = 0;
  double final_time = 0.0;
  double final_leftover = 0.0;
  double sum_dt = 0.0;
};

// Euler-Maruyama simulation over the grid. Observed waypoints are
// teacher-forced; the others are absorbed into the conditioning set as they
// are crossed. Trajectory `index` draws from the stream (seed, Sampling, index).
PathSample simulate(const SampleConfig& cfg, const ScoreNet* net, const TimeGrid& grid,
                    const ConditioningSet& cond, std::uint64_t seed, std::uint64_t index,
                    SimStats* stats = nullptr);

// Trajectory i uses conds[i] (or conds[0] when a single set is given) and
// stream index i; results match calling simulate() one by one.
std::vector<PathSample> simulate_batch(const SampleConfig& cfg, const ScoreNet* net,
                                       const TimeGrid& grid,
                                       const std::vector<ConditioningSet>& conds, std::size_t n,
                                       std::uint64_t seed, std::vector<SimStats>* stats = nullptr);

}  // namespace abc
