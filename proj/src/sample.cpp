#include "abc/sample.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include "abc/errors.hpp"
#include "abc/kernels.hpp"
#include "abc/rng.hpp"

namespace abc {

namespace {

constexpr double kArrivalSlack = 1e-12;

}  // namespace

std::string to_string(ScoreSource s) {
  switch (s) {
    case ScoreSource::Network: return "network";
    case ScoreSource::Oracle: return "oracle";
    case ScoreSource::Zero: return "zero";
  }
  return "?";
}

ScoreSource score_source_from_string(const std::string& name) {
  if (name == "network") return ScoreSource::Network;
  if (name == "oracle") return ScoreSource::Oracle;
  if (name == "zero") return ScoreSource::Zero;
  throw ConfigError("unknown score source '" + name + "' (network, oracle, zero)");
}

void SampleConfig::validate(const TimeGrid& grid) const {
  if (grid.size() < 2) throw ConfigError("sampling grid needs at least two waypoints");
  if (steps < 2 * static_cast<int>(grid.size())) {
    throw ConfigError("sample.steps must be at least 2 (L + 1) = " +
                      std::to_string(2 * grid.size()));
  }
  grid.require_min_gap(grid.horizon() / steps);
  if (!(eps_t > 0.0 && eps_t < grid.min_gap())) {
    throw ConfigError("sample.eps_t must be positive and below the smallest grid gap");
  }
  if (!(bb_eps >= 0.0)) throw ConfigError("sample.bb_eps must be >= 0");
  if (score == ScoreSource::Oracle) {
    if (!process) throw ConfigError("oracle score requires a synthetic process");
    if (spec.method != Method::ABC) throw ConfigError("oracle score is only defined for method abc");
  }
}

StepSize step_size(double t, int steps, double t_next, double leftover, double eps_t,
                   double horizon) {
  const double h = horizon / steps;
  StepSize out;
  if (t + h > t_next + eps_t) {
    out.dt = t_next - t + eps_t;
    out.leftover = h - out.dt;
    out.clipped = true;
  } else {
    out.dt = h + leftover;
    out.leftover = 0.0;
  }
  return out;
}

DriftTerms drift(const SampleConfig& cfg, const ScoreNet* net, const TimeGrid& grid,
                 const ConditioningSet& cond, double t, const State& x) {
  const SegmentLocation loc = locate_segment(grid, cond, t);
  const SegmentClock clk = segment_clock(cfg.spec, loc.t_prev_observed, loc.t_next_grid, t);
  const std::size_t d = x.size();

  State f(d, 0.0);
  switch (cfg.score) {
    case ScoreSource::Zero: break;
    case ScoreSource::Network: {
      if (!net) throw ConfigError("network score requested without a network");
      const NetInput in = make_net_input(t, clk.s, loc.t_next_grid, clk.s_end - clk.s,
                                         clk.s - clk.s_begin, x,
                                         visible_history(cond.observed(), t, cfg.history));
      const State h = net->forward(in);
      const double scale = output_scale(clk);
      for (std::size_t k = 0; k < d; ++k) f[k] = scale * h[k];
      break;
    }
    case ScoreSource::Oracle: {
      std::vector<Waypoint> past;
      for (const auto& wp : visible_history(cond.observed(), t, cfg.history)) {
        if (wp.time <= t) past.push_back(wp);
      }
      const Waypoint& anchor = past.back();
      const auto mix = data_conditional(*cfg.process, past, loc.t_next_grid);
      f = oracle_score(cfg.spec.base, t, anchor.time, loc.t_next_grid, anchor.value, mix, x);
      break;
    }
  }

  if (cfg.bb_drift && loc.next_constraint) {
    const Waypoint* target = cond.find(*loc.next_constraint);
    if (cfg.spec.method == Method::ABC) {
      const State pull = bridge_pull(cfg.spec.base, t, target->time, x, target->value, cfg.bb_eps);
      for (std::size_t k = 0; k < d; ++k) f[k] += pull[k];
    } else if (std::abs(*loc.next_constraint - loc.t_next_grid) <= 1e-12) {
      const State pull = bridge_pull(clk.sched(), clk.s, clk.s_end, x, target->value, cfg.bb_eps);
      for (std::size_t k = 0; k < d; ++k) f[k] += pull[k];
    }
  }

  const double a = clk.sched().drift(clk.s);
  const double sig = clk.sched().sigma(clk.s);
  DriftTerms out;
  out.drift.resize(d);
  for (std::size_t k = 0; k < d; ++k) out.drift[k] = clk.rate * (-a * x[k] + sig * sig * f[k]);
  out.diffusion = sig * std::sqrt(clk.rate);
  return out;
}

PathSample simulate(const SampleConfig& cfg, const ScoreNet* net, const TimeGrid& grid,
                    const ConditioningSet& cond_in, std::uint64_t seed, std::uint64_t index,
                    SimStats* stats) {
  cfg.validate(grid);
  ConditioningSet cond = cond_in;
  const Waypoint* start = cond.find(0.0);
  if (!start) throw ConfigError("conditioning set must contain the initial waypoint");
  const std::size_t d = start->value.size();
  if (net && cfg.score == ScoreSource::Network &&
      static_cast<std::size_t>(net->config().state_dim) != d) {
    throw ShapeError("network state dimension does not match the conditioning set");
  }

  RandomStream rng(seed, StreamTag::Sampling, index);
  PathSample path;
  path.grid = grid;
  path.seed = seed;
  path.index = index;
  path.waypoint_values.assign(grid.size(), State(d, 0.0));
  path.arrival_values.assign(grid.size(), State(d, 0.0));
  path.observed.assign(grid.size(), false);
  for (std::size_t j = 0; j < grid.size(); ++j) path.observed[j] = cond.contains(grid[j]);
  path.waypoint_values[0] = start->value;
  path.arrival_values[0] = start->value;

  const bool reset = cfg.spec.method == Method::NoiseToData;
  State x = start->value;
  if (reset) {
    for (double& v : x) v = rng.normal();
  }
  if (cfg.trace) path.trace.push_back({0.0, x});

  SimStats st;
  double t = 0.0;
  double leftover = 0.0;
  std::size_t next = 1;
  const double t_l = grid.horizon();
  while (t < t_l) {
    const SegmentLocation loc = locate_segment(grid, cond, t);
    const StepSize ss = step_size(t, cfg.steps, loc.t_next_grid, leftover, cfg.eps_t, t_l);
    leftover = ss.leftover;
    const DriftTerms terms = drift(cfg, net, grid, cond, t, x);
    const double sq = std::sqrt(ss.dt);
    for (std::size_t k = 0; k < d; ++k) {
      x[k] += terms.drift[k] * ss.dt + terms.diffusion * sq * rng.normal();
    }
    t += ss.dt;
    st.sum_dt += ss.dt;
    // Repeated addition of h can land a rounding error short of a grid time
    // that exact arithmetic would hit; treat that as arrival.
    if (next < grid.size() && t < grid[next] && grid[next] - t <= kArrivalSlack) t = grid[next];
    st.steps += 1;
    for (double v : x) {
      if (!std::isfinite(v)) {
        throw NumericError("simulation diverged at t = " + format_double(t) + " (trajectory " +
                           std::to_string(index) + ")");
      }
    }

    while (next < grid.size() && grid[next] <= t) {
      st.crossings += 1;
      path.arrival_values[next] = x;
      if (const Waypoint* obs = cond.find(grid[next])) {
        x = obs->value;
      } else {
        cond.absorb({grid[next], x});
      }
      path.waypoint_values[next] = x;
      if (cfg.trace) path.trace.push_back({t, x});
      if (reset && next + 1 < grid.size()) {
        for (double& v : x) v = rng.normal();
        if (cfg.trace) path.trace.push_back({t, x});
      }
      ++next;
    }
    if (cfg.trace && (path.trace.empty() || path.trace.back().time != t)) {
      path.trace.push_back({t, x});
    }
  }
  st.final_time = t;
  st.final_leftover = leftover;
  if (stats) *stats = st;
  return path;
}

std::vector<PathSample> simulate_batch(const SampleConfig& cfg, const ScoreNet* net,
                                       const TimeGrid& grid,
                                       const std::vector<ConditioningSet>& conds, std::size_t n,
                                       std::uint64_t seed, std::vector<SimStats>* stats) {
  if (conds.empty()) throw ConfigError("simulate_batch needs at least one conditioning set");
  if (conds.size() != 1 && conds.size() != n) {
    throw ConfigError("simulate_batch needs one conditioning set or one per trajectory");
  }
  cfg.validate(grid);
  std::vector<PathSample> out(n);
  std::vector<SimStats> st(n);
  std::vector<std::exception_ptr> errors(n);
  const auto n_i = static_cast<std::int64_t>(n);
  auto body = [&](std::int64_t i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      out[u] = simulate(cfg, net, grid, conds.size() == 1 ? conds[0] : conds[u], seed, u, &st[u]);
    } catch (...) {
      errors[u] = std::current_exception();
    }
  };
  if (cfg.parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n_i; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < n_i; ++i) body(i);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (stats) *stats = std::move(st);
  return out;
}

}  // namespace abc
