#include "abc/paths.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/rng.hpp"

namespace abc {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw ConfigError("time grid needs at least t_0 = 0 and t_L");
  if (times_.front() != 0.0) throw ConfigError("time grid must start at t_0 = 0");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i]) || !(times_[i] > times_[i - 1])) {
      throw ConfigError("time grid must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(int intervals, double horizon) {
  if (intervals < 1) throw ConfigError("uniform grid needs at least one interval");
  std::vector<double> t(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) t[i] = horizon * i / intervals;
  t.back() = horizon;
  return TimeGrid(std::move(t));
}

double TimeGrid::min_gap() const {
  double gap = horizon();
  for (std::size_t i = 1; i < times_.size(); ++i) gap = std::min(gap, times_[i] - times_[i - 1]);
  return gap;
}

std::optional<std::size_t> TimeGrid::index_of(double t, double tol) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
  if (it != times_.end() && std::abs(*it - t) <= tol) {
    return static_cast<std::size_t>(it - times_.begin());
  }
  return std::nullopt;
}

void TimeGrid::require_min_gap(double step) const {
  if (!(min_gap() > 2.0 * step)) {
    std::ostringstream msg;
    msg << "grid gap " << min_gap() << " must exceed twice the step size " << step;
    throw ConfigError(msg.str());
  }
}

ConditioningSet::ConditioningSet(const TimeGrid& grid, std::vector<Waypoint> observed)
    : observed_(std::move(observed)) {
  std::sort(observed_.begin(), observed_.end(),
            [](const Waypoint& a, const Waypoint& b) { return a.time < b.time; });
  for (std::size_t i = 0; i < observed_.size(); ++i) {
    if (!grid.index_of(observed_[i].time)) {
      throw ConfigError("conditioning waypoint at t = " + format_double(observed_[i].time) +
                        " is not on the grid");
    }
    if (i > 0 && observed_[i].time == observed_[i - 1].time) {
      throw ConfigError("conditioning waypoint times must be distinct");
    }
  }
  if (observed_.empty() || observed_.front().time != 0.0) {
    throw ConfigError("conditioning set must contain the initial waypoint (0, x_0)");
  }
  const std::size_t d = observed_.front().value.size();
  for (const auto& wp : observed_) {
    if (wp.value.size() != d) throw ShapeError("conditioning waypoints differ in dimension");
  }
}

bool ConditioningSet::contains(double time, double tol) const { return find(time, tol) != nullptr; }

const Waypoint* ConditioningSet::find(double time, double tol) const {
  for (const auto& wp : observed_) {
    if (std::abs(wp.time - time) <= tol) return &wp;
  }
  return nullptr;
}

void ConditioningSet::absorb(Waypoint wp) {
  if (contains(wp.time)) return;
  const auto pos = std::upper_bound(
      observed_.begin(), observed_.end(), wp.time,
      [](double t, const Waypoint& w) { return t < w.time; });
  observed_.insert(pos, std::move(wp));
}

const Waypoint& ConditioningSet::last_at_or_before(double t) const {
  const Waypoint* best = nullptr;
  for (const auto& wp : observed_) {
    if (wp.time <= t) best = &wp;
  }
  if (best == nullptr) throw DomainError("no observed waypoint at or before t");
  return *best;
}

const Waypoint* ConditioningSet::first_after(double t) const {
  for (const auto& wp : observed_) {
    if (wp.time > t) return &wp;
  }
  return nullptr;
}

SegmentLocation locate_segment(const TimeGrid& grid, const ConditioningSet& cond, double t) {
  if (!(t >= 0.0) || !(t < grid.horizon())) {
    throw DomainError("locate_segment requires t in [0, t_L)");
  }
  SegmentLocation loc;
  loc.t_prev_observed = cond.last_at_or_before(t).time;
  const auto& times = grid.times();
  loc.t_next_grid = *std::upper_bound(times.begin(), times.end(), t);
  if (const Waypoint* next = cond.first_after(t)) loc.next_constraint = next->time;
  return loc;
}

std::string to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::GaussianAR: return "gaussian_ar";
    case ProcessKind::MixtureNonMarkov: return "mixture_non_markov";
    case ProcessKind::PinnedBrownian: return "pinned_brownian";
  }
  return "unknown";
}

ProcessKind process_kind_from_string(const std::string& name) {
  if (name == "gaussian_ar") return ProcessKind::GaussianAR;
  if (name == "mixture_non_markov") return ProcessKind::MixtureNonMarkov;
  if (name == "pinned_brownian") return ProcessKind::PinnedBrownian;
  throw ConfigError("unknown process kind '" + name + "'");
}

SyntheticProcess SyntheticProcess::gaussian_ar(int dim, double x0_mean, double x0_std,
                                               double reversion, double noise) {
  SyntheticProcess p;
  p.kind = ProcessKind::GaussianAR;
  p.dim = dim;
  p.x0_mean = x0_mean;
  p.x0_std = x0_std;
  p.reversion = reversion;
  p.noise = noise;
  return p;
}

SyntheticProcess SyntheticProcess::mixture_non_markov(int dim, double jitter) {
  SyntheticProcess p;
  p.kind = ProcessKind::MixtureNonMarkov;
  p.dim = dim;
  p.x0_mean = 0.0;
  p.amplitude = 0.5;
  p.jitter = jitter;
  return p;
}

SyntheticProcess SyntheticProcess::pinned_brownian(int dim, double x0, double noise) {
  SyntheticProcess p;
  p.kind = ProcessKind::PinnedBrownian;
  p.dim = dim;
  p.x0_mean = x0;
  p.noise = noise;
  return p;
}

std::optional<TimeGrid> SyntheticProcess::native_grid() const {
  if (kind == ProcessKind::MixtureNonMarkov) {
    return TimeGrid({0.0, horizon / 3.0, 2.0 * horizon / 3.0, horizon});
  }
  return std::nullopt;
}

std::vector<double> SyntheticProcess::required_times() const {
  if (kind == ProcessKind::PinnedBrownian) return {0.0, 0.8 * horizon, horizon};
  if (auto g = native_grid()) return g->times();
  return {0.0, horizon};
}

void SyntheticProcess::check_grid(const TimeGrid& grid) const {
  if (dim < 1) throw ConfigError("process state dimension must be >= 1");
  if (std::abs(grid.horizon() - horizon) > 1e-12) {
    throw ConfigError("grid horizon does not match the process horizon");
  }
  if (auto native = native_grid()) {
    if (native->size() != grid.size()) {
      throw ConfigError(to_string(kind) + " is only defined on its native grid");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs((*native)[i] - grid[i]) > 1e-9) {
        throw ConfigError(to_string(kind) + " is only defined on its native grid");
      }
    }
  }
  for (double t : required_times()) {
    if (!grid.index_of(t, 1e-9)) {
      throw ConfigError(to_string(kind) + " requires t = " + format_double(t) + " on the grid");
    }
  }
}

namespace {

double ou_decay(double reversion, double dt) { return std::exp(-reversion * dt); }

double ou_variance(double reversion, double noise, double dt) {
  if (reversion == 0.0) return noise * noise * dt;
  return noise * noise * -std::expm1(-2.0 * reversion * dt) / (2.0 * reversion);
}

}  // namespace

PathSample sample_data_path(const SyntheticProcess& proc, const TimeGrid& grid,
                            std::uint64_t seed, std::uint64_t index) {
  RandomStream rng(seed, StreamTag::Data, index);
  PathSample path = sample_data_path(proc, grid, rng);
  path.seed = seed;
  path.index = index;
  return path;
}

PathSample sample_data_path(const SyntheticProcess& proc, const TimeGrid& grid, RandomStream& rng) {
  proc.check_grid(grid);
  const auto d = static_cast<std::size_t>(proc.dim);
  PathSample path;
  path.grid = grid;
  path.observed.assign(grid.size(), false);
  path.waypoint_values.assign(grid.size(), State(d, 0.0));

  switch (proc.kind) {
    case ProcessKind::GaussianAR: {
      State& x0 = path.waypoint_values[0];
      for (auto& v : x0) v = proc.x0_mean + proc.x0_std * rng.normal();
      for (std::size_t i = 1; i < grid.size(); ++i) {
        const double dt = grid[i] - grid[i - 1];
        const double rho = ou_decay(proc.reversion, dt);
        const double sd = std::sqrt(ou_variance(proc.reversion, proc.noise, dt));
        for (std::size_t k = 0; k < d; ++k) {
          path.waypoint_values[i][k] = rho * path.waypoint_values[i - 1][k] + sd * rng.normal();
        }
      }
      break;
    }
    case ProcessKind::MixtureNonMarkov: {
      const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
      const double pattern[4] = {0.0, sign, -sign, -sign};
      for (std::size_t k = 0; k < d; ++k) path.waypoint_values[0][k] = proc.x0_mean;
      for (std::size_t i = 1; i < 4; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          path.waypoint_values[i][k] = proc.amplitude * pattern[i] + proc.jitter * rng.normal();
        }
      }
      break;
    }
    case ProcessKind::PinnedBrownian: {
      const std::size_t pin_mid = *grid.index_of(0.8 * proc.horizon, 1e-9);
      const std::size_t pin_end = grid.size() - 1;
      for (std::size_t k = 0; k < d; ++k) {
        path.waypoint_values[0][k] = proc.x0_mean;
        path.waypoint_values[pin_mid][k] = -proc.x0_mean;
        path.waypoint_values[pin_end][k] = proc.x0_mean;
      }
      // Interior points: Brownian bridge from the previous value to the next pin.
      for (std::size_t i = 1; i < grid.size(); ++i) {
        if (i == pin_mid || i == pin_end) continue;
        const std::size_t pin = i < pin_mid ? pin_mid : pin_end;
        const double t0 = grid[i - 1], t = grid[i], t1 = grid[pin];
        const double w = (t - t0) / (t1 - t0);
        const double sd = proc.noise * std::sqrt((t - t0) * (t1 - t) / (t1 - t0));
        for (std::size_t k = 0; k < d; ++k) {
          const double x = path.waypoint_values[i - 1][k];
          path.waypoint_values[i][k] =
              x + w * (path.waypoint_values[pin][k] - x) + sd * rng.normal();
        }
      }
      break;
    }
  }
  return path;
}

std::vector<PathSample> sample_data_joint(const SyntheticProcess& proc, const TimeGrid& grid,
                                          std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_data_joint needs n >= 1");
  proc.check_grid(grid);
  std::vector<PathSample> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sample_data_path(proc, grid, seed, i);
  return out;
}

GaussianMoments gaussian_ar_marginal(const SyntheticProcess& proc, double t) {
  if (proc.kind != ProcessKind::GaussianAR) {
    throw ConfigError("analytic marginals are only available for gaussian_ar");
  }
  const double rho = ou_decay(proc.reversion, t);
  return {proc.x0_mean * rho,
          proc.x0_std * proc.x0_std * rho * rho + ou_variance(proc.reversion, proc.noise, t)};
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void write_row(std::ostream& out, std::size_t id, double t, const State& x, int is_wp,
               int is_obs) {
  out << id << ',' << format_double(t);
  for (double v : x) out << ',' << format_double(v);
  out << ',' << is_wp << ',' << is_obs << '\n';
}

}  // namespace

void write_paths_csv(std::ostream& out, const std::vector<PathSample>& samples, bool with_trace) {
  if (samples.empty()) return;
  const std::size_t d = samples.front().waypoint_values.front().size();
  out << "sample_id,time";
  for (std::size_t k = 0; k < d; ++k) out << ",dim_" << k;
  out << ",is_waypoint,is_observed\n";
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& p = samples[s];
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
      write_row(out, s, p.grid[i], p.waypoint_values[i], 1, p.observed[i] ? 1 : 0);
    }
  }
  if (!with_trace) return;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (const auto& tp : samples[s].trace) write_row(out, s, tp.time, tp.value, 0, 0);
  }
}

std::vector<PathSample> read_paths_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty path CSV");
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (columns < 5) throw ConfigError("path CSV header has too few columns");
  const std::size_t d = columns - 4;
  std::map<std::size_t, PathSample> by_id;
  std::map<std::size_t, std::vector<double>> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::size_t id;
    double t;
    State x(d);
    int is_wp, is_obs;
    row >> id >> t;
    for (auto& v : x) row >> v;
    row >> is_wp >> is_obs;
    if (!row) throw ConfigError("malformed path CSV row");
    if (!is_wp) continue;
    auto& p = by_id[id];
    p.index = id;
    p.waypoint_values.push_back(std::move(x));
    p.observed.push_back(is_obs != 0);
    times[id].push_back(t);
  }
  std::vector<PathSample> out;
  out.reserve(by_id.size());
  for (auto& [id, p] : by_id) {
    p.grid = TimeGrid(times[id]);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace abc
