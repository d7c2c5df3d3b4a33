#include "abc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "abc/errors.hpp"
#include "abc/rng.hpp"
#include "abc/sample.hpp"

namespace abc {

QVEstimate quadratic_variation(const std::vector<PathSample>& paths, double t_a, double t_b) {
  if (paths.empty()) throw ConfigError("quadratic_variation needs at least one path");
  if (!(t_a < t_b)) throw DomainError("quadratic_variation requires t_a < t_b");
  QVEstimate q;
  q.t_a = t_a;
  q.t_b = t_b;
  q.n = paths.size();
  std::vector<double> per(paths.size(), 0.0);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& tr = paths[p].trace;
    if (tr.size() < 2 || tr.front().time > t_a || tr.back().time < t_b) {
      throw DomainError("trace does not cover [" + format_double(t_a) + ", " + format_double(t_b) + "]");
    }
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
      if (tr[i].time < t_a || tr[i].time >= t_b) continue;
      for (std::size_t k = 0; k < tr[i].value.size(); ++k) {
        const double dx = tr[i + 1].value[k] - tr[i].value[k];
        s += dx * dx;
      }
    }
    per[p] = s;
  }
  const double n = static_cast<double>(per.size());
  q.estimate = std::accumulate(per.begin(), per.end(), 0.0) / n;
  if (per.size() > 1) {
    double ss = 0.0;
    for (double v : per) ss += (v - q.estimate) * (v - q.estimate);
    q.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return q;
}

double MarginalStats::mean_se() const { return std::sqrt(var / static_cast<double>(n)); }

double MarginalStats::var_se() const {
  return var * std::sqrt(2.0 / (static_cast<double>(n) - 1.0));
}

namespace {

void check_common_grid(const std::vector<PathSample>& paths) {
  if (paths.empty()) throw ConfigError("need at least one path");
  for (const auto& p : paths) {
    if (p.grid.times() != paths.front().grid.times()) throw ShapeError("paths live on different grids");
    if (p.waypoint_values.size() != p.grid.size()) throw ShapeError("path is missing waypoint values");
  }
}

}  // namespace

std::vector<MarginalStats> waypoint_marginals(const std::vector<PathSample>& paths) {
  check_common_grid(paths);
  const TimeGrid& g = paths.front().grid;
  const std::size_t d = paths.front().waypoint_values.front().size();
  const double n = static_cast<double>(paths.size());
  std::vector<MarginalStats> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      MarginalStats m;
      m.time = g[i];
      m.dim = static_cast<int>(k);
      m.n = paths.size();
      for (const auto& p : paths) m.mean += p.waypoint_values[i][k];
      m.mean /= n;
      for (const auto& p : paths) {
        const double r = p.waypoint_values[i][k] - m.mean;
        m.var += r * r;
      }
      m.var = paths.size() > 1 ? m.var / (n - 1.0) : 0.0;
      out.push_back(m);
    }
  }
  return out;
}

double waypoint_correlation(const std::vector<PathSample>& paths, std::size_t i, std::size_t j,
                            int dim) {
  check_common_grid(paths);
  const auto k = static_cast<std::size_t>(dim);
  const double n = static_cast<double>(paths.size());
  double mi = 0.0, mj = 0.0;
  for (const auto& p : paths) {
    mi += p.waypoint_values.at(i).at(k);
    mj += p.waypoint_values.at(j).at(k);
  }
  mi /= n;
  mj /= n;
  double sij = 0.0, sii = 0.0, sjj = 0.0;
  for (const auto& p : paths) {
    const double a = p.waypoint_values[i][k] - mi;
    const double b = p.waypoint_values[j][k] - mj;
    sij += a * b;
    sii += a * a;
    sjj += b * b;
  }
  if (sii == 0.0 || sjj == 0.0) return 0.0;
  return sij / std::sqrt(sii * sjj);
}

SampleMatrix flatten_waypoints(const std::vector<PathSample>& paths) {
  SampleMatrix out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    std::vector<double> row;
    for (const auto& v : p.waypoint_values) row.insert(row.end(), v.begin(), v.end());
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

double row_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double r = a[k] - b[k];
    s += r * r;
  }
  return std::sqrt(s);
}

void distance_row(const SampleMatrix& pooled, std::size_t i, std::vector<double>& dist) {
  const std::size_t n = pooled.size();
  dist[i * n + i] = 0.0;
  for (std::size_t j = i + 1; j < n; ++j) {
    const double v = row_distance(pooled[i], pooled[j]);
    dist[i * n + j] = v;
    dist[j * n + i] = v;
  }
}

}  // namespace

std::vector<double> distance_matrix_serial(const SampleMatrix& pooled) {
  const std::size_t n = pooled.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) distance_row(pooled, i, dist);
  return dist;
}

std::vector<double> distance_matrix(const SampleMatrix& pooled, bool parallel) {
  if (!parallel) return distance_matrix_serial(pooled);
  const std::size_t n = pooled.size();
  std::vector<double> dist(n * n, 0.0);
  const auto n_i = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n_i; ++i) distance_row(pooled, static_cast<std::size_t>(i), dist);
  return dist;
}

double energy_distance_from_matrix(const std::vector<double>& dist, std::size_t n,
                                   std::size_t n_x, const std::vector<std::size_t>& order) {
  if (n_x == 0 || n_x >= n) throw ConfigError("energy distance needs two non-empty samples");
  const std::size_t n_y = n - n_x;
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double* row = dist.data() + order[a] * n;
    const bool ax = a < n_x;
    for (std::size_t b = a + 1; b < n; ++b) {
      const double v = row[order[b]];
      const bool bx = b < n_x;
      if (ax && bx) {
        xx += v;
      } else if (!ax && !bx) {
        yy += v;
      } else {
        xy += v;
      }
    }
  }
  const double nx = static_cast<double>(n_x), ny = static_cast<double>(n_y);
  // Off-diagonal pairs are counted once; the V-statistic sums both orders.
  return 2.0 * xy / (nx * ny) - 2.0 * xx / (nx * nx) - 2.0 * yy / (ny * ny);
}

namespace {

SampleMatrix pool(const SampleMatrix& x, const SampleMatrix& y) {
  if (x.empty() || y.empty()) throw ConfigError("energy distance needs two non-empty samples");
  SampleMatrix pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  for (const auto& r : pooled) {
    if (r.size() != pooled.front().size()) throw ShapeError("samples differ in dimension");
  }
  return pooled;
}

}  // namespace

double energy_distance(const SampleMatrix& x, const SampleMatrix& y) {
  const SampleMatrix pooled = pool(x, y);
  const auto dist = distance_matrix(pooled, true);
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  return energy_distance_from_matrix(dist, pooled.size(), x.size(), order);
}

PermutationTest energy_permutation_test(const SampleMatrix& x, const SampleMatrix& y,
                                        int permutations, std::uint64_t seed, bool parallel) {
  if (permutations < 1) throw ConfigError("permutation test needs at least one permutation");
  const SampleMatrix pooled = pool(x, y);
  const std::size_t n = pooled.size();
  const auto dist = distance_matrix(pooled, parallel);
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);

  PermutationTest res;
  res.permutations = permutations;
  res.statistic = energy_distance_from_matrix(dist, n, x.size(), identity);
  std::vector<int> exceed(static_cast<std::size_t>(permutations), 0);
  auto body = [&](int p) {
    RandomStream rng(seed, StreamTag::Permutation, static_cast<std::uint64_t>(p));
    std::vector<std::size_t> order = identity;
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
      std::swap(order[i], order[j]);
    }
    exceed[static_cast<std::size_t>(p)] =
        energy_distance_from_matrix(dist, n, x.size(), order) >= res.statistic ? 1 : 0;
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < permutations; ++p) body(p);
  } else {
    for (int p = 0; p < permutations; ++p) body(p);
  }
  const int count = std::accumulate(exceed.begin(), exceed.end(), 0);
  res.p_value = (1.0 + count) / (1.0 + permutations);
  return res;
}

TwoSampleReport joint_report(const std::vector<PathSample>& generated,
                             const std::vector<PathSample>& reference, int permutations,
                             std::uint64_t seed, bool parallel) {
  check_common_grid(generated);
  check_common_grid(reference);
  if (generated.front().grid.times() != reference.front().grid.times()) {
    throw ShapeError("generated and reference samples live on different grids");
  }
  if (generated.size() < 100 || reference.size() < 100) {
    throw ConfigError("joint_report needs at least 100 samples in each set");
  }
  TwoSampleReport rep;
  rep.generated = waypoint_marginals(generated);
  rep.reference = waypoint_marginals(reference);
  const std::size_t g = generated.front().grid.size();
  const std::size_t d = generated.front().waypoint_values.front().size();
  auto corr = [&](const std::vector<PathSample>& s) {
    std::vector<std::vector<std::vector<double>>> c(d, std::vector<std::vector<double>>(g, std::vector<double>(g, 1.0)));
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = i + 1; j < g; ++j) {
          c[k][i][j] = c[k][j][i] = waypoint_correlation(s, i, j, static_cast<int>(k));
        }
      }
    }
    return c;
  };
  rep.corr_generated = corr(generated);
  rep.corr_reference = corr(reference);
  rep.energy = energy_permutation_test(flatten_waypoints(generated), flatten_waypoints(reference),
                                       permutations, seed, parallel);
  return rep;
}

void write_joint_report_csv(std::ostream& out, const TwoSampleReport& rep, const TimeGrid& grid) {
  out << "kind,set,dim,time_i,time_j,value\n";
  auto moments = [&](const std::vector<MarginalStats>& ms, const char* set) {
    for (const auto& m : ms) {
      out << "mean," << set << ',' << m.dim << ',' << format_double(m.time) << ",," << format_double(m.mean) << '\n';
      out << "var," << set << ',' << m.dim << ',' << format_double(m.time) << ",," << format_double(m.var) << '\n';
    }
  };
  moments(rep.generated, "generated");
  moments(rep.reference, "reference");
  auto corrs = [&](const std::vector<std::vector<std::vector<double>>>& c, const char* set) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t j = i + 1; j < grid.size(); ++j) {
          out << "corr," << set << ',' << k << ',' << format_double(grid[i]) << ','
              << format_double(grid[j]) << ',' << format_double(c[k][i][j]) << '\n';
        }
      }
    }
  };
  corrs(rep.corr_generated, "generated");
  corrs(rep.corr_reference, "reference");
  out << "energy_distance,,,,," << format_double(rep.energy.statistic) << '\n';
  out << "energy_p_value,,,,," << format_double(rep.energy.p_value) << '\n';
  out << "permutations,,,,," << rep.energy.permutations << '\n';
}

const State& trace_value_near(const PathSample& path, double t) {
  if (path.trace.empty()) throw DomainError("path has no trace");
  const auto it = std::lower_bound(path.trace.begin(), path.trace.end(), t,
                                   [](const TracePoint& p, double v) { return p.time < v; });
  if (it == path.trace.begin()) return it->value;
  if (it == path.trace.end()) return path.trace.back().value;
  const auto prev = std::prev(it);
  return (t - prev->time) <= (it->time - t) ? prev->value : it->value;
}

ToyReport toy_experiment(const ToyConfig& cfg) {
  const double pin_t = 0.8;
  const TimeGrid grid({0.0, pin_t, 1.0});
  const ConditioningSet cond(grid, {{0.0, {cfg.x0}}, {pin_t, {-cfg.x0}}, {1.0, {cfg.x0}}});

  SampleConfig sc;
  sc.spec.base = VolatilitySchedule::constant(cfg.sigma);
  sc.steps = cfg.steps;
  sc.bb_drift = true;
  sc.score = ScoreSource::Zero;
  sc.trace = true;
  sc.parallel = cfg.parallel;

  ToyReport rep;
  sc.spec.method = Method::ABC;
  rep.x_paths = simulate_batch(sc, nullptr, grid, {cond}, cfg.trajectories, cfg.seed);
  sc.spec.method = Method::ChainedBridge;
  sc.spec.bridge_volatility = BridgeVolatility::Shared;
  rep.y_paths = simulate_batch(sc, nullptr, grid, {cond}, cfg.trajectories, cfg.seed);

  rep.qv_x_first = quadratic_variation(rep.x_paths, 0.0, pin_t);
  rep.qv_y_first = quadratic_variation(rep.y_paths, 0.0, pin_t);
  rep.qv_x_second = quadratic_variation(rep.x_paths, pin_t, 1.0);
  rep.qv_y_second = quadratic_variation(rep.y_paths, pin_t, 1.0);

  auto moments = [](const std::vector<PathSample>& ps, double t) {
    double m = 0.0, v = 0.0;
    for (const auto& p : ps) m += trace_value_near(p, t)[0];
    m /= static_cast<double>(ps.size());
    for (const auto& p : ps) {
      const double r = trace_value_near(p, t)[0] - m;
      v += r * r;
    }
    return std::pair{m, v / (static_cast<double>(ps.size()) - 1.0)};
  };
  for (double t : cfg.probe_times) {
    const auto [mx, vx] = moments(rep.x_paths, t);
    const auto [my, vy] = moments(rep.y_paths, t);
    rep.marginals.push_back({t, mx, vx, my, vy});
  }

  // Arrivals at the pins: the last step has length at most 1/N, so the
  // spread is of order sigma_eff sqrt(1/N) for each method and segment.
  const double h = 1.0 / cfg.steps;
  const double sig_x[2] = {cfg.sigma, cfg.sigma};
  const double sig_y[2] = {cfg.sigma / std::sqrt(pin_t), cfg.sigma / std::sqrt(1.0 - pin_t)};
  rep.pins_hit = true;
  for (int seg = 0; seg < 2; ++seg) {
    const std::size_t j = static_cast<std::size_t>(seg) + 1;
    const double pin = seg == 0 ? -cfg.x0 : cfg.x0;
    for (int which = 0; which < 2; ++which) {
      const auto& ps = which == 0 ? rep.x_paths : rep.y_paths;
      const double tol = 3.0 * (which == 0 ? sig_x[seg] : sig_y[seg]) * std::sqrt(h);
      double m = 0.0, v = 0.0;
      for (const auto& p : ps) m += p.arrival_values[j][0];
      m /= static_cast<double>(ps.size());
      for (const auto& p : ps) v += (p.arrival_values[j][0] - m) * (p.arrival_values[j][0] - m);
      const double sd = std::sqrt(v / (static_cast<double>(ps.size()) - 1.0));
      const double err = std::abs(m - pin);
      rep.max_pin_mean_err = std::max(rep.max_pin_mean_err, err / tol);
      rep.max_pin_sd = std::max(rep.max_pin_sd, sd / tol);
      if (!(err < tol && sd < tol)) rep.pins_hit = false;
      bool exact = true;
      for (const auto& p : ps) exact = exact && p.waypoint_values[j][0] == pin;
      if (!exact) rep.pins_hit = false;
    }
  }
  rep.pin_tol = 3.0 * std::sqrt(h);
  return rep;
}

namespace {

struct Panel {
  double x0, y0, w, h;
  double tmin, tmax, vmin, vmax;
  double px(double t) const { return x0 + (t - tmin) / (tmax - tmin) * w; }
  double py(double v) const { return y0 + h - (v - vmin) / (vmax - vmin) * h; }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

void axes(std::ostream& o, const Panel& p, const std::string& title, const std::string& xlabel) {
  o << "<rect x=\"" << fmt(p.x0) << "\" y=\"" << fmt(p.y0) << "\" width=\"" << fmt(p.w)
    << "\" height=\"" << fmt(p.h) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  o << "<text x=\"" << fmt(p.x0 + p.w / 2) << "\" y=\"" << fmt(p.y0 - 8)
    << "\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<text x=\"" << fmt(p.x0 + p.w / 2) << "\" y=\"" << fmt(p.y0 + p.h + 32)
    << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = p.tmin + (p.tmax - p.tmin) * i / 4.0;
    o << "<text x=\"" << fmt(p.px(t)) << "\" y=\"" << fmt(p.y0 + p.h + 16)
      << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(t) << "</text>\n";
    const double v = p.vmin + (p.vmax - p.vmin) * i / 4.0;
    o << "<text x=\"" << fmt(p.x0 - 6) << "\" y=\"" << fmt(p.py(v) + 3)
      << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(v) << "</text>\n";
  }
}

void polyline(std::ostream& o, const Panel& p, const PathSample& path, const char* color) {
  o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-opacity=\"0.35\" stroke-width=\"0.8\" points=\"";
  // Thin the trace to about 400 points per path.
  const std::size_t stride = std::max<std::size_t>(1, path.trace.size() / 400);
  for (std::size_t i = 0; i < path.trace.size(); i += stride) {
    o << fmt(p.px(path.trace[i].time)) << ',' << fmt(p.py(path.trace[i].value[0])) << ' ';
  }
  const auto& last = path.trace.back();
  o << fmt(p.px(last.time)) << ',' << fmt(p.py(last.value[0])) << "\"/>\n";
}

void histogram(std::ostream& o, const Panel& p, const std::vector<double>& vals, const char* color) {
  const int bins = 30;
  std::vector<int> counts(bins, 0);
  for (double v : vals) {
    int b = static_cast<int>((v - p.tmin) / (p.tmax - p.tmin) * bins);
    if (b >= 0 && b < bins) counts[static_cast<std::size_t>(b)]++;
  }
  const double bw = (p.tmax - p.tmin) / bins;
  for (int b = 0; b < bins; ++b) {
    const double dens = counts[static_cast<std::size_t>(b)] / (vals.size() * bw);
    const double left = p.tmin + b * bw;
    const double top = std::min(dens, p.vmax);
    o << "<rect x=\"" << fmt(p.px(left)) << "\" y=\"" << fmt(p.py(top)) << "\" width=\""
      << fmt(p.px(left + bw) - p.px(left)) << "\" height=\"" << fmt(p.py(0) - p.py(top))
      << "\" fill=\"" << color << "\" fill-opacity=\"0.4\" stroke=\"none\"/>\n";
  }
}

}  // namespace

void write_toy_report(const ToyReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "qv.csv", std::ios::binary);
    out << "process,t_a,t_b,estimate,std_error,n\n";
    auto row = [&](const char* name, const QVEstimate& q) {
      out << name << ',' << format_double(q.t_a) << ',' << format_double(q.t_b) << ','
          << format_double(q.estimate) << ',' << format_double(q.std_error) << ',' << q.n << '\n';
    };
    row("X", rep.qv_x_first);
    row("Y", rep.qv_y_first);
    row("X", rep.qv_x_second);
    row("Y", rep.qv_y_second);
  }
  {
    std::ofstream out(dir / "marginals.csv", std::ios::binary);
    out << "time,mean_x,var_x,mean_y,var_y\n";
    for (const auto& m : rep.marginals) {
      out << format_double(m.time) << ',' << format_double(m.mean_x) << ',' << format_double(m.var_x)
          << ',' << format_double(m.mean_y) << ',' << format_double(m.var_y) << '\n';
    }
  }
  std::ofstream o(dir / "toy_overlay.svg", std::ios::binary);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1100\" height=\"420\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"1100\" height=\"420\" fill=\"white\"/>\n";
  const Panel paths{60, 40, 460, 320, 0.0, 1.0, -3.0, 3.0};
  axes(o, paths, "Sample paths: X (conditioned, blue) vs Y (stitched, orange)", "t");
  const std::size_t show = std::min<std::size_t>(25, rep.x_paths.size());
  for (std::size_t i = 0; i < show; ++i) polyline(o, paths, rep.x_paths[i], "#1f77b4");
  for (std::size_t i = 0; i < std::min<std::size_t>(25, rep.y_paths.size()); ++i) {
    polyline(o, paths, rep.y_paths[i], "#ff7f0e");
  }
  double x_left = 590;
  for (double t : {0.5, 0.9}) {
    const Panel hist{x_left, 40, 220, 320, -3.0, 3.0, 0.0, 2.0};
    axes(o, hist, "Marginal at t = " + fmt(t), "x");
    std::vector<double> xs, ys;
    for (const auto& p : rep.x_paths) xs.push_back(trace_value_near(p, t)[0]);
    for (const auto& p : rep.y_paths) ys.push_back(trace_value_near(p, t)[0]);
    histogram(o, hist, xs, "#1f77b4");
    histogram(o, hist, ys, "#ff7f0e");
    x_left += 270;
  }
  o << "</svg>\n";
}

}  // namespace abc
