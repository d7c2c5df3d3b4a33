// Serial vs OpenMP timings for the three parallel kernels. Each pair is also
// checked for identical results.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include <omp.h>

#include "abc/analysis.hpp"
#include "abc/sample.hpp"
#include "abc/train.hpp"

using namespace abc;

namespace {

double seconds(const std::function<void()>& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-18s serial %9.4f s  omp %9.4f s  speedup %5.2fx  %s\n", name, serial, parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d, repetitions: %d\n", omp_get_max_threads(), reps);
  bool all_same = true;

  const auto proc = SyntheticProcess::gaussian_ar(1, 0.5, 0.2, 2.0, 0.5);
  const TimeGrid grid = TimeGrid::uniform(4);
  {
    SampleConfig c;
    c.score = ScoreSource::Oracle;
    c.process = proc;
    c.steps = 500;
    const std::vector<ConditioningSet> conds = {ConditioningSet(grid, {{0.0, {0.5}}})};
    std::vector<PathSample> a, b;
    c.parallel = false;
    const double s = seconds([&] { a = simulate_batch(c, nullptr, grid, conds, 2000, 1); }, reps);
    c.parallel = true;
    const double p = seconds([&] { b = simulate_batch(c, nullptr, grid, conds, 2000, 1); }, reps);
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].waypoint_values == b[i].waypoint_values;
    report("simulate_batch", s, p, same);
    all_same = all_same && same;
  }
  {
    TrainConfig cfg;
    cfg.batch = 64;
    const ScoreNet net(cfg.net, 2);
    std::vector<double> ga, gb;
    cfg.parallel = false;
    const double s = seconds([&] { batch_gradient(cfg, proc, net, 0, ga); }, reps);
    cfg.parallel = true;
    const double p = seconds([&] { batch_gradient(cfg, proc, net, 0, gb); }, reps);
    report("batch_gradient", s, p, ga == gb);
    all_same = all_same && ga == gb;
  }
  {
    const auto pooled = flatten_waypoints(sample_data_joint(proc, grid, 2000, 3));
    std::vector<double> a, b;
    const double s = seconds([&] { a = distance_matrix_serial(pooled); }, reps);
    const double p = seconds([&] { b = distance_matrix(pooled, true); }, reps);
    report("distance_matrix", s, p, a == b);
    all_same = all_same && a == b;
  }
  return all_same ? 0 : 1;
}
