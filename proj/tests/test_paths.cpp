#include "doctest.h"

#include <cmath>
#include <sstream>

#include "abc/analysis.hpp"
#include "abc/errors.hpp"
#include "abc/paths.hpp"

using namespace abc;

TEST_CASE("grids") {
  const auto g = TimeGrid::uniform(4);
  CHECK(g.size() == 5);
  CHECK(g[2] == 0.5);
  CHECK(g.min_gap() == doctest::Approx(0.25));
  CHECK(g.index_of(0.75) == 3);
  CHECK_FALSE(g.index_of(0.7));
  CHECK_THROWS_AS(TimeGrid({0.0}), ConfigError);
  CHECK_THROWS_AS(TimeGrid({0.1, 1.0}), ConfigError);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5, 1.0}), ConfigError);
  CHECK_THROWS_AS(g.require_min_gap(0.2), ConfigError);
  CHECK_NOTHROW(g.require_min_gap(0.1));
}

TEST_CASE("locate_segment") {
  const auto g = TimeGrid::uniform(4);
  ConditioningSet c(g, {{0.0, {0.0}}, {1.0, {1.0}}});
  auto loc = locate_segment(g, c, 0.3);
  CHECK(loc.t_prev_observed == 0.0);
  CHECK(loc.t_next_grid == 0.5);
  CHECK(*loc.next_constraint == 1.0);

  ConditioningSet c2(g, {{0.0, {0.0}}, {0.5, {0.2}}, {1.0, {1.0}}});
  loc = locate_segment(g, c2, 0.6);
  CHECK(loc.t_prev_observed == 0.5);
  CHECK(loc.t_next_grid == 0.75);
  CHECK(*loc.next_constraint == 1.0);

  // an unobserved grid time is not an anchor
  loc = locate_segment(g, c, 0.25);
  CHECK(loc.t_prev_observed == 0.0);
  CHECK(loc.t_next_grid == 0.5);

  CHECK_THROWS_AS(locate_segment(g, c, 1.0), DomainError);
  ConditioningSet c3(g, {{0.0, {0.0}}});
  CHECK_FALSE(locate_segment(g, c3, 0.1).next_constraint);
}

TEST_CASE("locate_segment is piecewise constant with jumps at grid times") {
  const auto g = TimeGrid({0.0, 0.3, 0.45, 1.0});
  ConditioningSet c(g, {{0.0, {0.0}}, {0.45, {1.0}}});
  double last_next = -1.0;
  int jumps = 0;
  for (int i = 0; i < 1000; ++i) {
    const double t = i / 1000.0;
    const auto loc = locate_segment(g, c, t);
    CHECK(loc.t_next_grid > t);
    if (loc.t_next_grid != last_next) ++jumps;
    last_next = loc.t_next_grid;
  }
  CHECK(jumps == 3);
}

TEST_CASE("conditioning sets") {
  const auto g = TimeGrid::uniform(4);
  CHECK_THROWS_AS(ConditioningSet(g, {{0.5, {0.0}}}), ConfigError);
  CHECK_THROWS_AS(ConditioningSet(g, {{0.0, {0.0}}, {0.3, {0.0}}}), ConfigError);
  CHECK_THROWS_AS(ConditioningSet(g, {{0.0, {0.0}}, {0.5, {0.0, 1.0}}}), ShapeError);
  ConditioningSet c(g, {{0.0, {0.0}}, {1.0, {2.0}}});
  c.absorb({0.5, {1.0}});
  CHECK(c.size() == 3);
  CHECK(c.observed()[1].time == 0.5);
  CHECK(c.last_at_or_before(0.7).time == 0.5);
  CHECK(c.first_after(0.5)->time == 1.0);
  CHECK(c.first_after(1.0) == nullptr);
}

TEST_CASE("mixture process correlations") {
  const auto p = SyntheticProcess::mixture_non_markov(1);
  const auto g = *p.native_grid();
  const auto paths = sample_data_joint(p, g, 10000, 1);
  CHECK(waypoint_correlation(paths, 1, 2) == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(waypoint_correlation(paths, 2, 3) == doctest::Approx(1.0).epsilon(0.01));
  for (const auto& path : paths) {
    const double s = path.waypoint_values[1][0] > 0 ? 1.0 : -1.0;
    REQUIRE(std::abs(path.waypoint_values[1][0] - 0.5 * s) < 0.06);
    REQUIRE(std::abs(path.waypoint_values[2][0] + 0.5 * s) < 0.06);
    REQUIRE(std::abs(path.waypoint_values[3][0] + 0.5 * s) < 0.06);
  }
  CHECK_THROWS_AS(sample_data_joint(p, TimeGrid::uniform(4), 1, 0), ConfigError);
}

TEST_CASE("pinned Brownian waypoints are exact") {
  const auto p = SyntheticProcess::pinned_brownian(1, 1.0);
  const auto g = TimeGrid({0.0, 0.5, 0.8, 1.0});
  for (const auto& path : sample_data_joint(p, g, 100, 2)) {
    CHECK(path.waypoint_values[0][0] == 1.0);
    CHECK(path.waypoint_values[2][0] == -1.0);
    CHECK(path.waypoint_values[3][0] == 1.0);
  }
  CHECK_THROWS_AS(sample_data_joint(p, TimeGrid::uniform(2), 1, 0), ConfigError);
}

TEST_CASE("gaussian AR moments") {
  const auto still = SyntheticProcess::gaussian_ar(2, 0.3, 0.0, 0.0, 0.0);
  for (const auto& path : sample_data_joint(still, TimeGrid::uniform(3), 10, 0)) {
    for (const auto& v : path.waypoint_values) CHECK(v == State{0.3, 0.3});
  }
  const auto p = SyntheticProcess::gaussian_ar(1, 0.5, 0.2, 2.0, 0.5);
  const auto paths = sample_data_joint(p, TimeGrid::uniform(4), 20000, 3);
  for (const auto& m : waypoint_marginals(paths)) {
    const auto g = gaussian_ar_marginal(p, m.time);
    CHECK(std::abs(m.mean - g.mean) < 4 * m.mean_se());
    CHECK(std::abs(m.var - g.var) < 4 * m.var_se());
  }
}

TEST_CASE("joint sampling is reproducible") {
  const auto p = SyntheticProcess::gaussian_ar(1, 0.0, 1.0, 1.0, 1.0);
  const auto a = sample_data_joint(p, TimeGrid::uniform(4), 50, 9);
  const auto b = sample_data_joint(p, TimeGrid::uniform(4), 50, 9);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].waypoint_values == b[i].waypoint_values);
  CHECK(sample_data_path(p, TimeGrid::uniform(4), 9, 17).waypoint_values == a[17].waypoint_values);
}

TEST_CASE("path CSV round trip") {
  const auto p = SyntheticProcess::gaussian_ar(2, 0.1, 1.0, 0.5, 1.0);
  auto paths = sample_data_joint(p, TimeGrid({0.0, 0.3, 1.0}), 4, 5);
  paths[1].observed[1] = true;
  paths[0].trace = {{0.0, {1.0, 2.0}}, {0.5, {0.1, 0.2}}};
  std::stringstream ss;
  write_paths_csv(ss, paths, true);
  const std::string text = ss.str();
  CHECK(text.rfind("sample_id,time,dim_0,dim_1,is_waypoint,is_observed\n", 0) == 0);
  const auto back = read_paths_csv(ss);
  REQUIRE(back.size() == paths.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].grid.times() == paths[i].grid.times());
    CHECK(back[i].waypoint_values == paths[i].waypoint_values);
    CHECK(back[i].observed == paths[i].observed);
  }
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
