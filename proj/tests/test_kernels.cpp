#include "doctest.h"

#include <cmath>
#include <numbers>

#include "abc/errors.hpp"
#include "abc/kernels.hpp"
#include "abc/rng.hpp"

using namespace abc;

namespace {

double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

struct IsEstimate {
  double mean;
  double se;
};

// E[score_target(x_t, X_next) | x_t] with X_next drawn from the mixture and
// weighted by the bridge density of x_t.
IsEstimate posterior_target(const VolatilitySchedule& s, double tp, double t, double tn, double xp,
                            const GaussianMixtureNext& mix, double xt, int draws,
                            std::uint64_t seed) {
  RandomStream rng(seed, StreamTag::Test, 0);
  std::vector<double> lw(draws), g(draws);
  double mx = -1e300;
  for (int i = 0; i < draws; ++i) {
    double u = rng.uniform(), acc = 0.0;
    std::size_t j = 0;
    for (; j + 1 < mix.weights.size(); ++j) {
      acc += mix.weights[j];
      if (u < acc) break;
    }
    const double xn = mix.means[j][0] + std::sqrt(mix.var) * rng.normal();
    const auto nk = noising_kernel(s, tp, tn, {xp}, {xn}, t);
    lw[i] = normal_logpdf(xt, nk.mean[0], nk.var);
    g[i] = score_target(s, t, tn, {xt}, {xn})[0];
    mx = std::max(mx, lw[i]);
  }
  double sw = 0, swg = 0;
  for (int i = 0; i < draws; ++i) {
    lw[i] = std::exp(lw[i] - mx);
    sw += lw[i];
    swg += lw[i] * g[i];
  }
  const double est = swg / sw;
  double v = 0;
  for (int i = 0; i < draws; ++i) v += lw[i] * lw[i] * (g[i] - est) * (g[i] - est);
  return {est, std::sqrt(v) / sw};
}

}  // namespace

TEST_CASE("noising kernel of Brownian motion is the Brownian bridge") {
  const auto s = VolatilitySchedule::constant(1.0);
  const double tp = 0.2, tn = 0.7, xp = 1.0, xn = -0.5;
  for (double t : {0.25, 0.4, 0.69}) {
    const auto nk = noising_kernel(s, tp, tn, {xp}, {xn}, t);
    const double w = (t - tp) / (tn - tp);
    CHECK(nk.mean[0] == doctest::Approx(xp + w * (xn - xp)).epsilon(1e-12));
    CHECK(nk.var == doctest::Approx((t - tp) * (tn - t) / (tn - tp)).epsilon(1e-12));
  }
  CHECK(score_target(s, 0.3, tn, {0.2}, {xn})[0] == doctest::Approx((xn - 0.2) / 0.4));
  CHECK(dsm_weight(s, 0.3, tn) == doctest::Approx(0.4));
  CHECK(score_precision(s, 0.3, tn) == doctest::Approx(2.5));
}

TEST_CASE("noising kernel endpoints are exact") {
  for (const auto& s : {VolatilitySchedule::exponential_decay(1.0, 0.5, 1.0),
                        VolatilitySchedule::periodic(1.0, 2.0, 0.05)}) {
    const State xp{0.3, -1.0}, xn{2.0, 0.5};
    const auto a = noising_kernel(s, 0.1, 0.6, xp, xn, 0.1);
    const auto b = noising_kernel(s, 0.1, 0.6, xp, xn, 0.6);
    CHECK(a.var == 0.0);
    CHECK(b.var == 0.0);
    CHECK(a.mean == xp);
    CHECK(b.mean == xn);
    CHECK(noising_kernel(s, 0.1, 0.6, xp, xn, 0.35).var > 0.0);
  }
}

TEST_CASE("noising kernel mean is affine in the endpoints") {
  const auto s = VolatilitySchedule::exponential_decay(0.7, 0.2, 1.2);
  const auto m = [&](double a, double b) { return noising_kernel(s, 0.0, 0.5, {a}, {b}, 0.3).mean[0]; };
  const double base = m(0, 0);
  CHECK(m(2, 3) - base == doctest::Approx(2 * (m(1, 0) - base) + 3 * (m(0, 1) - base)));
}

TEST_CASE("kernel domain and shape errors") {
  const auto s = VolatilitySchedule::constant(1.0);
  CHECK_THROWS_AS(noising_kernel(s, 0.2, 0.5, {0.0}, {0.0}, 0.6), DomainError);
  CHECK_THROWS_AS(noising_kernel(s, 0.2, 0.5, {0.0}, {0.0, 1.0}, 0.3), ShapeError);
  CHECK_THROWS_AS(score_target(s, 0.5, 0.5, {0.0}, {0.0}), DomainError);
  GaussianMixtureNext bad{{0.5, 0.6}, {{0.0}, {1.0}}, 1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("bridge pull with zero regularization is the score of the base transition") {
  const auto s = VolatilitySchedule::constant(2.0);
  CHECK(bridge_pull(s, 0.2, 0.8, {1.0}, {-1.0}, 0.0)[0] == doctest::Approx(-2.0 / (4 * 0.6)));
  CHECK(bridge_pull(s, 0.8, 0.8, {1.0}, {-1.0}, 1e-7)[0] == doctest::Approx(-2.0 / 1e-7));
}

TEST_CASE("oracle score equals the posterior mean of the score target") {
  const auto s = VolatilitySchedule::exponential_decay(1.0, 0.5, 1.0);
  GaussianMixtureNext mix{{0.3, 0.7}, {{-0.8}, {0.6}}, 0.05};
  const double tp = 0.1, t = 0.35, tn = 0.6, xp = 0.2;
  for (double xt : {-0.4, 0.1, 0.5}) {
    const auto est = posterior_target(s, tp, t, tn, xp, mix, xt, 200000, 3);
    const double o = oracle_score(s, t, tp, tn, {xp}, mix, {xt})[0];
    CHECK(std::abs(o - est.mean) < 4 * est.se);
  }
}

TEST_CASE("oracle score near the segment start tends to its limit") {
  const auto s = VolatilitySchedule::constant(1.0);
  GaussianMixtureNext mix{{0.5, 0.5}, {{-0.5}, {0.5}}, 1e-4};
  const double limit = oracle_score(s, 0.0, 0.0, 1.0 / 3, {0.0}, mix, {0.0})[0];
  const double near = oracle_score(s, 1e-9, 0.0, 1.0 / 3, {0.0}, mix, {0.0})[0];
  CHECK(near == doctest::Approx(limit).epsilon(1e-6));
}

TEST_CASE("data conditionals") {
  const auto ar = SyntheticProcess::gaussian_ar(1, 0.0, 1.0, 2.0, 0.5);
  const auto m = data_conditional(ar, {{0.0, {1.0}}, {0.25, {0.4}}}, 0.5);
  CHECK(m.means[0][0] == doctest::Approx(0.4 * std::exp(-0.5)));
  CHECK(m.var == doctest::Approx(0.25 * (1 - std::exp(-1.0)) / 4));

  const auto mx = SyntheticProcess::mixture_non_markov(1);
  const auto prior = data_conditional(mx, {{0.0, {0.0}}}, 1.0 / 3);
  CHECK(prior.weights[0] == doctest::Approx(0.5));
  const auto post = data_conditional(mx, {{0.0, {0.0}}, {1.0 / 3, {0.5}}}, 2.0 / 3);
  CHECK(post.weights[0] == doctest::Approx(1.0));
  CHECK(post.means[0][0] == doctest::Approx(-0.5));
  CHECK_THROWS_AS(data_conditional(mx, {{0.0, {0.0}}}, 0.5), DomainError);
}

TEST_CASE("kernel property suite passes on every built-in schedule") {
  for (const auto& s : {VolatilitySchedule::constant(1.0),
                        VolatilitySchedule::exponential_decay(1.0, 0.5, 1.0),
                        VolatilitySchedule::exponential_decay(0.5, 0.5, 1.0),
                        VolatilitySchedule::periodic(1.0, 2.0, 0.05),
                        VolatilitySchedule::cosine_decay(1.0, 0.01)}) {
    const auto checks = kernel_property_suite(s, 40, 1);
    CHECK(!checks.empty());
    for (const auto& c : checks) {
      INFO(c.check << " at " << c.t_anchor << "," << c.tau_a << "," << c.tau_b);
      CHECK(c.pass);
    }
  }
}
