#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "abc/errors.hpp"
#include "abc/kernels.hpp"
#include "abc/train.hpp"

using namespace abc;

namespace {

NetConfig small_net() {
  NetConfig c;
  c.trunk_widths = {16, 16};
  c.encoder_widths = {8};
  c.embed_dim = 8;
  c.time_frequencies = 4;
  return c;
}

TrainConfig base_config() {
  TrainConfig cfg;
  cfg.net = small_net();
  cfg.batch = 16;
  cfg.steps = 20;
  cfg.warmup = 5;
  cfg.seed = 3;
  return cfg;
}

const SyntheticProcess kAr = SyntheticProcess::gaussian_ar(1, 0.5, 0.2, 2.0, 0.5);

}  // namespace

TEST_CASE("learning rate warms up then decays to its floor") {
  TrainConfig cfg = base_config();
  cfg.steps = 100;
  cfg.warmup = 10;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-4));
  CHECK(learning_rate(cfg, 9) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 10) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 99) == doctest::Approx(1e-5));
  CHECK(learning_rate(cfg, 60) < learning_rate(cfg, 40));
}

TEST_CASE("config validation") {
  TrainConfig cfg = base_config();
  cfg.warmup = cfg.steps;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.ema_decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("random grids contain both ends and respect the minimum gap") {
  GridSampler gs;
  gs.min_interior = 2;
  gs.max_interior = 6;
  gs.min_gap = 0.05;
  RandomStream rng(1, StreamTag::Test, 0);
  for (int i = 0; i < 200; ++i) {
    const TimeGrid g = gs.draw(kAr, rng);
    CHECK(g[0] == 0.0);
    CHECK(g.horizon() == 1.0);
    CHECK(g.size() >= 4);
    CHECK(g.size() <= 8);
    CHECK(g.min_gap() > 0.05);
  }
  gs.min_interior = gs.max_interior = 30;
  CHECK_THROWS_AS(gs.draw(kAr, rng), ConfigError);
  CHECK(gs.draw(SyntheticProcess::mixture_non_markov(1), rng).size() == 4);
}

TEST_CASE("two-point tuples use the Brownian bridge target") {
  TrainConfig cfg = base_config();
  cfg.grid.min_interior = cfg.grid.max_interior = 0;
  for (int i = 0; i < 50; ++i) {
    RandomStream rng(2, StreamTag::Test, static_cast<std::uint64_t>(i));
    const auto tp = sample_training_tuple(cfg, kAr, rng);
    REQUIRE(tp.grid.size() == 2);
    CHECK(tp.t_prev == 0.0);
    CHECK(tp.t_next == 1.0);
    CHECK(std::abs(tp.t) > 1e-4);
    CHECK(std::abs(1.0 - tp.t) > 1e-4);
    CHECK(tp.target[0] == doctest::Approx((tp.data[1][0] - tp.x_t[0]) / (1.0 - tp.t)));
    CHECK(tp.weight == doctest::Approx(1.0 - tp.t));
    CHECK(tp.cond.size() == 1);
  }
}

TEST_CASE("causal tuples see only the past, full-future tuples see everything") {
  TrainConfig cfg = base_config();
  cfg.grid.min_interior = 3;
  for (int i = 0; i < 50; ++i) {
    RandomStream a(4, StreamTag::Test, static_cast<std::uint64_t>(i));
    const auto tp = sample_training_tuple(cfg, kAr, a);
    for (const auto& w : tp.cond) CHECK(w.time <= tp.t);
    CHECK(tp.cond.size() == tp.segment + 1);
  }
  cfg.future = FutureMode::All;
  for (int i = 0; i < 50; ++i) {
    RandomStream a(4, StreamTag::Test, static_cast<std::uint64_t>(i));
    const auto tp = sample_training_tuple(cfg, kAr, a);
    CHECK(tp.cond.size() == tp.grid.size());
  }
}

TEST_CASE("a perfect prediction has zero loss") {
  TrainConfig cfg = base_config();
  RandomStream rng(5, StreamTag::Test, 0);
  const auto tp = sample_training_tuple(cfg, kAr, rng);
  State h = tp.target;
  for (double& v : h) v /= tp.scale;
  CHECK(tuple_loss(tp, h).weighted == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("zero network loss matches its closed-form expectation") {
  // Brownian base, grid {0, 1}: w |target|^2 = (x1 - x_t)^2 / (1 - t), whose mean
  // over the bridge and t ~ U(0, 1) is E[(x1 - x0)^2] / 2 + 1 / 2.
  TrainConfig cfg = base_config();
  cfg.grid.min_interior = cfg.grid.max_interior = 0;
  const double rho = std::exp(-2.0), v = 0.25 * (1 - std::exp(-4.0)) / 4.0;
  const double e_sq = (rho - 1) * (rho - 1) * (0.25 + 0.04) + v;
  const double expect = 0.5 * e_sq + 0.5;
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    RandomStream rng(6, StreamTag::Test, static_cast<std::uint64_t>(i));
    const auto tp = sample_training_tuple(cfg, kAr, rng);
    const double l = tuple_loss(tp, State{0.0}).weighted;
    s += l;
    s2 += l * l;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - expect) < 3 * se);
}

TEST_CASE("noised state collapses onto the segment start") {
  const VolatilitySchedule base = VolatilitySchedule::constant(1.0);
  MethodSpec spec;
  RandomStream rng(7, StreamTag::Test, 0);
  const double t_prev = 0.25, t = t_prev + 1e-3;
  int far = 0;
  double sq = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto clk = segment_clock(spec, t_prev, 0.5, t);
    const auto nk = noising_kernel(clk.sched(), clk.s_begin, clk.s_end, {0.3}, {rng.normal()}, clk.s);
    const double x = nk.mean[0] + std::sqrt(nk.var) * rng.normal();
    sq += (x - 0.3) * (x - 0.3);
    if (std::abs(x - 0.3) > 0.15) ++far;
  }
  CHECK(sq / n < 2e-3);
  CHECK(far == 0);
}

TEST_CASE("chained bridge kernels only see the segment through tau") {
  MethodSpec spec;
  spec.method = Method::ChainedBridge;
  spec.base = VolatilitySchedule::exponential_decay(1.0, 0.5, 1.0);
  const auto a = segment_clock(spec, 0.0, 0.2, 0.1);
  const auto b = segment_clock(spec, 0.3, 0.8, 0.55);
  CHECK(a.s == doctest::Approx(0.5));
  CHECK(b.s == doctest::Approx(0.5));
  const auto ka = noising_kernel(a.sched(), a.s_begin, a.s_end, {0.0}, {1.0}, a.s);
  const auto kb = noising_kernel(b.sched(), b.s_begin, b.s_end, {0.0}, {1.0}, b.s);
  CHECK(ka.var == doctest::Approx(kb.var).epsilon(1e-14));
  CHECK(ka.mean[0] == doctest::Approx(kb.mean[0]).epsilon(1e-14));
  CHECK(output_scale(a) == doctest::Approx(output_scale(b)).epsilon(1e-14));

  spec.bridge_volatility = BridgeVolatility::GapScaled;
  const auto c = segment_clock(spec, 0.0, 0.2, 0.1);
  const auto d = segment_clock(spec, 0.3, 0.8, 0.55);
  const auto kc = noising_kernel(c.sched(), c.s_begin, c.s_end, {0.0}, {1.0}, c.s);
  const auto kd = noising_kernel(d.sched(), d.s_begin, d.s_end, {0.0}, {1.0}, d.s);
  CHECK(kc.var * 2.5 == doctest::Approx(kd.var));

  // ABC runs in physical time, so the two segments differ.
  spec.method = Method::ABC;
  const auto e = segment_clock(spec, 0.0, 0.2, 0.1);
  const auto f = segment_clock(spec, 0.3, 0.8, 0.55);
  CHECK(noising_kernel(e.sched(), e.s_begin, e.s_end, {0.0}, {1.0}, e.s).var !=
        doctest::Approx(noising_kernel(f.sched(), f.s_begin, f.s_end, {0.0}, {1.0}, f.s).var));
}

TEST_CASE("noise-to-data tuples start from noise and have unit weight") {
  TrainConfig cfg = base_config();
  cfg.spec.method = Method::NoiseToData;
  double s = 0, s2 = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    RandomStream rng(8, StreamTag::Test, static_cast<std::uint64_t>(i));
    const auto tp = sample_training_tuple(cfg, kAr, rng);
    CHECK(tp.weight == 1.0);
    CHECK(tp.s > 0.0);
    CHECK(tp.s < 1.0);
    s += tp.x_start[0];
    s2 += tp.x_start[0] * tp.x_start[0];
  }
  CHECK(std::abs(s / n) < 4 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("batch gradient does not depend on threading") {
  TrainConfig cfg = base_config();
  cfg.batch = 20;
  cfg.chunk = 3;
  ScoreNet net(cfg.net, 1);
  for (double& p : net.parameters()) p += 0.01;
  std::vector<double> g1, g2;
  cfg.parallel = true;
  const auto a = batch_gradient(cfg, kAr, net, 4, g1);
  cfg.parallel = false;
  const auto b = batch_gradient(cfg, kAr, net, 4, g2);
  CHECK(g1 == g2);
  CHECK(a.loss == b.loss);
}

TEST_CASE("training is reproducible bit-for-bit") {
  TrainConfig cfg = base_config();
  const auto a = train(cfg, kAr);
  const auto b = train(cfg, kAr);
  CHECK(a.state.net.parameters() == b.state.net.parameters());
  CHECK(a.state.ema == b.state.ema);
  REQUIRE(a.losses.size() == 20);
  for (const auto& r : a.losses) CHECK(std::isfinite(r.loss));
  cfg.parallel = false;
  const auto c = train(cfg, kAr);
  CHECK(c.state.net.parameters() == a.state.net.parameters());
}

TEST_CASE("training writes losses and checkpoints") {
  TrainConfig cfg = base_config();
  cfg.out_dir = std::filesystem::temp_directory_path() / "abc_test_train";
  std::filesystem::remove_all(cfg.out_dir);
  cfg.checkpoint_every = 10;
  const auto r = train(cfg, kAr);
  CHECK(std::filesystem::exists(cfg.out_dir / "losses.csv"));
  CHECK(std::filesystem::exists(cfg.out_dir / "checkpoint_step10.json"));
  const auto back = load_checkpoint(cfg.out_dir / "checkpoint_final.json");
  CHECK(back.net.parameters() == r.state.net.parameters());
  CHECK(back.step == 20);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("a non-finite loss aborts with the last good checkpoint") {
  TrainConfig cfg = base_config();
  cfg.out_dir = std::filesystem::temp_directory_path() / "abc_test_train_nan";
  std::filesystem::remove_all(cfg.out_dir);
  const auto huge = SyntheticProcess::gaussian_ar(1, 0.0, 0.0, 0.0, 1e200);
  CHECK_THROWS_AS(train(cfg, huge), NumericError);
  CHECK(std::filesystem::exists(cfg.out_dir / "checkpoint_last_good.json"));
  std::filesystem::remove_all(cfg.out_dir);
}
