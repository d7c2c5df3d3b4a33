#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "abc/errors.hpp"
#include "abc/rng.hpp"
#include "abc/scorenet.hpp"

using namespace abc;

namespace {

NetConfig tiny(int d = 2) {
  NetConfig c;
  c.state_dim = d;
  c.trunk_widths = {8, 8};
  c.encoder_widths = {6};
  c.embed_dim = 5;
  c.time_frequencies = 3;
  return c;
}

NetInput sample_input(int d, double t = 0.37) {
  State x(d), a(d), b(d), c(d);
  for (int k = 0; k < d; ++k) {
    x[k] = 0.3 - 0.2 * k;
    a[k] = 0.1 * (k + 1);
    b[k] = -0.4 + k;
    c[k] = 0.9;
  }
  return make_net_input(t, t, 0.5, 0.5 - t, t - 0.25, x, {{0.0, a}, {0.25, b}, {0.75, c}});
}

void randomize(ScoreNet& net, std::uint64_t seed, double scale = 0.5) {
  RandomStream rng(seed, StreamTag::Test, 0);
  for (double& p : net.parameters()) p = scale * rng.normal();
}

}  // namespace

TEST_CASE("fresh network outputs zero") {
  const ScoreNet net(NetConfig{}, 3);
  CHECK(net.forward(sample_input(1)) == State{0.0});
  const ScoreNet net2(tiny(2), 3);
  CHECK(net2.forward(sample_input(2, 0.1)) == State{0.0, 0.0});
}

TEST_CASE("inputs are sorted and the anchor is the latest past waypoint") {
  const auto in = make_net_input(0.5, 0.5, 0.75, 0.25, 0.25, {0.0},
                                 {{0.75, {3.0}}, {0.0, {1.0}}, {0.25, {2.0}}});
  REQUIRE(in.cond.size() == 3);
  CHECK(in.cond[0].time == 0.0);
  CHECK(in.cond[2].future);
  CHECK_FALSE(in.cond[1].future);
  CHECK(in.anchor == State{2.0});
  CHECK(in.cond[2].rel_time == doctest::Approx(0.25));
  CHECK_THROWS_AS(make_net_input(0.5, 0.5, 0.75, 0.25, 0.25, {0.0}, {{0.0, {1.0, 2.0}}}), ShapeError);
}

TEST_CASE("output is invariant to the order of the conditioning set") {
  ScoreNet net(tiny(2), 1);
  randomize(net, 4);
  NetInput in = sample_input(2);
  const State a = net.forward(in);
  std::reverse(in.cond.begin(), in.cond.end());
  const State b = net.forward(in);
  for (int k = 0; k < 2; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-13));
}

TEST_CASE("duplicating a waypoint reweights the mean pool") {
  ScoreNet net(tiny(1), 1);
  randomize(net, 5);
  NetInput in = sample_input(1);
  const State a = net.forward(in);
  in.cond.push_back(in.cond.front());
  const State b = net.forward(in);
  CHECK(a != b);
}

TEST_CASE("dimension mismatches are rejected") {
  const ScoreNet net(tiny(2), 1);
  NetInput in = sample_input(2);
  in.x = {0.0};
  CHECK_THROWS_AS(net.forward(in), ShapeError);
  ForwardCache empty;
  std::vector<double> g(net.parameter_count());
  CHECK_THROWS_AS(net.backward(empty, State{1.0, 1.0}, g), ConfigError);
}

TEST_CASE("backprop matches central differences") {
  ScoreNet net(tiny(2), 2);
  randomize(net, 6);
  const NetInput in = sample_input(2);
  const State c{0.7, -1.3};
  auto objective = [&](const std::vector<double>& p) {
    const State y = net.forward_with(p, in);
    return c[0] * y[0] + c[1] * y[1];
  };
  ForwardCache cache;
  net.forward(in, &cache);
  std::vector<double> grad(net.parameter_count(), 0.0);
  const double norm = net.backward(cache, c, grad);
  CHECK(norm == doctest::Approx(global_norm(grad)));

  RandomStream rng(8, StreamTag::Test, 0);
  std::vector<double> p = net.parameters();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(p.size()) - 1));
    const double h = 1e-5, orig = p[i];
    p[i] = orig + h;
    const double up = objective(p);
    p[i] = orig - h;
    const double dn = objective(p);
    p[i] = orig;
    const double fd = (up - dn) / (2 * h);
    const double err = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("zero output gradient gives zero parameter gradient") {
  ScoreNet net(tiny(1), 2);
  randomize(net, 7);
  ForwardCache cache;
  net.forward(sample_input(1), &cache);
  std::vector<double> grad(net.parameter_count(), 0.0);
  CHECK(net.backward(cache, State{0.0}, grad) == 0.0);
}

TEST_CASE("linear network gradient matches the least-squares residual formula") {
  NetConfig c = tiny(2);
  c.trunk_widths = {};
  c.activation = Activation::Identity;
  ScoreNet net(c, 3);
  randomize(net, 9);
  const NetInput in = sample_input(2);
  const State target{0.5, -0.25};
  ForwardCache cache;
  const State y = net.forward(in, &cache);
  const State r{y[0] - target[0], y[1] - target[1]};
  // loss = |y - target|^2, d/dW = 2 r z^T, d/db = 2 r
  std::vector<double> grad(net.parameter_count(), 0.0);
  net.backward(cache, State{2 * r[0], 2 * r[1]}, grad);
  const DenseLayer& L = net.trunk_layers().back();
  const auto& z = cache.trunk.inputs.back();
  for (int o = 0; o < L.out; ++o) {
    CHECK(grad[L.b_offset + o] == doctest::Approx(2 * r[o]));
    for (int i = 0; i < L.in; ++i) {
      CHECK(grad[L.w_offset + static_cast<std::size_t>(o) * L.in + i] ==
            doctest::Approx(2 * r[o] * z[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("first Adam step is -lr for a constant gradient") {
  std::vector<double> p{0.0}, ema{0.0};
  GradWorkspace ws(1);
  ws.grad = {1.0};
  optimizer_step(p, ema, ws, 0.1, 0.0, 0.999);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(ema[0] == doctest::Approx(0.001 * p[0]));
  CHECK(ws.step == 1);
}

TEST_CASE("clipping rescales before the moments") {
  std::vector<double> p{0.0, 0.0}, ema{0.0, 0.0};
  GradWorkspace ws(2);
  ws.grad = {6.0, 8.0};
  const auto rep = optimizer_step(p, ema, ws, 0.1, 5.0, 0.9);
  CHECK(rep.grad_norm == doctest::Approx(10.0));
  CHECK(rep.clip_scale == doctest::Approx(0.5));
  CHECK(ws.m[0] == doctest::Approx(0.1 * 3.0));
  CHECK(ws.v[1] == doctest::Approx(0.001 * 16.0));
}

TEST_CASE("non-finite gradients abort without an update") {
  std::vector<double> p{1.0}, ema{1.0};
  GradWorkspace ws(1);
  ws.grad = {std::nan("")};
  CHECK_THROWS_AS(optimizer_step(p, ema, ws, 0.1, 1.0, 0.9), NumericError);
  CHECK(p[0] == 1.0);
  CHECK(ws.step == 0);
}

TEST_CASE("EMA decay must be inside (0, 1)") {
  CHECK_THROWS_AS(ModelState(tiny(), 0, 1.0), ConfigError);
  CHECK_THROWS_AS(ModelState(tiny(), 0, 0.0), ConfigError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  ModelState s(tiny(2), 11, 0.99);
  randomize(s.net, 12, 1.0 / 3.0);
  s.ema = s.net.parameters();
  for (double& v : s.ema) v *= 0.7;
  s.opt.grad.assign(s.net.parameter_count(), 0.1);
  optimizer_step(s.net.parameters(), s.ema, s.opt, 1e-3, 1.0, s.ema_decay);
  s.step = 1;
  const auto path = std::filesystem::temp_directory_path() / "abc_test_ckpt.json";
  save_checkpoint(s, path);
  const ModelState back = load_checkpoint(path);
  CHECK(back.net.parameters() == s.net.parameters());
  CHECK(back.ema == s.ema);
  CHECK(back.opt.m == s.opt.m);
  CHECK(back.opt.v == s.opt.v);
  CHECK(back.opt.step == s.opt.step);
  CHECK(back.step == 1);
  CHECK(back.seed == 11);
  CHECK(checkpoint_to_string(back) == checkpoint_to_string(s));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(checkpoint_from_string("{\"format\":\"other\"}"), ConfigError);
  CHECK_THROWS_AS(checkpoint_from_string("not json"), ConfigError);
}

TEST_CASE("training a linear net on a fixed batch decreases the loss") {
  NetConfig c = tiny(1);
  c.trunk_widths = {};
  c.encoder_widths = {};
  c.activation = Activation::Identity;
  ModelState s(c, 1, 0.9);
  std::vector<NetInput> inputs;
  std::vector<double> targets;
  for (int i = 0; i < 16; ++i) {
    const double t = 0.05 + 0.05 * i;
    inputs.push_back(make_net_input(t, t, 1.0, 1.0 - t, t, {std::sin(7.0 * t)}, {{0.0, {0.2}}}));
    targets.push_back(1.0 - 2.0 * inputs.back().x[0]);
  }
  auto batch_loss = [&]() {
    double l = 0.0;
    s.opt.zero_grad();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      ForwardCache cache;
      const double r = s.net.forward(inputs[i], &cache)[0] - targets[i];
      l += r * r / inputs.size();
      s.net.backward(cache, State{2 * r / inputs.size()}, s.opt.grad);
    }
    return l;
  };
  std::vector<double> smooth;
  double avg = batch_loss();
  const double first = avg;
  for (int step = 0; step < 500; ++step) {
    const double l = batch_loss();
    optimizer_step(s.net.parameters(), s.ema, s.opt, 1e-2, 0.0, s.ema_decay);
    avg = 0.9 * avg + 0.1 * l;
    if (step % 50 == 49) smooth.push_back(avg);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] < smooth[i - 1]);
  CHECK(smooth.back() < 0.05 * first);
}
