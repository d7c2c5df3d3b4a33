#include "abc/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>

#include <omp.h>

#include "abc/errors.hpp"
#include "abc/kernels.hpp"

namespace abc {

std::string to_string(FutureMode f) {
  switch (f) {
    case FutureMode::None: return "none";
    case FutureMode::Bernoulli: return "bernoulli";
    case FutureMode::All: return "all";
  }
  return "?";
}

FutureMode future_mode_from_string(const std::string& name) {
  if (name == "none") return FutureMode::None;
  if (name == "bernoulli") return FutureMode::Bernoulli;
  if (name == "all") return FutureMode::All;
  throw ConfigError("unknown future mode '" + name + "' (none, bernoulli, all)");
}

TimeGrid GridSampler::draw(const SyntheticProcess& proc, RandomStream& rng) const {
  if (fixed) return *fixed;
  if (auto native = proc.native_grid()) return *native;
  const double h = proc.horizon;
  const std::vector<double> required = proc.required_times();
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    const int n = rng.uniform_int(min_interior, max_interior);
    std::vector<double> times = required;
    for (int i = 0; i < n; ++i) times.push_back(rng.uniform(0.0, h));
    std::sort(times.begin(), times.end());
    bool ok = true;
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] - times[i - 1] > min_gap)) {
        ok = false;
        break;
      }
    }
    if (ok) return TimeGrid(std::move(times));
  }
  throw ConfigError("could not draw a waypoint grid satisfying the minimum gap; lower "
                    "grid.max_interior or grid.min_gap");
}

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (warmup < 0 || warmup >= steps) throw ConfigError("train.warmup must be in [0, steps)");
  if (!(lr_peak > 0.0) || !(lr_final >= 0.0)) throw ConfigError("learning rates must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
  if (!(time_clip > 0.0)) throw ConfigError("train.time_clip must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("train.ema_decay must be in (0, 1)");
  if (!(future_prob >= 0.0 && future_prob <= 1.0)) throw ConfigError("train.future_prob must be in [0, 1]");
  if (chunk < 1) throw ConfigError("train.chunk must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (grid.min_interior < 0 || grid.max_interior < grid.min_interior) {
    throw ConfigError("grid interior counts must satisfy 0 <= min <= max");
  }
  if (!(grid.min_gap > 2.0 * time_clip)) throw ConfigError("grid.min_gap must exceed 2 * time_clip");
}

double learning_rate(const TrainConfig& cfg, int step) {
  if (step < cfg.warmup) return cfg.lr_peak * static_cast<double>(step + 1) / cfg.warmup;
  const int span = std::max(1, cfg.steps - 1 - cfg.warmup);
  const double u = std::min(1.0, static_cast<double>(step - cfg.warmup) / span);
  return cfg.lr_final + 0.5 * (cfg.lr_peak - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * u));
}

TrainingTuple sample_training_tuple(const TrainConfig& cfg, const SyntheticProcess& proc,
                                    RandomStream& rng) {
  if (cfg.net.state_dim != proc.dim) throw ConfigError("net.state_dim must equal process.dim");
  TrainingTuple tp;
  tp.grid = cfg.grid.draw(proc, rng);
  const TimeGrid& g = tp.grid;
  tp.data = sample_data_path(proc, g, rng).waypoint_values;

  const double t_l = g.horizon();
  bool ok = false;
  for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
    tp.t = rng.uniform(0.0, t_l);
    ok = true;
    for (double ti : g.times()) {
      if (!(std::abs(tp.t - ti) > cfg.time_clip)) ok = false;
    }
  }
  if (!ok) throw ConfigError("could not draw a training time away from the waypoints");
  const auto it = std::upper_bound(g.times().begin(), g.times().end(), tp.t);
  tp.segment = static_cast<std::size_t>(it - g.times().begin()) - 1;
  tp.t_prev = g[tp.segment];
  tp.t_next = g[tp.segment + 1];

  // Past waypoints are always known; future ones join per the future mode.
  std::vector<Waypoint> cond;
  for (std::size_t i = 0; i < g.size(); ++i) {
    bool keep = g[i] <= tp.t;
    if (!keep) {
      if (cfg.future == FutureMode::All) keep = true;
      if (cfg.future == FutureMode::Bernoulli) keep = rng.uniform() < cfg.future_prob;
    }
    if (keep) cond.push_back({g[i], tp.data[i]});
  }
  tp.cond = visible_history(cond, tp.t, cfg.history);

  const SegmentClock clk = segment_clock(cfg.spec, tp.t_prev, tp.t_next, tp.t);
  tp.s = clk.s;
  const State& x_next = tp.data[tp.segment + 1];
  tp.x_start = tp.data[tp.segment];
  if (cfg.spec.method == Method::NoiseToData) {
    for (double& v : tp.x_start) v = rng.normal();
  }
  const auto nk = noising_kernel(clk.sched(), clk.s_begin, clk.s_end, tp.x_start, x_next, clk.s);
  const double sd = std::sqrt(nk.var);
  tp.x_t.resize(nk.mean.size());
  for (std::size_t k = 0; k < nk.mean.size(); ++k) tp.x_t[k] = nk.mean[k] + sd * rng.normal();
  tp.target = score_target(clk.sched(), clk.s, clk.s_end, tp.x_t, x_next);
  tp.weight = loss_weight(cfg.spec, tp.t, tp.t_next);
  tp.scale = output_scale(clk);
  tp.input = make_net_input(tp.t, clk.s, tp.t_next, clk.s_end - clk.s, clk.s - clk.s_begin, tp.x_t,
                            tp.cond);
  return tp;
}

TupleLoss tuple_loss(const TrainingTuple& tp, const State& h) {
  if (h.size() != tp.target.size()) throw ShapeError("network output dimension mismatch");
  TupleLoss out;
  out.dout.resize(h.size());
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double r = tp.scale * h[k] - tp.target[k];
    out.raw += r * r;
    out.dout[k] = 2.0 * tp.weight * tp.scale * r;
  }
  out.weighted = tp.weight * out.raw;
  return out;
}

double loss(const ScoreNet& net, const TrainingTuple& tuple) {
  return tuple_loss(tuple, net.forward(tuple.input)).weighted;
}

namespace {

struct ChunkResult {
  std::vector<double> grad;
  double loss = 0.0;
  double weighted = 0.0;
};

void run_chunk(const TrainConfig& cfg, const SyntheticProcess& proc, const ScoreNet& net,
               std::int64_t step, int begin, int end, ChunkResult& res, TrainingTuple* first) {
  std::fill(res.grad.begin(), res.grad.end(), 0.0);
  res.loss = res.weighted = 0.0;
  const double inv_b = 1.0 / cfg.batch;
  for (int b = begin; b < end; ++b) {
    RandomStream rng(cfg.seed, StreamTag::Training,
                     static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(cfg.batch) +
                         static_cast<std::uint64_t>(b));
    TrainingTuple tp = sample_training_tuple(cfg, proc, rng);
    ForwardCache cache;
    const State h = net.forward(tp.input, &cache);
    TupleLoss tl = tuple_loss(tp, h);
    for (double& v : tl.dout) v *= inv_b;
    net.backward(cache, tl.dout, res.grad);
    res.loss += tl.raw * inv_b;
    res.weighted += tl.weighted * inv_b;
    if (first && b == 0) *first = std::move(tp);
  }
}

}  // namespace

BatchStats batch_gradient(const TrainConfig& cfg, const SyntheticProcess& proc, const ScoreNet& net,
                          std::int64_t step, std::vector<double>& grad) {
  const int n_chunks = (cfg.batch + cfg.chunk - 1) / cfg.chunk;
  std::vector<ChunkResult> chunks(static_cast<std::size_t>(n_chunks));
  for (auto& c : chunks) c.grad.assign(net.parameter_count(), 0.0);
  BatchStats stats;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chunks));

  auto body = [&](int c) {
    const int begin = c * cfg.chunk;
    const int end = std::min(cfg.batch, begin + cfg.chunk);
    try {
      run_chunk(cfg, proc, net, step, begin, end, chunks[c], c == 0 ? &stats.first : nullptr);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (cfg.parallel) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < n_chunks; ++c) body(c);
  } else {
    for (int c = 0; c < n_chunks; ++c) body(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  grad.assign(net.parameter_count(), 0.0);
  for (const auto& c : chunks) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += c.grad[i];
    stats.loss += c.loss;
    stats.weighted_loss += c.weighted;
  }
  return stats;
}

TrainResult train(const TrainConfig& cfg, const SyntheticProcess& proc,
                  const std::function<void(const LossRecord&)>& on_step) {
  cfg.validate();
  if (cfg.net.state_dim != proc.dim) throw ConfigError("net.state_dim must equal process.dim");
  if (cfg.grid.fixed) proc.check_grid(*cfg.grid.fixed);

  TrainResult result;
  result.state = ModelState(cfg.net, cfg.seed, cfg.ema_decay);
  ModelState& st = result.state;

  std::ofstream losses;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    losses.open(cfg.out_dir / "losses.csv", std::ios::binary);
    if (!losses) throw ConfigError("cannot write " + (cfg.out_dir / "losses.csv").string());
    losses << "step,loss,weighted_loss,grad_norm\n";
  }
  auto fail = [&](const std::string& why) -> void {
    std::string where;
    if (!cfg.out_dir.empty()) {
      const auto path = cfg.out_dir / "checkpoint_last_good.json";
      save_checkpoint(st, path);
      where = "; last good checkpoint: " + path.string();
    }
    throw NumericError(why + where);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    BatchStats bs;
    try {
      bs = batch_gradient(cfg, proc, st.net, step, st.opt.grad);
    } catch (const NumericError& e) {
      fail(e.what());
    }
    if (!std::isfinite(bs.loss) || !std::isfinite(bs.weighted_loss)) {
      fail("non-finite loss at step " + std::to_string(step));
    }
    if (!std::isfinite(global_norm(st.opt.grad))) {
      fail("non-finite gradient at step " + std::to_string(step));
    }
    const auto rep = optimizer_step(st.net.parameters(), st.ema, st.opt,
                                    learning_rate(cfg, step), cfg.clip_norm, cfg.ema_decay);
    st.step = static_cast<std::uint64_t>(step + 1);

    LossRecord rec;
    rec.step = step;
    rec.loss = bs.loss;
    rec.weighted_loss = bs.weighted_loss;
    rec.grad_norm = rep.grad_norm;
    rec.t_prev = bs.first.t_prev;
    rec.t = bs.first.t;
    rec.t_next = bs.first.t_next;
    rec.method = cfg.spec.method;
    result.losses.push_back(rec);
    if (losses) {
      losses << step << ',' << format_double(rec.loss) << ',' << format_double(rec.weighted_loss)
             << ',' << format_double(rec.grad_norm) << '\n';
    }
    if (on_step) on_step(rec);
    if (cfg.checkpoint_every > 0 && !cfg.out_dir.empty() && (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(st, cfg.out_dir / ("checkpoint_step" + std::to_string(step + 1) + ".json"));
    }
  }
  if (!cfg.out_dir.empty()) save_checkpoint(st, cfg.out_dir / "checkpoint_final.json");
  return result;
}

}  // namespace abc
