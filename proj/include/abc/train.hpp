#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "abc/method.hpp"
#include "abc/paths.hpp"
#include "abc/rng.hpp"
#include "abc/scorenet.hpp"

namespace abc {

// Random waypoint grids: L ~ U{min_interior..max_interior} interior times,
// i.i.d. uniform then sorted, redrawn until every gap exceeds `min_gap`.
// Processes with a native grid always use it; `fixed` overrides everything.
struct GridSampler {
  std::optional<TimeGrid> fixed;
  int min_interior = 0;
  int max_interior = 6;
  double min_gap = 0.01;
  int max_retries = 1000;

  TimeGrid draw(const SyntheticProcess& proc, RandomStream& rng) const;
};

// Which future grid waypoints join the conditioning set.
enum class FutureMode { None, Bernoulli, All };

std::string to_string(FutureMode f);
FutureMode future_mode_from_string(const std::string& name);

struct TrainConfig {
  MethodSpec spec;
  GridSampler grid;
  FutureMode future = FutureMode::None;
  double future_prob = 0.5;
  HistoryMode history = HistoryMode::Full;
  NetConfig net;
  int batch = 64;
  int steps = 5000;
  int warmup = 500;
  double lr_peak = 1e-3;
  double lr_final = 1e-5;
  double clip_norm = 5.0;
  double time_clip = 1e-4;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path out_dir;  // empty: nothing is written
  int chunk = 8;                  // samples per gradient shard
  bool parallel = true;

  void validate() const;
};

// Linear warmup to lr_peak, then cosine decay to lr_final at the last step.
double learning_rate(const TrainConfig& cfg, int step);

struct TrainingTuple {
  TimeGrid grid;
  std::vector<State> data;      // data values on the grid
  std::vector<Waypoint> cond;   // conditioning waypoints shown to the network
  std::size_t segment = 0;      // index i* with grid[i*] <= t < grid[i*+1]
  double t = 0.0;
  double t_prev = 0.0;
  double t_next = 0.0;
  double s = 0.0;               // time on the method's SDE clock
  State x_start;                // segment start state (data, or noise for NoiseToData)
  State x_t;
  State target;
  double weight = 1.0;
  double scale = 1.0;           // network output multiplier
  NetInput input;
};

TrainingTuple sample_training_tuple(const TrainConfig& cfg, const SyntheticProcess& proc,
                                    RandomStream& rng);

struct TupleLoss {
  double raw = 0.0;       // ||f - target||^2
  double weighted = 0.0;  // w * raw
  State dout;             // d(weighted)/d(raw network output)
};

// f = scale * h, loss = w ||f - target||^2.
TupleLoss tuple_loss(const TrainingTuple& tuple, const State& h);
double loss(const ScoreNet& net, const TrainingTuple& tuple);

struct LossRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double weighted_loss = 0.0;
  double grad_norm = 0.0;
  double t_prev = 0.0;
  double t = 0.0;
  double t_next = 0.0;
  Method method = Method::ABC;
};

struct TrainResult {
  ModelState state;
  std::vector<LossRecord> losses;
};

// Batch-mean gradient of one step, written to `grad`. Samples are split into
// fixed shards of `cfg.chunk` and reduced in shard order, so the result does
// not depend on the thread count or on `cfg.parallel`.
struct BatchStats {
  double loss = 0.0;
  double weighted_loss = 0.0;
  TrainingTuple first;
};
BatchStats batch_gradient(const TrainConfig& cfg, const SyntheticProcess& proc, const ScoreNet& net,
                          std::int64_t step, std::vector<double>& grad);

// Runs the training loop. Appends to `losses.csv` and writes checkpoints when
// cfg.out_dir is set. On a non-finite loss or gradient the last good state is
// saved to `checkpoint_last_good.json` and NumericError is thrown.
TrainResult train(const TrainConfig& cfg, const SyntheticProcess& proc,
                  const std::function<void(const LossRecord&)>& on_step = {});

}  // namespace abc
