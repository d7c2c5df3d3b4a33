#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "abc/paths.hpp"

namespace abc {

enum class Activation { Gelu, Identity };

struct NetConfig {
  int state_dim = 1;
  std::vector<int> trunk_widths = {128, 128, 128};
  std::vector<int> encoder_widths = {32};
  int embed_dim = 32;
  int time_frequencies = 8;
  double time_scale = 1000.0;
  Activation activation = Activation::Gelu;
};

// One conditioning waypoint as seen by the set encoder.
struct CondFeature {
  double time = 0.0;      // physical time of the waypoint
  double rel_time = 0.0;  // waypoint time minus current physical time
  State value;
  bool future = false;    // waypoint lies after the current physical time
};

// Everything the score network is conditioned on.
//   time       SDE clock of the method (physical t for ABC, bridge time tau otherwise)
//   next_time  physical time of the next grid waypoint t_{i*+1}
//   remaining  SDE time left until that waypoint
//   elapsed    SDE time since the most recent conditioning waypoint
//   anchor     value of the most recent conditioning waypoint
struct NetInput {
  double time = 0.0;
  double next_time = 0.0;
  double remaining = 0.0;
  double elapsed = 0.0;
  State x;
  State anchor;
  std::vector<CondFeature> cond;
};

// Builds a NetInput; `cond` is sorted by time so pooling order is fixed.
NetInput make_net_input(double phys_time, double sde_time, double next_time, double remaining,
                        double elapsed, const State& x, const std::vector<Waypoint>& cond);

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::size_t w_offset = 0;  // row-major [out][in]
  std::size_t b_offset = 0;
};

struct MlpCache {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;
};

struct ForwardCache {
  bool valid = false;
  std::vector<MlpCache> encoder;
  MlpCache trunk;
  std::size_t n_cond = 0;
};

// Set-conditioned MLP: per-waypoint encoder, mean-pool, then a trunk that sees
// time features, the current state, the anchor waypoint, and the pooled set.
// The output head is zero-initialized, so a fresh network predicts 0.
class ScoreNet {
 public:
  ScoreNet() = default;
  ScoreNet(NetConfig cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  const std::vector<DenseLayer>& encoder_layers() const { return encoder_; }
  const std::vector<DenseLayer>& trunk_layers() const { return trunk_; }

  int encoder_input_dim() const;
  int trunk_input_dim() const;

  // Raw network output in R^d. Fills `cache` when given.
  State forward(const NetInput& in, ForwardCache* cache = nullptr) const;
  State forward_with(std::span<const double> params, const NetInput& in,
                     ForwardCache* cache = nullptr) const;

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) and
  // returns the L2 norm of `grad` afterwards.
  double backward(const ForwardCache& cache, std::span<const double> dout,
                std::span<double> grad) const;

 private:
  void build_layers();

  NetConfig cfg_;
  std::vector<DenseLayer> encoder_;
  std::vector<DenseLayer> trunk_;
  std::vector<double> params_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Gradient accumulator plus Adam moments.
struct GradWorkspace {
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit GradWorkspace(std::size_t n = 0) : grad(n, 0.0), m(n, 0.0), v(n, 0.0) {}
  void zero_grad();
};

double global_norm(std::span<const double> g);

struct OptimizerReport {
  double grad_norm = 0.0;  // before clipping
  double clip_scale = 1.0;
};

// Global-norm clipping, then a bias-corrected Adam step, then the EMA update
// ema <- decay * ema + (1 - decay) * params. Throws NumericError on a
// non-finite gradient without touching the parameters.
OptimizerReport optimizer_step(std::vector<double>& params, std::vector<double>& ema,
                               GradWorkspace& ws, double lr, double clip_norm, double ema_decay,
                               const AdamConfig& adam = {});

// Network, EMA copy and optimizer state; the unit that is checkpointed.
struct ModelState {
  ScoreNet net;
  std::vector<double> ema;
  GradWorkspace opt;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  ModelState() = default;
  ModelState(NetConfig cfg, std::uint64_t seed, double ema_decay);
  // Network evaluated with the EMA parameters.
  ScoreNet ema_net() const;
};

// Versioned JSON container; doubles are written in shortest round-trip form,
// so save/load is bit-exact.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const ModelState& state);
ModelState checkpoint_from_string(const std::string& text);

}  // namespace abc
