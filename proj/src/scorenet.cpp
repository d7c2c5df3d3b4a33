#include "abc/scorenet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "abc/errors.hpp"
#include "abc/rng.hpp"

namespace abc {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr int kTrunkScalars = 4;  // time, next_time, remaining, elapsed
constexpr int kEncoderScalars = 3;  // time, rel_time, future

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double activate(Activation a, double x) { return a == Activation::Gelu ? gelu(x) : x; }
double activate_grad(Activation a, double x) { return a == Activation::Gelu ? gelu_grad(x) : 1.0; }

// sin/cos of scale * u at frequencies 10000^{-i/F}.
void time_features(double u, int freqs, double scale, std::vector<double>& out) {
  for (int i = 0; i < freqs; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / freqs);
    out.push_back(std::sin(scale * u * w));
    out.push_back(std::cos(scale * u * w));
  }
}

void dense(std::span<const double> p, const DenseLayer& L, const std::vector<double>& x,
           std::vector<double>& y) {
  y.assign(static_cast<std::size_t>(L.out), 0.0);
  const double* w = p.data() + L.w_offset;
  const double* b = p.data() + L.b_offset;
  for (int o = 0; o < L.out; ++o) {
    double acc = b[o];
    const double* row = w + static_cast<std::size_t>(o) * L.in;
    for (int i = 0; i < L.in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = acc;
  }
}

// Hidden layers activated, last layer linear.
std::vector<double> mlp_forward(std::span<const double> p, const std::vector<DenseLayer>& layers,
                                Activation act, std::vector<double> x, MlpCache* cache) {
  if (cache) {
    cache->inputs.resize(layers.size());
    cache->pre.resize(layers.size());
  }
  std::vector<double> y;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    dense(p, layers[l], x, y);
    if (cache) {
      cache->inputs[l] = x;
      cache->pre[l] = y;
    }
    if (l + 1 < layers.size()) {
      for (double& v : y) v = activate(act, v);
    }
    x.swap(y);
  }
  return x;
}

// Returns d(loss)/d(input).
std::vector<double> mlp_backward(std::span<const double> p, const std::vector<DenseLayer>& layers,
                                 Activation act, const MlpCache& cache, std::vector<double> dy,
                                 std::span<double> grad) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& L = layers[l];
    if (l + 1 < layers.size()) {
      for (int o = 0; o < L.out; ++o) dy[o] *= activate_grad(act, cache.pre[l][o]);
    }
    const std::vector<double>& x = cache.inputs[l];
    const double* w = p.data() + L.w_offset;
    double* gw = grad.data() + L.w_offset;
    double* gb = grad.data() + L.b_offset;
    std::vector<double> dx(static_cast<std::size_t>(L.in), 0.0);
    for (int o = 0; o < L.out; ++o) {
      const double g = dy[o];
      gb[o] += g;
      if (g == 0.0) continue;
      const std::size_t row = static_cast<std::size_t>(o) * L.in;
      for (int i = 0; i < L.in; ++i) {
        gw[row + i] += g * x[i];
        dx[i] += w[row + i] * g;
      }
    }
    dy.swap(dx);
  }
  return dy;
}

std::vector<DenseLayer> stack(int in, const std::vector<int>& hidden, int out, std::size_t& offset) {
  std::vector<DenseLayer> layers;
  int prev = in;
  auto add = [&](int width) {
    DenseLayer L{prev, width, offset, 0};
    offset += static_cast<std::size_t>(prev) * width;
    L.b_offset = offset;
    offset += static_cast<std::size_t>(width);
    layers.push_back(L);
    prev = width;
  };
  for (int h : hidden) add(h);
  add(out);
  return layers;
}

void check_config(const NetConfig& c) {
  if (c.state_dim < 1) throw ConfigError("net.state_dim must be >= 1");
  if (c.embed_dim < 1) throw ConfigError("net.embed_dim must be >= 1");
  if (c.time_frequencies < 0) throw ConfigError("net.time_frequencies must be >= 0");
  for (int w : c.trunk_widths) {
    if (w < 1) throw ConfigError("net.trunk_widths entries must be >= 1");
  }
  for (int w : c.encoder_widths) {
    if (w < 1) throw ConfigError("net.encoder_widths entries must be >= 1");
  }
}

}  // namespace

NetInput make_net_input(double phys_time, double sde_time, double next_time, double remaining,
                        double elapsed, const State& x, const std::vector<Waypoint>& cond) {
  NetInput in;
  in.time = sde_time;
  in.next_time = next_time;
  in.remaining = remaining;
  in.elapsed = elapsed;
  in.x = x;
  const Waypoint* anchor = nullptr;
  for (const auto& wp : cond) {
    if (wp.value.size() != x.size()) throw ShapeError("conditioning waypoint dimension mismatch");
    const bool future = wp.time > phys_time;
    in.cond.push_back({wp.time, wp.time - phys_time, wp.value, future});
    if (!future && (!anchor || wp.time > anchor->time)) anchor = &wp;
  }
  std::stable_sort(in.cond.begin(), in.cond.end(),
                   [](const CondFeature& a, const CondFeature& b) { return a.time < b.time; });
  in.anchor = anchor ? anchor->value : State(x.size(), 0.0);
  return in;
}

ScoreNet::ScoreNet(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  check_config(cfg_);
  build_layers();
  RandomStream rng(seed, StreamTag::Init, 0);
  auto init = [&](const std::vector<DenseLayer>& layers, bool zero_last) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const DenseLayer& L = layers[l];
      const bool zero = zero_last && l + 1 == layers.size();
      const double std = 1.0 / std::sqrt(static_cast<double>(L.in));
      for (std::size_t k = 0; k < static_cast<std::size_t>(L.in) * L.out; ++k) {
        params_[L.w_offset + k] = zero ? 0.0 : std * rng.normal();
      }
      for (int o = 0; o < L.out; ++o) params_[L.b_offset + o] = 0.0;
    }
  };
  init(encoder_, false);
  init(trunk_, true);
}

int ScoreNet::encoder_input_dim() const {
  return 2 * cfg_.time_frequencies + kEncoderScalars + cfg_.state_dim;
}

int ScoreNet::trunk_input_dim() const {
  return 4 * cfg_.time_frequencies + kTrunkScalars + 2 * cfg_.state_dim + cfg_.embed_dim;
}

void ScoreNet::build_layers() {
  std::size_t offset = 0;
  encoder_ = stack(encoder_input_dim(), cfg_.encoder_widths, cfg_.embed_dim, offset);
  trunk_ = stack(trunk_input_dim(), cfg_.trunk_widths, cfg_.state_dim, offset);
  params_.assign(offset, 0.0);
}

State ScoreNet::forward(const NetInput& in, ForwardCache* cache) const {
  return forward_with(params_, in, cache);
}

State ScoreNet::forward_with(std::span<const double> p, const NetInput& in,
                             ForwardCache* cache) const {
  const auto d = static_cast<std::size_t>(cfg_.state_dim);
  if (p.size() != params_.size()) throw ShapeError("parameter vector has the wrong length");
  if (in.x.size() != d || in.anchor.size() != d) throw ShapeError("net input dimension mismatch");

  std::vector<double> pooled(static_cast<std::size_t>(cfg_.embed_dim), 0.0);
  if (cache) {
    cache->encoder.resize(in.cond.size());
    cache->n_cond = in.cond.size();
  }
  for (std::size_t j = 0; j < in.cond.size(); ++j) {
    const CondFeature& c = in.cond[j];
    if (c.value.size() != d) throw ShapeError("conditioning waypoint dimension mismatch");
    std::vector<double> feat;
    feat.reserve(static_cast<std::size_t>(encoder_input_dim()));
    time_features(c.time, cfg_.time_frequencies, cfg_.time_scale, feat);
    feat.push_back(c.time);
    feat.push_back(c.rel_time);
    feat.push_back(c.future ? 1.0 : 0.0);
    feat.insert(feat.end(), c.value.begin(), c.value.end());
    const auto e = mlp_forward(p, encoder_, cfg_.activation, std::move(feat),
                               cache ? &cache->encoder[j] : nullptr);
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += e[k];
  }
  if (!in.cond.empty()) {
    for (double& v : pooled) v /= static_cast<double>(in.cond.size());
  }

  std::vector<double> feat;
  feat.reserve(static_cast<std::size_t>(trunk_input_dim()));
  time_features(in.time, cfg_.time_frequencies, cfg_.time_scale, feat);
  time_features(in.next_time, cfg_.time_frequencies, cfg_.time_scale, feat);
  feat.push_back(in.time);
  feat.push_back(in.next_time);
  feat.push_back(in.remaining);
  feat.push_back(in.elapsed);
  feat.insert(feat.end(), in.x.begin(), in.x.end());
  feat.insert(feat.end(), in.anchor.begin(), in.anchor.end());
  feat.insert(feat.end(), pooled.begin(), pooled.end());
  auto out = mlp_forward(p, trunk_, cfg_.activation, std::move(feat), cache ? &cache->trunk : nullptr);
  if (cache) cache->valid = true;
  return out;
}

double ScoreNet::backward(const ForwardCache& cache, std::span<const double> dout,
                        std::span<double> grad) const {
  if (!cache.valid) throw ConfigError("backward called without a forward cache");
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer has the wrong length");
  if (dout.size() != static_cast<std::size_t>(cfg_.state_dim)) throw ShapeError("dout dimension mismatch");
  const auto din = mlp_backward(params_, trunk_, cfg_.activation, cache.trunk,
                                std::vector<double>(dout.begin(), dout.end()), grad);
  if (cache.n_cond == 0) return global_norm(grad);
  const std::size_t pool_off = din.size() - static_cast<std::size_t>(cfg_.embed_dim);
  std::vector<double> dpool(din.begin() + static_cast<std::ptrdiff_t>(pool_off), din.end());
  for (double& v : dpool) v /= static_cast<double>(cache.n_cond);
  for (std::size_t j = 0; j < cache.n_cond; ++j) {
    mlp_backward(params_, encoder_, cfg_.activation, cache.encoder[j], dpool, grad);
  }
  return global_norm(grad);
}

void GradWorkspace::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

double global_norm(std::span<const double> g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

OptimizerReport optimizer_step(std::vector<double>& params, std::vector<double>& ema,
                               GradWorkspace& ws, double lr, double clip_norm, double ema_decay,
                               const AdamConfig& adam) {
  const std::size_t n = params.size();
  if (ws.grad.size() != n || ws.m.size() != n || ws.v.size() != n || ema.size() != n) {
    throw ShapeError("optimizer buffers do not match the parameter count");
  }
  OptimizerReport rep;
  rep.grad_norm = global_norm(ws.grad);
  if (!std::isfinite(rep.grad_norm)) throw NumericError("non-finite gradient");
  if (clip_norm > 0.0 && rep.grad_norm > clip_norm) rep.clip_scale = clip_norm / rep.grad_norm;

  ws.step += 1;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(ws.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(ws.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = ws.grad[i] * rep.clip_scale;
    ws.m[i] = adam.beta1 * ws.m[i] + (1.0 - adam.beta1) * g;
    ws.v[i] = adam.beta2 * ws.v[i] + (1.0 - adam.beta2) * g * g;
    const double mh = ws.m[i] / bc1;
    const double vh = ws.v[i] / bc2;
    params[i] -= lr * mh / (std::sqrt(vh) + adam.eps);
    ema[i] = ema_decay * ema[i] + (1.0 - ema_decay) * params[i];
  }
  return rep;
}

ModelState::ModelState(NetConfig cfg, std::uint64_t seed_, double decay)
    : net(std::move(cfg), seed_), ema(net.parameters()), opt(net.parameter_count()),
      ema_decay(decay), seed(seed_) {
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("ema decay must be in (0, 1)");
}

ScoreNet ModelState::ema_net() const {
  ScoreNet copy = net;
  copy.parameters() = ema;
  return copy;
}

namespace {

using nlohmann::json;

json config_json(const NetConfig& c) {
  return {{"state_dim", c.state_dim},
          {"trunk_widths", c.trunk_widths},
          {"encoder_widths", c.encoder_widths},
          {"embed_dim", c.embed_dim},
          {"time_frequencies", c.time_frequencies},
          {"time_scale", c.time_scale},
          {"activation", c.activation == Activation::Gelu ? "gelu" : "identity"}};
}

NetConfig config_from_json(const json& j) {
  NetConfig c;
  c.state_dim = j.at("state_dim").get<int>();
  c.trunk_widths = j.at("trunk_widths").get<std::vector<int>>();
  c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.time_frequencies = j.at("time_frequencies").get<int>();
  c.time_scale = j.at("time_scale").get<double>();
  const auto act = j.at("activation").get<std::string>();
  if (act == "gelu") {
    c.activation = Activation::Gelu;
  } else if (act == "identity") {
    c.activation = Activation::Identity;
  } else {
    throw ConfigError("unknown activation in checkpoint: " + act);
  }
  return c;
}

}  // namespace

std::string checkpoint_to_string(const ModelState& s) {
  json j;
  j["format"] = "abc-scorenet";
  j["version"] = kCheckpointVersion;
  j["config"] = config_json(s.net.config());
  j["seed"] = s.seed;
  j["step"] = s.step;
  j["ema_decay"] = s.ema_decay;
  j["params"] = s.net.parameters();
  j["ema"] = s.ema;
  j["adam"] = {{"step", s.opt.step}, {"m", s.opt.m}, {"v", s.opt.v}};
  return j.dump();
}

ModelState checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "abc-scorenet") throw ConfigError("not a score-net checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelState s;
    s.net = ScoreNet(config_from_json(j.at("config")), 0);
    s.seed = j.at("seed").get<std::uint64_t>();
    s.step = j.at("step").get<std::uint64_t>();
    s.ema_decay = j.at("ema_decay").get<double>();
    const auto n = s.net.parameter_count();
    auto load = [&](const json& arr, const char* what) {
      auto v = arr.get<std::vector<double>>();
      if (v.size() != n) throw ShapeError(std::string("checkpoint ") + what + " has the wrong length");
      return v;
    };
    s.net.parameters() = load(j.at("params"), "params");
    s.ema = load(j.at("ema"), "ema");
    s.opt = GradWorkspace(n);
    s.opt.step = j.at("adam").at("step").get<std::int64_t>();
    s.opt.m = load(j.at("adam").at("m"), "adam.m");
    s.opt.v = load(j.at("adam").at("v"), "adam.v");
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(state);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace abc
