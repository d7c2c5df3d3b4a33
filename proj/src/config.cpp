#include "abc/config.hpp"

#include <fstream>
#include <sstream>

#include "abc/errors.hpp"

namespace abc {

namespace {

Json schedule_defaults(const std::string& kind) {
  return {{"kind", kind}, {"horizon", 1.0}, {"sigma", 1.0}, {"A", 1.0}, {"B", 0.5},
          {"K", 1.0},     {"alpha", 1.0},   {"k", 1.0},     {"eps", 0.01}, {"table", ""}};
}

const char* type_name(const Json& j) { return j.type_name(); }

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

}  // namespace

std::string code_version() { return "abc 0.1.0"; }

Json default_config() {
  Json net = {{"trunk_widths", {128, 128, 128}},
              {"encoder_widths", {32}},
              {"embed_dim", 32},
              {"time_frequencies", 8},
              {"time_scale", 1000.0},
              {"activation", "gelu"}};
  Json train = {{"batch", 64},          {"steps", 5000},        {"warmup", 500},
                {"lr_peak", 1e-3},      {"lr_final", 1e-5},     {"clip_norm", 5.0},
                {"time_clip", 1e-4},    {"ema_decay", 0.999},   {"checkpoint_every", 0},
                {"future", "none"},     {"future_prob", 0.5},   {"chunk", 8},
                {"grid", {{"fixed", Json::array()},
                          {"min_interior", 0},
                          {"max_interior", 6},
                          {"min_gap", 0.01},
                          {"max_retries", 1000}}}};
  Json sample = {{"steps", 1000},        {"eps_t", 1e-6},         {"bb_drift", false},
                 {"bb_eps", 1e-7},       {"score", "network"},    {"trace", false},
                 {"trajectories", 1000}, {"grid", Json::array()}, {"observed_times", Json::array()},
                 {"checkpoint", ""},     {"use_ema", true}};
  return {{"seed", 0},
          {"output_dir", "runs/default"},
          {"schedule", schedule_defaults("constant")},
          {"process",
           {{"kind", "gaussian_ar"},
            {"dim", 1},
            {"x0_mean", 0.5},
            {"x0_std", 0.2},
            {"reversion", 2.0},
            {"noise", 0.5},
            {"jitter", 0.01}}},
          {"method",
           {{"name", "abc"},
            {"bridge_volatility", "shared"},
            {"history", "full"},
            {"noise_schedule", schedule_defaults("cosine_decay")}}},
          {"net", net},
          {"train", train},
          {"sample", sample},
          {"report", {{"reference_size", 1000}, {"permutations", 200}, {"samples", ""}}},
          {"toy", {{"trajectories", 1000}, {"steps", 4000}, {"x0", 1.0}, {"sigma", 1.0}}},
          {"kernels", {{"evaluations", 200}}}};
}

Json merge_config(const Json& defaults, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config" + (path.empty() ? "" : " section '" + path + "'") + " must be an object");
  Json out = defaults;
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    const Json& def = defaults.at(key);
    if (def.is_object()) {
      out[key] = merge_config(def, value, here);
    } else {
      if (!same_kind(def, value)) {
        throw ConfigError("config key '" + here + "' expects " + type_name(def) + ", got " + type_name(value));
      }
      out[key] = value;
    }
  }
  return out;
}

void apply_override(Json& doc, const std::string& dotted, const std::string& value) {
  Json* node = &doc;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty override key");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) {
      throw ConfigError("unknown config key '" + dotted + "'");
    }
    node = &(*node)[parts[i]];
  }
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const Json::parse_error&) {
    parsed = value;
  }
  if (node->is_string() && !parsed.is_string()) parsed = value;
  if (node->is_object() || !same_kind(*node, parsed)) {
    throw ConfigError("override '" + dotted + "' expects " + type_name(*node) + ", got " + type_name(parsed));
  }
  *node = parsed;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

VolatilitySchedule schedule_from_json(const Json& j) {
  const auto kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  const double h = j.at("horizon").get<double>();
  switch (kind) {
    case ScheduleKind::Constant: return VolatilitySchedule::constant(j.at("sigma").get<double>(), h);
    case ScheduleKind::ExponentialDecay:
      return VolatilitySchedule::exponential_decay(j.at("A").get<double>(), j.at("B").get<double>(),
                                                   j.at("K").get<double>(), h);
    case ScheduleKind::Periodic:
      return VolatilitySchedule::periodic(j.at("alpha").get<double>(), j.at("k").get<double>(),
                                          j.at("eps").get<double>(), h);
    case ScheduleKind::CosineDecay:
      return VolatilitySchedule::cosine_decay(j.at("alpha").get<double>(), j.at("eps").get<double>(), h);
    case ScheduleKind::Custom: {
      const auto table = j.at("table").get<std::string>();
      if (table.empty()) throw ConfigError("custom schedule needs schedule.table (a CSV path)");
      return VolatilitySchedule::from_csv(table);
    }
  }
  throw ConfigError("unsupported schedule");
}

namespace {

std::uint64_t get_u64(const Json& j, const char* what) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(std::string(what) + " must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

int get_int(const Json& j, const char* what) {
  if (!j.is_number_integer()) throw ConfigError(std::string(what) + " must be an integer");
  return j.get<int>();
}

std::size_t get_count(const Json& j, const char* what) {
  const int v = get_int(j, what);
  if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<double> get_times(const Json& j, const char* what) {
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(std::string(what) + " must be a list of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

SyntheticProcess process_from_json(const Json& j) {
  const auto kind = process_kind_from_string(j.at("kind").get<std::string>());
  const int dim = get_int(j.at("dim"), "process.dim");
  if (dim < 1) throw ConfigError("process.dim must be >= 1");
  switch (kind) {
    case ProcessKind::GaussianAR:
      return SyntheticProcess::gaussian_ar(dim, j.at("x0_mean").get<double>(), j.at("x0_std").get<double>(),
                                           j.at("reversion").get<double>(), j.at("noise").get<double>());
    case ProcessKind::MixtureNonMarkov:
      return SyntheticProcess::mixture_non_markov(dim, j.at("jitter").get<double>());
    case ProcessKind::PinnedBrownian:
      return SyntheticProcess::pinned_brownian(dim, j.at("x0_mean").get<double>(), j.at("noise").get<double>());
  }
  throw ConfigError("unsupported process");
}

NetConfig net_from_json(const Json& j, int dim) {
  NetConfig c;
  c.state_dim = dim;
  c.trunk_widths.clear();
  for (const auto& w : j.at("trunk_widths")) c.trunk_widths.push_back(get_int(w, "net.trunk_widths"));
  c.encoder_widths.clear();
  for (const auto& w : j.at("encoder_widths")) c.encoder_widths.push_back(get_int(w, "net.encoder_widths"));
  c.embed_dim = get_int(j.at("embed_dim"), "net.embed_dim");
  c.time_frequencies = get_int(j.at("time_frequencies"), "net.time_frequencies");
  c.time_scale = j.at("time_scale").get<double>();
  const auto act = j.at("activation").get<std::string>();
  if (act == "gelu") {
    c.activation = Activation::Gelu;
  } else if (act == "identity") {
    c.activation = Activation::Identity;
  } else {
    throw ConfigError("net.activation must be 'gelu' or 'identity'");
  }
  return c;
}

}  // namespace

TimeGrid RunConfig::sample_grid() const {
  if (!sample_run.grid.empty()) {
    TimeGrid g(sample_run.grid);
    process.check_grid(g);
    return g;
  }
  if (auto native = process.native_grid()) return *native;
  const auto req = process.required_times();
  if (req.size() > 2) return TimeGrid(req);
  return TimeGrid::uniform(4, process.horizon);
}

RunConfig resolve_config(const Json& merged, const std::filesystem::path& output_root) {
  RunConfig rc;
  rc.resolved = merged;
  try {
    rc.seed = get_u64(merged.at("seed"), "seed");
    const std::filesystem::path out = merged.at("output_dir").get<std::string>();
    if (out.empty()) throw ConfigError("output_dir must not be empty");
    rc.output_dir = out.is_absolute() ? out : output_root / out;

    rc.schedule = schedule_from_json(merged.at("schedule"));
    rc.process = process_from_json(merged.at("process"));

    const Json& m = merged.at("method");
    MethodSpec spec;
    spec.method = method_from_string(m.at("name").get<std::string>());
    spec.base = rc.schedule;
    spec.bridge_volatility = bridge_volatility_from_string(m.at("bridge_volatility").get<std::string>());
    spec.noise_schedule = schedule_from_json(m.at("noise_schedule"));
    const HistoryMode history = history_mode_from_string(m.at("history").get<std::string>());

    const Json& t = merged.at("train");
    TrainConfig& tc = rc.train;
    tc.spec = spec;
    tc.history = history;
    tc.net = net_from_json(merged.at("net"), rc.process.dim);
    tc.batch = get_int(t.at("batch"), "train.batch");
    tc.steps = get_int(t.at("steps"), "train.steps");
    tc.warmup = get_int(t.at("warmup"), "train.warmup");
    tc.lr_peak = t.at("lr_peak").get<double>();
    tc.lr_final = t.at("lr_final").get<double>();
    tc.clip_norm = t.at("clip_norm").get<double>();
    tc.time_clip = t.at("time_clip").get<double>();
    tc.ema_decay = t.at("ema_decay").get<double>();
    tc.checkpoint_every = get_int(t.at("checkpoint_every"), "train.checkpoint_every");
    tc.future = future_mode_from_string(t.at("future").get<std::string>());
    tc.future_prob = t.at("future_prob").get<double>();
    tc.chunk = get_int(t.at("chunk"), "train.chunk");
    tc.seed = rc.seed;
    tc.out_dir = rc.output_dir;
    const Json& g = t.at("grid");
    const auto fixed = get_times(g.at("fixed"), "train.grid.fixed");
    if (!fixed.empty()) tc.grid.fixed = TimeGrid(fixed);
    tc.grid.min_interior = get_int(g.at("min_interior"), "train.grid.min_interior");
    tc.grid.max_interior = get_int(g.at("max_interior"), "train.grid.max_interior");
    tc.grid.min_gap = g.at("min_gap").get<double>();
    tc.grid.max_retries = get_int(g.at("max_retries"), "train.grid.max_retries");
    tc.validate();
    if (tc.grid.fixed) rc.process.check_grid(*tc.grid.fixed);

    const Json& s = merged.at("sample");
    SampleConfig& sc = rc.sample;
    sc.spec = spec;
    sc.history = history;
    sc.steps = get_int(s.at("steps"), "sample.steps");
    sc.eps_t = s.at("eps_t").get<double>();
    sc.bb_drift = s.at("bb_drift").get<bool>();
    sc.bb_eps = s.at("bb_eps").get<double>();
    sc.score = score_source_from_string(s.at("score").get<std::string>());
    sc.trace = s.at("trace").get<bool>();
    sc.process = rc.process;
    rc.sample_run.trajectories = get_count(s.at("trajectories"), "sample.trajectories");
    rc.sample_run.grid = get_times(s.at("grid"), "sample.grid");
    rc.sample_run.observed_times = get_times(s.at("observed_times"), "sample.observed_times");
    const std::filesystem::path ck = s.at("checkpoint").get<std::string>();
    rc.sample_run.checkpoint = ck.empty() ? rc.output_dir / "checkpoint_final.json" : ck;
    rc.sample_run.use_ema = s.at("use_ema").get<bool>();
    const TimeGrid grid = rc.sample_grid();
    sc.validate(grid);
    for (double ot : rc.sample_run.observed_times) {
      if (!grid.index_of(ot, 1e-12)) throw ConfigError("sample.observed_times must lie on the sampling grid");
    }

    const Json& r = merged.at("report");
    rc.report.reference_size = get_count(r.at("reference_size"), "report.reference_size");
    rc.report.permutations = get_int(r.at("permutations"), "report.permutations");
    if (rc.report.permutations < 1) throw ConfigError("report.permutations must be >= 1");
    const std::filesystem::path samples = r.at("samples").get<std::string>();
    rc.report.samples = samples.empty() ? rc.output_dir / "samples.csv" : samples;

    const Json& toy = merged.at("toy");
    rc.toy.trajectories = get_count(toy.at("trajectories"), "toy.trajectories");
    rc.toy.steps = get_int(toy.at("steps"), "toy.steps");
    rc.toy.x0 = toy.at("x0").get<double>();
    rc.toy.sigma = toy.at("sigma").get<double>();
    rc.toy.seed = rc.seed;
    if (!(rc.toy.sigma > 0.0)) throw ConfigError("toy.sigma must be positive");
    if (rc.toy.steps < 20) throw ConfigError("toy.steps must be >= 20");

    rc.kernel_evaluations = get_int(merged.at("kernels").at("evaluations"), "kernels.evaluations");
    if (rc.kernel_evaluations < 1) throw ConfigError("kernels.evaluations must be >= 1");
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return rc;
}

}  // namespace abc
