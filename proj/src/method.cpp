#include "abc/method.hpp"

#include <cmath>

#include "abc/errors.hpp"
#include "abc/kernels.hpp"

namespace abc {

std::string to_string(Method m) {
  switch (m) {
    case Method::ABC: return "abc";
    case Method::ChainedBridge: return "chained_bridge";
    case Method::NoiseToData: return "noise_to_data";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "abc") return Method::ABC;
  if (name == "chained_bridge") return Method::ChainedBridge;
  if (name == "noise_to_data") return Method::NoiseToData;
  throw ConfigError("unknown method '" + name + "' (abc, chained_bridge, noise_to_data)");
}

std::string to_string(BridgeVolatility v) {
  return v == BridgeVolatility::Shared ? "shared" : "gap_scaled";
}

BridgeVolatility bridge_volatility_from_string(const std::string& name) {
  if (name == "shared") return BridgeVolatility::Shared;
  if (name == "gap_scaled") return BridgeVolatility::GapScaled;
  throw ConfigError("unknown bridge volatility '" + name + "' (shared, gap_scaled)");
}

std::string to_string(HistoryMode h) {
  switch (h) {
    case HistoryMode::Full: return "full";
    case HistoryMode::MostRecent: return "most_recent";
    case HistoryMode::InitialOnly: return "initial_only";
  }
  return "?";
}

HistoryMode history_mode_from_string(const std::string& name) {
  if (name == "full") return HistoryMode::Full;
  if (name == "most_recent") return HistoryMode::MostRecent;
  if (name == "initial_only") return HistoryMode::InitialOnly;
  throw ConfigError("unknown history mode '" + name + "' (full, most_recent, initial_only)");
}

SegmentClock segment_clock(const MethodSpec& spec, double t_i, double t_next, double t) {
  if (!(t_i < t_next)) throw DomainError("segment requires t_i < t_next");
  SegmentClock clk;
  clk.t_i = t_i;
  clk.t_next = t_next;
  if (spec.method == Method::ABC) {
    clk.s_begin = t_i;
    clk.s = t;
    clk.s_end = t_next;
    clk.rate = 1.0;
    clk.shared = &spec.base;
    return clk;
  }
  const double gap = t_next - t_i;
  clk.s_begin = 0.0;
  clk.s = (t - t_i) / gap;
  clk.s_end = 1.0;
  clk.rate = 1.0 / gap;
  if (spec.method == Method::ChainedBridge) {
    if (spec.bridge_volatility == BridgeVolatility::Shared) {
      clk.shared = &spec.base;
    } else {
      clk.owned = spec.base.with_sigma_scale(std::sqrt(gap));
    }
  } else {
    clk.shared = &spec.noise_schedule;
  }
  if (clk.sched().horizon() < 1.0) {
    throw ConfigError("bridge-time schedules must cover [0, 1]");
  }
  return clk;
}

double output_scale(const SegmentClock& clk) { return score_precision(clk.sched(), clk.s, clk.s_end); }

double loss_weight(const MethodSpec& spec, double t, double t_next) {
  if (spec.method == Method::NoiseToData) return 1.0;
  return dsm_weight(spec.base, t, t_next);
}

std::vector<Waypoint> visible_history(const std::vector<Waypoint>& cond, double t, HistoryMode mode) {
  if (mode == HistoryMode::Full) return cond;
  const Waypoint* recent = nullptr;
  for (const auto& wp : cond) {
    if (wp.time <= t && (!recent || wp.time > recent->time)) recent = &wp;
  }
  std::vector<Waypoint> out;
  for (const auto& wp : cond) {
    const bool keep = wp.time == 0.0 || wp.time > t ||
                      (mode == HistoryMode::MostRecent && &wp == recent);
    if (keep) out.push_back(wp);
  }
  return out;
}

}  // namespace abc
