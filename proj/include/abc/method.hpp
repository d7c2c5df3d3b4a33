#pragma once

#include <optional>
#include <string>
#include <vector>

#include "abc/paths.hpp"
#include "abc/schedule.hpp"

namespace abc {

enum class Method { ABC, ChainedBridge, NoiseToData };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

// Volatility of the per-segment bridges of ChainedBridge in bridge time:
// Shared reuses sigma(tau); GapScaled uses sqrt(t_{i+1} - t_i) * sigma(tau).
enum class BridgeVolatility { Shared, GapScaled };

std::string to_string(BridgeVolatility v);
BridgeVolatility bridge_volatility_from_string(const std::string& name);

// Which conditioning waypoints the score network is shown.
//   Full         every waypoint in the conditioning set
//   MostRecent   x_0, the latest waypoint at or before t, and future constraints
//   InitialOnly  x_0 and future constraints
enum class HistoryMode { Full, MostRecent, InitialOnly };

std::string to_string(HistoryMode h);
HistoryMode history_mode_from_string(const std::string& name);

// Base process plus the method-specific clock and coefficient functions.
struct MethodSpec {
  Method method = Method::ABC;
  VolatilitySchedule base = VolatilitySchedule::constant(1.0);
  BridgeVolatility bridge_volatility = BridgeVolatility::Shared;
  // Coefficients of the NoiseToData bridges in bridge time.
  VolatilitySchedule noise_schedule = VolatilitySchedule::cosine_decay(1.0, 0.01);
};

// Where time t sits inside a segment [t_i, t_next) and the SDE clock that
// runs there. ABC runs in physical time; the two baselines run a unit-time
// bridge in tau = (t - t_i) / (t_next - t_i).
struct SegmentClock {
  double t_i = 0.0;
  double t_next = 0.0;
  double s_begin = 0.0;  // SDE time of the segment start
  double s = 0.0;      // current SDE time
  double s_end = 0.0;  // SDE time of the segment end
  double rate = 1.0;   // ds/dt
  const VolatilitySchedule* shared = nullptr;  // coefficients when no rescaling is needed
  std::optional<VolatilitySchedule> owned;     // rescaled coefficients otherwise

  const VolatilitySchedule& sched() const { return owned ? *owned : *shared; }
};

// The clock may refer to `spec`, which must outlive it.
SegmentClock segment_clock(const MethodSpec& spec, double t_i, double t_next, double t);

// Phi(s, s_end) / C_s(s_end, s_end) in the method's clock. The network's raw
// output is multiplied by this to give the score.
double output_scale(const SegmentClock& clk);

// Loss weight: C/Phi of the base process in physical time for ABC and
// ChainedBridge, 1 for NoiseToData.
double loss_weight(const MethodSpec& spec, double t, double t_next);

// Conditioning waypoints shown to the network at physical time t.
std::vector<Waypoint> visible_history(const std::vector<Waypoint>& cond, double t, HistoryMode mode);

}  // namespace abc
