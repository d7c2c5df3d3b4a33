#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "abc/analysis.hpp"
#include "abc/paths.hpp"
#include "abc/sample.hpp"
#include "abc/schedule.hpp"
#include "abc/train.hpp"

namespace abc {

using Json = nlohmann::json;

// Settings of the `sample` command that are not part of the sampler itself.
struct SampleRun {
  std::size_t trajectories = 1000;
  std::vector<double> grid;            // empty: native or default grid of the process
  std::vector<double> observed_times;  // conditioned on reference values besides t = 0
  std::filesystem::path checkpoint;    // empty: <output_dir>/checkpoint_final.json
  bool use_ema = true;
};

struct ReportRun {
  std::size_t reference_size = 1000;
  int permutations = 200;
  std::filesystem::path samples;  // empty: <output_dir>/samples.csv
};

// Fully resolved run configuration. `resolved` is the complete document
// (defaults merged with the user file and overrides) and is what
// config.lock.json records.
struct RunConfig {
  Json resolved;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  VolatilitySchedule schedule = VolatilitySchedule::constant(1.0);
  SyntheticProcess process;
  TrainConfig train;
  SampleConfig sample;
  SampleRun sample_run;
  ReportRun report;
  ToyConfig toy;
  int kernel_evaluations = 200;

  TimeGrid sample_grid() const;
};

// The complete schema with default values. Every accepted key appears here.
Json default_config();

// Merges `user` onto the defaults, rejecting unknown keys and type changes.
Json merge_config(const Json& defaults, const Json& user, const std::string& path = "");

// Applies a `dotted.key=value` override; the value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& dotted, const std::string& value);

// Builds and validates every section. `output_root` prefixes a relative
// output_dir.
RunConfig resolve_config(const Json& merged, const std::filesystem::path& output_root);

Json load_json_file(const std::filesystem::path& path);

VolatilitySchedule schedule_from_json(const Json& j);

std::string code_version();

}  // namespace abc
