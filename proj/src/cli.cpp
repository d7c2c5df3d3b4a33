#include "abc/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"

#include "abc/analysis.hpp"
#include "abc/config.hpp"
#include "abc/errors.hpp"
#include "abc/kernels.hpp"
#include "abc/sample.hpp"
#include "abc/scorenet.hpp"
#include "abc/train.hpp"

namespace abc {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

void write_lock(const RunConfig& rc, const std::string& command) {
  std::filesystem::create_directories(rc.output_dir);
  Json lock = {{"code_version", code_version()}, {"command", command}, {"config", rc.resolved}};
  auto f = open_out(rc.output_dir / "config.lock.json");
  f << lock.dump(2) << '\n';
}

int cmd_validate_kernels(const RunConfig& rc, std::ostream& out) {
  const auto checks = kernel_property_suite(rc.schedule, rc.kernel_evaluations, rc.seed);
  auto f = open_out(rc.output_dir / "kernel_report.csv");
  f << "check,t_anchor,tau_a,tau_b,value,reference,error,pass\n";
  int failures = 0;
  for (const auto& c : checks) {
    f << c.check << ',' << format_double(c.t_anchor) << ',' << format_double(c.tau_a) << ','
      << format_double(c.tau_b) << ',' << format_double(c.value) << ',' << format_double(c.reference)
      << ',' << format_double(c.error) << ',' << (c.pass ? 1 : 0) << '\n';
    if (!c.pass) ++failures;
  }
  out << "validate-kernels: " << checks.size() - static_cast<std::size_t>(failures) << "/"
      << checks.size() << " checks passed (" << to_string(rc.schedule.kind()) << ")\n";
  return failures == 0 ? kExitOk : kExitNumeric;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
  const int every = std::max(1, rc.train.steps / 10);
  const auto result = train(rc.train, rc.process, [&](const LossRecord& r) {
    if ((r.step + 1) % every == 0) {
      out << "step " << r.step + 1 << " loss " << r.loss << " weighted " << r.weighted_loss
          << " grad_norm " << r.grad_norm << '\n';
    }
  });
  out << "train: " << result.state.step << " steps, checkpoint "
      << (rc.output_dir / "checkpoint_final.json").string() << '\n';
  return kExitOk;
}

std::vector<ConditioningSet> conditioning_from_reference(const RunConfig& rc, const TimeGrid& grid,
                                                         const std::vector<PathSample>& ref) {
  std::vector<ConditioningSet> conds;
  conds.reserve(ref.size());
  for (const auto& p : ref) {
    std::vector<Waypoint> obs = {{0.0, p.waypoint_values[0]}};
    for (double t : rc.sample_run.observed_times) {
      if (t == 0.0) continue;
      obs.push_back({t, p.waypoint_values[*grid.index_of(t, 1e-12)]});
    }
    conds.emplace_back(grid, std::move(obs));
  }
  return conds;
}

int cmd_sample(const RunConfig& rc, std::ostream& out) {
  const TimeGrid grid = rc.sample_grid();
  std::optional<ScoreNet> net;
  if (rc.sample.score == ScoreSource::Network) {
    if (!std::filesystem::exists(rc.sample_run.checkpoint)) {
      throw ConfigError("checkpoint not found: " + rc.sample_run.checkpoint.string() +
                        " (run `train` first or set sample.score)");
    }
    const ModelState st = load_checkpoint(rc.sample_run.checkpoint);
    net = rc.sample_run.use_ema ? st.ema_net() : st.net;
    if (net->config().state_dim != rc.process.dim) {
      throw ConfigError("checkpoint state dimension does not match process.dim");
    }
  }
  const auto ref = sample_data_joint(rc.process, grid, rc.sample_run.trajectories, rc.seed);
  const auto conds = conditioning_from_reference(rc, grid, ref);
  const auto paths = simulate_batch(rc.sample, net ? &*net : nullptr, grid, conds,
                                    rc.sample_run.trajectories, rc.seed);
  {
    auto f = open_out(rc.output_dir / "samples.csv");
    write_paths_csv(f, paths, false);
  }
  if (rc.sample.trace) {
    auto f = open_out(rc.output_dir / "traces.csv");
    write_paths_csv(f, paths, true);
  }
  out << "sample: " << paths.size() << " trajectories on " << grid.size() << " waypoints ("
      << to_string(rc.sample.spec.method) << ", score " << to_string(rc.sample.score) << ")\n";
  return kExitOk;
}

int cmd_toy(const RunConfig& rc, std::ostream& out) {
  const ToyReport rep = toy_experiment(rc.toy);
  write_toy_report(rep, rc.output_dir);
  out << "toy: QV[0,0.8) X " << rep.qv_x_first.estimate << " Y " << rep.qv_y_first.estimate
      << "; QV[0.8,1) X " << rep.qv_x_second.estimate << " Y " << rep.qv_y_second.estimate
      << "; pins " << (rep.pins_hit ? "hit" : "missed") << '\n';
  return kExitOk;
}

int cmd_report(const RunConfig& rc, std::ostream& out) {
  std::ifstream in(rc.report.samples, std::ios::binary);
  if (!in) throw ConfigError("samples not found: " + rc.report.samples.string() + " (run `sample` first)");
  const auto generated = read_paths_csv(in);
  if (generated.empty()) throw ConfigError("no samples in " + rc.report.samples.string());
  const TimeGrid grid = generated.front().grid;
  const auto reference = sample_data_joint(rc.process, grid, rc.report.reference_size, rc.seed + 1);
  const auto rep = joint_report(generated, reference, rc.report.permutations, rc.seed);
  {
    auto f = open_out(rc.output_dir / "joint_report.csv");
    write_joint_report_csv(f, rep, grid);
  }
  out << "report: energy distance " << rep.energy.statistic << ", p-value " << rep.energy.p_value;
  if (grid.size() >= 3) {
    out << ", corr(t1,t2) " << rep.corr_generated[0][1][2];
  }
  if (grid.size() >= 4) out << ", corr(t2,t3) " << rep.corr_generated[0][2][3];
  out << '\n';
  return kExitOk;
}

struct Parsed {
  std::string command;
  std::string config;
  int workers = 0;
  std::vector<std::pair<std::string, std::string>> overrides;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-bridge time-series generation: kernels, training, sampling and analysis."};
  app.require_subcommand(1, 1);
  Parsed p;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"validate-kernels", "check closed-form kernels against quadrature; writes kernel_report.csv"},
      {"train", "train a score network; writes losses.csv and checkpoints"},
      {"sample", "simulate trajectories; writes samples.csv (and traces.csv with sample.trace)"},
      {"toy", "pinned Brownian comparison; writes qv.csv, marginals.csv, toy_overlay.svg"},
      {"report", "compare samples.csv against fresh reference data; writes joint_report.csv"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sc = app.add_subcommand(name, help);
    sc->add_option("config", p.config, "JSON config file")->required();
    sc->add_option("--workers", p.workers, "worker threads (default: logical CPUs)");
    sc->allow_extras();
    subs.push_back(sc);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  CLI::App* active = nullptr;
  for (auto* sc : subs) {
    if (sc->parsed()) active = sc;
  }
  p.command = active->get_name();
  const auto extras = active->remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0) {
      err << "error: unexpected argument '" << a << "'\n";
      return kExitConfig;
    }
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      p.overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      p.overrides.emplace_back(a.substr(2), extras[i + 1]);
      ++i;
    } else {
      err << "error: override '" << a << "' has no value\n";
      return kExitConfig;
    }
  }

  try {
    if (p.workers < 0) throw ConfigError("--workers must be >= 1");
    if (p.workers > 0) omp_set_num_threads(p.workers);
    Json merged = merge_config(default_config(), load_json_file(p.config));
    for (const auto& [k, v] : p.overrides) apply_override(merged, k, v);
    const char* root = std::getenv("ABC_OUTPUT_ROOT");
    const RunConfig rc = resolve_config(merged, root && *root ? root : std::filesystem::path("."));
    write_lock(rc, p.command);
    if (p.command == "validate-kernels") return cmd_validate_kernels(rc, out);
    if (p.command == "train") return cmd_train(rc, out);
    if (p.command == "sample") return cmd_sample(rc, out);
    if (p.command == "toy") return cmd_toy(rc, out);
    return cmd_report(rc, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "file error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace abc
