#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "doobgen/config.hpp"
#include "doobgen/error.hpp"
#include "doobgen/io.hpp"
#include "doobgen/metrics.hpp"
#include "doobgen/mixture.hpp"
#include "doobgen/nn.hpp"
#include "doobgen/process.hpp"
#include "doobgen/sampling.hpp"
#include "doobgen/steering.hpp"
#include "doobgen/training.hpp"

#ifndef DOOBGEN_VERSION
#define DOOBGEN_VERSION "0.1.0"
#endif

namespace doobgen {

inline constexpr const char* version_string = DOOBGEN_VERSION;

// Independent random streams hanging off the root seed.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t train = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t score = 5;
inline constexpr std::uint64_t simulate = 6;
inline constexpr std::uint64_t sweep = 7;
}  // namespace streams

namespace cli_detail {

// Invalid values in an otherwise well-formed config are usage errors.
template <typename F>
auto as_usage(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const ParameterError& e) {
    throw UsageError(what + ": " + e.what());
  } catch (const ConfigError& e) {
    throw UsageError(what + ": " + e.what());
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::filesystem::path out_dir(const RunConfig& cfg) {
  std::filesystem::path dir = cfg.get("out");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace cli_detail

inline ProcessSpec build_spec(const RunConfig& cfg) {
  return cli_detail::as_usage("process", [&] {
    const auto D = cfg.get_uint("process.D");
    const double T = cfg.get_double("process.T");
    const auto& skind = cfg.get("spectrum.kind");
    CovarianceSpectrum spectrum = [&] {
      if (skind == "matern") {
        return matern_spectrum(D, cfg.get_double("spectrum.sigma0_sq"), cfg.get_double("spectrum.rho0"),
                               cfg.get_double("spectrum.nu0"));
      }
      if (skind == "power") return power_spectrum(D, cfg.get_double("spectrum.c1"), cfg.get_double("spectrum.decay"));
      throw UsageError("spectrum.kind: expected matern or power, got '" + skind + "'");
    }();
    const bool reversed = cfg.get_bool("schedule.reversed");
    NoiseSchedule schedule = [&] {
      switch (parse_schedule_kind(cfg.get("schedule.kind"))) {
        case ScheduleKind::constant: return NoiseSchedule::constant(cfg.get_double("schedule.beta"), T);
        case ScheduleKind::linear:
          return NoiseSchedule::linear(cfg.get_double("schedule.beta0"), cfg.get_double("schedule.beta1"), T, reversed);
        case ScheduleKind::cosine: return NoiseSchedule::cosine(T, reversed);
      }
      throw UsageError("schedule.kind: unsupported");
    }();
    return ProcessSpec(std::move(spectrum), std::move(schedule), cfg.get_double("process.gamma"));
  });
}

inline MixtureTarget build_target(const RunConfig& cfg, const ProcessSpec& spec) {
  return cli_detail::as_usage("mixture", [&] {
    auto mean = benchmark_mean(spec.dim());
    const double scale = cfg.get_double("mixture.mean_scale");
    for (auto& v : mean) v *= scale;
    return MixtureTarget(cfg.get_double("mixture.alpha"), std::move(mean), spec.spectrum());
  });
}

inline TrainConfig build_train_config(const RunConfig& cfg) {
  return cli_detail::as_usage("train", [&] {
    TrainConfig t;
    t.iterations = cfg.get_uint("train.iterations");
    t.batch_size = cfg.get_uint("train.batch");
    t.learning_rate = cfg.get_double("train.lr");
    const auto& lrs = cfg.get("train.lr_schedule");
    if (lrs == "constant") {
      t.lr_schedule = LrSchedule::constant;
    } else if (lrs == "cosine") {
      t.lr_schedule = LrSchedule::cosine;
    } else {
      throw UsageError("train.lr_schedule: expected constant or cosine, got '" + lrs + "'");
    }
    t.clip_norm = cfg.get_double("train.clip");
    t.time_margin = cfg.get_double("train.time_margin");
    const auto& w = cfg.get("train.weighting");
    if (w == "b_star") {
      t.weighting = LossWeighting::b_star;
    } else if (w == "unit") {
      t.weighting = LossWeighting::unit;
    } else {
      throw UsageError("train.weighting: expected b_star or unit, got '" + w + "'");
    }
    t.diagnostic_every = cfg.get_uint("train.diagnostic_every");
    t.diagnostic_points = cfg.get_uint("train.diagnostic_points");
    t.seed = derive_seed(cfg.get_uint("seed"), streams::train);
    t.validate();
    return t;
  });
}

inline NetConfig build_net_config(const RunConfig& cfg, std::size_t D) {
  return cli_detail::as_usage("net", [&] {
    NetConfig n = NetConfig::for_dimension(D, derive_seed(cfg.get_uint("seed"), streams::init));
    if (const auto h = cfg.get_uint("net.hidden")) n.hidden = h;
    if (const auto b = cfg.get_uint("net.blocks")) n.blocks = b;
    n.embed = cfg.get_uint("net.embed");
    n.validate();
    return n;
  });
}

inline SamplerConfig build_sampler_config(const RunConfig& cfg) {
  return cli_detail::as_usage("sampler", [&] {
    SamplerConfig s;
    s.steps = cfg.get_uint("sampler.K");
    s.langevin_steps = cfg.get_uint("sampler.L");
    s.langevin_step_size = cfg.get_double("sampler.delta");
    s.seed = derive_seed(cfg.get_uint("seed"), streams::sampler);
    s.validate();
    return s;
  });
}

inline SWConfig build_sw_config(const RunConfig& cfg) {
  return cli_detail::as_usage("eval", [&] {
    SWConfig s;
    s.slices = cfg.get_uint("eval.slices");
    s.order = static_cast<int>(cfg.get_uint("eval.order"));
    s.validate();
    return s;
  });
}

/// Network from a checkpoint, checked against the process dimension.
inline std::shared_ptr<const ScoreNet> load_network(const std::string& path, const ProcessSpec& spec) {
  if (path.empty()) throw UsageError("network steering needs a checkpoint path");
  if (!std::filesystem::exists(path)) throw FileError("checkpoint not found: " + path);
  auto net = std::make_shared<const ScoreNet>(load_checkpoint(path));
  if (net->input_dim() != spec.dim()) {
    throw ConfigError("checkpoint " + path + " has dimension " + std::to_string(net->input_dim()) + ", process has " +
                      std::to_string(spec.dim()));
  }
  return net;
}

/// config.txt (loadable echo) and run.json (command, seed, version, extras).
inline void write_run_files(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command,
                            nlohmann::json extra = nlohmann::json::object()) {
  write_text(dir / "config.txt", cfg.echo());
  extra["command"] = command;
  extra["seed"] = cfg.get_uint("seed");
  extra["version"] = version_string;
  cli_detail::write_json(dir / "run.json", extra);
}

inline std::vector<std::string> coefficient_header(std::size_t D, std::vector<std::string> prefix = {}) {
  for (std::size_t j = 0; j < D; ++j) prefix.push_back("x" + std::to_string(j + 1));
  return prefix;
}

/// simulate: target draws, forward paths started at target draws, or bridge
/// marginals X_t | X_T = y on a time grid over [0, T).
inline void cmd_simulate(const RunConfig& cfg) {
  const auto spec = build_spec(cfg);
  const auto target = build_target(cfg, spec);
  const auto n = cfg.get_uint("simulate.n");
  const auto steps = cfg.get_uint("simulate.steps");
  const auto& kind = cfg.get("simulate.kind");
  if (n == 0) throw UsageError("simulate.n must be positive");
  const Seed root = derive_seed(cfg.get_uint("seed"), streams::simulate);
  const auto dir = cli_detail::out_dir(cfg);
  const double T = spec.horizon();

  if (kind == "target") {
    write_matrix_csv(dir / "samples.csv", sample_target(target, n, root));
  } else if (kind == "forward" || kind == "bridge") {
    if (steps < 2) throw UsageError("simulate.steps must be at least 2");
    std::vector<double> times(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      times[k] = kind == "forward" ? T * k / (steps - 1) : T * k / steps;
    }
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(root, i));
      const auto y = sample_target(target, rng);
      Matrix states(steps, spec.dim());
      if (kind == "forward") {
        states = forward_sample(spec, y, times, rng).states;
      } else {
        for (std::size_t k = 0; k < steps; ++k) states.set_row(k, bridge_sample(spec, y, times[k], rng).x);
      }
      for (std::size_t k = 0; k < steps; ++k) {
        std::vector<std::string> row{std::to_string(i), format_double(times[k])};
        for (double v : states.row(k)) row.push_back(format_double(v));
        rows.push_back(std::move(row));
      }
    }
    write_csv(dir / (kind + ".csv"), coefficient_header(spec.dim(), {"path", "t"}), rows);
  } else {
    throw UsageError("simulate.kind: expected target, forward or bridge, got '" + kind + "'");
  }
  write_run_files(dir, cfg, "simulate");
}

inline std::vector<std::vector<std::string>> trace_rows(const std::vector<TracePoint>& trace) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(trace.size());
  for (const auto& p : trace) rows.push_back({std::to_string(p.iteration), format_double(p.value)});
  return rows;
}

struct TrainOutcome {
  std::shared_ptr<ScoreNet> net;
  TrainResult result;
  double seconds = 0.0;
};

/// Trains a fresh network as configured. The analytic mixture supplies targets
/// unless train.data names a CSV of samples.
inline TrainOutcome train_network(const RunConfig& cfg, const ProcessSpec& spec, const MixtureTarget& target) {
  const auto tcfg = build_train_config(cfg);
  auto net = std::make_shared<ScoreNet>(build_net_config(cfg, spec.dim()));
  const auto& data = cfg.get("train.data");
  const auto source = data.empty() ? TargetSource::from_mixture(target) : TargetSource::from_dataset(read_matrix_csv(data));
  if (source.dim() != spec.dim()) {
    throw ConfigError("train.data has " + std::to_string(source.dim()) + " columns, process has " +
                      std::to_string(spec.dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  auto res = train(*net, source, spec, tcfg, data.empty() ? &target : nullptr);
  return {std::move(net), std::move(res), cli_detail::seconds_since(start)};
}

/// train: model.ckpt, loss.csv, score_error.csv, config.txt, run.json.
inline void cmd_train(const RunConfig& cfg) {
  const auto spec = build_spec(cfg);
  const auto target = build_target(cfg, spec);
  const auto dir = cli_detail::out_dir(cfg);
  const auto out = train_network(cfg, spec, target);
  save_checkpoint((dir / "model.ckpt").string(), *out.net);
  write_csv(dir / "loss.csv", {"iteration", "loss"}, trace_rows(out.result.loss));
  write_csv(dir / "score_error.csv", {"iteration", "score_error"}, trace_rows(out.result.score_error));
  write_run_files(dir, cfg, "train",
                  {{"iterations_completed", out.result.completed},
                   {"aborted", out.result.aborted},
                   {"abort_reason", out.result.abort_reason},
                   {"parameters", out.net->params().size()},
                   {"train_seconds", out.seconds}});
  if (out.result.aborted) throw NumericError("training aborted: " + out.result.abort_reason);
}

inline std::unique_ptr<SteeringSource> build_steering(const RunConfig& cfg, const ProcessSpec& spec,
                                                      const MixtureTarget& target) {
  const auto& kind = cfg.get("sampler.steering");
  if (kind == "analytic") return std::make_unique<AnalyticSteering>(target, spec);
  if (kind == "network") return std::make_unique<NetworkSteering>(load_network(cfg.get("sampler.checkpoint"), spec), spec.horizon());
  throw UsageError("sampler.steering: expected analytic or network, got '" + kind + "'");
}

/// generate: samples.csv plus samples.json recording the sampler settings and timings.
inline void cmd_generate(const RunConfig& cfg) {
  const auto spec = build_spec(cfg);
  const auto target = build_target(cfg, spec);
  const auto scfg = build_sampler_config(cfg);
  const auto n = cfg.get_uint("sampler.n");
  if (n == 0) throw UsageError("sampler.n must be positive");
  const auto steer = build_steering(cfg, spec, target);
  const auto dir = cli_detail::out_dir(cfg);
  const auto res = generate(spec, *steer, n, scfg);
  write_matrix_csv(dir / "samples.csv", res.samples);
  const nlohmann::json meta = {{"iem_steps", res.config.steps},
                               {"langevin_steps", res.config.langevin_steps},
                               {"langevin_step_size", res.config.langevin_step_size},
                               {"sampler_seed", res.config.seed},
                               {"samples", n},
                               {"dimension", spec.dim()},
                               {"horizon", spec.horizon()},
                               {"steering", cfg.get("sampler.steering")},
                               {"checkpoint", cfg.get("sampler.checkpoint")},
                               {"init_seconds", res.init_seconds},
                               {"integrate_seconds", res.integrate_seconds}};
  cli_detail::write_json(dir / "samples.json", meta);
  write_run_files(dir, cfg, "generate");
}

struct Metrics {
  TargetComparison comparison;
  double mode_fraction = 0.0;
  Estimate score_error{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
};

/// SW against fresh target sets and the mode fraction. A function of the
/// samples, the config and the seed only.
inline Metrics evaluate_samples(const Matrix& samples, const RunConfig& cfg, const ProcessSpec& spec,
                                const MixtureTarget& target) {
  if (samples.cols() != spec.dim()) {
    throw ConfigError("samples have " + std::to_string(samples.cols()) + " columns, process has " +
                      std::to_string(spec.dim()));
  }
  const auto sw = build_sw_config(cfg);
  const Seed root = derive_seed(cfg.get_uint("seed"), streams::eval);
  Metrics m;
  m.comparison =
      compare_to_target(samples, target, cfg.get_uint("eval.reference_n"), cfg.get_uint("eval.repeats"), sw, root);
  m.mode_fraction = mode_fraction(samples, target.mean());
  return m;
}

inline Estimate score_error_of(const SteeringSource& model, const RunConfig& cfg, const ProcessSpec& spec,
                               const MixtureTarget& target) {
  return score_error(target, model, spec, cfg.get_uint("eval.score_points"),
                     derive_seed(cfg.get_uint("seed"), streams::score), cfg.get_double("train.time_margin"));
}

inline std::vector<std::string> metric_header() {
  return {"sw", "sw_se", "baseline", "baseline_se", "sw_ratio", "mode_fraction", "score_error", "score_error_se"};
}

inline std::vector<std::string> metric_cells(const Metrics& m) {
  return {format_double(m.comparison.sw.value),
          format_double(m.comparison.sw.standard_error),
          format_double(m.comparison.baseline.value),
          format_double(m.comparison.baseline.standard_error),
          format_double(m.comparison.sw.value / m.comparison.baseline.value),
          format_double(m.mode_fraction),
          format_double(m.score_error.value),
          format_double(m.score_error.standard_error)};
}

/// evaluate: metrics.csv for eval.samples (default <out>/samples.csv). The score
/// error column is filled when eval.checkpoint names a network.
inline void cmd_evaluate(const RunConfig& cfg) {
  const auto spec = build_spec(cfg);
  const auto target = build_target(cfg, spec);
  const auto dir = cli_detail::out_dir(cfg);
  std::filesystem::path path = cfg.get("eval.samples");
  if (path.empty()) path = dir / "samples.csv";
  const Matrix samples = read_matrix_csv(path);
  Metrics m = evaluate_samples(samples, cfg, spec, target);
  if (const auto& ckpt = cfg.get("eval.checkpoint"); !ckpt.empty()) {
    m.score_error = score_error_of(NetworkSteering(load_network(ckpt, spec), spec.horizon()), cfg, spec, target);
  }
  auto header = metric_header();
  header.insert(header.begin(), "n");
  auto cells = metric_cells(m);
  cells.insert(cells.begin(), std::to_string(samples.rows()));
  write_csv(dir / "metrics.csv", header, {cells});
  write_run_files(dir, cfg, "evaluate", {{"samples", path.string()}});
}

/// One sweep cell: optionally train, then generate and evaluate.
struct CellResult {
  Metrics metrics;
  double seconds = 0.0;
};

inline CellResult run_cell(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto spec = build_spec(cfg);
  const auto target = build_target(cfg, spec);
  const auto scfg = build_sampler_config(cfg);
  const auto& kind = cfg.get("sampler.steering");
  std::unique_ptr<SteeringSource> steer;
  if (kind == "network") {
    const auto out = train_network(cfg, spec, target);
    if (out.result.aborted) throw NumericError("training aborted: " + out.result.abort_reason);
    steer = std::make_unique<NetworkSteering>(out.net, spec.horizon());
  } else if (kind == "analytic") {
    steer = std::make_unique<AnalyticSteering>(target, spec);
  } else {
    throw UsageError("sampler.steering: expected analytic or network, got '" + kind + "'");
  }
  const auto n = cfg.get_uint("sampler.n");
  if (n == 0) throw UsageError("sampler.n must be positive");
  CellResult r;
  r.metrics = evaluate_samples(generate(spec, *steer, n, scfg).samples, cfg, spec, target);
  r.metrics.score_error = score_error_of(*steer, cfg, spec, target);
  r.seconds = cli_detail::seconds_since(start);
  return r;
}

/// Applies a named schedule preset: fcn is constant beta = schedule.beta,
/// fns is the reversed linear schedule beta0 -> beta1.
inline void apply_schedule_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "fcn") {
    cfg.set("schedule.kind", "constant");
  } else if (preset == "fns") {
    cfg.set("schedule.kind", "linear");
    cfg.set("schedule.reversed", "true");
  } else {
    throw UsageError("sweep.schedule: expected fcn or fns, got '" + preset + "'");
  }
}

struct SweepCell {
  std::vector<std::string> labels;  // D, T, K, L, schedule
  RunConfig config;
};

/// Cartesian product of the sweep axes in the order D, T, K, L, schedule; the
/// last axis varies fastest. Axes left empty keep the base value.
inline std::vector<SweepCell> sweep_grid(const RunConfig& base) {
  const std::vector<std::pair<std::string, std::string>> axes = {{"sweep.D", "process.D"},
                                                                 {"sweep.T", "process.T"},
                                                                 {"sweep.K", "sampler.K"},
                                                                 {"sweep.L", "sampler.L"},
                                                                 {"sweep.schedule", ""}};
  std::vector<std::vector<std::string>> values;
  bool any = false;
  for (const auto& [axis, key] : axes) {
    auto v = base.get_list(axis);
    any = any || !v.empty();
    if (v.empty()) v.push_back(key.empty() ? "" : base.get(key));
    values.push_back(std::move(v));
  }
  if (!any) throw UsageError("sweep: empty grid; set at least one of sweep.D, sweep.T, sweep.K, sweep.L, sweep.schedule");

  std::vector<SweepCell> cells;
  std::vector<std::size_t> idx(axes.size(), 0);
  const Seed root = derive_seed(base.get_uint("seed"), streams::sweep);
  while (true) {
    SweepCell cell{{}, base};
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& v = values[a][idx[a]];
      cell.labels.push_back(v.empty() ? cell.config.get("schedule.kind") : v);
      if (v.empty()) continue;
      if (axes[a].second.empty()) {
        apply_schedule_preset(cell.config, v);
      } else {
        cell.config.set(axes[a].second, v);
      }
    }
    cell.config.set("seed", std::to_string(derive_seed(root, cells.size())));
    cells.push_back(std::move(cell));
    std::size_t a = axes.size();
    while (a > 0 && ++idx[a - 1] == values[a - 1].size()) idx[--a] = 0;
    if (a == 0) break;
  }
  return cells;
}

/// Worker count: DOOBGEN_THREADS if set, else the hardware concurrency.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DOOBGEN_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw UsageError("DOOBGEN_THREADS must be a positive integer, got '" + std::string(env) + "'");
    n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// sweep: sweep.csv with one row per grid cell, in grid order.
inline void cmd_sweep(const RunConfig& cfg) {
  const auto cells = sweep_grid(cfg);
  for (const auto& c : cells) {
    build_spec(c.config);  // fail fast on bad axis values
    build_sampler_config(c.config);
  }
  const auto dir = cli_detail::out_dir(cfg);
  std::vector<CellResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      try {
        results[i] = run_cell(cells[i].config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t workers = worker_count(cells.size());
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto header = std::vector<std::string>{"cell", "D", "T", "K", "L", "schedule", "seed"};
  for (auto& h : metric_header()) header.push_back(h);
  header.push_back("wall_seconds");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (const auto& l : cells[i].labels) row.push_back(l);
    row.push_back(cells[i].config.get("seed"));
    for (auto& c : metric_cells(results[i].metrics)) row.push_back(c);
    row.push_back(format_double(results[i].seconds));
    rows.push_back(std::move(row));
  }
  write_csv(dir / "sweep.csv", header, rows);
  write_run_files(dir, cfg, "sweep", {{"cells", cells.size()}, {"workers", workers}});
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "train", "generate", "evaluate", "sweep"};
  return names;
}

inline void run_command(const std::string& command, const RunConfig& cfg) {
  if (command == "simulate") return cmd_simulate(cfg);
  if (command == "train") return cmd_train(cfg);
  if (command == "generate") return cmd_generate(cfg);
  if (command == "evaluate") return cmd_evaluate(cfg);
  if (command == "sweep") return cmd_sweep(cfg);
  throw UsageError("unknown command '" + command + "'");
}

}  // namespace doobgen
