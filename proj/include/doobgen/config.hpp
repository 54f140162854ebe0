#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/io.hpp"

namespace doobgen {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every recognised key with its default. Defaults describe the FNS benchmark
/// at D = 16, T = 0.2.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "root seed; every random stream is derived from it"},
      {"out", "run", "output directory"},
      {"process.D", "16", "truncation dimension"},
      {"process.T", "0.2", "noising horizon"},
      {"process.gamma", "0.5", "A = C^-gamma / 2, Q = C^(1-gamma); gamma in (0, 1]"},
      {"spectrum.kind", "matern", "matern | power"},
      {"spectrum.sigma0_sq", "1000", "Matern variance"},
      {"spectrum.rho0", "0.005", "Matern length scale"},
      {"spectrum.nu0", "1", "Matern smoothness"},
      {"spectrum.c1", "1", "power spectrum: c_j = c1 j^-decay"},
      {"spectrum.decay", "2", "power spectrum decay, > 1"},
      {"schedule.kind", "linear", "constant | linear | cosine"},
      {"schedule.beta", "10", "constant schedule value"},
      {"schedule.beta0", "0.1", "linear schedule start"},
      {"schedule.beta1", "20", "linear schedule end"},
      {"schedule.reversed", "true", "use beta(T - t)"},
      {"mixture.alpha", "0.1", "weight of the +u component, in (0, 1]"},
      {"mixture.mean_scale", "1", "multiplier on the benchmark mean function"},
      {"net.hidden", "0", "hidden width; 0 picks max(64, 2D)"},
      {"net.blocks", "0", "residual blocks; 0 picks 3 (D <= 128) or 4"},
      {"net.embed", "32", "time embedding size, even"},
      {"train.iterations", "2000", "optimiser steps"},
      {"train.batch", "256", "batch size"},
      {"train.lr", "0.001", "Adam learning rate"},
      {"train.lr_schedule", "constant", "constant | cosine"},
      {"train.clip", "10", "global gradient-norm clip; 0 disables"},
      {"train.time_margin", "0.0001", "t ~ U(0, T - margin)"},
      {"train.weighting", "b_star", "b_star | unit"},
      {"train.diagnostic_every", "500", "score-error diagnostic period"},
      {"train.diagnostic_points", "2048", "bridge points per diagnostic"},
      {"train.data", "", "CSV of target samples; empty uses the analytic mixture"},
      {"sampler.steering", "analytic", "analytic | network"},
      {"sampler.checkpoint", "", "checkpoint for network steering"},
      {"sampler.n", "5000", "number of generated samples"},
      {"sampler.K", "250", "IEM steps"},
      {"sampler.L", "50", "Langevin steps"},
      {"sampler.delta", "0.1", "Langevin step size"},
      {"eval.samples", "", "samples CSV; empty uses <out>/samples.csv"},
      {"eval.checkpoint", "", "checkpoint for the score-error diagnostic"},
      {"eval.reference_n", "5000", "size of each fresh target set"},
      {"eval.repeats", "5", "independent target sets averaged over"},
      {"eval.slices", "128", "sliced Wasserstein directions"},
      {"eval.order", "2", "Wasserstein order, 1 or 2"},
      {"eval.score_points", "2048", "bridge points for the score error"},
      {"simulate.kind", "target", "target | forward | bridge"},
      {"simulate.n", "100", "number of samples or paths"},
      {"simulate.steps", "10", "time points per path"},
      {"sweep.D", "", "comma list of D values"},
      {"sweep.T", "", "comma list of horizons"},
      {"sweep.K", "", "comma list of IEM step counts"},
      {"sweep.L", "", "comma list of Langevin step counts"},
      {"sweep.schedule", "", "comma list of fcn | fns"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    const auto& keys = config_keys();
    return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.name; });
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Flat key=value lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FileError("cannot open config file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
  }

  std::uint64_t get_uint(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      if (!v.empty() && v[0] != '-') {
        const auto n = std::stoull(v, &used);
        if (used == v.size()) return n;
      }
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }

  bool get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config key '" + key + "': expected true or false, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    const auto& v = get(key);
    std::vector<std::string> out;
    if (v.empty()) return out;
    for (auto& s : split(v)) out.push_back(trim(s));
    return out;
  }

  /// Every key, sorted, one key=value per line.
  std::string echo() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace doobgen
