#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "starwave/error.hpp"
#include "starwave/evolution.hpp"
#include "starwave/graph.hpp"
#include "starwave/modulation.hpp"
#include "starwave/soliton.hpp"

namespace starwave {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct DecayFit {
  double t_lo = 0.0, t_hi = 0.0;
  double slope = 0.0, intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 0.0;
  double max_residual = 0.0;  // in log space
  int samples = 0;
};

/// Least squares of log(value) on log(t) over t in [t_lo, t_hi].
DecayFit fit_decay_exponent(std::span<const double> times, std::span<const double> values,
                            double t_lo, double t_hi);

/// Flat key = value configuration with dotted section names ("grid.M = 401").
/// Every experiment has a fixed key set with defaults; anything else is rejected.
class ExperimentConfig {
 public:
  static const std::vector<std::string>& experiments();
  static ExperimentConfig defaults(const std::string& experiment);

  const std::string& experiment() const { return experiment_; }

  /// '#' starts a comment; blank lines are skipped.
  void parse_text(const std::string& text);
  void parse_file(const std::filesystem::path& path);
  /// One "key=value" override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  /// Sorted "key = value" lines; the hash is FNV-1a 64 of this text.
  std::string canonical() const;
  std::uint64_t hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string experiment_;
  std::map<std::string, std::string> values_;
};

/// "1:-1,2:0.5" -> F(xi) = -xi + 0.5 xi^2.
Nonlinearity parse_nonlinearity(const std::string& text);

/// The run's random stream: std::mt19937_64 with doubles taken from the top 53 bits.
class SeededRandom {
 public:
  explicit SeededRandom(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 gen_;
};

/// Soliton plus eps times the configured even perturbation, Kirchhoff-corrected.
struct PerturbedSoliton {
  GraphFunction u0;
  GraphFunction chi0;
  double norm = 0.0;  // || (1 + x^2) chi0 ||_2 + || chi0' ||_2
};
PerturbedSoliton perturbed_soliton(const ExperimentConfig& cfg, double eps);

/// Evolution settings of the modulate/limit/evolve experiments.
EvolutionConfig evolution_config(const ExperimentConfig& cfg);

struct ScalingReport {
  std::vector<double> eps;
  std::vector<double> m1, m2, m12, rates;  // time means along each run
  double exponent_m1 = 0, exponent_m2 = 0, exponent_m12 = 0, exponent_rates = 0;
  double max_ortho_residual = 0.0;
};
/// Runs eps_levels plus an eps = 0 baseline whose rates are subtracted pointwise.
ScalingReport modulation_scaling(const ExperimentConfig& cfg, std::span<const double> eps_levels);

struct LimitReport {
  LimitTrajectory limit;
  double norm = 0.0;
  double defect_slope = 0.0;  // log-log slope of |sigma - sigma_plus| t on the window
  double defect_window_max = 0.0;
  bool bounded = false;
  double free_defect = 0.0;
  double free_defect_threshold = 0.0;
  double max_ortho_residual = 0.0;
  ModulationTrack track;
};
LimitReport limit_rehearsal(const ExperimentConfig& cfg);

struct RunResult {
  int exit_code = 0;
  std::string summary;                      // short human-readable lines
  std::vector<std::string> artifacts;       // file names relative to the out dir
  nlohmann::json tolerances = nlohmann::json::object();
};

/// Runs one experiment and writes its artifacts plus manifest.json into out_dir.
/// Failures are written to error.json and mapped onto exit codes 2/3/4.
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

int exit_code_for(ErrorKind kind);

}  // namespace starwave
