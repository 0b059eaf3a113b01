#pragma once

// Experiment configuration: an INI file with the sections
// [experiment] [run] [model] [grid] [fp] [study], plus key=value
// overrides from the command line. Every key has a default that may
// depend on the experiment id; unknown keys are rejected.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsmcsg/dsmc.hpp"
#include "dsmcsg/error.hpp"
#include "dsmcsg/fokker_planck.hpp"
#include "dsmcsg/models.hpp"

namespace dsmcsg::app {

/// Parse failure with the offending line (0 when unknown).
class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(const std::string& msg, unsigned long line)
      : ConfigError(line ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
  unsigned long line() const noexcept { return line_; }

 private:
  unsigned long line_;
};

enum class Experiment { test1, test2, test3, spectral, mc_rate, bounds };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

struct ExperimentConfig {
  Experiment experiment = Experiment::test1;
  std::string output_dir;
  int threads = 0;
  bool write_log = false;

  // [run]
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::vector<int> orders;
  std::vector<int> nq;  // empty: order + 1
  double dt = 0.0;      // <= 0: model default (eps/10 or eps)
  double t_final = 0.0;
  AcceptanceMode mode = AcceptanceMode::indicator;
  double beta = 1.0;
  bool rescale = false;
  RescaleForm rescale_form = RescaleForm::variance_matching;
  std::size_t record_every = 1;
  bool strict_step = false;
  double init_lo = 0.0;
  double init_hi = 2.0;

  // [model]
  ModelKind model = ModelKind::gambling;
  double kappa = 1.0;
  double delta_offset = 0.0;
  double delta_slope = 0.5;
  double lambda = 0.5;
  double sigma2 = 0.5;
  std::vector<double> epsilons;
  double w_a = 0.9;
  double w_b = 1.1;
  std::vector<double> rhos;
  double mu_offset = 1.0;
  double mu_slope = 2.0;
  double alpha_offset = 0.0;
  double alpha_slope = 2.0;
  double a = -1.0;
  double c = -1.0;

  // [grid]
  double v_min = 0.0;
  double v_max = 10.0;
  double dv = 0.05;
  double l1_lo = 0.0;
  double l1_hi = 10.0;
  double out_of_range_limit = 1e-3;

  // [fp]
  bool fp_enabled = false;
  double fp_v_min = 0.0;
  double fp_v_max = 10.0;
  double fp_dv = 0.05;
  double fp_dt = 0.0;  // <= 0: dv / 2
  double fp_t_final = 40.0;
  double fp_output_every = 0.1;

  // [study]
  std::vector<int> study_orders;
  int reference_order = 50;
  std::vector<std::size_t> sizes;
  std::size_t repetitions = 20;
  std::vector<int> alpha_cases;
  double min_decades = 3.0;
  double max_plateau_decades = 1.0;
  double l1_tolerance = 0.05;
  double variance_tolerance = 0.05;
  double variance_law_tolerance = 0.1;
  double slope_target = -0.5;
  double slope_tolerance = 0.1;
  double bound_fraction = 0.01;

  /// Resolved "section.key" -> value, in schema order.
  std::vector<std::pair<std::string, std::string>> resolved;

  std::size_t dims() const noexcept { return orders.size(); }
  RandomParamSpec param_spec() const { return RandomParamSpec::unit_cube(dims()); }
  GpcBasis basis() const;
  GpcBasis basis_with_order(int order) const;

  GamblingParams gambling_params() const;
  WealthParams wealth_params(double epsilon) const;
  TrafficParams traffic_params(double rho, double epsilon) const;
  /// Builds the configured model on `basis` (first epsilon / rho).
  ModelSpec build_model(const GpcBasis& basis, double epsilon, double rho) const;

  CollisionConfig collision_config(double epsilon) const;
  InitialDensity initial_density() const { return InitialDensity::uniform(init_lo, init_hi); }

  /// Resolved configuration as INI text (defaults included).
  std::string to_ini() const;
  /// FNV-1a over the keys that affect results (not output_dir or
  /// threads), as 16 hex digits.
  std::string hash() const;
};

/// Reads `path` (may be empty when every required key comes from
/// overrides), applies "section.key=value" overrides and fills defaults.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});

/// Checks every referenced parameter against the model invariants at
/// the quadrature nodes it will run on. Throws ConfigError.
void validate_config(const ExperimentConfig& cfg);

std::uint64_t fnv1a(const std::string& s);

}  // namespace dsmcsg::app
