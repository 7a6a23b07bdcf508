#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nls/mesh.hpp"
#include "nls/msbasis.hpp"
#include "nls/potential.hpp"
#include "nls/propagate.hpp"

namespace nls::harness {

/// Sectioned key = value text as read from disk, before interpretation.
struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
};

RawConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");
RawConfig load_config(const std::string& path);
/// Applies "section.key=value".
void apply_override(RawConfig& raw, const std::string& assignment);

/// Arithmetic on numbers and the constant pi: + - * / ^ and parentheses.
double eval_expression(const std::string& text);
/// Whitespace- or comma-separated list of expressions.
std::vector<double> eval_list(const std::string& text);

struct ExperimentConfig {
  std::string kind;

  // domain
  int dimension = 1;
  Point lower{0.0, 0.0};
  Point upper{1.0, 1.0};
  std::array<int, 2> cells{1024, 1};

  // physics
  double eps = 1.0 / 16.0;
  double lambda = 0.0;
  double T = 1.0;
  double dt = 1e-3;

  // initial condition: amplitude * exp(-width |x - center|^2)
  Point initial_center{0.0, 0.0};
  double initial_width = 20.0;
  double initial_amplitude = 1.0;

  // scheme and space
  std::vector<Scheme> schemes{Scheme::SI};
  SpaceKind space = SpaceKind::FEM;
  int ratio = 6;
  Compression compression = Compression::L2;
  Normalization normalization = Normalization::CoarseMass;
  /// Node count above which 2D FEM SI falls back to the multiscale space.
  int dense_node_limit = 4096;

  // potential
  std::string potential_tag = "harmonic";
  PotentialParams potential_params;
  KernelSpec kernel;
  int kl_modes = 0;
  std::vector<double> xi;

  // sampling
  std::string sampling_method = "qmc";
  std::int64_t samples = 64;
  int shifts = 1;
  int replicates = 8;
  std::uint64_t seed = 20240601;
  std::int64_t generator = 1571;
  std::string vector_file;

  // reference
  std::array<int, 2> ref_cells{0, 0};
  double ref_dt = 1e-4;
  std::int64_t ref_samples = 8192;

  // study ladders
  std::vector<int> study_cells;
  std::vector<int> study_coarse_cells;
  std::vector<double> study_dt;
  std::vector<std::int64_t> study_samples;
  std::vector<double> study_lambdas;

  // output cadence in steps (0: final state only)
  int cadence = 0;

  // pod
  int pod_Q = 200;
  int pod_mp = 3;
  std::int64_t pod_online = 800;
  int pod_fem_samples = 4;

  // basis diagnostics
  int basis_node = -1;
  int basis_layers = 8;

  int workers = 1;

  /// Echo of the interpreted configuration in canonical key order.
  std::map<std::string, std::string> echo;

  int steps() const;
};

/// Interprets and validates a raw configuration. Every key must be consumed;
/// leftovers raise ConfigError. kind_override replaces experiment.kind when non-empty.
ExperimentConfig build_experiment_config(const RawConfig& raw, const std::string& kind_override = "");

const std::set<std::string>& experiment_kinds();

}  // namespace nls::harness
