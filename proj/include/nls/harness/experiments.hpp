#pragma once

#include <array>
#include <memory>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "nls/harness/config.hpp"
#include "nls/harness/emit.hpp"
#include "nls/potential.hpp"
#include "nls/propagate.hpp"

namespace nls::harness {

std::shared_ptr<const Mesh> make_mesh(const ExperimentConfig& cfg, const std::array<int, 2>& cells);
/// Builtin model for cfg.potential_tag; kl_gaussian is built on the given mesh.
std::shared_ptr<const PotentialModel> make_model(const ExperimentConfig& cfg, const Mesh& mesh);
/// amplitude * exp(-width |x - center|^2).
ComplexFunction initial_function(const ExperimentConfig& cfg);
/// cfg.xi when given, otherwise the zero vector (the mean potential).
Eigen::VectorXd default_xi(const ExperimentConfig& cfg, const PotentialModel& model);

/// One time integration problem.
struct SolveSpec {
  Scheme scheme = Scheme::SI;
  SpaceKind space = SpaceKind::FEM;
  std::array<int, 2> cells{0, 0};
  int ratio = 1;
  double dt = 1e-3;
  double lambda = 0.0;
  int cadence = 0;
  bool record_energy = false;
  bool record_moment = false;
};

struct SolveResult {
  std::shared_ptr<const Discretization> space;
  Eigen::VectorXcd state;
  Eigen::VectorXcd fine;
  ObservableSeries series;
  /// Non-empty when the requested space was replaced (2D FEM SI above the dense limit).
  std::string note;
};

/// Operators, basis and coarse matrices for one potential sample.
std::shared_ptr<const Discretization> make_space(const ExperimentConfig& cfg, Scheme scheme, SpaceKind space,
                                                 std::shared_ptr<const Mesh> mesh, int ratio,
                                                 const PotentialSample& v);

SolveResult solve(const ExperimentConfig& cfg, const SolveSpec& spec, std::shared_ptr<const Mesh> mesh,
                  const PotentialSample& v);
/// Same, reusing a prepared space.
SolveResult solve_in(const ExperimentConfig& cfg, const SolveSpec& spec, std::shared_ptr<const Discretization> space,
                     const PotentialSample& v);

/// Geometric decay ratio fitted to a tail-energy profile, over the layers
/// before the profile reaches round-off.
double fit_decay_ratio(const std::vector<double>& tails);

/// Runs the experiment, writes every output file and the manifest into out,
/// and returns the summary (also written as summary.json). On failure the
/// files written so far are removed and the error is rethrown naming the stage.
nlohmann::json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace nls::harness
