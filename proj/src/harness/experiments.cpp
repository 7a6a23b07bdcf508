#include "nls/harness/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "nls/errors.hpp"
#include "nls/fem.hpp"
#include "nls/mesh.hpp"
#include "nls/msbasis.hpp"
#include "nls/observables.hpp"
#include "nls/parallel.hpp"
#include "nls/podreduce.hpp"
#include "nls/sampling.hpp"

namespace nls::harness {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string scheme_tag(Scheme s) { return s == Scheme::SI ? "si" : "sii"; }
std::string scheme_name(Scheme s) { return s == Scheme::SI ? "SI" : "SII"; }

Point midpoint(const ExperimentConfig& cfg) {
  return {0.5 * (cfg.lower[0] + cfg.upper[0]), 0.5 * (cfg.lower[1] + cfg.upper[1])};
}

std::array<int, 2> square_cells(const ExperimentConfig& cfg, int n) { return {n, cfg.dimension == 2 ? n : 1}; }

int steps_for(double T, double dt) { return static_cast<int>(std::lround(T / dt)); }

/// Progress label shared with the failure handler.
struct Stage {
  std::string name = "setup";
  void enter(std::string s) {
    name = std::move(s);
    spdlog::info("stage: {}", name);
  }
};

json slope_json(const std::vector<ConvergenceRow>& rows) {
  std::vector<double> x, l2, h1;
  for (const auto& r : rows) {
    x.push_back(r.abscissa);
    l2.push_back(r.l2_error);
    h1.push_back(r.h1_error);
  }
  json j;
  auto one = [&](const std::vector<double>& e, const char* key) {
    try {
      const SlopeFit f = fit_slope(x, e);
      j[key] = {{"slope", f.slope}, {"residual", f.residual}};
    } catch (const std::domain_error& err) {
      j[key] = {{"slope", nullptr}, {"note", err.what()}};
    }
  };
  if (rows.size() >= 3) {
    one(l2, "l2");
    one(h1, "h1");
  }
  return j;
}

/// Header and rows "x[,y],<column>" for a nodal vector.
void write_nodal(OutputDir& out, const std::string& name, const Mesh& mesh, const std::string& column,
                 const Eigen::VectorXd& values) {
  std::vector<std::vector<double>> rows;
  rows.reserve(values.size());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Point& p = mesh.node(i);
    if (mesh.dimension() == 1) rows.push_back({p[0], values(i)});
    else rows.push_back({p[0], p[1], values(i)});
  }
  out.write_csv(name, (mesh.dimension() == 1 ? "x," : "x,y,") + column, rows);
}

double real_norm(const Eigen::VectorXd& v, const AssembledOperators& ops, NormKind kind) {
  return norm(v.cast<cplx>(), ops, kind);
}

std::int64_t korobov_generator(const ExperimentConfig& cfg, std::int64_t N) {
  const std::int64_t a = cfg.generator % N;
  if (a == 0) throw ConfigError("sampling.generator is a multiple of the lattice size " + std::to_string(N));
  return a;
}

std::vector<std::int64_t> generating_vector(const ExperimentConfig& cfg, int m, std::int64_t N) {
  if (!cfg.vector_file.empty()) {
    int fm = 0;
    std::int64_t fN = 0;
    auto z = read_vector_file(cfg.vector_file, fm, fN);
    if (fN != N) throw ConfigError("sampling.vector_file is for N = " + std::to_string(fN) + ", need " + std::to_string(N));
    if (fm < m) throw ConfigError("sampling.vector_file has fewer components than the potential has modes");
    z.resize(m);
    return z;
  }
  return korobov_vector(m, N, korobov_generator(cfg, N));
}

Eigen::MatrixXd counter_points(std::uint64_t seed, std::int64_t N, int m) {
  Eigen::MatrixXd pts(N, m);
  for (std::int64_t i = 0; i < N; ++i) {
    for (int j = 0; j < m; ++j) pts(i, j) = counter_uniform(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
  }
  return pts;
}

SolveSpec base_spec(const ExperimentConfig& cfg, Scheme scheme) {
  SolveSpec s;
  s.scheme = scheme;
  s.space = cfg.space;
  s.cells = cfg.cells;
  s.ratio = cfg.ratio;
  s.dt = cfg.dt;
  s.lambda = cfg.lambda;
  s.cadence = cfg.cadence;
  return s;
}

// ---------------------------------------------------------------- simulate

json run_simulate(const ExperimentConfig& cfg, OutputDir& out, Stage& stage) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const PotentialSample v = sample(model, default_xi(cfg, *model));

  json summary;
  for (Scheme s : cfg.schemes) {
    stage.enter("simulate " + scheme_name(s));
    SolveSpec spec = base_spec(cfg, s);
    spec.cadence = cfg.cadence > 0 ? cfg.cadence : std::max(1, cfg.steps());
    spec.record_energy = true;
    spec.record_moment = true;
    const SolveResult res = solve(cfg, spec, mesh, v);

    const auto& ser = res.series;
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < ser.t.size(); ++k) rows.push_back({ser.t[k], ser.mass[k], ser.energy[k], ser.second_moment[k]});
    const std::string tag = scheme_tag(s);
    out.write_csv("series_" + tag + ".csv", "t,mass,energy,second_moment", rows);
    write_nodal(out, "density_final_" + tag + ".csv", *mesh, "density", nodal_density(res.fine));

    double mass_drift = 0.0, energy_drift = 0.0;
    for (std::size_t k = 0; k < ser.t.size(); ++k) {
      mass_drift = std::max(mass_drift, std::abs(ser.mass[k] - ser.mass[0]) / ser.mass[0]);
      energy_drift = std::max(energy_drift, std::abs(ser.energy[k] - ser.energy[0]) / std::abs(ser.energy[0]));
    }
    json j = {{"steps", cfg.steps()},
              {"space", res.space->kind() == SpaceKind::FEM ? "fem" : "msfem"},
              {"initial_mass", ser.mass.front()},
              {"final_mass", ser.mass.back()},
              {"max_relative_mass_drift", mass_drift},
              {"max_relative_energy_drift", energy_drift},
              {"final_second_moment", ser.second_moment.back()}};
    if (!res.note.empty()) j["note"] = res.note;
    summary[tag] = j;
  }
  return summary;
}

// ---------------------------------------------------------- converge-space

json run_converge_space_fem(const ExperimentConfig& cfg, OutputDir& out, Stage& stage) {
  stage.enter("potential");
  auto ref_mesh = make_mesh(cfg, cfg.ref_cells);
  auto model = make_model(cfg, *ref_mesh);
  const PotentialSample v = sample(model, default_xi(cfg, *model));
  if (cfg.dimension == 2 && cfg.ref_cells[0] != cfg.ref_cells[1]) {
    throw ConfigError("2D space studies need a square reference mesh");
  }

  json summary;
  summary["reference"] = {{"cells", cfg.ref_cells[0]}, {"h", ref_mesh->h()}, {"dt", cfg.ref_dt}};
  for (Scheme s : cfg.schemes) {
    stage.enter("reference " + scheme_name(s));
    SolveSpec rs = base_spec(cfg, s);
    rs.space = SpaceKind::FEM;
    rs.cells = cfg.ref_cells;
    rs.dt = cfg.ref_dt;
    rs.cadence = 0;
    const SolveResult ref = solve(cfg, rs, ref_mesh, v);

    // Primary rows: U_h - I_h(reference) in the study mesh norms (nodal restriction of the
    // reference). Prolonged rows: the study field lifted to the reference mesh, whose H1 part
    // is bounded below by the O(h) interpolation error of the solution itself.
    std::vector<ConvergenceRow> rows, prolonged;
    for (int n : cfg.study_cells) {
      stage.enter("study " + scheme_name(s) + " cells " + std::to_string(n));
      auto mesh = make_mesh(cfg, square_cells(cfg, n));
      SolveSpec ss = rs;
      ss.cells = square_cells(cfg, n);
      ss.dt = cfg.dt;
      const SolveResult res = solve(cfg, ss, mesh, v);
      auto pair = build_mesh_pair(ref_mesh, cfg.ref_cells[0] / n);
      Eigen::VectorXcd restricted(mesh->num_nodes());
      for (int i = 0; i < mesh->num_nodes(); ++i) restricted(i) = ref.fine(pair->coarse_to_fine[i]);
      const AssembledOperators& study = res.space->fine();
      rows.push_back({mesh->h(), error_between(res.fine, restricted, study, nullptr, NormKind::L2),
                      error_between(res.fine, restricted, study, nullptr, NormKind::H1)});
      prolonged.push_back({mesh->h(), error_between(ref.fine, res.fine, ref.space->fine(), pair.get(), NormKind::L2),
                           error_between(ref.fine, res.fine, ref.space->fine(), pair.get(), NormKind::H1)});
    }
    out.write_convergence("convergence_" + scheme_tag(s) + ".csv", rows);
    out.write_convergence("convergence_" + scheme_tag(s) + "_prolonged.csv", prolonged);
    json j = slope_json(rows);
    j["prolonged"] = slope_json(prolonged);
    if (!ref.note.empty()) j["note"] = ref.note;
    summary[scheme_tag(s)] = j;
  }
  return summary;
}

json run_converge_space_msfem(const ExperimentConfig& cfg, OutputDir& out, Stage& stage) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const PotentialSample v = sample(model, default_xi(cfg, *model));
  if (cfg.dimension == 2 && cfg.cells[0] != cfg.cells[1]) throw ConfigError("2D space studies need a square fine mesh");

  json summary;
  summary["reference"] = {{"cells", cfg.cells[0]}, {"h", mesh->h()}, {"dt", cfg.ref_dt}};
  for (Scheme s : cfg.schemes) {
    stage.enter("reference " + scheme_name(s));
    SolveSpec rs = base_spec(cfg, s);
    rs.space = SpaceKind::FEM;
    rs.dt = cfg.ref_dt;
    rs.cadence = 0;
    const SolveResult ref = solve(cfg, rs, mesh, v);
    const AssembledOperators& fine = ref.space->fine();

    std::vector<ConvergenceRow> fine_rows, coarse_rows;
    json ratios = json::array();
    for (int n : cfg.study_coarse_cells) {
      stage.enter("study " + scheme_name(s) + " coarse cells " + std::to_string(n));
      const int ratio = cfg.cells[0] / n;
      auto space = make_space(cfg, s, SpaceKind::MsFEM, mesh, ratio, v);
      SolveSpec ss = rs;
      ss.space = SpaceKind::MsFEM;
      ss.ratio = ratio;
      ss.dt = cfg.dt;
      const SolveResult res = solve_in(cfg, ss, space, v);

      const MeshPair& pair = *space->basis()->pair;
      const double H = pair.coarse->h();
      fine_rows.push_back({H, error_between(ref.fine, res.fine, fine, nullptr, NormKind::L2),
                           error_between(ref.fine, res.fine, fine, nullptr, NormKind::H1)});
      // Coarse-space error: Clement coefficients of the computed and reference fields, compared as coarse P1 functions.
      const Eigen::VectorXcd diff = clement_interpolate(res.fine, pair, fine) - clement_interpolate(ref.fine, pair, fine);
      const Eigen::VectorXcd lifted = pair.prolongation.cast<cplx>() * diff;
      coarse_rows.push_back({H, norm(lifted, fine, NormKind::L2), norm(lifted, fine, NormKind::H1)});
      ratios.push_back({{"H", H}, {"fine_over_coarse_l2", fine_rows.back().l2_error / coarse_rows.back().l2_error}});
    }
    out.write_convergence("convergence_" + scheme_tag(s) + "_fine.csv", fine_rows);
    out.write_convergence("convergence_" + scheme_tag(s) + "_coarse.csv", coarse_rows);
    summary[scheme_tag(s)] = {{"fine", slope_json(fine_rows)}, {"coarse", slope_json(coarse_rows)}, {"ratios", ratios}};
  }
  return summary;
}

// ----------------------------------------------------------- converge-time

json run_converge_time(const ExperimentConfig& cfg, OutputDir& out, Stage& stage) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const PotentialSample v = sample(model, default_xi(cfg, *model));

  json summary;
  summary["spatial"] = {{"cells", cfg.cells[0]}, {"h", mesh->h()}, {"reference_dt", cfg.ref_dt}};
  for (Scheme s : cfg.schemes) {
    stage.enter("space " + scheme_name(s));
    auto space = make_space(cfg, s, cfg.space, mesh, cfg.ratio, v);
    SolveSpec rs = base_spec(cfg, s);
    rs.cadence = 0;
    rs.dt = cfg.ref_dt;
    stage.enter("reference " + scheme_name(s));
    const SolveResult ref = solve_in(cfg, rs, space, v);

    std::vector<ConvergenceRow> rows;
    for (double dt : cfg.study_dt) {
      stage.enter("study " + scheme_name(s) + " dt " + format_number(dt));
      SolveSpec ss = rs;
      ss.dt = dt;
      const SolveResult res = solve_in(cfg, ss, space, v);
      rows.push_back({dt, error_between(ref.fine, res.fine, space->fine(), nullptr, NormKind::L2),
                      error_between(ref.fine, res.fine, space->fine(), nullptr, NormKind::H1)});
    }
    out.write_convergence("convergence_" + scheme_tag(s) + ".csv", rows);
    summary[scheme_tag(s)] = slope_json(rows);
  }
  return summary;
}

// -------------------------------------------------------- converge-samples

Integrand density_integrand(const ExperimentConfig& cfg, std::shared_ptr<const Mesh> mesh,
                            std::shared_ptr<const PotentialModel> model, Scheme scheme) {
  return [&cfg, mesh, model, scheme](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    const PotentialSample v = sample(model, map_unit_to_xi(u));
    auto space = make_space(cfg, scheme, cfg.space, mesh, cfg.ratio, v);
    SolveSpec spec = base_spec(cfg, scheme);
    spec.cadence = 0;
    return nodal_density(solve_in(cfg, spec, space, v).fine);
  };
}

json run_converge_samples(const ExperimentConfig& cfg, OutputDir& out, Stage& stage, json& timing) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const int m = model->m();
  if (m < 1) throw ConfigError("converge-samples needs a random potential (at least one mode)");
  const Scheme scheme = cfg.schemes.front();
  const Integrand F = density_integrand(cfg, mesh, model, scheme);
  const AssembledOperators ops = assemble(mesh, model->mean_function(), cfg.eps);

  stage.enter("reference density");
  auto t0 = Clock::now();
  const LatticeRule ref_rule = make_lattice(generating_vector(cfg, m, cfg.ref_samples), cfg.ref_samples, 1, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const Eigen::VectorXd reference = average_points(lattice_points(ref_rule, 1), F, cfg.workers, "reference");
  timing["reference_seconds"] = seconds_since(t0);
  write_nodal(out, "density_reference.csv", *mesh, "expected_density", reference);

  const std::int64_t n_max = *std::max_element(cfg.study_samples.begin(), cfg.study_samples.end());
  std::vector<std::int64_t> ladder = cfg.study_samples;
  std::sort(ladder.begin(), ladder.end());
  const int R = cfg.replicates;

  // One evaluation at n_max points per replicate; smaller N reuse an embedded subset.
  auto study = [&](const std::string& method, const std::function<Eigen::MatrixXd(int)>& points,
                   const std::function<std::vector<std::size_t>(std::int64_t)>& subset) {
    std::vector<double> sq_l2(ladder.size(), 0.0), sq_h1(ladder.size(), 0.0);
    auto t1 = Clock::now();
    for (int r = 1; r <= R; ++r) {
      stage.enter(method + " replicate " + std::to_string(r));
      const auto vals = evaluate_points(points(r), F, cfg.workers, method + " replicate " + std::to_string(r));
      for (std::size_t k = 0; k < ladder.size(); ++k) {
        std::vector<Eigen::VectorXd> sub;
        for (std::size_t idx : subset(ladder[k])) sub.push_back(vals[idx]);
        const Eigen::VectorXd diff = pairwise_mean(sub) - reference;
        sq_l2[k] += std::pow(real_norm(diff, ops, NormKind::L2), 2);
        sq_h1[k] += std::pow(real_norm(diff, ops, NormKind::H1), 2);
      }
    }
    timing[method + "_seconds"] = seconds_since(t1);
    std::vector<ConvergenceRow> rows;
    for (std::size_t k = 0; k < ladder.size(); ++k) {
      rows.push_back({static_cast<double>(ladder[k]), std::sqrt(sq_l2[k] / R), std::sqrt(sq_h1[k] / R)});
    }
    out.write_convergence("convergence_" + method + ".csv", rows);
    return slope_json(rows);
  };

  json summary = {{"reference_n", cfg.ref_samples}, {"replicates", R}, {"modes", m}};
  if (cfg.sampling_method == "qmc" || cfg.sampling_method == "both") {
    const LatticeRule rule = make_lattice(generating_vector(cfg, m, n_max), n_max, R, cfg.seed);
    summary["qmc"] = study(
        "qmc", [&](int r) { return lattice_points(rule, r); },
        [&](std::int64_t N) {
          // Points i * (n_max / N), i = 1..N, form the N-point lattice with the same shift.
          std::vector<std::size_t> idx;
          const std::int64_t stride = n_max / N;
          for (std::int64_t i = 1; i <= N; ++i) idx.push_back(static_cast<std::size_t>(i * stride - 1));
          return idx;
        });
  }
  if (cfg.sampling_method == "mc" || cfg.sampling_method == "both") {
    summary["mc"] = study(
        "mc",
        [&](int r) { return counter_points(cfg.seed + 7919ULL * static_cast<std::uint64_t>(r), n_max, m); },
        [&](std::int64_t N) {
          std::vector<std::size_t> idx(static_cast<std::size_t>(N));
          for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
          return idx;
        });
  }
  return summary;
}

// ------------------------------------------------------------------- basis

json run_basis(const ExperimentConfig& cfg, OutputDir& out, Stage& stage) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const PotentialSample v = sample(model, default_xi(cfg, *model));
  const AssembledOperators ops = assemble(mesh, v.function(), cfg.eps);
  auto pair = build_mesh_pair(mesh, cfg.ratio);

  stage.enter("basis");
  BasisOptions opt;
  opt.include_potential = cfg.schemes.front() == Scheme::SI;
  opt.normalization = cfg.normalization;
  const MultiscaleBasis basis = build_basis(ops, pair, opt);

  stage.enter("diagnostics");
  const Mesh& coarse = *pair->coarse;
  write_nodal(out, "basis_lambda.csv", coarse, "lambda", basis.lambda);

  int p = cfg.basis_node;
  if (p < 0) {
    const Point c = midpoint(cfg);
    double best = 1e300;
    for (int q = 0; q < coarse.num_nodes(); ++q) {
      const Point& x = coarse.node(q);
      const double d = std::hypot(x[0] - c[0], x[1] - c[1]);
      if (d < best - 1e-12) {
        best = d;
        p = q;
      }
    }
  }
  if (p >= coarse.num_nodes()) throw ConfigError("basis.node is out of range");
  const std::vector<double> tails = decay_profile(basis, p, cfg.basis_layers);
  std::vector<std::vector<double>> decay_rows;
  for (std::size_t l = 0; l < tails.size(); ++l) decay_rows.push_back({static_cast<double>(l), tails[l]});
  out.write_csv("basis_decay.csv", "layer,tail_energy", decay_rows);
  write_nodal(out, "basis_column.csv", *mesh, "phi", basis.C.col(p));

  // Energy orthogonality against a few pseudo-random detail-space functions.
  double orth = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd w(mesh->num_nodes());
    for (int i = 0; i < w.size(); ++i) w(i) = 2.0 * counter_uniform(cfg.seed, static_cast<std::uint64_t>(i), 1000 + trial) - 1.0;
    w = kernel_component(basis, w);
    const Eigen::VectorXd Aw = basis.A * w;
    const double wn = std::sqrt(std::abs(w.dot(Aw)));
    for (int q = 0; q < basis.C.cols(); ++q) {
      const Eigen::VectorXd phi = basis.C.col(q);
      const double pn = std::sqrt(std::abs(phi.dot(basis.A * phi)));
      if (pn > 0.0 && wn > 0.0) orth = std::max(orth, std::abs(phi.dot(Aw)) / (pn * wn));
    }
  }
  const Eigen::VectorXd ones = basis.C.rowwise().sum();
  const Eigen::VectorXd vn = nodal_values(*mesh, v.function());
  const double H = coarse.h();
  const double residual = constraint_residual(basis);

  json summary = {{"coarse_nodes", coarse.num_nodes()},
                  {"node", p},
                  {"constraint_residual", residual},
                  {"constraint_residual_relative", residual / basis.lambda.cwiseAbs().maxCoeff()},
                  {"energy_orthogonality_relative", orth},
                  {"partition_of_unity_deviation", (ones.array() - 1.0).abs().maxCoeff()},
                  {"potential_scale", vn.cwiseAbs().maxCoeff() * H * H / (cfg.eps * cfg.eps)},
                  {"decay_nonincreasing", std::is_sorted(tails.rbegin(), tails.rend())}};
  const double ratio = fit_decay_ratio(tails);
  if (std::isfinite(ratio)) summary["decay_ratio"] = ratio;
  else summary["decay_ratio"] = nullptr;
  return summary;
}

// --------------------------------------------------------------- pod-bench

json run_pod_bench(const ExperimentConfig& cfg, OutputDir& out, Stage& stage, json& timing) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const int m = model->m();
  if (m < 1) throw ConfigError("pod-bench needs a random potential (at least one mode)");
  auto pair = build_mesh_pair(mesh, cfg.ratio);
  const Scheme scheme = cfg.schemes.front();
  BasisOptions opt;
  opt.include_potential = scheme == Scheme::SI;
  opt.normalization = cfg.normalization;

  stage.enter("offline");
  const Eigen::MatrixXd off_u = counter_points(cfg.seed ^ 0x0ff1ea5eULL, cfg.pod_Q, m);
  std::vector<Eigen::VectorXd> off_xi;
  for (int i = 0; i < cfg.pod_Q; ++i) off_xi.push_back(map_unit_to_xi(off_u.row(i).transpose()));
  auto t0 = Clock::now();
  const PodBasisSet pod = offline_build(model, off_xi, pair, cfg.eps, cfg.pod_mp, opt, cfg.workers);
  const double offline_seconds = seconds_since(t0);

  const std::int64_t N = cfg.pod_online;
  const LatticeRule rule = make_lattice(generating_vector(cfg, m, N), N, 1, cfg.seed);
  const Eigen::MatrixXd pts = lattice_points(rule, 1);
  SolveSpec spec = base_spec(cfg, scheme);
  spec.space = SpaceKind::MsFEM;
  spec.cadence = 0;

  struct Timed {
    Eigen::VectorXd density;
    double basis_seconds = 0.0;
    double total_seconds = 0.0;
  };
  auto pipeline = [&](const std::string& label, bool use_pod, std::int64_t count) {
    std::vector<Timed> res(static_cast<std::size_t>(count));
    parallel_for(static_cast<std::size_t>(count), cfg.workers, [&](std::size_t i) {
      const auto start = Clock::now();
      const PotentialSample v = sample(model, map_unit_to_xi(pts.row(static_cast<Eigen::Index>(i)).transpose()));
      auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, v.function(), cfg.eps));
      const auto tb = Clock::now();
      auto basis = std::make_shared<const MultiscaleBasis>(use_pod ? online_build(pod, v) : build_basis(*ops, pair, opt));
      res[i].basis_seconds = seconds_since(tb);
      auto coarse = std::make_shared<const CoarseOperators>(project_operators(*basis, *ops));
      auto space = std::make_shared<const Discretization>(Discretization::msfem(ops, basis, coarse, cfg.compression));
      res[i].density = nodal_density(solve_in(cfg, spec, space, v).fine);
      res[i].total_seconds = seconds_since(start);
    });
    spdlog::info("{}: {} samples done", label, count);
    return res;
  };
  auto mean_density = [](const std::vector<Timed>& r) {
    std::vector<Eigen::VectorXd> d;
    for (const auto& x : r) d.push_back(x.density);
    return pairwise_mean(d);
  };
  auto mean_of = [](const std::vector<Timed>& r, double Timed::*field) {
    double s = 0.0;
    for (const auto& x : r) s += x.*field;
    return s / static_cast<double>(r.size());
  };

  stage.enter("online full");
  const auto full = pipeline("full multiscale", false, N);
  stage.enter("online pod");
  const auto reduced = pipeline("pod", true, N);

  stage.enter("fem timing");
  const std::int64_t n_fem = std::min<std::int64_t>(cfg.pod_fem_samples, N);
  std::vector<double> fem_seconds(static_cast<std::size_t>(n_fem));
  for (std::int64_t i = 0; i < n_fem; ++i) {
    const auto start = Clock::now();
    const PotentialSample v = sample(model, map_unit_to_xi(pts.row(i).transpose()));
    SolveSpec fs = spec;
    fs.space = SpaceKind::FEM;
    solve(cfg, fs, mesh, v);
    fem_seconds[static_cast<std::size_t>(i)] = seconds_since(start);
  }

  stage.enter("comparison");
  const AssembledOperators ops = assemble(mesh, model->mean_function(), cfg.eps);
  const Eigen::VectorXd rho_full = mean_density(full);
  const Eigen::VectorXd rho_pod = mean_density(reduced);
  write_nodal(out, "density_full.csv", *mesh, "expected_density", rho_full);
  write_nodal(out, "density_pod.csv", *mesh, "expected_density", rho_pod);
  const double deviation = real_norm(rho_pod - rho_full, ops, NormKind::L2) / real_norm(rho_full, ops, NormKind::L2);

  int retained_min = cfg.pod_mp, retained_max = 0;
  for (const auto& nb : pod.nodes) {
    retained_min = std::min<int>(retained_min, static_cast<int>(nb.modes.cols()));
    retained_max = std::max<int>(retained_max, static_cast<int>(nb.modes.cols()));
  }
  double fem_mean = 0.0;
  for (double t : fem_seconds) fem_mean += t;
  if (n_fem > 0) fem_mean /= static_cast<double>(n_fem);

  timing["offline_seconds"] = offline_seconds;
  timing["full_basis_seconds_per_sample"] = mean_of(full, &Timed::basis_seconds);
  timing["pod_basis_seconds_per_sample"] = mean_of(reduced, &Timed::basis_seconds);
  timing["full_total_seconds_per_sample"] = mean_of(full, &Timed::total_seconds);
  timing["pod_total_seconds_per_sample"] = mean_of(reduced, &Timed::total_seconds);
  timing["fem_total_seconds_per_sample"] = fem_mean;
  timing["fem_samples"] = n_fem;

  json summary = {{"Q", cfg.pod_Q},
                  {"m_p", cfg.pod_mp},
                  {"online_samples", N},
                  {"relative_l2_deviation", deviation},
                  {"retained_modes_min", retained_min},
                  {"retained_modes_max", retained_max}};
  out.write_json("pod_bench.json", summary);
  return summary;
}

// ------------------------------------------------------------ localization

json run_localization(const ExperimentConfig& cfg, OutputDir& out, Stage& stage, json& timing) {
  stage.enter("potential");
  auto mesh = make_mesh(cfg, cfg.cells);
  auto model = make_model(cfg, *mesh);
  const int m = model->m();
  const Scheme scheme = cfg.schemes.front();
  const int steps = cfg.steps();
  const int cadence = cfg.cadence > 0 ? cfg.cadence : std::max(1, steps / 200);

  std::vector<double> times{0.0};
  for (int n = 1; n <= steps; ++n) {
    if (n % cadence == 0 || n == steps) times.push_back(n * cfg.dt);
  }
  const std::size_t nt = times.size();
  const int nn = mesh->num_nodes();
  const std::vector<double>& lambdas = cfg.study_lambdas;

  // Per sample: one space, then every lambda; the result stacks A(t) and the final density per lambda.
  const Integrand F = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    const PotentialSample v = sample(model, m > 0 ? map_unit_to_xi(u) : Eigen::VectorXd());
    auto space = make_space(cfg, scheme, cfg.space, mesh, cfg.ratio, v);
    Eigen::VectorXd res(static_cast<Eigen::Index>(lambdas.size() * (nt + nn)));
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      SolveSpec spec = base_spec(cfg, scheme);
      spec.lambda = lambdas[k];
      spec.cadence = cadence;
      spec.record_moment = true;
      const SolveResult r = solve_in(cfg, spec, space, v);
      if (r.series.second_moment.size() != nt) throw std::logic_error("unexpected observable series length");
      const Eigen::Index off = static_cast<Eigen::Index>(k * (nt + nn));
      for (std::size_t j = 0; j < nt; ++j) res(off + static_cast<Eigen::Index>(j)) = r.series.second_moment[j];
      res.segment(off + static_cast<Eigen::Index>(nt), nn) = nodal_density(r.fine);
    }
    return res;
  };

  stage.enter("samples");
  auto t0 = Clock::now();
  Eigen::VectorXd mean;
  if (m > 0) {
    const LatticeRule rule = make_lattice(generating_vector(cfg, m, cfg.samples), cfg.samples, 1, cfg.seed);
    mean = average_points(lattice_points(rule, 1), F, cfg.workers, "localization");
  } else {
    mean = F(Eigen::VectorXd());
  }
  timing["samples_seconds"] = seconds_since(t0);

  stage.enter("output");
  json summary = {{"samples", m > 0 ? cfg.samples : 1}, {"cadence", cadence}};
  const double t_mid = 0.5 * cfg.T;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    const Eigen::Index off = static_cast<Eigen::Index>(k * (nt + nn));
    const std::string dir = "lambda_" + format_number(lambdas[k]) + "/";
    std::vector<std::vector<double>> rows;
    double lo = 1e300, hi = -1e300, a_mid = 0.0, best = 1e300;
    for (std::size_t j = 0; j < nt; ++j) {
      const double a = mean(off + static_cast<Eigen::Index>(j));
      rows.push_back({times[j], a});
      if (times[j] >= t_mid - 1e-12) {
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
      if (std::abs(times[j] - t_mid) < best) {
        best = std::abs(times[j] - t_mid);
        a_mid = a;
      }
    }
    out.write_csv(dir + "localization.csv", "t,A_t", rows);
    write_nodal(out, dir + "density_final.csv", *mesh, "expected_density", mean.segment(off + static_cast<Eigen::Index>(nt), nn));
    const double a_final = mean(off + static_cast<Eigen::Index>(nt) - 1);
    summary["lambda_" + format_number(lambdas[k])] = {{"lambda", lambdas[k]},
                                                      {"A_initial", mean(off)},
                                                      {"A_mid", a_mid},
                                                      {"A_final", a_final},
                                                      {"band_second_half", hi - lo},
                                                      {"ratio_final_over_mid", a_final / a_mid}};
  }
  return summary;
}

}  // namespace

std::shared_ptr<const Mesh> make_mesh(const ExperimentConfig& cfg, const std::array<int, 2>& cells) {
  return std::make_shared<const Mesh>(build_periodic_mesh(cfg.dimension, cfg.lower, cfg.upper, cells));
}

std::shared_ptr<const PotentialModel> make_model(const ExperimentConfig& cfg, const Mesh& mesh) {
  if (cfg.potential_tag == "kl_gaussian") {
    if (cfg.kl_modes < 1) throw ConfigError("potential.modes must be positive");
    return kl_build(cfg.kernel, mesh, cfg.kl_modes);
  }
  return builtin(cfg.potential_tag, cfg.potential_params, cfg.dimension);
}

ComplexFunction initial_function(const ExperimentConfig& cfg) {
  const Point c = cfg.initial_center;
  const double w = cfg.initial_width;
  const double a = cfg.initial_amplitude;
  const int dim = cfg.dimension;
  return [=](const Point& x) {
    double r2 = (x[0] - c[0]) * (x[0] - c[0]);
    if (dim == 2) r2 += (x[1] - c[1]) * (x[1] - c[1]);
    return cplx(a * std::exp(-w * r2), 0.0);
  };
}

Eigen::VectorXd default_xi(const ExperimentConfig& cfg, const PotentialModel& model) {
  if (cfg.xi.empty()) return Eigen::VectorXd::Zero(model.m());
  if (static_cast<int>(cfg.xi.size()) != model.m()) {
    throw ConfigError("potential.xi has " + std::to_string(cfg.xi.size()) + " entries but the potential has " +
                      std::to_string(model.m()) + " modes");
  }
  return Eigen::Map<const Eigen::VectorXd>(cfg.xi.data(), static_cast<Eigen::Index>(cfg.xi.size()));
}

std::shared_ptr<const Discretization> make_space(const ExperimentConfig& cfg, Scheme scheme, SpaceKind space,
                                                 std::shared_ptr<const Mesh> mesh, int ratio,
                                                 const PotentialSample& v) {
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, v.function(), cfg.eps));
  if (space == SpaceKind::FEM) return std::make_shared<const Discretization>(Discretization::fem(ops));
  auto pair = build_mesh_pair(mesh, ratio);
  BasisOptions opt;
  opt.include_potential = scheme == Scheme::SI;
  opt.normalization = cfg.normalization;
  auto basis = std::make_shared<const MultiscaleBasis>(build_basis(*ops, pair, opt));
  auto coarse = std::make_shared<const CoarseOperators>(project_operators(*basis, *ops));
  return std::make_shared<const Discretization>(Discretization::msfem(ops, basis, coarse, cfg.compression));
}

SolveResult solve(const ExperimentConfig& cfg, const SolveSpec& spec, std::shared_ptr<const Mesh> mesh,
                  const PotentialSample& v) {
  SolveSpec s = spec;
  std::string note;
  if (mesh->dimension() == 2 && s.space == SpaceKind::FEM && s.scheme == Scheme::SI &&
      mesh->num_nodes() > cfg.dense_node_limit) {
    s.space = SpaceKind::MsFEM;
    s.ratio = cfg.ratio;
    note = "FEM SI on " + std::to_string(mesh->num_nodes()) + " nodes exceeds the dense limit; multiscale space with ratio " +
           std::to_string(cfg.ratio) + " used";
    spdlog::warn("{}", note);
  }
  SolveResult r = solve_in(cfg, s, make_space(cfg, s.scheme, s.space, mesh, s.ratio, v), v);
  r.note = note;
  return r;
}

SolveResult solve_in(const ExperimentConfig& cfg, const SolveSpec& spec, std::shared_ptr<const Discretization> space,
                     const PotentialSample& v) {
  StepperConfig sc;
  sc.scheme = spec.scheme;
  sc.dt = spec.dt;
  sc.eps = cfg.eps;
  sc.lambda = spec.lambda;
  sc.steps = steps_for(cfg.T, spec.dt);
  sc.cadence = spec.cadence;
  sc.record_energy = spec.record_energy;
  sc.record_moment = spec.record_moment;
  sc.moment_center = midpoint(cfg);
  sc.validate();
  const Mesh& mesh = *space->fine().mesh;
  const Stepper stepper(sc, *space, nodal_values(mesh, v.function()));
  RunResult rr = run(stepper, initial_state(*space, initial_function(cfg)));
  SolveResult out;
  out.space = std::move(space);
  out.state = std::move(rr.final_state);
  out.fine = std::move(rr.final_fine);
  out.series = std::move(rr.series);
  return out;
}

double fit_decay_ratio(const std::vector<double>& tails) {
  if (tails.empty() || !(tails[0] > 0.0)) return std::nan("");
  std::vector<double> x, y;
  for (std::size_t l = 0; l < tails.size(); ++l) {
    if (!(tails[l] > 1e-12 * tails[0])) break;
    x.push_back(static_cast<double>(l));
    y.push_back(std::log(tails[l]));
  }
  if (x.size() < 2) return std::nan("");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return std::exp((n * sxy - sx * sy) / (n * sxx - sx * sx));
}

nlohmann::json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  OutputDir out(out_dir);
  Stage stage;
  json timing;
  json summary;
  const auto t0 = Clock::now();
  try {
    if (cfg.kind == "simulate") summary = run_simulate(cfg, out, stage);
    else if (cfg.kind == "converge-space" && cfg.space == SpaceKind::FEM) summary = run_converge_space_fem(cfg, out, stage);
    else if (cfg.kind == "converge-space") summary = run_converge_space_msfem(cfg, out, stage);
    else if (cfg.kind == "converge-time") summary = run_converge_time(cfg, out, stage);
    else if (cfg.kind == "converge-samples") summary = run_converge_samples(cfg, out, stage, timing);
    else if (cfg.kind == "basis") summary = run_basis(cfg, out, stage);
    else if (cfg.kind == "pod-bench") summary = run_pod_bench(cfg, out, stage, timing);
    else if (cfg.kind == "localization") summary = run_localization(cfg, out, stage, timing);
    else throw ConfigError("unknown experiment kind '" + cfg.kind + "'");

    stage.enter("emit");
    summary["kind"] = cfg.kind;
    out.write_json("summary.json", summary);
    timing["total_seconds"] = seconds_since(t0);
    out.write_timing(timing);
    json meta = {{"kind", cfg.kind}, {"config", cfg.echo}};
    summary["manifest"] = out.write_manifest(meta);
  } catch (const ConfigError& e) {
    out.remove_written();
    throw ConfigError("[" + stage.name + "] " + e.what());
  } catch (const NumericalError& e) {
    out.remove_written();
    throw NumericalError("[" + stage.name + "] " + e.what());
  } catch (const std::logic_error& e) {
    out.remove_written();
    throw ConfigError("[" + stage.name + "] " + e.what());
  } catch (const std::exception& e) {
    out.remove_written();
    throw NumericalError("[" + stage.name + "] " + e.what());
  }
  summary["timing"] = timing;
  return summary;
}

}  // namespace nls::harness
