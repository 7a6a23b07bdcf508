#include "nls/podreduce.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "nls/errors.hpp"
#include "nls/linalg.hpp"
#include "nls/parallel.hpp"

namespace nls {

namespace {

constexpr char kMagic[8] = {'N', 'L', 'S', 'P', 'O', 'D', '1', '\0'};

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Two passes of modified Gram-Schmidt in the M inner product.
Eigen::MatrixXd m_orthonormalize(const Eigen::MatrixXd& Z, const SpMat& M, const Eigen::MatrixXd& against) {
  Eigen::MatrixXd Q = Z;
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < Q.cols(); ++j) {
      for (int i = 0; i < against.cols(); ++i) {
        Q.col(j) -= against.col(i).dot(M * Q.col(j)) * against.col(i);
      }
      for (int i = 0; i < j; ++i) Q.col(j) -= Q.col(i).dot(M * Q.col(j)) * Q.col(i);
      Q.col(j) /= std::sqrt(Q.col(j).dot(M * Q.col(j)));
    }
  }
  return Q;
}

PodNodeBasis compress_node(int p, const std::vector<Eigen::MatrixXd>& snapshots, const SpMat& M, int m_p) {
  const int Q = static_cast<int>(snapshots.size());
  const Eigen::Index nh = snapshots[0].rows();
  Eigen::MatrixXd X(nh, Q);
  for (int q = 0; q < Q; ++q) X.col(q) = snapshots[q].col(p);

  PodNodeBasis nb;
  nb.node = p;
  nb.m_p = m_p;
  nb.mean = X.rowwise().mean();
  const Eigen::MatrixXd F = X.colwise() - nb.mean;
  const Eigen::MatrixXd MF = M * F;
  Eigen::MatrixXd gram = F.transpose() * MF;
  gram = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("offline_build: snapshot Gram eigensolver failed at node " + std::to_string(p));

  nb.singular_values = Eigen::VectorXd::Zero(m_p);
  const double mean_energy = nb.mean.dot(M * nb.mean);
  const double mu1 = std::max(0.0, es.eigenvalues()[Q - 1]);
  std::vector<Eigen::VectorXd> kept;
  for (int i = 0; i < m_p; ++i) {
    const double mu = std::max(0.0, es.eigenvalues()[Q - 1 - i]);
    nb.singular_values[i] = std::sqrt(mu);
    // Directions below round-off of the snapshot data carry no information.
    if (mu <= 1e-20 * mu1 || mu <= 1e-26 * mean_energy) continue;
    kept.push_back(F * es.eigenvectors().col(Q - 1 - i) / std::sqrt(mu));
  }
  if (mu1 <= 1e-26 * mean_energy) {
    spdlog::debug("offline_build: node {} has vanishing fluctuations; no POD modes kept", p);
  }
  Eigen::MatrixXd Z(nh, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) Z.col(static_cast<Eigen::Index>(i)) = kept[i];
  nb.modes = m_orthonormalize(Z, M, Eigen::MatrixXd(nh, 0));
  return nb;
}

Eigen::MatrixXd node_span(const PodNodeBasis& nb) {
  Eigen::MatrixXd Z(nb.mean.size(), 1 + nb.modes.cols());
  Z.col(0) = nb.mean;
  Z.rightCols(nb.modes.cols()) = nb.modes;
  return Z;
}

void fill_common(PodBasisSet& pod) {
  const Mesh& fine = *pod.pair->fine;
  pod.M = assemble_mass(fine);
  pod.S = assemble_stiffness(fine);
  pod.B = constraint_matrix(*pod.pair, pod.M);
  pod.lambda = pod.B * Eigen::VectorXd::Ones(fine.num_nodes());
  pod.weights = pod.options.normalization == Normalization::CoarseMass
                    ? pod.lambda
                    : Eigen::VectorXd::Ones(pod.pair->coarse->num_nodes());
}

}  // namespace

PodBasisSet offline_build(std::shared_ptr<const PotentialModel> model, const std::vector<Eigen::VectorXd>& offline_xi,
                          std::shared_ptr<const MeshPair> pair, double eps, int m_p, const BasisOptions& options,
                          int workers) {
  if (!model || !pair) throw std::invalid_argument("offline_build: null model or mesh pair");
  const int Q = static_cast<int>(offline_xi.size());
  if (m_p < 0) throw ConfigError("offline_build: m_p must be nonnegative");
  if (Q < m_p + 1) throw ConfigError("offline_build: need Q >= m_p + 1 offline samples");

  auto mesh = pair->fine;
  std::vector<Eigen::MatrixXd> snapshots(Q);
  parallel_for(Q, workers, [&](std::size_t q) {
    const PotentialSample s = sample(model, offline_xi[q]);
    const AssembledOperators ops = assemble(mesh, s.function(), eps);
    snapshots[q] = build_basis(ops, pair, options).C;
  });

  PodBasisSet pod;
  pod.Q = Q;
  pod.m_p = m_p;
  pod.eps = eps;
  pod.options = options;
  pod.pair = pair;
  pod.model = model;
  fill_common(pod);

  const int nH = pair->coarse->num_nodes();
  pod.nodes.resize(nH);
  parallel_for(nH, workers, [&](std::size_t p) {
    pod.nodes[p] = compress_node(static_cast<int>(p), snapshots, pod.M, m_p);
  });
  prepare_affine(pod);
  return pod;
}

void prepare_affine(PodBasisSet& pod) {
  const Mesh& fine = *pod.pair->fine;
  const PotentialModel& model = *pod.model;
  const bool pot = pod.options.include_potential;
  SpMat Vbar;
  std::vector<SpMat> Vj;
  if (pot) {
    Vbar = assemble_weighted_mass(fine, model.mean_function());
    for (int j = 0; j < model.m(); ++j) Vj.push_back(assemble_weighted_mass(fine, model.mode_function(j)));
  }
  pod.affine.assign(pod.nodes.size(), {});
  for (std::size_t p = 0; p < pod.nodes.size(); ++p) {
    const Eigen::MatrixXd Z = node_span(pod.nodes[p]);
    PodAffineNode& a = pod.affine[p];
    a.KS = Z.transpose() * (pod.S * Z);
    a.G = pod.B * Z;
    if (pot) {
      a.K0 = Z.transpose() * (Vbar * Z);
      for (const auto& V : Vj) a.Kj.push_back(Z.transpose() * (V * Z));
    } else {
      a.K0 = Eigen::MatrixXd::Zero(Z.cols(), Z.cols());
    }
  }
}

MultiscaleBasis online_build(const PodBasisSet& pod, const PotentialSample& s) {
  if (s.xi.size() != pod.model->m()) {
    throw std::invalid_argument("online_build: sample has " + std::to_string(s.xi.size()) +
                                " random coordinates, offline model has " + std::to_string(pod.model->m()));
  }
  const int nh = pod.pair->fine->num_nodes();
  const int nH = pod.pair->coarse->num_nodes();
  MultiscaleBasis basis;
  basis.pair = pod.pair;
  basis.eps = pod.eps;
  basis.include_potential = pod.options.include_potential;
  basis.B = pod.B;
  basis.lambda = pod.lambda;
  basis.weights = pod.weights;
  basis.C.resize(nh, nH);

  const auto& scales = pod.model->scales();
  for (int p = 0; p < nH; ++p) {
    const PodAffineNode& a = pod.affine[p];
    const PodNodeBasis& nb = pod.nodes[p];
    Eigen::MatrixXd K = 0.5 * pod.eps * pod.eps * a.KS + a.K0;
    for (std::size_t j = 0; j < a.Kj.size(); ++j) K += scales[j] * s.xi[static_cast<Eigen::Index>(j)] * a.Kj[j];
    K = 0.5 * (K + K.transpose());

    Eigen::VectorXd t = Eigen::VectorXd::Zero(nH);
    t[p] = pod.weights[p];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.G, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double tol = 1e-10 * (sv.size() > 0 ? sv[0] : 0.0);
    int rank = 0;
    while (rank < sv.size() && sv[rank] > tol) ++rank;
    const int n = static_cast<int>(a.G.cols());

    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    c[0] = 1.0;
    if (rank == 0) {
      spdlog::warn("online_build: node {} has no constraint coupling; using the mean snapshot", p);
    } else {
      const Eigen::MatrixXd& W = svd.matrixV();
      const Eigen::VectorXd ut = svd.matrixU().leftCols(rank).transpose() * t;
      const Eigen::VectorXd cp = W.leftCols(rank) * ut.cwiseQuotient(sv.head(rank));
      c = cp;
      if (rank < n) {
        const Eigen::MatrixXd N = W.rightCols(n - rank);
        const Eigen::MatrixXd KN = N.transpose() * K * N;
        // Stationary point of the energy on the constraint-feasible set; the form may be
        // indefinite, like the full saddle system, so only singularity is a failure.
        Eigen::FullPivLU<Eigen::MatrixXd> lu(KN);
        lu.setThreshold(1e-12);
        if (lu.isInvertible()) {
          c += N * lu.solve(-(N.transpose() * (K * cp)));
        } else {
          spdlog::warn("online_build: reduced energy is singular at node {}; using the mean snapshot", p);
          c = Eigen::VectorXd::Unit(n, 0);
        }
      }
    }
    basis.C.col(p) = nb.mean * c[0];
    if (n > 1) basis.C.col(p) += nb.modes * c.tail(n - 1);
  }
  return basis;
}

std::uint64_t mesh_pair_hash(const MeshPair& pair) {
  const Mesh& f = *pair.fine;
  std::uint64_t h = fnv1a(f.lower().data(), sizeof(double) * 2);
  h = fnv1a(f.upper().data(), sizeof(double) * 2, h);
  h = fnv1a(f.cells_per_axis().data(), sizeof(int) * 2, h);
  const int dim = f.dimension();
  h = fnv1a(&dim, sizeof dim, h);
  return fnv1a(&pair.ratio, sizeof pair.ratio, h);
}

std::uint64_t model_fingerprint(const PotentialModel& model, const Mesh& mesh) {
  std::uint64_t h = fnv1a(model.tag().data(), model.tag().size());
  const int m = model.m();
  h = fnv1a(&m, sizeof m, h);
  h = fnv1a(model.scales().data(), sizeof(double) * model.scales().size(), h);
  const Eigen::VectorXd mean = nodal_values(mesh, model.mean_function());
  h = fnv1a(mean.data(), sizeof(double) * mean.size(), h);
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd v = nodal_values(mesh, model.mode_function(j));
    h = fnv1a(v.data(), sizeof(double) * v.size(), h);
  }
  return h;
}

void save_pod(const PodBasisSet& pod, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path data = fs::path(dir) / "pod_data.bin";
  std::ofstream out(data, std::ios::binary);
  if (!out) throw std::runtime_error("save_pod: cannot write " + data.string());
  auto put_i = [&](std::int64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto put_d = [&](const double* p, std::size_t n) { out.write(reinterpret_cast<const char*>(p), sizeof(double) * n); };
  out.write(kMagic, sizeof kMagic);
  const std::int64_t nh = pod.pair->fine->num_nodes();
  put_i(nh);
  put_i(static_cast<std::int64_t>(pod.nodes.size()));
  for (const auto& nb : pod.nodes) {
    put_i(nb.m_p);
    put_i(nb.modes.cols());
    put_d(nb.mean.data(), nb.mean.size());
    put_d(nb.modes.data(), nb.modes.size());
    put_d(nb.singular_values.data(), nb.singular_values.size());
  }
  out.close();
  if (!out) throw std::runtime_error("save_pod: write failed for " + data.string());

  nlohmann::json j;
  j["format"] = "nls-pod-1";
  j["mesh_pair_hash"] = hex(mesh_pair_hash(*pod.pair));
  j["model_fingerprint"] = hex(model_fingerprint(*pod.model, *pod.pair->fine));
  j["eps"] = pod.eps;
  j["Q"] = pod.Q;
  j["m_p"] = pod.m_p;
  j["include_potential"] = pod.options.include_potential;
  j["normalization"] = pod.options.normalization == Normalization::CoarseMass ? "coarse_mass" : "unit";
  j["fine_nodes"] = nh;
  j["coarse_nodes"] = pod.nodes.size();
  std::ofstream mf(fs::path(dir) / "pod_manifest.json");
  mf << j.dump(2) << "\n";
}

PodBasisSet load_pod(const std::string& dir, std::shared_ptr<const PotentialModel> model,
                     std::shared_ptr<const MeshPair> pair, double eps) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "pod_manifest.json");
  if (!mf) throw ConfigError("load_pod: missing pod_manifest.json in " + dir);
  nlohmann::json j;
  mf >> j;
  if (j.value("format", "") != "nls-pod-1") throw ConfigError("load_pod: unknown format");
  if (j.at("mesh_pair_hash").get<std::string>() != hex(mesh_pair_hash(*pair))) {
    throw ConfigError("load_pod: stored set was built on a different mesh pair");
  }
  if (j.at("model_fingerprint").get<std::string>() != hex(model_fingerprint(*model, *pair->fine))) {
    throw ConfigError("load_pod: stored set was built for a different potential model");
  }
  if (j.at("eps").get<double>() != eps) throw ConfigError("load_pod: stored set was built with a different eps");

  PodBasisSet pod;
  pod.Q = j.at("Q").get<int>();
  pod.m_p = j.at("m_p").get<int>();
  pod.eps = eps;
  pod.options.include_potential = j.at("include_potential").get<bool>();
  pod.options.normalization = j.at("normalization").get<std::string>() == "unit" ? Normalization::Unit
                                                                                 : Normalization::CoarseMass;
  pod.pair = pair;
  pod.model = model;

  std::ifstream in(fs::path(dir) / "pod_data.bin", std::ios::binary);
  if (!in) throw ConfigError("load_pod: missing pod_data.bin in " + dir);
  char magic[8];
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ConfigError("load_pod: bad data header");
  auto get_i = [&] {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  auto get_d = [&](double* p, std::size_t n) { in.read(reinterpret_cast<char*>(p), sizeof(double) * n); };
  const std::int64_t nh = get_i();
  const std::int64_t count = get_i();
  if (nh != pair->fine->num_nodes() || count != pair->coarse->num_nodes()) {
    throw ConfigError("load_pod: data shape does not match the mesh pair");
  }
  pod.nodes.resize(count);
  for (std::int64_t p = 0; p < count; ++p) {
    PodNodeBasis& nb = pod.nodes[p];
    nb.node = static_cast<int>(p);
    nb.m_p = static_cast<int>(get_i());
    const std::int64_t kept = get_i();
    nb.mean.resize(nh);
    nb.modes.resize(nh, kept);
    nb.singular_values.resize(nb.m_p);
    get_d(nb.mean.data(), nb.mean.size());
    get_d(nb.modes.data(), nb.modes.size());
    get_d(nb.singular_values.data(), nb.singular_values.size());
  }
  if (!in) throw ConfigError("load_pod: truncated data file");
  fill_common(pod);
  prepare_affine(pod);
  return pod;
}

}  // namespace nls
