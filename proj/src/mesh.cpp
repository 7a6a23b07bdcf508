#include "nls/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace nls {

namespace {

const char* axis_name(int axis) { return axis == 0 ? "x" : "y"; }

}  // namespace

Point Mesh::spacing() const {
  Point s{(upper_[0] - lower_[0]) / cells_[0], 0.0};
  if (dim_ == 2) s[1] = (upper_[1] - lower_[1]) / cells_[1];
  return s;
}

std::span<const int> Mesh::cell(int c) const {
  const int nv = vertices_per_cell();
  return {connectivity_.data() + static_cast<std::size_t>(c) * nv, static_cast<std::size_t>(nv)};
}

std::span<const Point> Mesh::cell_points(int c) const {
  const int nv = vertices_per_cell();
  return {cell_points_.data() + static_cast<std::size_t>(c) * nv, static_cast<std::size_t>(nv)};
}

double Mesh::measure() const {
  double m = upper_[0] - lower_[0];
  if (dim_ == 2) m *= upper_[1] - lower_[1];
  return m;
}

int Mesh::node_index(int i, int j) const {
  const int n1 = cells_[0];
  const int n2 = cells_[1];
  i = ((i % n1) + n1) % n1;
  j = dim_ == 2 ? ((j % n2) + n2) % n2 : 0;
  return i + n1 * j;
}

std::array<int, 2> Mesh::grid_position(int n) const { return {n % cells_[0], n / cells_[0]}; }

bool Mesh::same_layout(const Mesh& other) const {
  return dim_ == other.dim_ && cells_ == other.cells_ && lower_ == other.lower_ &&
         upper_ == other.upper_;
}

Mesh build_periodic_mesh(int dimension, const Point& lower, const Point& upper,
                         const std::array<int, 2>& cells_per_axis) {
  if (dimension != 1 && dimension != 2) {
    throw std::invalid_argument("build_periodic_mesh: dimension must be 1 or 2, got " +
                                std::to_string(dimension));
  }
  for (int a = 0; a < dimension; ++a) {
    if (!std::isfinite(lower[a]) || !std::isfinite(upper[a]) || !(upper[a] > lower[a])) {
      throw std::invalid_argument(std::string("build_periodic_mesh: degenerate bounds on axis ") +
                                  axis_name(a));
    }
    if (cells_per_axis[a] < 2) {
      throw std::invalid_argument(std::string("build_periodic_mesh: need at least 2 cells on axis ") +
                                  axis_name(a) + ", got " + std::to_string(cells_per_axis[a]));
    }
  }

  Mesh mesh;
  mesh.dim_ = dimension;
  mesh.lower_ = lower;
  mesh.upper_ = upper;
  mesh.cells_ = {cells_per_axis[0], dimension == 2 ? cells_per_axis[1] : 1};
  if (dimension == 1) {
    mesh.lower_[1] = 0.0;
    mesh.upper_[1] = 0.0;
  }
  const int n1 = mesh.cells_[0];
  const int n2 = mesh.cells_[1];
  const Point s = mesh.spacing();

  mesh.nodes_.resize(static_cast<std::size_t>(n1) * n2);
  for (int j = 0; j < n2; ++j) {
    for (int i = 0; i < n1; ++i) {
      mesh.nodes_[i + n1 * j] = {lower[0] + i * s[0], dimension == 2 ? lower[1] + j * s[1] : 0.0};
    }
  }

  const int n2_closed = dimension == 2 ? n2 + 1 : 1;
  mesh.periodic_map_.resize(static_cast<std::size_t>(n1 + 1) * n2_closed);
  for (int j = 0; j < n2_closed; ++j) {
    for (int i = 0; i <= n1; ++i) mesh.periodic_map_[i + (n1 + 1) * j] = mesh.node_index(i, j);
  }

  auto grid_point = [&](int i, int j) -> Point {
    return {lower[0] + i * s[0], dimension == 2 ? lower[1] + j * s[1] : 0.0};
  };

  if (dimension == 1) {
    mesh.connectivity_.reserve(2 * n1);
    mesh.cell_points_.reserve(2 * n1);
    for (int i = 0; i < n1; ++i) {
      mesh.connectivity_.push_back(mesh.node_index(i));
      mesh.connectivity_.push_back(mesh.node_index(i + 1));
      mesh.cell_points_.push_back(grid_point(i, 0));
      mesh.cell_points_.push_back(grid_point(i + 1, 0));
      mesh.measures_.push_back(s[0]);
    }
    mesh.h_ = s[0];
  } else {
    const std::size_t ncells = 2 * static_cast<std::size_t>(n1) * n2;
    mesh.connectivity_.reserve(3 * ncells);
    mesh.cell_points_.reserve(3 * ncells);
    mesh.measures_.reserve(ncells);
    const double area = 0.5 * s[0] * s[1];
    for (int j = 0; j < n2; ++j) {
      for (int i = 0; i < n1; ++i) {
        const std::array<std::array<int, 2>, 6> corners = {{
            {i, j}, {i + 1, j}, {i, j + 1},          // bottom-left triangle
            {i + 1, j}, {i + 1, j + 1}, {i, j + 1},  // top-right triangle
        }};
        for (const auto& c : corners) {
          mesh.connectivity_.push_back(mesh.node_index(c[0], c[1]));
          mesh.cell_points_.push_back(grid_point(c[0], c[1]));
        }
        mesh.measures_.push_back(area);
        mesh.measures_.push_back(area);
      }
    }
    mesh.h_ = std::hypot(s[0], s[1]);
  }
  return mesh;
}

Mesh build_periodic_mesh_1d(double a, double b, int cells) {
  return build_periodic_mesh(1, {a, 0.0}, {b, 0.0}, {cells, 1});
}

int MeshPair::coarse_cell_of(int fine_cell) const {
  const int k = ratio;
  if (fine->dimension() == 1) return fine_cell / k;
  const int n1 = fine->cells_per_axis()[0];
  const int square = fine_cell / 2;
  const int tri = fine_cell % 2;
  const int i = square % n1;
  const int j = square / n1;
  const int a = i % k;
  const int b = j % k;
  int coarse_tri = tri;
  if (a + b < k - 1) coarse_tri = 0;
  if (a + b > k - 1) coarse_tri = 1;
  const int nc1 = coarse->cells_per_axis()[0];
  return 2 * ((i / k) + nc1 * (j / k)) + coarse_tri;
}

std::shared_ptr<const MeshPair> build_mesh_pair(std::shared_ptr<const Mesh> fine, int ratio) {
  if (!fine) throw std::invalid_argument("build_mesh_pair: null fine mesh");
  if (ratio < 1) throw std::invalid_argument("build_mesh_pair: ratio must be >= 1");
  const int dim = fine->dimension();
  std::array<int, 2> coarse_cells{1, 1};
  for (int a = 0; a < dim; ++a) {
    const int n = fine->cells_per_axis()[a];
    if (n % ratio != 0) {
      throw std::invalid_argument(std::string("build_mesh_pair: fine cell count ") + std::to_string(n) +
                                  " on axis " + axis_name(a) + " is not divisible by ratio " +
                                  std::to_string(ratio));
    }
    coarse_cells[a] = n / ratio;
    if (coarse_cells[a] < 2) {
      throw std::invalid_argument(std::string("build_mesh_pair: coarse mesh must have at least 2 nodes on axis ") +
                                  axis_name(a) + ", ratio " + std::to_string(ratio) + " leaves " +
                                  std::to_string(coarse_cells[a]));
    }
  }

  auto pair = std::make_shared<MeshPair>();
  pair->fine = fine;
  pair->coarse = std::make_shared<const Mesh>(
      build_periodic_mesh(dim, fine->lower(), fine->upper(), coarse_cells));
  pair->ratio = ratio;
  const Mesh& coarse = *pair->coarse;

  pair->coarse_to_fine.resize(coarse.num_nodes());
  for (int n = 0; n < coarse.num_nodes(); ++n) {
    const auto g = coarse.grid_position(n);
    pair->coarse_to_fine[n] = fine->node_index(g[0] * ratio, g[1] * ratio);
  }

  std::vector<Eigen::Triplet<double>> triplets;
  const double inv_k = 1.0 / ratio;
  for (int n = 0; n < fine->num_nodes(); ++n) {
    const auto g = fine->grid_position(n);
    const int ci = g[0] / ratio;
    const int cj = g[1] / ratio;
    const double a = (g[0] % ratio) * inv_k;
    const double b = (g[1] % ratio) * inv_k;
    auto push = [&](int i, int j, double w) {
      if (w != 0.0) triplets.emplace_back(n, coarse.node_index(i, j), w);
    };
    if (dim == 1) {
      push(ci, 0, 1.0 - a);
      push(ci + 1, 0, a);
    } else if (a + b <= 1.0) {
      push(ci, cj, 1.0 - a - b);
      push(ci + 1, cj, a);
      push(ci, cj + 1, b);
    } else {
      push(ci + 1, cj, 1.0 - b);
      push(ci + 1, cj + 1, a + b - 1.0);
      push(ci, cj + 1, 1.0 - a);
    }
  }
  pair->prolongation.resize(fine->num_nodes(), coarse.num_nodes());
  pair->prolongation.setFromTriplets(triplets.begin(), triplets.end());
  return pair;
}

NodalPatch nodal_patch(const MeshPair& pair, int p, int layer) {
  const Mesh& coarse = *pair.coarse;
  if (p < 0 || p >= coarse.num_nodes()) {
    throw std::out_of_range("nodal_patch: coarse node " + std::to_string(p) + " out of range");
  }
  if (layer < 0) throw std::invalid_argument("nodal_patch: layer must be nonnegative");

  std::vector<std::vector<int>> node_cells(coarse.num_nodes());
  for (int c = 0; c < coarse.num_cells(); ++c) {
    for (int v : coarse.cell(c)) node_cells[v].push_back(c);
  }

  std::set<int> cells(node_cells[p].begin(), node_cells[p].end());
  for (int l = 1; l <= layer; ++l) {
    std::set<int> touched;
    for (int c : cells) {
      for (int v : coarse.cell(c)) touched.insert(v);
    }
    const std::size_t before = cells.size();
    for (int v : touched) cells.insert(node_cells[v].begin(), node_cells[v].end());
    if (cells.size() == before) break;
  }
  return {p, layer, std::vector<int>(cells.begin(), cells.end())};
}

}  // namespace nls
