#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

namespace nls {

using Point = std::array<double, 2>;

/// Uniform periodic simplicial mesh of an interval (1D) or a rectangle (2D).
///
/// Periodicity is realized by identifying boundary nodes with their partners,
/// so the independent node count is the product of the cells-per-axis counts.
/// Each 2D rectangle is split along its anti-diagonal into a bottom-left and a
/// top-right triangle, both counter-clockwise.
class Mesh {
 public:
  int dimension() const { return dim_; }
  const Point& lower() const { return lower_; }
  const Point& upper() const { return upper_; }
  /// Cells per axis; the unused axis of a 1D mesh reports 1.
  const std::array<int, 2>& cells_per_axis() const { return cells_; }
  Point spacing() const;

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_cells() const { return static_cast<int>(connectivity_.size()) / vertices_per_cell(); }
  int vertices_per_cell() const { return dim_ + 1; }

  const Point& node(int i) const { return nodes_[i]; }
  /// Independent node indices of cell c.
  std::span<const int> cell(int c) const;
  /// Vertex coordinates of cell c, unwrapped so the cell is geometrically contiguous.
  std::span<const Point> cell_points(int c) const;
  double cell_measure(int c) const { return measures_[c]; }

  /// Max cell diameter.
  double h() const { return h_; }
  double measure() const;

  /// Independent node index for grid position (i, j); indices wrap periodically.
  int node_index(int i, int j = 0) const;
  /// Grid position of independent node n.
  std::array<int, 2> grid_position(int n) const;

  /// Map from the (n1+1)x(n2+1) closed grid to independent nodes.
  const std::vector<int>& periodic_map() const { return periodic_map_; }

  bool same_layout(const Mesh& other) const;

 private:
  friend Mesh build_periodic_mesh(int, const Point&, const Point&, const std::array<int, 2>&);

  int dim_ = 1;
  Point lower_{0.0, 0.0};
  Point upper_{1.0, 1.0};
  std::array<int, 2> cells_{1, 1};
  std::vector<Point> nodes_;
  std::vector<int> connectivity_;
  std::vector<Point> cell_points_;
  std::vector<double> measures_;
  std::vector<int> periodic_map_;
  double h_ = 0.0;
};

/// Build a uniform periodic mesh. For dimension 1 only the first entries of the
/// bound and count arrays are used.
Mesh build_periodic_mesh(int dimension, const Point& lower, const Point& upper,
                         const std::array<int, 2>& cells_per_axis);

/// Convenience overload for 1D meshes on [a, b].
Mesh build_periodic_mesh_1d(double a, double b, int cells);

/// Nested coarse/fine pair. The coarse mesh has cells/k cells per axis and its
/// nodes coincide with every k-th fine node.
struct MeshPair {
  std::shared_ptr<const Mesh> fine;
  std::shared_ptr<const Mesh> coarse;
  int ratio = 1;
  std::vector<int> coarse_to_fine;
  /// Fine-by-coarse matrix evaluating coarse P1 hats at the fine nodes.
  Eigen::SparseMatrix<double> prolongation;

  /// Coarse cell that contains fine cell fc.
  int coarse_cell_of(int fine_cell) const;
};

/// Pair a fine mesh with the coarse mesh obtained by merging ratio^d fine cells.
/// ratio = 1 gives the identity pairing (coarse and fine coincide).
std::shared_ptr<const MeshPair> build_mesh_pair(std::shared_ptr<const Mesh> fine, int ratio);

/// Recursive coarse-cell neighbourhood D_layer of coarse node p.
struct NodalPatch {
  int center = 0;
  int layer = 0;
  std::vector<int> cells;  // sorted coarse cell indices
};

NodalPatch nodal_patch(const MeshPair& pair, int p, int layer);

}  // namespace nls
