#pragma once

#include <Eigen/Core>
#include <vector>

#include "treebv/tree.hpp"

namespace treebv {

/// An R^l-valued measure on the truncated tree, stored as its leaf-atom
/// values nu(omega) for the q^N atoms at depth N (columns, lexicographic
/// address order). Values at internal atoms follow by additivity and are
/// aggregated bottom-up once at construction; a measure is immutable
/// afterwards, so all queries are pure reads and safe to run concurrently.
class TruncatedMeasure {
 public:
  /// leaf_values: l x q^depth matrix, column k = nu(leaf with index k).
  TruncatedMeasure(TreeShape shape, Eigen::MatrixXd leaf_values);

  /// Builds the measure whose depth-N martingale values are the given
  /// columns, i.e. nu(leaf) = q^{-N} * F_N(leaf).
  static TruncatedMeasure from_leaf_martingale(TreeShape shape, const Eigen::MatrixXd& leaf_F);

  const TreeShape& shape() const { return shape_; }

  /// nu(omega) for all atoms of depth n, as an l x q^n matrix.
  const Eigen::MatrixXd& level_values(int n) const;

  const Eigen::MatrixXd& leaf_values() const { return level_values(shape_.depth); }

  /// nu(omega) for a single atom.
  Eigen::VectorXd measure_value(const VertexAddress& atom) const;

 private:
  TreeShape shape_;
  std::vector<Eigen::MatrixXd> levels_;  // levels_[n]: l x q^n
};

/// Martingale value F_n(omega) = q^n * nu(omega).
/// Throws std::invalid_argument if the atom lies below the truncation depth
/// or carries a digit outside [0, q-1].
Eigen::VectorXd martingale_value(const TruncatedMeasure& m, const VertexAddress& atom);

/// The l x q matrix of martingale increments at an internal atom: column j is
/// d_j = F_{n+1}(son_j) - F_n(omega). Columns sum to zero up to rounding.
/// Throws std::invalid_argument at leaf atoms (no sons within the truncation).
Eigen::MatrixXd difference_matrix(const TruncatedMeasure& m, const VertexAddress& atom);

/// Finite-depth polar direction F_n(omega)/||F_n(omega)||.
/// Throws PolarUndefined when the martingale value vanishes.
Eigen::VectorXd polar_estimate(const TruncatedMeasure& m, const VertexAddress& atom);

/// Sum of ||nu(omega)|| over the depth-n atoms; nondecreasing in n.
double total_variation_at_depth(const TruncatedMeasure& m, int n);

}  // namespace treebv
