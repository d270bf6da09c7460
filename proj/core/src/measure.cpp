#include "treebv/measure.hpp"

#include <cmath>
#include <stdexcept>

#include "treebv/errors.hpp"

namespace treebv {

TruncatedMeasure::TruncatedMeasure(TreeShape shape, Eigen::MatrixXd leaf_values)
    : shape_(shape) {
  shape_.validate();
  if (leaf_values.rows() != shape_.l || leaf_values.cols() != shape_.leaf_count()) {
    throw std::invalid_argument("TruncatedMeasure: leaf matrix must be l x q^depth");
  }
  levels_.resize(static_cast<std::size_t>(shape_.depth) + 1);
  levels_[static_cast<std::size_t>(shape_.depth)] = std::move(leaf_values);
  // additivity: nu(omega) = sum over sons of nu(son)
  for (int n = shape_.depth - 1; n >= 0; --n) {
    const Eigen::MatrixXd& below = levels_[static_cast<std::size_t>(n) + 1];
    Eigen::MatrixXd here(shape_.l, shape_.atoms_at(n));
    for (Eigen::Index a = 0; a < here.cols(); ++a) {
      here.col(a) = below.middleCols(a * shape_.q, shape_.q).rowwise().sum();
    }
    levels_[static_cast<std::size_t>(n)] = std::move(here);
  }
}

TruncatedMeasure TruncatedMeasure::from_leaf_martingale(TreeShape shape,
                                                        const Eigen::MatrixXd& leaf_F) {
  shape.validate();
  const double mass = shape.atom_mass(shape.depth);
  return TruncatedMeasure(shape, leaf_F * mass);
}

const Eigen::MatrixXd& TruncatedMeasure::level_values(int n) const {
  if (n < 0 || n > shape_.depth) {
    throw std::invalid_argument("TruncatedMeasure::level_values: depth out of range");
  }
  return levels_[static_cast<std::size_t>(n)];
}

Eigen::VectorXd TruncatedMeasure::measure_value(const VertexAddress& atom) const {
  if (atom.depth() > shape_.depth) {
    throw std::invalid_argument("measure_value: atom depth exceeds truncation depth");
  }
  return level_values(atom.depth()).col(atom.index(shape_.q));
}

Eigen::VectorXd martingale_value(const TruncatedMeasure& m, const VertexAddress& atom) {
  const int n = atom.depth();
  const double scale = std::pow(static_cast<double>(m.shape().q), n);
  return scale * m.measure_value(atom);
}

Eigen::MatrixXd difference_matrix(const TruncatedMeasure& m, const VertexAddress& atom) {
  const TreeShape& shape = m.shape();
  const int n = atom.depth();
  if (n > shape.depth - 1) {
    throw std::invalid_argument("difference_matrix: atom has no sons within the truncation");
  }
  const Eigen::VectorXd parent = martingale_value(m, atom);
  const double scale = std::pow(static_cast<double>(shape.q), n + 1);
  const std::int64_t base = atom.index(shape.q) * shape.q;
  Eigen::MatrixXd d(shape.l, shape.q);
  const Eigen::MatrixXd& sons = m.level_values(n + 1);
  for (int j = 0; j < shape.q; ++j) {
    d.col(j) = scale * sons.col(base + j) - parent;
  }
  return d;
}

Eigen::VectorXd polar_estimate(const TruncatedMeasure& m, const VertexAddress& atom) {
  Eigen::VectorXd f = martingale_value(m, atom);
  const double norm = f.norm();
  if (norm == 0.0) {
    throw PolarUndefined("polar undefined at atom " + atom.to_string());
  }
  return f / norm;
}

double total_variation_at_depth(const TruncatedMeasure& m, int n) {
  return m.level_values(n).colwise().norm().sum();
}

}  // namespace treebv
