#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace treebv {

/// Default tolerances used across the subspace machinery. All entry points
/// that test membership accept an explicit override.
inline constexpr double kColumnSumTol = 1e-10;      // zero-column-sum validation
inline constexpr double kOrthonormalityTol = 1e-10; // basis self-consistency
inline constexpr double kRankRelThreshold = 1e-10;  // singular values dropped below this
inline constexpr double kMembershipTol = 1e-8;      // relative projection residual

/// Deterministic orthonormal basis of the zero-sum subspace of R^q, as the
/// columns of a q x (q-1) matrix (Helmert construction).
Eigen::MatrixXd zero_sum_basis(int q);

/// A linear subspace W of l x q real matrices with zero column sums, carried
/// by an orthonormal basis under the Hilbert-Schmidt inner product
/// <A,B> = tr(A^t B). Basis matrices are stored column-stacked (one flat
/// column of length l*q per basis element). Immutable after construction.
class ConstraintSpace {
 public:
  /// Orthonormal basis of the span of the given matrices. Rank-revealing:
  /// singular directions below kRankRelThreshold (relative) are dropped.
  /// Throws ConstraintViolation if any generator has a column-sum defect
  /// above kColumnSumTol, std::invalid_argument on shape mismatch. An empty
  /// generator list yields the zero subspace.
  static ConstraintSpace from_spanning_set(int q, int l,
                                           const std::vector<Eigen::MatrixXd>& generators);

  /// Adopts an already-orthonormal basis verbatim (columns of `basis` are
  /// column-stacked l x q matrices). Throws ConstraintViolation if the
  /// columns are not orthonormal within kOrthonormalityTol or have nonzero
  /// column sums.
  static ConstraintSpace from_orthonormal_basis(int q, int l, Eigen::MatrixXd basis);

  /// The full space of zero-column-sum matrices, dimension (q-1)*l.
  static ConstraintSpace full_zero_sum(int q, int l);

  /// The zero subspace {0}.
  static ConstraintSpace zero(int q, int l);

  int q() const { return q_; }
  int l() const { return l_; }
  int dim() const { return static_cast<int>(basis_.cols()); }

  /// (l*q) x dim matrix of column-stacked basis elements.
  const Eigen::MatrixXd& basis_vectors() const { return basis_; }

  /// i-th basis element as an l x q matrix.
  Eigen::MatrixXd basis_matrix(int i) const;

  /// Coordinates of M in the orthonormal basis, B^t vec(M).
  Eigen::VectorXd coefficients(const Eigen::MatrixXd& M) const;

  struct Projection {
    Eigen::MatrixXd projection;  // P_W(M)
    double residual_norm;        // ||M - P_W(M)||_HS
  };

  /// Orthogonal projection onto W. Throws std::invalid_argument on shape
  /// mismatch.
  Projection project(const Eigen::MatrixXd& M) const;

  /// Relative membership test: residual <= tol * ||M||_HS (zero matrices are
  /// members).
  bool contains(const Eigen::MatrixXd& M, double tol = kMembershipTol) const;

 private:
  ConstraintSpace(int q, int l, Eigen::MatrixXd basis);

  int q_ = 0;
  int l_ = 0;
  Eigen::MatrixXd basis_;  // (l*q) x dim, orthonormal columns
};

/// Result of the rank-one angle computation gamma(v, W).
struct AngleResult {
  double angle = 0.0;             ///< radians in [0, pi/2]
  Eigen::VectorXd witness_w;      ///< unit zero-sum vector attaining the infimum
  Eigen::MatrixXd witness_matrix; ///< P_W(vhat (x) witness_w)
  double lambda_max = 0.0;        ///< top eigenvalue of the quadratic form, pre-clamp
  bool degenerate = false;        ///< true when W = {0}; angle is pi/2 by convention
};

/// Rank-one angle between a direction v in R^l and the subspace W: the
/// smallest Hilbert-Schmidt angle between any rank-one matrix vhat (x) w
/// (w zero-sum, nonzero) and W. Reduced to the top eigenpair of the
/// (q-1) x (q-1) form Q(w) = ||P_W(vhat (x) w)||^2 on unit zero-sum w; the
/// reported angle is re-evaluated at the witness from the explicit projection
/// residual, which keeps full accuracy near 0 and pi/2.
/// Scale-invariant in v. Throws std::invalid_argument if v = 0.
AngleResult gamma(const ConstraintSpace& space, const Eigen::VectorXd& v);

/// Monte Carlo upper bound on gamma: minimum angle over `samples` uniformly
/// drawn unit zero-sum vectors w. Converges to gamma from above as samples
/// grows; used as the sampling oracle for the eigensolver route.
double gamma_bruteforce(const ConstraintSpace& space, const Eigen::VectorXd& v,
                        std::int64_t samples, std::uint64_t seed);

struct WaveConeResult {
  bool member = false;
  AngleResult detail;  ///< on membership, ||P_W(vhat (x) w) - vhat (x) w||_HS <= tol
};

/// Wave-cone membership: gamma(v, W) <= tol. The returned witness satisfies
/// ||vhat (x) witness_w - witness_matrix||_HS = sin(angle) <= angle <= tol
/// (constant c = 1 in the residual bound).
WaveConeResult wave_cone_member(const ConstraintSpace& space, const Eigen::VectorXd& v,
                                double tol);

/// Rank-one angle between v and the single matrix D (columns d_j):
/// arccos sqrt( sum_j <vhat, d_j>^2 / sum_j ||d_j||^2 ).
/// Throws std::invalid_argument when v = 0 or D = 0.
double angle_to_matrix(const Eigen::VectorXd& v, const Eigen::MatrixXd& D);

/// Subspace interchange format: {"q": int, "l": int, "basis": [[l*q numbers,
/// row-major] ...]}. Loading keeps an orthonormal basis verbatim and
/// re-orthonormalizes otherwise.
void save_subspace_json(const ConstraintSpace& space, std::ostream& out);
void save_subspace_json(const ConstraintSpace& space, const std::string& path);
ConstraintSpace load_subspace_json(std::istream& in);
ConstraintSpace load_subspace_json(const std::string& path);

}  // namespace treebv
