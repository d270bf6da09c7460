#include "treebv/constraint_space.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "treebv/errors.hpp"
#include "treebv/rng.hpp"

namespace treebv {

namespace {

Eigen::VectorXd vec(const Eigen::MatrixXd& M) {
  return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
}

Eigen::MatrixXd unvec(const Eigen::VectorXd& x, int l, int q) {
  return Eigen::Map<const Eigen::MatrixXd>(x.data(), l, q);
}

void check_column_sums(const Eigen::MatrixXd& M) {
  const double defect = (M * Eigen::VectorXd::Ones(M.cols())).norm();
  if (defect > kColumnSumTol * std::max(1.0, M.norm())) {
    throw ConstraintViolation("generator has nonzero column sums (defect " +
                              std::to_string(defect) + ")");
  }
}

}  // namespace

Eigen::MatrixXd zero_sum_basis(int q) {
  if (q < 2) throw std::invalid_argument("zero_sum_basis: q must be >= 2");
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(q, q - 1);
  for (int k = 1; k < q; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) Z(i, k - 1) = scale;
    Z(k, k - 1) = -static_cast<double>(k) * scale;
  }
  return Z;
}

ConstraintSpace::ConstraintSpace(int q, int l, Eigen::MatrixXd basis)
    : q_(q), l_(l), basis_(std::move(basis)) {}

ConstraintSpace ConstraintSpace::from_spanning_set(
    int q, int l, const std::vector<Eigen::MatrixXd>& generators) {
  if (q < 3 || l < 1) throw std::invalid_argument("ConstraintSpace: need q >= 3, l >= 1");
  if (generators.empty()) return zero(q, l);

  Eigen::MatrixXd stacked(l * q, static_cast<Eigen::Index>(generators.size()));
  for (std::size_t i = 0; i < generators.size(); ++i) {
    const Eigen::MatrixXd& G = generators[i];
    if (G.rows() != l || G.cols() != q) {
      throw std::invalid_argument("ConstraintSpace: generator shape mismatch");
    }
    check_column_sums(G);
    stacked.col(static_cast<Eigen::Index>(i)) = vec(G);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 0.0) return zero(q, l);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > kRankRelThreshold * sv[0]) ++rank;
  }
  return ConstraintSpace(q, l, svd.matrixU().leftCols(rank));
}

ConstraintSpace ConstraintSpace::from_orthonormal_basis(int q, int l, Eigen::MatrixXd basis) {
  if (q < 3 || l < 1) throw std::invalid_argument("ConstraintSpace: need q >= 3, l >= 1");
  if (basis.rows() != static_cast<Eigen::Index>(l) * q) {
    throw std::invalid_argument("ConstraintSpace: basis vector length must be l*q");
  }
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  const double defect =
      (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (gram.size() > 0 && defect > kOrthonormalityTol) {
    throw ConstraintViolation("basis is not orthonormal (defect " + std::to_string(defect) + ")");
  }
  for (Eigen::Index i = 0; i < basis.cols(); ++i) {
    check_column_sums(unvec(basis.col(i), l, q));
  }
  return ConstraintSpace(q, l, std::move(basis));
}

ConstraintSpace ConstraintSpace::full_zero_sum(int q, int l) {
  // basis {e_r z_k^t}: vec(e_r z_k^t) = kron(z_k, e_r)
  const Eigen::MatrixXd Z = zero_sum_basis(q);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(l * q, (q - 1) * l);
  for (int k = 0; k < q - 1; ++k) {
    for (int r = 0; r < l; ++r) {
      for (int j = 0; j < q; ++j) B(j * l + r, k * l + r) = Z(j, k);
    }
  }
  return ConstraintSpace(q, l, std::move(B));
}

ConstraintSpace ConstraintSpace::zero(int q, int l) {
  return ConstraintSpace(q, l, Eigen::MatrixXd(l * q, 0));
}

Eigen::MatrixXd ConstraintSpace::basis_matrix(int i) const {
  if (i < 0 || i >= dim()) throw std::out_of_range("ConstraintSpace::basis_matrix");
  return unvec(basis_.col(i), l_, q_);
}

Eigen::VectorXd ConstraintSpace::coefficients(const Eigen::MatrixXd& M) const {
  if (M.rows() != l_ || M.cols() != q_) {
    throw std::invalid_argument("ConstraintSpace: matrix shape mismatch");
  }
  return basis_.transpose() * vec(M);
}

ConstraintSpace::Projection ConstraintSpace::project(const Eigen::MatrixXd& M) const {
  if (M.rows() != l_ || M.cols() != q_) {
    throw std::invalid_argument("ConstraintSpace: matrix shape mismatch");
  }
  const Eigen::VectorXd x = vec(M);
  if (dim() == 0) return {Eigen::MatrixXd::Zero(l_, q_), x.norm()};
  const Eigen::VectorXd coeffs = basis_.transpose() * x;
  const Eigen::VectorXd p = basis_ * coeffs;
  return {unvec(p, l_, q_), (x - p).norm()};
}

bool ConstraintSpace::contains(const Eigen::MatrixXd& M, double tol) const {
  const double norm = M.norm();
  if (norm == 0.0) return true;
  return project(M).residual_norm <= tol * norm;
}

namespace {

/// dim x q map A with A(i, :) = vhat^t * basis_matrix(i), so that the
/// projection coefficients of vhat (x) w are A * w.
Eigen::MatrixXd direction_coefficient_map(const ConstraintSpace& space,
                                          const Eigen::VectorXd& vhat) {
  const int l = space.l();
  const int q = space.q();
  Eigen::MatrixXd A(space.dim(), q);
  for (int i = 0; i < space.dim(); ++i) {
    const Eigen::Map<const Eigen::MatrixXd> Bi(space.basis_vectors().col(i).data(), l, q);
    A.row(i) = (vhat.transpose() * Bi);
  }
  return A;
}

Eigen::VectorXd normalized_direction(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (n == 0.0) throw std::invalid_argument("rank-one angle undefined for v = 0");
  return v / n;
}

}  // namespace

AngleResult gamma(const ConstraintSpace& space, const Eigen::VectorXd& v) {
  if (v.size() != space.l()) throw std::invalid_argument("gamma: direction dimension mismatch");
  const Eigen::VectorXd vhat = normalized_direction(v);
  const int q = space.q();
  const Eigen::MatrixXd Z = zero_sum_basis(q);

  AngleResult result;
  if (space.dim() == 0) {
    // Degenerate subspace: the infimum ranges over an empty matrix set.
    result.angle = M_PI / 2.0;
    result.witness_w = Z.col(0);
    result.witness_matrix = Eigen::MatrixXd::Zero(space.l(), q);
    result.lambda_max = 0.0;
    result.degenerate = true;
    return result;
  }

  // Q(w) = ||P_W(vhat (x) Z c)||^2 = ||A Z c||^2 on unit c in R^{q-1}.
  const Eigen::MatrixXd A = direction_coefficient_map(space, vhat);
  const Eigen::MatrixXd C = A * Z;                    // dim x (q-1)
  const Eigen::MatrixXd G = C.transpose() * C;        // (q-1) x (q-1), PSD
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gamma: eigensolver failed");
  const Eigen::Index top = eig.eigenvalues().size() - 1;
  result.lambda_max = eig.eigenvalues()[top];
  result.witness_w = Z * eig.eigenvectors().col(top);
  result.witness_w.normalize();

  // Evaluate the angle at the witness from the explicit residual. At a
  // critical point of the quadratic form the first-order error vanishes, so
  // this is accurate to machine precision even when lambda_max is within
  // rounding of 0 or 1.
  const Eigen::MatrixXd M = vhat * result.witness_w.transpose();
  const ConstraintSpace::Projection proj = space.project(M);
  result.witness_matrix = proj.projection;
  result.angle = std::atan2(proj.residual_norm, proj.projection.norm());
  return result;
}

double gamma_bruteforce(const ConstraintSpace& space, const Eigen::VectorXd& v,
                        std::int64_t samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("gamma_bruteforce: samples must be >= 1");
  if (v.size() != space.l()) {
    throw std::invalid_argument("gamma_bruteforce: direction dimension mismatch");
  }
  const Eigen::VectorXd vhat = normalized_direction(v);
  const int q = space.q();
  if (space.dim() == 0) return M_PI / 2.0;

  const Eigen::MatrixXd A = direction_coefficient_map(space, vhat);
  const Eigen::MatrixXd Z = zero_sum_basis(q);
  std::mt19937_64 rng = make_engine(seed);
  std::normal_distribution<double> normal;

  Eigen::VectorXd c(q - 1), w(q), coeffs(space.dim());
  double best = M_PI / 2.0;
  for (std::int64_t s = 0; s < samples; ++s) {
    double norm2 = 0.0;
    for (int i = 0; i < q - 1; ++i) {
      c[i] = normal(rng);
      norm2 += c[i] * c[i];
    }
    if (norm2 < 1e-24) continue;
    w.noalias() = Z * c;
    w /= std::sqrt(norm2);
    coeffs.noalias() = A * w;  // ||vhat (x) w|| = 1, so cos = ||coeffs||
    const double cosine = std::min(1.0, coeffs.norm());
    best = std::min(best, std::acos(cosine));
  }
  return best;
}

WaveConeResult wave_cone_member(const ConstraintSpace& space, const Eigen::VectorXd& v,
                                double tol) {
  if (tol <= 0.0) throw std::invalid_argument("wave_cone_member: tol must be positive");
  WaveConeResult r;
  r.detail = gamma(space, v);
  r.member = r.detail.angle <= tol;
  return r;
}

double angle_to_matrix(const Eigen::VectorXd& v, const Eigen::MatrixXd& D) {
  const Eigen::VectorXd vhat = normalized_direction(v);
  if (vhat.size() != D.rows()) throw std::invalid_argument("angle_to_matrix: shape mismatch");
  const double total = D.squaredNorm();
  if (total == 0.0) throw std::invalid_argument("angle_to_matrix: D = 0");
  const double aligned = (vhat.transpose() * D).squaredNorm();
  const double ratio = std::sqrt(std::min(1.0, aligned / total));
  return std::acos(ratio);
}

using nlohmann::json;

void save_subspace_json(const ConstraintSpace& space, std::ostream& out) {
  json j;
  j["q"] = space.q();
  j["l"] = space.l();
  json basis = json::array();
  for (int i = 0; i < space.dim(); ++i) {
    const Eigen::MatrixXd M = space.basis_matrix(i);
    json flat = json::array();
    for (int r = 0; r < M.rows(); ++r) {
      for (int c = 0; c < M.cols(); ++c) flat.push_back(M(r, c));
    }
    basis.push_back(std::move(flat));
  }
  j["basis"] = std::move(basis);
  out << j.dump() << '\n';
}

void save_subspace_json(const ConstraintSpace& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_subspace_json: cannot open " + path);
  save_subspace_json(space, out);
}

ConstraintSpace load_subspace_json(std::istream& in) {
  json j = json::parse(in);
  const int q = j.at("q").get<int>();
  const int l = j.at("l").get<int>();
  std::vector<Eigen::MatrixXd> mats;
  for (const json& flat : j.at("basis")) {
    if (static_cast<int>(flat.size()) != l * q) {
      throw std::invalid_argument("load_subspace_json: basis entry has wrong size");
    }
    Eigen::MatrixXd M(l, q);
    std::size_t k = 0;
    for (int r = 0; r < l; ++r) {
      for (int c = 0; c < q; ++c) M(r, c) = flat[k++].get<double>();
    }
    mats.push_back(std::move(M));
  }
  // Keep an already-orthonormal basis verbatim so save/load round-trips.
  if (!mats.empty()) {
    Eigen::MatrixXd B(l * q, static_cast<Eigen::Index>(mats.size()));
    for (std::size_t i = 0; i < mats.size(); ++i) {
      B.col(static_cast<Eigen::Index>(i)) =
          Eigen::Map<const Eigen::VectorXd>(mats[i].data(), l * q);
    }
    const Eigen::MatrixXd gram = B.transpose() * B;
    const double defect =
        (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (defect <= kOrthonormalityTol) {
      return ConstraintSpace::from_orthonormal_basis(q, l, std::move(B));
    }
  }
  return ConstraintSpace::from_spanning_set(q, l, mats);
}

ConstraintSpace load_subspace_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_subspace_json: cannot open " + path);
  return load_subspace_json(in);
}

}  // namespace treebv
