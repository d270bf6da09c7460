#pragma once

#include <Eigen/Core>
#include <complex>
#include <utility>
#include <vector>

#include "treebv/constraint_space.hpp"

namespace treebv {

/// Value dimension of the BV-type specialization: R^8 identified with the
/// 2x2 complex matrices. The real layout is row-major with interleaved
/// real/imaginary parts: (Re M11, Im M11, Re M12, Im M12, Re M21, Im M21,
/// Re M22, Im M22). The identification is an isometry (Euclidean norm on
/// R^8 equals the Hilbert-Schmidt norm on C^{2x2}).
inline constexpr int kBVValueDim = 8;

Eigen::Matrix2cd complex_view(const Eigen::VectorXd& v);
Eigen::VectorXd real_view(const Eigen::Matrix2cd& M);

/// Son index k <-> site (k div m, k mod m) of the discrete torus (Z/mZ)^2.
int site_index(int m, int x1, int x2);
std::pair<int, int> site_coords(int m, int k);

/// A complex-valued function on the m x m discrete torus; values(x1, x2).
struct TorusFunction {
  int m = 0;
  Eigen::MatrixXcd values;
};

/// Unnormalized forward transform, fhat(g) = sum_x f(x) e^{-2 pi i <g,x>/m};
/// the inverse carries the 1/m^2 factor.
TorusFunction dft2(const TorusFunction& f);
TorusFunction idft2(const TorusFunction& fhat);

/// Frequency symbol s(g) = (e^{2 pi i g1/m} - 1, e^{2 pi i g2/m} - 1); the
/// admissible plane at frequency g consists of the 2x2 complex matrices
/// whose rows are complex multiples of s(g).
struct FrequencySymbol {
  int g1 = 0;
  int g2 = 0;
  Eigen::Vector2cd s;
};
FrequencySymbol frequency_symbol(int m, int g1, int g2);

/// The BV-type constraint space on q = m^2 sons and l = 8: the span of all
/// increment matrices obtained from pairs of complex functions (f, g) on the
/// torus via periodic forward differences,
///   D(x) = [ f(x+e1)-f(x), f(x+e2)-f(x) ; g(x+e1)-g(x), g(x+e2)-g(x) ].
/// Its dimension is 4 m^2 - 4 (constant (f, g) pairs fall in the kernel).
ConstraintSpace bv_space(int m);

/// Frequency-side membership test for the same space: the componentwise
/// transform of the C^{2x2}-valued column function must vanish at g = 0 and
/// have both rows parallel to s(g) at every g != 0. `tol` bounds the total
/// residual relative to the transform norm. Agrees with the projection test
/// of bv_space(m) on all inputs.
bool fourier_membership(int m, const Eigen::MatrixXd& D, double tol = 1e-9);
double fourier_residual(int m, const Eigen::MatrixXd& D);  ///< relative residual

/// The rank-one direction s(g) (x) (a, b) as an R^8 value: the 2x2 complex
/// matrix with rows (a s1, a s2) and (b s1, b s2). Throws on g = 0 or
/// (a, b) = 0.
Eigen::VectorXd bv_wave_cone_sample(int m, int g1, int g2, std::complex<double> a,
                                    std::complex<double> b);

/// Frequencies g != 0 whose symbol directions admit a real zero-sum witness
/// weight, i.e. whose planes genuinely lie in the wave cone of bv_space(m).
/// A real weight has a Hermitian spectrum, so its support pairs g with -g and
/// the symbol must be parallel to its own conjugate: g1 = 0, g2 = 0 or
/// g1 = g2 (mod m). For m = 2 every nonzero frequency qualifies.
std::vector<std::pair<int, int>> wave_cone_frequencies(int m);

/// Scale-normalized rank-one test of the complex-matrix view:
/// |det| <= tol * ||v||^2 / 2.
bool rank_one_check(const Eigen::VectorXd& v, double tol);
double rank_one_defect(const Eigen::VectorXd& v);  ///< |det| / (||v||^2 / 2)

}  // namespace treebv
