#include "treebv/fourier_bv.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>

namespace treebv {

namespace {

using Complex = std::complex<double>;

Complex unit_root(int m, long long k) {
  // e^{2 pi i k / m}
  const double angle = 2.0 * M_PI * static_cast<double>(((k % m) + m) % m) / m;
  return {std::cos(angle), std::sin(angle)};
}

}  // namespace

Eigen::Matrix2cd complex_view(const Eigen::VectorXd& v) {
  if (v.size() != kBVValueDim) {
    throw std::invalid_argument("complex_view: expected an 8-dimensional value");
  }
  Eigen::Matrix2cd M;
  M(0, 0) = {v[0], v[1]};
  M(0, 1) = {v[2], v[3]};
  M(1, 0) = {v[4], v[5]};
  M(1, 1) = {v[6], v[7]};
  return M;
}

Eigen::VectorXd real_view(const Eigen::Matrix2cd& M) {
  Eigen::VectorXd v(kBVValueDim);
  v << M(0, 0).real(), M(0, 0).imag(), M(0, 1).real(), M(0, 1).imag(), M(1, 0).real(),
      M(1, 0).imag(), M(1, 1).real(), M(1, 1).imag();
  return v;
}

int site_index(int m, int x1, int x2) {
  const int a = ((x1 % m) + m) % m;
  const int b = ((x2 % m) + m) % m;
  return a * m + b;
}

std::pair<int, int> site_coords(int m, int k) {
  if (k < 0 || k >= m * m) throw std::out_of_range("site_coords: son index out of range");
  return {k / m, k % m};
}

TorusFunction dft2(const TorusFunction& f) {
  const int m = f.m;
  if (m < 2 || f.values.rows() != m || f.values.cols() != m) {
    throw std::invalid_argument("dft2: values must be an m x m grid with m >= 2");
  }
  TorusFunction out{m, Eigen::MatrixXcd::Zero(m, m)};
  for (int g1 = 0; g1 < m; ++g1) {
    for (int g2 = 0; g2 < m; ++g2) {
      Complex acc = 0.0;
      for (int x1 = 0; x1 < m; ++x1) {
        for (int x2 = 0; x2 < m; ++x2) {
          acc += f.values(x1, x2) * unit_root(m, -(static_cast<long long>(g1) * x1 +
                                                  static_cast<long long>(g2) * x2));
        }
      }
      out.values(g1, g2) = acc;
    }
  }
  return out;
}

TorusFunction idft2(const TorusFunction& fhat) {
  const int m = fhat.m;
  if (m < 2 || fhat.values.rows() != m || fhat.values.cols() != m) {
    throw std::invalid_argument("idft2: values must be an m x m grid with m >= 2");
  }
  TorusFunction out{m, Eigen::MatrixXcd::Zero(m, m)};
  const double scale = 1.0 / (static_cast<double>(m) * m);
  for (int x1 = 0; x1 < m; ++x1) {
    for (int x2 = 0; x2 < m; ++x2) {
      Complex acc = 0.0;
      for (int g1 = 0; g1 < m; ++g1) {
        for (int g2 = 0; g2 < m; ++g2) {
          acc += fhat.values(g1, g2) * unit_root(m, static_cast<long long>(g1) * x1 +
                                                     static_cast<long long>(g2) * x2);
        }
      }
      out.values(x1, x2) = scale * acc;
    }
  }
  return out;
}

FrequencySymbol frequency_symbol(int m, int g1, int g2) {
  if (m < 2) throw std::invalid_argument("frequency_symbol: m must be >= 2");
  g1 = ((g1 % m) + m) % m;
  g2 = ((g2 % m) + m) % m;
  if (g1 == 0 && g2 == 0) {
    throw std::invalid_argument("frequency_symbol: frequency must be nonzero");
  }
  FrequencySymbol sym;
  sym.g1 = g1;
  sym.g2 = g2;
  sym.s[0] = unit_root(m, g1) - 1.0;
  sym.s[1] = unit_root(m, g2) - 1.0;
  return sym;
}

ConstraintSpace bv_space(int m) {
  if (m < 2) throw std::invalid_argument("bv_space: m must be >= 2");
  const int q = m * m;
  std::vector<Eigen::MatrixXd> generators;
  generators.reserve(4 * static_cast<std::size_t>(q));

  // impulses f = c * delta_y (and likewise for g), c in {1, i}
  for (int row = 0; row < 2; ++row) {       // 0: f drives row 1, 1: g drives row 2
    for (int part = 0; part < 2; ++part) {  // 0: real impulse, 1: imaginary
      for (int y = 0; y < q; ++y) {
        const auto [y1, y2] = site_coords(m, y);
        const Complex c = (part == 0) ? Complex{1.0, 0.0} : Complex{0.0, 1.0};
        Eigen::MatrixXd G(kBVValueDim, q);
        for (int x = 0; x < q; ++x) {
          const auto [x1, x2] = site_coords(m, x);
          const auto impulse = [&](int a1, int a2) -> Complex {
            return (((a1 % m) + m) % m == y1 && ((a2 % m) + m) % m == y2) ? c : Complex{0.0};
          };
          Eigen::Matrix2cd M = Eigen::Matrix2cd::Zero();
          M(row, 0) = impulse(x1 + 1, x2) - impulse(x1, x2);
          M(row, 1) = impulse(x1, x2 + 1) - impulse(x1, x2);
          G.col(x) = real_view(M);
        }
        generators.push_back(std::move(G));
      }
    }
  }
  return ConstraintSpace::from_spanning_set(q, kBVValueDim, generators);
}

double fourier_residual(int m, const Eigen::MatrixXd& D) {
  const int q = m * m;
  if (D.rows() != kBVValueDim || D.cols() != q) {
    throw std::invalid_argument("fourier_residual: expected an 8 x m^2 matrix");
  }
  const double total = D.norm();
  if (total == 0.0) return 0.0;

  double residual2 = 0.0;
  for (int g1 = 0; g1 < m; ++g1) {
    for (int g2 = 0; g2 < m; ++g2) {
      Eigen::Matrix2cd hat = Eigen::Matrix2cd::Zero();
      for (int x = 0; x < q; ++x) {
        const auto [x1, x2] = site_coords(m, x);
        hat += complex_view(D.col(x)) * unit_root(m, -(static_cast<long long>(g1) * x1 +
                                                       static_cast<long long>(g2) * x2));
      }
      if (g1 == 0 && g2 == 0) {
        residual2 += hat.squaredNorm();  // zero column sums
        continue;
      }
      const FrequencySymbol sym = frequency_symbol(m, g1, g2);
      const double s2 = sym.s.squaredNorm();
      for (int row = 0; row < 2; ++row) {
        const Eigen::Vector2cd r = hat.row(row).transpose();
        const Eigen::Vector2cd off = r - (sym.s.dot(r) / s2) * sym.s;
        residual2 += off.squaredNorm();
      }
    }
  }
  // Parseval: the transform has norm m * ||D||
  return std::sqrt(residual2) / (m * total);
}

bool fourier_membership(int m, const Eigen::MatrixXd& D, double tol) {
  return fourier_residual(m, D) <= tol;
}

Eigen::VectorXd bv_wave_cone_sample(int m, int g1, int g2, Complex a, Complex b) {
  if (std::abs(a) == 0.0 && std::abs(b) == 0.0) {
    throw std::invalid_argument("bv_wave_cone_sample: (a, b) must be nonzero");
  }
  const FrequencySymbol sym = frequency_symbol(m, g1, g2);
  Eigen::Matrix2cd M;
  M.row(0) = a * sym.s.transpose();
  M.row(1) = b * sym.s.transpose();
  return real_view(M);
}

std::vector<std::pair<int, int>> wave_cone_frequencies(int m) {
  if (m < 2) throw std::invalid_argument("wave_cone_frequencies: m must be >= 2");
  std::vector<std::pair<int, int>> out;
  for (int g1 = 0; g1 < m; ++g1) {
    for (int g2 = 0; g2 < m; ++g2) {
      if (g1 == 0 && g2 == 0) continue;
      if (g1 == 0 || g2 == 0 || g1 == g2) out.emplace_back(g1, g2);
    }
  }
  return out;
}

double rank_one_defect(const Eigen::VectorXd& v) {
  const double n2 = v.squaredNorm();
  if (n2 == 0.0) return 0.0;
  return std::abs(complex_view(v).determinant()) / (0.5 * n2);
}

bool rank_one_check(const Eigen::VectorXd& v, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("rank_one_check: tol must be positive");
  return rank_one_defect(v) <= tol;
}

}  // namespace treebv
