#include "treebv/atom_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "treebv/constraint_space.hpp"
#include "treebv/errors.hpp"
#include "treebv/rng.hpp"

namespace treebv {

namespace {

constexpr double kDeficitSlack = 1e-12;  // relative rounding allowance

/// Per-level column norms of nu.
std::vector<Eigen::RowVectorXd> level_norms(const TruncatedMeasure& m) {
  std::vector<Eigen::RowVectorXd> norms(static_cast<std::size_t>(m.shape().depth) + 1);
  for (int n = 0; n <= m.shape().depth; ++n) {
    norms[static_cast<std::size_t>(n)] = m.level_values(n).colwise().norm();
  }
  return norms;
}

/// Scale-free flatness test: with N = ||nu(omega)|| and S the sum of the
/// sons' ||nu||, the atom is flat iff S < (1 + eps) N, with the zero-atom
/// convention S == 0 -> flat.
bool flat_from_norms(double parent_norm, double sons_sum, double eps) {
  if (parent_norm == 0.0) return sons_sum == 0.0;
  return sons_sum < (1.0 + eps) * parent_norm;
}

/// Flat flags for every atom of depth 0..N-1.
std::vector<std::vector<char>> flat_flags(const TruncatedMeasure& m, double eps,
                                          const std::vector<Eigen::RowVectorXd>& norms) {
  const TreeShape& shape = m.shape();
  std::vector<std::vector<char>> flags(static_cast<std::size_t>(shape.depth));
  for (int n = 0; n < shape.depth; ++n) {
    const Eigen::RowVectorXd& here = norms[static_cast<std::size_t>(n)];
    const Eigen::RowVectorXd& below = norms[static_cast<std::size_t>(n) + 1];
    std::vector<char>& f = flags[static_cast<std::size_t>(n)];
    f.resize(static_cast<std::size_t>(shape.atoms_at(n)));
    for (std::int64_t i = 0; i < shape.atoms_at(n); ++i) {
      const double sons_sum = below.segment(i * shape.q, shape.q).sum();
      f[static_cast<std::size_t>(i)] = flat_from_norms(here[i], sons_sum, eps) ? 1 : 0;
    }
  }
  return flags;
}

}  // namespace

AtomClassification classify_atom(const Eigen::VectorXd& a, const Eigen::MatrixXd& D,
                                 double eps) {
  if (eps < 0.0 || eps >= 1.0) {
    throw std::invalid_argument("classify_atom: eps must lie in [0, 1)");
  }
  if (D.rows() != a.size()) throw std::invalid_argument("classify_atom: shape mismatch");
  const double a_norm = a.norm();
  double mean = 0.0;
  for (Eigen::Index j = 0; j < D.cols(); ++j) mean += (a + D.col(j)).norm();
  mean /= static_cast<double>(D.cols());

  AtomClassification c;
  c.excess = mean - a_norm;
  c.threshold = eps * a_norm;
  if (a_norm == 0.0) {
    c.label = (D.norm() == 0.0) ? AtomLabel::Flat : AtomLabel::Convex;
  } else {
    c.label = (c.excess >= c.threshold) ? AtomLabel::Convex : AtomLabel::Flat;
  }
  return c;
}

FlatForest flat_forest(const TruncatedMeasure& m, double eps) {
  if (eps <= 0.0 || eps >= 1.0) throw std::invalid_argument("flat_forest: eps must be in (0, 1)");
  const TreeShape& shape = m.shape();
  const auto norms = level_norms(m);
  const auto flags = flat_flags(m, eps, norms);

  FlatForest forest;
  forest.epsilon = eps;
  // component ids level by level; a flat atom joins its parent's component
  // when the parent is flat too, otherwise it starts a new one
  std::vector<std::vector<std::int64_t>> ids(static_cast<std::size_t>(shape.depth));
  std::int64_t next_id = 0;
  for (int n = 0; n < shape.depth; ++n) {
    const std::vector<char>& f = flags[static_cast<std::size_t>(n)];
    std::vector<std::int64_t>& id = ids[static_cast<std::size_t>(n)];
    id.assign(f.size(), -1);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(f.size()); ++i) {
      if (!f[static_cast<std::size_t>(i)]) continue;
      std::int64_t assigned = -1;
      if (n > 0) {
        const std::int64_t parent = i / shape.q;
        assigned = ids[static_cast<std::size_t>(n) - 1][static_cast<std::size_t>(parent)];
      }
      if (assigned < 0) assigned = next_id++;
      id[static_cast<std::size_t>(i)] = assigned;
    }
  }
  forest.components.resize(static_cast<std::size_t>(next_id));
  for (int n = 0; n < shape.depth; ++n) {
    const std::vector<std::int64_t>& id = ids[static_cast<std::size_t>(n)];
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(id.size()); ++i) {
      const std::int64_t c = id[static_cast<std::size_t>(i)];
      if (c >= 0) {
        forest.components[static_cast<std::size_t>(c)].push_back(
            VertexAddress::from_index(n, i, shape.q));
      }
    }
  }
  return forest;
}

LeafReport leaf_report(const TruncatedMeasure& m, double eps, int n0) {
  const TreeShape& shape = m.shape();
  if (n0 < 0 || n0 >= shape.depth) {
    throw std::invalid_argument("leaf_report: n0 must lie in [0, depth)");
  }
  const auto norms = level_norms(m);
  const auto flags = flat_flags(m, eps, norms);

  // good[i] at depth n: every ancestor at depths n0..n-1 is flat
  std::vector<char> good(static_cast<std::size_t>(shape.atoms_at(n0)), 1);
  for (int n = n0; n < shape.depth; ++n) {
    const std::vector<char>& f = flags[static_cast<std::size_t>(n)];
    std::vector<char> next(static_cast<std::size_t>(shape.atoms_at(n + 1)));
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(next.size()); ++i) {
      const std::int64_t parent = i / shape.q;
      next[static_cast<std::size_t>(i)] =
          good[static_cast<std::size_t>(parent)] && f[static_cast<std::size_t>(parent)];
    }
    good.swap(next);
  }

  LeafReport report;
  report.epsilon = eps;
  report.start_depth = n0;
  const Eigen::RowVectorXd& leaf_norms = norms[static_cast<std::size_t>(shape.depth)];
  for (std::int64_t i = 0; i < shape.leaf_count(); ++i) {
    if (good[static_cast<std::size_t>(i)]) {
      report.leaf_atoms.push_back(VertexAddress::from_index(shape.depth, i, shape.q));
      report.captured_mass += leaf_norms[i];
    }
  }
  return report;
}

LeafReport component_leaf_report(const TruncatedMeasure& m, double eps,
                                 const std::vector<VertexAddress>& component) {
  const TreeShape& shape = m.shape();
  if (component.empty()) {
    LeafReport empty;
    empty.epsilon = eps;
    return empty;
  }
  // membership sets per depth; the component root is its unique shallowest vertex
  std::vector<std::unordered_set<std::int64_t>> members(
      static_cast<std::size_t>(shape.depth) + 1);
  const VertexAddress* root = &component.front();
  for (const VertexAddress& v : component) {
    if (v.depth() > shape.depth - 1) {
      throw std::invalid_argument("component_leaf_report: component contains leaf-depth atoms");
    }
    members[static_cast<std::size_t>(v.depth())].insert(v.index(shape.q));
    if (v.depth() < root->depth()) root = &v;
  }

  LeafReport report;
  report.epsilon = eps;
  report.start_depth = root->depth();
  const Eigen::RowVectorXd leaf_norms = m.leaf_values().colwise().norm();

  // descend from the component root; a leaf is captured when the whole chain
  // down to depth N-1 stays in the component
  struct Frame {
    int depth;
    std::int64_t index;
  };
  std::vector<Frame> stack{{root->depth(), root->index(shape.q)}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.depth == shape.depth) {
      report.leaf_atoms.push_back(VertexAddress::from_index(f.depth, f.index, shape.q));
      report.captured_mass += leaf_norms[f.index];
      continue;
    }
    if (!members[static_cast<std::size_t>(f.depth)].count(f.index)) continue;
    for (int j = shape.q - 1; j >= 0; --j) {
      stack.push_back({f.depth + 1, f.index * shape.q + j});
    }
  }
  return report;
}

BigLeafResult big_leaf_test(const TruncatedMeasure& m, const VertexAddress& leaf, double beta,
                            int min_witnesses, int n0) {
  const TreeShape& shape = m.shape();
  if (leaf.depth() != shape.depth) {
    throw std::invalid_argument("big_leaf_test: path must have full truncation depth");
  }
  if (beta <= 0.0) throw std::invalid_argument("big_leaf_test: beta must be positive");
  if (n0 < 0 || n0 >= shape.depth) throw std::invalid_argument("big_leaf_test: n0 out of range");

  BigLeafResult result;
  VertexAddress atom = VertexAddress::root();
  for (int n = 0; n < shape.depth; ++n) {
    if (n >= n0) {
      const Eigen::MatrixXd D = difference_matrix(m, atom);
      const double avg_increment = D.colwise().norm().sum() / shape.q;
      const double value_norm = martingale_value(m, atom).norm();
      if (avg_increment >= beta * value_norm) result.witness_depths.push_back(n);
    }
    atom = atom.child(leaf.digits()[static_cast<std::size_t>(n)]);
  }
  result.big = static_cast<int>(result.witness_depths.size()) >= min_witnesses;
  return result;
}

Lemma1Result lemma1_check(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double eps) {
  const double a_norm = a.norm();
  if (a_norm == 0.0) throw std::invalid_argument("lemma1_check: a must be nonzero");
  const AtomClassification c = classify_atom(a, D, eps);
  if (!c.flat()) {
    throw std::invalid_argument("lemma1_check: atom is not eps-flat at eps = " +
                                std::to_string(eps));
  }
  Lemma1Result r;
  r.bound = 2.0 * static_cast<double>(D.cols()) * std::sqrt(eps) * a_norm;
  const Eigen::VectorXd ahat = a / a_norm;
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    const Eigen::VectorXd orth = D.col(j) - ahat * ahat.dot(D.col(j));
    r.max_orth = std::max(r.max_orth, orth.norm());
  }
  r.holds = r.max_orth <= r.bound;
  return r;
}

FlatConfig sample_flat_config(std::mt19937_64& rng, int q, int l, double eps) {
  if (q < 3 || l < 1) throw std::invalid_argument("sample_flat_config: need q >= 3, l >= 1");
  if (eps <= 0.0 || eps >= 1.0) {
    throw std::invalid_argument("sample_flat_config: eps must be in (0, 1)");
  }
  FlatConfig cfg;
  cfg.a = unit_vector(rng, l);
  Eigen::MatrixXd D(l, q);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (int r = 0; r < l; ++r) {
      for (int c = 0; c < q; ++c) D(r, c) = std::normal_distribution<double>{}(rng);
    }
    D.colwise() -= D.rowwise().mean().eval();  // zero column sums
    if (D.norm() > 1e-8) break;
  }

  const auto excess_at = [&](double t) { return classify_atom(cfg.a, t * D, eps).excess; };
  // aim just below the flatness threshold, where the bound is tightest
  const double target = 0.9 * eps;
  double hi = 1.0;
  for (int i = 0; i < 200 && excess_at(hi) < target; ++i) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (excess_at(mid) < target ? lo : hi) = mid;
  }
  cfg.D = lo * D;
  cfg.excess = excess_at(lo);
  return cfg;
}

double p_mean_excess(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double p) {
  if (p <= 0.0 || p > 1.0) throw std::invalid_argument("p_mean_excess: p must be in (0, 1]");
  double mean = 0.0;
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    mean += std::pow((a + D.col(j)).norm(), p);
  }
  mean /= static_cast<double>(D.cols());
  return mean - std::pow(a.norm(), p);
}

bool eq14_holds(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double p) {
  return p_mean_excess(a, D, p) >= 0.0;
}

namespace {

double critical_from_norms(const Eigen::ArrayXd& son_norms, double a_norm) {
  const auto excess = [&](double p) {
    return son_norms.pow(p).mean() - std::pow(a_norm, p);
  };
  // descending scan; failures live below the critical exponent
  double p_fail = -1.0;
  for (int k = 0; k < 100; ++k) {
    const double p = 0.995 - 0.01 * k;
    if (excess(p) < 0.0) {
      p_fail = p;
      break;
    }
  }
  if (p_fail < 0.0) return 0.0;
  double lo = p_fail;
  double hi = std::min(1.0, p_fail + 0.01);
  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace

double critical_exponent(const Eigen::VectorXd& a, const Eigen::MatrixXd& D) {
  Eigen::ArrayXd son_norms(D.cols());
  for (Eigen::Index j = 0; j < D.cols(); ++j) son_norms[j] = (a + D.col(j)).norm();
  return critical_from_norms(son_norms, a.norm());
}

Lemma2Estimate lemma2_p0(const Lemma2Config& config) {
  if (config.q < 3) throw std::invalid_argument("lemma2_p0: q must be >= 3");
  if (config.l < 2) {
    throw SamplingError("lemma2_p0: a positive angle requires l >= 2");
  }
  if (config.eta <= 0.0 || config.eta > M_PI / 2.0) {
    throw std::invalid_argument("lemma2_p0: eta must lie in (0, pi/2]");
  }
  if (config.delta <= 0.0) throw std::invalid_argument("lemma2_p0: delta must be positive");
  if (config.trials < 1) throw std::invalid_argument("lemma2_p0: trials must be >= 1");

  const int q = config.q;
  const int l = config.l;
  const double cos_eta = std::cos(config.eta);
  const double cos2 = cos_eta * cos_eta;

  Lemma2Estimate est;
  std::vector<Eigen::ArrayXd> all_norms;
  all_norms.reserve(static_cast<std::size_t>(config.trials) + 4 * static_cast<std::size_t>(q));

  const auto record = [&](const Eigen::VectorXd& a, const Eigen::MatrixXd& D) {
    // correlation bound from the angle hypothesis (criterion tolerance 1e-10)
    const double lhs = (a.transpose() * D).squaredNorm();
    const double rhs = cos2 * D.squaredNorm();
    const double defect = lhs - rhs;
    est.max_eq16_defect = std::max(est.max_eq16_defect, defect);
    if (defect > 1e-10) ++est.eq16_violations;

    Eigen::ArrayXd son_norms(q);
    for (int j = 0; j < q; ++j) son_norms[j] = (a + D.col(j)).norm();
    const double critical = critical_from_norms(son_norms, 1.0);
    est.p0 = std::max(est.p0, critical);
    all_norms.push_back(std::move(son_norms));
    ++est.trials;
    if (config.collect_rows) {
      est.rows.push_back(
          {angle_to_matrix(a, D), D.colwise().norm().sum(), critical});
    }
  };

  // Deterministic boundary anchors: rank-one profiles at angle exactly eta
  // and increment budget exactly delta; these dominate the supremum.
  {
    const Eigen::VectorXd a = Eigen::VectorXd::Unit(l, 0);
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(l, 1);
    const Eigen::VectorXd u = cos_eta * a + std::sin(config.eta) * e;
    std::vector<Eigen::VectorXd> profiles;
    const Eigen::MatrixXd Z = zero_sum_basis(q);
    for (int k = 0; k < q - 1; ++k) profiles.push_back(Z.col(k));
    Eigen::VectorXd conc(q);
    conc.setConstant(-1.0);
    conc[0] = q - 1.0;
    profiles.push_back(conc);
    const std::size_t base = profiles.size();
    for (std::size_t i = 0; i < base; ++i) profiles.push_back(-profiles[i]);

    for (const Eigen::VectorXd& c : profiles) {
      const double scale = config.delta / c.lpNorm<1>();
      Eigen::MatrixXd D = u * (scale * c).transpose();
      record(a, D);
    }
  }

  std::mt19937_64 rng = make_engine(config.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  for (int trial = 0; trial < config.trials; ++trial) {
    bool accepted = false;
    for (int attempt = 0; attempt < config.max_retries && !accepted; ++attempt) {
      Eigen::VectorXd a(l);
      for (int i = 0; i < l; ++i) a[i] = normal(rng);
      const double an = a.norm();
      if (an < 1e-12) continue;
      a /= an;

      // orthogonal parts: columns perpendicular to a with zero column sums
      Eigen::MatrixXd O(l, q);
      for (int r = 0; r < l; ++r) {
        for (int c = 0; c < q; ++c) O(r, c) = normal(rng);
      }
      for (int c = 0; c < q; ++c) O.col(c) -= a * a.dot(O.col(c));
      O.colwise() -= O.rowwise().mean().eval();

      // parallel parts: a zero-sum coefficient vector
      Eigen::VectorXd par(q);
      for (int c = 0; c < q; ++c) par[c] = normal(rng);
      par.array() -= par.mean();

      const double P = par.squaredNorm();
      const double Onorm2 = O.squaredNorm();
      if (Onorm2 < 1e-20) continue;

      const bool to_boundary = (trial % 2 == 0);
      const double rho = P / (P + Onorm2);
      if (rho > cos2 || to_boundary) {
        if (P < 1e-20) continue;
        par *= std::sqrt(cos2 * Onorm2 / ((1.0 - cos2) * P));
      }

      Eigen::MatrixXd D = a * par.transpose() + O;
      const double size = D.colwise().norm().sum();
      if (size < 1e-20) continue;
      const double budget = config.delta * (to_boundary ? 1.0 : std::max(uniform(rng), 1e-3));
      D *= budget / size;

      record(a, D);
      accepted = true;
    }
    if (!accepted) {
      throw SamplingError("lemma2_p0: could not sample a compliant configuration");
    }
  }

  // re-verify the inequality for every sampled configuration above the margin
  const double start = est.p0 + config.margin;
  if (start < 1.0) {
    for (int k = 0; k < config.verify_grid; ++k) {
      const double p = start + (1.0 - start) * (k + 0.5) / config.verify_grid;
      for (const Eigen::ArrayXd& son_norms : all_norms) {
        if (son_norms.pow(p).mean() - 1.0 < 0.0) ++est.eq14_failures_above_margin;
      }
    }
  }
  return est;
}

SubmartingaleReport submartingale_check(const TruncatedMeasure& m, double p) {
  if (p <= 0.0 || p > 1.0) throw std::invalid_argument("submartingale_check: p must be in (0,1]");
  const TreeShape& shape = m.shape();
  const auto norms = level_norms(m);

  SubmartingaleReport report;
  report.max_deficit = -std::numeric_limits<double>::infinity();
  for (int n = 0; n < shape.depth; ++n) {
    const double scale_here = std::pow(static_cast<double>(shape.q), n);
    const double scale_sons = scale_here * shape.q;
    const Eigen::RowVectorXd& here = norms[static_cast<std::size_t>(n)];
    const Eigen::RowVectorXd& below = norms[static_cast<std::size_t>(n) + 1];
    for (std::int64_t i = 0; i < shape.atoms_at(n); ++i) {
      const double lhs = std::pow(scale_here * here[i], p);
      double rhs = 0.0;
      for (int j = 0; j < shape.q; ++j) {
        rhs += std::pow(scale_sons * below[i * shape.q + j], p);
      }
      rhs /= shape.q;
      const double deficit = lhs - rhs;
      report.max_deficit = std::max(report.max_deficit, deficit);
      ++report.checked;
      if (deficit > kDeficitSlack * std::max(1.0, lhs)) {
        report.violations.push_back(VertexAddress::from_index(n, i, shape.q));
      }
    }
  }
  if (report.checked == 0) report.max_deficit = 0.0;
  return report;
}

SubmartingaleReport submartingale_check(const TruncatedMeasure& m, double p,
                                        const std::vector<VertexAddress>& region) {
  if (p <= 0.0 || p > 1.0) throw std::invalid_argument("submartingale_check: p must be in (0,1]");
  const TreeShape& shape = m.shape();
  SubmartingaleReport report;
  report.max_deficit = -std::numeric_limits<double>::infinity();
  for (const VertexAddress& atom : region) {
    if (atom.depth() >= shape.depth) {
      throw std::invalid_argument("submartingale_check: region must contain internal atoms only");
    }
    const double lhs = std::pow(martingale_value(m, atom).norm(), p);
    double rhs = 0.0;
    for (int j = 0; j < shape.q; ++j) {
      rhs += std::pow(martingale_value(m, atom.child(j)).norm(), p);
    }
    rhs /= shape.q;
    const double deficit = lhs - rhs;
    report.max_deficit = std::max(report.max_deficit, deficit);
    ++report.checked;
    if (deficit > kDeficitSlack * std::max(1.0, lhs)) report.violations.push_back(atom);
  }
  if (report.checked == 0) report.max_deficit = 0.0;
  return report;
}

std::vector<double> doob_maximal_profile(const TruncatedMeasure& m) {
  const TreeShape& shape = m.shape();
  std::vector<double> profile(static_cast<std::size_t>(shape.depth) + 1);

  Eigen::RowVectorXd running = m.level_values(0).colwise().norm();  // ||F_0|| = ||nu(root)||
  profile[0] = running[0];
  for (int n = 1; n <= shape.depth; ++n) {
    const double scale = std::pow(static_cast<double>(shape.q), n);
    const Eigen::RowVectorXd norms = scale * m.level_values(n).colwise().norm();
    Eigen::RowVectorXd next(shape.atoms_at(n));
    for (std::int64_t i = 0; i < shape.atoms_at(n); ++i) {
      next[i] = std::max(running[i / shape.q], norms[i]);
    }
    running.swap(next);
    profile[static_cast<std::size_t>(n)] = running.mean();  // * q^n atoms * q^-n mass
  }
  return profile;
}

}  // namespace treebv
