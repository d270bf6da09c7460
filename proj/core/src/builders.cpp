#include "treebv/builders.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "treebv/errors.hpp"
#include "treebv/rng.hpp"

namespace treebv {

namespace {

constexpr double kBuilderMembershipTol = 1e-10;

/// Fills the leaf range of the subtree rooted at (depth n, index i) with a
/// constant martingale value.
void fill_subtree(Eigen::MatrixXd& leaf_F, const TreeShape& shape, int n, std::int64_t index,
                  const Eigen::VectorXd& value) {
  std::int64_t width = 1;
  for (int k = n; k < shape.depth; ++k) width *= shape.q;
  leaf_F.middleCols(index * width, width).colwise() = value;
}

std::int64_t pick_heavy(const CascadeSpec& spec, const Eigen::VectorXd& w,
                        std::mt19937_64& rng) {
  switch (spec.heavy_rule) {
    case CascadeSpec::HeavyRule::FirstSon:
      return 0;
    case CascadeSpec::HeavyRule::LargestWeight: {
      Eigen::Index best = 0;
      w.maxCoeff(&best);
      return best;
    }
    case CascadeSpec::HeavyRule::SeededRandom: {
      std::uniform_int_distribution<std::int64_t> pick(0, spec.q() - 1);
      return pick(rng);
    }
  }
  return 0;
}

}  // namespace

void CascadeSpec::validate() const {
  if (direction.size() < 1 || direction.norm() == 0.0) {
    throw std::invalid_argument("CascadeSpec: direction must be nonzero");
  }
  if (q() < 3) throw std::invalid_argument("CascadeSpec: weight must have q >= 3 entries");
  if (depth < 1) throw std::invalid_argument("CascadeSpec: depth must be >= 1");
  const double sum = weight.sum();
  if (std::abs(sum) > 1e-10 * (1.0 + weight.norm())) {
    throw ConstraintViolation("CascadeSpec: weight must have zero sum (mass conservation)");
  }
  if (!level_scales.empty() && static_cast<int>(level_scales.size()) != depth) {
    throw std::invalid_argument("CascadeSpec: level_scales must have one entry per level");
  }
  if (!allow_signed) {
    for (int n = 0; n < depth; ++n) {
      const double t = level_scales.empty() ? 1.0 : level_scales[static_cast<std::size_t>(n)];
      if ((1.0 + t * weight.array()).minCoeff() < -1e-12) {
        throw ConstraintViolation(
            "CascadeSpec: multiplier 1 + w_i is negative (pass allow_signed to permit)");
      }
    }
  }
}

namespace {

TruncatedMeasure build_cascade(const CascadeSpec& spec, const ConstraintSpace* space) {
  spec.validate();
  const int q = spec.q();
  const TreeShape shape{q, spec.depth, static_cast<int>(spec.direction.size())};
  shape.validate();
  const Eigen::VectorXd vhat = spec.direction / spec.direction.norm();
  std::mt19937_64 rng = make_engine(spec.heavy_seed);

  const auto check_membership = [&](const Eigen::VectorXd& w, int level) {
    if (space != nullptr && w.norm() > 0.0) {
      const Eigen::MatrixXd increment = vhat * w.transpose();
      if (!space->contains(increment, kBuilderMembershipTol)) {
        throw ConstraintViolation("cascade_measure: direction (x) weight is not in W at level " +
                                  std::to_string(level));
      }
    }
  };

  if (spec.everywhere) {
    // product cascade: every atom multiplies son j by (1 + w_j)
    Eigen::RowVectorXd sizes = Eigen::RowVectorXd::Ones(1);
    for (int n = 0; n < shape.depth; ++n) {
      const double t =
          spec.level_scales.empty() ? 1.0 : spec.level_scales[static_cast<std::size_t>(n)];
      const Eigen::VectorXd w = t * spec.weight;
      check_membership(w, n);
      Eigen::RowVectorXd next(shape.atoms_at(n + 1));
      for (std::int64_t i = 0; i < shape.atoms_at(n); ++i) {
        for (int j = 0; j < q; ++j) next[i * q + j] = (1.0 + w[j]) * sizes[i];
      }
      sizes.swap(next);
    }
    return TruncatedMeasure::from_leaf_martingale(shape, vhat * sizes);
  }

  Eigen::MatrixXd leaf_F(shape.l, shape.leaf_count());
  Eigen::VectorXd value = vhat;  // F at the current on-path atom
  std::int64_t index = 0;
  for (int n = 0; n < shape.depth; ++n) {
    const double t = spec.level_scales.empty() ? 1.0
                                               : spec.level_scales[static_cast<std::size_t>(n)];
    Eigen::VectorXd w = t * spec.weight;
    const std::int64_t heavy = pick_heavy(spec, w, rng);
    if (spec.heavy_rule == CascadeSpec::HeavyRule::SeededRandom && heavy != 0) {
      std::swap(w[0], w[heavy]);
    }
    if (value.norm() > 0.0) check_membership(w, n);
    for (int j = 0; j < q; ++j) {
      const Eigen::VectorXd son_value = (1.0 + w[j]) * value;
      if (j == heavy) continue;
      fill_subtree(leaf_F, shape, n + 1, index * q + j, son_value);
    }
    value = (1.0 + w[heavy]) * value;
    index = index * q + heavy;
  }
  leaf_F.col(index) = value;
  return TruncatedMeasure::from_leaf_martingale(shape, leaf_F);
}

}  // namespace

TruncatedMeasure cascade_measure(const CascadeSpec& spec) { return build_cascade(spec, nullptr); }

TruncatedMeasure cascade_measure(const CascadeSpec& spec, const ConstraintSpace& space) {
  if (space.l() != spec.direction.size() || space.q() != spec.q()) {
    throw std::invalid_argument("cascade_measure: spec does not match the subspace shape");
  }
  return build_cascade(spec, &space);
}

TruncatedMeasure uniform_direction_measure(TreeShape shape, const Eigen::VectorXd& v) {
  shape.validate();
  if (v.size() != shape.l) {
    throw std::invalid_argument("uniform_direction_measure: dimension mismatch");
  }
  Eigen::MatrixXd leaf_F(shape.l, shape.leaf_count());
  leaf_F.colwise() = v;
  return TruncatedMeasure::from_leaf_martingale(shape, leaf_F);
}

TruncatedMeasure random_W_measure(const ConstraintSpace& space, int depth, double scale,
                                  std::uint64_t seed) {
  if (scale < 0.0) throw std::invalid_argument("random_W_measure: scale must be >= 0");
  const TreeShape shape{space.q(), depth, space.l()};
  shape.validate();
  std::mt19937_64 rng = make_engine(seed);
  std::normal_distribution<double> normal;

  Eigen::MatrixXd current = Eigen::VectorXd::Unit(shape.l, 0);  // F_0
  for (int n = 0; n < depth; ++n) {
    Eigen::MatrixXd next(shape.l, shape.atoms_at(n + 1));
    for (std::int64_t i = 0; i < shape.atoms_at(n); ++i) {
      Eigen::VectorXd coeffs(space.dim());
      for (int k = 0; k < space.dim(); ++k) coeffs[k] = scale * normal(rng);
      const Eigen::VectorXd flat = space.basis_vectors() * coeffs;
      const Eigen::Map<const Eigen::MatrixXd> D(flat.data(), shape.l, shape.q);
      for (int j = 0; j < shape.q; ++j) {
        next.col(i * shape.q + j) = current.col(i) + D.col(j);
      }
    }
    current.swap(next);
  }
  return TruncatedMeasure::from_leaf_martingale(shape, current);
}

TruncatedMeasure lemma2_compliant_measure(const ConstraintSpace& space, int depth, double eta,
                                          double delta, std::uint64_t seed, int max_retries) {
  if (eta <= 0.0 || eta > M_PI / 2.0) {
    throw std::invalid_argument("lemma2_compliant_measure: eta must lie in (0, pi/2]");
  }
  if (delta <= 0.0 || delta >= 1.0) {
    throw std::invalid_argument("lemma2_compliant_measure: delta must lie in (0, 1)");
  }
  if (space.dim() == 0) {
    throw SamplingError("lemma2_compliant_measure: W = {0} admits no nonzero increments");
  }
  const TreeShape shape{space.q(), depth, space.l()};
  shape.validate();
  std::mt19937_64 rng = make_engine(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.5, 1.0);

  Eigen::MatrixXd current = Eigen::VectorXd::Unit(shape.l, 0);
  for (int n = 0; n < depth; ++n) {
    Eigen::MatrixXd next(shape.l, shape.atoms_at(n + 1));
    for (std::int64_t i = 0; i < shape.atoms_at(n); ++i) {
      const Eigen::VectorXd value = current.col(i);
      const double value_norm = value.norm();
      Eigen::MatrixXd D = Eigen::MatrixXd::Zero(shape.l, shape.q);
      if (value_norm > 0.0) {
        bool accepted = false;
        for (int attempt = 0; attempt < max_retries && !accepted; ++attempt) {
          Eigen::VectorXd coeffs(space.dim());
          for (int k = 0; k < space.dim(); ++k) coeffs[k] = normal(rng);
          const Eigen::VectorXd flat = space.basis_vectors() * coeffs;
          const Eigen::Map<const Eigen::MatrixXd> draw(flat.data(), shape.l, shape.q);
          const double size = draw.colwise().norm().sum();
          if (size < 1e-20) continue;
          if (angle_to_matrix(value, draw) < eta) continue;
          D = draw * (delta * uniform(rng) * value_norm / size);
          accepted = true;
        }
        if (!accepted) {
          throw SamplingError(
              "lemma2_compliant_measure: angle condition unmet after max_retries draws");
        }
      }
      for (int j = 0; j < shape.q; ++j) {
        next.col(i * shape.q + j) = value + D.col(j);
      }
    }
    current.swap(next);
  }
  return TruncatedMeasure::from_leaf_martingale(shape, current);
}

TruncatedMeasure mixture(const std::vector<TruncatedMeasure>& measures,
                         const std::vector<double>& weights) {
  if (measures.empty()) throw std::invalid_argument("mixture: need at least one measure");
  if (measures.size() != weights.size()) {
    throw std::invalid_argument("mixture: one weight per measure");
  }
  const TreeShape& shape = measures.front().shape();
  for (const TruncatedMeasure& m : measures) {
    if (!(m.shape() == shape)) throw std::invalid_argument("mixture: shape mismatch");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("mixture: weights must be finite");
  }
  Eigen::MatrixXd leaves = weights[0] * measures[0].leaf_values();
  for (std::size_t i = 1; i < measures.size(); ++i) {
    leaves += weights[i] * measures[i].leaf_values();
  }
  return TruncatedMeasure(shape, std::move(leaves));
}

AdversarialResult adversarial_concentration(const ConstraintSpace& space,
                                            const Eigen::VectorXd& v, int depth,
                                            double step_scale) {
  if (v.size() != space.l()) {
    throw std::invalid_argument("adversarial_concentration: direction dimension mismatch");
  }
  if (v.norm() == 0.0) {
    throw std::invalid_argument("adversarial_concentration: direction must be nonzero");
  }
  if (step_scale <= 0.0) {
    throw std::invalid_argument("adversarial_concentration: step_scale must be positive");
  }
  const TreeShape shape{space.q(), depth, space.l()};
  shape.validate();
  const Eigen::VectorXd vhat = v / v.norm();

  Eigen::VectorXd w_star(shape.q);
  w_star.setConstant(-step_scale);
  w_star[0] = step_scale * (shape.q - 1.0);

  Eigen::MatrixXd leaf_F = Eigen::MatrixXd::Zero(shape.l, shape.leaf_count());
  std::vector<AdversarialRow> rows;
  bool stalled = false;

  Eigen::VectorXd value = vhat;
  std::int64_t index = 0;
  int n = 0;
  for (; n < depth; ++n) {
    AdversarialRow row;
    row.depth = n;
    row.ratio = value.norm();
    row.angle_to_v = std::acos(std::clamp(vhat.dot(value) / value.norm(), -1.0, 1.0));
    row.gamma_to_W = gamma(space, value).angle;

    const Eigen::MatrixXd target = value * w_star.transpose();
    const ConstraintSpace::Projection proj = space.project(target);
    const Eigen::MatrixXd& D = proj.projection;
    const double target_norm = target.norm();
    row.residual_fraction = target_norm > 0.0 ? proj.residual_norm / target_norm : 0.0;
    row.increment_fraction = D.colwise().norm().sum() / value.norm();
    row.angle_to_increment = D.norm() > 0.0 ? angle_to_matrix(value, D)
                                            : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);

    for (int j = 1; j < shape.q; ++j) {
      fill_subtree(leaf_F, shape, n + 1, index * shape.q + j, value + D.col(j));
    }
    value += D.col(0);
    index *= shape.q;
    if (value.norm() == 0.0) {
      stalled = true;
      fill_subtree(leaf_F, shape, n + 1, index, value);
      break;
    }
  }
  if (!stalled) {
    leaf_F.col(index) = value;
    AdversarialRow final_row;
    final_row.depth = depth;
    final_row.ratio = value.norm();
    final_row.angle_to_v = std::acos(std::clamp(vhat.dot(value) / value.norm(), -1.0, 1.0));
    final_row.gamma_to_W = gamma(space, value).angle;
    final_row.residual_fraction = std::numeric_limits<double>::quiet_NaN();
    final_row.increment_fraction = std::numeric_limits<double>::quiet_NaN();
    final_row.angle_to_increment = std::numeric_limits<double>::quiet_NaN();
    rows.push_back(final_row);
  }

  AdversarialResult result{TruncatedMeasure::from_leaf_martingale(shape, leaf_F),
                           std::move(rows), stalled};
  return result;
}

}  // namespace treebv
