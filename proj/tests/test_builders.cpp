#include <Eigen/Core>
#include <cmath>
#include <random>

#include "doctest.h"
#include "treebv/atom_analysis.hpp"
#include "treebv/builders.hpp"
#include "treebv/constraint_space.hpp"
#include "treebv/errors.hpp"
#include "treebv/rng.hpp"

using namespace treebv;

namespace {

/// Worst relative membership residual of the difference matrices over all
/// internal atoms.
double worst_residual(const TruncatedMeasure& m, const ConstraintSpace& space) {
  double worst = 0.0;
  for (int n = 0; n < m.shape().depth; ++n) {
    for (std::int64_t i = 0; i < m.shape().atoms_at(n); ++i) {
      const Eigen::MatrixXd D =
          difference_matrix(m, VertexAddress::from_index(n, i, m.shape().q));
      const double norm = D.norm();
      if (norm == 0.0) continue;
      worst = std::max(worst, space.project(D).residual_norm / norm);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("random W measure") {
  std::mt19937_64 rng{5};
  std::vector<Eigen::MatrixXd> gens;
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd G(2, 3);
    std::normal_distribution<double> normal;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) G(r, c) = normal(rng);
    }
    G.colwise() -= G.rowwise().mean().eval();
    gens.push_back(G);
  }
  const ConstraintSpace space = ConstraintSpace::from_spanning_set(3, 2, gens);

  SUBCASE("scale zero degenerates to the constant-direction measure") {
    const TruncatedMeasure m = random_W_measure(space, 4, 0.0, 7);
    for (int n = 0; n < 4; ++n) {
      for (std::int64_t i = 0; i < m.shape().atoms_at(n); ++i) {
        CHECK(difference_matrix(m, VertexAddress::from_index(n, i, 3)).norm() <= 1e-14);
      }
    }
    CHECK(martingale_value(m, VertexAddress::root())[0] == doctest::Approx(1.0));
  }

  SUBCASE("every increment lies in W") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const TruncatedMeasure m = random_W_measure(space, 5, 0.3, seed);
      CHECK(worst_residual(m, space) <= 1e-10);
    }
  }

  SUBCASE("small scale keeps every atom flat (seed-fixed)") {
    const TruncatedMeasure m = random_W_measure(space, 8, 0.01, 11);
    const FlatForest forest = flat_forest(m, 0.01);
    std::int64_t internal = 0;
    for (int n = 0; n < 8; ++n) internal += m.shape().atoms_at(n);
    REQUIRE(forest.components.size() == 1);
    CHECK(static_cast<std::int64_t>(forest.components[0].size()) == internal);
  }

  SUBCASE("determinism: same seed, same measure") {
    const TruncatedMeasure a = random_W_measure(space, 4, 0.2, 13);
    const TruncatedMeasure b = random_W_measure(space, 4, 0.2, 13);
    CHECK((a.leaf_values() - b.leaf_values()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cascade measures") {
  SUBCASE("full concentration: one atom carries everything") {
    CascadeSpec spec;
    spec.direction = Eigen::VectorXd::Unit(2, 0);
    spec.weight = Eigen::VectorXd(3);
    spec.weight << 2.0, -1.0, -1.0;
    spec.depth = 6;
    const TruncatedMeasure m = cascade_measure(spec);
    VertexAddress atom = VertexAddress::root();
    for (int n = 0; n <= 6; ++n) {
      // the path atom keeps full mass 1 against uniform mass 3^{-n}
      CHECK(m.measure_value(atom).norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(total_variation_at_depth(m, n) == doctest::Approx(1.0).epsilon(1e-12));
      if (n < 6) atom = atom.child(0);
    }
  }

  SUBCASE("partial concentration: son masses (2/3, 1/6, 1/6), ratio 2^n") {
    CascadeSpec spec;
    spec.direction = Eigen::VectorXd::Unit(2, 0);
    spec.weight = Eigen::VectorXd(3);
    spec.weight << 1.0, -0.5, -0.5;
    spec.depth = 8;
    const TruncatedMeasure m = cascade_measure(spec);
    CHECK(m.measure_value(VertexAddress({0})).norm() == doctest::Approx(2.0 / 3.0));
    CHECK(m.measure_value(VertexAddress({1})).norm() == doctest::Approx(1.0 / 6.0));
    CHECK(m.measure_value(VertexAddress({2})).norm() == doctest::Approx(1.0 / 6.0));
    VertexAddress atom = VertexAddress::root();
    for (int n = 0; n <= 8; ++n) {
      const double ratio = martingale_value(m, atom).norm();  // ||F|| = mass/uniform
      CHECK(ratio == doctest::Approx(std::pow(2.0, n)).epsilon(1e-12));
      if (n < 8) atom = atom.child(0);
    }
  }

  SUBCASE("zero weight reduces to the constant-direction measure") {
    CascadeSpec spec;
    spec.direction = Eigen::VectorXd::Unit(2, 1);
    spec.weight = Eigen::VectorXd::Zero(3);
    spec.depth = 4;
    const TruncatedMeasure m = cascade_measure(spec);
    const TruncatedMeasure u =
        uniform_direction_measure(TreeShape{3, 4, 2}, Eigen::VectorXd::Unit(2, 1));
    CHECK((m.leaf_values() - u.leaf_values()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("direction is preserved at every non-null atom") {
    std::mt19937_64 rng{7};
    CascadeSpec spec;
    spec.direction = unit_vector(rng, 3);
    spec.weight = Eigen::VectorXd(3);
    spec.weight << 1.5, -0.75, -0.75;
    spec.depth = 5;
    const TruncatedMeasure m = cascade_measure(spec);
    const Eigen::VectorXd vhat = spec.direction;
    for (int n = 0; n <= 5; ++n) {
      for (std::int64_t i = 0; i < m.shape().atoms_at(n); ++i) {
        const Eigen::VectorXd f =
            martingale_value(m, VertexAddress::from_index(n, i, 3));
        if (f.norm() == 0.0) continue;
        const Eigen::VectorXd polar = f / f.norm();
        CHECK((polar - vhat * vhat.dot(polar)).norm() <= 1e-12);
        CHECK(vhat.dot(polar) > 0.0);  // the positive ray
      }
    }
  }

  SUBCASE("concentration ratio strictly increases in depth") {
    std::mt19937_64 rng{19};
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd w = gaussian_vector(rng, 3);
      w.array() -= w.mean();
      if (w.cwiseAbs().maxCoeff() < 0.1) continue;
      w /= w.cwiseAbs().maxCoeff();  // multipliers 1 + w_i in [0, 2]
      CascadeSpec spec;
      spec.direction = unit_vector(rng, 2);
      spec.weight = w;
      spec.depth = 6;
      spec.heavy_rule = CascadeSpec::HeavyRule::LargestWeight;
      const TruncatedMeasure m = cascade_measure(spec);
      double previous = 1.0;
      for (int n = 1; n <= 6; ++n) {
        const double ratio =
            m.level_values(n).colwise().norm().maxCoeff() * std::pow(3.0, n);
        CHECK(ratio > previous);
        previous = ratio;
      }
    }
  }

  SUBCASE("weights must be zero-sum with nonnegative multipliers") {
    CascadeSpec spec;
    spec.direction = Eigen::VectorXd::Unit(2, 0);
    spec.weight = Eigen::VectorXd::Ones(3);
    spec.depth = 2;
    CHECK_THROWS_AS(cascade_measure(spec), ConstraintViolation);
    spec.weight << 3.0, -1.5, -1.5;  // multiplier 1 - 1.5 < 0
    CHECK_THROWS_AS(cascade_measure(spec), ConstraintViolation);
    spec.allow_signed = true;
    CHECK_NOTHROW(cascade_measure(spec));
  }

  SUBCASE("membership validation against a subspace") {
    std::mt19937_64 rng{23};
    const Eigen::VectorXd v0 = unit_vector(rng, 2);
    const Eigen::VectorXd w0 = zero_sum_basis(3).col(0);
    const ConstraintSpace line =
        ConstraintSpace::from_spanning_set(3, 2, {v0 * w0.transpose()});
    CascadeSpec spec;
    spec.direction = v0;
    spec.weight = 0.5 * w0;
    spec.depth = 3;
    CHECK_NOTHROW(cascade_measure(spec, line));
    spec.direction = Eigen::VectorXd(2);
    spec.direction << -v0[1], v0[0];  // orthogonal direction: v (x) w leaves W
    CHECK_THROWS_AS(cascade_measure(spec, line), ConstraintViolation);
  }
}

TEST_CASE("mixtures") {
  const TreeShape shape{3, 4, 2};
  const TruncatedMeasure u = uniform_direction_measure(shape, Eigen::VectorXd::Unit(2, 0));

  SUBCASE("identity") {
    const TruncatedMeasure m = mixture({u}, {1.0});
    CHECK((m.leaf_values() - u.leaf_values()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("mixtures of W-constrained measures stay W-constrained") {
    const ConstraintSpace full = ConstraintSpace::full_zero_sum(3, 2);
    const TruncatedMeasure a = random_W_measure(full, 4, 0.2, 1);
    const TruncatedMeasure b = random_W_measure(full, 4, 0.2, 2);
    const TruncatedMeasure m = mixture({a, b}, {0.7, 0.3});
    CHECK(worst_residual(m, full) <= 1e-10);
  }

  SUBCASE("polar at the cascade path converges to the singular direction") {
    CascadeSpec spec;
    spec.direction = Eigen::VectorXd::Unit(2, 1);
    spec.weight = Eigen::VectorXd(3);
    spec.weight << 2.0, -1.0, -1.0;
    spec.depth = 8;
    const TruncatedMeasure casc = cascade_measure(spec);
    const TruncatedMeasure deep_uniform =
        uniform_direction_measure(TreeShape{3, 8, 2}, Eigen::VectorXd::Unit(2, 0));
    const TruncatedMeasure m = mixture({deep_uniform, casc}, {0.5, 0.5});
    VertexAddress atom = VertexAddress::root();
    double previous_angle = M_PI;
    for (int n = 0; n <= 8; ++n) {
      const Eigen::VectorXd polar = polar_estimate(m, atom);
      const double angle = std::acos(std::clamp(polar.dot(spec.direction), -1.0, 1.0));
      CHECK(angle <= previous_angle + 1e-15);  // monotone decreasing
      previous_angle = angle;
      if (n < 8) atom = atom.child(0);
    }
    CHECK(previous_angle <= 1e-3);  // essentially aligned at the bottom
  }

  SUBCASE("shape mismatch is rejected") {
    const TruncatedMeasure other =
        uniform_direction_measure(TreeShape{3, 3, 2}, Eigen::VectorXd::Unit(2, 0));
    CHECK_THROWS_AS(mixture({u, other}, {0.5, 0.5}), std::invalid_argument);
  }
}

TEST_CASE("adversarial concentration") {
  std::mt19937_64 rng{29};

  SUBCASE("inside the cone it reduces to the full cascade") {
    const ConstraintSpace full = ConstraintSpace::full_zero_sum(3, 2);
    const Eigen::VectorXd v = unit_vector(rng, 2);
    const AdversarialResult r = adversarial_concentration(full, v, 5);
    REQUIRE(!r.rows.empty());
    for (const AdversarialRow& row : r.rows) {
      if (row.depth < 5) CHECK(row.residual_fraction <= 1e-12);
      CHECK(row.ratio == doctest::Approx(std::pow(3.0, row.depth)).epsilon(1e-10));
      CHECK(row.angle_to_v <= 1e-7);
    }
  }

  SUBCASE("orthogonal to a rank-one line: no compatible increment exists") {
    const Eigen::VectorXd v0 = Eigen::VectorXd::Unit(2, 0);
    const Eigen::VectorXd w0 = zero_sum_basis(3).col(0);
    const ConstraintSpace line =
        ConstraintSpace::from_spanning_set(3, 2, {v0 * w0.transpose()});
    const Eigen::VectorXd v = Eigen::VectorXd::Unit(2, 1);
    const AdversarialResult r = adversarial_concentration(line, v, 5);
    for (const AdversarialRow& row : r.rows) {
      CHECK(row.ratio == doctest::Approx(1.0));
      if (row.depth < 5) CHECK(row.residual_fraction == doctest::Approx(1.0));
    }
  }

  SUBCASE("increments stay in W and the measure is well-formed") {
    std::vector<Eigen::MatrixXd> gens;
    std::normal_distribution<double> normal;
    for (int i = 0; i < 4; ++i) {
      Eigen::MatrixXd G(2, 4);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 4; ++c) G(r, c) = normal(rng);
      }
      G.colwise() -= G.rowwise().mean().eval();
      gens.push_back(G);
    }
    const ConstraintSpace space = ConstraintSpace::from_spanning_set(4, 2, gens);
    const AdversarialResult r = adversarial_concentration(space, unit_vector(rng, 2), 5, 0.5);
    CHECK(worst_residual(r.measure, space) <= 1e-10);
  }
}
