#include <Eigen/Core>
#include <algorithm>
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

TruncatedMeasure random_measure(TreeShape shape, std::uint64_t seed) {
  std::mt19937_64 rng{seed};
  std::normal_distribution<double> normal;
  Eigen::MatrixXd leaves(shape.l, shape.leaf_count());
  for (Eigen::Index c = 0; c < leaves.cols(); ++c) {
    for (int r = 0; r < shape.l; ++r) leaves(r, c) = normal(rng);
  }
  return TruncatedMeasure(shape, std::move(leaves));
}

CascadeSpec dirac_cascade(int depth) {
  CascadeSpec spec;
  spec.direction = Eigen::VectorXd::Unit(2, 0);
  spec.weight = Eigen::VectorXd(3);
  spec.weight << 2.0, -1.0, -1.0;
  spec.depth = depth;
  return spec;
}

}  // namespace

TEST_CASE("classify_atom") {
  Eigen::VectorXd a(2);
  a << 1.0, 0.0;

  SUBCASE("zero increments are flat at any positive eps") {
    const auto c = classify_atom(a, Eigen::MatrixXd::Zero(2, 3), 0.5);
    CHECK(c.excess == doctest::Approx(0.0));
    CHECK(c.flat());
  }

  SUBCASE("rank-one concentration has zero excess") {
    Eigen::MatrixXd D(2, 3);
    D << 2.0, -1.0, -1.0,
         0.0, 0.0, 0.0;
    const auto c = classify_atom(a, D, 0.01);
    CHECK(c.excess <= 1e-14);
    CHECK(c.flat());
  }

  SUBCASE("orthogonal increments cross the threshold at 2(sqrt(2)-1)/3") {
    Eigen::MatrixXd D(2, 3);
    D << 0.0, 0.0, 0.0,
         1.0, -1.0, 0.0;
    const double expected = 2.0 * (std::sqrt(2.0) - 1.0) / 3.0;  // ~0.27614
    const auto convex = classify_atom(a, D, 0.276);
    CHECK(convex.excess == doctest::Approx(expected).epsilon(1e-12));
    CHECK(!convex.flat());
    const auto flat = classify_atom(a, D, 0.277);
    CHECK(flat.flat());
  }

  SUBCASE("vanishing value: flat exactly when the increments vanish too") {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    CHECK(classify_atom(zero, Eigen::MatrixXd::Zero(2, 3), 0.1).flat());
    Eigen::MatrixXd D(2, 3);
    D << 1.0, -1.0, 0.0,
         0.0, 0.0, 0.0;
    CHECK(!classify_atom(zero, D, 0.1).flat());
  }

  SUBCASE("excess is never negative") {
    std::mt19937_64 rng{3};
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 2000; ++trial) {
      const Eigen::VectorXd v = gaussian_vector(rng, 2);
      Eigen::MatrixXd D(2, 3);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) D(r, c) = normal(rng);
      }
      D.colwise() -= D.rowwise().mean().eval();
      CHECK(classify_atom(v, D, 0.1).excess >= -1e-12);
    }
  }

  SUBCASE("eps outside [0,1) is rejected") {
    CHECK_THROWS_AS(classify_atom(a, Eigen::MatrixXd::Zero(2, 3), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(classify_atom(a, Eigen::MatrixXd::Zero(2, 3), -0.1), std::invalid_argument);
  }
}

TEST_CASE("flat forest") {
  SUBCASE("uniform measure is a single all-tree component") {
    const TreeShape shape{3, 4, 1};
    const TruncatedMeasure u(
        shape, Eigen::MatrixXd::Constant(1, shape.leaf_count(), shape.atom_mass(4)));
    const FlatForest forest = flat_forest(u, 0.1);
    REQUIRE(forest.components.size() == 1);
    std::int64_t internal = 0;
    for (int n = 0; n < shape.depth; ++n) internal += shape.atoms_at(n);
    CHECK(static_cast<std::int64_t>(forest.components[0].size()) == internal);
  }

  SUBCASE("cascade path atoms are flat with zero excess and share a component") {
    const TruncatedMeasure m = cascade_measure(dirac_cascade(5));
    const FlatForest forest = flat_forest(m, 0.05);
    // locate the component of the root; walk the heavy path inside it
    std::size_t root_component = forest.components.size();
    for (std::size_t i = 0; i < forest.components.size(); ++i) {
      for (const VertexAddress& v : forest.components[i]) {
        if (v.is_root()) root_component = i;
      }
    }
    REQUIRE(root_component < forest.components.size());
    VertexAddress atom = VertexAddress::root();
    for (int n = 0; n < 5; ++n) {
      const auto c = classify_atom(martingale_value(m, atom), difference_matrix(m, atom), 0.05);
      CHECK(c.flat());
      CHECK(c.excess <= 1e-12);
      const auto& members = forest.components[root_component];
      CHECK(std::find(members.begin(), members.end(), atom) != members.end());
      atom = atom.child(0);
    }
  }

  SUBCASE("a convex root is in no component; components start below it") {
    // sons of the root point in spread directions; each son splits uniformly
    const TreeShape shape{3, 2, 2};
    Eigen::MatrixXd leaves(2, 9);
    const Eigen::Vector2d dirs[3] = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) leaves.col(3 * j + k) = dirs[j] / 3.0;
    }
    const TruncatedMeasure m(shape, leaves);
    const auto root_class = classify_atom(martingale_value(m, VertexAddress::root()),
                                          difference_matrix(m, VertexAddress::root()), 0.1);
    REQUIRE(!root_class.flat());

    const FlatForest forest = flat_forest(m, 0.1);
    CHECK(forest.components.size() == 3);
    for (const auto& component : forest.components) {
      for (const VertexAddress& v : component) CHECK(!v.is_root());
    }
  }
}

TEST_CASE("leaf report") {
  SUBCASE("uniform measure captures every leaf with full mass") {
    const TreeShape shape{3, 4, 1};
    const TruncatedMeasure u(
        shape, Eigen::MatrixXd::Constant(1, shape.leaf_count(), shape.atom_mass(4)));
    const LeafReport report = leaf_report(u, 0.1, 0);
    CHECK(static_cast<std::int64_t>(report.leaf_atoms.size()) == shape.leaf_count());
    CHECK(report.captured_mass == doctest::Approx(1.0));
  }

  SUBCASE("pure concentration cascade captures the full mass on its path") {
    const TruncatedMeasure m = cascade_measure(dirac_cascade(5));
    const LeafReport report = leaf_report(m, 0.05, 0);
    CHECK(report.captured_mass == doctest::Approx(1.0).epsilon(1e-12));
    // the heavy-path leaf is captured
    const VertexAddress path_leaf({0, 0, 0, 0, 0});
    CHECK(std::find(report.leaf_atoms.begin(), report.leaf_atoms.end(), path_leaf) !=
          report.leaf_atoms.end());
  }

  SUBCASE("captured set is antitone in eps and grows when n0 increases") {
    const TreeShape shape{3, 4, 2};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const TruncatedMeasure m = random_measure(shape, seed);
      const auto tight = leaf_report(m, 0.05, 0);
      const auto loose = leaf_report(m, 0.2, 0);
      CHECK(tight.leaf_atoms.size() <= loose.leaf_atoms.size());
      CHECK(tight.captured_mass <= loose.captured_mass + 1e-12);
      const auto later = leaf_report(m, 0.05, 2);
      CHECK(tight.leaf_atoms.size() <= later.leaf_atoms.size());
    }
  }
}

TEST_CASE("mixture of uniform and cascade: component capture narrows to the cascade") {
  // half uniform mass in direction v1, half Dirac cascade in direction v2
  const int depth = 8;
  const TreeShape shape{3, depth, 2};
  const TruncatedMeasure uniform = uniform_direction_measure(shape, Eigen::VectorXd::Unit(2, 0));
  CascadeSpec spec = dirac_cascade(depth);
  spec.direction = Eigen::VectorXd::Unit(2, 1);
  const TruncatedMeasure cascade = cascade_measure(spec);
  const TruncatedMeasure m = mixture({uniform, cascade}, {0.5, 0.5});

  const double eps = 0.1;
  // near the root the path atoms are convex (the two halves are comparable);
  // from some depth on the cascade part dominates and they turn flat
  int n0 = -1;
  VertexAddress atom = VertexAddress::root();
  for (int n = 0; n < depth; ++n) {
    const auto c = classify_atom(martingale_value(m, atom), difference_matrix(m, atom), eps);
    if (n0 < 0 && c.flat()) n0 = n;
    if (n0 >= 0) CHECK(c.flat());  // once flat, stays flat on this path
    atom = atom.child(0);
  }
  REQUIRE(n0 == 2);  // first flat depth for this mixture

  // component of the first flat path atom
  const FlatForest forest = flat_forest(m, eps);
  const VertexAddress pivot({0, 0});
  const std::vector<VertexAddress>* component = nullptr;
  for (const auto& comp : forest.components) {
    if (std::find(comp.begin(), comp.end(), pivot) != comp.end()) component = &comp;
  }
  REQUIRE(component != nullptr);

  const LeafReport captured = component_leaf_report(m, eps, *component);
  // the component carries the cascade's half plus the uniform leakage below
  // n0, about (1/2)(1 + 3^{-n0})
  CHECK(captured.captured_mass >= 0.5);
  CHECK(captured.captured_mass <= 0.5 * (1.0 + std::pow(3.0, -n0)) + 1e-9);

  // the global report at n0 still captures everything (the uniform region is flat)
  const LeafReport global = leaf_report(m, eps, n0);
  CHECK(global.captured_mass == doctest::Approx(total_variation_at_depth(m, depth)));
}

TEST_CASE("big leaf test") {
  const VertexAddress path_leaf({0, 0, 0, 0, 0});

  SUBCASE("dirac cascade is a big leaf up to beta = 4/3") {
    const TruncatedMeasure m = cascade_measure(dirac_cascade(5));
    const auto big = big_leaf_test(m, path_leaf, 4.0 / 3.0 - 1e-9);
    CHECK(big.big);
    CHECK(big.witness_depths.size() == 5);
    const auto small = big_leaf_test(m, path_leaf, 4.0 / 3.0 + 1e-6);
    CHECK(!small.big);
  }

  SUBCASE("uniform measure is a small leaf for every beta") {
    const TreeShape shape{3, 5, 1};
    const TruncatedMeasure u(
        shape, Eigen::MatrixXd::Constant(1, shape.leaf_count(), shape.atom_mass(5)));
    for (double beta : {1e-6, 0.1, 1.0}) {
      CHECK(!big_leaf_test(u, VertexAddress({0, 0, 0, 0, 0}), beta).big);
    }
  }

  SUBCASE("decaying increments produce finitely many witnesses") {
    CascadeSpec spec = dirac_cascade(5);
    spec.weight << 1.0, -0.5, -0.5;
    spec.level_scales = {1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0, 1.0 / 25.0};  // 1/n^2
    const TruncatedMeasure m = cascade_measure(spec);
    // (1/q) sum ||d_j|| = (2/3) t_n ||F||; beta = 0.5 only witnesses t_n >= 0.75
    const auto r = big_leaf_test(m, path_leaf, 0.5, 3);
    CHECK(r.witness_depths == std::vector<int>{0});
    CHECK(!r.big);
    // with a permissive witness requirement the same path is big
    CHECK(big_leaf_test(m, path_leaf, 0.5, 1).big);
  }
}

TEST_CASE("lemma 1: the flatness bound on orthogonal increments") {
  Eigen::VectorXd a(2);
  a << 1.0, 0.0;

  SUBCASE("worked example") {
    Eigen::MatrixXd D(2, 3);
    D << 0.0, 0.0, 0.0,
         0.3, -0.3, 0.0;
    const auto c = classify_atom(a, D, 0.03);
    REQUIRE(c.flat());
    CHECK(c.excess == doctest::Approx(2.0 * (std::sqrt(1.09) - 1.0) / 3.0).epsilon(1e-12));
    const auto r = lemma1_check(a, D, 0.03);
    CHECK(r.bound == doctest::Approx(6.0 * std::sqrt(0.03)).epsilon(1e-12));
    CHECK(r.max_orth == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r.holds);
  }

  SUBCASE("zero increments trivially satisfy the bound") {
    const auto r = lemma1_check(a, Eigen::MatrixXd::Zero(2, 3), 0.01);
    CHECK(r.max_orth == 0.0);
    CHECK(r.holds);
  }

  SUBCASE("non-flat atoms are rejected") {
    Eigen::MatrixXd D(2, 3);
    D << 0.0, 0.0, 0.0,
         1.0, -1.0, 0.0;
    CHECK_THROWS_AS(lemma1_check(a, D, 0.01), std::invalid_argument);
  }

  SUBCASE("randomized sweep near the flatness threshold") {
    std::mt19937_64 rng{17};
    for (double eps : {1e-4, 1e-3, 1e-2}) {
      for (int trial = 0; trial < 2000; ++trial) {
        const int q = 3 + static_cast<int>(rng() % 3);
        const int l = 2 + static_cast<int>(rng() % 3);
        const FlatConfig cfg = sample_flat_config(rng, q, l, eps);
        CHECK(cfg.excess < eps);
        const auto r = lemma1_check(cfg.a, cfg.D, eps);
        CHECK(r.holds);
      }
    }
  }
}

TEST_CASE("lemma 2: critical exponents") {
  Eigen::VectorXd a(2);
  a << 1.0, 0.0;

  SUBCASE("orthogonal increments never fail: critical exponent 0") {
    Eigen::MatrixXd D(2, 3);
    D << 0.0, 0.0, 0.0,
         0.05, -0.05, 0.0;
    CHECK(critical_exponent(a, D) == 0.0);
    for (double p : {0.1, 0.5, 0.9, 1.0}) CHECK(eq14_holds(a, D, p));
  }

  SUBCASE("aligned rank-one increments fail for every p < 1") {
    Eigen::MatrixXd D = a * Eigen::RowVector3d(2.0, -1.0, -1.0);
    // mean of ||a+d_j||^p is 3^{p-1} < 1
    for (double p : {0.2, 0.5, 0.9}) {
      CHECK(p_mean_excess(a, D, p) ==
            doctest::Approx(std::pow(3.0, p - 1.0) - 1.0).epsilon(1e-12));
      CHECK(!eq14_holds(a, D, p));
    }
    CHECK(critical_exponent(a, D) >= 0.99);
    // such configurations violate the angle hypothesis
    CHECK(angle_to_matrix(a, D) <= 1e-12);
  }

  SUBCASE("estimates are stable across seeds and verified above the margin") {
    Lemma2Config config;
    config.q = 3;
    config.l = 2;
    config.eta = M_PI / 4.0;
    config.delta = 0.1;
    config.trials = 2000;
    config.seed = 1;
    const Lemma2Estimate first = lemma2_p0(config);
    config.seed = 2;
    const Lemma2Estimate second = lemma2_p0(config);
    CHECK(first.p0 < 1.0);
    CHECK(std::abs(first.p0 - second.p0) <= 0.04);
    CHECK(first.eq16_violations == 0);
    CHECK(first.eq14_failures_above_margin == 0);
    CHECK(second.eq16_violations == 0);
    CHECK(second.eq14_failures_above_margin == 0);
  }

  SUBCASE("small angles raise the critical exponent") {
    Lemma2Config config;
    config.trials = 1000;
    config.delta = 0.01;
    config.eta = M_PI / 6.0;  // leading order p0 ~ 2 - 1/cos^2(pi/6) = 2/3
    const Lemma2Estimate narrow = lemma2_p0(config);
    CHECK(narrow.p0 >= 0.5);
    CHECK(narrow.p0 <= 0.85);
    config.eta = M_PI / 3.0;  // wide angle: second order never fails
    const Lemma2Estimate wide = lemma2_p0(config);
    CHECK(wide.p0 <= 0.1);
  }

  SUBCASE("degenerate value dimension is rejected") {
    Lemma2Config config;
    config.l = 1;
    CHECK_THROWS_AS(lemma2_p0(config), SamplingError);
  }
}

TEST_CASE("submartingale check") {
  SUBCASE("p = 1 is never violated") {
    const TreeShape shape{3, 4, 2};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto report = submartingale_check(random_measure(shape, seed), 1.0);
      CHECK(report.violations.empty());
    }
  }

  SUBCASE("dirac cascade at p = 1/2 fails on every path atom") {
    const int depth = 5;
    const TruncatedMeasure m = cascade_measure(dirac_cascade(depth));
    const auto report = submartingale_check(m, 0.5);
    CHECK(static_cast<int>(report.violations.size()) == depth);
    for (const VertexAddress& v : report.violations) {
      for (int d : v.digits()) CHECK(d == 0);  // all on the heavy path
    }
    // root deficit is 1 - 3^{-1/2}
    const auto root_report = submartingale_check(m, 0.5, {VertexAddress::root()});
    CHECK(root_report.max_deficit ==
          doctest::Approx(1.0 - 1.0 / std::sqrt(3.0)).epsilon(1e-12));
  }

  SUBCASE("increment-constrained evolution passes above the estimated exponent") {
    const ConstraintSpace space = ConstraintSpace::full_zero_sum(3, 2);
    Lemma2Config config;
    config.eta = M_PI / 4.0;
    config.delta = 0.05;
    config.trials = 2000;
    const double p0 = lemma2_p0(config).p0;
    const TruncatedMeasure m =
        lemma2_compliant_measure(space, 6, config.eta, config.delta, 99);
    const auto report = submartingale_check(m, std::min(1.0, p0 + 0.05));
    CHECK(report.violations.empty());
  }
}

TEST_CASE("doob maximal profiles") {
  SUBCASE("uniform measure: constant 1") {
    const TreeShape shape{3, 6, 1};
    const TruncatedMeasure u(
        shape, Eigen::MatrixXd::Constant(1, shape.leaf_count(), shape.atom_mass(6)));
    for (double value : doob_maximal_profile(u)) {
      CHECK(value == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("dirac cascade grows linearly: 1 + 2n/3") {
    const int depth = 8;
    const TruncatedMeasure m = cascade_measure(dirac_cascade(depth));
    const auto profile = doob_maximal_profile(m);
    REQUIRE(static_cast<int>(profile.size()) == depth + 1);
    for (int n = 0; n <= depth; ++n) {
      CHECK(profile[static_cast<std::size_t>(n)] ==
            doctest::Approx(1.0 + 2.0 * n / 3.0).epsilon(1e-12));
    }
  }

  SUBCASE("increment-constrained evolution stays bounded") {
    const ConstraintSpace space = ConstraintSpace::full_zero_sum(3, 2);
    const double eta = M_PI / 4.0, delta = 0.05;
    const TruncatedMeasure m = lemma2_compliant_measure(space, 8, eta, delta, 5);
    const auto profile = doob_maximal_profile(m);
    // Doob bound: E max ||F|| <= (1/(1-p))^{1/p} sup_n E ||F_n|| at any p in (0,1)
    const double p = 0.5;
    const double doob = std::pow(1.0 / (1.0 - p), 1.0 / p) *
                        total_variation_at_depth(m, m.shape().depth);
    for (double value : profile) CHECK(value <= doob);
  }
}

TEST_CASE("second-order expansion of the p-mean") {
  // exact sum_j ||a+d_j||^p vs q + (p/2) sum ||d_j||^2 + (p(p-2)/2) sum <a,d_j>^2,
  // with cubic error C * sum ||d_j||^3
  std::mt19937_64 rng{71};
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 5000; ++trial) {
    const int q = 3 + static_cast<int>(rng() % 2);
    const int l = 2 + static_cast<int>(rng() % 2);
    const Eigen::VectorXd a = unit_vector(rng, l);
    Eigen::MatrixXd D(l, q);
    for (int r = 0; r < l; ++r) {
      for (int c = 0; c < q; ++c) D(r, c) = normal(rng);
    }
    D.colwise() -= D.rowwise().mean().eval();
    const double size = D.colwise().norm().maxCoeff();
    if (size == 0.0) continue;
    D *= (1e-3 * unif(rng)) / size;  // every column at most 1e-3

    const double p = unif(rng);
    double exact = 0.0, cubes = 0.0, squares = 0.0, aligned2 = 0.0;
    for (int j = 0; j < q; ++j) {
      const double dn = D.col(j).norm();
      exact += std::pow((a + D.col(j)).norm(), p);
      cubes += dn * dn * dn;
      squares += dn * dn;
      const double ad = a.dot(D.col(j));
      aligned2 += ad * ad;
    }
    const double expansion = q + 0.5 * p * squares + 0.5 * p * (p - 2.0) * aligned2;
    const double error = std::abs(exact - expansion);
    CHECK(error <= 5.0 * cubes);
    if (cubes > 0.0) worst_ratio = std::max(worst_ratio, error / cubes);
  }
  MESSAGE("empirical third-order constant: ", worst_ratio);
}
