#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "treebv/measure.hpp"
#include "treebv/tree.hpp"

namespace treebv {

enum class AtomLabel { Flat, Convex };

/// Flat/convex classification of one atom. With a = F_n(omega) and the
/// increment columns d_j, the excess (1/q) sum_j ||a + d_j|| - ||a|| is
/// nonnegative; the atom is Convex when it reaches eps * ||a|| and Flat
/// otherwise. Atoms with a = 0 are Flat when D = 0 and Convex otherwise,
/// which keeps the forest decomposition total.
struct AtomClassification {
  VertexAddress atom;      // set by measure-level sweeps, empty otherwise
  double excess = 0.0;
  double threshold = 0.0;  // eps * ||a||
  AtomLabel label = AtomLabel::Flat;
  bool flat() const { return label == AtomLabel::Flat; }
};

/// Classifies a single (a, D, eps) configuration; eps must lie in [0, 1).
AtomClassification classify_atom(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double eps);

/// Maximal connected subtrees of eps-flat atoms (depths 0..N-1; depth-N
/// atoms have no sons within the truncation and are not classified).
struct FlatForest {
  double epsilon = 0.0;
  std::vector<std::vector<VertexAddress>> components;
};
FlatForest flat_forest(const TruncatedMeasure& m, double eps);

/// Depth-N atoms whose ancestors at depths n0..N-1 are all eps-flat,
/// together with the ||nu||-mass they carry.
struct LeafReport {
  double epsilon = 0.0;
  int start_depth = 0;
  std::vector<VertexAddress> leaf_atoms;
  double captured_mass = 0.0;
};
LeafReport leaf_report(const TruncatedMeasure& m, double eps, int n0);

/// Leaves reachable inside one flat component: depth-N atoms whose ancestor
/// chain from the component root down to depth N-1 stays in the component.
LeafReport component_leaf_report(const TruncatedMeasure& m, double eps,
                                 const std::vector<VertexAddress>& component);

/// Big-leaf test along a root-to-leaf path: the averaged increment size
/// (1/q) sum_j ||d_j|| must reach beta * ||F_n|| at min_witnesses depths
/// among n0..N-1 (the finite-depth stand-in for "infinitely many").
struct BigLeafResult {
  bool big = false;
  std::vector<int> witness_depths;
};
BigLeafResult big_leaf_test(const TruncatedMeasure& m, const VertexAddress& leaf, double beta,
                            int min_witnesses = 3, int n0 = 0);

/// Orthogonal-increment bound at an eps-flat atom: every column satisfies
/// ||pi_{a^perp} d_j|| <= 2 q sqrt(eps) ||a||. Throws std::invalid_argument
/// when the atom is not eps-flat or a = 0.
struct Lemma1Result {
  double bound = 0.0;     // 2 q sqrt(eps) ||a||
  double max_orth = 0.0;  // max_j ||pi_{a^perp} d_j||
  bool holds = false;
};
Lemma1Result lemma1_check(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double eps);

/// Draws a random configuration (unit a, zero-column-sum D) that is eps-flat
/// with excess close to the threshold (adversarial for the bound above).
struct FlatConfig {
  Eigen::VectorXd a;
  Eigen::MatrixXd D;
  double excess = 0.0;
};
FlatConfig sample_flat_config(std::mt19937_64& rng, int q, int l, double eps);

/// p-mean excess (1/q) sum_j ||a + d_j||^p - ||a||^p; the p-submartingale
/// inequality at a configuration holds when this is >= 0.
double p_mean_excess(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double p);
bool eq14_holds(const Eigen::VectorXd& a, const Eigen::MatrixXd& D, double p);

/// Largest p in (0,1) at which the p-mean inequality fails for this
/// configuration (grid scan plus bisection); 0 when it never fails.
double critical_exponent(const Eigen::VectorXd& a, const Eigen::MatrixXd& D);

/// Randomized-adversarial estimate of the exponent p0(delta, eta) below
/// which the p-mean inequality may fail for configurations with
/// angle_to_matrix(a, D) >= eta and sum_j ||d_j|| <= delta ||a||.
///
/// The sampler mixes deterministic boundary anchors (rank-one profiles at
/// angle exactly eta and increment budget exactly delta, which dominate the
/// supremum) with randomized configurations; p0 is the worst critical
/// exponent observed. Every sampled configuration is re-verified at the grid
/// of exponents in (p0 + margin, 1), and the correlation bound
/// sum_j <a,d_j>^2 <= cos^2(eta) sum_j ||d_j||^2 is checked on each draw.
struct Lemma2Config {
  int q = 3;
  int l = 2;
  double eta = 0.7853981633974483;  // pi/4
  double delta = 0.05;
  int trials = 10000;
  std::uint64_t seed = 1;
  double margin = 0.05;
  int verify_grid = 16;
  int max_retries = 1000;
  bool collect_rows = false;
};

struct Lemma2Row {
  double angle = 0.0;
  double increment_sum = 0.0;  // sum_j ||d_j|| (with ||a|| = 1)
  double critical_p = 0.0;
};

struct Lemma2Estimate {
  double p0 = 0.0;
  int trials = 0;
  int eq16_violations = 0;             // expected 0
  double max_eq16_defect = 0.0;        // worst signed defect of the correlation bound
  int eq14_failures_above_margin = 0;  // expected 0
  std::vector<Lemma2Row> rows;         // populated when collect_rows
};

Lemma2Estimate lemma2_p0(const Lemma2Config& config);

/// Checks ||F_n||^p <= (1/q) sum_j ||F_{n+1}(son_j)||^p over a region of
/// internal atoms (whole tree by default). A deficit counts as a violation
/// above a relative rounding allowance of 1e-12.
struct SubmartingaleReport {
  std::vector<VertexAddress> violations;
  double max_deficit = 0.0;  // worst lhs - rhs over the region (can be <= 0)
  std::int64_t checked = 0;
};
SubmartingaleReport submartingale_check(const TruncatedMeasure& m, double p);
SubmartingaleReport submartingale_check(const TruncatedMeasure& m, double p,
                                        const std::vector<VertexAddress>& region);

/// L1(mu) profile of the running maximal function: entry n is
/// E_mu[ max_{k<=n} ||F_k|| ]. Bounded profiles signal H^1-type behavior,
/// divergent ones signal singularity.
std::vector<double> doob_maximal_profile(const TruncatedMeasure& m);

}  // namespace treebv
