#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "treebv/constraint_space.hpp"
#include "treebv/measure.hpp"

namespace treebv {

/// A direction-preserving multiplicative cascade. Along one active path the
/// increments are rank one, D = F_n (x) w, so son j of an on-path atom gets
/// the value (1 + w_j) F_n; off-path atoms split uniformly (D = 0). All atom
/// values stay on the ray spanned by `direction`, and the measure lies in
/// the space of W-constrained measures exactly when direction (x) weight
/// lies in W.
struct CascadeSpec {
  Eigen::VectorXd direction;  ///< nonzero; normalized internally
  Eigen::VectorXd weight;     ///< w in R^q, zero-sum; multipliers 1 + w_i >= 0
  int depth = 4;

  /// Optional per-level factors t_n; the weight used at level n is t_n * w.
  /// Empty means t_n = 1 at every level.
  std::vector<double> level_scales;

  /// How the active path picks the next son. FirstSon always follows son 0.
  /// LargestWeight follows the son with the largest multiplier (ties to the
  /// smallest index). SeededRandom draws the son per level and swaps weight
  /// components 0 and h so the followed son keeps the component-0 multiplier;
  /// note the swapped weight may leave W even when the original lies in it.
  enum class HeavyRule { FirstSon, LargestWeight, SeededRandom };
  HeavyRule heavy_rule = HeavyRule::FirstSon;
  std::uint64_t heavy_seed = 0;

  /// Signed multipliers (1 + w_i < 0) are refused unless set.
  bool allow_signed = false;

  /// Apply the rank-one step at every atom with a nonzero value instead of
  /// only along the active path (the classical product cascade). Off-path
  /// branches then keep concentrating instead of spreading uniformly; total
  /// mass is preserved whenever the multipliers are nonnegative.
  bool everywhere = false;

  int q() const { return static_cast<int>(weight.size()); }
  void validate() const;
};

TruncatedMeasure cascade_measure(const CascadeSpec& spec);

/// As above, but additionally requires direction (x) weight_n to lie in
/// `space` (relative residual <= 1e-10) for every level; throws
/// ConstraintViolation otherwise.
TruncatedMeasure cascade_measure(const CascadeSpec& spec, const ConstraintSpace& space);

/// Constant-direction measure: every leaf carries q^{-N} * v, all increments
/// vanish. This is the scale = 0 / weight = 0 degenerate case.
TruncatedMeasure uniform_direction_measure(TreeShape shape, const Eigen::VectorXd& v);

/// Random element of the W-constrained measure class: starts from the unit
/// first basis vector and, at every atom, draws the increment matrix from W
/// with independent N(0, scale^2) coefficients in the orthonormal basis.
TruncatedMeasure random_W_measure(const ConstraintSpace& space, int depth, double scale,
                                  std::uint64_t seed);

/// W-driven evolution whose every increment matrix satisfies the small-step
/// angle hypotheses: angle_to_matrix(F, D) >= eta and
/// sum_j ||d_j|| <= delta ||F||. Rejection-samples the direction of D inside
/// W and rescales its size; throws SamplingError when the angle condition
/// cannot be met within max_retries draws (e.g. W too thin).
TruncatedMeasure lemma2_compliant_measure(const ConstraintSpace& space, int depth, double eta,
                                          double delta, std::uint64_t seed,
                                          int max_retries = 1000);

/// Leafwise weighted sum. Increment matrices are additive, so a mixture of
/// W-constrained measures is W-constrained.
TruncatedMeasure mixture(const std::vector<TruncatedMeasure>& measures,
                         const std::vector<double>& weights);

/// One row per evolution step of the adversarial builder.
struct AdversarialRow {
  int depth = 0;
  double ratio = 0.0;             ///< ||F_path|| / ||F_root||
  double angle_to_v = 0.0;        ///< drift of the running direction from v
  double gamma_to_W = 0.0;        ///< rank-one angle of the running direction
  double residual_fraction = 0.0; ///< norm fraction lost projecting the step
  double increment_fraction = 0.0;///< sum_j ||d_j|| / ||F_path||
  double angle_to_increment = 0.0;///< angle_to_matrix(F_path, D); NaN when D=0
};

struct AdversarialResult {
  TruncatedMeasure measure;
  std::vector<AdversarialRow> rows;  ///< depths 0..depth-1 (steps) plus a final state row
  bool stalled = false;              ///< evolution hit F = 0
};

/// Greedy attempt to concentrate mass along son 0 in a direction v outside
/// the wave cone: at each on-path atom the rank-one concentration step
/// F (x) w*, w* = step_scale * (q-1, -1, ..., -1), is projected onto W and
/// applied. The per-level report shows whether concentration stalls or the
/// running direction drifts toward the cone.
AdversarialResult adversarial_concentration(const ConstraintSpace& space,
                                            const Eigen::VectorXd& v, int depth,
                                            double step_scale = 1.0);

}  // namespace treebv
