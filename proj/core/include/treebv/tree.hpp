#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace treebv {

/// Geometry of a truncated q-regular tree carrying R^l-valued data.
///
/// The infinite tree is cut at `depth`; the q^depth vertices at that level
/// act as leaves and store the measure. Level n has q^n atoms, each of
/// uniform mass q^{-n}.
struct TreeShape {
  int q = 3;      ///< branching factor, q >= 3
  int depth = 1;  ///< truncation depth N, >= 1
  int l = 1;      ///< dimension of the value space, >= 1

  /// Throws std::invalid_argument unless q >= 3, depth >= 1, l >= 1 and the
  /// leaf count fits in a 64-bit index.
  void validate() const;

  std::int64_t atoms_at(int n) const;  ///< q^n, requires 0 <= n <= depth
  std::int64_t leaf_count() const { return atoms_at(depth); }
  double atom_mass(int n) const;       ///< mu(atom) = q^{-n}

  bool operator==(const TreeShape&) const = default;
};

/// A vertex of the tree, i.e. an atom of the level-n partition, addressed by
/// the digit string of the root path. The root is the empty string; son j of
/// a vertex appends digit j. Digits are in [0, q-1] and sons are enumerated
/// in fixed lexicographic order.
class VertexAddress {
 public:
  VertexAddress() = default;  // root
  explicit VertexAddress(std::vector<int> digits) : digits_(std::move(digits)) {}

  static VertexAddress root() { return VertexAddress{}; }

  /// Address of the index-th atom (lexicographic order) at the given depth.
  static VertexAddress from_index(int depth, std::int64_t index, int q);

  int depth() const { return static_cast<int>(digits_.size()); }
  bool is_root() const { return digits_.empty(); }
  const std::vector<int>& digits() const { return digits_; }

  VertexAddress parent() const;          ///< throws std::invalid_argument on the root
  VertexAddress child(int son) const;    ///< appends one digit
  bool is_ancestor_of(const VertexAddress& other) const;

  /// Lexicographic index among the atoms of the same depth (base-q value of
  /// the digit string). Throws if any digit is outside [0, q-1].
  std::int64_t index(int q) const;

  std::string to_string() const;  ///< "0.2.1"; the root prints as "()"

  bool operator==(const VertexAddress&) const = default;

 private:
  std::vector<int> digits_;
};

}  // namespace treebv
