#include "treebv/tree.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace treebv {

void TreeShape::validate() const {
  if (q < 3) throw std::invalid_argument("TreeShape: branching factor q must be >= 3");
  if (depth < 1) throw std::invalid_argument("TreeShape: truncation depth must be >= 1");
  if (l < 1) throw std::invalid_argument("TreeShape: value dimension l must be >= 1");
  // leaf count must stay addressable
  double leaves = std::pow(static_cast<double>(q), depth);
  if (leaves > 1e15) throw std::invalid_argument("TreeShape: q^depth exceeds supported size");
}

std::int64_t TreeShape::atoms_at(int n) const {
  if (n < 0 || n > depth) throw std::out_of_range("TreeShape::atoms_at: level out of range");
  std::int64_t count = 1;
  for (int i = 0; i < n; ++i) count *= q;
  return count;
}

double TreeShape::atom_mass(int n) const {
  if (n < 0 || n > depth) throw std::out_of_range("TreeShape::atom_mass: level out of range");
  return std::pow(static_cast<double>(q), -n);
}

VertexAddress VertexAddress::from_index(int depth, std::int64_t index, int q) {
  if (depth < 0) throw std::invalid_argument("VertexAddress::from_index: negative depth");
  std::vector<int> digits(static_cast<std::size_t>(depth));
  for (int pos = depth - 1; pos >= 0; --pos) {
    digits[static_cast<std::size_t>(pos)] = static_cast<int>(index % q);
    index /= q;
  }
  if (index != 0) throw std::out_of_range("VertexAddress::from_index: index out of range");
  return VertexAddress(std::move(digits));
}

VertexAddress VertexAddress::parent() const {
  if (is_root()) throw std::invalid_argument("VertexAddress::parent: the root has no parent");
  std::vector<int> d(digits_.begin(), digits_.end() - 1);
  return VertexAddress(std::move(d));
}

VertexAddress VertexAddress::child(int son) const {
  if (son < 0) throw std::invalid_argument("VertexAddress::child: negative son index");
  std::vector<int> d = digits_;
  d.push_back(son);
  return VertexAddress(std::move(d));
}

bool VertexAddress::is_ancestor_of(const VertexAddress& other) const {
  if (depth() > other.depth()) return false;
  for (std::size_t i = 0; i < digits_.size(); ++i) {
    if (digits_[i] != other.digits()[i]) return false;
  }
  return true;
}

std::int64_t VertexAddress::index(int q) const {
  std::int64_t idx = 0;
  for (int d : digits_) {
    if (d < 0 || d >= q) {
      throw std::out_of_range("VertexAddress::index: digit " + std::to_string(d) +
                              " outside [0, " + std::to_string(q - 1) + "]");
    }
    idx = idx * q + d;
  }
  return idx;
}

std::string VertexAddress::to_string() const {
  if (is_root()) return "()";
  std::string s;
  for (std::size_t i = 0; i < digits_.size(); ++i) {
    if (i > 0) s += '.';
    s += std::to_string(digits_[i]);
  }
  return s;
}

}  // namespace treebv
