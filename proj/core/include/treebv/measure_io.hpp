#pragma once

#include <iosfwd>
#include <string>

#include "treebv/measure.hpp"

namespace treebv {

/// Measure interchange format: {"q": int, "l": int, "depth": int,
/// "leaf_values": [[l numbers] x q^depth]} with leaves in lexicographic
/// address order. Doubles are emitted with shortest round-trip decimals, so
/// save followed by load reproduces leaf values bit for bit.
void save_measure_json(const TruncatedMeasure& m, std::ostream& out);
void save_measure_json(const TruncatedMeasure& m, const std::string& path);

TruncatedMeasure load_measure_json(std::istream& in);
TruncatedMeasure load_measure_json(const std::string& path);

}  // namespace treebv
