#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace treebv {

/// Shortest round-trip decimal for a double ("nan"/"inf" spelled out).
/// Locale-independent, so identical runs produce identical bytes.
std::string format_double(double x);

/// Minimal deterministic CSV emitter: comma separation, '\n' line ends, no
/// quoting (fields must not contain commas).
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void row(const std::vector<std::string>& fields);

  static std::string num(double x) { return format_double(x); }
  static std::string num(std::int64_t x) { return std::to_string(x); }
  static std::string num(int x) { return std::to_string(x); }

 private:
  std::ostream& out_;
};

}  // namespace treebv
