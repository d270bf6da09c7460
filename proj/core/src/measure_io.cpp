#include "treebv/measure_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace treebv {

using nlohmann::json;

void save_measure_json(const TruncatedMeasure& m, std::ostream& out) {
  const TreeShape& shape = m.shape();
  json j;
  j["q"] = shape.q;
  j["l"] = shape.l;
  j["depth"] = shape.depth;
  json leaves = json::array();
  const Eigen::MatrixXd& lv = m.leaf_values();
  for (Eigen::Index c = 0; c < lv.cols(); ++c) {
    json col = json::array();
    for (int r = 0; r < shape.l; ++r) col.push_back(lv(r, c));
    leaves.push_back(std::move(col));
  }
  j["leaf_values"] = std::move(leaves);
  out << j.dump() << '\n';
}

void save_measure_json(const TruncatedMeasure& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_measure_json: cannot open " + path);
  save_measure_json(m, out);
}

TruncatedMeasure load_measure_json(std::istream& in) {
  json j = json::parse(in);
  TreeShape shape{j.at("q").get<int>(), j.at("depth").get<int>(), j.at("l").get<int>()};
  shape.validate();
  const json& leaves = j.at("leaf_values");
  if (static_cast<std::int64_t>(leaves.size()) != shape.leaf_count()) {
    throw std::invalid_argument("load_measure_json: expected q^depth leaf entries");
  }
  Eigen::MatrixXd lv(shape.l, shape.leaf_count());
  for (std::int64_t c = 0; c < shape.leaf_count(); ++c) {
    const json& col = leaves[static_cast<std::size_t>(c)];
    if (static_cast<int>(col.size()) != shape.l) {
      throw std::invalid_argument("load_measure_json: leaf entry has wrong dimension");
    }
    for (int r = 0; r < shape.l; ++r) lv(r, c) = col[static_cast<std::size_t>(r)].get<double>();
  }
  return TruncatedMeasure(shape, std::move(lv));
}

TruncatedMeasure load_measure_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_measure_json: cannot open " + path);
  return load_measure_json(in);
}

}  // namespace treebv
