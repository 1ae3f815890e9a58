#include "prefopt/dataset.hpp"

#include "prefopt/errors.hpp"

namespace prefopt {

std::size_t ComparisonDataset::index_of_visited(const Configuration& x) const {
  for (std::size_t i = 0; i < visited_.size(); ++i) {
    if (same_point(visited_[i], x, kDedupTolerance)) return i;
  }
  return npos;
}

std::size_t ComparisonDataset::add_point(const Configuration& x) {
  if (!visited_.empty() && x.dim() != visited_.front().dim()) {
    throw ContractViolation("dataset point has the wrong dimension");
  }
  const std::size_t idx = index_of_visited(x);
  if (idx != npos) return idx;
  visited_.push_back(x);
  return visited_.size() - 1;
}

void ComparisonDataset::add(ComparisonRecord record) {
  if (same_point(record.first, record.second, kDedupTolerance)) {
    throw ContractViolation("a comparison needs two distinct configurations");
  }
  const std::size_t i1 = add_point(record.first);
  const std::size_t i2 = add_point(record.second);
  indices_.emplace_back(record.winner == Winner::first ? std::pair{i1, i2} : std::pair{i2, i1});
  records_.push_back(std::move(record));
}

nlohmann::json dataset_to_json(const ComparisonDataset& data) {
  nlohmann::json visited = nlohmann::json::array();
  for (const auto& x : data.visited()) visited.push_back(configuration_to_json(x));
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : data.records()) {
    records.push_back({{"first", configuration_to_json(r.first)},
                       {"second", configuration_to_json(r.second)},
                       {"winner", r.winner == Winner::first ? "first" : "second"}});
  }
  return {{"visited", std::move(visited)}, {"records", std::move(records)}};
}

ComparisonDataset dataset_from_json(const nlohmann::json& j) {
  ComparisonDataset data;
  for (const auto& x : j.at("visited")) data.add_point(configuration_from_json(x));
  for (const auto& r : j.at("records")) {
    const auto w = r.at("winner").get<std::string>();
    if (w != "first" && w != "second") throw ParseError("bad winner '" + w + "'");
    data.add({configuration_from_json(r.at("first")), configuration_from_json(r.at("second")),
              w == "first" ? Winner::first : Winner::second});
  }
  return data;
}

}  // namespace prefopt
