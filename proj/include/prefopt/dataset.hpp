#pragma once

#include "prefopt/domain.hpp"

#include <json.hpp>

#include <cstddef>
#include <vector>

namespace prefopt {

enum class Winner { first, second };

struct ComparisonRecord {
  Configuration first;
  Configuration second;
  Winner winner = Winner::first;

  const Configuration& winning() const { return winner == Winner::first ? first : second; }
  const Configuration& losing() const { return winner == Winner::first ? second : first; }
};

/// Comparison records plus the deduplicated set of visited configurations.
class ComparisonDataset {
 public:
  static constexpr double kDedupTolerance = 1e-10;

  /// Registers a configuration without a comparison; returns its index.
  std::size_t add_point(const Configuration& x);
  void add(ComparisonRecord record);

  const std::vector<ComparisonRecord>& records() const { return records_; }
  const std::vector<Configuration>& visited() const { return visited_; }
  std::size_t index_of_visited(const Configuration& x) const;  // npos when absent
  bool contains(const Configuration& x) const { return index_of_visited(x) != npos; }

  // Per record: (winner index, loser index) into visited().
  const std::vector<std::pair<std::size_t, std::size_t>>& record_indices() const { return indices_; }

  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  std::size_t dim() const { return visited_.empty() ? 0 : visited_.front().dim(); }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<ComparisonRecord> records_;
  std::vector<Configuration> visited_;
  std::vector<std::pair<std::size_t, std::size_t>> indices_;
};

nlohmann::json dataset_to_json(const ComparisonDataset& data);
ComparisonDataset dataset_from_json(const nlohmann::json& j);

}  // namespace prefopt
