#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "primfit/metrics.hpp"

namespace primfit {

inline constexpr int kReportSchema = 1;

/// Scalar metrics of one shape bundle (as produced by MetricsBundle::to_json),
/// in table order. Per-epsilon entries are named like "p_coverage@0.01".
/// Absent values are std::nullopt.
std::vector<std::pair<std::string, std::optional<double>>> flat_metrics(const nlohmann::ordered_json& bundle);

struct MetricSummary {
  std::string name;
  std::optional<double> mean;  // absent when no shape has a value
  double min = 0.0;
  double max = 0.0;
  int present = 0;
  int absent = 0;
};

// Surfaces of all shapes pooled by area fraction.
struct PooledBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  std::optional<double> coverage;  // mean per-surface coverage x100
};

struct DatasetReport {
  std::string method;
  std::vector<nlohmann::ordered_json> shapes;  // bundles sorted by shape id
  std::vector<std::string> failed;             // shapes without a usable prediction
  std::vector<MetricSummary> metrics;
  std::map<std::string, std::vector<PooledBin>> scale_curves;  // keyed by epsilon

  const MetricSummary* metric(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
  /// Throws std::invalid_argument on an unknown schema version.
  static DatasetReport from_json(const nlohmann::ordered_json& j);
  /// Plain-text table with one row of dataset means.
  std::string table() const;
};

/// Means over shapes, skipping (and counting) absent values. Summation runs
/// in sorted shape-id order, so the result does not depend on input order.
DatasetReport aggregate(const std::vector<MetricsBundle>& bundles, const std::string& method = "",
                        const std::vector<std::string>& failed = {});
DatasetReport aggregate(std::vector<nlohmann::ordered_json> bundles, const std::string& method = "",
                        const std::vector<std::string>& failed = {});

struct MetricDelta {
  std::string name;
  std::optional<double> mean_delta;  // mean of a - b over shapes where both are present
  int paired = 0;
  int a_higher = 0;
  int b_higher = 0;
  int equal = 0;
};

struct Comparison {
  std::string method_a;
  std::string method_b;
  std::vector<std::string> shared;
  std::vector<std::string> only_a;
  std::vector<std::string> only_b;
  std::vector<MetricDelta> deltas;

  nlohmann::ordered_json to_json() const;
  std::string table() const;
};

/// Paired per-shape deltas a - b over the shared shape set. Throws
/// std::invalid_argument when no shape is shared.
Comparison compare(const DatasetReport& a, const DatasetReport& b);

}  // namespace primfit
