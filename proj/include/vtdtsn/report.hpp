#pragma once

#include <string>
#include <vector>

#include "vtdtsn/csv.hpp"
#include "vtdtsn/evaluation.hpp"

namespace vtdtsn {

// Intensity-scale factor for the mse_255 column: MSE on [0,255] images.
inline constexpr double kMse255Scale = 255.0 * 255.0;

struct Stats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  double min = 0.0;
  double max = 0.0;
};

// NaN entries are skipped; an empty input yields NaN fields.
Stats describe(const std::vector<double>& values);

// Per-slice rows with extra named columns appended (one value per row each).
struct ExtraColumn {
  std::string name;
  std::vector<double> values;
};

CsvTable metrics_rows_table(const std::vector<SliceMetrics>& rows, const std::vector<ExtraColumn>& extra = {});

// Per-key aggregates of a rows table: `key` is "z_layer" or "replicate_id".
// Every metric column yields _mean, _std, _min and _max columns.
CsvTable aggregate_by(const CsvTable& rows, const std::string& key);

// `bins` uniform bins spanning each metric's observed range; the last bin
// is closed on the right.
CsvTable metric_histograms(const CsvTable& rows, std::size_t bins = 20);

// Per-replicate means over one or more rows tables.
CsvTable replicate_report(const std::vector<CsvTable>& tables);

// Metric columns of a rows table, i.e. every column after the key columns.
std::vector<std::string> metric_columns(const CsvTable& rows);

}  // namespace vtdtsn
