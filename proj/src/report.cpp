#include "vtdtsn/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

namespace {

const std::vector<std::string> kKeyColumns{"z_layer", "replicate_id", "timepoint"};
const std::vector<std::string> kRequired{"z_layer", "replicate_id", "timepoint", "mse", "ssim", "cosine"};

void check_schema(const CsvTable& t) {
  std::string missing;
  for (const auto& c : kRequired) {
    if (!t.column(c)) missing += (missing.empty() ? "" : ", ") + c;
  }
  if (!missing.empty()) throw FormatError("CSV is missing column(s): " + missing);
}

std::string integer_text(const std::string& s, const std::string& what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("expected a non-negative integer " + what + ", got '" + s + "'");
  }
  return s;
}

}  // namespace

Stats describe(const std::vector<double>& values) {
  Stats s;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    ++s.count;
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  if (s.count == 0) return Stats{0, nan, nan, nan, nan};
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
  s.std = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  return s;
}

CsvTable metrics_rows_table(const std::vector<SliceMetrics>& rows, const std::vector<ExtraColumn>& extra) {
  CsvTable t;
  t.header = {"z_layer", "replicate_id", "timepoint", "mse", "ssim", "cosine", "mse_255"};
  for (const auto& e : extra) {
    if (e.values.size() != rows.size()) throw ShapeError("extra column '" + e.name + "' has the wrong length");
    t.header.push_back(e.name);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::vector<std::string> f{std::to_string(r.z), std::to_string(r.replicate_id), std::to_string(r.timepoint_days),
                               format_double(r.mse), format_double(r.ssim), format_double(r.cosine),
                               format_double(r.mse * kMse255Scale)};
    for (const auto& e : extra) f.push_back(format_double(e.values[i]));
    t.rows.push_back(std::move(f));
  }
  return t;
}

std::vector<std::string> metric_columns(const CsvTable& rows) {
  std::vector<std::string> out;
  for (const auto& h : rows.header)
    if (std::find(kKeyColumns.begin(), kKeyColumns.end(), h) == kKeyColumns.end()) out.push_back(h);
  return out;
}

CsvTable aggregate_by(const CsvTable& rows, const std::string& key) {
  check_schema(rows);
  const std::size_t key_col = rows.require_column(key);
  const auto metrics = metric_columns(rows);
  std::map<unsigned long long, std::vector<const std::vector<std::string>*>> groups;
  for (const auto& r : rows.rows) groups[std::stoull(integer_text(r[key_col], key))].push_back(&r);

  CsvTable out;
  out.header = {key, "count"};
  for (const auto& m : metrics)
    for (const char* s : {"_mean", "_std", "_min", "_max"}) out.header.push_back(m + s);
  for (const auto& [k, members] : groups) {
    std::vector<std::string> f{std::to_string(k), std::to_string(members.size())};
    for (const auto& m : metrics) {
      const std::size_t c = rows.require_column(m);
      std::vector<double> vals;
      for (const auto* r : members) vals.push_back(parse_double((*r)[c], "column " + m));
      const Stats s = describe(vals);
      for (double v : {s.mean, s.std, s.min, s.max}) f.push_back(format_double(v));
    }
    out.rows.push_back(std::move(f));
  }
  return out;
}

CsvTable metric_histograms(const CsvTable& rows, std::size_t bins) {
  check_schema(rows);
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  CsvTable out;
  out.header = {"metric", "bin", "lower", "upper", "count"};
  for (const auto& m : metric_columns(rows)) {
    const std::size_t c = rows.require_column(m);
    std::vector<double> vals;
    for (const auto& r : rows.rows) {
      const double v = parse_double(r[c], "column " + m);
      if (!std::isnan(v)) vals.push_back(v);
    }
    const Stats s = describe(vals);
    const double lo = vals.empty() ? 0.0 : s.min;
    const double width = vals.empty() || s.max == s.min ? 1.0 / static_cast<double>(bins)
                                                         : (s.max - s.min) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : vals) {
      auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
      counts[std::min(b, bins - 1)]++;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      out.rows.push_back({m, std::to_string(b), format_double(lo + width * static_cast<double>(b)),
                          format_double(b + 1 == bins && !vals.empty() && s.max != s.min
                                            ? s.max
                                            : lo + width * static_cast<double>(b + 1)),
                          std::to_string(counts[b])});
    }
  }
  return out;
}

CsvTable replicate_report(const std::vector<CsvTable>& tables) {
  if (tables.empty()) throw ConfigError("report needs at least one eval CSV");
  const std::vector<std::string> metrics{"mse", "ssim", "cosine"};
  std::map<unsigned long long, std::map<std::string, std::vector<double>>> by_rep;
  std::map<unsigned long long, std::size_t> counts;
  for (const auto& t : tables) {
    check_schema(t);
    const std::size_t rc = t.require_column("replicate_id");
    for (const auto& r : t.rows) {
      const auto rep = std::stoull(integer_text(r[rc], "replicate_id"));
      ++counts[rep];
      for (const auto& m : metrics) by_rep[rep][m].push_back(parse_double(r[t.require_column(m)], "column " + m));
    }
  }
  CsvTable out;
  out.header = {"replicate_id", "slices", "mse_mean", "ssim_mean", "cosine_mean", "mse_255_mean"};
  for (const auto& [rep, cols] : by_rep) {
    const Stats mse_s = describe(cols.at("mse"));
    out.rows.push_back({std::to_string(rep), std::to_string(counts[rep]), format_double(mse_s.mean),
                        format_double(describe(cols.at("ssim")).mean), format_double(describe(cols.at("cosine")).mean),
                        format_double(mse_s.mean * kMse255Scale)});
  }
  return out;
}

}  // namespace vtdtsn
