#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bspft/atomic_file.hpp"
#include "bspft/error.hpp"
#include "json.hpp"

namespace bspft {

inline void require_samples(std::span<const double> xs, std::string_view what) {
  if (xs.empty()) throw Error(ErrorCode::EmptySamples, std::string(what) + " has no samples");
}

// Odd n: middle element. Even n: mean of the two middle elements.
inline double median(std::span<const double> samples) {
  require_samples(samples, "median input");
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Sample standard deviation (n - 1 denominator); 0 for a single sample.
inline double sample_stddev(std::span<const double> samples) {
  require_samples(samples, "stddev input");
  if (samples.size() < 2) return 0.0;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(samples.size() - 1));
}

// Linear interpolation between closest ranks, h = (n - 1) p ("type 7").
inline double quantile(std::span<const double> samples, double p) {
  require_samples(samples, "quantile input");
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct BoxSummary {
  std::size_t count = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline BoxSummary box_summary(std::span<const double> samples) {
  require_samples(samples, "box summary input");
  auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  return BoxSummary{samples.size(), *mn, quantile(samples, 0.25), quantile(samples, 0.5), quantile(samples, 0.75), *mx};
}

struct OverheadReport {
  double median_with_s = 0;
  double median_without_s = 0;
  double relative_overhead = 0;  // (median_with - median_without) / median_with
  double std_with_s = 0;
  double std_without_s = 0;
};

inline OverheadReport relative_overhead(std::span<const double> with, std::span<const double> without) {
  require_samples(with, "instrumented sample set");
  require_samples(without, "baseline sample set");
  OverheadReport r;
  r.median_with_s = median(with);
  r.median_without_s = median(without);
  if (r.median_with_s == 0.0) throw Error(ErrorCode::NonPositiveTime, "instrumented median is zero");
  r.relative_overhead = (r.median_with_s - r.median_without_s) / r.median_with_s;
  r.std_with_s = sample_stddev(with);
  r.std_without_s = sample_stddev(without);
  return r;
}

// Failure-free overhead W_FF = (T_FF - T_base) / T_FF.
inline double failure_free_overhead(double t_ff, double t_base) {
  if (!(t_ff > 0.0)) throw Error(ErrorCode::NonPositiveTime, "failure-free time must be positive");
  return (t_ff - t_base) / t_ff;
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Run records

enum class Variant { Instrumented, Baseline };

inline std::string_view to_string(Variant v) { return v == Variant::Instrumented ? "instrumented" : "baseline"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "instrumented") return Variant::Instrumented;
  if (s == "baseline") return Variant::Baseline;
  throw Error(ErrorCode::ParseError, "unknown variant '" + std::string(s) + "'");
}

struct RunRecord {
  std::string run_id;
  Variant variant = Variant::Instrumented;
  double total_wall_s = 0;
  std::vector<double> superstep_wall_s;
  std::vector<double> checkpoint_cost_s;
  std::vector<double> recovery_cost_s;
  std::uint64_t fault_count = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"run_id", r.run_id},
                     {"variant", std::string(to_string(r.variant))},
                     {"total_wall_s", r.total_wall_s},
                     {"superstep_wall_s", r.superstep_wall_s},
                     {"checkpoint_cost_s", r.checkpoint_cost_s},
                     {"recovery_cost_s", r.recovery_cost_s},
                     {"fault_count", r.fault_count}};
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
  r.run_id = j.at("run_id").get<std::string>();
  r.variant = parse_variant(j.at("variant").get<std::string>());
  r.total_wall_s = j.at("total_wall_s").get<double>();
  r.superstep_wall_s = j.value("superstep_wall_s", std::vector<double>{});
  r.checkpoint_cost_s = j.value("checkpoint_cost_s", std::vector<double>{});
  r.recovery_cost_s = j.value("recovery_cost_s", std::vector<double>{});
  r.fault_count = j.value("fault_count", std::uint64_t{0});
  if (!(r.total_wall_s > 0.0)) throw Error(ErrorCode::ParseError, "record " + r.run_id + ": total_wall_s must be positive");
}

enum class RecordFormat { Csv, Json };

inline RecordFormat parse_record_format(std::string_view s) {
  if (s == "csv") return RecordFormat::Csv;
  if (s == "json") return RecordFormat::Json;
  throw Error(ErrorCode::ConfigError, "unknown record format '" + std::string(s) + "' (expected csv or json)");
}

// Format implied by a file extension; JSON unless the path ends in ".csv".
inline RecordFormat record_format_for(const std::filesystem::path& p) {
  return p.extension() == ".csv" ? RecordFormat::Csv : RecordFormat::Json;
}

inline std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::vector<double> wall_times(const std::vector<RunRecord>& records, Variant v) {
  std::vector<double> out;
  for (const auto& r : records)
    if (r.variant == v) out.push_back(r.total_wall_s);
  return out;
}

// Box-plot summary, one CSV row per variant present:
//   variant,count,min,q1,median,q3,max
inline std::string summary_csv(const std::vector<RunRecord>& records) {
  std::string out = "variant,count,min,q1,median,q3,max\n";
  for (Variant v : {Variant::Instrumented, Variant::Baseline}) {
    auto xs = wall_times(records, v);
    if (xs.empty()) continue;
    BoxSummary b = box_summary(xs);
    out += std::string(to_string(v)) + "," + std::to_string(b.count) + "," + shortest(b.min) + "," + shortest(b.q1) +
           "," + shortest(b.median) + "," + shortest(b.q3) + "," + shortest(b.max) + "\n";
  }
  return out;
}

inline std::filesystem::path summary_path_for(const std::filesystem::path& records_path) {
  std::filesystem::path p = records_path;
  p += ".summary";
  return p;
}

inline std::string records_to_csv(const std::vector<RunRecord>& records) {
  std::string out = "run_id,variant,total_wall_s,fault_count\n";
  for (const auto& r : records) {
    if (r.run_id.find_first_of(",\n\"") != std::string::npos)
      throw Error(ErrorCode::ConfigError, "run_id not representable in CSV: " + r.run_id);
    out += r.run_id + "," + std::string(to_string(r.variant)) + "," + shortest(r.total_wall_s) + "," +
           std::to_string(r.fault_count) + "\n";
  }
  return out;
}

// Writes the records file and its "<path>.summary" sidecar.
inline void export_records(const std::vector<RunRecord>& records, const std::filesystem::path& path,
                           RecordFormat format) {
  if (records.empty()) throw Error(ErrorCode::EmptySamples, "no records to export");
  std::string body = format == RecordFormat::Csv ? records_to_csv(records) : nlohmann::json(records).dump(2) + "\n";
  write_file_atomically(path, as_bytes(body));
  std::string summary = summary_csv(records);
  write_file_atomically(summary_path_for(path), as_bytes(summary));
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, std::string_view field) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty())
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad " + std::string(field) + " '" + std::string(text) + "'");
  return v;
}

}  // namespace detail

inline std::vector<RunRecord> parse_records_csv(std::string_view text) {
  std::vector<RunRecord> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "run_id,variant,total_wall_s,fault_count")
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected header "
                                           "'run_id,variant,total_wall_s,fault_count'");
      header_seen = true;
      continue;
    }
    auto f = detail::split_csv_line(line);
    if (f.size() != 4)
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": expected 4 fields, got " + std::to_string(f.size()));
    RunRecord r;
    r.run_id = std::string(f[0]);
    if (r.run_id.empty()) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty run_id");
    try {
      r.variant = parse_variant(f[1]);
    } catch (const Error&) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unknown variant '" + std::string(f[1]) + "'");
    }
    r.total_wall_s = detail::parse_number<double>(f[2], line_no, "total_wall_s");
    if (!(r.total_wall_s > 0.0))
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": total_wall_s must be positive");
    r.fault_count = detail::parse_number<std::uint64_t>(f[3], line_no, "fault_count");
    out.push_back(std::move(r));
  }
  if (!header_seen) throw Error(ErrorCode::ParseError, "line 1: missing header");
  return out;
}

inline std::vector<RunRecord> parse_records_json(std::string_view text) {
  try {
    return nlohmann::json::parse(text).get<std::vector<RunRecord>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline std::vector<RunRecord> import_records(const std::filesystem::path& path, RecordFormat format) {
  Bytes raw = read_file(path);
  std::string_view text(reinterpret_cast<const char*>(raw.data()), raw.size());
  return format == RecordFormat::Csv ? parse_records_csv(text) : parse_records_json(text);
}

}  // namespace bspft
