#pragma once

// Experiment reports: per-repeat rows plus mean/std aggregates, emitted as
// CSV and markdown with byte-deterministic formatting (%.17g keeps every
// double exact across a CSV round-trip).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dager {

struct ReportRow {
  std::string cell;
  std::string variant;
  int repeat = 0;
  std::uint64_t seed = 0;
  double macro_f1 = 0.0;
};

struct AggregateRow {
  std::string cell;
  std::string variant;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t repeats = 0;
};

struct ExperimentReport {
  std::string experiment;  // starvation | ratio | agnostic
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, std::uint64_t>> checksums;

  // canonical order: (cell, variant, repeat)
  void sort_rows() {
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
      if (a.cell != b.cell) return a.cell < b.cell;
      if (a.variant != b.variant) return a.variant < b.variant;
      return a.repeat < b.repeat;
    });
  }

  std::vector<AggregateRow> aggregates() const {
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.cell, r.variant}].push_back(r.macro_f1);
    std::vector<AggregateRow> out;
    for (const auto& [key, values] : groups) {
      AggregateRow a;
      a.cell = key.first;
      a.variant = key.second;
      a.repeats = values.size();
      double sum = 0.0;
      for (double v : values) sum += v;
      a.mean = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - a.mean) * (v - a.mean);
      a.stddev = values.size() > 1
                     ? std::sqrt(ss / static_cast<double>(values.size() - 1))
                     : 0.0;
      out.push_back(std::move(a));
    }
    return out;
  }

  double aggregate_mean(const std::string& cell, const std::string& variant) const {
    for (const auto& a : aggregates())
      if (a.cell == cell && a.variant == variant) return a.mean;
    throw std::runtime_error("aggregate_mean: no cell " + cell + "/" + variant);
  }
};

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void emit_report_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_report_csv: cannot open " + path);
  out << "experiment,cell,variant,repeat,seed,macro_f1\n";
  for (const auto& r : report.rows)
    out << report.experiment << ',' << r.cell << ',' << r.variant << ',' << r.repeat << ','
        << r.seed << ',' << format_double(r.macro_f1) << '\n';
  for (const auto& a : report.aggregates()) {
    out << report.experiment << ',' << a.cell << ',' << a.variant << ",mean,,"
        << format_double(a.mean) << '\n';
    out << report.experiment << ',' << a.cell << ',' << a.variant << ",std,,"
        << format_double(a.stddev) << '\n';
  }
  if (!out) throw std::runtime_error("emit_report_csv: write failed");
}

inline void emit_report_markdown(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_report_markdown: cannot open " + path);
  out << "# " << report.experiment << "\n\n";
  out << "| cell | variant | mean macro-F1 | std | repeats |\n";
  out << "|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& a : report.aggregates()) {
    std::snprintf(buf, sizeof(buf), "%.4f", a.mean);
    out << "| " << a.cell << " | " << a.variant << " | " << buf << " | ";
    std::snprintf(buf, sizeof(buf), "%.4f", a.stddev);
    out << buf << " | " << a.repeats << " |\n";
  }
  if (!out) throw std::runtime_error("emit_report_markdown: write failed");
}

inline void emit_config_echo(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_config_echo: cannot open " + path);
  for (const auto& [k, v] : report.config_echo) out << k << " = " << v << '\n';
}

inline void emit_checksums(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_checksums: cannot open " + path);
  char buf[32];
  for (const auto& [name, value] : report.checksums) {
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    out << name << '\t' << buf << '\n';
  }
}

// Parses a CSV produced by emit_report_csv; used by the round-trip check.
struct ParsedCsv {
  std::vector<ReportRow> rows;
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> aggregates;
};

inline ParsedCsv read_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_report_csv: cannot open " + path);
  ParsedCsv parsed;
  std::string line;
  if (!std::getline(in, line) || line != "experiment,cell,variant,repeat,seed,macro_f1")
    throw std::runtime_error("read_report_csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() == 5) fields.push_back("");  // trailing empty
    if (fields.size() != 6) throw std::runtime_error("read_report_csv: bad row: " + line);
    const double value = std::strtod(fields[5].c_str(), nullptr);
    if (fields[3] == "mean") {
      parsed.aggregates[{fields[1], fields[2]}].first = value;
    } else if (fields[3] == "std") {
      parsed.aggregates[{fields[1], fields[2]}].second = value;
    } else {
      ReportRow r;
      r.cell = fields[1];
      r.variant = fields[2];
      r.repeat = std::stoi(fields[3]);
      r.seed = std::stoull(fields[4]);
      r.macro_f1 = value;
      parsed.rows.push_back(std::move(r));
    }
  }
  return parsed;
}

}  // namespace dager
