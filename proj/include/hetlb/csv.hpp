#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hetlb/simulator.hpp"

namespace hetlb {

// Long-format trace writer. Columns:
//   rep,series,time,h,m,l,k,value
// xtilde rows fill h/m/l, xbar rows fill m and put the rate value in k,
// scalar series leave the index columns empty. rep = -1 marks analytic
// overlay rows (fluid curves), which share the xbar schema.
class TraceCsvWriter {
 public:
  explicit TraceCsvWriter(const std::filesystem::path& file);

  void add_trace(int rep, const Trace& trace);
  void add_fluid_point(double time, int m, double rate_value, double value);
  void add_scalar(int rep, const std::string& series, double time, double value);

 private:
  void row(const std::string& rep, const std::string& series, double time, const std::string& h,
           const std::string& m, const std::string& l, const std::string& k, double value);
  std::ofstream out_;
};

// summary.csv: one aggregate row per (policy, N, scenario, metric).
struct SummaryRow {
  std::string policy;
  std::size_t N = 0;
  std::string scenario;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;
  int replications = 0;
};

void write_summary_csv(const std::filesystem::path& file, const std::vector<SummaryRow>& rows);

// Flat key=value file for a single replication's steady-state record.
void write_flat_summary(const std::filesystem::path& file,
                        const std::map<std::string, double>& kv);

std::string format_double(double v);

}  // namespace hetlb
