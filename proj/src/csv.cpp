#include "hetlb/csv.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace hetlb {

std::string format_double(double v) {
  if (std::isnan(v)) throw std::logic_error("csv: refusing to write NaN");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TraceCsvWriter::TraceCsvWriter(const std::filesystem::path& file) : out_(file) {
  if (!out_) throw std::runtime_error("cannot open " + file.string());
  out_ << "rep,series,time,h,m,l,k,value\n";
}

void TraceCsvWriter::row(const std::string& rep, const std::string& series, double time,
                         const std::string& h, const std::string& m, const std::string& l,
                         const std::string& k, double value) {
  out_ << rep << ',' << series << ',' << format_double(time) << ',' << h << ',' << m << ',' << l
       << ',' << k << ',' << format_double(value) << '\n';
}

void TraceCsvWriter::add_trace(int rep, const Trace& trace) {
  const std::string r = std::to_string(rep);
  for (const auto& s : trace.samples) {
    for (int h = 0; h < trace.task_classes; ++h)
      for (int m = 0; m < trace.server_types; ++m)
        for (int l = 0; l <= trace.queue_cap; ++l)
          row(r, "xtilde", s.time, std::to_string(h), std::to_string(m), std::to_string(l), "",
              s.xtilde[trace.xt_index(h, m, l)]);
    if (!trace.mu_k.empty())
      for (int m = 0; m < trace.server_types; ++m)
        for (std::size_t k = 0; k < trace.mu_k.size(); ++k)
          row(r, "xbar", s.time, "", std::to_string(m), "", format_double(trace.mu_k[k]),
              s.xbar[trace.xbar_index(m, static_cast<int>(k))]);
    for (int m = 0; m < trace.server_types; ++m)
      row(r, "busy_frac", s.time, "", std::to_string(m), "", "", s.busy_frac[m]);
    row(r, "avg_queue_len", s.time, "", "", "", "", s.avg_queue_len);
    row(r, "arrivals", s.time, "", "", "", "", static_cast<double>(s.arrivals));
    row(r, "departures", s.time, "", "", "", "", static_cast<double>(s.departures));
    row(r, "busy_assignments", s.time, "", "", "", "", static_cast<double>(s.busy_assignments));
    row(r, "bad_assignments", s.time, "", "", "", "", static_cast<double>(s.bad_assignments));
  }
}

void TraceCsvWriter::add_fluid_point(double time, int m, double rate_value, double value) {
  row("-1", "fluid_xbar", time, "", std::to_string(m), "", format_double(rate_value), value);
}

void TraceCsvWriter::add_scalar(int rep, const std::string& series, double time, double value) {
  row(std::to_string(rep), series, time, "", "", "", "", value);
}

void write_summary_csv(const std::filesystem::path& file, const std::vector<SummaryRow>& rows) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open " + file.string());
  out << "policy,N,scenario,metric,mean,stderr,replications\n";
  for (const auto& r : rows)
    out << r.policy << ',' << r.N << ',' << r.scenario << ',' << r.metric << ','
        << format_double(r.mean) << ',' << format_double(r.stderr_) << ',' << r.replications
        << '\n';
}

void write_flat_summary(const std::filesystem::path& file,
                        const std::map<std::string, double>& kv) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open " + file.string());
  for (const auto& [key, value] : kv) out << key << '=' << format_double(value) << '\n';
}

}  // namespace hetlb
