#include "pddlab/trace.hpp"

#include <sstream>

#include "pddlab/jsonio.hpp"

namespace pddlab {

void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& trace) {
  std::ostringstream os;
  os << "step,l_dpdd,l_nc,l_total,mean_dd,abs_mean_delta\n";
  for (const TraceRecord& r : trace.records) {
    os << r.step << ',' << format_real(r.l_dpdd) << ',' << format_real(r.l_nc) << ','
       << format_real(r.l_total) << ',' << format_real(r.mean_dd) << ','
       << format_real(r.abs_mean_delta) << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace pddlab
