#pragma once

#include <filesystem>
#include <vector>

namespace pddlab {

// One row per logged training step. Column meaning by phase:
//   pretrain: l_nc = l_total = batch benign loss, others zero
//   phase 1:  l_dpdd = hinge, l_nc = poisoned residual, l_total = l_nc + tau*l_dpdd
//   phase 2:  l_dpdd/mean_dd = frozen-trigger probe, l_nc = poisoned loss,
//             l_total = benign + poisoned
// abs_mean_delta is mean(|delta_i|), logged as a metric only.
struct TraceRecord {
  long step = 0;
  double l_dpdd = 0.0;
  double l_nc = 0.0;
  double l_total = 0.0;
  double mean_dd = 0.0;
  double abs_mean_delta = 0.0;
};

struct TrainingTrace {
  std::vector<TraceRecord> records;
  bool aborted = false;  // a non-finite loss ended the run early
};

// CSV `step,l_dpdd,l_nc,l_total,mean_dd,abs_mean_delta`; reals keep full
// precision so a rerun's trace is byte-identical. Non-finite values print
// as nan/inf rather than being dropped.
void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& trace);

}  // namespace pddlab
