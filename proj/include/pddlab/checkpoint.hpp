#pragma once

#include <filesystem>

#include "pddlab/denoiser.hpp"
#include "pddlab/schedule.hpp"

namespace pddlab {

struct ModelCheckpoint {
  DenoiserModel model;
  DiffusionSchedule sched;
};

// One JSON document per model: architecture descriptor, schedule, the flat
// parameter array with named segments, step counter, and seed. Reals at 17
// significant digits; fixed key order for byte-stable reruns.
void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model,
                     const DiffusionSchedule& sched);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pddlab
