#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cstseld/geo.hpp"

namespace cst {

/// One row of the DCASE-style label CSV:
/// frame_index,class_index,source_index,azimuth_deg,elevation_deg
/// at 100 ms frame resolution.
struct LabeledEvent {
  int frame = 0;
  int class_index = 0;
  int source_index = 0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;

  Vec3 doa() const { return doa_from_azel(azimuth_deg, elevation_deg); }
};

std::vector<LabeledEvent> read_label_csv(const std::string& path);
void write_label_csv(const std::string& path, const std::vector<LabeledEvent>& events,
                     const std::vector<std::pair<std::string, std::string>>& echo = {});

}  // namespace cst
