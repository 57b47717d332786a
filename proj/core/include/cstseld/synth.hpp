#pragma once

#include <random>
#include <vector>

#include "cstseld/labels.hpp"
#include "cstseld/wav.hpp"

namespace cst {

/// Toy sound classes used by the synthetic scene generator.
enum class ToyClass : int {
  kToneBurst = 0,
  kNoiseBurst = 1,
  kChirp = 2,
  kRumble = 3,  // quiet low-frequency distractor
};

struct SceneEvent {
  int class_index = 0;
  int source_index = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double azimuth_ramp_deg_per_s = 0.0;  // 0 = static source
  double gain = 0.5;                    // linear amplitude of the dry source
  double tone_hz = 800.0;               // tone/chirp start frequency

  double azimuth_at(double t_s) const {
    return azimuth_deg + azimuth_ramp_deg_per_s * (t_s - onset_s);
  }
};

struct SyntheticScene {
  double duration_s = 5.0;
  int num_classes = 4;
  std::vector<SceneEvent> events;
  double noise_floor = 0.005;  // diffuse ambience amplitude
};

struct SceneGenParams {
  double duration_s = 5.0;
  int num_classes = 4;
  int min_events = 1;
  int max_events = 3;
  int max_polyphony = 3;  // same-class simultaneous events allowed (N_T)
  double moving_fraction = 0.25;
};

SyntheticScene random_scene(const SceneGenParams& params, std::mt19937_64& rng);

/// Renders a scene to 4-channel FoA via SN3D gains
/// (W,Y,Z,X) = (1, sin(az)cos(el), sin(el), cos(az)cos(el)).
MultichannelAudio render_scene(const SyntheticScene& scene, std::mt19937_64& rng);

/// Labels at 100 ms resolution; a frame is active when the event covers
/// its center.
std::vector<LabeledEvent> scene_labels(const SyntheticScene& scene);

}  // namespace cst
