#include "cstseld/synth.hpp"

#include <algorithm>
#include <cmath>

#include "cstseld/errors.hpp"
#include "cstseld/features.hpp"

namespace cst {

namespace {

double attack_release_envelope(double t_s, double dur_s, double ramp_s = 0.02) {
  const double a = std::min(1.0, t_s / ramp_s);
  const double r = std::min(1.0, (dur_s - t_s) / ramp_s);
  return std::max(0.0, std::min(a, r));
}

// Mono dry signal for one event at local time t (seconds from onset).
double event_sample(const SceneEvent& e, double t_s, double dur_s, double noise_sample) {
  const double env = attack_release_envelope(t_s, dur_s);
  switch (static_cast<ToyClass>(e.class_index)) {
    case ToyClass::kToneBurst:
      return env * e.gain * std::sin(2.0 * kPi * e.tone_hz * t_s);
    case ToyClass::kNoiseBurst:
      return env * e.gain * noise_sample;
    case ToyClass::kChirp: {
      // linear sweep from tone_hz to 4*tone_hz over the event
      const double k = 3.0 * e.tone_hz / std::max(dur_s, 1e-3);
      const double phase = 2.0 * kPi * (e.tone_hz * t_s + 0.5 * k * t_s * t_s);
      return env * e.gain * std::sin(phase);
    }
    case ToyClass::kRumble:
      return env * e.gain * noise_sample;  // caller lowpasses the noise
  }
  return 0.0;
}

}  // namespace

SyntheticScene random_scene(const SceneGenParams& params, std::mt19937_64& rng) {
  if (params.num_classes < 1 || params.num_classes > 13)
    throw ConfigError("random_scene: num_classes must be in [1,13]");
  SyntheticScene scene;
  scene.duration_s = params.duration_s;
  scene.num_classes = params.num_classes;

  std::uniform_int_distribution<int> n_events(params.min_events, params.max_events);
  std::uniform_int_distribution<int> cls(0, params.num_classes - 1);
  std::uniform_real_distribution<double> az(-180.0, 180.0);
  std::uniform_real_distribution<double> el(-60.0, 60.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> tone(400.0, 2400.0);

  const int count = n_events(rng);
  for (int i = 0; i < count; ++i) {
    SceneEvent e;
    e.source_index = i;
    e.class_index = cls(rng) % 4;  // render kinds cycle for class counts > 4
    if (params.num_classes > 4) e.class_index = cls(rng);
    const double len = 0.8 + u01(rng) * (params.duration_s * 0.6 - 0.8);
    e.onset_s = u01(rng) * (params.duration_s - len);
    e.offset_s = e.onset_s + len;
    e.azimuth_deg = az(rng);
    e.elevation_deg = el(rng);
    if (u01(rng) < params.moving_fraction) e.azimuth_ramp_deg_per_s = (u01(rng) - 0.5) * 80.0;
    e.gain = 0.35 + 0.3 * u01(rng);
    e.tone_hz = tone(rng);
    if (e.class_index % 4 == static_cast<int>(ToyClass::kRumble)) {
      e.gain *= 0.8;
      e.tone_hz = 80.0;
    }

    // keep same-class polyphony within max_polyphony at every label frame
    int worst = 0;
    for (const auto& other : scene.events) {
      if (other.class_index != e.class_index) continue;
      if (other.onset_s < e.offset_s && e.onset_s < other.offset_s) ++worst;
    }
    if (worst + 1 > params.max_polyphony) continue;
    scene.events.push_back(e);
  }
  if (scene.events.empty()) {
    SceneEvent e;
    e.class_index = cls(rng) % params.num_classes;
    e.onset_s = 0.5;
    e.offset_s = params.duration_s - 0.5;
    e.azimuth_deg = az(rng);
    e.elevation_deg = el(rng);
    e.tone_hz = tone(rng);
    scene.events.push_back(e);
  }
  return scene;
}

MultichannelAudio render_scene(const SyntheticScene& scene, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::llround(scene.duration_s * kSampleRate));
  MultichannelAudio audio;
  audio.sample_rate = kSampleRate;
  audio.channels.assign(4, std::vector<double>(n, 0.0));

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& e : scene.events) {
    if (e.offset_s <= e.onset_s) throw ConfigError("render_scene: event offset before onset");
    const auto s0 = static_cast<std::size_t>(std::max(0.0, e.onset_s) * kSampleRate);
    const auto s1 = std::min(n, static_cast<std::size_t>(e.offset_s * kSampleRate));
    const double dur = e.offset_s - e.onset_s;
    const bool rumble = e.class_index % 4 == static_cast<int>(ToyClass::kRumble);
    double lp = 0.0;  // one-pole lowpass state for the rumble class
    const double lp_coeff = 0.98;
    for (std::size_t s = s0; s < s1; ++s) {
      const double t_local = static_cast<double>(s) / kSampleRate - e.onset_s;
      double noise = gauss(rng) * 0.5;
      if (rumble) {
        lp = lp_coeff * lp + (1.0 - lp_coeff) * noise;
        noise = lp * 8.0;
      }
      const double v = event_sample(e, t_local, dur, noise);
      const double az = deg_to_rad(e.azimuth_at(static_cast<double>(s) / kSampleRate));
      const double elv = deg_to_rad(e.elevation_deg);
      audio.channels[0][s] += v;
      audio.channels[1][s] += v * std::sin(az) * std::cos(elv);
      audio.channels[2][s] += v * std::sin(elv);
      audio.channels[3][s] += v * std::cos(az) * std::cos(elv);
    }
  }

  if (scene.noise_floor > 0.0) {
    for (auto& ch : audio.channels)
      for (auto& v : ch) v += gauss(rng) * scene.noise_floor;
  }
  return audio;
}

std::vector<LabeledEvent> scene_labels(const SyntheticScene& scene) {
  std::vector<LabeledEvent> out;
  const int frames = static_cast<int>(std::llround(scene.duration_s * kLabelFramesPerSecond));
  for (int t = 0; t < frames; ++t) {
    const double center_s = (t + 0.5) / kLabelFramesPerSecond;
    for (const auto& e : scene.events) {
      if (center_s < e.onset_s || center_s >= e.offset_s) continue;
      LabeledEvent row;
      row.frame = t;
      row.class_index = e.class_index;
      row.source_index = e.source_index;
      row.azimuth_deg = e.azimuth_at(center_s);
      if (row.azimuth_deg > 180.0) row.azimuth_deg -= 360.0;
      if (row.azimuth_deg <= -180.0) row.azimuth_deg += 360.0;
      row.elevation_deg = e.elevation_deg;
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace cst
