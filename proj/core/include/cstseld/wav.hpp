#pragma once

#include <string>
#include <vector>

namespace cst {

/// First-order Ambisonics audio, ACN channel order (W,Y,Z,X), SN3D
/// normalization. Samples are kept in double regardless of file depth.
struct MultichannelAudio {
  std::vector<std::vector<double>> channels;
  int sample_rate = 24000;

  std::size_t num_samples() const { return channels.empty() ? 0 : channels[0].size(); }
};

/// Reads a PCM WAV (16/24/32-bit integer or 32-bit float). Throws DataError
/// on any other encoding, on a channel count != expected_channels (when
/// positive), or on a sample rate != 24 kHz (no resampler).
MultichannelAudio read_wav(const std::string& path, int expected_channels = 4);

/// Writes 32-bit float WAV.
void write_wav(const std::string& path, const MultichannelAudio& audio);

}  // namespace cst
