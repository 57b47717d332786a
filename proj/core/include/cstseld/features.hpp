#pragma once

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "cstseld/tensor.hpp"
#include "cstseld/wav.hpp"

namespace cst {

inline constexpr int kSampleRate = 24000;
inline constexpr int kStftWindowSamples = 960;  // 0.04 s
inline constexpr int kStftHopSamples = 480;     // 0.02 s
inline constexpr int kStftBins = 481;           // window/2 + 1
inline constexpr int kMelBands = 64;
inline constexpr int kFeatureChannels = 7;  // 4 log-mel + 3 intensity
inline constexpr int kFeatureFramesPerSecond = 50;
inline constexpr int kLabelFramesPerSecond = 10;
inline constexpr double kLogEps = 1e-10;

/// Complex STFT, one plane per FoA channel, row-major [frame][bin].
struct Spectrogram {
  std::int64_t frames = 0;
  std::int64_t bins = kStftBins;
  std::vector<std::vector<std::complex<double>>> channels;
};

/// Hann-windowed STFT at 24 kHz, hop 480, window 960. Frame t covers
/// samples [t*480, t*480+960), reading zeros past the end, so the frame
/// count is floor(num_samples / 480).
Spectrogram stft(const MultichannelAudio& audio);

/// 64-band triangular mel filterbank (HTK scale, 0-12 kHz), dense
/// [band][bin] row-major.
const std::vector<double>& mel_filterbank();

/// log(power * melbank + eps) -> [4, T, 64].
Tensor<double> logmel(const Spectrogram& spec);

/// Mel-projected intensity vectors normalized per bin by the mel total
/// energy of all four channels -> [3, T, 64]. Component order follows the
/// FoA dipole channels (Y, Z, X); reorder as (iv[2], iv[0], iv[1]) to get
/// (x, y, z).
Tensor<double> intensity_vectors(const Spectrogram& spec);

/// Mel- and time-averaged IV direction as a (x,y,z) DoA estimate.
/// Test/analysis helper.
void iv_mean_direction(const Tensor<double>& iv, double& x, double& y, double& z);

/// The 7-channel network input of the model, channels stacked as
/// [logmel(4), iv(3)].
template <typename T>
struct FeatureTensor {
  Tensor<T> data;  // [7, T, 64]
  double frame_hop_s = 0.02;
  int mel_bands = kMelBands;
};

template <typename T>
FeatureTensor<T> build_input(const Tensor<double>& lm, const Tensor<double>& iv);

template <typename T>
FeatureTensor<T> extract_features(const MultichannelAudio& audio);

/// Truncates or pads (with digital-silence feature frames) to exactly
/// `frames` time steps.
template <typename T>
FeatureTensor<T> fit_frames(const FeatureTensor<T>& f, std::int64_t frames);

/// Feature cache: text manifest plus raw little-endian f32 payload in a
/// sibling `<path>.bin` file. `echo` lines are stored as `# key=value`.
template <typename T>
void save_feature_cache(const std::string& path, const FeatureTensor<T>& f,
                        const std::vector<std::pair<std::string, std::string>>& echo = {});

template <typename T>
FeatureTensor<T> load_feature_cache(const std::string& path);

}  // namespace cst
