#include "cstseld/features.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cstseld/errors.hpp"
#include "cstseld/geo.hpp"

namespace cst {

namespace {

struct DftTables {
  std::vector<double> window;  // periodic Hann, length 960
  std::vector<double> cos_t;   // [bin][n]
  std::vector<double> sin_t;
  DftTables() {
    const int N = kStftWindowSamples;
    window.resize(N);
    for (int n = 0; n < N; ++n) window[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / N);
    cos_t.resize(static_cast<std::size_t>(kStftBins) * N);
    sin_t.resize(static_cast<std::size_t>(kStftBins) * N);
    for (int k = 0; k < kStftBins; ++k) {
      for (int n = 0; n < N; ++n) {
        const double ang = 2.0 * kPi * k * n / N;
        cos_t[static_cast<std::size_t>(k) * N + n] = std::cos(ang);
        sin_t[static_cast<std::size_t>(k) * N + n] = std::sin(ang);
      }
    }
  }
};

const DftTables& dft_tables() {
  static const DftTables t;
  return t;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

const std::vector<double>& mel_filterbank() {
  static const std::vector<double> bank = [] {
    std::vector<double> fb(static_cast<std::size_t>(kMelBands) * kStftBins, 0.0);
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(static_cast<double>(kSampleRate) / 2.0);
    std::vector<double> edges(kMelBands + 2);
    for (int i = 0; i < kMelBands + 2; ++i)
      edges[static_cast<std::size_t>(i)] =
          mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kMelBands + 1));
    const double bin_hz = static_cast<double>(kSampleRate) / kStftWindowSamples;
    for (int b = 0; b < kMelBands; ++b) {
      const double lo = edges[static_cast<std::size_t>(b)];
      const double mid = edges[static_cast<std::size_t>(b) + 1];
      const double hi = edges[static_cast<std::size_t>(b) + 2];
      for (int k = 0; k < kStftBins; ++k) {
        const double f = k * bin_hz;
        double w = 0.0;
        if (f >= lo && f <= mid && mid > lo)
          w = (f - lo) / (mid - lo);
        else if (f > mid && f <= hi && hi > mid)
          w = (hi - f) / (hi - mid);
        if (w > 0.0) fb[static_cast<std::size_t>(b) * kStftBins + k] = w;
      }
    }
    return fb;
  }();
  return bank;
}

Spectrogram stft(const MultichannelAudio& audio) {
  if (audio.sample_rate != kSampleRate)
    throw DataError("stft: expected 24 kHz audio, got " + std::to_string(audio.sample_rate));
  if (audio.channels.empty()) throw DataError("stft: no channels");
  const std::size_t n = audio.num_samples();
  for (const auto& ch : audio.channels)
    if (ch.size() != n) throw DataError("stft: channel length mismatch");
  if (n < static_cast<std::size_t>(kStftWindowSamples))
    throw DataError("stft: audio shorter than one window (" +
                    std::to_string(kStftWindowSamples) + " samples)");

  const auto& tables = dft_tables();
  Spectrogram spec;
  spec.frames = static_cast<std::int64_t>(n) / kStftHopSamples;
  spec.channels.resize(audio.channels.size());

  std::vector<double> frame(kStftWindowSamples);
  for (std::size_t c = 0; c < audio.channels.size(); ++c) {
    const auto& samples = audio.channels[c];
    auto& plane = spec.channels[c];
    plane.assign(static_cast<std::size_t>(spec.frames) * kStftBins, {0.0, 0.0});
    for (std::int64_t t = 0; t < spec.frames; ++t) {
      const std::int64_t start = t * kStftHopSamples;
      for (int i = 0; i < kStftWindowSamples; ++i) {
        const std::int64_t s = start + i;
        frame[static_cast<std::size_t>(i)] =
            s < static_cast<std::int64_t>(n) ? samples[static_cast<std::size_t>(s)] * tables.window[static_cast<std::size_t>(i)]
                                             : 0.0;
      }
      for (int k = 0; k < kStftBins; ++k) {
        const double* ct = tables.cos_t.data() + static_cast<std::size_t>(k) * kStftWindowSamples;
        const double* st = tables.sin_t.data() + static_cast<std::size_t>(k) * kStftWindowSamples;
        double re = 0.0, im = 0.0;
        for (int i = 0; i < kStftWindowSamples; ++i) {
          re += frame[static_cast<std::size_t>(i)] * ct[i];
          im -= frame[static_cast<std::size_t>(i)] * st[i];
        }
        plane[static_cast<std::size_t>(t) * kStftBins + k] = {re, im};
      }
    }
  }
  return spec;
}

Tensor<double> logmel(const Spectrogram& spec) {
  const std::int64_t chs = static_cast<std::int64_t>(spec.channels.size());
  const std::int64_t T = spec.frames;
  const auto& fb = mel_filterbank();
  std::vector<double> out(static_cast<std::size_t>(chs * T * kMelBands));
  std::vector<double> power(kStftBins);
  for (std::int64_t c = 0; c < chs; ++c) {
    const auto& plane = spec.channels[static_cast<std::size_t>(c)];
    for (std::int64_t t = 0; t < T; ++t) {
      const auto* row = plane.data() + t * kStftBins;
      for (int k = 0; k < kStftBins; ++k) power[static_cast<std::size_t>(k)] = std::norm(row[k]);
      for (int b = 0; b < kMelBands; ++b) {
        const double* w = fb.data() + static_cast<std::size_t>(b) * kStftBins;
        double acc = 0.0;
        for (int k = 0; k < kStftBins; ++k) acc += power[static_cast<std::size_t>(k)] * w[k];
        out[static_cast<std::size_t>((c * T + t) * kMelBands + b)] = std::log(acc + kLogEps);
      }
    }
  }
  return Tensor<double>(Shape{chs, T, kMelBands}, std::move(out));
}

Tensor<double> intensity_vectors(const Spectrogram& spec) {
  if (spec.channels.size() != 4)
    throw DataError("intensity_vectors: expected 4 FoA channels (W,Y,Z,X)");
  const std::int64_t T = spec.frames;
  const auto& fb = mel_filterbank();
  std::vector<double> out(static_cast<std::size_t>(3 * T * kMelBands));

  std::vector<double> raw(static_cast<std::size_t>(3) * kStftBins);
  std::vector<double> energy(kStftBins);
  for (std::int64_t t = 0; t < T; ++t) {
    const auto* w_row = spec.channels[0].data() + t * kStftBins;
    for (int k = 0; k < kStftBins; ++k) energy[static_cast<std::size_t>(k)] = std::norm(w_row[k]);
    for (int d = 0; d < 3; ++d) {
      const auto* d_row = spec.channels[static_cast<std::size_t>(d) + 1].data() + t * kStftBins;
      for (int k = 0; k < kStftBins; ++k) {
        // Re(conj(W) * S_d)
        raw[static_cast<std::size_t>(d) * kStftBins + k] =
            w_row[k].real() * d_row[k].real() + w_row[k].imag() * d_row[k].imag();
      }
    }
    for (int d = 1; d < 4; ++d) {
      const auto* d_row = spec.channels[static_cast<std::size_t>(d)].data() + t * kStftBins;
      for (int k = 0; k < kStftBins; ++k) energy[static_cast<std::size_t>(k)] += std::norm(d_row[k]);
    }
    for (int b = 0; b < kMelBands; ++b) {
      const double* wb = fb.data() + static_cast<std::size_t>(b) * kStftBins;
      double e_mel = 0.0;
      for (int k = 0; k < kStftBins; ++k) e_mel += energy[static_cast<std::size_t>(k)] * wb[k];
      for (int d = 0; d < 3; ++d) {
        const double* r = raw.data() + static_cast<std::size_t>(d) * kStftBins;
        double acc = 0.0;
        for (int k = 0; k < kStftBins; ++k) acc += r[k] * wb[k];
        out[static_cast<std::size_t>((d * T + t) * kMelBands + b)] = acc / (e_mel + kLogEps);
      }
    }
  }
  return Tensor<double>(Shape{3, T, kMelBands}, std::move(out));
}

void iv_mean_direction(const Tensor<double>& iv, double& x, double& y, double& z) {
  if (iv.rank() != 3 || iv.dim(0) != 3) throw ConfigError("iv_mean_direction: expected [3,T,F]");
  const std::int64_t per = iv.dim(1) * iv.dim(2);
  double sums[3] = {0.0, 0.0, 0.0};
  for (int d = 0; d < 3; ++d)
    for (std::int64_t i = 0; i < per; ++i) sums[d] += iv.values()[static_cast<std::size_t>(d * per + i)];
  // dipole order (Y,Z,X) -> axes (x,y,z)
  Vec3 v{sums[2], sums[0], sums[1]};
  v = v.normalized();
  x = v.x;
  y = v.y;
  z = v.z;
}

template <typename T>
FeatureTensor<T> build_input(const Tensor<double>& lm, const Tensor<double>& iv) {
  if (lm.rank() != 3 || iv.rank() != 3 || lm.dim(0) != 4 || iv.dim(0) != 3)
    throw ConfigError("build_input: expected log-mel [4,T,F] and IV [3,T,F]");
  if (lm.dim(1) != iv.dim(1) || lm.dim(2) != iv.dim(2))
    throw ConfigError("build_input: extent mismatch " + shape_to_string(lm.shape()) + " vs " +
                      shape_to_string(iv.shape()));
  const std::int64_t Tt = lm.dim(1), F = lm.dim(2);
  std::vector<T> data(static_cast<std::size_t>(kFeatureChannels * Tt * F));
  const std::int64_t plane = Tt * F;
  for (std::int64_t i = 0; i < 4 * plane; ++i)
    data[static_cast<std::size_t>(i)] = static_cast<T>(lm.values()[static_cast<std::size_t>(i)]);
  for (std::int64_t i = 0; i < 3 * plane; ++i)
    data[static_cast<std::size_t>(4 * plane + i)] =
        static_cast<T>(iv.values()[static_cast<std::size_t>(i)]);
  FeatureTensor<T> out;
  out.data = Tensor<T>(Shape{kFeatureChannels, Tt, F}, std::move(data));
  return out;
}

template <typename T>
FeatureTensor<T> extract_features(const MultichannelAudio& audio) {
  const auto spec = stft(audio);
  return build_input<T>(logmel(spec), intensity_vectors(spec));
}

template <typename T>
FeatureTensor<T> fit_frames(const FeatureTensor<T>& f, std::int64_t frames) {
  const std::int64_t Tt = f.data.dim(1), F = f.data.dim(2);
  if (Tt == frames) return f;
  std::vector<T> data(static_cast<std::size_t>(kFeatureChannels * frames * F));
  const T silent_logmel = static_cast<T>(std::log(kLogEps));
  for (std::int64_t c = 0; c < kFeatureChannels; ++c) {
    for (std::int64_t t = 0; t < frames; ++t) {
      T* dst = data.data() + (c * frames + t) * F;
      if (t < Tt) {
        const T* src = f.data.data() + (c * Tt + t) * F;
        std::memcpy(dst, src, static_cast<std::size_t>(F) * sizeof(T));
      } else {
        const T fill = c < 4 ? silent_logmel : T(0);
        for (std::int64_t j = 0; j < F; ++j) dst[j] = fill;
      }
    }
  }
  FeatureTensor<T> out;
  out.data = Tensor<T>(Shape{kFeatureChannels, frames, F}, std::move(data));
  out.frame_hop_s = f.frame_hop_s;
  out.mel_bands = f.mel_bands;
  return out;
}

template <typename T>
void save_feature_cache(const std::string& path, const FeatureTensor<T>& f,
                        const std::vector<std::pair<std::string, std::string>>& echo) {
  const std::string bin_path = path + ".bin";
  std::ofstream m(path);
  if (!m) throw DataError("cannot write feature cache manifest: " + path);
  m << "cstseld-feature-cache 1\n";
  for (const auto& [k, v] : echo) m << "# " << k << "=" << v << "\n";
  m << "dtype f32\n";
  m << "shape " << f.data.dim(0) << " " << f.data.dim(1) << " " << f.data.dim(2) << "\n";
  m << "frame_hop_s " << f.frame_hop_s << "\n";
  m << "mel_bands " << f.mel_bands << "\n";
  m << "payload " << std::filesystem::path(bin_path).filename().string() << "\n";

  std::ofstream b(bin_path, std::ios::binary);
  if (!b) throw DataError("cannot write feature cache payload: " + bin_path);
  std::vector<float> payload(f.data.values().size());
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(f.data.values()[i]);
  b.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

template <typename T>
FeatureTensor<T> load_feature_cache(const std::string& path) {
  std::ifstream m(path);
  if (!m) throw DataError("cannot open feature cache manifest: " + path);
  std::string line;
  if (!std::getline(m, line) || line.rfind("cstseld-feature-cache", 0) != 0)
    throw DataError("not a feature cache manifest: " + path);
  Shape shape;
  double hop = 0.02;
  int mel = kMelBands;
  std::string payload;
  while (std::getline(m, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "shape") {
      std::int64_t v;
      while (ss >> v) shape.push_back(v);
    } else if (key == "frame_hop_s") {
      ss >> hop;
    } else if (key == "mel_bands") {
      ss >> mel;
    } else if (key == "payload") {
      ss >> payload;
    } else if (key == "dtype") {
      std::string dt;
      ss >> dt;
      if (dt != "f32") throw DataError("feature cache dtype must be f32, got " + dt);
    }
  }
  if (shape.size() != 3 || payload.empty())
    throw DataError("malformed feature cache manifest: " + path);

  const auto bin_path = (std::filesystem::path(path).parent_path() / payload).string();
  std::ifstream b(bin_path, std::ios::binary);
  if (!b) throw DataError("cannot open feature cache payload: " + bin_path);
  const std::size_t count = static_cast<std::size_t>(shape_numel(shape));
  std::vector<float> payload_data(count);
  b.read(reinterpret_cast<char*>(payload_data.data()),
         static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(b.gcount()) != count * sizeof(float))
    throw DataError("feature cache payload truncated: " + bin_path);

  FeatureTensor<T> out;
  std::vector<T> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<T>(payload_data[i]);
  out.data = Tensor<T>(std::move(shape), std::move(data));
  out.frame_hop_s = hop;
  out.mel_bands = mel;
  return out;
}

#define CST_INSTANTIATE_FEATURES(T)                                                          \
  template FeatureTensor<T> build_input<T>(const Tensor<double>&, const Tensor<double>&);    \
  template FeatureTensor<T> extract_features<T>(const MultichannelAudio&);                   \
  template FeatureTensor<T> fit_frames<T>(const FeatureTensor<T>&, std::int64_t);            \
  template void save_feature_cache<T>(const std::string&, const FeatureTensor<T>&,           \
                                      const std::vector<std::pair<std::string, std::string>>&); \
  template FeatureTensor<T> load_feature_cache<T>(const std::string&);

CST_INSTANTIATE_FEATURES(float)
CST_INSTANTIATE_FEATURES(double)

#undef CST_INSTANTIATE_FEATURES

}  // namespace cst
