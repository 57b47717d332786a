#include "cstseld/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "cstseld/errors.hpp"

namespace cst {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

MultichannelAudio read_wav(const std::string& path, int expected_channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + len > bytes.size()) throw DataError("truncated WAV chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw DataError("malformed fmt chunk in " + path);
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      if (format == 0xFFFE && len >= 40) format = read_u16(body + 24);  // WAVE_FORMAT_EXTENSIBLE
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data || channels == 0) throw DataError("missing fmt/data chunk in " + path);
  if (expected_channels > 0 && channels != expected_channels)
    throw DataError(path + ": expected " + std::to_string(expected_channels) +
                    " channels, found " + std::to_string(channels));
  if (rate != 24000)
    throw DataError(path + ": sample rate " + std::to_string(rate) +
                    " Hz not supported (24 kHz only, no resampler)");

  const bool is_float = format == 3;
  const bool is_pcm = format == 1;
  if (!is_float && !is_pcm) throw DataError(path + ": unsupported WAV encoding");
  if (is_float && bits != 32) throw DataError(path + ": only 32-bit float WAV supported");
  if (is_pcm && bits != 16 && bits != 24 && bits != 32)
    throw DataError(path + ": only 16/24/32-bit PCM supported");

  const std::uint32_t bytes_per_sample = bits / 8;
  const std::uint32_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_len / frame_bytes;

  MultichannelAudio audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.channels.assign(channels, std::vector<double>(frames, 0.0));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (is_float) {
        float fv;
        std::memcpy(&fv, p, 4);
        v = fv;
      } else if (bits == 16) {
        const auto s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        v = s / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;  // sign extend
        v = s / 8388608.0;
      } else {
        std::int32_t s;
        std::memcpy(&s, p, 4);
        v = s / 2147483648.0;
      }
      audio.channels[c][i] = v;
    }
  }
  return audio;
}

void write_wav(const std::string& path, const MultichannelAudio& audio) {
  const std::size_t channels = audio.channels.size();
  if (channels == 0) throw DataError("write_wav: no channels");
  const std::size_t frames = audio.num_samples();
  for (const auto& ch : audio.channels)
    if (ch.size() != frames) throw DataError("write_wav: channel length mismatch");

  const std::uint32_t byte_rate = static_cast<std::uint32_t>(audio.sample_rate * channels * 4);
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * channels * 4);

  std::string out;
  out.reserve(58 + data_len);
  out += "RIFF";
  put_u32(out, 50 + data_len);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 18);
  put_u16(out, 3);  // IEEE float
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, byte_rate);
  put_u16(out, static_cast<std::uint16_t>(channels * 4));
  put_u16(out, 32);
  put_u16(out, 0);  // cbSize
  out += "fact";
  put_u32(out, 4);
  put_u32(out, static_cast<std::uint32_t>(frames));
  out += "data";
  put_u32(out, data_len);
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = static_cast<float>(audio.channels[c][i]);
      char buf[4];
      std::memcpy(buf, &v, 4);
      out.append(buf, 4);
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace cst
