#include "ambidist/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ambidist/errors.hpp"

namespace ambidist::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

float decode_sample(const std::uint8_t* p, std::uint16_t format,
                    std::uint16_t bits) {
  if (format == kFormatIeeeFloat) {
    float v;
    std::memcpy(&v, p, 4);
    return std::clamp(v, -1.0f, 1.0f);
  }
  switch (bits) {
    case 8:  // 8-bit WAV is unsigned
      return (static_cast<int>(p[0]) - 128) / 128.0f;
    case 16: {
      const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      return static_cast<float>(v) / 32768.0f;
    }
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xffffff;  // sign extend
      return static_cast<float>(v) / 8388608.0f;
    }
    default:
      return 0.0f;
  }
}

}  // namespace

AudioData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw UnreadableAudio("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw UnreadableAudio(path.string() + " is not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_size = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw UnreadableAudio(path.string() + ": truncated chunk");
    }
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        throw UnreadableAudio(path.string() + ": short fmt chunk");
      }
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      sample_rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (format == 0 || data == nullptr) {
    throw UnreadableAudio(path.string() + ": missing fmt or data chunk");
  }
  if (channels == 0 || sample_rate == 0) {
    throw UnreadableAudio(path.string() + ": bad fmt fields");
  }
  const bool pcm_ok =
      format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24);
  const bool float_ok = format == kFormatIeeeFloat && bits == 32;
  if (!pcm_ok && !float_ok) {
    throw UnsupportedEncoding(path.string() + ": format " +
                              std::to_string(format) + ", " +
                              std::to_string(bits) + "-bit");
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_size = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_size;

  AudioData out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    float acc = 0.0f;
    for (std::uint16_t ch = 0; ch < channels; ++ch) {
      acc += decode_sample(data + f * frame_size + ch * bytes_per_sample,
                           format, bits);
    }
    out.samples[f] = acc / static_cast<float>(channels);
  }
  return out;
}

std::vector<float> resample_linear(std::span<const float> in, int src_rate,
                                   int dst_rate) {
  if (src_rate == dst_rate || in.empty()) {
    return {in.begin(), in.end()};
  }
  const std::size_t n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(in.size()) * dst_rate / src_rate));
  std::vector<float> out(n_out);
  const double step = static_cast<double>(src_rate) / dst_rate;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= in.size()) {
      out[i] = in.back();
    } else {
      const double frac = pos - static_cast<double>(i0);
      out[i] = static_cast<float>((1.0 - frac) * in[i0] + frac * in[i0 + 1]);
    }
  }
  return out;
}

std::vector<float> load_wav(const std::filesystem::path& path,
                            int target_rate) {
  AudioData raw = read_wav(path);
  if (raw.sample_rate == target_rate) return std::move(raw.samples);
  return resample_linear(raw.samples, raw.sample_rate, target_rate);
}

std::vector<std::uint8_t> encode_wav16(std::span<const float> samples,
                                       int sample_rate) {
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);

  auto push_u32 = [&out](std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
  };
  auto push_u16 = [&out](std::uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
  };
  auto push_tag = [&out](const char* tag) {
    out.insert(out.end(), tag, tag + 4);
  };

  const auto rate = static_cast<std::uint32_t>(sample_rate);
  push_tag("RIFF");
  push_u32(36 + data_size);
  push_tag("WAVE");
  push_tag("fmt ");
  push_u32(16);
  push_u16(kFormatPcm);
  push_u16(1);  // mono
  push_u32(rate);
  push_u32(rate * 2);  // byte rate
  push_u16(2);         // block align
  push_u16(16);
  push_tag("data");
  push_u32(data_size);
  for (float s : samples) {
    const double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
    auto q = static_cast<std::int32_t>(std::llround(v * 32768.0));
    q = std::clamp(q, -32768, 32767);
    push_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

void write_wav16(const std::filesystem::path& path,
                 std::span<const float> samples, int sample_rate) {
  const auto bytes = encode_wav16(samples, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw UnreadableAudio("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw UnreadableAudio("short write to " + path.string());
  }
}

}  // namespace ambidist::audio
