#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ambidist::audio {

struct AudioData {
  std::vector<float> samples;  // mono, normalized to [-1, 1]
  int sample_rate = 0;
};

// Decodes a PCM WAV file (8/16/24-bit int or 32-bit float), downmixing
// multi-channel input by averaging. Throws UnreadableAudio on I/O or
// structural problems and UnsupportedEncoding for other formats.
AudioData read_wav(const std::filesystem::path& path);

// read_wav + linear-interpolation resampling to target_rate.
std::vector<float> load_wav(const std::filesystem::path& path,
                            int target_rate = 16000);

// n_out = round(n_in * dst/src); sample i maps to source position i*src/dst.
std::vector<float> resample_linear(std::span<const float> in, int src_rate,
                                   int dst_rate);

// 16-bit PCM mono encoder. Values are clamped to [-1, 1] and scaled by
// 32768 (clipping +1.0 to 32767), so a decode round trip moves no sample by
// more than 1/32768.
std::vector<std::uint8_t> encode_wav16(std::span<const float> samples,
                                       int sample_rate);

void write_wav16(const std::filesystem::path& path,
                 std::span<const float> samples, int sample_rate);

}  // namespace ambidist::audio
