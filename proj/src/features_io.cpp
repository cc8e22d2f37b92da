#include "ambidist/features_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "ambidist/errors.hpp"

namespace ambidist::features {

namespace {

// Serialization is explicitly little-endian; on the (LE) platforms we target
// this is a straight memcpy of IEEE floats.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Matrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw UnreadableFeatures("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 8) {
    throw UnreadableFeatures(path.string() + ": missing header");
  }
  const std::uint32_t rows = get_u32(bytes.data());
  const std::uint32_t cols = get_u32(bytes.data() + 4);
  const std::size_t expected = 8 + std::size_t{rows} * cols * 4;
  if (bytes.size() != expected) {
    throw UnreadableFeatures(path.string() + ": expected " +
                             std::to_string(expected) + " bytes, got " +
                             std::to_string(bytes.size()));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < std::size_t{rows} * cols; ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 8 + i * 4, 4);
    m.data[i] = static_cast<double>(v);
  }
  return m;
}

void write_features(const std::filesystem::path& path, const Matrix& m) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 + m.data.size() * 4);
  put_u32(bytes, static_cast<std::uint32_t>(m.rows));
  put_u32(bytes, static_cast<std::uint32_t>(m.cols));
  for (double d : m.data) {
    const auto v = static_cast<float>(d);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(bytes, u);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw UnreadableFeatures("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw UnreadableFeatures("short write to " + path.string());
  }
}

}  // namespace ambidist::features
