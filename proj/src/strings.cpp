#include "ambidist/strings.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace ambidist {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string base64_encode(std::span<const unsigned char> data) {
  static const char* table =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(table[(v >> 18) & 0x3f]);
    out.push_back(table[(v >> 12) & 0x3f]);
    out.push_back(table[(v >> 6) & 0x3f]);
    out.push_back(table[v & 0x3f]);
  }
  if (i + 1 == data.size()) {
    const unsigned v = data[i] << 16;
    out.push_back(table[(v >> 18) & 0x3f]);
    out.push_back(table[(v >> 12) & 0x3f]);
    out += "==";
  } else if (i + 2 == data.size()) {
    const unsigned v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(table[(v >> 18) & 0x3f]);
    out.push_back(table[(v >> 12) & 0x3f]);
    out.push_back(table[(v >> 6) & 0x3f]);
    out.push_back('=');
  }
  return out;
}

}  // namespace ambidist
