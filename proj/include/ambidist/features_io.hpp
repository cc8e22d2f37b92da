#pragma once

#include <filesystem>

#include "ambidist/matrix.hpp"

namespace ambidist::features {

// Feature-sequence file: 8-byte header of two little-endian u32 (L, d)
// followed by L*d little-endian float32, row-major.
Matrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Matrix& m);

}  // namespace ambidist::features
