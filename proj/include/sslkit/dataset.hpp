#pragma once

#include <string>
#include <vector>

#include "sslkit/acoustics.hpp"

namespace sslkit::sim {

// Container layout (docs/dataset_format.md): a magic line, a JSON file
// header, then per record one JSON metadata line, a float32 little-endian
// sample block (channels first, then source signals), and a CRC32.
// Samples are quantized to float32 on write; a second write of what was
// read back is byte-identical.
inline constexpr const char* kDatasetMagic = "SSLDATA1";
inline constexpr int kDatasetFormatVersion = 1;

void write_dataset(const std::vector<SceneRecording>& recordings,
                   const std::string& path);

std::vector<SceneRecording> read_dataset(const std::string& path);

}  // namespace sslkit::sim
