#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pgr::png {

// Writes an 8-bit grayscale PNG; `pixels` is row-major, top row first,
// width*height bytes.
void write_gray8(const std::string& path, int width, int height,
                 const std::vector<uint8_t>& pixels);

// Reads back a PNG produced by write_gray8 (8-bit gray, filter 0).
std::vector<uint8_t> read_gray8(const std::string& path, int* width,
                                int* height);

}  // namespace pgr::png
