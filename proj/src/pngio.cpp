#include "pgr/pngio.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "pgr/errors.hpp"

namespace pgr::png {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

uint32_t get_u32be(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& data) {
  put_u32be(out, static_cast<uint32_t>(data.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0, out.data() + crc_start, out.size() - crc_start);
  put_u32be(out, crc);
}

}  // namespace

void write_gray8(const std::string& path, int width, int height,
                 const std::vector<uint8_t>& pixels) {
  if (width <= 0 || height <= 0)
    throw input_error("write_gray8: non-positive dimensions");
  if (pixels.size() != static_cast<size_t>(width) * height)
    throw input_error("write_gray8: pixel buffer size mismatch");

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (width + 1));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter type none
    const uint8_t* row = pixels.data() + static_cast<size_t>(r) * width;
    raw.insert(raw.end(), row, row + width);
  }
  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw error("write_gray8: deflate failed");
  comp.resize(comp_cap);

  std::vector<uint8_t> out(kSignature, kSignature + 8);
  std::vector<uint8_t> ihdr;
  put_u32be(ihdr, static_cast<uint32_t>(width));
  put_u32be(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", comp);
  append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot write PNG: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw input_error("PNG write failed: " + path);
}

std::vector<uint8_t> read_gray8(const std::string& path, int* width,
                                int* height) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open PNG: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0)
    throw input_error("not a PNG file: " + path);

  int w = 0, h = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    uint32_t len = get_u32be(buf.data() + pos);
    if (pos + 12 + len > buf.size())
      throw input_error("truncated PNG: " + path);
    const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
    const uint8_t* data = buf.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      w = static_cast<int>(get_u32be(data));
      h = static_cast<int>(get_u32be(data + 4));
      if (data[8] != 8 || data[9] != 0)
        throw input_error("read_gray8: unsupported PNG format");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0) throw input_error("PNG missing IHDR: " + path);

  std::vector<uint8_t> raw(static_cast<size_t>(h) * (w + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw input_error("PNG inflate failed: " + path);

  std::vector<uint8_t> pixels(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    const uint8_t* row = raw.data() + static_cast<size_t>(r) * (w + 1);
    if (row[0] != 0)
      throw input_error("read_gray8: unsupported PNG filter type");
    std::memcpy(pixels.data() + static_cast<size_t>(r) * w, row + 1, w);
  }
  *width = w;
  *height = h;
  return pixels;
}

}  // namespace pgr::png
