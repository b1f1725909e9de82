#include "bigraph/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>

namespace bigraph {

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
  put_be32(out, static_cast<uint32_t>(len));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_be32(out, crc);
}

void write_png(const std::string& path, int width, int height, int channels,
               std::span<const uint8_t> pixels) {
  BG_CHECK_CFG(width >= 1 && height >= 1, "png: empty image " << width << "x" << height);
  BG_CHECK_DIM(pixels.size() == static_cast<size_t>(width) * height * channels,
               "png: pixel buffer size " << pixels.size() << " does not match " << width << "x"
                                         << height << "x" << channels);
  size_t stride = static_cast<size_t>(width) * channels;
  std::vector<uint8_t> raw;
  raw.reserve((stride + 1) * static_cast<size_t>(height));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + y * stride, pixels.begin() + (y + 1) * stride);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  int rc = compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6);
  BG_CHECK(rc == Z_OK, "png: zlib compression failed with code " << rc);
  comp.resize(comp_len);

  std::vector<uint8_t> out;
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.insert(out.end(), sig, sig + 8);
  uint8_t ihdr[13];
  ihdr[0] = static_cast<uint8_t>(width >> 24);
  ihdr[1] = static_cast<uint8_t>(width >> 16);
  ihdr[2] = static_cast<uint8_t>(width >> 8);
  ihdr[3] = static_cast<uint8_t>(width);
  ihdr[4] = static_cast<uint8_t>(height >> 24);
  ihdr[5] = static_cast<uint8_t>(height >> 16);
  ihdr[6] = static_cast<uint8_t>(height >> 8);
  ihdr[7] = static_cast<uint8_t>(height);
  ihdr[8] = 8;                                      // bit depth
  ihdr[9] = channels == 3 ? 2 : 0;                  // color type: rgb / gray
  ihdr[10] = ihdr[11] = ihdr[12] = 0;               // compression, filter, interlace
  put_chunk(out, "IHDR", ihdr, sizeof(ihdr));
  put_chunk(out, "IDAT", comp.data(), comp.size());
  put_chunk(out, "IEND", nullptr, 0);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  BG_CHECK(f != nullptr, "png: cannot open " << path << " for writing");
  size_t written = std::fwrite(out.data(), 1, out.size(), f);
  std::fclose(f);
  BG_CHECK(written == out.size(), "png: short write to " << path);
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height,
                   std::span<const uint8_t> rgb) {
  write_png(path, width, height, 3, rgb);
}

void write_png_gray(const std::string& path, int width, int height,
                    std::span<const uint8_t> gray) {
  write_png(path, width, height, 1, gray);
}

}  // namespace bigraph
