// Minimal PNG reader/writer for 8-bit RGB images, built on zlib.
//
// The writer emits the simplest spec-conforming stream: one IHDR, one IDAT
// (all scanlines filter 0), one IEND. The reader is slightly more general so
// it can ingest files produced elsewhere: it accepts any of the five scanline
// filters, skips ancillary chunks, and validates chunk CRCs. Only 8-bit
// truecolor (color type 2, no interlace) is supported; anything else is
// rejected with a descriptive error rather than misread.
#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/tensor.hpp"

namespace mixdet {

/// Row-major interleaved RGB byte image; the canonical on-disk pixel format.
/// Training tensors are derived from this via image_to_tensor so an image
/// loaded from disk is bit-identical to one converted straight from memory.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3 bytes

  ImageU8() = default;
  ImageU8(int w, int h)
      : width(w),
        height(h),
        rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const ImageU8& o) const {
    return width == o.width && height == o.height && rgb == o.rgb;
  }
};

namespace detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_png_chunk(std::vector<std::uint8_t>& out, const char* type,
                             const std::uint8_t* data, std::size_t size) {
  put_be32(out, static_cast<std::uint32_t>(size));
  const std::size_t tagged_start = out.size();
  out.insert(out.end(), type, type + 4);
  if (size > 0) out.insert(out.end(), data, data + size);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0UL, out.data() + tagged_start, static_cast<uInt>(size + 4)));
  put_be32(out, crc);
}

/// PNG Paeth predictor (filter type 4).
inline int paeth_predict(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

inline const std::uint8_t kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace detail

/// Serialize an RGB image as a PNG byte stream (filter 0 scanlines).
inline std::vector<std::uint8_t> encode_png(const ImageU8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw std::invalid_argument("encode_png: image dimensions do not match buffer size");
  }
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter type: None
    const std::uint8_t* row = img.rgb.data() + y * stride;
    raw.insert(raw.end(), row, row + stride);
  }

  uLongf comp_size = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_size);
  const int zrc = ::compress2(comp.data(), &comp_size, raw.data(),
                              static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION);
  if (zrc != Z_OK) throw std::runtime_error("encode_png: zlib compression failed");
  comp.resize(comp_size);

  std::vector<std::uint8_t> out(detail::kPngSignature, detail::kPngSignature + 8);
  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor RGB
  ihdr.push_back(0);  // compression method
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // interlace: none
  detail::append_png_chunk(out, "IHDR", ihdr.data(), ihdr.size());
  detail::append_png_chunk(out, "IDAT", comp.data(), comp.size());
  detail::append_png_chunk(out, "IEND", nullptr, 0);
  return out;
}

/// Parse a PNG byte stream into an RGB image. Accepts all five scanline
/// filters; requires 8-bit truecolor without interlace.
inline ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 ||
      !std::equal(detail::kPngSignature, detail::kPngSignature + 8, bytes.data())) {
    throw std::runtime_error("decode_png: not a PNG stream (bad signature)");
  }

  int width = 0, height = 0;
  bool saw_ihdr = false, saw_iend = false;
  std::vector<std::uint8_t> idat;

  std::size_t pos = 8;
  while (pos < bytes.size()) {
    if (pos + 8 > bytes.size()) throw std::runtime_error("decode_png: truncated chunk header");
    const std::uint32_t size = detail::get_be32(bytes.data() + pos);
    const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    if (pos + 12 + static_cast<std::size_t>(size) > bytes.size()) {
      throw std::runtime_error("decode_png: truncated chunk " + type);
    }
    const std::uint8_t* data = bytes.data() + pos + 8;
    const std::uint32_t expect_crc = detail::get_be32(data + size);
    const std::uint32_t actual_crc = static_cast<std::uint32_t>(
        ::crc32(0UL, bytes.data() + pos + 4, static_cast<uInt>(size + 4)));
    if (expect_crc != actual_crc) {
      throw std::runtime_error("decode_png: crc mismatch in chunk " + type);
    }

    if (type == "IHDR") {
      if (size != 13) throw std::runtime_error("decode_png: malformed IHDR");
      width = static_cast<int>(detail::get_be32(data));
      height = static_cast<int>(detail::get_be32(data + 4));
      const int bit_depth = data[8], color_type = data[9], interlace = data[12];
      if (bit_depth != 8 || color_type != 2) {
        throw std::runtime_error(
            "decode_png: unsupported format (need 8-bit truecolor, got depth " +
            std::to_string(bit_depth) + " color type " + std::to_string(color_type) + ")");
      }
      if (interlace != 0) throw std::runtime_error("decode_png: interlaced PNG unsupported");
      if (width <= 0 || height <= 0) throw std::runtime_error("decode_png: bad dimensions");
      saw_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + size);
    } else if (type == "IEND") {
      saw_iend = true;
      break;
    }
    // Ancillary chunks are skipped.
    pos += 12 + size;
  }
  if (!saw_ihdr) throw std::runtime_error("decode_png: missing IHDR");
  if (!saw_iend) throw std::runtime_error("decode_png: missing IEND");

  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  const std::size_t raw_size = (stride + 1) * height;
  std::vector<std::uint8_t> raw(raw_size);
  uLongf dest_size = static_cast<uLongf>(raw_size);
  const int zrc = ::uncompress(raw.data(), &dest_size, idat.data(),
                               static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || dest_size != raw_size) {
    throw std::runtime_error("decode_png: corrupt or size-mismatched IDAT stream");
  }

  ImageU8 img(width, height);
  std::vector<std::uint8_t> prev(stride, 0);  // virtual row above the first is zero
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = img.rgb.data() + y * stride;
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= 3 ? dst[i - 3] : 0;
      const int up = prev[i];
      const int up_left = i >= 3 ? prev[i - 3] : 0;
      int x = src[i];
      switch (filter) {
        case 0: break;
        case 1: x += left; break;
        case 2: x += up; break;
        case 3: x += (left + up) / 2; break;
        case 4: x += detail::paeth_predict(left, up, up_left); break;
        default:
          throw std::runtime_error("decode_png: unknown filter type " +
                                   std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(x & 0xff);
    }
    std::copy(dst, dst + stride, prev.begin());
  }
  return img;
}

inline void write_png(const std::string& path, const ImageU8& img) {
  const std::vector<std::uint8_t> bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_png: write failed for " + path);
}

inline ImageU8 read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + path + ")");
  }
}

/// CHW double tensor in [0,1]; each byte k maps to exactly k/255.0, so the
/// tensor of a decoded file equals the tensor of the in-memory original.
inline Tensor image_to_tensor(const ImageU8& img) {
  Tensor t({3, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t.at(c, y, x) = static_cast<double>(img.at(y, x, c)) / 255.0;
      }
    }
  }
  return t;
}

/// Quantize a CHW tensor to bytes: clamp to [0,1], round half away from zero.
inline ImageU8 tensor_to_image(const Tensor& t) {
  if (t.shape.size() != 3 || t.shape[0] != 3) {
    throw std::invalid_argument("tensor_to_image: expected a 3xHxW tensor");
  }
  ImageU8 img(static_cast<int>(t.shape[2]), static_cast<int>(t.shape[1]));
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double v = t.at(c, y, x);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

}  // namespace mixdet
