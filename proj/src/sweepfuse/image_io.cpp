#include "sweepfuse/image_io.h"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace sweepfuse {

namespace {

constexpr uint32_t kDepthRasterMagic = 0x4d444653;  // "SFDM"
constexpr uint32_t kMaskRasterMagic = 0x4b4d4653;   // "SFMK"
constexpr uint32_t kRasterVersion = 1;

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};

void write_png(const std::string& path, int h, int w, int bit_depth,
               const std::vector<uint16_t>& data16, const std::vector<uint8_t>& data8) {
  std::unique_ptr<FILE, FileCloser> fp(fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write png: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  std::vector<uint8_t> be;
  if (bit_depth == 16) {
    be.resize(size_t(h) * w * 2);
    for (size_t i = 0; i < data16.size(); ++i) {
      be[2 * i] = uint8_t(data16[i] >> 8);
      be[2 * i + 1] = uint8_t(data16[i] & 0xff);
    }
    for (int y = 0; y < h; ++y) rows[y] = be.data() + size_t(y) * w * 2;
  } else {
    for (int y = 0; y < h; ++y) rows[y] = const_cast<uint8_t*>(data8.data()) + size_t(y) * w;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads any grayscale/color PNG as single-channel samples at the file's bit
// depth (8 results for <=8-bit files, 16 for 16-bit); color is averaged.
void read_png(const std::string& path, int* h, int* w, int* bit_depth,
              std::vector<uint16_t>* out) {
  std::unique_ptr<FILE, FileCloser> fp(fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open png: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("malformed png: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  *h = int(png_get_image_height(png, info));
  *w = int(png_get_image_width(png, info));
  depth = png_get_bit_depth(png, info);
  int channels = png_get_channels(png, info);
  *bit_depth = depth;
  size_t stride = png_get_rowbytes(png, info);
  std::vector<uint8_t> raw(size_t(*h) * stride);
  std::vector<png_bytep> rows(*h);
  for (int y = 0; y < *h; ++y) rows[y] = raw.data() + size_t(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out->assign(size_t(*h) * *w, 0);
  for (int y = 0; y < *h; ++y) {
    const uint8_t* row = raw.data() + size_t(y) * stride;
    for (int x = 0; x < *w; ++x) {
      uint32_t acc = 0;
      for (int c = 0; c < channels; ++c) {
        if (depth == 16) {
          const uint8_t* p = row + (size_t(x) * channels + c) * 2;
          acc += uint32_t(p[0]) << 8 | p[1];
        } else {
          acc += row[size_t(x) * channels + c];
        }
      }
      (*out)[size_t(y) * *w + x] = uint16_t(acc / channels);
    }
  }
}

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }

uint32_t read_u32(std::ifstream& f, const std::string& path) {
  uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4)) throw DataError("truncated raster: " + path);
  return v;
}

void save_raster(const std::string& path, uint32_t magic, int h, int w,
                 const std::vector<float>& values, const std::vector<uint8_t>& flags) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write raster: " + path);
  write_u32(f, magic);
  write_u32(f, kRasterVersion);
  write_u32(f, uint32_t(h));
  write_u32(f, uint32_t(w));
  f.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * 4));
  f.write(reinterpret_cast<const char*>(flags.data()), std::streamsize(flags.size()));
  if (!f) throw DataError("short write: " + path);
}

void load_raster(const std::string& path, uint32_t magic, int* h, int* w,
                 std::vector<float>* values, std::vector<uint8_t>* flags) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open raster: " + path);
  if (read_u32(f, path) != magic) throw DataError("bad raster magic: " + path);
  if (read_u32(f, path) != kRasterVersion) throw DataError("unsupported raster version: " + path);
  *h = int(read_u32(f, path));
  *w = int(read_u32(f, path));
  if (*h <= 0 || *w <= 0 || int64_t(*h) * *w > int64_t(1) << 30)
    throw DataError("bad raster size: " + path);
  size_t n = size_t(*h) * *w;
  values->resize(n);
  flags->resize(n);
  if (!f.read(reinterpret_cast<char*>(values->data()), std::streamsize(n * 4)) ||
      !f.read(reinterpret_cast<char*>(flags->data()), std::streamsize(n)))
    throw DataError("truncated raster: " + path);
}

}  // namespace

void save_png_gray8(const std::string& path, const Image<uint8_t>& img) {
  write_png(path, img.h, img.w, 8, {}, img.v);
}

Image<uint8_t> load_png_gray8(const std::string& path) {
  int h, w, depth;
  std::vector<uint16_t> data;
  read_png(path, &h, &w, &depth, &data);
  Image<uint8_t> img(h, w);
  int shift = depth == 16 ? 8 : 0;
  for (size_t i = 0; i < data.size(); ++i) img.v[i] = uint8_t(data[i] >> shift);
  return img;
}

void save_intensity_png(const std::string& path, const Image<float>& img) {
  Image<uint8_t> q(img.h, img.w);
  for (size_t i = 0; i < img.v.size(); ++i) {
    float s = std::clamp(img.v[i], 0.f, 1.f);
    q.v[i] = uint8_t(std::lround(s * 255.0f));
  }
  save_png_gray8(path, q);
}

Image<float> load_intensity_png(const std::string& path) {
  Image<uint8_t> q = load_png_gray8(path);
  Image<float> img(q.h, q.w);
  for (size_t i = 0; i < q.v.size(); ++i) img.v[i] = float(q.v[i]) / 255.0f;
  return img;
}

void save_depth_png(const std::string& path, const DepthMap& d) {
  std::vector<uint16_t> mm(d.z.v.size(), 0);
  for (size_t i = 0; i < mm.size(); ++i) {
    if (!d.valid.v[i]) continue;
    long v = std::lround(double(d.z.v[i]) * 1000.0);
    mm[i] = uint16_t(std::clamp(v, 1l, 65535l));
  }
  write_png(path, d.h(), d.w(), 16, mm, {});
}

DepthMap load_depth_png(const std::string& path) {
  int h, w, depth;
  std::vector<uint16_t> data;
  read_png(path, &h, &w, &depth, &data);
  if (depth != 16) throw DataError("depth png must be 16-bit: " + path);
  DepthMap d(h, w);
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i] == 0) continue;
    d.z.v[i] = float(data[i]) / 1000.0f;
    d.valid.v[i] = 1;
  }
  return d;
}

void save_depth_raster(const std::string& path, const DepthMap& d) {
  save_raster(path, kDepthRasterMagic, d.h(), d.w(), d.z.v, d.valid.v);
}

DepthMap load_depth_raster(const std::string& path) {
  DepthMap d;
  int h, w;
  load_raster(path, kDepthRasterMagic, &h, &w, &d.z.v, &d.valid.v);
  d.z.h = d.valid.h = h;
  d.z.w = d.valid.w = w;
  return d;
}

void save_mask_png(const std::string& path, const OverlapMask& m) {
  Image<uint8_t> q(m.h(), m.w());
  for (size_t i = 0; i < q.v.size(); ++i)
    q.v[i] = m.known.v[i] ? (m.p.v[i] >= 0.5f ? 255 : 0) : 128;
  save_png_gray8(path, q);
}

OverlapMask load_mask_png(const std::string& path) {
  Image<uint8_t> q = load_png_gray8(path);
  OverlapMask m(q.h, q.w);
  for (size_t i = 0; i < q.v.size(); ++i) {
    if (q.v[i] == 255) {
      m.p.v[i] = 1.f;
      m.known.v[i] = 1;
    } else if (q.v[i] == 0) {
      m.p.v[i] = 0.f;
      m.known.v[i] = 1;
    } else if (q.v[i] == 128) {
      m.p.v[i] = 0.5f;
      m.known.v[i] = 0;
    } else {
      throw DataError("mask png has non-ternary value: " + path);
    }
  }
  return m;
}

void save_mask_raster(const std::string& path, const OverlapMask& m) {
  save_raster(path, kMaskRasterMagic, m.h(), m.w(), m.p.v, m.known.v);
}

OverlapMask load_mask_raster(const std::string& path) {
  OverlapMask m;
  int h, w;
  load_raster(path, kMaskRasterMagic, &h, &w, &m.p.v, &m.known.v);
  m.p.h = m.known.h = h;
  m.p.w = m.known.w = w;
  return m;
}

}  // namespace sweepfuse
