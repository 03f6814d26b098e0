#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "sweepfuse/image_io.h"

using namespace sweepfuse;

namespace {

std::filesystem::path io_dir() {
  auto dir = std::filesystem::temp_directory_path() / "sf_image_io";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gray8 png round-trip") {
  Image<uint8_t> img(5, 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) img.at(y, x) = uint8_t(37 * y + 11 * x);
  std::string path = (io_dir() / "g8.png").string();
  save_png_gray8(path, img);
  Image<uint8_t> back = load_png_gray8(path);
  REQUIRE(back.h == 5);
  REQUIRE(back.w == 7);
  CHECK(back.v == img.v);
}

TEST_CASE("intensity png quantizes to 1/255") {
  Image<float> img(2, 3);
  img.v = {0.f, 1.f, 0.25f, 0.5f, 0.87f, 2.0f};  // 2.0 clamps to 1
  std::string path = (io_dir() / "intensity.png").string();
  save_intensity_png(path, img);
  Image<float> back = load_intensity_png(path);
  CHECK(back.at(0, 0) == doctest::Approx(0.f));
  CHECK(back.at(0, 1) == doctest::Approx(1.f));
  CHECK(back.at(1, 2) == doctest::Approx(1.f));
  for (size_t i = 0; i < 5; ++i)
    CHECK(std::abs(back.v[i] - img.v[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("depth png: millimeter quantization, zero means invalid") {
  DepthMap d(2, 2);
  d.z.v = {1.234f, 0.0005f, 70.0f, 3.0f};
  d.valid.v = {1, 1, 1, 0};
  std::string path = (io_dir() / "depth.png").string();
  save_depth_png(path, d);
  DepthMap back = load_depth_png(path);
  CHECK(back.z.at(0, 0) == doctest::Approx(1.234f));
  CHECK(back.valid.at(0, 0) == 1);
  // Sub-millimeter depths round up to the smallest valid code.
  CHECK(back.z.at(0, 1) == doctest::Approx(0.001f));
  // Depths beyond the 16-bit range clamp to 65.535 m.
  CHECK(back.z.at(1, 0) == doctest::Approx(65.535f));
  CHECK(back.valid.at(1, 1) == 0);
  CHECK(back.z.at(1, 1) == 0.0f);
}

TEST_CASE("depth raster: lossless floats") {
  DepthMap d(3, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) {
      d.z.at(y, x) = 0.1234567f * (y * 4 + x + 1);
      d.valid.at(y, x) = uint8_t((y + x) % 2);
    }
  std::string path = (io_dir() / "depth.fr").string();
  save_depth_raster(path, d);
  DepthMap back = load_depth_raster(path);
  REQUIRE(back.h() == 3);
  REQUIRE(back.w() == 4);
  CHECK(back.z.v == d.z.v);
  CHECK(back.valid.v == d.valid.v);
}

TEST_CASE("mask png: ternary codes") {
  OverlapMask m(1, 4);
  m.p.v = {0.9f, 0.5f, 0.1f, 0.7f};
  m.known.v = {1, 1, 1, 0};
  std::string path = (io_dir() / "mask.png").string();
  save_mask_png(path, m);
  Image<uint8_t> raw = load_png_gray8(path);
  CHECK(raw.v == std::vector<uint8_t>{255, 255, 0, 128});
  OverlapMask back = load_mask_png(path);
  CHECK(back.p.v == std::vector<float>{1.f, 1.f, 0.f, 0.5f});
  CHECK(back.known.v == std::vector<uint8_t>{1, 1, 1, 0});
}

TEST_CASE("mask png: rejects non-ternary values") {
  Image<uint8_t> img(1, 2);
  img.v = {255, 77};
  std::string path = (io_dir() / "mask_bad.png").string();
  save_png_gray8(path, img);
  CHECK_THROWS_AS(load_mask_png(path), DataError);
}

TEST_CASE("mask raster keeps soft probabilities") {
  OverlapMask m(2, 2);
  m.p.v = {0.25f, 0.75f, 0.5f, 1.f};
  m.known.v = {1, 1, 0, 1};
  std::string path = (io_dir() / "mask.fr").string();
  save_mask_raster(path, m);
  OverlapMask back = load_mask_raster(path);
  CHECK(back.p.v == m.p.v);
  CHECK(back.known.v == m.known.v);
}

TEST_CASE("raster errors: missing file, bad magic, truncation") {
  auto dir = io_dir();
  CHECK_THROWS_AS(load_depth_raster((dir / "nope.fr").string()), DataError);

  DepthMap d(2, 2);
  d.z.v = {1, 2, 3, 4};
  d.valid.v = {1, 1, 1, 1};
  std::string dpath = (dir / "ok.fr").string();
  save_depth_raster(dpath, d);
  // Depth and mask rasters use distinct magics.
  CHECK_THROWS_AS(load_mask_raster(dpath), DataError);

  std::FILE* f = std::fopen((dir / "trunc.fr").string().c_str(), "wb");
  std::FILE* src = std::fopen(dpath.c_str(), "rb");
  char buf[20];
  REQUIRE(std::fread(buf, 1, 20, src) == 20);
  std::fwrite(buf, 1, 20, f);
  std::fclose(src);
  std::fclose(f);
  CHECK_THROWS_AS(load_depth_raster((dir / "trunc.fr").string()), DataError);
}

TEST_CASE("png errors: missing and malformed files") {
  auto dir = io_dir();
  CHECK_THROWS_AS(load_png_gray8((dir / "nope.png").string()), DataError);
  std::FILE* f = std::fopen((dir / "corrupt.png").string().c_str(), "wb");
  std::fputs("not a png at all", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_png_gray8((dir / "corrupt.png").string()), DataError);
  // 8-bit files are not acceptable as 16-bit depth maps.
  Image<uint8_t> img(1, 1);
  img.v = {42};
  save_png_gray8((dir / "eight.png").string(), img);
  CHECK_THROWS_AS(load_depth_png((dir / "eight.png").string()), DataError);
}
