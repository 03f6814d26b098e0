#pragma once

#include <string>

#include "sweepfuse/core.h"
#include "sweepfuse/maps.h"

namespace sweepfuse {

// 8-bit grayscale PNG. Color inputs are averaged to luminance on load.
void save_png_gray8(const std::string& path, const Image<uint8_t>& img);
Image<uint8_t> load_png_gray8(const std::string& path);

// Intensity image in [0, 1] stored as 8-bit grayscale PNG.
void save_intensity_png(const std::string& path, const Image<float>& img);
Image<float> load_intensity_png(const std::string& path);

// Depth PNG: 16-bit grayscale, millimeters, 0 = invalid.
void save_depth_png(const std::string& path, const DepthMap& d);
DepthMap load_depth_png(const std::string& path);

// Lossless float raster: header (magic, version, h, w as u32 LE), then h*w
// float32 values, then h*w validity bytes.
void save_depth_raster(const std::string& path, const DepthMap& d);
DepthMap load_depth_raster(const std::string& path);

// Mask PNG: 8-bit, 255 = overlap, 0 = non-overlap, 128 = unknown.
void save_mask_png(const std::string& path, const OverlapMask& m);
OverlapMask load_mask_png(const std::string& path);

// Lossless mask raster (probabilities + known bytes), same container as depth.
void save_mask_raster(const std::string& path, const OverlapMask& m);
OverlapMask load_mask_raster(const std::string& path);

}  // namespace sweepfuse
