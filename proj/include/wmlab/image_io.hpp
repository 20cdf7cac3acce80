#pragma once

#include <string>

#include "wmlab/image.hpp"

namespace wmlab {

// PNG ingestion/emission. Images are 8-bit RGB on disk; unit domain in memory.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// One true JPEG encode/decode round trip at the given quality factor,
// 4:4:4 sampling. Input and output are unit-domain RGB.
Image jpeg_round_trip(const Image& img, int quality);

// Center-crop to square then box-resample to (h, w).
Image center_crop_resize(const Image& img, int h, int w);

}  // namespace wmlab
