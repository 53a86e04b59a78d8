#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "treelso/errors.hpp"

namespace treelso {

// Grayscale or multi-channel raster, values in [0,1], channel-last layout.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // height*width*channels, row-major

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

using ImageBatch = std::vector<Image>;

// Rounds every value to the nearest float32. Generated rasters are snapped so
// the in-memory image equals what a container round-trip produces.
void snap_to_f32(Image& img);

// TREELSO-IMG v1 container: two text header lines, then raw little-endian
// float32 rasters (sample-major, row-major, channel-last).
void write_image_container(std::ostream& out, const ImageBatch& batch);
void write_image_container(const std::string& path, const ImageBatch& batch);
ImageBatch read_image_container(std::istream& in);
ImageBatch read_image_container(const std::string& path);

// FNV-1a over a file's bytes; used for manifest integrity notes.
std::uint64_t fnv1a_file(const std::string& path);
std::string to_hex(std::uint64_t v);

}  // namespace treelso
