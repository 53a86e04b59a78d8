#include "treelso/image.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace treelso {

namespace {

void write_f32_le(std::ostream& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) | ((u & 0x0000FF00u) << 8) |
        ((u & 0x000000FFu) << 24);
  }
  char buf[4];
  std::memcpy(buf, &u, 4);
  out.write(buf, 4);
}

float read_f32_le(std::istream& in) {
  char buf[4];
  in.read(buf, 4);
  if (!in) throw ParseError("image container: truncated raster data");
  std::uint32_t u;
  std::memcpy(&u, buf, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) | ((u & 0x0000FF00u) << 8) |
        ((u & 0x000000FFu) << 24);
  }
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

void snap_to_f32(Image& img) {
  for (double& v : img.data) v = static_cast<double>(static_cast<float>(v));
}

void write_image_container(std::ostream& out, const ImageBatch& batch) {
  require(!batch.empty(), "image container: empty batch");
  const Image& first = batch.front();
  for (const Image& img : batch)
    require(img.same_shape(first), "image container: non-uniform shapes");
  out << "TREELSO-IMG v1\n";
  out << batch.size() << ' ' << first.height << ' ' << first.width << ' ' << first.channels
      << '\n';
  for (const Image& img : batch)
    for (double v : img.data) write_f32_le(out, static_cast<float>(v));
  if (!out) throw IoError("image container: write failed");
}

void write_image_container(const std::string& path, const ImageBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_image_container(out, batch);
}

ImageBatch read_image_container(std::istream& in) {
  std::string magic;
  std::getline(in, magic);
  if (magic != "TREELSO-IMG v1") throw ParseError("image container: bad magic line");
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::size_t count = 0;
  int h = 0, w = 0, c = 0;
  hs >> count >> h >> w >> c;
  if (!hs || count == 0 || h <= 0 || w <= 0 || c <= 0)
    throw ParseError("image container: bad shape header");
  ImageBatch batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Image img(h, w, c);
    for (double& v : img.data) v = static_cast<double>(read_f32_le(in));
    batch.push_back(std::move(img));
  }
  return batch;
}

ImageBatch read_image_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_image_container(in);
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  char buf[4096];
  while (in) {
    in.read(buf, sizeof buf);
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001B3ULL;
    }
  }
  return hash;
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace treelso
