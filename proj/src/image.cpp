#include "dg/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dg/dc_space.hpp"
#include "dg/error.hpp"

namespace dg {

namespace {

std::uint32_t crc32_update(std::uint32_t crc, const std::uint8_t* data,
                           std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = c & 1 ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t byte : data) {
    a = (a + byte) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const std::uint32_t crc = crc32_update(0, out.data() + start, out.size() - start);
  put_u32_be(out, crc);
}

}  // namespace

void write_png(const Image8& image, const std::filesystem::path& path) {
  if (image.width <= 0 || image.height <= 0 ||
      image.rgb.size() != 3u * image.width * image.height)
    throw GeometryError("write_png: inconsistent image buffer");

  // raw scanlines, each prefixed with filter type 0
  std::vector<std::uint8_t> raw;
  raw.reserve((3u * image.width + 1) * image.height);
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = image.pixel(0, y);
    raw.insert(raw.end(), row, row + 3u * image.width);
  }

  // zlib stream with stored (uncompressed) deflate blocks
  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  std::size_t off = 0;
  while (off < raw.size()) {
    const std::size_t len = std::min<std::size_t>(65535, raw.size() - off);
    const bool final = off + len == raw.size();
    idat.push_back(final ? 1 : 0);
    idat.push_back(static_cast<std::uint8_t>(len & 0xff));
    idat.push_back(static_cast<std::uint8_t>(len >> 8));
    idat.push_back(static_cast<std::uint8_t>(~len & 0xff));
    idat.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + off, raw.begin() + off + len);
    off += len;
  }
  put_u32_be(idat, adler32(raw));

  std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", idat);
  put_chunk(out, "IEND", {});

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path.string());
}

Image8 read_png(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw FormatError(path.string() + ": not a PNG file");

  Image8 image;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  auto u32be = [&](std::size_t p) {
    return (static_cast<std::uint32_t>(bytes[p]) << 24) |
           (static_cast<std::uint32_t>(bytes[p + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[p + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[p + 3]);
  };
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = u32be(pos);
    const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    if (pos + 12 + len > bytes.size())
      throw FormatError(path.string() + ": truncated chunk");
    const std::uint8_t* data = bytes.data() + pos + 8;
    if (type == "IHDR") {
      image.width = static_cast<int>(u32be(pos + 8));
      image.height = static_cast<int>(u32be(pos + 12));
      if (data[8] != 8 || data[9] != 2)
        throw FormatError(path.string() + ": unsupported PNG layout");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  // stored-deflate zlib stream only (what write_png emits)
  if (idat.size() < 6 || idat[0] != 0x78)
    throw FormatError(path.string() + ": unsupported zlib stream");
  std::vector<std::uint8_t> raw;
  std::size_t p = 2;
  for (;;) {
    if (p + 5 > idat.size())
      throw FormatError(path.string() + ": truncated deflate block");
    const bool final = idat[p] & 1;
    if ((idat[p] >> 1) != 0)
      throw FormatError(path.string() + ": compressed PNG not supported here");
    const std::size_t len = idat[p + 1] | (static_cast<std::size_t>(idat[p + 2]) << 8);
    p += 5;
    raw.insert(raw.end(), idat.begin() + p, idat.begin() + p + len);
    p += len;
    if (final) break;
  }
  const std::size_t stride = 3u * image.width + 1;
  if (raw.size() != stride * image.height)
    throw FormatError(path.string() + ": scanline payload mismatch");
  image.rgb.reserve(3u * image.width * image.height);
  for (int y = 0; y < image.height; ++y) {
    if (raw[y * stride] != 0)
      throw FormatError(path.string() + ": unsupported scanline filter");
    image.rgb.insert(image.rgb.end(), raw.begin() + y * stride + 1,
                     raw.begin() + (y + 1) * stride);
  }
  return image;
}

namespace {

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image8 render_dc_slice(const DCMap& map, SliceAxis axis, int slice_index,
                       const LabelVolume* overlay) {
  const Dims d = map.dims();
  if (overlay && !(overlay->dims() == d))
    throw GeometryError("render_dc_slice: overlay dims " +
                        to_string(overlay->dims()) + " do not match map " +
                        to_string(d));

  int width = 0, height = 0, depth = 0;
  switch (axis) {
    case SliceAxis::Sagittal:
      width = d.y;
      height = d.z;
      depth = d.x;
      break;
    case SliceAxis::Coronal:
      width = d.x;
      height = d.z;
      depth = d.y;
      break;
    case SliceAxis::Axial:
      width = d.x;
      height = d.y;
      depth = d.z;
      break;
  }
  if (slice_index < 0) slice_index = depth / 2;
  if (slice_index >= depth)
    throw GeometryError("render_dc_slice: slice " + std::to_string(slice_index) +
                        " outside depth " + std::to_string(depth));

  auto voxel_of = [&](int u, int v) {
    switch (axis) {
      case SliceAxis::Sagittal:
        return std::array<int, 3>{slice_index, u, v};
      case SliceAxis::Coronal:
        return std::array<int, 3>{u, slice_index, v};
      default:
        return std::array<int, 3>{u, v, slice_index};
    }
  };

  Image8 image;
  image.width = width;
  image.height = height;
  image.rgb.assign(3u * width * height, 0);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      const auto [x, y, z] = voxel_of(u, v);
      const DCPoint p{map.at(0, x, y, z), map.at(1, x, y, z)};
      Rgb color = dc_to_color(p);
      if (overlay) {
        const std::uint16_t here = (*overlay)(x, y, z);
        bool boundary = false;
        if (u + 1 < width) {
          const auto [x2, y2, z2] = voxel_of(u + 1, v);
          boundary |= (*overlay)(x2, y2, z2) != here;
        }
        if (v + 1 < height) {
          const auto [x2, y2, z2] = voxel_of(u, v + 1);
          boundary |= (*overlay)(x2, y2, z2) != here;
        }
        if (boundary) color = {0.0, 0.0, 0.0};
      }
      std::uint8_t* px = image.pixel(u, v);
      px[0] = quantize(color.r);
      px[1] = quantize(color.g);
      px[2] = quantize(color.b);
    }
  return image;
}

}  // namespace dg
