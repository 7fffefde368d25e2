#include "dg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dg/error.hpp"

namespace dg {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.x) + ", " + std::to_string(d.y) + ", " +
         std::to_string(d.z) + ")";
}

namespace {

void require_positive(const Dims& d, const char* what) {
  if (d.x <= 0 || d.y <= 0 || d.z <= 0)
    throw GeometryError(std::string(what) + ": dims must be positive, got " +
                        to_string(d));
}

}  // namespace

Volume3D::Volume3D(Dims dims, double fill) : dims_(dims) {
  require_positive(dims, "Volume3D");
  data_.assign(dims.count(), fill);
}

Volume3D::Volume3D(Dims dims, std::vector<double> data)
    : dims_(dims), data_(std::move(data)) {
  require_positive(dims, "Volume3D");
  if (data_.size() != dims.count())
    throw GeometryError("Volume3D: data length " + std::to_string(data_.size()) +
                        " does not match dims " + to_string(dims));
}

LabelVolume::LabelVolume(Dims dims, int num_structures)
    : dims_(dims), num_structures_(num_structures) {
  require_positive(dims, "LabelVolume");
  if (num_structures < 1)
    throw ParameterError("LabelVolume: structure count must be >= 1");
  labels_.assign(dims.count(), 0);
}

LabelVolume::LabelVolume(Dims dims, int num_structures,
                         std::vector<std::uint16_t> labels)
    : dims_(dims), num_structures_(num_structures), labels_(std::move(labels)) {
  require_positive(dims, "LabelVolume");
  if (num_structures < 1)
    throw ParameterError("LabelVolume: structure count must be >= 1");
  if (labels_.size() != dims.count())
    throw GeometryError("LabelVolume: label length " +
                        std::to_string(labels_.size()) +
                        " does not match dims " + to_string(dims));
  for (std::uint16_t l : labels_)
    if (l > num_structures_)
      throw DataError("LabelVolume: label value " + std::to_string(l) +
                      " exceeds structure count " +
                      std::to_string(num_structures_));
}

DCMap::DCMap(Dims dims, double fill) : dims_(dims), voxels_(dims.count()) {
  require_positive(dims, "DCMap");
  data_.assign(2 * voxels_, fill);
}

double DCMap::max_norm() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < voxels_; ++i) {
    const double x = data_[i];
    const double y = data_[voxels_ + i];
    worst = std::max(worst, std::sqrt(x * x + y * y));
  }
  return worst;
}

Volume3D normalize_intensity(const Volume3D& v) {
  if (v.size() == 0) throw DataError("normalize_intensity: empty volume");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v.data()) {
    if (!std::isfinite(x))
      throw DataError("normalize_intensity: non-finite input value");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Volume3D out(v.dims());
  if (hi == lo) return out;  // constant input maps to all zeros
  const double scale = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) * scale;
  return out;
}

Volume3D downscale_by_2(const Volume3D& v) {
  const Dims d = v.dims();
  if (d.x < 2 || d.y < 2 || d.z < 2)
    throw GeometryError("downscale_by_2: every dim must be >= 2, got " +
                        to_string(d));
  const Dims out_dims{(d.x + 1) / 2, (d.y + 1) / 2, (d.z + 1) / 2};
  Volume3D out(out_dims);
  for (int z = 0; z < out_dims.z; ++z) {
    const int z0 = 2 * z, z1 = std::min(2 * z + 2, d.z);
    for (int y = 0; y < out_dims.y; ++y) {
      const int y0 = 2 * y, y1 = std::min(2 * y + 2, d.y);
      for (int x = 0; x < out_dims.x; ++x) {
        const int x0 = 2 * x, x1 = std::min(2 * x + 2, d.x);
        double sum = 0.0;
        int n = 0;
        for (int zz = z0; zz < z1; ++zz)
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) {
              sum += v(xx, yy, zz);
              ++n;
            }
        out(x, y, z) = sum / n;
      }
    }
  }
  return out;
}

namespace {

// Corner-aligned source coordinate for output index i.
inline double source_coord(int i, int out_dim, int in_dim) {
  if (out_dim <= 1) return 0.0;
  return static_cast<double>(i) * (in_dim - 1) / (out_dim - 1);
}

}  // namespace

DCMap upscale_to(const DCMap& m, Dims target_dims) {
  const Dims s = m.dims();
  require_positive(target_dims, "upscale_to");
  if (target_dims.x < s.x || target_dims.y < s.y || target_dims.z < s.z)
    throw GeometryError("upscale_to: target dims " + to_string(target_dims) +
                        " smaller than source " + to_string(s));
  if (target_dims == s) return m;

  DCMap out(target_dims);
  std::vector<int> x0(target_dims.x), y0(target_dims.y), z0(target_dims.z);
  std::vector<double> fx(target_dims.x), fy(target_dims.y), fz(target_dims.z);
  auto prepare = [](int out_dim, int in_dim, std::vector<int>& i0,
                    std::vector<double>& f) {
    for (int i = 0; i < out_dim; ++i) {
      const double c = source_coord(i, out_dim, in_dim);
      int lo = static_cast<int>(std::floor(c));
      if (lo >= in_dim - 1) lo = in_dim > 1 ? in_dim - 2 : 0;
      i0[i] = lo;
      f[i] = in_dim > 1 ? c - lo : 0.0;
    }
  };
  prepare(target_dims.x, s.x, x0, fx);
  prepare(target_dims.y, s.y, y0, fy);
  prepare(target_dims.z, s.z, z0, fz);

  for (int c = 0; c < 2; ++c) {
    const double* src = m.channel(c);
    double* dst = out.channel(c);
    const std::size_t sx = 1, sy = static_cast<std::size_t>(s.x),
                      sz = static_cast<std::size_t>(s.x) * s.y;
    std::size_t o = 0;
    for (int z = 0; z < target_dims.z; ++z) {
      const std::size_t zb = static_cast<std::size_t>(z0[z]) * sz;
      const double tz = fz[z];
      for (int y = 0; y < target_dims.y; ++y) {
        const std::size_t yb = zb + static_cast<std::size_t>(y0[y]) * sy;
        const double ty = fy[y];
        for (int x = 0; x < target_dims.x; ++x, ++o) {
          const std::size_t base = yb + static_cast<std::size_t>(x0[x]) * sx;
          const double tx = fx[x];
          const bool ex = x0[x] + 1 < s.x;
          const bool ey = y0[y] + 1 < s.y;
          const bool ez = z0[z] + 1 < s.z;
          const double v000 = src[base];
          const double v100 = ex ? src[base + sx] : v000;
          const double v010 = ey ? src[base + sy] : v000;
          const double v110 = ex && ey ? src[base + sy + sx] : v010;
          const double v001 = ez ? src[base + sz] : v000;
          const double v101 = ex && ez ? src[base + sz + sx] : v001;
          const double v011 = ey && ez ? src[base + sz + sy] : v001;
          const double v111 = ex && ey && ez ? src[base + sz + sy + sx] : v011;
          const double c00 = v000 + (v100 - v000) * tx;
          const double c10 = v010 + (v110 - v010) * tx;
          const double c01 = v001 + (v101 - v001) * tx;
          const double c11 = v011 + (v111 - v011) * tx;
          const double c0 = c00 + (c10 - c00) * ty;
          const double c1 = c01 + (c11 - c01) * ty;
          dst[o] = c0 + (c1 - c0) * tz;
        }
      }
    }
  }
  return out;
}

// --- DGV1 I/O --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'G', 'V', '1'};
constexpr std::uint8_t kDtypeScalar = 1;
constexpr std::uint8_t kDtypeLabels = 2;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint8_t u8(const char* field) {
    need(1, field);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const char* field) {
    const std::uint32_t bits = u32(field);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(path_ + ": truncated " + field);
  }

  const std::string& path() const { return path_; }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Dims read_header_dims(Reader& r) {
  const std::uint32_t x = r.u32("dim X");
  const std::uint32_t y = r.u32("dim Y");
  const std::uint32_t z = r.u32("dim Z");
  if (x == 0 || y == 0 || z == 0)
    throw FormatError(r.path() + ": zero dimension in header");
  if (static_cast<std::uint64_t>(x) * y * z > (1ull << 31))
    throw FormatError(r.path() + ": implausible dims in header");
  return Dims{static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)};
}

}  // namespace

void write_volume(const Volume3D& v, const std::filesystem::path& path) {
  std::string out;
  out.reserve(17 + 4 * v.size());
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kDtypeScalar));
  put_u32(out, static_cast<std::uint32_t>(v.dims().x));
  put_u32(out, static_cast<std::uint32_t>(v.dims().y));
  put_u32(out, static_cast<std::uint32_t>(v.dims().z));
  for (double x : v.data()) {
    if (!std::isfinite(x))
      throw DataError("write_volume: non-finite value in " + path.string());
    put_f32(out, static_cast<float>(x));
  }
  spit(path, out);
}

void write_volume(const LabelVolume& v, const std::filesystem::path& path) {
  std::string out;
  out.reserve(19 + 2 * v.size());
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kDtypeLabels));
  put_u32(out, static_cast<std::uint32_t>(v.dims().x));
  put_u32(out, static_cast<std::uint32_t>(v.dims().y));
  put_u32(out, static_cast<std::uint32_t>(v.dims().z));
  put_u16(out, static_cast<std::uint16_t>(v.num_structures()));
  for (std::uint16_t l : v.labels()) put_u16(out, l);
  spit(path, out);
}

AnyVolume read_volume(const std::filesystem::path& path) {
  Reader r(slurp(path), path.string());
  r.need(4, "magic");
  char magic[4];
  for (auto& c : magic) c = static_cast<char>(r.u8("magic"));
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path.string() + ": bad magic");
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype != kDtypeScalar && dtype != kDtypeLabels)
    throw FormatError(path.string() + ": unknown dtype code " +
                      std::to_string(dtype));
  const Dims dims = read_header_dims(r);
  const std::size_t n = dims.count();

  if (dtype == kDtypeScalar) {
    if (r.remaining() != 4 * n)
      throw FormatError(path.string() + ": payload length mismatch, dims " +
                        to_string(dims) + " expect " + std::to_string(4 * n) +
                        " bytes, found " + std::to_string(r.remaining()));
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = r.f32("payload");
      if (!std::isfinite(data[i]))
        throw FormatError(path.string() + ": non-finite value in payload");
    }
    return Volume3D(dims, std::move(data));
  }

  const std::uint16_t s = r.u16("structure count");
  if (s == 0) throw FormatError(path.string() + ": zero structure count");
  if (r.remaining() != 2 * n)
    throw FormatError(path.string() + ": payload length mismatch, dims " +
                      to_string(dims) + " expect " + std::to_string(2 * n) +
                      " bytes, found " + std::to_string(r.remaining()));
  std::vector<std::uint16_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = r.u16("payload");
    if (labels[i] > s)
      throw FormatError(path.string() + ": label value " +
                        std::to_string(labels[i]) + " exceeds structure count " +
                        std::to_string(s));
  }
  return LabelVolume(dims, s, std::move(labels));
}

Volume3D read_scalar_volume(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* p = std::get_if<Volume3D>(&v)) return std::move(*p);
  throw FormatError(path.string() + ": expected scalar volume, found labels");
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* p = std::get_if<LabelVolume>(&v)) return std::move(*p);
  throw FormatError(path.string() + ": expected label volume, found scalars");
}

}  // namespace dg
