#include "dg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dg/error.hpp"
#include "dg/rng.hpp"

namespace dg {

void PhantomSpec::validate() const {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
    throw ParameterError("phantom: dims must be positive");
  if (dims.x % 2 || dims.y % 2 || dims.z % 2)
    throw ParameterError("phantom: dims must be even, got " + to_string(dims));
  if (blocks_x < 1 || blocks_y < 1 || blocks_z < 1)
    throw ParameterError("phantom: block counts must be >= 1");
  if (!(shrink > 0.0 && shrink < 1.0))
    throw ParameterError("phantom: shrink must lie in (0, 1)");
  if (!(darken > 0.0 && darken < 1.0))
    throw ParameterError("phantom: darken must lie in (0, 1)");
  if (noise_sigma < 0.0) throw ParameterError("phantom: negative noise sigma");
  const int s = structures();
  auto check_set = [&](const std::vector<int>& set, const char* name) {
    for (int j : set)
      if (j < 1 || j > s)
        throw ParameterError(std::string("phantom: ") + name +
                             " set references structure " + std::to_string(j) +
                             " outside 1.." + std::to_string(s));
  };
  check_set(ad_structures, "AD");
  check_set(ftd_structures, "FTD");
  for (int j : ad_structures)
    if (std::find(ftd_structures.begin(), ftd_structures.end(), j) !=
        ftd_structures.end())
      throw ParameterError("phantom: AD and FTD effect sets must be disjoint");
}

const std::vector<int>& PhantomSpec::affected_structures(
    DiagnosticClass c) const {
  static const std::vector<int> none;
  switch (c) {
    case DiagnosticClass::AD:
      return ad_structures;
    case DiagnosticClass::FTD:
      return ftd_structures;
    default:
      return none;
  }
}

PhantomSubject generate_subject(DiagnosticClass c, const PhantomSpec& spec,
                                std::uint64_t subject_seed) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, subject_seed));
  const Dims d = spec.dims;
  const int s = spec.structures();

  // Per-subject anatomy: jittered ellipsoid axes and structure centers.
  const double cx = 0.5 * (d.x - 1);
  const double cy = 0.5 * (d.y - 1);
  const double cz = 0.5 * (d.z - 1);
  auto jittered = [&](double base) {
    const double j = std::clamp(rng.normal(0.0, spec.axis_jitter), -0.06, 0.06);
    return base * (1.0 + j);
  };
  const double ax = jittered(0.40 * d.x);
  const double ay = jittered(0.42 * d.y);
  const double az = jittered(0.40 * d.z);

  struct Center {
    double x, y, z;
    double inv_w2;  // 1/w^2 for the weighted Voronoi comparison
    double intensity;
  };
  std::vector<Center> centers(s);
  const auto& affected = spec.affected_structures(c);
  for (int bz = 0; bz < spec.blocks_z; ++bz)
    for (int by = 0; by < spec.blocks_y; ++by)
      for (int bx = 0; bx < spec.blocks_x; ++bx) {
        const int j = 1 + bx + spec.blocks_x * (by + spec.blocks_y * bz);
        Center& ctr = centers[j - 1];
        ctr.x = cx - ax + 2.0 * ax * (bx + 0.5) / spec.blocks_x +
                rng.normal(0.0, spec.center_jitter);
        ctr.y = cy - ay + 2.0 * ay * (by + 0.5) / spec.blocks_y +
                rng.normal(0.0, spec.center_jitter);
        ctr.z = cz - az + 2.0 * az * (bz + 0.5) / spec.blocks_z +
                rng.normal(0.0, spec.center_jitter);
        const bool hit =
            std::find(affected.begin(), affected.end(), j) != affected.end();
        const double w = hit ? 1.0 - spec.shrink : 1.0;
        ctr.inv_w2 = 1.0 / (w * w);
        ctr.intensity =
            spec.baseline_intensity(j) * (hit ? 1.0 - spec.darken : 1.0);
      }

  Volume3D vol(d);
  LabelVolume lab(d, s);
  std::size_t idx = 0;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x, ++idx) {
        const double ex = (x - cx) / ax;
        const double ey = (y - cy) / ay;
        const double ez = (z - cz) / az;
        const bool inside = ex * ex + ey * ey + ez * ez <= 1.0;
        double value = spec.background;
        if (inside) {
          int best = 0;
          double best_d = std::numeric_limits<double>::infinity();
          for (int j = 0; j < s; ++j) {
            const double dx = x - centers[j].x;
            const double dy = y - centers[j].y;
            const double dz = z - centers[j].z;
            const double dist = (dx * dx + dy * dy + dz * dz) * centers[j].inv_w2;
            if (dist < best_d) {
              best_d = dist;
              best = j;
            }
          }
          lab[idx] = static_cast<std::uint16_t>(best + 1);
          value = centers[best].intensity;
        }
        // noise drawn for every voxel keeps the stream layout fixed
        vol[idx] = value + spec.intensity_shift + rng.normal(0.0, spec.noise_sigma);
      }

  // every structure must be materialized for a valid subject
  std::vector<char> seen(s + 1, 0);
  for (std::uint16_t l : lab.labels()) seen[l] = 1;
  for (int j = 1; j <= s; ++j)
    if (!seen[j])
      throw DataError("phantom subject lost structure " + std::to_string(j) +
                      "; spec geometry too aggressive");
  return {std::move(vol), std::move(lab)};
}

std::vector<ManifestRow> generate_dataset(int n_per_class,
                                          const PhantomSpec& spec,
                                          const std::filesystem::path& dir,
                                          const std::string& domain_tag) {
  if (n_per_class < 1)
    throw ParameterError("generate_dataset: n_per_class must be >= 1");
  if (domain_tag != "in" && domain_tag != "out")
    throw ParameterError("generate_dataset: domain tag must be 'in' or 'out'");
  spec.validate();
  std::filesystem::create_directories(dir);

  std::vector<ManifestRow> rows;
  rows.reserve(3 * static_cast<std::size_t>(n_per_class));
  for (int i = 0; i < n_per_class; ++i) {
    for (DiagnosticClass c : kAllClasses) {
      const std::uint64_t subject_seed =
          static_cast<std::uint64_t>(i) * 8 + static_cast<std::uint64_t>(c) +
          (domain_tag == "out" ? 0x0d0ull : 0ull);
      PhantomSubject subject = generate_subject(c, spec, subject_seed);
      std::ostringstream id;
      id << domain_tag << "_" << class_name(c) << "_" << std::setw(3)
         << std::setfill('0') << i;
      ManifestRow row;
      row.id = id.str();
      row.cls = c;
      row.volume_path = row.id + "_t1.dgv";
      row.labels_path = row.id + "_seg.dgv";
      row.domain = domain_tag;
      write_volume(subject.intensity, dir / row.volume_path);
      write_volume(subject.labels, dir / row.labels_path);
      rows.push_back(std::move(row));
    }
  }
  write_manifest(rows, dir / "manifest.csv");
  return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "subject_id,class,volume_path,labels_path,domain\n";
  for (const auto& r : rows)
    out << r.id << ',' << class_name(r.cls) << ',' << r.volume_path << ','
        << r.labels_path << ',' << r.domain << '\n';
  if (!out) throw IoError("short write to manifest " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path.string() + ": empty manifest");
  if (line != "subject_id,class,volume_path,labels_path,domain")
    throw FormatError(path.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow r;
    std::string cls;
    if (!std::getline(ss, r.id, ',') || !std::getline(ss, cls, ',') ||
        !std::getline(ss, r.volume_path, ',') ||
        !std::getline(ss, r.labels_path, ',') || !std::getline(ss, r.domain))
      throw FormatError(path.string() + ": malformed manifest row '" + line +
                        "'");
    r.cls = parse_class(cls);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dg
