#include "dg/dataset.hpp"

#include <algorithm>

#include "dg/error.hpp"
#include "dg/parallel.hpp"

namespace dg {

std::vector<std::uint8_t> downscale_mask(const LabelVolume& labels) {
  const Dims d = labels.dims();
  if (d.x < 2 || d.y < 2 || d.z < 2)
    throw GeometryError("downscale_mask: every dim must be >= 2");
  const Dims out{(d.x + 1) / 2, (d.y + 1) / 2, (d.z + 1) / 2};
  std::vector<std::uint8_t> mask(out.count(), 0);
  std::size_t o = 0;
  for (int z = 0; z < out.z; ++z) {
    const int z1 = std::min(2 * z + 2, d.z);
    for (int y = 0; y < out.y; ++y) {
      const int y1 = std::min(2 * y + 2, d.y);
      for (int x = 0; x < out.x; ++x, ++o) {
        const int x1 = std::min(2 * x + 2, d.x);
        int inside = 0, total = 0;
        for (int zz = 2 * z; zz < z1; ++zz)
          for (int yy = 2 * y; yy < y1; ++yy)
            for (int xx = 2 * x; xx < x1; ++xx) {
              inside += labels(xx, yy, zz) >= 1 ? 1 : 0;
              ++total;
            }
        mask[o] = 2 * inside >= total ? 1 : 0;
      }
    }
  }
  return mask;
}

SubjectData load_subject(const ManifestRow& row,
                         const std::filesystem::path& dir) {
  SubjectData s;
  s.id = row.id;
  s.cls = row.cls;
  s.domain = row.domain;
  const Volume3D raw = read_scalar_volume(dir / row.volume_path);
  s.labels = read_label_volume(dir / row.labels_path);
  if (!(raw.dims() == s.labels.dims()))
    throw DataError("subject " + row.id + ": volume dims " +
                    to_string(raw.dims()) + " do not match labels " +
                    to_string(s.labels.dims()));
  s.original_dims = raw.dims();
  s.down = downscale_by_2(normalize_intensity(raw));
  s.icc_down = downscale_mask(s.labels);
  return s;
}

std::vector<SubjectData> load_subjects(const std::vector<ManifestRow>& rows,
                                       const std::filesystem::path& dir) {
  std::vector<SubjectData> subjects(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    subjects[i] = load_subject(rows[i], dir);
  });
  return subjects;
}

}  // namespace dg
