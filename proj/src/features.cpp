#include "dg/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dg/error.hpp"

namespace dg {

std::vector<double> StructureFeatures::dc_flat() const {
  std::vector<double> flat;
  flat.reserve(2 * static_cast<std::size_t>(s));
  flat.insert(flat.end(), dc_x.begin(), dc_x.end());
  flat.insert(flat.end(), dc_y.begin(), dc_y.end());
  return flat;
}

StructureDC structure_dc(const DCMap& m, const LabelVolume& lab) {
  if (!(m.dims() == lab.dims()))
    throw GeometryError("structure_dc: map dims " + to_string(m.dims()) +
                        " do not match labels " + to_string(lab.dims()));
  const int s = lab.num_structures();
  std::vector<double> sum_x(static_cast<std::size_t>(s), 0.0);
  std::vector<double> sum_y(static_cast<std::size_t>(s), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(s), 0);
  const std::size_t n = m.voxels();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t l = lab[i];
    if (l == 0) continue;
    sum_x[l - 1] += m.at(0, i);
    sum_y[l - 1] += m.at(1, i);
    ++count[l - 1];
  }
  StructureDC out;
  out.s = s;
  out.x.resize(static_cast<std::size_t>(s));
  out.y.resize(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) {
    if (count[j] == 0)
      throw DataError("structure_dc: label " + std::to_string(j + 1) +
                      " missing from segmentation");
    out.x[j] = sum_x[j] / static_cast<double>(count[j]);
    out.y[j] = sum_y[j] / static_cast<double>(count[j]);
  }
  return out;
}

std::vector<double> structure_volumes(const LabelVolume& lab) {
  const int s = lab.num_structures();
  std::vector<double> count(static_cast<std::size_t>(s), 0.0);
  double icc = 0.0;
  for (std::uint16_t l : lab.labels()) {
    if (l == 0) continue;
    count[l - 1] += 1.0;
    icc += 1.0;
  }
  if (icc == 0.0) throw DataError("structure_volumes: empty ICC");
  std::vector<double> out(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) out[j] = 100.0 * count[j] / icc;
  return out;
}

StructureFeatures compute_features(const DCMap& m, const LabelVolume& lab) {
  StructureDC dc = structure_dc(m, lab);
  StructureFeatures f;
  f.s = dc.s;
  f.dc_x = std::move(dc.x);
  f.dc_y = std::move(dc.y);
  f.volumes = structure_volumes(lab);
  return f;
}

namespace {

void write_double(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

void write_features_csv(const std::vector<FeatureRow>& rows,
                        const std::filesystem::path& path) {
  if (rows.empty()) throw DataError("write_features_csv: no rows");
  const int s = rows.front().features.s;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject_id,class";
  for (int j = 1; j <= s; ++j) out << ",dc_x_" << j;
  for (int j = 1; j <= s; ++j) out << ",dc_y_" << j;
  for (int j = 1; j <= s; ++j) out << ",vol_" << j;
  out << '\n';
  for (const FeatureRow& r : rows) {
    if (r.features.s != s)
      throw DataError("write_features_csv: inconsistent structure counts");
    out << r.subject_id << ',' << class_name(r.cls);
    for (double v : r.features.dc_x) {
      out << ',';
      write_double(out, v);
    }
    for (double v : r.features.dc_y) {
      out << ',';
      write_double(out, v);
    }
    for (double v : r.features.volumes) {
      out << ',';
      write_double(out, v);
    }
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header))
    throw FormatError(path.string() + ": empty features file");
  // infer s from the header
  int columns = 0;
  for (char c : header)
    if (c == ',') ++columns;
  if (columns < 4 || (columns - 1) % 3 != 0)
    throw FormatError(path.string() + ": unexpected features header");
  const int s = (columns - 1) / 3;

  std::vector<FeatureRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    FeatureRow r;
    std::string cls, field;
    if (!std::getline(ss, r.subject_id, ',') || !std::getline(ss, cls, ','))
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    r.cls = parse_class(cls);
    r.features.s = s;
    auto read_block = [&](std::vector<double>& dst) {
      dst.resize(static_cast<std::size_t>(s));
      for (int j = 0; j < s; ++j) {
        if (!std::getline(ss, field, ','))
          throw FormatError(path.string() + ": row with missing columns");
        dst[static_cast<std::size_t>(j)] = std::stod(field);
      }
    };
    read_block(r.features.dc_x);
    read_block(r.features.dc_y);
    read_block(r.features.volumes);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dg
