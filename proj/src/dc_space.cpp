#include "dg/dc_space.hpp"

#include <algorithm>

#include "dg/error.hpp"

namespace dg {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
const double kHalfSqrt3 = std::sqrt(3.0) / 2.0;
}  // namespace

const std::string& class_name(DiagnosticClass c) {
  static const std::string names[3] = {"CN", "AD", "FTD"};
  return names[static_cast<int>(c)];
}

DiagnosticClass parse_class(const std::string& name) {
  for (DiagnosticClass c : kAllClasses)
    if (class_name(c) == name) return c;
  throw ParameterError("unknown diagnostic class '" + name + "'");
}

double dc_angle(const DCPoint& p) {
  if (p.x == 0.0 && p.y == 0.0) return 0.0;
  return std::atan2(p.y, p.x);
}

DCPoint class_to_dc(DiagnosticClass c) {
  switch (c) {
    case DiagnosticClass::CN:
      return {-1.0, 0.0};
    case DiagnosticClass::AD:
      return {-kHalfSqrt3, 0.5};
    case DiagnosticClass::FTD:
      return {kHalfSqrt3, 0.5};
  }
  throw ParameterError("invalid diagnostic class code");
}

DCPoint voxel_target(DiagnosticClass c, bool inside_icc) {
  return inside_icc ? class_to_dc(c) : DCPoint{0.0, 0.0};
}

MixedSample dc_mixup(double i1, DCPoint p1, double i2, DCPoint p2,
                     double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ParameterError("dc_mixup: alpha must lie in [0, 1], got " +
                         std::to_string(alpha));
  const double beta = 1.0 - alpha;
  const double intensity = alpha * i1 + beta * i2;
  const double phi = alpha * dc_angle(p1) + beta * dc_angle(p2);
  const double r = alpha * p1.squared_norm() + beta * p2.squared_norm();
  return {intensity, {r * std::cos(phi), r * std::sin(phi)}};
}

namespace {

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Base color at radius 1 for an angle in degrees in [0, 360).
Rgb base_color(double deg) {
  if (deg >= 30.0 && deg <= 150.0)  // FTD -> AD
    return lerp(kFtdColor, kAdColor, (deg - 30.0) / 120.0);
  if (deg > 150.0 && deg <= 180.0)  // AD -> CN
    return lerp(kAdColor, kCnColor, (deg - 150.0) / 30.0);
  // CN -> FTD the long way around (180 -> 390 degrees).
  const double t = (deg > 180.0 ? deg - 180.0 : deg + 180.0) / 210.0;
  return lerp(kCnColor, kFtdColor, t);
}

}  // namespace

Rgb dc_to_color(const DCPoint& p) {
  const double sat = std::min(1.0, p.norm());
  if (sat == 0.0) return kNeutralGray;
  double deg = dc_angle(p) * 180.0 / kPi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  const Rgb base = base_color(deg);
  return lerp(kNeutralGray, base, sat);
}

}  // namespace dg
