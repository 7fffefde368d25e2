#pragma once

#include <array>
#include <cmath>
#include <string>

namespace dg {

// The three diagnostic classes. Codes are fixed and used on the wire.
enum class DiagnosticClass : int { CN = 0, AD = 1, FTD = 2 };

constexpr std::array<DiagnosticClass, 3> kAllClasses = {
    DiagnosticClass::CN, DiagnosticClass::AD, DiagnosticClass::FTD};

const std::string& class_name(DiagnosticClass c);
DiagnosticClass parse_class(const std::string& name);

// A 2D disease coordinate. Class targets sit on the unit circle; the
// out-of-ICC point is the origin.
struct DCPoint {
  double x = 0.0;
  double y = 0.0;

  double squared_norm() const { return x * x + y * y; }
  double norm() const { return std::sqrt(squared_norm()); }
  bool operator==(const DCPoint&) const = default;
};

// Angle of a point with the atan2(0,0) = 0 convention used throughout.
double dc_angle(const DCPoint& p);

// Class anchors: CN (-1, 0), AD (-sqrt(3)/2, 0.5), FTD (sqrt(3)/2, 0.5).
DCPoint class_to_dc(DiagnosticClass c);

// Ground-truth coordinate of one voxel: the class anchor inside the ICC,
// the origin outside.
DCPoint voxel_target(DiagnosticClass c, bool inside_icc);

struct MixedSample {
  double intensity = 0.0;
  DCPoint point;
};

// Angular mixup of two (intensity, coordinate) pairs:
//   I   = a*I1 + (1-a)*I2
//   phi = a*atan2(y1,x1) + (1-a)*atan2(y2,x2)
//   r   = a*(x1^2+y1^2) + (1-a)*(x2^2+y2^2)
//   out = (r*cos(phi), r*sin(phi))
// The magnitude term mixes squared radii; this is deliberate and is what the
// training targets (radius 0 or 1) make exact.
MixedSample dc_mixup(double i1, DCPoint p1, double i2, DCPoint p2, double alpha);

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  bool operator==(const Rgb&) const = default;
};

// Anchor colors of the grading-map rendering: CN blue, AD red, FTD green,
// origin neutral gray. Exposed so the CLI help and tests can state them.
constexpr Rgb kCnColor{0.0, 0.0, 1.0};
constexpr Rgb kAdColor{1.0, 0.0, 0.0};
constexpr Rgb kFtdColor{0.0, 1.0, 0.0};
constexpr Rgb kNeutralGray{0.5, 0.5, 0.5};

// Colorize a disease coordinate: the hue follows the angle by piecewise
// linear interpolation between the class anchor colors around the circle
// (FTD 30deg -> AD 150deg -> CN 180deg -> FTD again the long way); the
// saturation is min(1, norm), pulling toward neutral gray at the origin.
Rgb dc_to_color(const DCPoint& p);

}  // namespace dg
