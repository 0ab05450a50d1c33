#include "qglut/color.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "qglut/error.hpp"

namespace qglut {
namespace {

// IEC 61966-2-1 primaries, D65.
const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761,
                                    0.1804375, 0.2126729, 0.7151522, 0.0721750,
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

const Eigen::Matrix3d& xyz_to_rgb() {
  static const Eigen::Matrix3d m = rgb_to_xyz().inverse();
  return m;
}

// Reference white is the image of RGB (1,1,1), so neutrals land exactly on
// a = b = 0.
const Eigen::Vector3d& white() {
  static const Eigen::Vector3d w = rgb_to_xyz() * Eigen::Vector3d::Ones();
  return w;
}

constexpr double kDelta = 6.0 / 29.0;
constexpr double kDelta2 = kDelta * kDelta;
constexpr double kDelta3 = kDelta2 * kDelta;

double lab_f(double t) {
  return t > kDelta3 ? std::cbrt(t) : t / (3.0 * kDelta2) + 4.0 / 29.0;
}

double lab_finv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta2 * (t - 4.0 / 29.0);
}

double lab_finv_deriv(double t) {
  return t > kDelta ? 3.0 * t * t : 3.0 * kDelta2;
}

double clamp_finite(double v, double lo, double hi) {
  if (std::isnan(v)) return lo > 0.0 ? lo : (hi < 0.0 ? hi : 0.0);
  return std::clamp(v, lo, hi);
}

double srgb_encode_deriv(double v) {
  if (v <= 0.0031308) return 12.92;
  return 1.055 / 2.4 * std::pow(v, 1.0 / 2.4 - 1.0);
}

}  // namespace

RgbPixel::RgbPixel(double r_, double g_, double b_)
    : r(clamp_finite(r_, 0.0, 1.0)),
      g(clamp_finite(g_, 0.0, 1.0)),
      b(clamp_finite(b_, 0.0, 1.0)) {}

LabPixel::LabPixel(double l_, double a_, double b_)
    : l(clamp_finite(l_, 0.0, 100.0)),
      a(clamp_finite(a_, -128.0, 128.0)),
      b(clamp_finite(b_, -128.0, 128.0)) {}

double srgb_decode(double v) noexcept {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) noexcept {
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

LabPixel srgb_to_lab(const RgbPixel& p) noexcept {
  Eigen::Vector3d lin(srgb_decode(p.r), srgb_decode(p.g), srgb_decode(p.b));
  Eigen::Vector3d xyz = rgb_to_xyz() * lin;
  const auto& w = white();
  double fx = lab_f(xyz.x() / w.x());
  double fy = lab_f(xyz.y() / w.y());
  double fz = lab_f(xyz.z() / w.z());
  return LabPixel(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz));
}

RgbPixel lab_to_srgb(const LabPixel& p) noexcept {
  auto rgb = normalized_lab_to_srgb(lab_normalize(p), nullptr);
  return RgbPixel(rgb[0], rgb[1], rgb[2]);
}

Triple lab_normalize(const LabPixel& p) noexcept {
  return {p.l / 100.0, (p.a + 128.0) / 256.0, (p.b + 128.0) / 256.0};
}

LabPixel lab_denormalize(const Triple& unit) noexcept {
  return LabPixel(unit[0] * 100.0, unit[1] * 256.0 - 128.0,
                  unit[2] * 256.0 - 128.0);
}

Triple srgb_to_normalized_lab(const Triple& rgb) noexcept {
  return lab_normalize(srgb_to_lab(RgbPixel(rgb[0], rgb[1], rgb[2])));
}

Triple normalized_lab_to_srgb(const Triple& unit, Jacobian3* jac) noexcept {
  // d(normalized clamp)/d(unit) and d(Lab)/d(normalized).
  std::array<double, 3> u{};
  std::array<double, 3> pass{};
  for (int c = 0; c < 3; ++c) {
    double v = std::isnan(unit[c]) ? 0.0 : unit[c];
    u[c] = std::clamp(v, 0.0, 1.0);
    pass[c] = (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0;
  }
  const double L = u[0] * 100.0;
  const double A = u[1] * 256.0 - 128.0;
  const double B = u[2] * 256.0 - 128.0;

  const double fy = (L + 16.0) / 116.0;
  const double fx = fy + A / 500.0;
  const double fz = fy - B / 200.0;
  const auto& w = white();
  Eigen::Vector3d xyz(w.x() * lab_finv(fx), w.y() * lab_finv(fy),
                      w.z() * lab_finv(fz));
  Eigen::Vector3d lin = xyz_to_rgb() * xyz;

  Triple out{};
  std::array<double, 3> lin_pass{};
  for (int c = 0; c < 3; ++c) {
    double v = lin[c];
    lin_pass[c] = (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0;
    out[c] = srgb_encode(std::clamp(v, 0.0, 1.0));
  }
  if (jac == nullptr) return out;

  // d(fx,fy,fz)/d(u): fy depends on u0, fx on u0,u1, fz on u0,u2.
  Eigen::Matrix3d df = Eigen::Matrix3d::Zero();
  df(0, 0) = 100.0 / 116.0;
  df(0, 1) = 256.0 / 500.0;
  df(1, 0) = 100.0 / 116.0;
  df(2, 0) = 100.0 / 116.0;
  df(2, 2) = -256.0 / 200.0;
  Eigen::Matrix3d dxyz = Eigen::Matrix3d::Zero();
  dxyz(0, 0) = w.x() * lab_finv_deriv(fx);
  dxyz(1, 1) = w.y() * lab_finv_deriv(fy);
  dxyz(2, 2) = w.z() * lab_finv_deriv(fz);
  Eigen::Matrix3d dlin = xyz_to_rgb() * dxyz * df;
  for (int o = 0; o < 3; ++o) {
    double scale =
        lin_pass[o] * srgb_encode_deriv(std::clamp(lin[o], 0.0, 1.0));
    for (int i = 0; i < 3; ++i) {
      (*jac)[o][i] = scale * dlin(o, i) * pass[i];
    }
  }
  return out;
}

ImageBuffer convert_image(const ImageBuffer& img, ColorSpace target) {
  if (img.empty()) fail(ErrorCode::InvalidImage, "cannot convert an empty image");
  if (img.colorspace() == target) {
    fail(ErrorCode::UnsupportedConversion,
         "source and target colorspace are both " +
             std::string(to_string(target)));
  }
  ImageBuffer out(img.width(), img.height(), target);
  auto src = img.data();
  auto dst = out.data();
  const bool to_lab = target == ColorSpace::LabNormalized;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    Triple in{src[i * 3], src[i * 3 + 1], src[i * 3 + 2]};
    Triple res = to_lab ? srgb_to_normalized_lab(in)
                        : normalized_lab_to_srgb(in, nullptr);
    for (int c = 0; c < 3; ++c) {
      dst[i * 3 + c] = static_cast<float>(std::clamp(res[c], 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace qglut
