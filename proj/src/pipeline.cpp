#include "qglut/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "qglut/error.hpp"

namespace qglut {
namespace {

Triple pixel_triple(const ImageBuffer& img, std::size_t i) {
  auto d = img.data();
  return {d[i * 3], d[i * 3 + 1], d[i * 3 + 2]};
}

Triple lab_stage(const Lut1DTriple& luts, const Triple& lab) {
  return {apply_1d(luts.l, lab[0]), apply_1d(luts.a, lab[1]), apply_1d(luts.b, lab[2])};
}

void check_input(const ImageBuffer& img) {
  if (img.empty()) fail(ErrorCode::InvalidImage, "cannot enhance an empty image");
  if (img.colorspace() != ColorSpace::Srgb) fail(ErrorCode::InvalidImage, "expected an sRGB image");
}

}  // namespace

std::vector<Triple> normalized_lab_pixels(const ImageBuffer& img) {
  std::vector<Triple> out(img.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = srgb_to_normalized_lab(pixel_triple(img, i));
  return out;
}

ImageBuffer render(const ImageBuffer& img, const Lut1DTriple* luts, const Lut3D& fused) {
  check_input(img);
  ImageBuffer out(img.width(), img.height());
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    Triple rgb = pixel_triple(img, i);
    if (luts) rgb = normalized_lab_to_srgb(lab_stage(*luts, srgb_to_normalized_lab(rgb)), nullptr);
    Triple o = apply_3d(fused, rgb);
    for (int c = 0; c < 3; ++c) dst[i * 3 + c] = static_cast<float>(o[c]);
  }
  return out;
}

double render_mse(const ImageBuffer& img, std::span<const Triple> lab, const Lut1DTriple* luts,
                  const Lut3D& fused, const ImageBuffer& target, double scale,
                  RenderGradients* grads) {
  check_input(img);
  if (target.width() != img.width() || target.height() != img.height()) {
    fail(ErrorCode::DimensionMismatch, "target and input dimensions differ");
  }
  const std::size_t n = img.pixel_count();
  if (!lab.empty() && lab.size() != n) fail(ErrorCode::DimensionMismatch, "Lab cache size");
  const double norm = scale / static_cast<double>(n * 3);
  const int bins = luts ? luts->bins() : 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Triple rgb = pixel_triple(img, i);
    Triple lab_in{};
    Jacobian3 jac{};
    if (luts) {
      lab_in = lab.empty() ? srgb_to_normalized_lab(rgb) : lab[i];
      rgb = normalized_lab_to_srgb(lab_stage(*luts, lab_in), grads ? &jac : nullptr);
    }
    Triple out = apply_3d(fused, rgb);
    Triple t = pixel_triple(target, i);
    Triple upstream{};
    for (int c = 0; c < 3; ++c) {
      const double d = out[c] - t[c];
      sum += d * d;
      upstream[c] = 2.0 * norm * d;
    }
    if (!grads) continue;
    Lut3DGrad g3 = apply_3d_backward(fused, rgb, upstream);
    g3.accumulate(grads->grid);
    if (!luts) continue;
    for (int axis = 0; axis < 3; ++axis) {
      double g = 0.0;
      for (int o = 0; o < 3; ++o) g += jac[o][axis] * g3.grad_c[o];
      if (g == 0.0) continue;
      Lut1DGrad g1 = apply_1d_backward((*luts)[axis], lab_in[axis], g);
      double* dst = grads->lut1d.data() + static_cast<std::size_t>(axis) * bins;
      dst[g1.index[0]] += g1.entry_grad[0];
      dst[g1.index[1]] += g1.entry_grad[1];
    }
  }
  return sum * norm;
}

}  // namespace qglut
