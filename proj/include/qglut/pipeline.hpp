#pragma once

#include <span>
#include <vector>

#include "qglut/image.hpp"
#include "qglut/lut.hpp"

namespace qglut {

/// Normalized-Lab coordinates of every pixel of an sRGB image.
std::vector<Triple> normalized_lab_pixels(const ImageBuffer& img);

/// 3D LUT (in RGB) applied after the per-axis 1D LUTs (in normalized Lab).
/// `luts` may be null, which skips the Lab stage entirely. Output is clamped
/// to [0,1] and has the input's dimensions.
ImageBuffer render(const ImageBuffer& img, const Lut1DTriple* luts, const Lut3D& fused);

struct RenderGradients {
  std::vector<double> lut1d;  // 3*S, axis-major (L, a, b)
  std::vector<double> grid;   // D^3 * 3, same layout as Lut3D::grid
};

/// Renders `img` and returns scale * MSE(render, target). When `grads` is
/// non-null, the gradient of that value w.r.t. the 1D entries and the 3D grid
/// is added into it (buffers must already be sized). `lab` may be empty, in
/// which case Lab coordinates are computed on the fly.
double render_mse(const ImageBuffer& img, std::span<const Triple> lab, const Lut1DTriple* luts,
                  const Lut3D& fused, const ImageBuffer& target, double scale,
                  RenderGradients* grads);

}  // namespace qglut
