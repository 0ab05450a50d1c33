#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qglut/color.hpp"

namespace qglut {

/// Piecewise-linear curve over [0,1] sampled at S equally spaced points.
struct Lut1D {
  std::vector<double> entries;

  int size() const noexcept { return static_cast<int>(entries.size()); }
};

/// One curve per CIELAB axis, all with the same bin count.
struct Lut1DTriple {
  Lut1D l;
  Lut1D a;
  Lut1D b;

  Lut1D& operator[](int axis) noexcept { return axis == 0 ? l : (axis == 1 ? a : b); }
  const Lut1D& operator[](int axis) const noexcept {
    return axis == 0 ? l : (axis == 1 ? a : b);
  }
  int bins() const noexcept { return l.size(); }
};

/// D x D x D lattice of RGB outputs.
///
/// Axis convention: the lattice point (i, j, k) sits at input colour
/// (r, g, b) = (k, j, i) / (D - 1), i.e. red varies fastest, then green, then
/// blue. This is the row order of the .cube text format. The flat layout is
/// grid[((i * D + j) * D + k) * 3 + channel].
struct Lut3D {
  int dim = 0;
  std::vector<double> grid;

  std::size_t node(int i, int j, int k) const noexcept {
    return (static_cast<std::size_t>(i) * dim + j) * dim + k;
  }
  double& at(int i, int j, int k, int c) noexcept { return grid[node(i, j, k) * 3 + c]; }
  double at(int i, int j, int k, int c) const noexcept {
    return grid[node(i, j, k) * 3 + c];
  }
  std::size_t node_count() const noexcept {
    return static_cast<std::size_t>(dim) * dim * dim;
  }
};

/// K learnable grids combined linearly by image-dependent weights.
struct BasisLutBank {
  std::vector<Lut3D> basis;

  int count() const noexcept { return static_cast<int>(basis.size()); }
  int dim() const noexcept { return basis.empty() ? 0 : basis.front().dim; }
};

Lut1D identity_1d(int bins);
Lut3D identity_3d(int dim);
Lut1DTriple identity_1d_triple(int bins);
/// basis[0] = identity, remaining grids zero.
BasisLutBank make_basis_bank(int count, int dim);

double apply_1d(const Lut1D& lut, double x) noexcept;

Triple apply_3d(const Lut3D& lut, const Triple& c) noexcept;
/// Trilinear interpolation without the final [0,1] clamp.
Triple apply_3d_unclamped(const Lut3D& lut, const Triple& c) noexcept;

Lut3D fuse(const BasisLutBank& bank, std::span<const double> weights);

struct Lut1DGrad {
  std::array<int, 2> index{};
  std::array<double, 2> entry_grad{};
  double grad_x = 0.0;
};

Lut1DGrad apply_1d_backward(const Lut1D& lut, double x, double upstream) noexcept;

/// Sparse gradient of apply_3d: the grid gradient at (corner_node[n], ch) is
/// corner_weight[n] * channel_grad[ch]; every other grid entry gets zero.
struct Lut3DGrad {
  std::array<std::size_t, 8> corner_node{};
  std::array<double, 8> corner_weight{};
  Triple channel_grad{};
  Triple grad_c{};

  void accumulate(std::span<double> grid_grad) const noexcept;
};

Lut3DGrad apply_3d_backward(const Lut3D& lut, const Triple& c,
                            const Triple& upstream) noexcept;

double smoothness_penalty(const Lut1D& lut) noexcept;
double smoothness_penalty(const Lut1DTriple& luts) noexcept;
double smoothness_penalty(const Lut3D& lut) noexcept;
double smoothness_penalty(const BasisLutBank& bank) noexcept;
/// Penalty of a fused transform: grid smoothness plus the squared L2 norm of
/// the fusion weights.
double smoothness_penalty(const Lut3D& fused, std::span<const double> weights) noexcept;

double monotonicity_penalty(const Lut1D& lut) noexcept;
double monotonicity_penalty(const Lut1DTriple& luts) noexcept;
double monotonicity_penalty(const Lut3D& lut) noexcept;
double monotonicity_penalty(const BasisLutBank& bank) noexcept;

// Backward passes add scale * dPenalty/dEntry into the supplied buffers.
void smoothness_backward(const Lut1D& lut, double scale, std::span<double> grad) noexcept;
void smoothness_backward(const Lut3D& lut, double scale, std::span<double> grad) noexcept;
void monotonicity_backward(const Lut1D& lut, double scale, std::span<double> grad) noexcept;
void monotonicity_backward(const Lut3D& lut, double scale, std::span<double> grad) noexcept;

// .cube interchange (see docs/cube_format.md).
void write_cube(std::ostream& out, const Lut3D& lut, const std::string& title = "qglut");
void write_cube(const std::filesystem::path& path, const Lut3D& lut,
                const std::string& title = "qglut");
Lut3D read_cube(std::istream& in);
Lut3D read_cube(const std::filesystem::path& path);

}  // namespace qglut
