#include "qglut/lut.hpp"

#include <algorithm>
#include <cmath>

#include "qglut/error.hpp"

namespace qglut {
namespace {

struct Cell {
  int lo = 0;
  double frac = 0.0;
  bool inside = true;  // false when the coordinate was clamped
};

// Locates the lattice segment for x in [0,1] over `n` nodes. Coordinates
// within a few ulps of a node snap to it so that lattice inputs such as k/(n-1)
// reproduce stored entries exactly.
Cell locate(double x, int n) noexcept {
  Cell cell;
  if (!(x >= 0.0 && x <= 1.0)) {
    cell.inside = false;
    x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, 1.0);
  }
  const double t = x * (n - 1);
  double r = std::nearbyint(t);
  double pos = std::abs(t - r) <= 1e-12 * (n - 1) ? r : t;
  int lo = std::min(static_cast<int>(std::floor(pos)), n - 2);
  cell.lo = lo;
  cell.frac = pos - lo;
  return cell;
}

void require_dim(int n, const char* what) {
  if (n < 2) fail(ErrorCode::InvalidSize, std::string(what) + " must be at least 2");
}

}  // namespace

Lut1D identity_1d(int bins) {
  require_dim(bins, "1D LUT bin count");
  Lut1D lut;
  lut.entries.resize(static_cast<std::size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    lut.entries[static_cast<std::size_t>(i)] = static_cast<double>(i) / (bins - 1);
  }
  return lut;
}

Lut1DTriple identity_1d_triple(int bins) {
  auto id = identity_1d(bins);
  return {id, id, id};
}

Lut3D identity_3d(int dim) {
  require_dim(dim, "3D LUT dimension");
  Lut3D lut;
  lut.dim = dim;
  lut.grid.resize(lut.node_count() * 3);
  const double step = 1.0 / (dim - 1);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      for (int k = 0; k < dim; ++k) {
        lut.at(i, j, k, 0) = k * step;
        lut.at(i, j, k, 1) = j * step;
        lut.at(i, j, k, 2) = i * step;
      }
    }
  }
  return lut;
}

BasisLutBank make_basis_bank(int count, int dim) {
  if (count < 1) fail(ErrorCode::InvalidSize, "basis count must be positive");
  BasisLutBank bank;
  bank.basis.push_back(identity_3d(dim));
  for (int n = 1; n < count; ++n) {
    Lut3D zero;
    zero.dim = dim;
    zero.grid.assign(zero.node_count() * 3, 0.0);
    bank.basis.push_back(std::move(zero));
  }
  return bank;
}

double apply_1d(const Lut1D& lut, double x) noexcept {
  Cell c = locate(x, lut.size());
  const auto& e = lut.entries;
  return (1.0 - c.frac) * e[c.lo] + c.frac * e[c.lo + 1];
}

Lut1DGrad apply_1d_backward(const Lut1D& lut, double x, double upstream) noexcept {
  Cell c = locate(x, lut.size());
  const auto& e = lut.entries;
  Lut1DGrad g;
  g.index = {c.lo, c.lo + 1};
  g.entry_grad = {(1.0 - c.frac) * upstream, c.frac * upstream};
  g.grad_x = c.inside ? upstream * (e[c.lo + 1] - e[c.lo]) * (lut.size() - 1) : 0.0;
  return g;
}

namespace {

struct Corners {
  std::array<std::size_t, 8> node{};
  std::array<double, 8> weight{};
  Cell r, g, b;
};

// Corner n has bit 0 -> red (k), bit 1 -> green (j), bit 2 -> blue (i).
Corners corners(const Lut3D& lut, const Triple& c) noexcept {
  Corners out;
  out.r = locate(c[0], lut.dim);
  out.g = locate(c[1], lut.dim);
  out.b = locate(c[2], lut.dim);
  for (int n = 0; n < 8; ++n) {
    int dk = n & 1;
    int dj = (n >> 1) & 1;
    int di = (n >> 2) & 1;
    double wr = dk ? out.r.frac : 1.0 - out.r.frac;
    double wg = dj ? out.g.frac : 1.0 - out.g.frac;
    double wb = di ? out.b.frac : 1.0 - out.b.frac;
    out.node[n] = lut.node(out.b.lo + di, out.g.lo + dj, out.r.lo + dk);
    out.weight[n] = wb * wg * wr;
  }
  return out;
}

}  // namespace

Triple apply_3d_unclamped(const Lut3D& lut, const Triple& c) noexcept {
  Corners cs = corners(lut, c);
  Triple out{0.0, 0.0, 0.0};
  for (int n = 0; n < 8; ++n) {
    const double* e = lut.grid.data() + cs.node[n] * 3;
    for (int ch = 0; ch < 3; ++ch) out[ch] += cs.weight[n] * e[ch];
  }
  return out;
}

Triple apply_3d(const Lut3D& lut, const Triple& c) noexcept {
  Triple out = apply_3d_unclamped(lut, c);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Lut3DGrad apply_3d_backward(const Lut3D& lut, const Triple& c,
                            const Triple& upstream) noexcept {
  Corners cs = corners(lut, c);
  Lut3DGrad g;
  g.corner_node = cs.node;
  g.corner_weight = cs.weight;

  Triple raw{0.0, 0.0, 0.0};
  for (int n = 0; n < 8; ++n) {
    const double* e = lut.grid.data() + cs.node[n] * 3;
    for (int ch = 0; ch < 3; ++ch) raw[ch] += cs.weight[n] * e[ch];
  }
  for (int ch = 0; ch < 3; ++ch) {
    g.channel_grad[ch] = (raw[ch] >= 0.0 && raw[ch] <= 1.0) ? upstream[ch] : 0.0;
  }

  // d(weight_n)/d(coordinate) for each input axis.
  const double scale = lut.dim - 1;
  const std::array<const Cell*, 3> cells{&cs.r, &cs.g, &cs.b};
  for (int axis = 0; axis < 3; ++axis) {
    if (!cells[axis]->inside) {
      g.grad_c[axis] = 0.0;
      continue;
    }
    double acc = 0.0;
    for (int n = 0; n < 8; ++n) {
      double dw = scale;
      for (int other = 0; other < 3; ++other) {
        int bit = (n >> other) & 1;
        double f = cells[other]->frac;
        if (other == axis) {
          dw *= bit ? 1.0 : -1.0;
        } else {
          dw *= bit ? f : 1.0 - f;
        }
      }
      const double* e = lut.grid.data() + cs.node[n] * 3;
      for (int ch = 0; ch < 3; ++ch) acc += dw * e[ch] * g.channel_grad[ch];
    }
    g.grad_c[axis] = acc;
  }
  return g;
}

void Lut3DGrad::accumulate(std::span<double> grid_grad) const noexcept {
  for (int n = 0; n < 8; ++n) {
    double* dst = grid_grad.data() + corner_node[n] * 3;
    for (int ch = 0; ch < 3; ++ch) dst[ch] += corner_weight[n] * channel_grad[ch];
  }
}

Lut3D fuse(const BasisLutBank& bank, std::span<const double> weights) {
  if (bank.basis.empty()) fail(ErrorCode::DimensionMismatch, "empty basis bank");
  if (weights.size() != bank.basis.size()) {
    fail(ErrorCode::DimensionMismatch,
         "fusion weight count " + std::to_string(weights.size()) +
             " does not match basis count " + std::to_string(bank.basis.size()));
  }
  Lut3D out;
  out.dim = bank.dim();
  out.grid.assign(bank.basis.front().grid.size(), 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const auto& src = bank.basis[k];
    if (src.dim != out.dim) fail(ErrorCode::DimensionMismatch, "basis grids differ in size");
    const double w = weights[k];
    for (std::size_t n = 0; n < out.grid.size(); ++n) out.grid[n] += w * src.grid[n];
  }
  return out;
}

// --- penalties -------------------------------------------------------------

namespace {

// Offset between neighbours along axis (0 = red/k, 1 = green/j, 2 = blue/i).
std::size_t axis_stride(int dim, int axis) noexcept {
  std::size_t s = 1;
  for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(dim);
  return s * 3;
}

template <typename Visit>
void for_each_adjacent(const Lut3D& lut, int axis, Visit&& visit) {
  const int d = lut.dim;
  const std::size_t stride = axis_stride(d, axis);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      for (int k = 0; k < d; ++k) {
        int coord = axis == 0 ? k : (axis == 1 ? j : i);
        if (coord == d - 1) continue;
        std::size_t base = lut.node(i, j, k) * 3;
        visit(base, base + stride);
      }
    }
  }
}

}  // namespace

double smoothness_penalty(const Lut1D& lut) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < lut.entries.size(); ++i) {
    double d = lut.entries[i + 1] - lut.entries[i];
    s += d * d;
  }
  return s;
}

double smoothness_penalty(const Lut1DTriple& luts) noexcept {
  return smoothness_penalty(luts.l) + smoothness_penalty(luts.a) +
         smoothness_penalty(luts.b);
}

double smoothness_penalty(const Lut3D& lut) noexcept {
  double s = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    for_each_adjacent(lut, axis, [&](std::size_t lo, std::size_t hi) {
      for (int ch = 0; ch < 3; ++ch) {
        double d = lut.grid[hi + ch] - lut.grid[lo + ch];
        s += d * d;
      }
    });
  }
  return s;
}

double smoothness_penalty(const BasisLutBank& bank) noexcept {
  double s = 0.0;
  for (const auto& b : bank.basis) s += smoothness_penalty(b);
  return s;
}

double smoothness_penalty(const Lut3D& fused, std::span<const double> weights) noexcept {
  double s = smoothness_penalty(fused);
  for (double w : weights) s += w * w;
  return s;
}

void smoothness_backward(const Lut1D& lut, double scale, std::span<double> grad) noexcept {
  for (std::size_t i = 0; i + 1 < lut.entries.size(); ++i) {
    double d = 2.0 * scale * (lut.entries[i + 1] - lut.entries[i]);
    grad[i + 1] += d;
    grad[i] -= d;
  }
}

void smoothness_backward(const Lut3D& lut, double scale, std::span<double> grad) noexcept {
  for (int axis = 0; axis < 3; ++axis) {
    for_each_adjacent(lut, axis, [&](std::size_t lo, std::size_t hi) {
      for (int ch = 0; ch < 3; ++ch) {
        double d = 2.0 * scale * (lut.grid[hi + ch] - lut.grid[lo + ch]);
        grad[hi + ch] += d;
        grad[lo + ch] -= d;
      }
    });
  }
}

double monotonicity_penalty(const Lut1D& lut) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < lut.entries.size(); ++i) {
    s += std::max(0.0, lut.entries[i] - lut.entries[i + 1]);
  }
  return s;
}

double monotonicity_penalty(const Lut1DTriple& luts) noexcept {
  return monotonicity_penalty(luts.l) + monotonicity_penalty(luts.a) +
         monotonicity_penalty(luts.b);
}

// Output channel c is penalized along its own input axis c.
double monotonicity_penalty(const Lut3D& lut) noexcept {
  double s = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    for_each_adjacent(lut, ch, [&](std::size_t lo, std::size_t hi) {
      s += std::max(0.0, lut.grid[lo + ch] - lut.grid[hi + ch]);
    });
  }
  return s;
}

double monotonicity_penalty(const BasisLutBank& bank) noexcept {
  double s = 0.0;
  for (const auto& b : bank.basis) s += monotonicity_penalty(b);
  return s;
}

void monotonicity_backward(const Lut1D& lut, double scale, std::span<double> grad) noexcept {
  for (std::size_t i = 0; i + 1 < lut.entries.size(); ++i) {
    if (lut.entries[i] > lut.entries[i + 1]) {
      grad[i] += scale;
      grad[i + 1] -= scale;
    }
  }
}

void monotonicity_backward(const Lut3D& lut, double scale, std::span<double> grad) noexcept {
  for (int ch = 0; ch < 3; ++ch) {
    for_each_adjacent(lut, ch, [&](std::size_t lo, std::size_t hi) {
      if (lut.grid[lo + ch] > lut.grid[hi + ch]) {
        grad[lo + ch] += scale;
        grad[hi + ch] -= scale;
      }
    });
  }
}

}  // namespace qglut
