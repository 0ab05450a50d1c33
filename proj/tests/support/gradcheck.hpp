#pragma once

// Central finite-difference checks shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "qglut/backbone.hpp"
#include "qglut/lut.hpp"
#include "qglut/pipeline.hpp"
#include "qglut/trainer.hpp"

namespace qglut::testing {

struct GradStats {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t instances = 0;
  std::string worst;

  /// Relative error |a - n| / max(|a|, |n|, floor).
  void add(double analytic, double numeric, double floor, const std::string& what) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++checked;
    if (rel > max_rel || !std::isfinite(rel)) {
      max_rel = std::isfinite(rel) ? rel : INFINITY;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s analytic=%.9g numeric=%.9g", what.c_str(), analytic,
                    numeric);
      worst = buf;
    }
  }
  void merge(const GradStats& o) {
    checked += o.checked;
    instances += o.instances;
    if (o.max_rel > max_rel) {
      max_rel = o.max_rel;
      worst = o.worst;
    }
  }
};

inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * h);
}

inline constexpr double kLutStep = 1e-4;
inline constexpr double kLutFloor = 1e-4;

/// Uniform value whose distance to every multiple of 1/(n-1) exceeds `gap`.
inline double off_lattice(std::mt19937_64& rng, int n, double gap) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const double x = u(rng);
    const double t = x * (n - 1);
    if (std::abs(t - std::round(t)) > gap * (n - 1)) return x;
  }
}

inline Lut3D random_grid(std::mt19937_64& rng, int dim, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Lut3D lut = identity_3d(dim);
  for (double& v : lut.grid) v = u(rng);
  return lut;
}

inline GradStats check_apply_1d(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> bins(2, 33);
  GradStats st;
  for (int n = 0; n < instances; ++n) {
    Lut1D lut = identity_1d(bins(rng));
    for (double& e : lut.entries) e = u(rng);
    double x = off_lattice(rng, lut.size(), 1e-3);
    const double up = u(rng);
    auto f = [&] { return up * apply_1d(lut, x); };
    Lut1DGrad g = apply_1d_backward(lut, x, up);
    st.add(g.grad_x, central_difference(f, x, kLutStep), kLutFloor, "apply_1d dx");
    for (int i = 0; i < lut.size(); ++i) {
      double a = 0.0;
      for (int s = 0; s < 2; ++s) {
        if (g.index[s] == i) a += g.entry_grad[s];
      }
      st.add(a, central_difference(f, lut.entries[i], kLutStep), kLutFloor, "apply_1d de");
    }
    ++st.instances;
  }
  return st;
}

inline GradStats check_apply_3d(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> dims(2, 9);
  GradStats st;
  for (int n = 0; n < instances; ++n) {
    const int d = dims(rng);
    // Entries inside (0.1, 0.9) keep every interpolated value off the clamp.
    Lut3D lut = random_grid(rng, d, 0.1, 0.9);
    Triple c{off_lattice(rng, d, 1e-3), off_lattice(rng, d, 1e-3), off_lattice(rng, d, 1e-3)};
    const Triple up{u(rng), u(rng), u(rng)};
    auto f = [&] {
      Triple o = apply_3d(lut, c);
      return up[0] * o[0] + up[1] * o[1] + up[2] * o[2];
    };
    Lut3DGrad g = apply_3d_backward(lut, c, up);
    for (int a = 0; a < 3; ++a) {
      st.add(g.grad_c[a], central_difference(f, c[a], kLutStep), kLutFloor, "apply_3d dc");
    }
    std::vector<double> dense(lut.grid.size(), 0.0);
    g.accumulate(dense);
    for (std::size_t i = 0; i < lut.grid.size(); ++i) {
      st.add(dense[i], central_difference(f, lut.grid[i], kLutStep), kLutFloor, "apply_3d dgrid");
    }
    ++st.instances;
  }
  return st;
}

inline GradStats check_penalties_1d(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> bins(2, 33);
  GradStats st;
  for (int n = 0; n < instances; ++n) {
    Lut1D lut = identity_1d(bins(rng));
    for (;;) {
      for (double& e : lut.entries) e = u(rng);
      bool clear = true;
      for (int i = 0; i + 1 < lut.size(); ++i) {
        clear = clear && std::abs(lut.entries[i + 1] - lut.entries[i]) > 1e-2;
      }
      if (clear) break;
    }
    const double scale = u(rng);
    std::vector<double> gs(lut.entries.size(), 0.0), gm(lut.entries.size(), 0.0);
    smoothness_backward(lut, scale, gs);
    monotonicity_backward(lut, scale, gm);
    auto fs = [&] { return scale * smoothness_penalty(lut); };
    auto fm = [&] { return scale * monotonicity_penalty(lut); };
    for (int i = 0; i < lut.size(); ++i) {
      st.add(gs[i], central_difference(fs, lut.entries[i], kLutStep), kLutFloor, "smooth1d");
      st.add(gm[i], central_difference(fm, lut.entries[i], kLutStep), kLutFloor, "mono1d");
    }
    ++st.instances;
  }
  return st;
}

inline GradStats check_penalties_3d(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> dims(2, 5);
  GradStats st;
  for (int n = 0; n < instances; ++n) {
    const int d = dims(rng);
    Lut3D lut = identity_3d(d);
    for (;;) {
      for (double& v : lut.grid) v = u(rng);
      bool clear = true;
      for (int i = 0; i < d && clear; ++i)
        for (int j = 0; j < d && clear; ++j)
          for (int k = 0; k + 1 < d && clear; ++k) {
            clear = std::abs(lut.at(i, j, k + 1, 0) - lut.at(i, j, k, 0)) > 1e-3 &&
                    std::abs(lut.at(i, k + 1, j, 1) - lut.at(i, k, j, 1)) > 1e-3 &&
                    std::abs(lut.at(k + 1, i, j, 2) - lut.at(k, i, j, 2)) > 1e-3;
          }
      if (clear) break;
    }
    const double scale = u(rng);
    std::vector<double> gs(lut.grid.size(), 0.0), gm(lut.grid.size(), 0.0);
    smoothness_backward(lut, scale, gs);
    monotonicity_backward(lut, scale, gm);
    auto fs = [&] { return scale * smoothness_penalty(lut); };
    auto fm = [&] { return scale * monotonicity_penalty(lut); };
    for (std::size_t i = 0; i < lut.grid.size(); ++i) {
      st.add(gs[i], central_difference(fs, lut.grid[i], kLutStep), kLutFloor, "smooth3d");
      st.add(gm[i], central_difference(fm, lut.grid[i], kLutStep), kLutFloor, "mono3d");
    }
    ++st.instances;
  }
  return st;
}

inline ImageBuffer random_image(std::mt19937_64& rng, int w, int h, double lo = 0.05,
                                double hi = 0.95) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageBuffer img(w, h);
  for (float& v : img.data()) v = static_cast<float>(u(rng));
  return img;
}

/// The full render chain (1D in Lab, colour conversion, 3D in RGB, MSE).
inline GradStats check_render(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GradStats st;
  for (int n = 0; n < instances; ++n) {
    ImageBuffer img = random_image(rng, 4, 3, 0.2, 0.8);
    ImageBuffer target = random_image(rng, 4, 3);
    Lut1DTriple luts = identity_1d_triple(7);
    for (int a = 0; a < 3; ++a) {
      for (double& e : luts[a].entries) e += 0.03 * u(rng);
    }
    Lut3D grid = identity_3d(4);
    for (double& v : grid.grid) v = 0.1 + 0.8 * v + 0.05 * u(rng);
    const double scale = 1.0 + std::abs(u(rng));
    auto f = [&] { return render_mse(img, {}, &luts, grid, target, scale, nullptr); };
    RenderGradients g{std::vector<double>(21, 0.0), std::vector<double>(grid.grid.size(), 0.0)};
    render_mse(img, {}, &luts, grid, target, scale, &g);
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      for (int i = 0; i < 7; ++i) {
        st.add(g.lut1d[a * 7 + i], central_difference(f, luts[a].entries[i], h), kLutFloor,
               "render d1d");
      }
    }
    for (std::size_t i = 0; i < grid.grid.size(); ++i) {
      st.add(g.grid[i], central_difference(f, grid.grid[i], h), kLutFloor, "render dgrid");
    }
    ++st.instances;
  }
  return st;
}

// --- full network -----------------------------------------------------------

inline ArchitectureConfig gradcheck_arch() {
  ArchitectureConfig arch;
  arch.input_size = 32;
  arch.lut_bins = 9;
  arch.lut_dim = 5;
  return arch;
}

/// Initialized parameters moved away from the identity so every group
/// carries gradient.
inline ParamSet<float> perturbed_params(const ArchitectureConfig& arch, std::mt19937_64& rng) {
  ParamSet<float> p = init_params(arch, rng());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto jitter = [&](std::size_t idx, double amount) {
    for (float& v : p[idx].values) v += static_cast<float>(amount * u(rng));
  };
  for (int l = 0; l < kLayers; ++l) {
    jitter(ParamLayout::conv_bias(l), 0.05);
    if (l + 1 < kLayers) {
      jitter(ParamLayout::norm_gamma(l), 0.2);
      jitter(ParamLayout::norm_beta(l), 0.1);
    }
  }
  jitter(ParamLayout::head1d_fc1_bias, 0.05);
  jitter(ParamLayout::head1d_fc2_weight, 0.02);
  jitter(ParamLayout::head1d_fc2_bias, 0.02);
  jitter(ParamLayout::head3d_fc1_bias, 0.05);
  jitter(ParamLayout::head3d_fc2_weight, 0.05);
  jitter(ParamLayout::head3d_fc2_bias, 0.05);
  auto& basis = p[ParamLayout::basis].values;
  const std::size_t per = basis.size() / static_cast<std::size_t>(arch.basis_count);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double v = i < per ? 0.1 + 0.8 * basis[i] : 0.0;
    basis[i] = static_cast<float>(v + 0.03 * u(rng));
  }
  return p;
}

inline TrainingSample random_sample(std::mt19937_64& rng, const ArchitectureConfig& arch) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TrainingSample s;
  s.raw_id = "r";
  s.raw = random_image(rng, 16, 16, 0.2, 0.8);
  s.target = random_image(rng, 16, 16, 0.1, 0.9);
  s.score = u(rng);
  if (arch.use_label) s.label = std::uniform_int_distribution<int>(1, 10)(rng);
  return s;
}

inline constexpr double kNetStep = 1e-5;
// float32 leaves ~1e-6 of cancellation residue on gradients that are exactly
// zero, so near-zero tensors are judged on absolute error.
inline constexpr double kFloatNormFloor = 1e-2;

// Shrinks the step while the one-sided slopes disagree, i.e. while the
// interval still straddles a ReLU, clamp or hinge kink.
inline double kink_aware_difference(const std::function<double()>& f, double& x) {
  const double keep = x;
  double central = 0.0;
  for (double h = kNetStep; h >= kNetStep * 1e-2; h *= 0.1) {
    const double f0 = f();
    x = keep + h;
    const double up = f();
    x = keep - h;
    const double down = f();
    x = keep;
    const double fwd = (up - f0) / h, bwd = (f0 - down) / h;
    central = 0.5 * (fwd + bwd);
    if (std::abs(fwd - bwd) <= 1e-4 * std::max({std::abs(fwd), std::abs(bwd), kLutFloor})) break;
  }
  return central;
}

/// Analytic gradients of the network loss against central differences of the
/// double-precision loss, `coords` random coordinates per tensor.
///
/// Single precision (`T = float`) is scored per tensor with the norm-wise
/// relative error ||a - n|| / max(||a||, ||n||): the float forward pass
/// carries absolute rounding noise, so isolated near-zero coordinates cannot
/// be compared element by element. Double precision is scored per element.
template <typename T>
GradStats check_network(int instances, int coords, std::uint64_t seed,
                        const ArchitectureConfig& arch = gradcheck_arch()) {
  std::mt19937_64 rng(seed);
  GradStats st;
  Backbone<T> net(arch);
  Backbone<double> dnet(arch);
  const LossWeights lambdas{1.0, 1e-2, 10.0};
  for (int n = 0; n < instances; ++n) {
    ParamSet<float> p0 = perturbed_params(arch, rng);
    TrainingSample sample = random_sample(rng, arch);
    ParamSet<T> p = p0.template cast<T>();
    ParamSet<T> grads = p.zeros_like();
    sample_loss<T>(net, p, sample, lambdas, &grads);
    ParamSet<double> pd = p0.cast<double>();
    auto f = [&] {
      ++pd.version;
      return sample_loss<double>(dnet, pd, sample, lambdas, nullptr).total;
    };
    for (std::size_t t = 0; t < p.size(); ++t) {
      const auto& g = grads[t].values;
      std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
      double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
      for (int c = 0; c < coords; ++c) {
        const std::size_t i = pick(rng);
        const double num = kink_aware_difference(f, pd[t].values[i]);
        const double ana = static_cast<double>(g[i]);
        if constexpr (std::is_same_v<T, double>) {
          st.add(ana, num, kLutFloor, p[t].name);
        } else {
          diff2 += (ana - num) * (ana - num);
          a2 += ana * ana;
          n2 += num * num;
        }
      }
      if constexpr (!std::is_same_v<T, double>) {
        const double scale = std::max(std::sqrt(std::max(a2, n2)), kFloatNormFloor);
        st.add(std::sqrt(diff2) / scale, 0.0, 1.0, p[t].name + " (norm-wise)");
      }
    }
    ++st.instances;
  }
  return st;
}

}  // namespace qglut::testing
