#pragma once

// Synthetic data shared by the trainer, engine and acceptance suites.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qglut/color.hpp"
#include "qglut/image.hpp"
#include "qglut/trainer.hpp"

namespace qglut::testing {

/// Smooth portrait-like raster: a base Lab colour with a lightness gradient,
/// a soft highlight blob and mild chroma variation.
inline ImageBuffer synthetic_raw(int size, double base_l, double base_a, double base_b,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cx = 0.3 + 0.4 * u(rng);
  const double cy = 0.3 + 0.4 * u(rng);
  const double tilt = 10.0 * (u(rng) - 0.5);
  ImageBuffer img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / size;
      const double fy = (y + 0.5) / size;
      const double r2 = (fx - cx) * (fx - cx) + (fy - cy) * (fy - cy);
      const double blob = std::exp(-r2 / 0.05);
      LabPixel lab(base_l + tilt * (fy - 0.5) + 12.0 * blob - 6.0,
                   base_a + 4.0 * std::sin(6.0 * fx) , base_b + 4.0 * std::cos(5.0 * fy));
      RgbPixel rgb = lab_to_srgb(lab);
      float* p = img.pixel(x, y);
      p[0] = static_cast<float>(rgb.r);
      p[1] = static_cast<float>(rgb.g);
      p[2] = static_cast<float>(rgb.b);
    }
  }
  return img;
}

/// Mean Lab b* of an image.
inline double mean_lab_b(const ImageBuffer& img) {
  double s = 0.0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const float* p = img.data().data() + i * 3;
    s += srgb_to_lab(RgbPixel(p[0], p[1], p[2])).b;
  }
  return s / static_cast<double>(img.pixel_count());
}

inline constexpr double kFixtureShifts[9] = {-20, -15, -10, -5, 0, 5, 10, 15, 20};

/// Score assigned to a b* shift in the synthetic fixture.
inline double fixture_score(double delta_b) { return delta_b / 20.0; }

struct RawSpec {
  double l, a, b;
};

inline std::vector<RawSpec> fixture_raw_specs() {
  return {{62, 14, 20}, {55, 16, 24}, {70, 10, 16}, {48, 18, 26}, {66, 12, 22}};
}

/// 5 raws x 9 b* shifts, scores delta/20, fixed label.
inline std::vector<TrainingPair> fixture_pairs(int size = 64, int label = 5) {
  std::vector<TrainingPair> pairs;
  auto specs = fixture_raw_specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    ImageBuffer raw = synthetic_raw(size, specs[i].l, specs[i].a, specs[i].b, 100 + i);
    for (double d : kFixtureShifts) {
      TrainingPair p;
      p.raw_id = "raw" + std::to_string(i);
      p.raw = raw;
      p.target = synth_perturb(raw, {0.0, 0.0, d}, PerturbMode::SkinTone);
      p.score = fixture_score(d);
      p.label = label;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

inline ImageBuffer fixture_holdout(int size = 64) {
  return synthetic_raw(size, 60, 15, 21, 999);
}

}  // namespace qglut::testing
