#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "qglut/color.hpp"
#include "qglut/error.hpp"
#include "support/oracles.hpp"

using namespace qglut;

TEST_SUITE("color") {
  TEST_CASE("reference white and black") {
    LabPixel w = srgb_to_lab(RgbPixel(1, 1, 1));
    CHECK(w.l == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(std::abs(w.a) < 1e-3);
    CHECK(std::abs(w.b) < 1e-3);
    LabPixel k = srgb_to_lab(RgbPixel(0, 0, 0));
    CHECK(k.l == 0.0);
    CHECK(k.a == 0.0);
    CHECK(k.b == 0.0);

    RgbPixel back = lab_to_srgb(LabPixel(100, 0, 0));
    CHECK(std::abs(back.r - 1.0) < 1e-4);
    CHECK(std::abs(back.g - 1.0) < 1e-4);
    CHECK(std::abs(back.b - 1.0) < 1e-4);
    RgbPixel zero = lab_to_srgb(LabPixel(0, 0, 0));
    CHECK(zero.r == 0.0);
    CHECK(zero.g == 0.0);
    CHECK(zero.b == 0.0);
  }

  TEST_CASE("mid gray against the extended-precision formulas") {
    const auto ref = oracle::srgb_to_lab(0.5L, 0.5L, 0.5L);
    LabPixel g = srgb_to_lab(RgbPixel(0.5, 0.5, 0.5));
    CHECK(std::abs(g.l - static_cast<double>(ref[0])) < 1e-4);
    CHECK(std::abs(g.a) < 1e-3);
    CHECK(std::abs(g.b) < 1e-3);
  }

  TEST_CASE("random colours against the textbook conversion") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 500; ++n) {
      const double r = u(rng), g = u(rng), b = u(rng);
      const auto ref = oracle::srgb_to_lab(r, g, b);
      LabPixel lab = srgb_to_lab(RgbPixel(r, g, b));
      // The library derives the white point from the primaries, which moves
      // a* and b* by at most a few thousandths against the tabulated D65.
      CHECK(std::abs(lab.l - static_cast<double>(ref[0])) < 1e-4);
      CHECK(std::abs(lab.a - static_cast<double>(ref[1])) < 5e-3);
      CHECK(std::abs(lab.b - static_cast<double>(ref[2])) < 5e-3);
    }
  }

  TEST_CASE("round trip of random in-gamut colours") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      RgbPixel x(u(rng), u(rng), u(rng));
      RgbPixel y = lab_to_srgb(srgb_to_lab(x));
      worst = std::max({worst, std::abs(x.r - y.r), std::abs(x.g - y.g), std::abs(x.b - y.b)});
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("neutral axis and gray monotonicity") {
    double prev = -1.0;
    for (int i = 0; i <= 255; ++i) {
      const double v = i / 255.0;
      LabPixel p = srgb_to_lab(RgbPixel(v, v, v));
      CHECK(std::abs(p.a) < 1e-3);
      CHECK(std::abs(p.b) < 1e-3);
      CHECK(p.l > prev);
      prev = p.l;
    }
  }

  TEST_CASE("normalization endpoints and exact inverse") {
    auto w = lab_normalize(LabPixel(100, 0, 0));
    CHECK(w[0] == 1.0);
    CHECK(w[1] == 0.5);
    CHECK(w[2] == 0.5);
    auto z = lab_normalize(LabPixel(0, -128, -128));
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);
    CHECK(z[2] == 0.0);
    for (int i = 0; i <= 8; ++i) {
      for (int j = 0; j <= 8; ++j) {
        LabPixel p(12.5 * i, -128 + 32.0 * j, 128 - 32.0 * j);
        LabPixel q = lab_denormalize(lab_normalize(p));
        CHECK(q.l == p.l);
        CHECK(q.a == p.a);
        CHECK(q.b == p.b);
      }
    }
  }

  TEST_CASE("clamping totality") {
    const double inf = std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    RgbPixel p(nan, -3.0, inf);
    CHECK(p.r == 0.0);
    CHECK(p.g == 0.0);
    CHECK(p.b == 1.0);
    LabPixel l(250.0, -inf, nan);
    CHECK(l.l == 100.0);
    CHECK(l.a == -128.0);
    CHECK(l.b == 0.0);
    RgbPixel out = lab_to_srgb(LabPixel(50, 128, -128));
    for (double v : out.as_triple()) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("normalized Lab to sRGB Jacobian") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 50; ++n) {
      Triple rgb{0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng)};
      Triple lab = srgb_to_normalized_lab(rgb);
      Jacobian3 jac;
      normalized_lab_to_srgb(lab, &jac);
      for (int i = 0; i < 3; ++i) {
        Triple up = lab, dn = lab;
        up[i] += 1e-6;
        dn[i] -= 1e-6;
        Triple fu = normalized_lab_to_srgb(up, nullptr);
        Triple fd = normalized_lab_to_srgb(dn, nullptr);
        for (int o = 0; o < 3; ++o) {
          const double num = (fu[o] - fd[o]) / 2e-6;
          CHECK(std::abs(jac[o][i] - num) <= 1e-5 * std::max(1.0, std::abs(num)));
        }
      }
    }
  }

  TEST_CASE("image conversion") {
    ImageBuffer white = ImageBuffer::filled(2, 2, 1.0f, 1.0f, 1.0f);
    ImageBuffer lab = convert_image(white, ColorSpace::LabNormalized);
    CHECK(lab.colorspace() == ColorSpace::LabNormalized);
    CHECK(lab.width() == 2);
    CHECK(lab.height() == 2);
    for (std::size_t i = 0; i < lab.pixel_count(); ++i) {
      CHECK(std::abs(lab.data()[i * 3] - 1.0) < 1e-4);
      CHECK(std::abs(lab.data()[i * 3 + 1] - 0.5) < 1e-4);
      CHECK(std::abs(lab.data()[i * 3 + 2] - 0.5) < 1e-4);
    }

    std::mt19937_64 rng(14);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageBuffer img(8, 8);
    for (float& v : img.data()) v = u(rng);
    ImageBuffer back = convert_image(convert_image(img, ColorSpace::LabNormalized), ColorSpace::Srgb);
    CHECK(max_abs_difference(img, back) < 1e-4);

    try {
      (void)convert_image(img, ColorSpace::Srgb);
      FAIL("expected UnsupportedConversion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedConversion);
    }
    try {
      (void)convert_image(ImageBuffer(), ColorSpace::LabNormalized);
      FAIL("expected InvalidImage");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidImage);
    }
  }
}
