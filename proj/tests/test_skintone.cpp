#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "qglut/skintone.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"

using namespace qglut;

namespace {

std::array<double, 3> arr(const LabPixel& p) { return {p.l, p.a, p.b}; }

std::vector<LabPixel> blobs(std::mt19937_64& rng, const std::vector<LabPixel>& means, int per,
                            double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<LabPixel> pts;
  for (const auto& m : means) {
    for (int i = 0; i < per; ++i) pts.emplace_back(m.l + n(rng), m.a + n(rng), m.b + n(rng));
  }
  return pts;
}

}  // namespace

TEST_SUITE("skintone") {
  TEST_CASE("mean skin colour") {
    ImageBuffer solid = ImageBuffer::filled(6, 4, 0.8f, 0.6f, 0.5f);
    LabPixel m = mean_skin_color(solid, Mask::full(6, 4));
    LabPixel ref = srgb_to_lab(RgbPixel(0.8f, 0.6f, 0.5f));
    CHECK(m.l == doctest::Approx(ref.l).epsilon(1e-12));
    CHECK(m.a == doctest::Approx(ref.a).epsilon(1e-12));
    CHECK(m.b == doctest::Approx(ref.b).epsilon(1e-12));

    ImageBuffer half(2, 2);
    for (int x = 0; x < 2; ++x) {
      float* p = half.pixel(x, 0);
      p[0] = p[1] = p[2] = 1.0f;
    }
    LabPixel mid = mean_skin_color(half, Mask::full(2, 2));
    CHECK(mid.l == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(std::abs(mid.a) < 1e-3);
    CHECK(std::abs(mid.b) < 1e-3);

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageBuffer img(9, 7);
    for (float& v : img.data()) v = u(rng);
    Mask mask{9, 7, std::vector<std::uint8_t>(63, 0)};
    std::array<long double, 3> sum{0, 0, 0};
    int n = 0;
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 9; ++x) {
        if (u(rng) < 0.4f) continue;
        mask.bits[static_cast<std::size_t>(y) * 9 + x] = 1;
        const float* p = img.pixel(x, y);
        LabPixel l = srgb_to_lab(RgbPixel(p[0], p[1], p[2]));
        sum[0] += l.l;
        sum[1] += l.a;
        sum[2] += l.b;
        ++n;
      }
    }
    LabPixel got = mean_skin_color(img, mask);
    CHECK(got.l == doctest::Approx(static_cast<double>(sum[0] / n)).epsilon(1e-12));
    CHECK(got.a == doctest::Approx(static_cast<double>(sum[1] / n)).epsilon(1e-12));
    CHECK(got.b == doctest::Approx(static_cast<double>(sum[2] / n)).epsilon(1e-12));

    CHECK_CODE(mean_skin_color(img, Mask{9, 7, std::vector<std::uint8_t>(63, 0)}),
               ErrorCode::EmptyMask);
    CHECK_CODE(mean_skin_color(img, Mask::full(3, 3)), ErrorCode::DimensionMismatch);
    CHECK(central_crop_mask(1, 1).count() == 1);
    CHECK(central_crop_mask(10, 8).count() == 20);
  }

  TEST_CASE("k-means recovers exact points") {
    std::vector<LabPixel> distinct;
    for (int i = 0; i < 10; ++i) distinct.emplace_back(5.0 + 9.0 * i, (i % 3) * 20.0 - 20.0, (i % 4) * 10.0);
    std::vector<LabPixel> pts;
    for (int r = 0; r < 10; ++r) pts.insert(pts.end(), distinct.begin(), distinct.end());
    KMeansResult res = kmeans_lab(pts, {10, 3});
    REQUIRE(res.centers.size() == 10);
    for (int i = 0; i < 10; ++i) {
      CHECK(res.centers.centers[i].l == distinct[i].l);
      CHECK(res.centers.centers[i].a == distinct[i].a);
      CHECK(res.centers.centers[i].b == distinct[i].b);
    }
  }

  TEST_CASE("k-means on three Gaussian blobs") {
    std::mt19937_64 rng(42);
    std::vector<LabPixel> means{{30, 10, 10}, {60, -20, 30}, {85, 25, -15}};
    auto pts = blobs(rng, means, 400, 1.0);
    KMeansResult res = kmeans_lab(pts, {3, 5});
    REQUIRE(res.centers.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(oracle::dist(arr(res.centers.centers[i]), arr(means[i])) < 0.5);
    }
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
      CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-9);
    }
    CHECK(silhouette(pts, res.labels) > 0.8);
    KMeansResult again = kmeans_lab(pts, {3, 5});
    for (int i = 0; i < 3; ++i) CHECK(arr(again.centers.centers[i]) == arr(res.centers.centers[i]));
  }

  TEST_CASE("k-means preconditions") {
    std::vector<LabPixel> two{{1, 1, 1}, {2, 2, 2}};
    CHECK_CODE(kmeans_lab(two, {3, 0}), ErrorCode::TooFewPoints);
    std::vector<LabPixel> same(20, LabPixel{5, 5, 5});
    CHECK_CODE(kmeans_lab(same, {2, 0}), ErrorCode::TooFewPoints);
  }

  TEST_CASE("classification") {
    SkinToneCenters c;
    for (int i = 0; i < 10; ++i) c.centers.emplace_back(10.0 * i, 0, 0);
    for (int i = 0; i < 10; ++i) CHECK(classify(c.centers[i], c) == i + 1);
    CHECK(classify(LabPixel(15, 0, 0), c) == 2);
    CHECK(classify(LabPixel(35, 0, 0), c) == 4);

    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(-60, 60);
    SkinToneCenters rc;
    for (int i = 0; i < 10; ++i) rc.centers.emplace_back(50 + u(rng) / 2, u(rng), u(rng));
    for (int n = 0; n < 100; ++n) {
      LabPixel p(50 + u(rng) / 2, u(rng), u(rng));
      int best = 0;
      for (int i = 1; i < 10; ++i) {
        if (oracle::dist(arr(p), arr(rc.centers[i])) < oracle::dist(arr(p), arr(rc.centers[best]))) best = i;
      }
      CHECK(classify(p, rc) == best + 1);
    }
  }

  TEST_CASE("silhouette") {
    std::vector<LabPixel> pts{{0, 0, 0}, {1, 0, 0}, {60, 0, 0}, {61, 0, 0}};
    std::vector<int> lab{1, 1, 2, 2};
    CHECK(silhouette(pts, lab) > 0.95);
    std::vector<int> one{1, 1, 1, 1};
    CHECK_CODE(silhouette(pts, one), ErrorCode::DegenerateClustering);
    std::vector<int> short_labels{1, 2};
    CHECK_CODE(silhouette(pts, short_labels), ErrorCode::DimensionMismatch);

    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(-50, 50);
    std::uniform_int_distribution<int> l3(1, 3);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<LabPixel> p;
      std::vector<std::array<double, 3>> raw;
      std::vector<int> labels;
      for (int i = 0; i < 12; ++i) {
        p.emplace_back(50 + u(rng) / 2, u(rng), u(rng));
        raw.push_back(arr(p.back()));
        labels.push_back(i < 3 ? i + 1 : l3(rng));
      }
      CHECK(std::abs(silhouette(p, labels) - static_cast<double>(oracle::silhouette(raw, labels))) < 1e-9);

      // Invariance under a rigid motion (rotation in the a-b plane plus shift).
      std::vector<LabPixel> moved;
      const double th = 0.7;
      for (auto& q : p) {
        moved.emplace_back(q.l - 3.0, std::cos(th) * q.a - std::sin(th) * q.b + 4.0,
                           std::sin(th) * q.a + std::cos(th) * q.b - 2.0);
      }
      CHECK(std::abs(silhouette(moved, labels) - silhouette(p, labels)) < 1e-9);
    }
  }

  TEST_CASE("centre files") {
    SkinToneCenters m = monk_reference_centers();
    CHECK(m.size() == 10);
    CHECK(m.provenance == CenterProvenance::Imported);
    CHECK_NOTHROW(m.validate());
    CHECK(m.centers.front().l > m.centers.back().l);

    std::stringstream ss;
    write_centers(ss, m);
    CHECK(ss.str().rfind("provenance IMPORTED", 0) == 0);
    SkinToneCenters back = read_centers(ss);
    CHECK(back.provenance == CenterProvenance::Imported);
    for (int i = 0; i < 10; ++i) {
      CHECK(back.centers[i].l == m.centers[i].l);
      CHECK(back.centers[i].a == m.centers[i].a);
      CHECK(back.centers[i].b == m.centers[i].b);
    }

    SkinToneCenters dup;
    dup.centers = {LabPixel(1, 2, 3), LabPixel(1, 2, 3)};
    CHECK_CODE(dup.validate(), ErrorCode::InvalidArgument);
    std::istringstream no_header("50 10 10\n");
    CHECK_CODE(read_centers(no_header), ErrorCode::InvalidArgument);
  }
}
