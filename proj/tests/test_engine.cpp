#include <doctest.h>

#include <memory>
#include <random>
#include <thread>

#include "qglut/engine.hpp"
#include "qglut/pipeline.hpp"
#include "support/expect.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace qglut;

namespace {

std::shared_ptr<const ModelCheckpoint> identity_model(bool with_centers = true) {
  auto c = std::make_shared<ModelCheckpoint>(make_checkpoint(ArchitectureConfig{}, 1));
  if (with_centers) c->centers = monk_reference_centers();
  return c;
}

std::shared_ptr<const ModelCheckpoint> random_model(std::uint64_t seed) {
  ArchitectureConfig arch = testing::gradcheck_arch();
  std::mt19937_64 rng(seed);
  auto c = std::make_shared<ModelCheckpoint>(make_checkpoint(arch, seed));
  c->params = testing::perturbed_params(arch, rng);
  c->centers = monk_reference_centers();
  return c;
}

EnhanceRequest request(const ImageBuffer& img, double score, LabelRequest label) {
  EnhanceRequest r;
  r.image = img;
  r.score = score;
  r.label = label;
  return r;
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("identity checkpoint reproduces the input") {
    Engine e(identity_model());
    ImageBuffer img = testing::synthetic_raw(40, 60, 12, 18, 11);
    for (double s : {-1.0, 0.0, 0.7}) {
      EnhanceResult r = e.enhance(request(img, s, LabelRequest::explicit_label(4)));
      CHECK(max_abs_difference(r.image, img) < 1e-3);
      CHECK(r.labels == std::vector<int>{4});
      CHECK(r.warnings.empty());
    }
    const std::vector<double> zeros{0.0, 0.0};
    EnhanceResult two = e.enhance_multi_round(img, zeros, LabelRequest::automatic());
    CHECK(max_abs_difference(two.image, img) < 2e-3);
    CHECK(two.labels.size() == 2);
  }

  TEST_CASE("rounds and multi-round agree") {
    Engine e(random_model(71));
    ImageBuffer img = testing::synthetic_raw(20, 55, 15, 20, 12);
    EnhanceRequest one = request(img, 0.6, LabelRequest::explicit_label(7));
    auto gen = e.generate(img, 0.6, 7);
    ImageBuffer manual = render(img, &gen.luts, gen.fused);
    CHECK(e.enhance(one).image == manual);

    EnhanceRequest three = one;
    three.rounds = 3;
    const std::vector<double> s3{0.6, 0.6, 0.6};
    CHECK(e.enhance(three).image ==
          e.enhance_multi_round(img, s3, LabelRequest::explicit_label(7)).image);
    ImageBuffer chained = img;
    for (int i = 0; i < 3; ++i) chained = e.enhance(request(chained, 0.6, LabelRequest::explicit_label(7))).image;
    CHECK(e.enhance(three).image == chained);

    three.rounds = 0;
    CHECK_CODE(e.enhance(three), ErrorCode::InvalidArgument);
    CHECK_CODE(e.enhance_multi_round(img, {}, LabelRequest::explicit_label(7)), ErrorCode::InvalidArgument);
  }

  TEST_CASE("label resolution") {
    Engine e(identity_model());
    ImageBuffer img = ImageBuffer::filled(10, 10, 0.9f, 0.75f, 0.65f);
    const int expected = classify(srgb_to_lab(RgbPixel(0.9f, 0.75f, 0.65f)), monk_reference_centers());
    CHECK(e.resolve_label(img, LabelRequest::automatic(), nullptr) == expected);

    // Only the central crop is consulted when no mask is given.
    ImageBuffer framed = img;
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 10; ++x) {
        if (x >= 2 && x < 7 && y >= 2 && y < 7) continue;
        float* p = framed.pixel(x, y);
        p[0] = p[1] = p[2] = 0.0f;
      }
    }
    CHECK(e.resolve_label(framed, LabelRequest::automatic(), nullptr) == expected);
    Mask corner{10, 10, std::vector<std::uint8_t>(100, 0)};
    corner.bits[0] = 1;
    CHECK(e.resolve_label(framed, LabelRequest::automatic(), &corner) ==
          classify(LabPixel(0, 0, 0), monk_reference_centers()));

    CHECK_CODE(e.resolve_label(img, LabelRequest::absent(), nullptr), ErrorCode::UnresolvedLabel);
    CHECK_CODE(e.resolve_label(img, LabelRequest::explicit_label(12), nullptr), ErrorCode::LabelOutOfRange);
    Engine bare(identity_model(false));
    CHECK_CODE(bare.resolve_label(img, LabelRequest::automatic(), nullptr), ErrorCode::UnresolvedLabel);

    auto free = std::make_shared<ModelCheckpoint>(*identity_model());
    free->arch.use_label = false;
    free->params = init_params(free->arch, 1);
    Engine nolabel(free);
    CHECK_FALSE(nolabel.resolve_label(img, LabelRequest::absent(), nullptr).has_value());
    CHECK(nolabel.enhance(request(img, 0.2, LabelRequest::absent())).labels.empty());

    CHECK(LabelRequest::parse("auto").kind == LabelRequest::Kind::Auto);
    CHECK(LabelRequest::parse("none").kind == LabelRequest::Kind::Absent);
    CHECK(LabelRequest::parse("10").value == 10);
    CHECK_CODE(LabelRequest::parse("3x"), ErrorCode::InvalidArgument);
    CHECK_CODE(LabelRequest::parse("0"), ErrorCode::LabelOutOfRange);
  }

  TEST_CASE("extended score range") {
    ImageBuffer img = testing::synthetic_raw(16, 60, 10, 15, 13);
    Engine lenient(random_model(72));
    EnhanceResult r = lenient.enhance(request(img, 3.0, LabelRequest::explicit_label(2)));
    CHECK(r.warnings.size() == 1);
    CHECK(r.image.width() == 16);
    EngineOptions strict;
    strict.strict_range = true;
    Engine hard(random_model(72), strict);
    CHECK_CODE(hard.enhance(request(img, 3.0, LabelRequest::explicit_label(2))), ErrorCode::ScoreOutOfGuideRange);
    CHECK_CODE(lenient.enhance(request(img, std::nan(""), LabelRequest::explicit_label(2))),
               ErrorCode::ScoreOutOfRange);
  }

  TEST_CASE("full resolution for any size") {
    Engine e(random_model(73));
    for (auto [w, h] : {std::pair{1, 1}, std::pair{1, 7}, std::pair{300, 2}, std::pair{33, 65}}) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(w * 1000 + h));
      ImageBuffer img = testing::random_image(rng, w, h);
      ImageBuffer out = e.enhance(request(img, -0.5, LabelRequest::automatic())).image;
      CHECK(out.width() == w);
      CHECK(out.height() == h);
      CHECK_NOTHROW(out.validate());
    }
    CHECK_CODE(e.enhance(request(ImageBuffer(), 0, LabelRequest::automatic())), ErrorCode::InvalidImage);
  }

  TEST_CASE("deterministic and thread-safe") {
    Engine e(random_model(74));
    ImageBuffer img = testing::synthetic_raw(24, 50, 20, 25, 14);
    const auto reference = encode_png(e.enhance(request(img, 0.9, LabelRequest::automatic())).image);
    std::vector<std::vector<std::uint8_t>> got(4);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t) {
      pool.emplace_back([&, t] {
        got[static_cast<std::size_t>(t)] = encode_png(e.enhance(request(img, 0.9, LabelRequest::automatic())).image);
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& g : got) CHECK(g == reference);
  }

  TEST_CASE("1D stage is skipped when disabled") {
    auto base = random_model(75);
    auto no1d = std::make_shared<ModelCheckpoint>(*base);
    no1d->arch.use_1d_luts = false;
    Engine e(no1d);
    ImageBuffer img = testing::synthetic_raw(12, 60, 10, 20, 15);
    auto gen = e.generate(img, 0.1, 3);
    CHECK(e.enhance(request(img, 0.1, LabelRequest::explicit_label(3))).image ==
          render(img, nullptr, gen.fused));
  }
}
