#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "qglut/checkpoint.hpp"
#include "support/expect.hpp"
#include "support/gradcheck.hpp"

using namespace qglut;

namespace {

ArchitectureConfig small_arch() {
  ArchitectureConfig arch;
  arch.input_size = 32;
  arch.lut_bins = 9;
  arch.lut_dim = 5;
  return arch;
}

ModelCheckpoint sample_checkpoint() {
  ArchitectureConfig arch = small_arch();
  std::mt19937_64 rng(61);
  ModelCheckpoint c = make_checkpoint(arch, 61);
  c.params = testing::perturbed_params(arch, rng);
  c.centers = monk_reference_centers();
  c.metadata = {12, 0.0123, 61};
  return c;
}

bool same_bits(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].name != b[t].name || a[t].shape != b[t].shape) return false;
    if (a[t].values.size() != b[t].values.size()) return false;
    if (std::memcmp(a[t].values.data(), b[t].values.data(), a[t].values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

// Rewrites the JSON header of a serialized checkpoint.
std::vector<std::uint8_t> with_header(const std::vector<std::uint8_t>& bytes,
                                      const std::function<void(nlohmann::json&)>& edit) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  nlohmann::json h = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  edit(h);
  const std::string text = h.dump();
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 16 + static_cast<long>(len), bytes.end());
  return out;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact") {
    ModelCheckpoint c = sample_checkpoint();
    auto bytes = serialize_checkpoint(c);
    CHECK(std::memcmp(bytes.data(), "QGLUTCKP", 8) == 0);
    ModelCheckpoint back = deserialize_checkpoint(bytes);
    CHECK(same_bits(c.params, back.params));
    CHECK(back.arch == c.arch);
    CHECK(back.metadata == c.metadata);
    REQUIRE(back.centers.has_value());
    CHECK(back.centers->provenance == CenterProvenance::Imported);
    CHECK(back.centers->centers[3].b == c.centers->centers[3].b);
    CHECK(serialize_checkpoint(back) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "qglut_roundtrip.ckpt";
    save_checkpoint(path, c);
    ModelCheckpoint loaded = load_checkpoint(path);
    CHECK(same_bits(c.params, loaded.params));
    std::filesystem::remove(path);
  }

  TEST_CASE("non-default architecture survives") {
    ModelCheckpoint c = make_checkpoint(small_arch(), 3);
    c.arch.use_label = false;
    c.arch.use_1d_luts = false;
    c.arch.score_encoding = ScoreEncoding::Wide;
    c.params = init_params(c.arch, 3);
    ModelCheckpoint back = deserialize_checkpoint(serialize_checkpoint(c));
    CHECK(back.arch == c.arch);
    CHECK_FALSE(back.centers.has_value());
  }

  TEST_CASE("corruption is detected") {
    auto bytes = serialize_checkpoint(sample_checkpoint());
    auto truncated = bytes;
    truncated.resize(bytes.size() - 7);
    CHECK_CODE(deserialize_checkpoint(truncated), ErrorCode::CorruptCheckpoint);
    auto tiny = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 12);
    CHECK_CODE(deserialize_checkpoint(tiny), ErrorCode::CorruptCheckpoint);
    auto flipped = bytes;
    flipped[bytes.size() - 3] ^= 0x10;
    CHECK_CODE(deserialize_checkpoint(flipped), ErrorCode::CorruptCheckpoint);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_CODE(deserialize_checkpoint(magic), ErrorCode::CorruptCheckpoint);
    auto renamed = with_header(bytes, [](nlohmann::json& h) { h["tensors"][0]["shape"][0] = 3; });
    CHECK_CODE(deserialize_checkpoint(renamed), ErrorCode::CorruptCheckpoint);
  }

  TEST_CASE("version mismatch") {
    auto bytes = serialize_checkpoint(sample_checkpoint());
    auto future = with_header(bytes, [](nlohmann::json& h) { h["version"] = kCheckpointVersion + 1; });
    CHECK_CODE(deserialize_checkpoint(future), ErrorCode::VersionMismatch);
  }

  TEST_CASE("architecture mismatch on use") {
    ModelCheckpoint c = sample_checkpoint();
    ArchitectureConfig other = c.arch;
    CHECK_NOTHROW(require_architecture(c, other));
    other.lut_dim = 17;
    CHECK_CODE(require_architecture(c, other), ErrorCode::ArchitectureMismatch);
  }

  TEST_CASE("missing file") {
    CHECK_CODE(load_checkpoint("/nonexistent/dir/model.ckpt"), ErrorCode::IoError);
  }
}
