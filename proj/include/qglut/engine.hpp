#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qglut/checkpoint.hpp"
#include "qglut/image.hpp"
#include "qglut/lut.hpp"

namespace qglut {

/// Skin-tone label source for a request.
struct LabelRequest {
  enum class Kind { Absent, Auto, Explicit };
  Kind kind = Kind::Absent;
  int value = 0;

  static LabelRequest absent() { return {}; }
  static LabelRequest automatic() { return {Kind::Auto, 0}; }
  static LabelRequest explicit_label(int v) { return {Kind::Explicit, v}; }
  /// "auto", "none" or an integer.
  static LabelRequest parse(std::string_view text);
};

struct EnhanceRequest {
  ImageBuffer image;
  double score = 0.0;
  LabelRequest label;
  int rounds = 1;
  std::optional<Mask> mask;  // skin mask for automatic labels
};

struct EngineOptions {
  double guide_min = -1.0;
  double guide_max = 1.0;
  /// Scores outside the guide range raise ScoreOutOfGuideRange instead of a
  /// warning.
  bool strict_range = false;
};

struct EnhanceResult {
  ImageBuffer image;
  std::vector<int> labels;  // resolved label per round (empty for label-free models)
  std::vector<std::string> warnings;
};

/// The transform produced by the network for one conditioned input.
struct GeneratedTransform {
  Lut1DTriple luts;
  Lut3D fused;
  std::vector<double> weights;
};

/// Inference over an immutable checkpoint. Safe to share between threads.
class Engine {
 public:
  explicit Engine(std::shared_ptr<const ModelCheckpoint> checkpoint, EngineOptions options = {});

  const ModelCheckpoint& checkpoint() const noexcept { return *checkpoint_; }
  const EngineOptions& options() const noexcept { return options_; }

  EnhanceResult enhance(const EnhanceRequest& request) const;

  /// Folds single-round enhancement over `scores`, feeding each output back
  /// as the next input. Automatic labels are re-resolved every round.
  EnhanceResult enhance_multi_round(const ImageBuffer& image, std::span<const double> scores,
                                    const LabelRequest& label,
                                    const std::optional<Mask>& mask = std::nullopt) const;

  /// Label used for `image`, or nullopt for models without a label plane.
  /// Automatic labels use the mask when given, else the central crop.
  std::optional<int> resolve_label(const ImageBuffer& image, const LabelRequest& label,
                                   const Mask* mask) const;

  GeneratedTransform generate(const ImageBuffer& image, double score,
                              std::optional<int> label) const;

 private:
  ImageBuffer enhance_once(const ImageBuffer& image, double score, std::optional<int> label) const;
  void check_score(double score, std::vector<std::string>& warnings) const;

  std::shared_ptr<const ModelCheckpoint> checkpoint_;
  EngineOptions options_;
  BasisLutBank bank_;
};

/// Enhances and encodes to PNG. The CLI and the HTTP service both go through
/// here so equal requests give equal bytes.
std::vector<std::uint8_t> enhance_png(const Engine& engine, const EnhanceRequest& request,
                                      EnhanceResult* details = nullptr);

}  // namespace qglut
