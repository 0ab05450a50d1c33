#include "qglut/engine.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "qglut/backbone.hpp"
#include "qglut/error.hpp"
#include "qglut/pipeline.hpp"
#include "qglut/skintone.hpp"

namespace qglut {

LabelRequest LabelRequest::parse(std::string_view text) {
  if (text == "auto") return automatic();
  if (text == "none" || text.empty()) return absent();
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::InvalidArgument, "label must be 'auto', 'none' or 1..10");
  }
  if (v < 1 || v > kMaxLabel) fail(ErrorCode::LabelOutOfRange, "label outside 1..10");
  return explicit_label(v);
}

Engine::Engine(std::shared_ptr<const ModelCheckpoint> checkpoint, EngineOptions options)
    : checkpoint_(std::move(checkpoint)), options_(options) {
  if (!checkpoint_) fail(ErrorCode::InvalidArgument, "engine needs a checkpoint");
  check_shapes(checkpoint_->params, checkpoint_->arch);
  bank_ = basis_bank(checkpoint_->params, checkpoint_->arch);
}

std::optional<int> Engine::resolve_label(const ImageBuffer& image, const LabelRequest& label,
                                         const Mask* mask) const {
  if (!checkpoint_->arch.use_label) return std::nullopt;
  switch (label.kind) {
    case LabelRequest::Kind::Explicit:
      if (label.value < 1 || label.value > kMaxLabel) {
        fail(ErrorCode::LabelOutOfRange, "label outside 1..10");
      }
      return label.value;
    case LabelRequest::Kind::Auto: {
      if (!checkpoint_->centers) {
        fail(ErrorCode::UnresolvedLabel, "automatic labels need skin-tone centres in the model");
      }
      const Mask crop = mask ? Mask{} : central_crop_mask(image.width(), image.height());
      return classify(mean_skin_color(image, mask ? *mask : crop), *checkpoint_->centers);
    }
    case LabelRequest::Kind::Absent:
      break;
  }
  fail(ErrorCode::UnresolvedLabel, "this model needs a skin-tone label (explicit or auto)");
}

GeneratedTransform Engine::generate(const ImageBuffer& image, double score,
                                    std::optional<int> label) const {
  const auto& arch = checkpoint_->arch;
  Backbone<float> net(arch);
  auto fr = net.forward(checkpoint_->params, condition(image, score, label, arch, true));
  GeneratedTransform t;
  t.fused = fuse(bank_, fr.weights);
  t.luts = std::move(fr.luts);
  t.weights = std::move(fr.weights);
  return t;
}

ImageBuffer Engine::enhance_once(const ImageBuffer& image, double score,
                                 std::optional<int> label) const {
  auto t = generate(image, score, label);
  return render(image, checkpoint_->arch.use_1d_luts ? &t.luts : nullptr, t.fused);
}

void Engine::check_score(double score, std::vector<std::string>& warnings) const {
  if (!std::isfinite(score)) fail(ErrorCode::ScoreOutOfRange, "score must be finite");
  if (score >= options_.guide_min && score <= options_.guide_max) return;
  std::ostringstream msg;
  msg << "score " << score << " is outside the guide range [" << options_.guide_min << ", "
      << options_.guide_max << "]; behaviour there depends on the checkpoint";
  if (options_.strict_range) fail(ErrorCode::ScoreOutOfGuideRange, msg.str());
  warnings.push_back(msg.str());
}

EnhanceResult Engine::enhance(const EnhanceRequest& request) const {
  if (request.rounds < 1) fail(ErrorCode::InvalidArgument, "rounds must be at least 1");
  std::vector<double> scores(static_cast<std::size_t>(request.rounds), request.score);
  return enhance_multi_round(request.image, scores, request.label, request.mask);
}

EnhanceResult Engine::enhance_multi_round(const ImageBuffer& image, std::span<const double> scores,
                                          const LabelRequest& label,
                                          const std::optional<Mask>& mask) const {
  if (scores.empty()) fail(ErrorCode::InvalidArgument, "score list is empty");
  if (image.empty()) fail(ErrorCode::InvalidImage, "cannot enhance an empty image");
  EnhanceResult result;
  for (double s : scores) check_score(s, result.warnings);
  result.image = image;
  for (double s : scores) {
    auto resolved = resolve_label(result.image, label, mask ? &*mask : nullptr);
    if (resolved) result.labels.push_back(*resolved);
    result.image = enhance_once(result.image, s, resolved);
  }
  return result;
}

std::vector<std::uint8_t> enhance_png(const Engine& engine, const EnhanceRequest& request,
                                      EnhanceResult* details) {
  EnhanceResult r = engine.enhance(request);
  auto bytes = encode_png(r.image);
  if (details) *details = std::move(r);
  return bytes;
}

}  // namespace qglut
