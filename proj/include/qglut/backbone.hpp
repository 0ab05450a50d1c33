#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qglut/image.hpp"
#include "qglut/lut.hpp"

namespace qglut {

/// How a normalized score in [-1,1] is written into the score plane.
enum class ScoreEncoding { Symmetric, Unit, Wide };  // [-1,1], [0,1], [-5,5]
/// How a label 1..10 is written into the label plane.
enum class LabelEncoding { Integer, Unit };  // 1..10, (label-1)/9

std::string_view to_string(ScoreEncoding e) noexcept;
std::string_view to_string(LabelEncoding e) noexcept;
ScoreEncoding parse_score_encoding(std::string_view s);
LabelEncoding parse_label_encoding(std::string_view s);

inline constexpr int kLayers = 5;
inline constexpr int kMaxLabel = 10;

struct ArchitectureConfig {
  int input_size = 256;
  std::array<int, kLayers> widths{16, 32, 64, 128, 128};
  int head_hidden = 64;
  int lut_bins = 33;
  int lut_dim = 33;
  int basis_count = 3;
  bool use_label = true;
  bool use_1d_luts = true;
  ScoreEncoding score_encoding = ScoreEncoding::Symmetric;
  LabelEncoding label_encoding = LabelEncoding::Integer;

  int input_channels() const noexcept { return use_label ? 5 : 4; }
  int feature_size() const noexcept { return widths.back(); }
  void validate() const;

  bool operator==(const ArchitectureConfig&) const = default;
};

/// Image planes (resized to input_size) followed by the score plane and, when
/// labels are enabled, the label plane. Plane-major float storage.
struct ConditionedInput {
  int channels = 0;
  int size = 0;
  std::vector<float> planes;

  std::span<const float> plane(int c) const noexcept {
    return {planes.data() + static_cast<std::size_t>(c) * size * size,
            static_cast<std::size_t>(size) * size};
  }
};

double encode_score(double score, ScoreEncoding e) noexcept;
double encode_label(int label, LabelEncoding e) noexcept;

/// Builds the network input. Scores outside [-1,1] raise ScoreOutOfRange
/// unless `allow_extended_score` is set; labels outside 1..10 raise
/// LabelOutOfRange. `label` is ignored when the architecture has no label
/// plane and required otherwise.
ConditionedInput condition(const ImageBuffer& image, double score,
                           std::optional<int> label,
                           const ArchitectureConfig& arch,
                           bool allow_extended_score = false);

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
};

/// Flat, ordered collection of named parameter tensors. The order is fixed
/// by the architecture and is the serialization order.
template <typename T>
struct ParamSet {
  std::vector<ParamTensor<T>> tensors;
  std::uint64_t version = 0;

  ParamTensor<T>& operator[](std::size_t i) { return tensors[i]; }
  const ParamTensor<T>& operator[](std::size_t i) const { return tensors[i]; }
  std::size_t size() const noexcept { return tensors.size(); }
  std::size_t scalar_count() const noexcept;
  const ParamTensor<T>& find(std::string_view name) const;
  ParamTensor<T>& find(std::string_view name);

  ParamSet zeros_like() const;
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.version = version;
    for (const auto& t : tensors) {
      out.tensors.push_back({t.name, t.shape, std::vector<U>(t.values.begin(), t.values.end())});
    }
    return out;
  }
};

/// Tensor indices inside a ParamSet built by `init_params`.
struct ParamLayout {
  static constexpr std::size_t conv_weight(int layer) { return static_cast<std::size_t>(layer) * 4; }
  static constexpr std::size_t conv_bias(int layer) { return conv_weight(layer) + 1; }
  static constexpr std::size_t norm_gamma(int layer) { return conv_weight(layer) + 2; }
  static constexpr std::size_t norm_beta(int layer) { return conv_weight(layer) + 3; }
  // Layer 5 has no norm; its conv occupies indices 16, 17.
  static constexpr std::size_t head1d_fc1_weight = 18;
  static constexpr std::size_t head1d_fc1_bias = 19;
  static constexpr std::size_t head1d_fc2_weight = 20;
  static constexpr std::size_t head1d_fc2_bias = 21;
  static constexpr std::size_t head3d_fc1_weight = 22;
  static constexpr std::size_t head3d_fc1_bias = 23;
  static constexpr std::size_t head3d_fc2_weight = 24;
  static constexpr std::size_t head3d_fc2_bias = 25;
  static constexpr std::size_t basis = 26;
  static constexpr std::size_t count = 27;
};

/// Kaiming-uniform convolutions and first head layers, zero residual 1D head,
/// small random fusion rows for the zero basis grids,
/// fusion head biased to (1,0,...,0), basis[0] = identity, others zero. The
/// resulting model is an exact identity transform.
ParamSet<float> init_params(const ArchitectureConfig& arch, std::uint64_t seed);

/// Throws ShapeMismatch when the tensor list does not match the architecture.
template <typename T>
void check_shapes(const ParamSet<T>& params, const ArchitectureConfig& arch);

/// Learnable basis grids of a parameter set, widened to double.
template <typename T>
BasisLutBank basis_bank(const ParamSet<T>& params, const ArchitectureConfig& arch);

/// Intermediates recorded by forward for the reverse pass.
template <typename T>
struct Tape;

template <typename T>
struct ForwardResult {
  std::vector<T> feature;          // F
  std::vector<T> lut_residual;     // 3*S raw head outputs
  Lut1DTriple luts;                // identity + residual
  std::vector<double> weights;     // K fusion weights
};

template <typename T>
class Backbone {
 public:
  explicit Backbone(ArchitectureConfig arch);
  ~Backbone();
  Backbone(Backbone&&) noexcept;
  Backbone& operator=(Backbone&&) noexcept;

  const ArchitectureConfig& arch() const noexcept { return arch_; }

  /// Runs the encoder and both heads. When `record` is true the
  /// intermediates are kept for a following `backward`.
  ForwardResult<T> forward(const ParamSet<T>& params, const ConditionedInput& x,
                           bool record = false);

  /// Reverse pass for the most recent recorded forward. `grad_luts` has 3*S
  /// entries ordered L, a, b; `grad_weights` has K entries. Gradients are
  /// accumulated into `grads` (same layout as params). Throws StaleTape when
  /// the parameters changed since the forward pass or nothing was recorded.
  void backward(const ParamSet<T>& params, std::span<const double> grad_luts,
                std::span<const double> grad_weights, ParamSet<T>& grads);

  /// Per-channel normalized activations (before affine) of norm layer
  /// `layer` (0-based, 0..3) from the last recorded forward.
  std::vector<T> normalized_activations(int layer) const;

 private:
  ArchitectureConfig arch_;
  std::unique_ptr<Tape<T>> tape_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ParamSet<float>& params, AdamConfig config = {});

/// Bias-corrected Adam update; bumps params.version.
void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, AdamState& state);

/// Rescales `grads` so their global L2 norm is at most `max_norm` (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(ParamSet<float>& grads, double max_norm);

}  // namespace qglut
