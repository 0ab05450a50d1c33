#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qglut/backbone.hpp"
#include "qglut/checkpoint.hpp"
#include "qglut/image.hpp"
#include "qglut/lut.hpp"
#include "qglut/skintone.hpp"

namespace qglut {

// --- synthetic CIELAB perturbations ----------------------------------------

enum class PerturbMode {
  SkinTone,  // a/b only, L must stay unchanged
  Natural,   // all three axes
};

struct LabShift {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline constexpr double kMaxLabShift = 40.0;

/// Shifts every pixel in Lab and re-encodes to sRGB (clamped). Shifts must lie
/// in [-40, 40]; a non-zero L shift in SkinTone mode raises ModeViolation.
ImageBuffer synth_perturb(const ImageBuffer& img, const LabShift& shift, PerturbMode mode);

/// Uniform random shift with every active axis in [-range, range].
LabShift random_lab_shift(std::mt19937_64& rng, double range, PerturbMode mode);

// --- dataset ---------------------------------------------------------------

/// One (raw, adjusted, score) triple. `raw_id` identifies the raw image for
/// identity-pair augmentation.
struct TrainingPair {
  std::string raw_id;
  ImageBuffer raw;
  ImageBuffer target;
  double score = 0.0;  // normalized, [-1,1]
  std::optional<int> label;
  std::optional<Mask> mask;
};

struct TrainingSample {
  std::string raw_id;
  ImageBuffer raw;
  ImageBuffer target;
  double score = 0.0;
  std::optional<int> label;
  bool identity = false;
};

struct TrainingSet {
  std::vector<TrainingSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

struct LossWeights {
  double reconstruction = 1.0;
  double smoothness = 1e-4;
  double monotonicity = 10.0;
};

struct TrainConfig {
  int epochs = 400;
  double lr = 1e-4;
  /// Global gradient-norm cap applied before each Adam step; 0 disables it.
  double grad_clip = 1.0;
  int batch_size = 1;
  LossWeights lambdas;
  std::uint64_t seed = 0;
  ArchitectureConfig arch;
};

/// Copies the pairs and appends one identity pair per distinct raw image
/// (target = raw, score uniform in (-0.1, 0.1) from config.seed). When
/// labels are enabled, missing labels are derived from the mask via
/// mean_skin_color + classify; a pair with neither label nor mask raises
/// MissingMask.
TrainingSet build_dataset(const std::vector<TrainingPair>& pairs, const TrainConfig& config,
                          const SkinToneCenters* centers = nullptr);

/// CSV manifest `raw_path,target_path,score,label,mask_path` (label and
/// mask_path optional). Relative paths resolve against `base_dir`.
std::vector<TrainingPair> read_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<TrainingPair> read_manifest(const std::filesystem::path& path);

// --- loss ------------------------------------------------------------------

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double smoothness = 0.0;
  double monotonicity = 0.0;
};

/// lambda1 * MSE + lambda2 * smoothness + lambda3 * monotonicity. The 1D terms
/// are skipped when `luts` is null. Component fields hold the unweighted terms.
LossBreakdown total_loss(const ImageBuffer& enhanced, const ImageBuffer& target,
                         const Lut1DTriple* luts, const Lut3D& fused,
                         std::span<const double> weights, const LossWeights& lambdas);

/// Loss of one sample and, when `grads` is non-null, its gradient w.r.t.
/// every parameter (accumulated). Exposed for gradient checks.
template <typename T>
LossBreakdown sample_loss(Backbone<T>& net, const ParamSet<T>& params, const TrainingSample& sample,
                          const LossWeights& lambdas, ParamSet<T>* grads);

// --- training --------------------------------------------------------------

struct EpochLog {
  int epoch = 0;  // 0 = evaluation before the first update
  LossBreakdown loss;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochLog> curve;
};

using ProgressCallback = std::function<void(const EpochLog&)>;
/// Sees the parameters after every epoch (metadata is only final on return).
using EpochCheckpointCallback = std::function<void(int epoch, const ModelCheckpoint&)>;

/// Batch-1 Adam over the shuffled dataset for config.epochs epochs, starting
/// from an identity-initialized model. Throws NonFiniteLoss on NaN/Inf.
TrainResult train(const TrainingSet& data, const TrainConfig& config,
                  const ProgressCallback& progress = {},
                  const EpochCheckpointCallback& on_epoch = {});

/// Continues from `start` with a fresh optimizer. The architecture in
/// `config` must match the checkpoint (ArchitectureMismatch otherwise).
TrainResult finetune(const ModelCheckpoint& start, const TrainingSet& data,
                     const TrainConfig& config, const ProgressCallback& progress = {},
                     const EpochCheckpointCallback& on_epoch = {});

/// Mean loss over the dataset without updating anything.
LossBreakdown evaluate(const ModelCheckpoint& ckpt, const TrainingSet& data,
                       const LossWeights& lambdas);

/// CSV `epoch,total,lr_term,smooth_term,mono_term`.
void write_loss_log(std::ostream& out, std::span<const EpochLog> curve);
void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> curve);

}  // namespace qglut
