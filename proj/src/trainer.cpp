#include "qglut/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "qglut/color.hpp"
#include "qglut/csv.hpp"
#include "qglut/error.hpp"
#include "qglut/pipeline.hpp"

namespace qglut {

// --- perturbation ----------------------------------------------------------

ImageBuffer synth_perturb(const ImageBuffer& img, const LabShift& shift, PerturbMode mode) {
  if (img.empty()) fail(ErrorCode::InvalidImage, "cannot perturb an empty image");
  for (double d : {shift.l, shift.a, shift.b}) {
    if (!std::isfinite(d) || std::abs(d) > kMaxLabShift) {
      fail(ErrorCode::InvalidArgument, "Lab shifts must lie in [-40, 40]");
    }
  }
  if (mode == PerturbMode::SkinTone && shift.l != 0.0) {
    fail(ErrorCode::ModeViolation, "skin-tone perturbations keep L unchanged");
  }
  ImageBuffer out(img.width(), img.height());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    LabPixel lab = srgb_to_lab(RgbPixel(src[i * 3], src[i * 3 + 1], src[i * 3 + 2]));
    RgbPixel rgb = lab_to_srgb(LabPixel(lab.l + shift.l, lab.a + shift.a, lab.b + shift.b));
    dst[i * 3] = static_cast<float>(rgb.r);
    dst[i * 3 + 1] = static_cast<float>(rgb.g);
    dst[i * 3 + 2] = static_cast<float>(rgb.b);
  }
  return out;
}

LabShift random_lab_shift(std::mt19937_64& rng, double range, PerturbMode mode) {
  if (!(range >= 0.0 && range <= kMaxLabShift)) {
    fail(ErrorCode::InvalidArgument, "perturbation range must lie in [0, 40]");
  }
  std::uniform_real_distribution<double> u(-range, range);
  LabShift s;
  s.a = u(rng);
  s.b = u(rng);
  if (mode == PerturbMode::Natural) s.l = u(rng);
  return s;
}

// --- dataset ---------------------------------------------------------------

TrainingSet build_dataset(const std::vector<TrainingPair>& pairs, const TrainConfig& config,
                          const SkinToneCenters* centers) {
  TrainingSet set;
  std::vector<std::string> raw_order;
  std::map<std::string, std::size_t> first_of;
  for (const auto& p : pairs) {
    if (p.raw.empty() || p.target.empty()) fail(ErrorCode::InvalidImage, "empty training image");
    if (p.raw.width() != p.target.width() || p.raw.height() != p.target.height()) {
      fail(ErrorCode::DimensionMismatch, "raw and target of '" + p.raw_id + "' differ in size");
    }
    if (!std::isfinite(p.score) || p.score < -1.0 || p.score > 1.0) {
      fail(ErrorCode::ScoreOutOfRange, "training score outside [-1,1]");
    }
    TrainingSample s;
    s.raw_id = p.raw_id;
    s.raw = p.raw;
    s.target = p.target;
    s.score = p.score;
    if (config.arch.use_label) {
      if (p.label) {
        if (*p.label < 1 || *p.label > kMaxLabel) {
          fail(ErrorCode::LabelOutOfRange, "label outside 1..10");
        }
        s.label = p.label;
      } else if (p.mask) {
        if (!centers) fail(ErrorCode::UnresolvedLabel, "labels from masks need skin-tone centres");
        s.label = classify(mean_skin_color(p.raw, *p.mask), *centers);
      } else {
        fail(ErrorCode::MissingMask, "pair '" + p.raw_id + "' has neither a label nor a mask");
      }
    }
    if (first_of.emplace(p.raw_id, set.samples.size()).second) raw_order.push_back(p.raw_id);
    set.samples.push_back(std::move(s));
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const auto& id : raw_order) {
    const auto& src = set.samples[first_of[id]];
    TrainingSample s;
    s.raw_id = id;
    s.raw = src.raw;
    s.target = src.raw;
    s.label = src.label;
    s.identity = true;
    do {
      s.score = u(rng);
    } while (s.score <= -0.1);
    set.samples.push_back(std::move(s));
  }
  return set;
}

std::vector<TrainingPair> read_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  CsvReader csv(in);
  const auto raw_col = csv.column("raw_path");
  const auto target_col = csv.column("target_path");
  const auto score_col = csv.column("score");
  const auto label_col = csv.optional_column("label");
  const auto mask_col = csv.optional_column("mask_path");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  std::map<std::string, ImageBuffer> cache;
  auto load = [&](const std::string& p) -> const ImageBuffer& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, read_png(resolve(p))).first;
    return it->second;
  };
  std::vector<TrainingPair> pairs;
  while (auto row = csv.next()) {
    TrainingPair p;
    p.raw_id = row->at(raw_col);
    p.raw = load(row->at(raw_col));
    p.target = load(row->at(target_col));
    p.score = parse_double(row->at(score_col), "score");
    if (label_col && !row->at(*label_col).empty()) {
      double l = parse_double(row->at(*label_col), "label");
      if (l != std::floor(l)) fail(ErrorCode::LabelOutOfRange, "labels are integers 1..10");
      p.label = static_cast<int>(l);
    }
    if (mask_col && !row->at(*mask_col).empty()) {
      p.mask = read_mask_png(resolve(row->at(*mask_col)));
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<TrainingPair> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_manifest(in, path.parent_path());
}

// --- loss ------------------------------------------------------------------

LossBreakdown total_loss(const ImageBuffer& enhanced, const ImageBuffer& target,
                         const Lut1DTriple* luts, const Lut3D& fused,
                         std::span<const double> weights, const LossWeights& lambdas) {
  if (enhanced.width() != target.width() || enhanced.height() != target.height() ||
      enhanced.empty()) {
    fail(ErrorCode::DimensionMismatch, "enhanced and target images differ in size");
  }
  LossBreakdown out;
  auto e = enhanced.data();
  auto t = target.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = static_cast<double>(e[i]) - t[i];
    sum += d * d;
  }
  out.reconstruction = sum / static_cast<double>(e.size());
  out.smoothness = smoothness_penalty(fused, weights) + (luts ? smoothness_penalty(*luts) : 0.0);
  out.monotonicity = monotonicity_penalty(fused) + (luts ? monotonicity_penalty(*luts) : 0.0);
  out.total = lambdas.reconstruction * out.reconstruction + lambdas.smoothness * out.smoothness +
              lambdas.monotonicity * out.monotonicity;
  return out;
}

namespace {

struct Prepared {
  ConditionedInput input;
  std::vector<Triple> lab;
};

template <typename T>
Lut3D fuse_params(const ParamSet<T>& params, const ArchitectureConfig& arch,
                  std::span<const double> weights) {
  const auto& basis = params[ParamLayout::basis].values;
  Lut3D out;
  out.dim = arch.lut_dim;
  const std::size_t per = out.node_count() * 3;
  out.grid.assign(per, 0.0);
  for (int k = 0; k < arch.basis_count; ++k) {
    const double w = weights[static_cast<std::size_t>(k)];
    const T* src = basis.data() + static_cast<std::size_t>(k) * per;
    for (std::size_t n = 0; n < per; ++n) out.grid[n] += w * static_cast<double>(src[n]);
  }
  return out;
}

template <typename T>
LossBreakdown prepared_loss(Backbone<T>& net, const ParamSet<T>& params, const Prepared& prep,
                            const TrainingSample& sample, const LossWeights& lambdas,
                            ParamSet<T>* grads) {
  const auto& arch = net.arch();
  ForwardResult<T> fr = net.forward(params, prep.input, grads != nullptr);
  const Lut3D fused = fuse_params(params, arch, fr.weights);
  const Lut1DTriple* luts = arch.use_1d_luts ? &fr.luts : nullptr;

  RenderGradients rg;
  if (grads) {
    rg.lut1d.assign(static_cast<std::size_t>(3 * arch.lut_bins), 0.0);
    rg.grid.assign(fused.grid.size(), 0.0);
  }
  LossBreakdown out;
  out.reconstruction = render_mse(sample.raw, prep.lab, luts, fused, sample.target, 1.0,
                                  grads ? &rg : nullptr);
  out.smoothness = smoothness_penalty(fused, fr.weights) + (luts ? smoothness_penalty(*luts) : 0.0);
  out.monotonicity = monotonicity_penalty(fused) + (luts ? monotonicity_penalty(*luts) : 0.0);
  out.total = lambdas.reconstruction * out.reconstruction + lambdas.smoothness * out.smoothness +
              lambdas.monotonicity * out.monotonicity;
  if (!grads) return out;

  if (lambdas.reconstruction != 1.0) {
    for (double& g : rg.grid) g *= lambdas.reconstruction;
    for (double& g : rg.lut1d) g *= lambdas.reconstruction;
  }
  smoothness_backward(fused, lambdas.smoothness, rg.grid);
  monotonicity_backward(fused, lambdas.monotonicity, rg.grid);
  if (luts) {
    for (int axis = 0; axis < 3; ++axis) {
      std::span<double> g(rg.lut1d.data() + static_cast<std::size_t>(axis) * arch.lut_bins,
                          static_cast<std::size_t>(arch.lut_bins));
      smoothness_backward((*luts)[axis], lambdas.smoothness, g);
      monotonicity_backward((*luts)[axis], lambdas.monotonicity, g);
    }
  }

  const auto& basis = params[ParamLayout::basis].values;
  auto& basis_grad = (*grads)[ParamLayout::basis].values;
  const std::size_t per = rg.grid.size();
  std::vector<double> dw(static_cast<std::size_t>(arch.basis_count), 0.0);
  for (int k = 0; k < arch.basis_count; ++k) {
    const std::size_t off = static_cast<std::size_t>(k) * per;
    const double w = fr.weights[static_cast<std::size_t>(k)];
    double acc = 0.0;
    for (std::size_t n = 0; n < per; ++n) {
      acc += rg.grid[n] * static_cast<double>(basis[off + n]);
      basis_grad[off + n] += static_cast<T>(w * rg.grid[n]);
    }
    dw[static_cast<std::size_t>(k)] = acc + 2.0 * lambdas.smoothness * w;
  }
  net.backward(params, rg.lut1d, dw, *grads);
  return out;
}

Prepared prepare(const TrainingSample& s, const ArchitectureConfig& arch,
                 const ImageBuffer& resized) {
  Prepared p;
  p.input = condition(resized, s.score, s.label, arch);
  if (arch.use_1d_luts) p.lab = normalized_lab_pixels(s.raw);
  return p;
}

std::vector<Prepared> prepare_all(const TrainingSet& data, const ArchitectureConfig& arch) {
  std::map<std::string, ImageBuffer> resized;
  std::vector<Prepared> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) {
    auto it = resized.find(s.raw_id);
    if (it == resized.end() || it->second.empty()) {
      it = resized.insert_or_assign(s.raw_id, resize_bilinear(s.raw, arch.input_size, arch.input_size)).first;
    }
    out.push_back(prepare(s, arch, it->second));
  }
  return out;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& l) {
  acc.total += l.total;
  acc.reconstruction += l.reconstruction;
  acc.smoothness += l.smoothness;
  acc.monotonicity += l.monotonicity;
}

LossBreakdown mean(LossBreakdown acc, std::size_t n) {
  const double inv = 1.0 / static_cast<double>(n);
  acc.total *= inv;
  acc.reconstruction *= inv;
  acc.smoothness *= inv;
  acc.monotonicity *= inv;
  return acc;
}

void require_finite(const LossBreakdown& l, int epoch, const TrainingSample& s) {
  if (std::isfinite(l.total)) return;
  std::ostringstream msg;
  msg << "non-finite loss at epoch " << epoch << " on sample '" << s.raw_id << "' (score "
      << s.score << "): reconstruction=" << l.reconstruction << " smoothness=" << l.smoothness
      << " monotonicity=" << l.monotonicity;
  fail(ErrorCode::NonFiniteLoss, msg.str());
}

LossBreakdown evaluate_prepared(Backbone<float>& net, const ParamSet<float>& params,
                                const TrainingSet& data, const std::vector<Prepared>& prep,
                                const LossWeights& lambdas) {
  LossBreakdown acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto l = prepared_loss<float>(net, params, prep[i], data.samples[i], lambdas, nullptr);
    require_finite(l, 0, data.samples[i]);
    accumulate(acc, l);
  }
  return mean(acc, data.size());
}

TrainResult run_training(ModelCheckpoint ckpt, const TrainingSet& data, const TrainConfig& config,
                         const ProgressCallback& progress, const EpochCheckpointCallback& on_epoch) {
  if (data.empty()) fail(ErrorCode::EmptyDataset, "training set is empty");
  if (config.epochs < 0) fail(ErrorCode::InvalidArgument, "epochs must be non-negative");
  if (!(config.grad_clip >= 0.0) || !std::isfinite(config.grad_clip)) {
    fail(ErrorCode::InvalidArgument, "grad_clip must be finite and >= 0");
  }
  if (!(config.lr >= 0.0) || config.batch_size < 1) {
    fail(ErrorCode::InvalidArgument, "learning rate must be >= 0 and batch size >= 1");
  }
  const auto& arch = ckpt.arch;
  for (const auto& s : data.samples) {
    if (arch.use_label && !s.label) fail(ErrorCode::UnresolvedLabel, "sample without label");
  }
  auto prep = prepare_all(data, arch);
  Backbone<float> net(arch);
  TrainResult result;

  EpochLog initial{0, evaluate_prepared(net, ckpt.params, data, prep, config.lambdas)};
  result.curve.push_back(initial);
  if (progress) progress(initial);

  AdamConfig adam_config;
  adam_config.lr = config.lr;
  AdamState adam = make_adam_state(ckpt.params, adam_config);
  ParamSet<float> grads = ckpt.params.zeros_like();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown acc;
    int in_batch = 0;
    auto step = [&] {
      if (in_batch == 0) return;
      if (in_batch > 1) {
        const float inv = 1.0f / static_cast<float>(in_batch);
        for (auto& t : grads.tensors) {
          for (float& g : t.values) g *= inv;
        }
      }
      clip_grad_norm(grads, config.grad_clip);
      adam_step(ckpt.params, grads, adam);
      for (auto& t : grads.tensors) std::fill(t.values.begin(), t.values.end(), 0.0f);
      in_batch = 0;
    };
    for (std::size_t idx : order) {
      auto l = prepared_loss<float>(net, ckpt.params, prep[idx], data.samples[idx],
                                    config.lambdas, &grads);
      require_finite(l, epoch, data.samples[idx]);
      accumulate(acc, l);
      if (++in_batch == config.batch_size) step();
    }
    step();
    EpochLog log{epoch, mean(acc, data.size())};
    result.curve.push_back(log);
    if (progress) progress(log);
    if (on_epoch) on_epoch(epoch, ckpt);
  }
  ckpt.metadata.epochs_completed += config.epochs;
  ckpt.metadata.final_loss = result.curve.back().loss.total;
  ckpt.metadata.seed = config.seed;
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace

template <typename T>
LossBreakdown sample_loss(Backbone<T>& net, const ParamSet<T>& params, const TrainingSample& sample,
                          const LossWeights& lambdas, ParamSet<T>* grads) {
  const auto& arch = net.arch();
  ImageBuffer resized = resize_bilinear(sample.raw, arch.input_size, arch.input_size);
  Prepared prep = prepare(sample, arch, resized);
  return prepared_loss<T>(net, params, prep, sample, lambdas, grads);
}

template LossBreakdown sample_loss(Backbone<float>&, const ParamSet<float>&, const TrainingSample&,
                                   const LossWeights&, ParamSet<float>*);
template LossBreakdown sample_loss(Backbone<double>&, const ParamSet<double>&,
                                   const TrainingSample&, const LossWeights&, ParamSet<double>*);

TrainResult train(const TrainingSet& data, const TrainConfig& config,
                  const ProgressCallback& progress, const EpochCheckpointCallback& on_epoch) {
  ModelCheckpoint start = make_checkpoint(config.arch, config.seed);
  return run_training(std::move(start), data, config, progress, on_epoch);
}

TrainResult finetune(const ModelCheckpoint& start, const TrainingSet& data,
                     const TrainConfig& config, const ProgressCallback& progress,
                     const EpochCheckpointCallback& on_epoch) {
  require_architecture(start, config.arch);
  check_shapes(start.params, start.arch);
  return run_training(start, data, config, progress, on_epoch);
}

LossBreakdown evaluate(const ModelCheckpoint& ckpt, const TrainingSet& data,
                       const LossWeights& lambdas) {
  if (data.empty()) fail(ErrorCode::EmptyDataset, "evaluation set is empty");
  auto prep = prepare_all(data, ckpt.arch);
  Backbone<float> net(ckpt.arch);
  return evaluate_prepared(net, ckpt.params, data, prep, lambdas);
}

void write_loss_log(std::ostream& out, std::span<const EpochLog> curve) {
  out << "epoch,total,lr_term,smooth_term,mono_term\n";
  out << std::setprecision(10);
  for (const auto& e : curve) {
    out << e.epoch << ',' << e.loss.total << ',' << e.loss.reconstruction << ','
        << e.loss.smoothness << ',' << e.loss.monotonicity << '\n';
  }
}

void write_loss_log(const std::filesystem::path& path, std::span<const EpochLog> curve) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_loss_log(out, curve);
}

}  // namespace qglut
