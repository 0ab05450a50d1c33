#include "qglut/backbone.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "qglut/error.hpp"

namespace qglut {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

constexpr double kSlope = 0.2;
constexpr double kNormEps = 1e-5;

int conv_out(int n) { return (n - 1) / 2 + 1; }  // k=3, stride 2, pad 1

template <typename T>
void im2col(const Mat<T>& in, int h, int w, Mat<T>& cols) {
  const int ho = conv_out(h);
  const int wo = conv_out(w);
  const auto channels = in.rows();
  cols.resize(channels * 9, static_cast<Eigen::Index>(ho) * wo);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const T* src = in.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = cols.row(c * 9 + ky * 3 + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * 2 - 1 + ky;
          T* row = dst + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * 2 - 1 + kx;
            row[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& cols, int h, int w, Mat<T>& out) {
  const int ho = conv_out(h);
  const int wo = conv_out(w);
  const auto channels = cols.rows() / 9;
  out.setZero(channels, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < channels; ++c) {
    T* dst = out.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = cols.row(c * 9 + ky * 3 + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * 2 - 1 + ky;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + static_cast<std::size_t>(oy) * wo;
          T* line = dst + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * 2 - 1 + kx;
            if (ix >= 0 && ix < w) line[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T leaky(T v) {
  return v > T(0) ? v : T(kSlope) * v;
}

template <typename T>
T leaky_grad(T v) {
  return v > T(0) ? T(1) : T(kSlope);
}

template <typename T>
Eigen::Map<const Mat<T>> as_matrix(const ParamTensor<T>& t, Eigen::Index rows,
                                   Eigen::Index cols) {
  return {t.values.data(), rows, cols};
}

template <typename T>
Eigen::Map<Mat<T>> as_matrix(ParamTensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
  return {t.values.data(), rows, cols};
}

template <typename T>
Eigen::Map<const Vec<T>> as_vector(const ParamTensor<T>& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.values.size())};
}

template <typename T>
Eigen::Map<Vec<T>> as_vector(ParamTensor<T>& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.values.size())};
}

std::vector<std::pair<std::string, std::vector<int>>> expected_shapes(
    const ArchitectureConfig& arch) {
  std::vector<std::pair<std::string, std::vector<int>>> shapes;
  int in = arch.input_channels();
  for (int l = 0; l < kLayers; ++l) {
    const int out = arch.widths[static_cast<std::size_t>(l)];
    const std::string id = std::to_string(l + 1);
    shapes.push_back({"conv" + id + ".weight", {out, in, 3, 3}});
    shapes.push_back({"conv" + id + ".bias", {out}});
    if (l + 1 < kLayers) {
      shapes.push_back({"norm" + id + ".gamma", {out}});
      shapes.push_back({"norm" + id + ".beta", {out}});
    }
    in = out;
  }
  const int f = arch.feature_size();
  const int h = arch.head_hidden;
  shapes.push_back({"head1d.fc1.weight", {h, f}});
  shapes.push_back({"head1d.fc1.bias", {h}});
  shapes.push_back({"head1d.fc2.weight", {3 * arch.lut_bins, h}});
  shapes.push_back({"head1d.fc2.bias", {3 * arch.lut_bins}});
  shapes.push_back({"head3d.fc1.weight", {h, f}});
  shapes.push_back({"head3d.fc1.bias", {h}});
  shapes.push_back({"head3d.fc2.weight", {arch.basis_count, h}});
  shapes.push_back({"head3d.fc2.bias", {arch.basis_count}});
  shapes.push_back({"lut3d.basis",
                    {arch.basis_count, arch.lut_dim, arch.lut_dim, arch.lut_dim, 3}});
  return shapes;
}

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

}  // namespace

std::string_view to_string(ScoreEncoding e) noexcept {
  switch (e) {
    case ScoreEncoding::Symmetric: return "symmetric";
    case ScoreEncoding::Unit: return "unit";
    case ScoreEncoding::Wide: return "wide";
  }
  return "symmetric";
}

std::string_view to_string(LabelEncoding e) noexcept {
  return e == LabelEncoding::Integer ? "integer" : "unit";
}

ScoreEncoding parse_score_encoding(std::string_view s) {
  if (s == "symmetric") return ScoreEncoding::Symmetric;
  if (s == "unit") return ScoreEncoding::Unit;
  if (s == "wide") return ScoreEncoding::Wide;
  fail(ErrorCode::InvalidArgument, "unknown score encoding '" + std::string(s) + "'");
}

LabelEncoding parse_label_encoding(std::string_view s) {
  if (s == "integer") return LabelEncoding::Integer;
  if (s == "unit") return LabelEncoding::Unit;
  fail(ErrorCode::InvalidArgument, "unknown label encoding '" + std::string(s) + "'");
}

void ArchitectureConfig::validate() const {
  if (input_size < 1) fail(ErrorCode::InvalidSize, "input_size must be positive");
  for (int w : widths) {
    if (w < 1) fail(ErrorCode::InvalidSize, "layer widths must be positive");
  }
  if (head_hidden < 1) fail(ErrorCode::InvalidSize, "head_hidden must be positive");
  if (lut_bins < 2) fail(ErrorCode::InvalidSize, "lut_bins must be at least 2");
  if (lut_dim < 2) fail(ErrorCode::InvalidSize, "lut_dim must be at least 2");
  if (basis_count < 1) fail(ErrorCode::InvalidSize, "basis_count must be positive");
}

double encode_score(double score, ScoreEncoding e) noexcept {
  switch (e) {
    case ScoreEncoding::Symmetric: return score;
    case ScoreEncoding::Unit: return (score + 1.0) / 2.0;
    case ScoreEncoding::Wide: return score * 5.0;
  }
  return score;
}

double encode_label(int label, LabelEncoding e) noexcept {
  return e == LabelEncoding::Integer ? static_cast<double>(label)
                                     : (label - 1) / static_cast<double>(kMaxLabel - 1);
}

ConditionedInput condition(const ImageBuffer& image, double score,
                           std::optional<int> label,
                           const ArchitectureConfig& arch,
                           bool allow_extended_score) {
  if (image.empty()) fail(ErrorCode::InvalidImage, "cannot condition an empty image");
  if (image.colorspace() != ColorSpace::Srgb) {
    fail(ErrorCode::InvalidImage, "network input must be sRGB");
  }
  if (!std::isfinite(score) || (!allow_extended_score && (score < -1.0 || score > 1.0))) {
    fail(ErrorCode::ScoreOutOfRange, "score " + std::to_string(score) + " outside [-1,1]");
  }
  if (arch.use_label) {
    if (!label) fail(ErrorCode::LabelOutOfRange, "a skin-tone label is required");
    if (*label < 1 || *label > kMaxLabel) {
      fail(ErrorCode::LabelOutOfRange,
           "label " + std::to_string(*label) + " outside 1..10");
    }
  }

  const int n = arch.input_size;
  const ImageBuffer* src = &image;
  ImageBuffer resized;
  if (image.width() != n || image.height() != n) {
    resized = resize_bilinear(image, n, n);
    src = &resized;
  }
  ConditionedInput x;
  x.channels = arch.input_channels();
  x.size = n;
  const std::size_t area = static_cast<std::size_t>(n) * n;
  x.planes.resize(area * static_cast<std::size_t>(x.channels));
  auto data = src->data();
  for (std::size_t p = 0; p < area; ++p) {
    for (int c = 0; c < 3; ++c) x.planes[c * area + p] = data[p * 3 + c];
  }
  std::fill_n(x.planes.begin() + 3 * area, area,
              static_cast<float>(encode_score(score, arch.score_encoding)));
  if (arch.use_label) {
    std::fill_n(x.planes.begin() + 4 * area, area,
                static_cast<float>(encode_label(*label, arch.label_encoding)));
  }
  return x;
}

// --- parameters ------------------------------------------------------------

template <typename T>
std::size_t ParamSet<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

template <typename T>
const ParamTensor<T>& ParamSet<T>::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  fail(ErrorCode::ShapeMismatch, "no parameter tensor named " + std::string(name));
}

template <typename T>
ParamTensor<T>& ParamSet<T>::find(std::string_view name) {
  return const_cast<ParamTensor<T>&>(std::as_const(*this).find(name));
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  out.version = version;
  for (const auto& t : tensors) {
    out.tensors.push_back({t.name, t.shape, std::vector<T>(t.values.size(), T(0))});
  }
  return out;
}

template <typename T>
void check_shapes(const ParamSet<T>& params, const ArchitectureConfig& arch) {
  auto shapes = expected_shapes(arch);
  if (params.size() != shapes.size()) {
    fail(ErrorCode::ShapeMismatch, "parameter tensor count does not match architecture");
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = params[i];
    if (t.name != shapes[i].first || t.shape != shapes[i].second ||
        t.values.size() != product(t.shape)) {
      fail(ErrorCode::ShapeMismatch, "parameter tensor '" + t.name +
                                         "' does not match expected '" +
                                         shapes[i].first + "'");
    }
  }
}

ParamSet<float> init_params(const ArchitectureConfig& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  ParamSet<float> params;
  for (auto& [name, shape] : expected_shapes(arch)) {
    params.tensors.push_back({name, shape, std::vector<float>(product(shape), 0.0f)});
  }
  auto kaiming = [&](ParamTensor<float>& t, int fan_in) {
    const double gain = std::sqrt(2.0 / (1.0 + kSlope * kSlope));
    const double bound = gain * std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (float& v : t.values) v = static_cast<float>(dist(rng));
  };
  int in = arch.input_channels();
  for (int l = 0; l < kLayers; ++l) {
    kaiming(params[ParamLayout::conv_weight(l)], in * 9);
    if (l + 1 < kLayers) {
      auto& gamma = params[ParamLayout::norm_gamma(l)].values;
      std::fill(gamma.begin(), gamma.end(), 1.0f);
    }
    in = arch.widths[static_cast<std::size_t>(l)];
  }
  kaiming(params[ParamLayout::head1d_fc1_weight], arch.feature_size());
  kaiming(params[ParamLayout::head3d_fc1_weight], arch.feature_size());
  params[ParamLayout::head3d_fc2_bias].values[0] = 1.0f;
  {
    // rows k >= 1 multiply zero basis grids, so the transform stays an identity
    auto& w = params[ParamLayout::head3d_fc2_weight].values;
    const double bound = 0.1 / std::sqrt(static_cast<double>(arch.head_hidden));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = static_cast<std::size_t>(arch.head_hidden); i < w.size(); ++i) {
      w[i] = static_cast<float>(dist(rng));
    }
  }

  const auto id = identity_3d(arch.lut_dim);
  auto& basis = params[ParamLayout::basis].values;
  std::copy(id.grid.begin(), id.grid.end(), basis.begin());
  return params;
}

template <typename T>
BasisLutBank basis_bank(const ParamSet<T>& params, const ArchitectureConfig& arch) {
  const auto& src = params[ParamLayout::basis].values;
  BasisLutBank bank;
  const std::size_t per = static_cast<std::size_t>(arch.lut_dim) * arch.lut_dim *
                          arch.lut_dim * 3;
  for (int k = 0; k < arch.basis_count; ++k) {
    Lut3D lut;
    lut.dim = arch.lut_dim;
    lut.grid.assign(src.begin() + static_cast<std::ptrdiff_t>(k * per),
                    src.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
    bank.basis.push_back(std::move(lut));
  }
  return bank;
}

// --- network ---------------------------------------------------------------

template <typename T>
struct Tape {
  struct Layer {
    int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
    Mat<T> cols;
    Mat<T> z;     // pre-activation
    Mat<T> xhat;  // normalized post-activation (norm layers only)
    Vec<T> inv_std;
  };
  std::array<Layer, kLayers> layers;
  Vec<T> feature;
  Vec<T> h1_pre, h1, h3_pre, h3;
  std::uint64_t version = 0;
  bool valid = false;
};

template <typename T>
Backbone<T>::Backbone(ArchitectureConfig arch)
    : arch_(arch), tape_(std::make_unique<Tape<T>>()) {
  arch_.validate();
}

template <typename T>
Backbone<T>::~Backbone() = default;
template <typename T>
Backbone<T>::Backbone(Backbone&&) noexcept = default;
template <typename T>
Backbone<T>& Backbone<T>::operator=(Backbone&&) noexcept = default;

template <typename T>
ForwardResult<T> Backbone<T>::forward(const ParamSet<T>& params,
                                      const ConditionedInput& x, bool record) {
  check_shapes(params, arch_);
  if (x.channels != arch_.input_channels() || x.size < 1 ||
      x.planes.size() != static_cast<std::size_t>(x.channels) * x.size * x.size) {
    fail(ErrorCode::ShapeMismatch, "conditioned input does not match the architecture");
  }
  Tape<T>& tape = *tape_;
  tape.valid = false;

  Mat<T> act(x.channels, static_cast<Eigen::Index>(x.size) * x.size);
  for (Eigen::Index i = 0; i < act.size(); ++i) {
    act.data()[i] = static_cast<T>(x.planes[static_cast<std::size_t>(i)]);
  }
  int h = x.size;
  int w = x.size;
  int in_ch = x.channels;
  for (int l = 0; l < kLayers; ++l) {
    auto& L = tape.layers[static_cast<std::size_t>(l)];
    const int out_ch = arch_.widths[static_cast<std::size_t>(l)];
    L.in_h = h;
    L.in_w = w;
    L.out_h = conv_out(h);
    L.out_w = conv_out(w);
    im2col(act, h, w, L.cols);
    auto weight = as_matrix(params[ParamLayout::conv_weight(l)], out_ch, in_ch * 9);
    auto bias = as_vector(params[ParamLayout::conv_bias(l)]);
    L.z.noalias() = weight * L.cols;
    L.z.colwise() += bias;
    Mat<T> y = L.z.unaryExpr([](T v) { return leaky(v); });
    if (l + 1 < kLayers) {
      Vec<T> mean = y.rowwise().mean();
      y.colwise() -= mean;
      Vec<T> var = y.array().square().rowwise().mean();
      L.inv_std = (var.array() + T(kNormEps)).rsqrt();
      L.xhat = L.inv_std.asDiagonal() * y;
      auto gamma = as_vector(params[ParamLayout::norm_gamma(l)]);
      auto beta = as_vector(params[ParamLayout::norm_beta(l)]);
      act = gamma.asDiagonal() * L.xhat;
      act.colwise() += beta;
    } else {
      act = std::move(y);
    }
    h = L.out_h;
    w = L.out_w;
    in_ch = out_ch;
  }
  tape.feature = act.rowwise().mean();

  const int f = arch_.feature_size();
  const int hid = arch_.head_hidden;
  const int s3 = 3 * arch_.lut_bins;
  const int k = arch_.basis_count;
  auto fc = [&](std::size_t wi, std::size_t bi, int rows, int cols, const Vec<T>& in) {
    Vec<T> out = as_matrix(params[wi], rows, cols) * in;
    out += as_vector(params[bi]);
    return out;
  };
  tape.h1_pre = fc(ParamLayout::head1d_fc1_weight, ParamLayout::head1d_fc1_bias, hid, f, tape.feature);
  tape.h1 = tape.h1_pre.unaryExpr([](T v) { return leaky(v); });
  Vec<T> lut_out = fc(ParamLayout::head1d_fc2_weight, ParamLayout::head1d_fc2_bias, s3, hid, tape.h1);
  tape.h3_pre = fc(ParamLayout::head3d_fc1_weight, ParamLayout::head3d_fc1_bias, hid, f, tape.feature);
  tape.h3 = tape.h3_pre.unaryExpr([](T v) { return leaky(v); });
  Vec<T> w_out = fc(ParamLayout::head3d_fc2_weight, ParamLayout::head3d_fc2_bias, k, hid, tape.h3);

  ForwardResult<T> res;
  res.feature.assign(tape.feature.data(), tape.feature.data() + f);
  res.lut_residual.assign(lut_out.data(), lut_out.data() + s3);
  res.luts = identity_1d_triple(arch_.lut_bins);
  for (int axis = 0; axis < 3; ++axis) {
    auto& e = res.luts[axis].entries;
    for (int i = 0; i < arch_.lut_bins; ++i) {
      e[static_cast<std::size_t>(i)] += static_cast<double>(lut_out[axis * arch_.lut_bins + i]);
    }
  }
  res.weights.assign(w_out.data(), w_out.data() + k);
  tape.version = params.version;
  tape.valid = record;
  return res;
}

template <typename T>
void Backbone<T>::backward(const ParamSet<T>& params, std::span<const double> grad_luts,
                           std::span<const double> grad_weights, ParamSet<T>& grads) {
  Tape<T>& tape = *tape_;
  if (!tape.valid) fail(ErrorCode::StaleTape, "no recorded forward pass");
  if (tape.version != params.version) {
    fail(ErrorCode::StaleTape, "parameters changed since the forward pass");
  }
  check_shapes(grads, arch_);
  const int f = arch_.feature_size();
  const int hid = arch_.head_hidden;
  const int s3 = 3 * arch_.lut_bins;
  const int k = arch_.basis_count;
  if (grad_luts.size() != static_cast<std::size_t>(s3) ||
      grad_weights.size() != static_cast<std::size_t>(k)) {
    fail(ErrorCode::ShapeMismatch, "upstream gradient sizes do not match the heads");
  }

  Vec<T> d_feature = Vec<T>::Zero(f);
  auto head_backward = [&](const Vec<T>& upstream, const Vec<T>& pre, const Vec<T>& hidden,
                           std::size_t w1, std::size_t b1, std::size_t w2, std::size_t b2,
                           int out_rows) {
    as_matrix(grads[w2], out_rows, hid).noalias() += upstream * hidden.transpose();
    as_vector(grads[b2]) += upstream;
    Vec<T> dh = as_matrix(params[w2], out_rows, hid).transpose() * upstream;
    dh.array() *= pre.unaryExpr([](T v) { return leaky_grad(v); }).array();
    as_matrix(grads[w1], hid, f).noalias() += dh * tape.feature.transpose();
    as_vector(grads[b1]) += dh;
    d_feature.noalias() += as_matrix(params[w1], hid, f).transpose() * dh;
  };
  Vec<T> up1(s3);
  for (int i = 0; i < s3; ++i) up1[i] = static_cast<T>(grad_luts[static_cast<std::size_t>(i)]);
  Vec<T> up3(k);
  for (int i = 0; i < k; ++i) up3[i] = static_cast<T>(grad_weights[static_cast<std::size_t>(i)]);
  head_backward(up1, tape.h1_pre, tape.h1, ParamLayout::head1d_fc1_weight,
                ParamLayout::head1d_fc1_bias, ParamLayout::head1d_fc2_weight,
                ParamLayout::head1d_fc2_bias, s3);
  head_backward(up3, tape.h3_pre, tape.h3, ParamLayout::head3d_fc1_weight,
                ParamLayout::head3d_fc1_bias, ParamLayout::head3d_fc2_weight,
                ParamLayout::head3d_fc2_bias, k);

  // Global average pool.
  const auto& last = tape.layers.back();
  const Eigen::Index pooled = static_cast<Eigen::Index>(last.out_h) * last.out_w;
  Mat<T> d_act = (d_feature / static_cast<T>(pooled)).replicate(1, pooled);

  Mat<T> d_cols;
  for (int l = kLayers - 1; l >= 0; --l) {
    const auto& L = tape.layers[static_cast<std::size_t>(l)];
    const int out_ch = arch_.widths[static_cast<std::size_t>(l)];
    const int in_ch = l == 0 ? arch_.input_channels() : arch_.widths[static_cast<std::size_t>(l - 1)];
    Mat<T> dz;
    if (l + 1 < kLayers) {
      const T n = static_cast<T>(L.xhat.cols());
      auto gamma = as_vector(params[ParamLayout::norm_gamma(l)]);
      as_vector(grads[ParamLayout::norm_gamma(l)]) +=
          (d_act.array() * L.xhat.array()).rowwise().sum().matrix();
      as_vector(grads[ParamLayout::norm_beta(l)]) += d_act.rowwise().sum();
      Mat<T> d_xhat = gamma.asDiagonal() * d_act;
      Vec<T> sum_d = d_xhat.rowwise().sum();
      Vec<T> sum_dx = (d_xhat.array() * L.xhat.array()).rowwise().sum();
      dz = n * d_xhat;
      dz.colwise() -= sum_d;
      dz -= sum_dx.asDiagonal() * L.xhat;
      dz = (L.inv_std / n).asDiagonal() * dz;
    } else {
      dz = std::move(d_act);
    }
    dz.array() *= L.z.unaryExpr([](T v) { return leaky_grad(v); }).array();
    as_matrix(grads[ParamLayout::conv_weight(l)], out_ch, in_ch * 9).noalias() +=
        dz * L.cols.transpose();
    as_vector(grads[ParamLayout::conv_bias(l)]) += dz.rowwise().sum();
    if (l > 0) {
      d_cols.noalias() =
          as_matrix(params[ParamLayout::conv_weight(l)], out_ch, in_ch * 9).transpose() * dz;
      col2im(d_cols, L.in_h, L.in_w, d_act);
    }
  }
}

template <typename T>
std::vector<T> Backbone<T>::normalized_activations(int layer) const {
  if (layer < 0 || layer >= kLayers - 1) {
    fail(ErrorCode::InvalidArgument, "norm layer index out of range");
  }
  const auto& x = tape_->layers[static_cast<std::size_t>(layer)].xhat;
  return {x.data(), x.data() + x.size()};
}

// --- Adam ------------------------------------------------------------------

AdamState make_adam_state(const ParamSet<float>& params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& t : params.tensors) {
    state.m.emplace_back(t.values.size(), 0.0);
    state.v.emplace_back(t.values.size(), 0.0);
  }
  return state;
}

double clip_grad_norm(ParamSet<float>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads.tensors) {
    for (float g : t.values) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& t : grads.tensors) {
      for (float& g : t.values) g *= scale;
    }
  }
  return norm;
}

void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].values.size() != params[i].values.size() ||
        state.m[i].size() != params[i].values.size()) {
      fail(ErrorCode::ShapeMismatch, "gradient tensor '" + grads[i].name +
                                         "' does not match its parameter");
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].values;
    const auto& g = grads[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      const double delta = c.lr * mhat / (std::sqrt(vhat) + c.eps);
      if (delta != 0.0) p[j] = static_cast<float>(p[j] - delta);
    }
  }
  ++params.version;
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template void check_shapes(const ParamSet<float>&, const ArchitectureConfig&);
template void check_shapes(const ParamSet<double>&, const ArchitectureConfig&);
template BasisLutBank basis_bank(const ParamSet<float>&, const ArchitectureConfig&);
template BasisLutBank basis_bank(const ParamSet<double>&, const ArchitectureConfig&);
template class Backbone<float>;
template class Backbone<double>;

}  // namespace qglut
