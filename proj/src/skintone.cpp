#include "qglut/skintone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "qglut/error.hpp"

namespace qglut {
namespace {

double dist2(const LabPixel& p, const LabPixel& q) noexcept {
  const double dl = p.l - q.l;
  const double da = p.a - q.a;
  const double db = p.b - q.b;
  return dl * dl + da * da + db * db;
}

}  // namespace

std::string_view to_string(CenterProvenance p) noexcept {
  return p == CenterProvenance::Clustered ? "CLUSTERED" : "IMPORTED";
}

void SkinToneCenters::validate() const {
  if (centers.empty() || centers.size() > 10) {
    fail(ErrorCode::InvalidArgument, "skin-tone centre sets hold 1 to 10 centres");
  }
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      if (dist2(centers[i], centers[j]) <= 0.0) {
        fail(ErrorCode::InvalidArgument, "skin-tone centres must be pairwise distinct");
      }
    }
  }
}

LabPixel mean_skin_color(const ImageBuffer& img, const Mask& mask) {
  if (img.empty()) fail(ErrorCode::InvalidImage, "empty image");
  if (mask.width != img.width() || mask.height != img.height() ||
      mask.bits.size() != img.pixel_count()) {
    fail(ErrorCode::DimensionMismatch, "mask and image dimensions differ");
  }
  double sl = 0.0, sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const float* p = img.pixel(x, y);
      LabPixel lab = srgb_to_lab(RgbPixel(p[0], p[1], p[2]));
      sl += lab.l;
      sa += lab.a;
      sb += lab.b;
      ++n;
    }
  }
  if (n == 0) fail(ErrorCode::EmptyMask, "mask selects no pixels");
  const double inv = 1.0 / static_cast<double>(n);
  return LabPixel(sl * inv, sa * inv, sb * inv);
}

Mask central_crop_mask(int width, int height) {
  Mask m;
  m.width = width;
  m.height = height;
  m.bits.assign(static_cast<std::size_t>(width) * height, 0);
  const int cw = std::max(1, width / 2);
  const int ch = std::max(1, height / 2);
  const int x0 = (width - cw) / 2;
  const int y0 = (height - ch) / 2;
  for (int y = y0; y < y0 + ch; ++y) {
    for (int x = x0; x < x0 + cw; ++x) {
      m.bits[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
  return m;
}

KMeansResult kmeans_lab(std::span<const LabPixel> points, const KMeansOptions& options) {
  const int k = options.k;
  if (k < 1) fail(ErrorCode::InvalidArgument, "k must be positive");
  if (points.size() < static_cast<std::size_t>(k)) {
    fail(ErrorCode::TooFewPoints, "need at least k points");
  }
  std::mt19937_64 rng(options.seed);
  const std::size_t n = points.size();

  // k-means++ seeding.
  std::vector<LabPixel> centers;
  centers.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.push_back(points[pick(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(points[i], centers[0]);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) {
      fail(ErrorCode::TooFewPoints, "fewer distinct points than k");
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = n - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0.0 && acc >= target) {
        chosen = i;
        break;
      }
    }
    while (d2[chosen] <= 0.0) --chosen;  // guards the rounding tail
    centers.push_back(points[chosen]);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], dist2(points[i], centers.back()));
    }
  }

  KMeansResult result;
  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(points[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        double d = dist2(points[i], centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
      objective += best_d;
    }
    result.objective_trace.push_back(objective);

    std::vector<double> sum(static_cast<std::size_t>(k) * 3, 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = static_cast<std::size_t>(assign[i]);
      sum[c * 3] += points[i].l;
      sum[c * 3 + 1] += points[i].a;
      sum[c * 3 + 2] += points[i].b;
      ++count[c];
    }
    double moved = 0.0;
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (count[c] == 0) continue;  // empty cluster keeps its centre
      const double inv = 1.0 / static_cast<double>(count[c]);
      LabPixel next(sum[c * 3] * inv, sum[c * 3 + 1] * inv, sum[c * 3 + 2] * inv);
      moved = std::max(moved, std::sqrt(dist2(next, centers[c])));
      centers[c] = next;
    }
    result.iterations = iter + 1;
    if (moved < options.tolerance) break;
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) order[static_cast<std::size_t>(c)] = c;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const auto& p = centers[static_cast<std::size_t>(x)];
    const auto& q = centers[static_cast<std::size_t>(y)];
    return std::tie(p.l, p.a, p.b) < std::tie(q.l, q.a, q.b);
  });
  result.centers.provenance = CenterProvenance::Clustered;
  for (int r = 0; r < k; ++r) {
    result.centers.centers.push_back(centers[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]);
  }
  // Final labels come from nearest-centre classification so they agree with
  // classify() on the returned centres.
  result.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.labels[i] = classify(points[i], result.centers);
  }
  return result;
}

int classify(const LabPixel& c, const SkinToneCenters& centers) {
  if (centers.centers.empty()) fail(ErrorCode::InvalidArgument, "no centres");
  int best = 0;
  double best_d = dist2(c, centers.centers[0]);
  for (std::size_t i = 1; i < centers.centers.size(); ++i) {
    double d = dist2(c, centers.centers[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best + 1;
}

double silhouette(std::span<const LabPixel> points, std::span<const int> labels) {
  if (points.size() != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "points and labels differ in length");
  }
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2 || points.size() < 2) {
    fail(ErrorCode::DegenerateClustering, "silhouette needs at least two non-empty clusters");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& own = members[labels[i]];
    if (own.size() == 1) continue;
    double a = 0.0;
    for (std::size_t j : own) {
      if (j != i) a += std::sqrt(dist2(points[i], points[j]));
    }
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, idx] : members) {
      if (label == labels[i]) continue;
      double s = 0.0;
      for (std::size_t j : idx) s += std::sqrt(dist2(points[i], points[j]));
      b = std::min(b, s / static_cast<double>(idx.size()));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(points.size());
}

SkinToneCenters monk_reference_centers() {
  static constexpr unsigned kSwatches[10] = {0xf6ede4, 0xf3e7db, 0xf7ead0, 0xeadaba,
                                             0xd7bd96, 0xa07e56, 0x825c43, 0x604134,
                                             0x3a312a, 0x292420};
  SkinToneCenters out;
  out.provenance = CenterProvenance::Imported;
  for (unsigned hex : kSwatches) {
    RgbPixel rgb(((hex >> 16) & 0xff) / 255.0, ((hex >> 8) & 0xff) / 255.0,
                 (hex & 0xff) / 255.0);
    out.centers.push_back(srgb_to_lab(rgb));
  }
  return out;
}

void write_centers(std::ostream& out, const SkinToneCenters& centers) {
  centers.validate();
  out << "provenance " << to_string(centers.provenance) << '\n';
  out << std::setprecision(17);
  for (const auto& c : centers.centers) out << c.l << ' ' << c.a << ' ' << c.b << '\n';
}

void write_centers(const std::filesystem::path& path, const SkinToneCenters& centers) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_centers(out, centers);
}

SkinToneCenters read_centers(std::istream& in) {
  SkinToneCenters out;
  bool have_header = false;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line.substr(first));
    if (!have_header) {
      std::string key, value;
      ls >> key >> value;
      if (key != "provenance" || (value != "CLUSTERED" && value != "IMPORTED")) {
        fail(ErrorCode::InvalidArgument,
             "centres file must start with 'provenance CLUSTERED|IMPORTED'");
      }
      out.provenance =
          value == "CLUSTERED" ? CenterProvenance::Clustered : CenterProvenance::Imported;
      have_header = true;
      continue;
    }
    double l, a, b;
    ls >> l >> a >> b;
    if (!ls) fail(ErrorCode::InvalidArgument, "malformed centre line: " + line);
    out.centers.emplace_back(l, a, b);
  }
  if (!have_header) fail(ErrorCode::InvalidArgument, "centres file has no provenance header");
  out.validate();
  return out;
}

SkinToneCenters read_centers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_centers(in);
}

}  // namespace qglut
