#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "qglut/color.hpp"
#include "qglut/image.hpp"

namespace qglut {

enum class CenterProvenance { Clustered, Imported };

std::string_view to_string(CenterProvenance p) noexcept;

/// Skin-tone category centres in CIELAB. Label n (1-based) is centers[n-1].
struct SkinToneCenters {
  std::vector<LabPixel> centers;
  CenterProvenance provenance = CenterProvenance::Clustered;

  int size() const noexcept { return static_cast<int>(centers.size()); }
  /// Between 1 and 10 centres, pairwise distinct.
  void validate() const;
};

/// Mean of srgb_to_lab over the selected pixels (averaged in Lab).
LabPixel mean_skin_color(const ImageBuffer& img, const Mask& mask);

/// Central 50% x 50% crop mask, used when no skin mask is available.
Mask central_crop_mask(int width, int height);

struct KMeansOptions {
  int k = 10;
  std::uint64_t seed = 0;
  int max_iterations = 300;
  double tolerance = 1e-4;  // max centre movement that ends the iteration
};

struct KMeansResult {
  SkinToneCenters centers;              // sorted by L ascending
  std::vector<int> labels;              // 1-based, per input point
  std::vector<double> objective_trace;  // after each assignment step
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. Throws TooFewPoints when
/// there are fewer distinct points than k.
KMeansResult kmeans_lab(std::span<const LabPixel> points, const KMeansOptions& options = {});

/// 1-based index of the Euclidean-nearest centre; ties go to the lower index.
int classify(const LabPixel& c, const SkinToneCenters& centers);

/// Mean silhouette coefficient. Points in singleton clusters contribute 0.
double silhouette(std::span<const LabPixel> points, std::span<const int> labels);

/// Monk Skin Tone Scale swatches converted to Lab, in scale order 1..10.
SkinToneCenters monk_reference_centers();

void write_centers(std::ostream& out, const SkinToneCenters& centers);
void write_centers(const std::filesystem::path& path, const SkinToneCenters& centers);
SkinToneCenters read_centers(std::istream& in);
SkinToneCenters read_centers(const std::filesystem::path& path);

}  // namespace qglut
