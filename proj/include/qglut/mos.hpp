#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace qglut {

inline constexpr double kRatingMin = -2.5;
inline constexpr double kRatingMax = 2.5;

struct Rating {
  std::string subject_id;
  std::string image_id;
  double rating = 0.0;
};

/// Raw per-subject ratings; at most one record per (subject, image), every
/// rating within [-2.5, 2.5].
struct RatingTable {
  std::vector<Rating> records;

  void add(Rating r);
  void validate() const;
  std::size_t size() const noexcept { return records.size(); }
};

enum class Distribution { Gaussian, NonGaussian };

std::string_view to_string(Distribution d) noexcept;

/// Population kurtosis m4 / m2^2; nullopt when the variance is zero.
std::optional<double> kurtosis(std::span<const double> ratings);

/// Gaussian iff 2 <= kurtosis <= 4. Zero variance is NonGaussian. Needs at
/// least four ratings (TooFewRatings).
Distribution classify_distribution(std::span<const double> ratings);

/// Indices of ratings farther than 2 sigma (Gaussian) or sqrt(20) sigma
/// (non-Gaussian) from the image mean. Sigma is the population standard
/// deviation of the ratings.
std::vector<std::size_t> flag_outliers(std::span<const double> ratings, Distribution d);

struct OutlierFlag {
  std::string subject_id;
  std::string image_id;
};

struct ImageScreening {
  std::string image_id;
  std::size_t n_ratings = 0;
  std::optional<double> kurtosis;
  std::optional<Distribution> distribution;  // absent below four ratings
  std::size_t n_flagged = 0;
};

struct RejectionReport {
  std::size_t total_ratings = 0;
  std::vector<std::string> rejected_subjects;
  std::vector<std::string> zero_variance_subjects;
  std::vector<OutlierFlag> outliers;
  std::size_t removed_outlier_ratings = 0;  // flagged ratings of retained subjects
  std::vector<ImageScreening> images;

  nlohmann::json to_json() const;
};

/// Kurtosis classification and outlier flagging over every image. Images with
/// fewer than four ratings are reported but not screened.
std::vector<OutlierFlag> screen_outliers(const RatingTable& table,
                                         std::vector<ImageScreening>* images = nullptr);

struct RejectionResult {
  RatingTable retained;
  RejectionReport report;
};

/// Rejects subjects whose flagged fraction strictly exceeds `max_fraction`,
/// then drops the remaining flagged records. Throws AllSubjectsRejected.
RejectionResult reject_subjects(const RatingTable& table, std::span<const OutlierFlag> flags,
                                double max_fraction = 0.05);

struct MosEntry {
  std::string image_id;
  double mos = 0.0;
  double normalized_score = 0.0;
  std::size_t n_ratings = 0;
};

struct MosTable {
  std::vector<MosEntry> entries;  // sorted by image id
  RejectionReport report;

  const MosEntry* find(std::string_view image_id) const noexcept;
};

/// z-scores per subject, rescaled to 100 (z + 3) / 6 and averaged per image
/// over the contributing subjects. Throws ZeroVarianceSubject.
MosTable compute_mos(const RatingTable& retained);

/// Full pipeline: screening, subject rejection, removal of constant raters,
/// MOS.
MosTable process_ratings(const RatingTable& table);

/// (mos - 50) / 50 clamped to [-1,1].
double normalize_for_training(double mos) noexcept;
/// raw / 2.5 clamped to [-1,1].
double normalize_direct(double raw) noexcept;

// CSV: header `subject_id,image_id,rating`; further columns are ignored.
RatingTable read_ratings_csv(std::istream& in);
RatingTable read_ratings_csv(const std::filesystem::path& path);
void write_mos_csv(std::ostream& out, const MosTable& table);
void write_mos_csv(const std::filesystem::path& path, const MosTable& table);

}  // namespace qglut
