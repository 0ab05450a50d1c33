#include "qglut/mos.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "qglut/csv.hpp"
#include "qglut/error.hpp"

namespace qglut {
namespace {

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;
  double m4 = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) {
    const double d = x - m.mean;
    m.m2 += d * d;
    m.m4 += d * d * d * d;
  }
  m.m2 /= static_cast<double>(xs.size());
  m.m4 /= static_cast<double>(xs.size());
  return m;
}

const double kSqrt20 = std::sqrt(20.0);

}  // namespace

std::string_view to_string(Distribution d) noexcept {
  return d == Distribution::Gaussian ? "GAUSSIAN" : "NON_GAUSSIAN";
}

void RatingTable::add(Rating r) {
  if (!std::isfinite(r.rating) || r.rating < kRatingMin || r.rating > kRatingMax) {
    fail(ErrorCode::InvalidArgument, "rating outside [-2.5, 2.5]");
  }
  records.push_back(std::move(r));
}

void RatingTable::validate() const {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!std::isfinite(r.rating) || r.rating < kRatingMin || r.rating > kRatingMax) {
      fail(ErrorCode::InvalidArgument, "rating outside [-2.5, 2.5]");
    }
    if (!seen.emplace(r.subject_id, r.image_id).second) {
      fail(ErrorCode::InvalidArgument,
           "duplicate rating for subject " + r.subject_id + " on image " + r.image_id);
    }
  }
}

std::optional<double> kurtosis(std::span<const double> ratings) {
  auto m = moments(ratings);
  if (m.m2 <= 0.0) return std::nullopt;
  return m.m4 / (m.m2 * m.m2);
}

Distribution classify_distribution(std::span<const double> ratings) {
  if (ratings.size() < 4) {
    fail(ErrorCode::TooFewRatings, "kurtosis needs at least four ratings");
  }
  auto k = kurtosis(ratings);
  if (!k) return Distribution::NonGaussian;
  return (*k >= 2.0 && *k <= 4.0) ? Distribution::Gaussian : Distribution::NonGaussian;
}

std::vector<std::size_t> flag_outliers(std::span<const double> ratings, Distribution d) {
  auto m = moments(ratings);
  const double sigma = std::sqrt(m.m2);
  const double band = (d == Distribution::Gaussian ? 2.0 : kSqrt20) * sigma;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (std::abs(ratings[i] - m.mean) > band) out.push_back(i);
  }
  return out;
}

std::vector<OutlierFlag> screen_outliers(const RatingTable& table,
                                         std::vector<ImageScreening>* images) {
  std::map<std::string, std::vector<const Rating*>> by_image;
  for (const auto& r : table.records) by_image[r.image_id].push_back(&r);
  std::vector<OutlierFlag> flags;
  for (const auto& [image, recs] : by_image) {
    ImageScreening info;
    info.image_id = image;
    info.n_ratings = recs.size();
    std::vector<double> values;
    for (const auto* r : recs) values.push_back(r->rating);
    info.kurtosis = kurtosis(values);
    if (values.size() >= 4) {
      info.distribution = classify_distribution(values);
      for (std::size_t idx : flag_outliers(values, *info.distribution)) {
        flags.push_back({recs[idx]->subject_id, image});
        ++info.n_flagged;
      }
    }
    if (images) images->push_back(std::move(info));
  }
  return flags;
}

RejectionResult reject_subjects(const RatingTable& table, std::span<const OutlierFlag> flags,
                                double max_fraction) {
  std::map<std::string, std::size_t> total;
  std::map<std::string, std::size_t> flagged;
  for (const auto& r : table.records) ++total[r.subject_id];
  std::set<std::pair<std::string, std::string>> flag_set;
  for (const auto& f : flags) {
    if (flag_set.emplace(f.subject_id, f.image_id).second) ++flagged[f.subject_id];
  }
  RejectionResult result;
  std::set<std::string> rejected;
  for (const auto& [subject, n] : total) {
    const double fraction = static_cast<double>(flagged[subject]) / static_cast<double>(n);
    if (fraction > max_fraction) rejected.insert(subject);
  }
  if (!total.empty() && rejected.size() == total.size()) {
    fail(ErrorCode::AllSubjectsRejected, "every subject exceeded the outlier budget");
  }
  result.report.total_ratings = table.size();
  result.report.rejected_subjects.assign(rejected.begin(), rejected.end());
  result.report.outliers.assign(flags.begin(), flags.end());
  for (const auto& r : table.records) {
    if (rejected.count(r.subject_id)) continue;
    if (flag_set.count({r.subject_id, r.image_id})) {
      ++result.report.removed_outlier_ratings;
      continue;
    }
    result.retained.records.push_back(r);
  }
  return result;
}

const MosEntry* MosTable::find(std::string_view image_id) const noexcept {
  for (const auto& e : entries) {
    if (e.image_id == image_id) return &e;
  }
  return nullptr;
}

MosTable compute_mos(const RatingTable& retained) {
  std::map<std::string, std::vector<const Rating*>> by_subject;
  for (const auto& r : retained.records) by_subject[r.subject_id].push_back(&r);
  std::map<std::string, std::pair<double, std::size_t>> acc;  // image -> (sum z', n)
  for (const auto& [subject, recs] : by_subject) {
    std::vector<double> values;
    for (const auto* r : recs) values.push_back(r->rating);
    auto m = moments(values);
    const double sigma = std::sqrt(m.m2);
    if (!(sigma > 0.0)) {
      fail(ErrorCode::ZeroVarianceSubject,
           "subject " + subject + " has zero rating variance");
    }
    for (const auto* r : recs) {
      const double z = (r->rating - m.mean) / sigma;
      const double rescaled = 100.0 * (z + 3.0) / 6.0;
      auto& slot = acc[r->image_id];
      slot.first += rescaled;
      ++slot.second;
    }
  }
  MosTable table;
  for (const auto& [image, slot] : acc) {
    MosEntry e;
    e.image_id = image;
    e.n_ratings = slot.second;
    e.mos = slot.first / static_cast<double>(slot.second);
    e.normalized_score = normalize_for_training(e.mos);
    table.entries.push_back(std::move(e));
  }
  return table;
}

MosTable process_ratings(const RatingTable& table) {
  table.validate();
  std::vector<ImageScreening> images;
  auto flags = screen_outliers(table, &images);
  auto rejection = reject_subjects(table, flags);

  // Constant raters carry no information and make the z-score undefined.
  std::map<std::string, std::vector<double>> per_subject;
  for (const auto& r : rejection.retained.records) per_subject[r.subject_id].push_back(r.rating);
  std::set<std::string> constant;
  for (const auto& [subject, values] : per_subject) {
    if (!(moments(values).m2 > 0.0)) constant.insert(subject);
  }
  RatingTable usable;
  for (const auto& r : rejection.retained.records) {
    if (!constant.count(r.subject_id)) usable.records.push_back(r);
  }
  if (usable.records.empty()) {
    fail(ErrorCode::AllSubjectsRejected, "no subject with usable ratings remains");
  }
  MosTable out = compute_mos(usable);
  out.report = std::move(rejection.report);
  out.report.zero_variance_subjects.assign(constant.begin(), constant.end());
  out.report.images = std::move(images);
  return out;
}

double normalize_for_training(double mos) noexcept {
  return std::clamp((mos - 50.0) / 50.0, -1.0, 1.0);
}

double normalize_direct(double raw) noexcept { return std::clamp(raw / 2.5, -1.0, 1.0); }

nlohmann::json RejectionReport::to_json() const {
  nlohmann::json j;
  j["total_ratings"] = total_ratings;
  j["rejected_subjects"] = rejected_subjects;
  j["zero_variance_subjects"] = zero_variance_subjects;
  j["removed_outlier_ratings"] = removed_outlier_ratings;
  j["removed_outlier_fraction"] =
      total_ratings == 0 ? 0.0
                         : static_cast<double>(removed_outlier_ratings) /
                               static_cast<double>(total_ratings);
  auto& outs = j["outliers"] = nlohmann::json::array();
  for (const auto& o : outliers) outs.push_back({{"subject_id", o.subject_id}, {"image_id", o.image_id}});
  auto& imgs = j["images"] = nlohmann::json::array();
  for (const auto& im : images) {
    nlohmann::json e;
    e["image_id"] = im.image_id;
    e["n_ratings"] = im.n_ratings;
    e["kurtosis"] = im.kurtosis ? nlohmann::json(*im.kurtosis) : nlohmann::json(nullptr);
    e["distribution"] = im.distribution ? nlohmann::json(std::string(to_string(*im.distribution)))
                                        : nlohmann::json(nullptr);
    e["n_flagged"] = im.n_flagged;
    imgs.push_back(std::move(e));
  }
  return j;
}

RatingTable read_ratings_csv(std::istream& in) {
  CsvReader csv(in);
  const auto subject = csv.column("subject_id");
  const auto image = csv.column("image_id");
  const auto rating = csv.column("rating");
  RatingTable table;
  while (auto row = csv.next()) {
    Rating r;
    r.subject_id = row->at(subject);
    r.image_id = row->at(image);
    r.rating = parse_double(row->at(rating), "rating");
    table.add(std::move(r));
  }
  table.validate();
  return table;
}

RatingTable read_ratings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_ratings_csv(in);
}

void write_mos_csv(std::ostream& out, const MosTable& table) {
  out << "image_id,mos,normalized_score,n_ratings\n";
  out << std::setprecision(10);
  for (const auto& e : table.entries) {
    out << csv_escape(e.image_id) << ',' << e.mos << ',' << e.normalized_score << ','
        << e.n_ratings << '\n';
  }
}

void write_mos_csv(const std::filesystem::path& path, const MosTable& table) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_mos_csv(out, table);
}

}  // namespace qglut
