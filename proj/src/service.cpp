#include "qglut/service.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <httplib.h>
#include <json.hpp>
#include <zlib.h>

#include "qglut/csv.hpp"
#include "qglut/error.hpp"
#include "qglut/mos.hpp"

namespace qglut {

namespace {

using nlohmann::json;

ServiceResponse json_reply(int status, const json& body) {
  return {status, "application/json", body.dump(), {}};
}

ServiceResponse error_reply(int status, std::string_view code, const std::string& message) {
  return json_reply(status, {{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ScoreOutOfRange:
    case ErrorCode::ScoreOutOfGuideRange:
    case ErrorCode::LabelOutOfRange:
    case ErrorCode::UnresolvedLabel:
    case ErrorCode::EmptyMask:
    case ErrorCode::EmptyDataset:
      return 422;
    case ErrorCode::InvalidImage:
      return 415;
    default:
      return 500;
  }
}

ServiceResponse from_error(const Error& e) {
  return error_reply(status_for(e.code()), to_string(e.code()), e.what());
}

json parse_body(std::string_view body, bool allow_empty) {
  if (body.empty() && allow_empty) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::InvalidArgument, "body must be a JSON object");
  return j;
}

double finite_number(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_number()) {
    fail(ErrorCode::InvalidArgument, std::string("'") + field + "' must be a number");
  }
  const double v = j[field].get<double>();
  if (!std::isfinite(v)) fail(ErrorCode::ScoreOutOfRange, std::string("'") + field + "' must be finite");
  return v;
}

std::string string_field(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_string()) {
    fail(ErrorCode::InvalidArgument, std::string("'") + field + "' must be a string");
  }
  return j[field].get<std::string>();
}

LabelRequest label_field(const json& j) {
  if (!j.contains("label") || j["label"].is_null()) return LabelRequest::automatic();
  const auto& l = j["label"];
  if (l.is_number_integer()) {
    const int v = l.get<int>();
    if (v < 1 || v > kMaxLabel) fail(ErrorCode::LabelOutOfRange, "label outside 1..10");
    return LabelRequest::explicit_label(v);
  }
  if (l.is_string()) return LabelRequest::parse(l.get<std::string>());
  fail(ErrorCode::InvalidArgument, "'label' must be an integer, \"auto\" or \"none\"");
}

std::string stimulus_id(const std::string& image_id, double score) {
  std::ostringstream s;
  s << image_id << '@' << std::setprecision(6) << score;
  return s.str();
}

std::string model_id(const ModelCheckpoint& ckpt, std::size_t generation) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& t : ckpt.params.tensors) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(t.values.data()),
                static_cast<uInt>(t.values.size() * sizeof(float)));
  }
  std::ostringstream s;
  s << "g" << generation << '-' << std::hex << std::setw(8) << std::setfill('0') << crc;
  return s.str();
}

json status_json(const FinetuneStatus& s) {
  json j{{"state", to_string(s.state)}, {"epoch", s.epoch}, {"epochs", s.epochs}, {"loss", s.loss}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

}  // namespace

std::string_view to_string(FinetuneState s) noexcept {
  switch (s) {
    case FinetuneState::Idle: return "idle";
    case FinetuneState::Running: return "running";
    case FinetuneState::Done: return "done";
    case FinetuneState::Failed: return "failed";
  }
  return "unknown";
}

std::string base64_decode(std::string_view text) {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(alphabet[i])] = i;
    t['-'] = 62;
    t['_'] = 63;
    return t;
  }();
  // data: URLs are accepted as-is
  if (text.rfind("data:", 0) == 0) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) fail(ErrorCode::InvalidArgument, "malformed data URL");
    text.remove_prefix(comma + 1);
  }
  std::string out;
  out.reserve(text.size() * 3 / 4);
  unsigned buffer = 0;
  int bits = 0;
  bool padding = false;
  for (char c : text) {
    if (c == '=') {
      padding = true;
      continue;
    }
    if (c == '\n' || c == '\r' || c == ' ') continue;
    const int v = table[static_cast<unsigned char>(c)];
    if (v < 0 || padding) fail(ErrorCode::InvalidArgument, "invalid base64");
    buffer = (buffer << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buffer >> bits) & 0xFF));
    }
  }
  return out;
}

// --- Service ---------------------------------------------------------------

Service::Service(ModelCheckpoint initial, ServiceConfig config) : config_(std::move(config)) {
  publish(std::make_shared<const ModelCheckpoint>(std::move(initial)));
}

Service::~Service() {
  if (worker_.joinable()) worker_.join();
}

void Service::publish(std::shared_ptr<const ModelCheckpoint> ckpt) {
  auto next = std::make_shared<const Engine>(std::move(ckpt), config_.engine);
  std::lock_guard lock(engine_mutex_);
  engine_ = std::move(next);
  ++generation_;
}

std::shared_ptr<const Engine> Service::engine() const {
  std::lock_guard lock(engine_mutex_);
  return engine_;
}

std::size_t Service::model_generation() const {
  std::lock_guard lock(engine_mutex_);
  return generation_;
}

std::vector<LiveRating> Service::ratings() const {
  std::lock_guard lock(session_mutex_);
  return ratings_;
}

std::shared_ptr<const ImageBuffer> Service::image(const std::string& id) const {
  std::lock_guard lock(session_mutex_);
  auto it = images_.find(id);
  return it == images_.end() ? nullptr : it->second;
}

ServiceResponse Service::upload_image(std::string_view body, std::string_view content_type) {
  if (content_type.rfind("application/json", 0) == 0) {
    try {
      json j = parse_body(body, false);
      return upload_png(base64_decode(string_field(j, "image")));
    } catch (const Error& e) {
      return from_error(e);
    }
  }
  return upload_png(body);
}

ServiceResponse Service::upload_png(std::string_view png_bytes) {
  if (png_bytes.size() > config_.max_upload_bytes) {
    return error_reply(413, "PayloadTooLarge",
                       "upload exceeds " + std::to_string(config_.max_upload_bytes) + " bytes");
  }
  std::shared_ptr<const ImageBuffer> img;
  try {
    auto data = reinterpret_cast<const std::uint8_t*>(png_bytes.data());
    img = std::make_shared<const ImageBuffer>(decode_png({data, png_bytes.size()}));
  } catch (const Error& e) {
    return error_reply(415, "UnsupportedMediaType", e.what());
  }
  std::string id;
  {
    std::lock_guard lock(session_mutex_);
    id = "img-" + std::to_string(next_image_++);
    images_.emplace(id, img);
  }
  return json_reply(200, {{"image_id", id}, {"width", img->width()}, {"height", img->height()}});
}

ServiceResponse Service::enhance(std::string_view json_body) const {
  try {
    json j = parse_body(json_body, false);
    const std::string id = string_field(j, "image_id");
    EnhanceRequest req;
    req.score = finite_number(j, "score");
    req.label = label_field(j);
    if (j.contains("rounds")) {
      if (!j["rounds"].is_number_integer()) fail(ErrorCode::InvalidArgument, "'rounds' must be an integer");
      req.rounds = j["rounds"].get<int>();
    }
    auto img = image(id);
    if (!img) return error_reply(404, "UnknownImage", "no uploaded image '" + id + "'");
    req.image = *img;
    auto eng = engine();
    EnhanceResult details;
    auto png = enhance_png(*eng, req, &details);
    ServiceResponse r{200, "image/png", std::string(png.begin(), png.end()), {}};
    for (const auto& w : details.warnings) r.headers.emplace_back("X-Qglut-Warning", w);
    if (!details.labels.empty()) {
      r.headers.emplace_back("X-Qglut-Label", std::to_string(details.labels.back()));
    }
    return r;
  } catch (const Error& e) {
    return from_error(e);
  }
}

void Service::append_rating_csv(const LiveRating& r, const std::string& stimulus) {
  if (config_.ratings_csv.empty()) return;
  const bool fresh = !std::filesystem::exists(config_.ratings_csv) ||
                     std::filesystem::file_size(config_.ratings_csv) == 0;
  std::ofstream out(config_.ratings_csv, std::ios::app);
  if (!out) fail(ErrorCode::IoError, "cannot append to " + config_.ratings_csv.string());
  if (fresh) out << "subject_id,image_id,rating,score_context,timestamp\n";
  out << std::setprecision(10) << csv_escape(config_.subject_id) << ',' << csv_escape(stimulus)
      << ',' << r.rating << ',' << r.score_context << ',' << r.timestamp << '\n';
  out.flush();
  if (!out) fail(ErrorCode::IoError, "short write to " + config_.ratings_csv.string());
}

ServiceResponse Service::add_rating(std::string_view json_body) {
  try {
    json j = parse_body(json_body, false);
    LiveRating r;
    r.image_id = string_field(j, "image_id");
    r.score_context = finite_number(j, "adjusted_score_context");
    r.rating = finite_number(j, "rating");
    if (r.rating < kRatingMin || r.rating > kRatingMax) {
      return error_reply(422, "RatingOutOfScale", "ratings lie in [-2.5, 2.5]");
    }
    auto img = image(r.image_id);
    if (!img) return error_reply(404, "UnknownImage", "no uploaded image '" + r.image_id + "'");
    // The label is fixed now so fine-tuning later reproduces what was rated.
    auto eng = engine();
    r.label = eng->resolve_label(*img, label_field(j), nullptr);
    r.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
    const std::string stimulus = stimulus_id(r.image_id, r.score_context);
    std::size_t count = 0;
    {
      std::lock_guard lock(session_mutex_);
      for (const auto& s : stimuli_) {
        if (s == stimulus) {
          return error_reply(409, "DuplicateRating", "'" + stimulus + "' was already rated");
        }
      }
      append_rating_csv(r, stimulus);
      ratings_.push_back(r);
      stimuli_.push_back(stimulus);
      count = ratings_.size();
    }
    return json_reply(200, {{"stimulus_id", stimulus}, {"ratings", count}});
  } catch (const Error& e) {
    return from_error(e);
  }
}

ServiceResponse Service::start_finetune(std::string_view json_body) {
  int epochs = config_.default_finetune_epochs;
  try {
    json j = parse_body(json_body, true);
    if (j.contains("epochs")) {
      if (!j["epochs"].is_number_integer() || j["epochs"].get<int>() < 1) {
        fail(ErrorCode::InvalidArgument, "'epochs' must be a positive integer");
      }
      epochs = j["epochs"].get<int>();
    }
  } catch (const Error& e) {
    return from_error(e);
  }
  std::lock_guard job(job_mutex_);
  if (status_.state == FinetuneState::Running) {
    return error_reply(409, "FinetuneRunning", "a fine-tune job is already running");
  }
  auto rated = ratings();
  if (rated.empty()) return error_reply(422, "NoRatings", "fine-tuning needs at least one rating");
  if (worker_.joinable()) worker_.join();
  status_ = FinetuneStatus{FinetuneState::Running, 0, epochs, 0.0, {}};
  worker_ = std::thread(&Service::run_finetune, this, engine(), std::move(rated), epochs);
  return json_reply(202, status_json(status_));
}

void Service::run_finetune(std::shared_ptr<const Engine> base, std::vector<LiveRating> rated,
                           int epochs) {
  try {
    const ModelCheckpoint& start = base->checkpoint();
    std::vector<TrainingPair> pairs;
    for (const auto& r : rated) {
      auto img = image(r.image_id);
      if (!img) fail(ErrorCode::InvalidArgument, "rated image '" + r.image_id + "' is gone");
      EnhanceRequest shown;
      shown.image = *img;
      shown.score = r.score_context;
      shown.label = r.label ? LabelRequest::explicit_label(*r.label) : LabelRequest::absent();
      TrainingPair p;
      p.raw_id = r.image_id;
      p.raw = *img;
      p.target = base->enhance(shown).image;
      p.score = normalize_direct(r.rating);
      p.label = r.label;
      pairs.push_back(std::move(p));
    }
    TrainConfig cfg;
    cfg.arch = start.arch;
    cfg.epochs = epochs;
    cfg.lr = config_.finetune_lr;
    cfg.seed = config_.seed;
    TrainingSet set = build_dataset(pairs, cfg, start.centers ? &*start.centers : nullptr);
    TrainResult result = finetune(start, set, cfg, [this](const EpochLog& log) {
      std::lock_guard lock(job_mutex_);
      status_.epoch = log.epoch;
      status_.loss = log.loss.total;
    });
    if (!config_.finetune_output.empty()) save_checkpoint(config_.finetune_output, result.checkpoint);
    publish(std::make_shared<const ModelCheckpoint>(std::move(result.checkpoint)));
    std::lock_guard lock(job_mutex_);
    status_.state = FinetuneState::Done;
  } catch (const std::exception& e) {
    std::lock_guard lock(job_mutex_);
    status_.state = FinetuneState::Failed;
    status_.error = e.what();
  }
}

void Service::wait_for_finetune() {
  std::thread done;
  {
    std::lock_guard lock(job_mutex_);
    done = std::move(worker_);
  }
  if (done.joinable()) done.join();
}

ServiceResponse Service::finetune_status() const {
  std::lock_guard lock(job_mutex_);
  return json_reply(200, status_json(status_));
}

ServiceResponse Service::model_info() const {
  std::shared_ptr<const Engine> eng;
  std::size_t gen = 0;
  {
    std::lock_guard lock(engine_mutex_);
    eng = engine_;
    gen = generation_;
  }
  const auto& c = eng->checkpoint();
  json j;
  j["model_id"] = model_id(c, gen);
  j["generation"] = gen;
  j["architecture"] = to_json(c.arch);
  j["metadata"] = {{"epochs_completed", c.metadata.epochs_completed},
                   {"final_loss", c.metadata.final_loss},
                   {"seed", c.metadata.seed}};
  j["centers"] = c.centers ? json(to_string(c.centers->provenance)) : json(nullptr);
  j["guide_range"] = {eng->options().guide_min, eng->options().guide_max};
  {
    std::lock_guard lock(job_mutex_);
    j["finetune"] = status_json(status_);
  }
  return json_reply(200, j);
}

ServiceResponse Service::health() const { return {200, "text/plain", "ok", {}}; }

// --- HTTP ------------------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Service& s) : service(s) {
    // base64 JSON uploads are a third larger than the PNG they carry
    server.set_payload_max_length(service.config().max_upload_bytes / 3 * 4 + (1u << 16));
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    auto send = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      for (const auto& [k, v] : r.headers) res.set_header(k, v);
      res.set_content(r.body, r.content_type);
    };
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.Post("/images", [&, send](const httplib::Request& req, httplib::Response& res) {
      if (req.is_multipart_form_data()) {
        if (req.files.empty()) {
          send(res, error_reply(422, "InvalidArgument", "multipart upload without a file"));
          return;
        }
        auto it = req.files.find("image");
        const auto& file = it != req.files.end() ? it->second : req.files.begin()->second;
        send(res, service.upload_png(file.content));
        return;
      }
      send(res, service.upload_image(req.body, req.get_header_value("Content-Type")));
    });
    server.Post("/enhance", [&, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.enhance(req.body));
    });
    server.Post("/ratings", [&, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.add_rating(req.body));
    });
    server.Post("/finetune", [&, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.start_finetune(req.body));
    });
    server.Get("/finetune", [&, send](const httplib::Request&, httplib::Response& res) {
      send(res, service.finetune_status());
    });
    server.Get("/model", [&, send](const httplib::Request&, httplib::Response& res) {
      send(res, service.model_info());
    });
    server.Get("/healthz", [&, send](const httplib::Request&, httplib::Response& res) {
      send(res, service.health());
    });
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace qglut
