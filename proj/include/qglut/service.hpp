#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "qglut/engine.hpp"
#include "qglut/trainer.hpp"

namespace qglut {

struct ServiceConfig {
  std::size_t max_upload_bytes = 16u << 20;
  /// Append-only ratings log; empty disables persistence.
  std::filesystem::path ratings_csv;
  /// Where a fine-tuned checkpoint is written after each swap; empty skips it.
  std::filesystem::path finetune_output;
  int default_finetune_epochs = 10;
  double finetune_lr = 1e-4;
  std::uint64_t seed = 0;
  std::string subject_id = "live";
  EngineOptions engine;
};

/// Transport-independent reply. Handlers never throw.
struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

struct LiveRating {
  std::string image_id;
  double score_context = 0.0;
  double rating = 0.0;
  std::optional<int> label;
  std::int64_t timestamp = 0;  // unix seconds
};

enum class FinetuneState { Idle, Running, Done, Failed };
std::string_view to_string(FinetuneState s) noexcept;

struct FinetuneStatus {
  FinetuneState state = FinetuneState::Idle;
  int epoch = 0;
  int epochs = 0;
  double loss = 0.0;
  std::string error;
};

/// Session state and handler logic behind the HTTP API. Enhancement always
/// goes through the currently published engine; fine-tuning runs on a
/// background thread and replaces that engine in one step when done.
class Service {
 public:
  Service(ModelCheckpoint initial, ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Bodies are the raw request payloads.
  ServiceResponse upload_image(std::string_view body, std::string_view content_type);
  ServiceResponse upload_png(std::string_view png_bytes);
  ServiceResponse enhance(std::string_view json_body) const;
  ServiceResponse add_rating(std::string_view json_body);
  ServiceResponse start_finetune(std::string_view json_body);
  ServiceResponse finetune_status() const;
  ServiceResponse model_info() const;
  ServiceResponse health() const;

  std::shared_ptr<const Engine> engine() const;
  std::size_t model_generation() const;
  std::vector<LiveRating> ratings() const;
  /// Blocks until no fine-tune job is running.
  void wait_for_finetune();

  const ServiceConfig& config() const noexcept { return config_; }

 private:
  void publish(std::shared_ptr<const ModelCheckpoint> ckpt);
  std::shared_ptr<const ImageBuffer> image(const std::string& id) const;
  void run_finetune(std::shared_ptr<const Engine> base, std::vector<LiveRating> ratings, int epochs);
  void append_rating_csv(const LiveRating& r, const std::string& stimulus);

  ServiceConfig config_;

  mutable std::mutex engine_mutex_;
  std::shared_ptr<const Engine> engine_;
  std::size_t generation_ = 0;

  mutable std::mutex session_mutex_;
  std::map<std::string, std::shared_ptr<const ImageBuffer>> images_;
  std::size_t next_image_ = 1;
  std::vector<LiveRating> ratings_;
  std::vector<std::string> stimuli_;

  mutable std::mutex job_mutex_;
  FinetuneStatus status_;
  std::thread worker_;
};

/// cpp-httplib front end. `listen` blocks; `start` binds and serves on a
/// background thread, returning the bound port (0 picks a free one).
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  bool listen(const std::string& host, int port);
  int start(const std::string& host, int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string base64_decode(std::string_view text);

}  // namespace qglut
