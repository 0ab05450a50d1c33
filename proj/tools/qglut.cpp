// qglut command-line tool.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "qglut/checkpoint.hpp"
#include "qglut/color.hpp"
#include "qglut/csv.hpp"
#include "qglut/engine.hpp"
#include "qglut/error.hpp"
#include "qglut/mos.hpp"
#include "qglut/service.hpp"
#include "qglut/skintone.hpp"
#include "qglut/trainer.hpp"

using namespace qglut;
using nlohmann::json;

namespace {

struct ArchFlags {
  bool no_label = false;
  bool no_1d = false;
  std::string score_encoding = "symmetric";
  std::string label_encoding = "integer";
  int input_size = 256;
  int lut_bins = 33;
  int lut_dim = 33;
  int basis = 3;

  void add(CLI::App* app) {
    app->add_flag("--no-label", no_label, "Drop the skin-tone label plane");
    app->add_flag("--no-1d", no_1d, "Disable the 1D Lab curves");
    app->add_option("--score-encoding", score_encoding, "symmetric | unit | wide")->capture_default_str();
    app->add_option("--label-encoding", label_encoding, "integer | unit")->capture_default_str();
    app->add_option("--input-size", input_size, "Backbone input resolution")->capture_default_str();
    app->add_option("--lut-bins", lut_bins, "1D curve samples")->capture_default_str();
    app->add_option("--lut-dim", lut_dim, "3D lattice size")->capture_default_str();
    app->add_option("--basis", basis, "Number of basis grids")->capture_default_str();
  }

  ArchitectureConfig build() const {
    ArchitectureConfig a;
    a.use_label = !no_label;
    a.use_1d_luts = !no_1d;
    a.score_encoding = parse_score_encoding(score_encoding);
    a.label_encoding = parse_label_encoding(label_encoding);
    a.input_size = input_size;
    a.lut_bins = lut_bins;
    a.lut_dim = lut_dim;
    a.basis_count = basis;
    a.validate();
    return a;
  }
};

std::string default_model() {
  const char* env = std::getenv("QGLUT_MODEL");
  return env ? env : "";
}

std::string require_model(const std::string& flag) {
  if (!flag.empty()) return flag;
  fail(ErrorCode::InvalidArgument, "no model given (use --model or set QGLUT_MODEL)");
}

ProgressCallback progress_printer(bool quiet, int total) {
  if (quiet) return {};
  return [total](const EpochLog& log) {
    std::cerr << "epoch " << log.epoch << "/" << total << " loss " << log.loss.total
              << " (recon " << log.loss.reconstruction << ")\n";
  };
}

json loss_json(const LossBreakdown& l) {
  return {{"total", l.total},
          {"reconstruction", l.reconstruction},
          {"smoothness", l.smoothness},
          {"monotonicity", l.monotonicity}};
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

std::vector<LabPixel> read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  CsvReader csv(in);
  const auto l = csv.column("L"), a = csv.column("a"), b = csv.column("b");
  std::vector<LabPixel> pts;
  while (auto row = csv.next()) {
    pts.emplace_back(parse_double(row->at(l), "L"), parse_double(row->at(a), "a"),
                     parse_double(row->at(b), "b"));
  }
  return pts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality-guided LUT image enhancement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "qglut 0.1.0");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model from a pair manifest");
  std::string manifest, out, loss_log, centers_path, model_path = default_model();
  int epochs = 400;
  double lr = 1e-4, grad_clip = TrainConfig{}.grad_clip;
  std::uint64_t seed = 0;
  bool quiet = false;
  ArchFlags arch_flags;
  train_cmd->add_option("--manifest", manifest, "CSV raw_path,target_path,score[,label,mask_path]")->required();
  train_cmd->add_option("--out", out, "Checkpoint to write")->required();
  train_cmd->add_option("--epochs", epochs)->capture_default_str();
  train_cmd->add_option("--lr", lr)->capture_default_str();
  train_cmd->add_option("--grad-clip", grad_clip, "Gradient-norm cap, 0 disables")->capture_default_str();
  train_cmd->add_option("--seed", seed)->capture_default_str();
  train_cmd->add_option("--loss-log", loss_log, "Per-epoch loss CSV");
  train_cmd->add_option("--centers", centers_path, "Skin-tone centres stored in the model");
  train_cmd->add_flag("--quiet", quiet);
  arch_flags.add(train_cmd);

  // finetune
  auto* ft_cmd = app.add_subcommand("finetune", "Continue training on user pairs");
  int ft_epochs = 10;
  ft_cmd->add_option("--model", model_path, "Starting checkpoint (default $QGLUT_MODEL)");
  ft_cmd->add_option("--manifest", manifest)->required();
  ft_cmd->add_option("--out", out)->required();
  ft_cmd->add_option("--epochs", ft_epochs)->capture_default_str();
  ft_cmd->add_option("--lr", lr)->capture_default_str();
  ft_cmd->add_option("--grad-clip", grad_clip, "Gradient-norm cap, 0 disables")->capture_default_str();
  ft_cmd->add_option("--seed", seed)->capture_default_str();
  ft_cmd->add_option("--loss-log", loss_log);
  ft_cmd->add_flag("--quiet", quiet);

  // enhance
  auto* en_cmd = app.add_subcommand("enhance", "Enhance one PNG");
  std::string in_path, label_text = "auto", mask_path;
  double score = 0.0;
  int rounds = 1;
  std::vector<double> scores;
  bool strict = false;
  en_cmd->add_option("--model", model_path, "Checkpoint (default $QGLUT_MODEL)");
  en_cmd->add_option("--in", in_path)->required();
  en_cmd->add_option("--out", out)->required();
  auto* score_opt = en_cmd->add_option("--score", score, "Guiding quality score")->capture_default_str();
  en_cmd->add_option("--scores", scores, "One score per round (multi-round)")->excludes(score_opt)->delimiter(',');
  en_cmd->add_option("--label", label_text, "auto | none | 1..10")->capture_default_str();
  en_cmd->add_option("--rounds", rounds)->capture_default_str();
  en_cmd->add_option("--mask", mask_path, "Skin mask PNG for automatic labels");
  en_cmd->add_flag("--strict-range", strict, "Reject scores outside [-1,1]");

  // mos
  auto* mos_cmd = app.add_subcommand("mos", "Screen ratings and compute MOS");
  std::string ratings_path, report_path;
  mos_cmd->add_option("--ratings", ratings_path, "CSV subject_id,image_id,rating")->required();
  mos_cmd->add_option("--out", out, "MOS CSV")->required();
  mos_cmd->add_option("--report", report_path, "Rejection report JSON");

  // cluster
  auto* cl_cmd = app.add_subcommand("cluster", "k-means skin-tone centres");
  std::vector<std::string> images, masks;
  std::string points_path, model_out;
  int k = 10;
  cl_cmd->add_option("--images", images, "PNG files, one mean skin colour each");
  cl_cmd->add_option("--masks", masks, "Masks matching --images (central crop when absent)");
  cl_cmd->add_option("--points", points_path, "CSV of L,a,b points");
  cl_cmd->add_option("--k", k)->capture_default_str();
  cl_cmd->add_option("--seed", seed)->capture_default_str();
  cl_cmd->add_option("--out", out, "Centres file")->required();
  cl_cmd->add_option("--model", model_path, "Checkpoint to attach the centres to");
  cl_cmd->add_option("--model-out", model_out, "Where to write that checkpoint");

  // perturb
  auto* pt_cmd = app.add_subcommand("perturb", "Synthetic CIELAB shift");
  double dl = 0, da = 0, db = 0, range = -1;
  std::string mode_text = "skin";
  pt_cmd->add_option("--in", in_path)->required();
  pt_cmd->add_option("--out", out)->required();
  pt_cmd->add_option("--dl", dl)->capture_default_str();
  pt_cmd->add_option("--da", da)->capture_default_str();
  pt_cmd->add_option("--db", db)->capture_default_str();
  pt_cmd->add_option("--random", range, "Draw shifts uniformly in [-R,R] instead");
  pt_cmd->add_option("--mode", mode_text, "skin | natural")->capture_default_str();
  pt_cmd->add_option("--seed", seed)->capture_default_str();

  // serve
  auto* sv_cmd = app.add_subcommand("serve", "HTTP service for the studio UI");
  std::string host = "127.0.0.1", ft_out;
  int port = 8080;
  std::size_t max_upload = 16u << 20;
  sv_cmd->add_option("--model", model_path, "Checkpoint (default $QGLUT_MODEL)");
  sv_cmd->add_option("--host", host)->capture_default_str();
  sv_cmd->add_option("--port", port)->capture_default_str();
  sv_cmd->add_option("--ratings", ratings_path, "Append-only ratings CSV");
  sv_cmd->add_option("--finetune-out", ft_out, "Save each fine-tuned checkpoint here");
  sv_cmd->add_option("--max-upload", max_upload, "Upload cap in bytes")->capture_default_str();
  sv_cmd->add_option("--seed", seed)->capture_default_str();
  sv_cmd->add_flag("--strict-range", strict);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) emit({{"error", "Usage"}, {"message", e.what()}});
    return code;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg;
      cfg.arch = arch_flags.build();
      cfg.epochs = epochs;
      cfg.lr = lr;
      cfg.grad_clip = grad_clip;
      cfg.seed = seed;
      std::optional<SkinToneCenters> centers;
      if (!centers_path.empty()) centers = read_centers(centers_path);
      TrainingSet set = build_dataset(read_manifest(manifest), cfg, centers ? &*centers : nullptr);
      TrainResult r = train(set, cfg, progress_printer(quiet, epochs));
      r.checkpoint.centers = centers;
      save_checkpoint(out, r.checkpoint);
      if (!loss_log.empty()) write_loss_log(loss_log, r.curve);
      emit({{"checkpoint", out}, {"samples", set.size()}, {"loss", loss_json(r.curve.back().loss)}});
    } else if (*ft_cmd) {
      ModelCheckpoint start = load_checkpoint(require_model(model_path));
      TrainConfig cfg;
      cfg.arch = start.arch;
      cfg.epochs = ft_epochs;
      cfg.lr = lr;
      cfg.grad_clip = grad_clip;
      cfg.seed = seed;
      TrainingSet set =
          build_dataset(read_manifest(manifest), cfg, start.centers ? &*start.centers : nullptr);
      TrainResult r = finetune(start, set, cfg, progress_printer(quiet, ft_epochs));
      save_checkpoint(out, r.checkpoint);
      if (!loss_log.empty()) write_loss_log(loss_log, r.curve);
      emit({{"checkpoint", out},
            {"samples", set.size()},
            {"loss_before", loss_json(r.curve.front().loss)},
            {"loss", loss_json(r.curve.back().loss)}});
    } else if (*en_cmd) {
      auto ckpt = std::make_shared<const ModelCheckpoint>(load_checkpoint(require_model(model_path)));
      EngineOptions opts;
      opts.strict_range = strict;
      Engine engine(ckpt, opts);
      EnhanceRequest req;
      req.image = read_png(in_path);
      req.score = score;
      req.label = LabelRequest::parse(label_text);
      req.rounds = rounds;
      if (!mask_path.empty()) req.mask = read_mask_png(mask_path);
      EnhanceResult details;
      std::vector<std::uint8_t> png;
      if (scores.empty()) {
        png = enhance_png(engine, req, &details);
      } else {
        details = engine.enhance_multi_round(req.image, scores, req.label, req.mask);
        png = encode_png(details.image);
      }
      std::ofstream f(out, std::ios::binary);
      if (!f) fail(ErrorCode::IoError, "cannot write " + out);
      f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
      if (!f) fail(ErrorCode::IoError, "short write to " + out);
      for (const auto& w : details.warnings) std::cerr << "warning: " << w << '\n';
      emit({{"out", out}, {"labels", details.labels}, {"warnings", details.warnings}});
    } else if (*mos_cmd) {
      MosTable mos = process_ratings(read_ratings_csv(ratings_path));
      write_mos_csv(out, mos);
      if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) fail(ErrorCode::IoError, "cannot write " + report_path);
        f << mos.report.to_json().dump(2) << '\n';
      }
      emit({{"out", out},
            {"images", mos.entries.size()},
            {"rejected_subjects", mos.report.rejected_subjects}});
    } else if (*cl_cmd) {
      std::vector<LabPixel> pts;
      if (!points_path.empty()) pts = read_points_csv(points_path);
      if (!masks.empty() && masks.size() != images.size()) {
        fail(ErrorCode::InvalidArgument, "--masks must match --images one to one");
      }
      for (std::size_t i = 0; i < images.size(); ++i) {
        ImageBuffer img = read_png(images[i]);
        Mask m = masks.empty() ? central_crop_mask(img.width(), img.height()) : read_mask_png(masks[i]);
        pts.push_back(mean_skin_color(img, m));
      }
      KMeansOptions opt;
      opt.k = k;
      opt.seed = seed;
      KMeansResult res = kmeans_lab(pts, opt);
      write_centers(out, res.centers);
      json summary{{"out", out}, {"points", pts.size()}, {"iterations", res.iterations},
                   {"objective", res.objective_trace.empty() ? 0.0 : res.objective_trace.back()}};
      try {
        summary["silhouette"] = silhouette(pts, res.labels);
      } catch (const Error&) {
        summary["silhouette"] = nullptr;
      }
      if (!model_path.empty() && !model_out.empty()) {
        ModelCheckpoint c = load_checkpoint(model_path);
        c.centers = res.centers;
        save_checkpoint(model_out, c);
        summary["model"] = model_out;
      }
      emit(summary);
    } else if (*pt_cmd) {
      PerturbMode mode;
      if (mode_text == "skin") {
        mode = PerturbMode::SkinTone;
      } else if (mode_text == "natural") {
        mode = PerturbMode::Natural;
      } else {
        fail(ErrorCode::InvalidArgument, "--mode must be skin or natural");
      }
      LabShift shift{dl, da, db};
      if (range >= 0) {
        std::mt19937_64 rng(seed);
        shift = random_lab_shift(rng, range, mode);
      }
      write_png(out, synth_perturb(read_png(in_path), shift, mode));
      emit({{"out", out}, {"dl", shift.l}, {"da", shift.a}, {"db", shift.b}});
    } else if (*sv_cmd) {
      ServiceConfig cfg;
      cfg.ratings_csv = ratings_path;
      cfg.finetune_output = ft_out;
      cfg.max_upload_bytes = max_upload;
      cfg.seed = seed;
      cfg.engine.strict_range = strict;
      Service service(load_checkpoint(require_model(model_path)), cfg);
      HttpServer server(service);
      std::cerr << "listening on http://" << host << ":" << port << '\n';
      if (!server.listen(host, port)) fail(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const Error& e) {
    emit({{"error", to_string(e.code())}, {"message", e.what()}});
    return 2;
  } catch (const std::exception& e) {
    emit({{"error", "Internal"}, {"message", e.what()}});
    return 3;
  }
  return 0;
}
