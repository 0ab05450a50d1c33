#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "qglut/checkpoint.hpp"
#include "qglut/color.hpp"
#include "qglut/engine.hpp"
#include "qglut/error.hpp"
#include "qglut/mos.hpp"
#include "qglut/skintone.hpp"
#include "qglut/trainer.hpp"

namespace py = pybind11;
using namespace qglut;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) fail(ErrorCode::InvalidImage, "expected an H x W x 3 array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  std::vector<float> data(a.data(), a.data() + a.size());
  ImageBuffer img(w, h, std::move(data));
  img.validate();
  return img;
}

py::array_t<float> from_image(const ImageBuffer& img) {
  py::array_t<float> out({img.height(), img.width(), 3});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

Mask to_mask(const py::array& a) {
  auto b = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(a);
  if (!b || b.ndim() != 2) fail(ErrorCode::InvalidImage, "expected an H x W mask");
  Mask m;
  m.height = static_cast<int>(b.shape(0));
  m.width = static_cast<int>(b.shape(1));
  m.bits.assign(b.data(), b.data() + b.size());
  for (auto& v : m.bits) v = v != 0;
  return m;
}

LabelRequest to_label(const py::object& label) {
  if (label.is_none()) return LabelRequest::absent();
  if (py::isinstance<py::str>(label)) return LabelRequest::parse(label.cast<std::string>());
  return LabelRequest::explicit_label(label.cast<int>());
}

std::vector<LabPixel> to_points(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) fail(ErrorCode::InvalidArgument, "expected an N x 3 array of Lab points");
  std::vector<LabPixel> pts;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts.emplace_back(a.at(i, 0), a.at(i, 1), a.at(i, 2));
  return pts;
}

ArchitectureConfig arch_from(const std::string& overrides) {
  nlohmann::json j = to_json(ArchitectureConfig{});
  if (!overrides.empty()) j.update(nlohmann::json::parse(overrides));
  return architecture_from_json(j);
}

std::vector<TrainingPair> to_pairs(const py::list& items) {
  std::vector<TrainingPair> pairs;
  for (const auto& it : items) {
    auto d = it.cast<py::dict>();
    TrainingPair p;
    p.raw_id = d.contains("raw_id") ? d["raw_id"].cast<std::string>() : "raw" + std::to_string(pairs.size());
    p.raw = to_image(d["raw"].cast<FloatArray>());
    p.target = to_image(d["target"].cast<FloatArray>());
    p.score = d["score"].cast<double>();
    if (d.contains("label") && !d["label"].is_none()) p.label = d["label"].cast<int>();
    if (d.contains("mask") && !d["mask"].is_none()) p.mask = to_mask(d["mask"].cast<py::array>());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

TrainConfig config_from(int epochs, double lr, std::uint64_t seed, const ArchitectureConfig& arch,
                        double grad_clip = TrainConfig{}.grad_clip) {
  TrainConfig c;
  c.grad_clip = grad_clip;
  c.epochs = epochs;
  c.lr = lr;
  c.seed = seed;
  c.arch = arch;
  return c;
}

py::dict loss_dict(const LossBreakdown& l) {
  py::dict d;
  d["total"] = l.total;
  d["reconstruction"] = l.reconstruction;
  d["smoothness"] = l.smoothness;
  d["monotonicity"] = l.monotonicity;
  return d;
}

struct PyModel {
  std::shared_ptr<const ModelCheckpoint> ckpt;
};

py::tuple train_result(TrainResult r) {
  py::list curve;
  for (const auto& e : r.curve) {
    py::dict d = loss_dict(e.loss);
    d["epoch"] = e.epoch;
    curve.append(d);
  }
  return py::make_tuple(PyModel{std::make_shared<const ModelCheckpoint>(std::move(r.checkpoint))}, curve);
}

RatingTable to_table(const py::iterable& rows) {
  RatingTable t;
  for (const auto& r : rows) {
    auto tup = r.cast<py::sequence>();
    t.add({tup[0].cast<std::string>(), tup[1].cast<std::string>(), tup[2].cast<double>()});
  }
  return t;
}

py::dict mos_dict(const MosTable& m) {
  py::list entries;
  for (const auto& e : m.entries) {
    py::dict d;
    d["image_id"] = e.image_id;
    d["mos"] = e.mos;
    d["normalized_score"] = e.normalized_score;
    d["n_ratings"] = e.n_ratings;
    entries.append(d);
  }
  py::dict out;
  out["entries"] = entries;
  out["report"] = m.report.to_json().dump();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Score-conditioned LUT image enhancement";

  static py::exception<Error> exc(m, "QglutError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(std::string(to_string(e.code())), e.what());
      PyErr_SetObject(exc.ptr(), args.ptr());
    }
  });

  m.def("srgb_to_lab", [](double r, double g, double b) {
    LabPixel p = srgb_to_lab(RgbPixel(r, g, b));
    return py::make_tuple(p.l, p.a, p.b);
  });
  m.def("lab_to_srgb", [](double l, double a, double b) {
    RgbPixel p = lab_to_srgb(LabPixel(l, a, b));
    return py::make_tuple(p.r, p.g, p.b);
  });

  m.def("read_png", [](const std::string& path) { return from_image(read_png(path)); });
  m.def("write_png", [](const std::string& path, const FloatArray& img) { write_png(path, to_image(img)); });
  m.def("synth_perturb",
        [](const FloatArray& img, double dl, double da, double db, const std::string& mode) {
          PerturbMode pm = mode == "natural" ? PerturbMode::Natural : PerturbMode::SkinTone;
          if (mode != "natural" && mode != "skin") fail(ErrorCode::InvalidArgument, "mode must be skin or natural");
          return from_image(synth_perturb(to_image(img), {dl, da, db}, pm));
        },
        py::arg("image"), py::arg("dl") = 0.0, py::arg("da") = 0.0, py::arg("db") = 0.0,
        py::arg("mode") = "skin");

  py::class_<PyModel>(m, "Model")
      .def_static("load", [](const std::string& path) {
        return PyModel{std::make_shared<const ModelCheckpoint>(load_checkpoint(path))};
      })
      .def_static("from_bytes", [](const py::bytes& b) {
        std::string s = b;
        std::vector<std::uint8_t> v(s.begin(), s.end());
        return PyModel{std::make_shared<const ModelCheckpoint>(deserialize_checkpoint(v))};
      })
      .def_static("_identity", [](const std::string& arch, std::uint64_t seed) {
        auto c = std::make_shared<ModelCheckpoint>(make_checkpoint(arch_from(arch), seed));
        c->centers = monk_reference_centers();
        return PyModel{c};
      })
      .def("save", [](const PyModel& self, const std::string& path) { save_checkpoint(path, *self.ckpt); })
      .def("to_bytes", [](const PyModel& self) {
        auto v = serialize_checkpoint(*self.ckpt);
        return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
      })
      .def_property_readonly("_architecture", [](const PyModel& self) { return to_json(self.ckpt->arch).dump(); })
      .def_property_readonly("epochs_completed",
                             [](const PyModel& self) { return self.ckpt->metadata.epochs_completed; });

  py::class_<Engine>(m, "Engine")
      .def(py::init([](const PyModel& model, bool strict_range) {
             EngineOptions o;
             o.strict_range = strict_range;
             return std::make_unique<Engine>(model.ckpt, o);
           }),
           py::arg("model"), py::arg("strict_range") = false)
      .def(
          "enhance",
          [](const Engine& self, const FloatArray& img, double score, const py::object& label, int rounds,
             const py::object& mask) {
            EnhanceRequest r;
            r.image = to_image(img);
            r.score = score;
            r.label = to_label(label);
            r.rounds = rounds;
            if (!mask.is_none()) r.mask = to_mask(mask.cast<py::array>());
            EnhanceResult res;
            {
              py::gil_scoped_release nogil;
              res = self.enhance(r);
            }
            return py::make_tuple(from_image(res.image), res.labels, res.warnings);
          },
          py::arg("image"), py::arg("score"), py::arg("label") = "auto", py::arg("rounds") = 1,
          py::arg("mask") = py::none())
      .def(
          "enhance_multi_round",
          [](const Engine& self, const FloatArray& img, const std::vector<double>& scores, const py::object& label) {
            ImageBuffer in = to_image(img);
            LabelRequest l = to_label(label);
            EnhanceResult res;
            {
              py::gil_scoped_release nogil;
              res = self.enhance_multi_round(in, scores, l);
            }
            return py::make_tuple(from_image(res.image), res.labels, res.warnings);
          },
          py::arg("image"), py::arg("scores"), py::arg("label") = "auto");

  m.def(
      "train",
      [](const py::list& pairs, int epochs, double lr, std::uint64_t seed, const std::string& arch,
         double grad_clip) {
        TrainConfig cfg = config_from(epochs, lr, seed, arch_from(arch), grad_clip);
        TrainingSet set = build_dataset(to_pairs(pairs), cfg);
        TrainResult r;
        {
          py::gil_scoped_release nogil;
          r = train(set, cfg);
        }
        return train_result(std::move(r));
      },
      py::arg("pairs"), py::arg("epochs"), py::arg("lr") = 1e-4, py::arg("seed") = 0, py::arg("arch") = "",
      py::arg("grad_clip") = TrainConfig{}.grad_clip);
  m.def(
      "finetune",
      [](const PyModel& model, const py::list& pairs, int epochs, double lr, std::uint64_t seed, double grad_clip) {
        TrainConfig cfg = config_from(epochs, lr, seed, model.ckpt->arch, grad_clip);
        TrainingSet set = build_dataset(to_pairs(pairs), cfg);
        TrainResult r;
        {
          py::gil_scoped_release nogil;
          r = finetune(*model.ckpt, set, cfg);
        }
        return train_result(std::move(r));
      },
      py::arg("model"), py::arg("pairs"), py::arg("epochs"), py::arg("lr") = 1e-4, py::arg("seed") = 0,
      py::arg("grad_clip") = TrainConfig{}.grad_clip);
  m.def(
      "evaluate",
      [](const PyModel& model, const py::list& pairs, std::uint64_t seed) {
        TrainConfig cfg = config_from(0, 1e-4, seed, model.ckpt->arch);
        return loss_dict(evaluate(*model.ckpt, build_dataset(to_pairs(pairs), cfg), cfg.lambdas));
      },
      py::arg("model"), py::arg("pairs"), py::arg("seed") = 0);

  m.def("process_ratings", [](const py::iterable& rows) { return mos_dict(process_ratings(to_table(rows))); });
  m.def("compute_mos", [](const py::iterable& rows) { return mos_dict(compute_mos(to_table(rows))); });

  m.def(
      "kmeans",
      [](const DoubleArray& points, int k, std::uint64_t seed) {
        KMeansOptions o;
        o.k = k;
        o.seed = seed;
        KMeansResult r = kmeans_lab(to_points(points), o);
        py::array_t<double> centers({static_cast<py::ssize_t>(r.centers.size()), py::ssize_t{3}});
        for (int i = 0; i < r.centers.size(); ++i) {
          const auto& c = r.centers.centers[static_cast<std::size_t>(i)];
          centers.mutable_at(i, 0) = c.l;
          centers.mutable_at(i, 1) = c.a;
          centers.mutable_at(i, 2) = c.b;
        }
        return py::make_tuple(centers, r.labels);
      },
      py::arg("points"), py::arg("k") = 10, py::arg("seed") = 0);
  m.def("silhouette", [](const DoubleArray& points, const std::vector<int>& labels) {
    return silhouette(to_points(points), labels);
  });
  m.def("classify_skin_tone", [](double l, double a, double b) {
    return classify(LabPixel(l, a, b), monk_reference_centers());
  });
}
