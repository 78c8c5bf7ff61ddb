#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "interlerp/cgan.hpp"
#include "interlerp/errors.hpp"
#include "interlerp/judges.hpp"
#include "interlerp/label_space.hpp"
#include "interlerp/metrics.hpp"
#include "interlerp/runlog.hpp"
#include "interlerp/sweep.hpp"

namespace py = pybind11;

namespace {

using namespace interlerp;

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<double> as_vector(const DoubleArray& array, const char* what) {
  if (array.ndim() != 1) {
    throw ShapeError(std::string(what) + " must be one-dimensional");
  }
  const double* begin = array.data();
  return std::vector<double>(begin, begin + array.shape(0));
}

py::array_t<double> as_array(const std::vector<double>& values) {
  py::array_t<double> out(static_cast<py::ssize_t>(values.size()));
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::array_t<double> schedule_matrix(const InterpolationSchedule& schedule) {
  const py::ssize_t rows = schedule.step_count();
  const py::ssize_t cols = rows ? schedule.steps.front().size() : 0;
  py::array_t<double> out({rows, cols});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < rows; ++r) {
    for (py::ssize_t c = 0; c < cols; ++c) {
      view(r, c) = schedule.steps[static_cast<std::size_t>(r)][static_cast<int>(c)];
    }
  }
  return out;
}

PairedSeries paired(const DoubleArray& predicted, const DoubleArray& truth) {
  return PairedSeries{as_vector(predicted, "predicted"),
                      as_vector(truth, "truth")};
}

// (B, C, H, W) float32 numpy batch -> torch tensor, accepting a single
// (C, H, W) image as a batch of one.
torch::Tensor images_to_tensor(const FloatArray& images, int c, int h, int w) {
  py::ssize_t b = 1;
  py::ssize_t offset = 0;
  if (images.ndim() == 4) {
    b = images.shape(0);
    offset = 1;
  } else if (images.ndim() != 3) {
    throw ShapeError("images must have shape (B, C, H, W) or (C, H, W)");
  }
  if (images.shape(offset) != c || images.shape(offset + 1) != h ||
      images.shape(offset + 2) != w) {
    throw ShapeError("images do not match the checkpoint's " +
                     std::to_string(c) + "x" + std::to_string(h) + "x" +
                     std::to_string(w) + " layout");
  }
  torch::Tensor tensor = torch::empty({b, c, h, w}, torch::kFloat32);
  std::copy(images.data(), images.data() + images.size(),
            tensor.data_ptr<float>());
  return tensor;
}

py::array_t<float> tensor_to_float_array(const torch::Tensor& tensor) {
  const torch::Tensor contiguous = tensor.contiguous().to(torch::kFloat32);
  std::vector<py::ssize_t> shape(contiguous.sizes().begin(),
                                 contiguous.sizes().end());
  py::array_t<float> out(shape);
  std::copy(contiguous.data_ptr<float>(),
            contiguous.data_ptr<float>() + contiguous.numel(),
            out.mutable_data());
  return out;
}

py::array_t<double> tensor_to_double_array(const torch::Tensor& tensor) {
  const torch::Tensor contiguous = tensor.contiguous().to(torch::kFloat64);
  std::vector<py::ssize_t> shape(contiguous.sizes().begin(),
                                 contiguous.sizes().end());
  py::array_t<double> out(shape);
  std::copy(contiguous.data_ptr<double>(),
            contiguous.data_ptr<double>() + contiguous.numel(),
            out.mutable_data());
  return out;
}

struct PyGenerator {
  GeneratorCheckpoint ckpt;

  explicit PyGenerator(const std::filesystem::path& dir)
      : ckpt(GeneratorCheckpoint::load(dir)) {}

  py::array_t<float> generate(const DoubleArray& conditioning, int count,
                              std::uint64_t seed) const {
    if (count < 1) throw ValidationError("count must be positive");
    const std::vector<double> values = as_vector(conditioning, "conditioning");
    if (static_cast<int>(values.size()) != ckpt.config.n_classes) {
      throw ShapeError("conditioning has " + std::to_string(values.size()) +
                       " classes, checkpoint expects " +
                       std::to_string(ckpt.config.n_classes));
    }
    const ConditioningVector v(values);  // validates the simplex invariants

    const auto noise = sample_noise(seed, count, ckpt.config.z_dim);
    torch::Tensor z = torch::empty({count, ckpt.config.z_dim}, torch::kFloat32);
    for (int i = 0; i < count; ++i) {
      std::copy(noise[static_cast<std::size_t>(i)].begin(),
                noise[static_cast<std::size_t>(i)].end(),
                z.data_ptr<float>() + static_cast<std::ptrdiff_t>(i) *
                                          ckpt.config.z_dim);
    }
    torch::Tensor rows =
        torch::empty({1, ckpt.config.n_classes}, torch::kFloat32);
    for (int i = 0; i < ckpt.config.n_classes; ++i) {
      rows[0][i] = static_cast<float>(v[i]);
    }

    torch::Tensor images;
    {
      py::gil_scoped_release release;
      torch::NoGradGuard no_grad;
      images = generate_tensor(ckpt, z, rows.repeat({count, 1}));
    }
    return tensor_to_float_array(images);
  }
};

struct PyJudge {
  JudgeCheckpoint ckpt;

  explicit PyJudge(const std::filesystem::path& dir)
      : ckpt(JudgeCheckpoint::load(dir)) {}

  py::array_t<double> classify(const FloatArray& images) const {
    torch::Tensor batch =
        images_to_tensor(images, ckpt.image_c, ckpt.image_h, ckpt.image_w);
    torch::Tensor probs;
    {
      py::gil_scoped_release release;
      torch::NoGradGuard no_grad;
      probs = classify_batch(ckpt, batch);
    }
    return tensor_to_double_array(probs);
  }

  py::array_t<double> predict_va(const FloatArray& images) const {
    torch::Tensor batch =
        images_to_tensor(images, ckpt.image_c, ckpt.image_h, ckpt.image_w);
    torch::Tensor va;
    {
      py::gil_scoped_release release;
      torch::NoGradGuard no_grad;
      va = predict_va_batch(ckpt, batch);
    }
    return tensor_to_double_array(va);
  }
};

py::dict trajectory_dict(const TrajectoryStats& t) {
  const py::ssize_t steps = t.step_count();
  const py::ssize_t width =
      steps ? static_cast<py::ssize_t>(t.steps.front().mean.size()) : 0;
  py::array_t<double> e(steps);
  py::array_t<double> mean({steps, width});
  py::array_t<double> stddev({steps, width});
  auto ev = e.mutable_unchecked<1>();
  auto mv = mean.mutable_unchecked<2>();
  auto sv = stddev.mutable_unchecked<2>();
  for (py::ssize_t s = 0; s < steps; ++s) {
    const StepStats& step = t.steps[static_cast<std::size_t>(s)];
    ev(s) = step.e;
    for (py::ssize_t k = 0; k < width; ++k) {
      mv(s, k) = step.mean[static_cast<std::size_t>(k)];
      sv(s, k) = step.stddev[static_cast<std::size_t>(k)];
    }
  }
  py::dict out;
  out["kind"] = t.kind;
  out["source"] = t.source;
  out["target"] = t.target;
  out["source_name"] = t.source_name;
  out["target_name"] = t.target_name;
  out["n_samples"] = t.n_samples;
  out["e"] = std::move(e);
  out["mean"] = std::move(mean);
  out["stddev"] = std::move(stddev);
  return out;
}

py::list confidence_sweep(const std::filesystem::path& gan_dir,
                          const std::filesystem::path& judge_dir,
                          const std::vector<std::pair<int, int>>& pairs,
                          int n_samples, double step_size,
                          std::uint64_t seed) {
  const GeneratorCheckpoint gan = GeneratorCheckpoint::load(gan_dir);
  const JudgeCheckpoint judge = JudgeCheckpoint::load(judge_dir);
  SweepSpec spec;
  spec.gan = &gan;
  spec.judge = &judge;
  spec.pairs = pairs;
  spec.n_samples = n_samples;
  spec.step_size = step_size;
  spec.seed = seed;
  std::vector<TrajectoryStats> stats;
  {
    py::gil_scoped_release release;
    stats = run_confidence_sweep(spec);
  }
  py::list out;
  for (const TrajectoryStats& t : stats) out.append(trajectory_dict(t));
  return out;
}

py::list va_sweep(const std::filesystem::path& gan_dir,
                  const std::filesystem::path& judge_dir, int neutral,
                  int valence_class, int arousal_class,
                  const std::vector<int>& targets, int n_samples,
                  double step_size, std::uint64_t seed) {
  const GeneratorCheckpoint gan = GeneratorCheckpoint::load(gan_dir);
  const JudgeCheckpoint judge = JudgeCheckpoint::load(judge_dir);
  SweepSpec spec;
  spec.gan = &gan;
  spec.judge = &judge;
  for (int target : targets) spec.pairs.emplace_back(neutral, target);
  spec.n_samples = n_samples;
  spec.step_size = step_size;
  spec.seed = seed;
  const AxisMap axes{valence_class, arousal_class};
  std::vector<TrajectoryStats> stats;
  {
    py::gil_scoped_release release;
    stats = run_va_sweep(spec, axes, neutral);
  }
  py::list out;
  for (const TrajectoryStats& t : stats) out.append(trajectory_dict(t));
  return out;
}

}  // namespace

PYBIND11_MODULE(_interlerp, m) {
  m.doc() = "conditional-GAN label interpolation toolkit";
  m.attr("__version__") = kCodeVersion;

  py::register_exception<Error>(m, "Error");

  m.def(
      "one_hot",
      [](int index, int n) {
        return as_array(ConditioningVector::one_hot(index, n).values());
      },
      py::arg("index"), py::arg("n"),
      "One-hot conditioning vector of width n.");

  m.def(
      "transfer_mass",
      [](const DoubleArray& values, int source, int target, double e) {
        const ConditioningVector v(as_vector(values, "conditioning"));
        return as_array(transfer_mass(v, source, target, e).values());
      },
      py::arg("values"), py::arg("source"), py::arg("target"), py::arg("e"),
      "Move conditioning mass e from the source class to the target class.");

  m.def(
      "schedule",
      [](int source, int target, double step_size, int n_classes) {
        return schedule_matrix(
            build_schedule(source, target, step_size, n_classes));
      },
      py::arg("source"), py::arg("target"), py::arg("step_size"),
      py::arg("n_classes"),
      "Interpolation schedule as a (steps, n_classes) matrix walking the\n"
      "conditioning mass from one_hot(source) to one_hot(target).");

  m.def(
      "rmse",
      [](const DoubleArray& p, const DoubleArray& t) {
        return rmse(paired(p, t));
      },
      py::arg("predicted"), py::arg("truth"), "Root mean squared error.");
  m.def(
      "corr",
      [](const DoubleArray& p, const DoubleArray& t) {
        return corr(paired(p, t));
      },
      py::arg("predicted"), py::arg("truth"),
      "Pearson correlation (population moments).");
  m.def(
      "sagr",
      [](const DoubleArray& p, const DoubleArray& t) {
        return sagr(paired(p, t));
      },
      py::arg("predicted"), py::arg("truth"), "Sign agreement rate.");
  m.def(
      "ccc",
      [](const DoubleArray& p, const DoubleArray& t) {
        return ccc(paired(p, t));
      },
      py::arg("predicted"), py::arg("truth"),
      "Concordance correlation coefficient.");

  m.def(
      "monotonicity",
      [](const DoubleArray& series) {
        const MonotonicityReport report =
            monotonicity(as_vector(series, "series"));
        py::dict out;
        out["spearman_rho"] = report.spearman_rho;
        out["n_steps"] = report.n_steps;
        out["direction"] = report.direction;
        return out;
      },
      py::arg("series"),
      "Spearman rank correlation of a per-step series against step index.");

  m.def("fingerprint_file", &fingerprint_file, py::arg("path"),
        "Content hash of one file (16 hex characters).");
  m.def("fingerprint_checkpoint", &fingerprint_checkpoint, py::arg("dir"),
        "Content hash of a checkpoint directory.");

  py::class_<PyGenerator>(m, "Generator",
                          "Trained conditional generator loaded from a "
                          "checkpoint directory.")
      .def(py::init<const std::filesystem::path&>(), py::arg("dir"))
      .def_property_readonly(
          "z_dim", [](const PyGenerator& g) { return g.ckpt.config.z_dim; })
      .def_property_readonly(
          "n_classes",
          [](const PyGenerator& g) { return g.ckpt.config.n_classes; })
      .def_property_readonly("image_shape",
                             [](const PyGenerator& g) {
                               return py::make_tuple(g.ckpt.config.image_c,
                                                     g.ckpt.config.image_h,
                                                     g.ckpt.config.image_w);
                             })
      .def_property_readonly(
          "class_names",
          [](const PyGenerator& g) { return g.ckpt.label_map.names; })
      .def_property_readonly("batches_completed",
                             [](const PyGenerator& g) {
                               return g.ckpt.batches_completed;
                             })
      .def("generate", &PyGenerator::generate, py::arg("conditioning"),
           py::arg("count") = 1, py::arg("seed") = 0,
           "Images (count, C, H, W) in [-1, 1]; sample i draws its noise\n"
           "from substream (seed, i).");

  py::class_<PyJudge>(m, "Judge",
                      "Trained evaluation judge loaded from a checkpoint "
                      "directory.")
      .def(py::init<const std::filesystem::path&>(), py::arg("dir"))
      .def_property_readonly("kind",
                             [](const PyJudge& j) { return j.ckpt.kind; })
      .def_property_readonly(
          "class_names",
          [](const PyJudge& j) { return j.ckpt.label_map.names; })
      .def_property_readonly("axes",
                             [](const PyJudge& j) { return j.ckpt.axes; })
      .def_property_readonly("gate_passed",
                             [](const PyJudge& j) { return j.ckpt.gate_passed; })
      .def_property_readonly("metrics",
                             [](const PyJudge& j) {
                               return py::module_::import("json").attr(
                                   "loads")(j.ckpt.metrics.dump());
                             })
      .def("classify", &PyJudge::classify, py::arg("images"),
           "Softmax probabilities (B, n_classes) for a (B, C, H, W) batch.")
      .def("predict_va", &PyJudge::predict_va, py::arg("images"),
           "Valence/arousal predictions (B, 2) in [-1, 1].");

  m.def("confidence_sweep", &confidence_sweep, py::arg("gan_dir"),
        py::arg("judge_dir"),
        py::arg("pairs") = std::vector<std::pair<int, int>>{},
        py::arg("n_samples") = 1000, py::arg("step_size") = 0.1,
        py::arg("seed") = 0,
        "Classifier-confidence trajectories for the given ordered class\n"
        "pairs (all ordered pairs when empty).");

  m.def("va_sweep", &va_sweep, py::arg("gan_dir"), py::arg("judge_dir"),
        py::arg("neutral"), py::arg("valence_class"), py::arg("arousal_class"),
        py::arg("targets") = std::vector<int>{}, py::arg("n_samples") = 1000,
        py::arg("step_size") = 0.1, py::arg("seed") = 0,
        "Valence/arousal trajectories from the neutral class toward each\n"
        "target emotion (every non-neutral class when targets is empty).");
}
