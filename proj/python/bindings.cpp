#include "bgtri/backward.hpp"
#include "bgtri/bezier.hpp"
#include "bgtri/dataio.hpp"
#include "bgtri/error.hpp"
#include "bgtri/metrics.hpp"
#include "bgtri/render.hpp"
#include "bgtri/synth.hpp"
#include "bgtri/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace bgt;

namespace {

py::array_t<double> to_numpy(const Image& img) {
  py::array_t<double> out({img.height, img.width, img.channels});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

Image from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw DimensionError("expected an (H, W, C) array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
            static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

std::vector<Vec3> points_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw DimensionError("expected an (N, 3) array");
  std::vector<Vec3> out(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(a.at(i, 0), a.at(i, 1), a.at(i, 2));
  return out;
}

ControlNet net_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  ControlNet net;
  const auto pts = points_from_numpy(a);
  int degree = 0;
  while (control_count(degree) < static_cast<int>(pts.size())) ++degree;
  if (control_count(degree) != static_cast<int>(pts.size()))
    throw DimensionError("control point count is not triangular");
  net.degree = degree;
  net.points = pts;
  return net;
}

py::array_t<double> net_to_numpy(const ControlNet& net) {
  py::array_t<double> out({static_cast<py::ssize_t>(net.points.size()), py::ssize_t(3)});
  for (std::size_t i = 0; i < net.points.size(); ++i)
    for (int c = 0; c < 3; ++c) out.mutable_at(i, c) = net.points[i][c];
  return out;
}

TrainConfig config_from_dict(const py::dict& d) {
  TrainConfig config;
  for (const auto& [key, value] : d)
    set_config_value(config, py::str(key), py::str(value));
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bezier triangle splatting core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<MissingFileError>(m, "MissingFileError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<VersionError>(m, "VersionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<Camera>(m, "Camera")
      .def(py::init<>())
      .def_static("look_at", &Camera::look_at, py::arg("eye"), py::arg("target"), py::arg("up"),
                  py::arg("fov_x"), py::arg("width"), py::arg("height"))
      .def_readwrite("rotation", &Camera::rotation)
      .def_readwrite("translation", &Camera::translation)
      .def_readwrite("fx", &Camera::fx)
      .def_readwrite("fy", &Camera::fy)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy)
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def("project", &Camera::project)
      .def("center", &Camera::center)
      .def("zoomed", &Camera::zoomed);

  py::class_<Scene>(m, "Scene")
      .def(py::init<>())
      .def("__len__", [](const Scene& s) { return s.primitives.size(); })
      .def_readwrite("background", &Scene::background)
      .def_readwrite("boundary_scale", &Scene::boundary_scale)
      .def("parameter_count", &Scene::parameter_count)
      .def("set_footprint", &Scene::set_footprint)
      .def("control_points",
           [](const Scene& s, std::size_t i) { return net_to_numpy(s.primitives.at(i).geometry); })
      .def("colors",
           [](const Scene& s, std::size_t i) { return net_to_numpy(s.primitives.at(i).color); })
      .def("sample_surface", [](const Scene& s, int per_primitive, std::uint64_t seed) {
        std::vector<Vec3> pts;
        for (std::size_t i = 0; i < s.primitives.size(); ++i) {
          const auto p = sample_surface_points(s.primitives[i], per_primitive, seed + i);
          pts.insert(pts.end(), p.begin(), p.end());
        }
        py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t(3)});
        for (std::size_t i = 0; i < pts.size(); ++i)
          for (int c = 0; c < 3; ++c) out.mutable_at(i, c) = pts[i][c];
        return out;
      });

  m.def("init_from_cube", &init_from_cube, py::arg("center"), py::arg("edge"),
        py::arg("per_face_subdiv") = 1);
  m.def(
      "init_from_points",
      [](const py::array_t<double>& pts, int count, double size, std::uint64_t seed, bool fit) {
        const auto p = points_from_numpy(pts);
        return init_from_point_cloud(p, count, size, seed, fit);
      },
      py::arg("points"), py::arg("count"), py::arg("triangle_size"), py::arg("seed") = 0,
      py::arg("fit_orientation") = false);
  m.def(
      "save_checkpoint",
      [](const Scene& s, const std::filesystem::path& p) { save_checkpoint(s, nullptr, p); });
  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); });

  m.def(
      "render",
      [](const Scene& scene, const Camera& cam, bool blending, int threads) {
        RenderOptions opts;
        opts.blending = blending;
        opts.threads = threads;
        const ForwardPass pass = render(scene, cam, opts);
        py::array_t<int> ids({cam.height, cam.width});
        py::array_t<double> depth({cam.height, cam.width});
        std::copy(pass.buffers.id.begin(), pass.buffers.id.end(), ids.mutable_data());
        std::copy(pass.buffers.depth.begin(), pass.buffers.depth.end(), depth.mutable_data());
        py::dict out;
        out["image"] = to_numpy(pass.image());
        out["ids"] = ids;
        out["depth"] = depth;
        out["boundary_points"] = pass.buffers.boundary.size();
        return out;
      },
      py::arg("scene"), py::arg("camera"), py::arg("blending") = true, py::arg("threads") = 1);

  m.def(
      "evaluate_surface",
      [](const py::array_t<double>& points, const std::array<double, 3>& bc) {
        return evaluate_surface(net_from_numpy(points), {bc[0], bc[1], bc[2]});
      },
      py::arg("control_points"), py::arg("bc"));
  m.def("subdivide", [](const py::array_t<double>& points) {
    py::list out;
    for (const ControlNet& c : subdivide_4(net_from_numpy(points))) out.append(net_to_numpy(c));
    return out;
  });

  m.def("psnr", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return psnr(from_numpy(a), from_numpy(b));
  });
  m.def("ssim", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return ssim(from_numpy(a), from_numpy(b));
  });
  m.def("chamfer", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    const auto p = points_from_numpy(a), q = points_from_numpy(b);
    return chamfer(p, q);
  });

  m.def(
      "make_dataset",
      [](const std::filesystem::path& dir, const std::string& shape, const std::string& texture,
         int n_train, int n_test, int size, std::uint64_t seed, bool closeup) {
        synth::DatasetSpec spec;
        spec.shape = synth::shape_from_string(shape);
        spec.texture = synth::texture_from_string(texture);
        spec.n_train = n_train;
        spec.n_test = n_test;
        spec.width = spec.height = size;
        spec.seed = seed;
        spec.closeup = closeup;
        synth::make_dataset(dir, spec);
      },
      py::arg("dir"), py::arg("shape") = "cube", py::arg("texture") = "checker",
      py::arg("n_train") = 100, py::arg("n_test") = 20, py::arg("size") = 128,
      py::arg("seed") = 0, py::arg("closeup") = false);

  m.def(
      "load_dataset",
      [](const std::filesystem::path& dir, const std::string& split) {
        py::list views;
        for (const View& v : load_dataset(dir, split).views)
          views.append(py::make_tuple(v.camera, to_numpy(v.image)));
        return views;
      },
      py::arg("dir"), py::arg("split") = "train");

  m.def(
      "train",
      [](const std::filesystem::path& dataset, const py::dict& config, const std::string& init,
         int init_count, bool fit_orientation,
         const std::optional<std::filesystem::path>& out_dir) {
        const TrainConfig cfg = config_from_dict(config);
        const SceneDataset data = load_dataset(dataset, "train");
        InitOptions opts;
        opts.kind = init;
        opts.count = init_count > 0 ? init_count : cfg.max_primitives / 2;
        opts.fit_orientation = fit_orientation;
        opts.seed = cfg.seed;
        Scene scene = initialize_scene(data, read_points(dataset / "points3d.txt"), opts);
        TrainHooks hooks;
        if (out_dir) hooks.out_dir = *out_dir;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(std::move(scene), data, cfg, hooks);
        }
        py::dict out;
        out["scene"] = r.scene;
        out["initial_l2"] = r.initial_l2;
        out["final_l2"] = r.final_l2;
        return out;
      },
      py::arg("dataset"), py::arg("config") = py::dict(), py::arg("init") = "points",
      py::arg("init_count") = 0, py::arg("fit_orientation") = false, py::arg("out_dir") = py::none());

  m.def(
      "gradient_check",
      [](std::uint64_t seed, int count) {
        const auto [scene, cam] = gradient_check_scene(seed);
        const LossFn loss = [](const Image& img, Image* grad) {
          double total = 0.0;
          for (std::size_t i = 0; i < img.data.size(); ++i) total += (i % 7 + 1) * img.data[i];
          if (grad) {
            *grad = img;
            for (std::size_t i = 0; i < img.data.size(); ++i) grad->data[i] = i % 7 + 1;
          }
          return total;
        };
        const FdOptions fd;
        int checked = 0, failed = 0;
        for (const FdEntry& e :
             finite_difference_check(scene, cam, loss, sample_parameters(scene, count, seed), fd)) {
          if (e.excluded) continue;
          ++checked;
          failed += !fd_passes(e, fd);
        }
        return py::make_tuple(checked, failed);
      },
      py::arg("seed") = 0, py::arg("count") = 60);
}
