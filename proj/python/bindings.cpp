#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cordvip/diffpolicy.hpp"
#include "cordvip/pcgeom.hpp"
#include "cordvip/pipeline.hpp"
#include "cordvip/se3kin.hpp"
#include "cordvip/toyenv.hpp"

namespace py = pybind11;
using namespace cordvip;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointSet to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ShapeError("expected an (N, 3) array");
  PointSet out(static_cast<std::size_t>(a.shape(0)));
  auto v = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(v(i, 0), v(i, 1), v(i, 2));
  return out;
}

Array from_points(const PointSet& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int j = 0; j < 3; ++j) v(i, j) = pts[i][j];
  return out;
}

template <typename T>
py::array_t<T> from_vector(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict observation_dict(const Observation& obs) {
  py::dict d;
  d["obj_pc"] = from_points(obs.obj_pc);
  d["hand_pc"] = from_points(obs.hand_pc);
  d["arm_state"] = from_vector(obs.arm_state);
  d["hand_state"] = from_vector(obs.hand_state);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Interaction-aware point clouds, contact maps and a toy diffusion-policy pipeline.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  // Geometry.
  m.def(
      "knn",
      [](const Array& query, const Array& reference, std::size_t k) {
        const auto table = knn(to_points(query), to_points(reference), k);
        py::array_t<std::int64_t> idx({static_cast<py::ssize_t>(table.rows()), static_cast<py::ssize_t>(k)});
        Array sq({static_cast<py::ssize_t>(table.rows()), static_cast<py::ssize_t>(k)});
        auto iv = idx.mutable_unchecked<2>();
        auto dv = sq.mutable_unchecked<2>();
        for (std::size_t i = 0; i < table.rows(); ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            iv(i, j) = static_cast<std::int64_t>(table.row(i)[j]);
            dv(i, j) = table.sq_distances(i)[j];
          }
        }
        return py::make_tuple(idx, sq);
      },
      py::arg("query"), py::arg("reference"), py::arg("k"),
      "Exact k nearest neighbors. Returns (indices, squared distances), ties broken by index.");
  m.def(
      "farthest_point_sample",
      [](const Array& cloud, std::size_t count, std::size_t start) {
        const auto idx = farthest_point_sample(to_points(cloud), count, start);
        return from_vector(std::vector<std::int64_t>(idx.begin(), idx.end()));
      },
      py::arg("cloud"), py::arg("count"), py::arg("start") = 0);
  m.def(
      "estimate_normals",
      [](const Array& cloud, std::size_t k) {
        const auto ns = estimate_normals(to_points(cloud), k);
        return py::make_tuple(from_points(ns.normals),
                              from_vector(std::vector<std::uint8_t>(ns.degenerate.begin(), ns.degenerate.end())));
      },
      py::arg("cloud"), py::arg("k") = 16);
  m.def(
      "aligned_distance",
      [](const Array& obj, const Array& normals, const Array& hand, double gamma) {
        NormalSet ns;
        ns.normals = to_points(normals);
        ns.degenerate.assign(ns.normals.size(), false);
        return from_vector(aligned_distance(to_points(obj), ns, to_points(hand), gamma));
      },
      py::arg("obj"), py::arg("normals"), py::arg("hand"), py::arg("gamma") = kDefaultAlignGamma);
  m.def(
      "contact_map",
      [](const Array& distances, double theta) { return from_vector(contact_map(to_vector(distances), theta)); },
      py::arg("distances"), py::arg("theta") = kDefaultContactTheta);

  // Kinematics.
  py::class_<KinematicChain>(m, "KinematicChain")
      .def_static("from_json", &KinematicChain::from_json)
      .def_static("load", &KinematicChain::load)
      .def_static("benchmark", &make_benchmark_chain, py::arg("links"))
      .def("to_json", &KinematicChain::to_json)
      .def_property_readonly("num_links", &KinematicChain::num_links)
      .def_property_readonly("num_joints", &KinematicChain::num_joints)
      .def(
          "link_poses",
          [](const KinematicChain& chain, const std::vector<double>& q) {
            std::vector<Array> out;
            for (const auto& pose : chain_fk(chain, JointVector(chain, q))) {
              Array mat({py::ssize_t{4}, py::ssize_t{4}});
              auto v = mat.mutable_unchecked<2>();
              const Eigen::Matrix4d h = pose.matrix();
              for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) v(i, j) = h(i, j);
              out.push_back(mat);
            }
            return out;
          },
          py::arg("q"), "Homogeneous link poses in the base frame.")
      .def(
          "pointcloud",
          [](const KinematicChain& chain, const std::vector<double>& q, std::size_t samples_per_link,
             std::size_t n_points, std::uint64_t seed) {
            std::vector<PointSet> samples;
            for (std::size_t i = 0; i < chain.num_links(); ++i)
              samples.push_back(sample_link_surface(chain.links()[i], samples_per_link, derive_seed(seed, i)));
            return from_points(fk_pointcloud(chain, JointVector(chain, q), samples, std::nullopt, n_points));
          },
          py::arg("q"), py::arg("samples_per_link") = 256, py::arg("n_points") = kDefaultCloudSize,
          py::arg("seed") = 0);

  // Toy planar-push environment.
  auto toy = m.def_submodule("toy", "Deterministic planar pushing with a two-finger gripper.");
  py::class_<toy::EnvState>(toy, "EnvState")
      .def_readwrite("obj_x", &toy::EnvState::obj_x)
      .def_readwrite("obj_y", &toy::EnvState::obj_y)
      .def_readwrite("obj_yaw", &toy::EnvState::obj_yaw)
      .def_readwrite("q_arm", &toy::EnvState::q_arm)
      .def_readwrite("q_hand", &toy::EnvState::q_hand)
      .def_readonly("goal_x", &toy::EnvState::goal_x)
      .def_readonly("goal_y", &toy::EnvState::goal_y)
      .def_readonly("step", &toy::EnvState::step)
      .def_readonly("seed", &toy::EnvState::seed)
      .def("__eq__", [](const toy::EnvState& a, const toy::EnvState& b) { return a == b; })
      .def("__repr__", [](const toy::EnvState& s) {
        return "EnvState(obj=(" + std::to_string(s.obj_x) + ", " + std::to_string(s.obj_y) + "), step=" +
               std::to_string(s.step) + ")";
      });
  py::class_<toy::Action>(toy, "Action")
      .def(py::init<>())
      .def(py::init([](std::array<double, toy::kArmDim> arm, std::array<double, toy::kHandDim> hand) {
             return toy::Action{arm, hand};
           }),
           py::arg("arm"), py::arg("hand"))
      .def_readwrite("arm", &toy::Action::arm)
      .def_readwrite("hand", &toy::Action::hand);
  toy.def("reset", &toy::reset, py::arg("seed"));
  toy.def(
      "step", [](const toy::EnvState& s, const toy::Action& a) { return toy::step(s, a); }, py::arg("state"),
      py::arg("action"));
  toy.def("expert_action", &toy::expert_action, py::arg("state"));
  toy.def("success", &toy::success, py::arg("state"));
  toy.def(
      "render",
      [](const toy::EnvState& s) {
        const auto f = toy::render_observation(s);
        auto d = observation_dict(f.obs);
        d["contact"] = from_vector(f.contact);
        return d;
      },
      py::arg("state"), "Observation clouds, proprioception and ground-truth contact map.");

  // Diffusion schedule.
  m.def(
      "alpha_bar",
      [](std::size_t K, const std::string& kind) {
        return from_vector(make_schedule(K, parse_schedule_kind(kind)).alpha_bar);
      },
      py::arg("K") = 100, py::arg("kind") = "squaredcos");
  m.def("ddim_timesteps", &ddim_timesteps, py::arg("K"), py::arg("n"));

  // Pipeline.
  m.def(
      "gen_data",
      [](const std::string& out, std::size_t episodes, std::uint64_t seed, std::size_t max_steps,
         std::size_t n_points) {
        GenDataOptions o;
        o.out_dir = out;
        o.episodes = episodes;
        o.seed = seed;
        o.max_steps = max_steps;
        o.n_points = n_points;
        py::gil_scoped_release release;
        return gen_data(o);
      },
      py::arg("out"), py::arg("episodes") = 50, py::arg("seed") = 0, py::arg("max_steps") = toy::kDefaultMaxSteps,
      py::arg("n_points") = kDefaultCloudSize);
  m.def(
      "evaluate",
      [](const std::string& policy, std::size_t episodes, std::uint64_t seed, const std::string& report) {
        EvalResult r;
        {
          py::gil_scoped_release release;
          r = evaluate(policy, episodes, seed, report);
        }
        py::dict d;
        d["success_rate"] = r.success_rate;
        d["steps_per_second"] = r.steps_per_second;
        py::list eps;
        for (const auto& e : r.episodes) {
          py::dict row;
          row["env_seed"] = e.env_seed;
          row["success"] = e.success;
          row["steps"] = e.steps;
          row["final_distance"] = e.final_distance;
          eps.append(row);
        }
        d["episodes"] = eps;
        return d;
      },
      py::arg("policy"), py::arg("episodes"), py::arg("seed"), py::arg("report"));
  m.def(
      "bench_fk",
      [](std::size_t links, std::size_t points, double seconds) {
        BenchResult r;
        {
          py::gil_scoped_release release;
          r = bench_fk(links, points, seconds);
        }
        return py::make_tuple(r.calls, r.seconds, r.calls_per_second);
      },
      py::arg("links") = 20, py::arg("points") = 1024, py::arg("seconds") = 1.0);

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
