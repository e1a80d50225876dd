#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "recurrdrive/config.hpp"
#include "recurrdrive/eval/eval.hpp"
#include "recurrdrive/ppo/env.hpp"
#include "recurrdrive/ppo/gae.hpp"
#include "recurrdrive/ppo/trainer.hpp"

namespace py = pybind11;
using namespace rdn;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::array_t<float> observation_array(const bev::BevObservation& obs) {
  py::array_t<float> out({obs.channels, obs.size, obs.size});
  std::copy(obs.data.begin(), obs.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> measurement_array(const sim::EgoMeasurement& m) {
  const auto a = m.as_array();
  py::array_t<double> out(static_cast<py::ssize_t>(a.size()));
  std::copy(a.begin(), a.end(), out.mutable_data());
  return out;
}

sim::ScenarioConfig scenario_from_kwargs(const py::kwargs& kw) {
  sim::ScenarioConfig c;
  for (const auto& [key, value] : kw) {
    const std::string k = py::str(key);
    if (k == "layout") c.layout = parse_layout(value.cast<std::string>());
    else if (k == "grid_rows") c.grid_rows = value.cast<int>();
    else if (k == "grid_cols") c.grid_cols = value.cast<int>();
    else if (k == "seed") c.seed = value.cast<std::uint64_t>();
    else if (k == "n_vehicles") c.n_vehicles = value.cast<int>();
    else if (k == "n_pedestrians") c.n_pedestrians = value.cast<int>();
    else if (k == "speed_limit_mps") c.speed_limit_mps = value.cast<double>();
    else if (k == "block_length_m") c.block_length_m = value.cast<double>();
    else throw py::key_error("unknown scenario key '" + k + "'");
  }
  return c;
}

// A DrivingEnv that owns its map.
class PyEnv {
 public:
  PyEnv(const sim::ScenarioConfig& scenario, const std::string& mode, int image_size, int max_episode_ticks,
        std::uint64_t seed)
      : map_(sim::make_map(scenario)), env_(make_config(scenario, mode, image_size, max_episode_ticks), map_, seed) {}

  void reset() { env_.reset(); }
  void respawn() { env_.respawn(); }

  py::dict step(double action) {
    const ppo::EnvStep r = env_.step(action);
    py::list infractions;
    for (const auto& e : r.events.infractions) {
      infractions.append(py::make_tuple(sim::to_string(e.type), e.position.x, e.position.y));
    }
    py::dict out;
    out["reward"] = r.reward;
    out["terminated"] = r.terminated;
    out["truncated"] = r.truncated;
    out["distance"] = r.events.distance;
    out["infractions"] = infractions;
    return out;
  }

  py::array_t<float> observation() const { return observation_array(env_.observation()); }
  py::array_t<double> measurement() const { return measurement_array(env_.measurement()); }
  std::int64_t tick() const { return env_.world().tick; }
  py::tuple ego_pose() const {
    const auto& p = env_.world().ego.pose;
    return py::make_tuple(p.x, p.y, p.heading);
  }
  double ego_speed() const { return env_.world().ego.speed; }

 private:
  static ppo::EnvConfig make_config(const sim::ScenarioConfig& scenario, const std::string& mode, int image_size,
                                    int max_episode_ticks) {
    ppo::EnvConfig cfg;
    cfg.scenario = scenario;
    cfg.mode = bev::parse_mode(mode);
    cfg.render = bev::default_render_config(image_size);
    cfg.max_episode_ticks = max_episode_ticks;
    return cfg;
  }

  std::shared_ptr<const sim::TownMap> map_;
  ppo::DrivingEnv env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "RecurrDriveNet simulator, trainer and evaluation harness";
  m.attr("__version__") = RDN_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<nn::CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<eval::EvalError>(m, "EvalError", PyExc_RuntimeError);

  py::class_<sim::ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init([](const py::kwargs& kw) { return scenario_from_kwargs(kw); }))
      .def_static("load", &load_scenario, py::arg("path"))
      .def_readwrite("grid_rows", &sim::ScenarioConfig::grid_rows)
      .def_readwrite("grid_cols", &sim::ScenarioConfig::grid_cols)
      .def_readwrite("seed", &sim::ScenarioConfig::seed)
      .def_readwrite("n_vehicles", &sim::ScenarioConfig::n_vehicles)
      .def_readwrite("n_pedestrians", &sim::ScenarioConfig::n_pedestrians)
      .def_readwrite("speed_limit_mps", &sim::ScenarioConfig::speed_limit_mps)
      .def_readwrite("block_length_m", &sim::ScenarioConfig::block_length_m)
      .def_property(
          "layout", [](const sim::ScenarioConfig& c) { return std::string(to_string(c.layout)); },
          [](sim::ScenarioConfig& c, const std::string& v) { c.layout = parse_layout(v); })
      .def("to_dict", [](const sim::ScenarioConfig& c) { return to_python(to_json(c)); });

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const sim::ScenarioConfig&, const std::string&, int, int, std::uint64_t>(),
           py::arg("scenario") = sim::ScenarioConfig{}, py::arg("mode") = "multi", py::arg("image_size") = 128,
           py::arg("max_episode_ticks") = 1000, py::arg("seed") = 0)
      .def("reset", &PyEnv::reset)
      .def("respawn", &PyEnv::respawn)
      .def("step", &PyEnv::step, py::arg("action"))
      .def("observation", &PyEnv::observation)
      .def("measurement", &PyEnv::measurement)
      .def_property_readonly("tick", &PyEnv::tick)
      .def_property_readonly("ego_pose", &PyEnv::ego_pose)
      .def_property_readonly("ego_speed", &PyEnv::ego_speed);

  m.def(
      "compute_gae",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> rewards,
         py::array_t<double, py::array::c_style | py::array::forcecast> values,
         py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> dones,
         py::array_t<double, py::array::c_style | py::array::forcecast> bootstrap, double gamma, double lam) {
        if (rewards.ndim() != 2) throw py::value_error("rewards must be (n_envs, steps)");
        const int n = static_cast<int>(rewards.shape(0));
        const int t = static_cast<int>(rewards.shape(1));
        const auto size = static_cast<std::size_t>(n) * t;
        if (static_cast<std::size_t>(values.size()) != size || static_cast<std::size_t>(dones.size()) != size ||
            bootstrap.size() != n) {
          throw py::value_error("values and dones must match rewards; bootstrap needs one value per env");
        }
        const ppo::GaeResult g = ppo::compute_gae({rewards.data(), size}, {values.data(), size}, {dones.data(), size},
                                                  {bootstrap.data(), static_cast<std::size_t>(n)}, n, t, gamma, lam);
        py::array_t<double> adv({n, t}), ret({n, t});
        std::copy(g.advantages.begin(), g.advantages.end(), adv.mutable_data());
        std::copy(g.returns.begin(), g.returns.end(), ret.mutable_data());
        return py::make_tuple(adv, ret);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap"), py::arg("gamma"),
      py::arg("lam"), "Advantages and returns, both shaped (n_envs, steps).");

  m.def(
      "load_train_config", [](const std::filesystem::path& p) { return to_python(to_json(load_train_config(p))); },
      py::arg("path"));

  m.def(
      "train",
      [](const std::filesystem::path& config, const std::filesystem::path& out, std::uint64_t seed,
         std::int64_t steps, bool resume) {
        TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
        if (steps > 0) cfg.ppo.total_steps = steps;
        ppo::TrainOptions opts;
        opts.out_dir = out;
        opts.seed = seed;
        opts.resume = resume;
        ppo::TrainResult r;
        {
          py::gil_scoped_release release;
          r = ppo::train(cfg, opts);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["steps"] = row.steps;
          d["mean_return"] = row.mean_return;
          d["policy_loss"] = row.policy_loss;
          d["value_loss"] = row.value_loss;
          d["clip_frac"] = row.clip_frac;
          d["approx_kl"] = row.approx_kl;
          rows.append(d);
        }
        py::dict out_dict;
        out_dict["steps"] = r.steps;
        out_dict["rows"] = rows;
        out_dict["checkpoints"] = r.checkpoints;
        out_dict["log_path"] = r.log_path;
        return out_dict;
      },
      py::arg("config") = std::filesystem::path(), py::arg("out"), py::arg("seed") = 0, py::arg("steps") = 0,
      py::arg("resume") = false);

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, std::int64_t steps, std::uint64_t seed) {
        const ppo::LoadedAgent agent = ppo::load_agent(checkpoint);
        eval::EvalMetrics mtr;
        {
          py::gil_scoped_release release;
          mtr = eval::evaluate_checkpoint(agent, steps, seed);
        }
        py::dict d;
        d["variant"] = mtr.variant;
        d["bev_mode"] = mtr.bev_mode;
        d["seed"] = mtr.seed;
        d["steps"] = mtr.steps;
        d["km"] = mtr.km;
        d["i_veh"] = mtr.i_veh;
        d["i_ped"] = mtr.i_ped;
        d["i_red"] = mtr.i_red;
        d["i_sum"] = mtr.i_sum;
        d["v_lim_dev_pct"] = mtr.v_lim_dev_pct;
        d["v_move"] = mtr.v_move_defined ? py::object(py::float_(mtr.v_move)) : py::none();
        d["zero_distance"] = mtr.zero_distance;
        return d;
      },
      py::arg("checkpoint"), py::arg("steps") = 1000, py::arg("seed") = 0);
}
