#include "ictxot/config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <type_traits>

namespace ictxot {

namespace {

void allow_keys(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

// nlohmann converts -3 to a huge size_t without complaint.
void require_unsigned(const Json& v, const char* key) {
  if (!v.is_number_unsigned()) throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
}

template <class T>
void read(const Json& j, const char* key, T& into) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    require_unsigned(v, key);
  } else if constexpr (requires { typename T::value_type; } && !std::is_same_v<T, std::string>) {
    if (std::is_unsigned_v<typename T::value_type>) {
      if (!v.is_array()) throw ConfigError(std::string("'") + key + "' must be a list");
      for (const Json& e : v) require_unsigned(e, key);
    }
  }
  into = v.get<T>();
}

Json section(const Json& j, const char* key) { return j.contains(key) ? j.at(key) : Json::object(); }

Interval interval_of(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(what + " must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

void parse_train(const Json& t, TrainConfig& c) {
  read(t, "base_lr", c.base_lr);
  read(t, "epochs", c.epochs);
  read(t, "beta1", c.beta1);
  read(t, "beta2", c.beta2);
  read(t, "adam_eps", c.adam_eps);
  read(t, "projection", c.projection);
  read(t, "shuffle", c.shuffle);
  read(t, "lambda", c.lambda);
}

template <class Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {  // includes DimensionError
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

TaskFamilySpec parse_family(const Json& j) {
  allow_keys(j, "task_family", {"kind", "dim", "mean_box", "eig_interval", "frame", "sigma2_min", "sigma2_max"});
  TaskFamilySpec spec;
  spec.kind = task_kind_from_string(j.at("kind").get<std::string>());
  read(j, "dim", spec.dim);
  if (j.contains("mean_box")) {
    const Json& box = j.at("mean_box");
    // One [lo, hi] for every coordinate, or a list of per-coordinate intervals.
    if (box.is_array() && box.size() == 2 && box[0].is_number()) {
      spec.mean_box.assign(spec.dim, interval_of(box, "mean_box"));
    } else {
      for (const Json& b : box) spec.mean_box.push_back(interval_of(b, "mean_box entry"));
    }
  }
  if (j.contains("eig_interval")) spec.eig_interval = interval_of(j.at("eig_interval"), "eig_interval");
  if (j.contains("frame")) spec.frame = matrix_from_json(j.at("frame"));
  read(j, "sigma2_min", spec.sigma2_min);
  read(j, "sigma2_max", spec.sigma2_max);
  spec.validate();
  return spec;
}

Json family_to_json(const TaskFamilySpec& spec) {
  Json j{{"kind", to_string(spec.kind)},
         {"dim", spec.dim},
         {"sigma2_min", spec.sigma2_min},
         {"sigma2_max", spec.sigma2_max}};
  if (spec.kind == TaskKind::MeanShift) {
    Json box = Json::array();
    for (const Interval& i : spec.mean_box) box.push_back({i.lo, i.hi});
    j["mean_box"] = box;
  } else {
    j["eig_interval"] = {spec.eig_interval.lo, spec.eig_interval.hi};
  }
  if (spec.frame) j["frame"] = ictxot::to_json(*spec.frame);
  return j;
}

ParametricExperiment parse_parametric(const Json& j) {
  return guarded([&] {
    allow_keys(j, "config", {"seed", "task_family", "model", "train", "eval"});
    ParametricExperiment e;
    read(j, "seed", e.seed);
    if (j.contains("task_family")) e.family = parse_family(j.at("task_family"));

    const Json m = section(j, "model");
    allow_keys(m, "model", {"units", "capacity", "c_theta"});
    read(m, "units", e.units);
    read(m, "capacity", e.capacity);
    read(m, "c_theta", e.c_theta);
    if (e.units == 0 || !(e.capacity > 0.0) || e.c_theta < 0.0) throw ConfigError("model: bad units/capacity/c_theta");

    const Json t = section(j, "train");
    allow_keys(t, "train", {"tasks", "n_grid", "epochs", "base_lr", "beta1", "beta2", "adam_eps", "projection",
                            "shuffle", "lambda"});
    read(t, "tasks", e.tasks);
    read(t, "n_grid", e.n_grid);
    parse_train(t, e.train);
    e.train.seed = e.seed;
    e.train.validate();
    if (e.tasks == 0 || e.n_grid.empty() || std::count(e.n_grid.begin(), e.n_grid.end(), 0u) > 0) {
      throw ConfigError("train: need tasks >= 1 and a nonempty grid of positive n");
    }

    const Json v = section(j, "eval");
    allow_keys(v, "eval", {"test_n", "seeds", "test_tasks", "checkpoint", "synthetic"});
    read(v, "test_n", e.test_n);
    read(v, "seeds", e.eval_seeds);
    read(v, "test_tasks", e.test_tasks);
    if (v.contains("checkpoint")) e.checkpoint = v.at("checkpoint").get<std::string>();
    if (v.contains("synthetic")) {
      const Json& s = v.at("synthetic");
      allow_keys(s, "eval.synthetic", {"a", "b", "c"});
      e.synthetic = SyntheticLaw{s.at("a").get<double>(), s.at("b").get<double>(), s.at("c").get<double>()};
    }
    if (e.test_n.empty() || e.eval_seeds == 0 || e.test_tasks == 0) throw ConfigError("eval: empty sweep");
    return e;
  });
}

Json ParametricExperiment::to_json() const {
  Json eval{{"test_n", test_n}, {"seeds", eval_seeds}, {"test_tasks", test_tasks}};
  if (checkpoint) eval["checkpoint"] = checkpoint->string();
  if (synthetic) eval["synthetic"] = {{"a", synthetic->a}, {"b", synthetic->b}, {"c", synthetic->c}};
  Json t = ictxot::to_json(train);
  t.erase("seed");
  t["tasks"] = tasks;
  t["n_grid"] = n_grid;
  return Json{{"seed", seed},
              {"task_family", family_to_json(family)},
              {"model", {{"units", units}, {"capacity", capacity}, {"c_theta", c_theta}}},
              {"train", t},
              {"eval", eval}};
}

NonparametricExperiment parse_nonparametric(const Json& j) {
  return guarded([&] {
    allow_keys(j, "config", {"seed", "task_family", "model", "train", "eval"});
    NonparametricExperiment e;
    e.train.lambda = 1.0;
    read(j, "seed", e.seed);
    if (j.contains("task_family")) e.family = parse_family(j.at("task_family"));

    const Json m = section(j, "model");
    allow_keys(m, "model", {"hidden", "heads", "prompt_length", "kernel_levels"});
    read(m, "hidden", e.model.hidden);
    read(m, "heads", e.model.heads);
    read(m, "prompt_length", e.model.prompt_length);
    read(m, "kernel_levels", e.kernel_levels);
    e.model.dim = e.family.dim;
    e.model.validate();
    KernelSpec::multiscale_rbf(e.kernel_levels).validate();

    const Json t = section(j, "train");
    allow_keys(t, "train", {"tasks", "pairs", "epochs", "base_lr", "beta1", "beta2", "adam_eps", "projection",
                            "shuffle", "lambda"});
    read(t, "tasks", e.tasks);
    read(t, "pairs", e.pairs);
    parse_train(t, e.train);
    e.train.projection = false;
    e.train.seed = e.seed;
    e.train.validate();
    if (e.tasks == 0 || e.pairs < 2) throw ConfigError("train: need tasks >= 1 and pairs >= 2");

    const Json v = section(j, "eval");
    allow_keys(v, "eval", {"test_tasks", "queries"});
    read(v, "test_tasks", e.test_tasks);
    read(v, "queries", e.queries);
    if (e.test_tasks == 0 || e.queries < 2) throw ConfigError("eval: need test_tasks >= 1 and queries >= 2");
    return e;
  });
}

Json NonparametricExperiment::to_json() const {
  Json t = ictxot::to_json(train);
  t.erase("seed");
  t.erase("projection");
  t["tasks"] = tasks;
  t["pairs"] = pairs;
  return Json{{"seed", seed},
              {"task_family", family_to_json(family)},
              {"model",
               {{"hidden", model.hidden},
                {"heads", model.heads},
                {"prompt_length", model.prompt_length},
                {"kernel_levels", kernel_levels}}},
              {"train", t},
              {"eval", {{"test_tasks", test_tasks}, {"queries", queries}}}};
}

Json load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace ictxot
