#include "ictxot/commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ictxot/mmd.hpp"

namespace ictxot {

namespace {

constexpr std::size_t kTrendWindow = 50;

std::string gnuplot_history(const std::string& csv, const std::string& title) {
  std::ostringstream g;
  g << "# " << title << "\n"
    << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set logscale y\n"
    << "set xlabel 'epoch'\n"
    << "plot '" << csv << "' using 1:3 with lines title 'risk', \\\n"
    << "     '' using 1:4 with lines title 'transport', \\\n"
    << "     '' using 1:5 with lines title 'penalty'\n";
  return g.str();
}

double window_mean(const std::vector<EpochRecord>& h, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += h[i].risk;
  return s / static_cast<double>(end - begin);
}

Json history_summary(const std::vector<EpochRecord>& h, bool aborted, const std::string& reason) {
  Json j{{"epochs_run", h.size()}, {"aborted", aborted}, {"abort_reason", reason}};
  if (!h.empty()) {
    const std::size_t w = std::max<std::size_t>(1, std::min(kTrendWindow, h.size() / 4));
    j["initial_risk"] = h.front().risk;
    j["final_risk"] = h.back().risk;
    j["initial_window_mean"] = window_mean(h, 0, w);
    j["final_window_mean"] = window_mean(h, h.size() - w, h.size());
  }
  return j;
}

Json fit_json(const FitResult& f) {
  return Json{{"a", f.a}, {"b", f.b}, {"c", f.c}, {"r2", f.r2}, {"model_string", f.model_string()}};
}

std::uint64_t eval_seed(std::uint64_t seed, std::size_t s) { return splitmix64(seed ^ 0x5EED0E7A1ULL) + s; }

}  // namespace

Json RunManifest::to_json() const {
  return Json{{"command", command}, {"config", config}, {"seed", seed}, {"config_sha1", config_sha1},
              {"outputs", outputs}};
}

RunManifest make_manifest(std::string command, Json resolved, std::uint64_t seed, std::vector<std::string> outputs) {
  RunManifest m;
  m.command = std::move(command);
  m.config_sha1 = git_blob_sha1(resolved.dump(2) + "\n");
  m.config = std::move(resolved);
  m.seed = seed;
  m.outputs = std::move(outputs);
  return m;
}

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest) {
  write_json(out_dir / "manifest.json", manifest.to_json());
}

std::vector<Matrix> parametric_training_samples(const ParametricExperiment& e) {
  std::vector<Matrix> samples;
  samples.reserve(e.tasks);
  for (std::size_t k = 0; k < e.tasks; ++k) {
    const GaussianTask task = sample_task_at(e.family, e.seed, k);
    Stream rng(e.seed, StreamPurpose::Prompt, k);
    const std::size_t n = e.n_grid[rng.below(e.n_grid.size())];
    samples.push_back(sample_points(task, 2 * n, rng));
  }
  return samples;
}

ParametricTrainResult train_parametric_experiment(const ParametricExperiment& e) {
  Stream init_rng(e.seed, StreamPurpose::Init);
  ParametricParams init = init_params(e.family.dim, e.units, e.train.lambda, e.capacity, init_rng);
  if (e.c_theta > 0.0) {
    init.c_theta = e.c_theta;
    project_to_class(init);
  }
  return train_parametric(init, parametric_training_samples(e), e.train);
}

std::vector<NpTaskData> nonparametric_tasks(const NonparametricExperiment& e, std::uint64_t first_index,
                                            std::size_t count, std::size_t pairs) {
  std::vector<NpTaskData> out;
  out.reserve(count);
  const std::size_t s = e.model.prompt_length, d = e.family.dim;
  for (std::uint64_t k = first_index; k < first_index + count; ++k) {
    const GaussianTask task = sample_task_at(e.family, e.seed, k);
    Stream prompt_rng(e.seed, StreamPurpose::Prompt, k);
    Stream query_rng(e.seed, StreamPurpose::Queries, k);
    Stream target_rng(e.seed, StreamPurpose::Targets, k);
    Prompt prompt{sample_standard_normal(s, d, prompt_rng), sample_points(task, s, prompt_rng), k};
    out.push_back({std::move(prompt), sample_standard_normal(pairs, d, query_rng), sample_points(task, pairs, target_rng)});
  }
  return out;
}

double displacement_std(const Matrix& queries, const Matrix& predictions) {
  if (queries.rows() != predictions.rows() || queries.cols() != predictions.cols() || queries.rows() == 0) {
    throw DimensionError("displacement_std: shape mismatch");
  }
  const Matrix disp = predictions - queries;
  const double m = static_cast<double>(disp.rows());
  std::vector<double> mean(disp.cols(), 0.0);
  for (std::size_t i = 0; i < disp.rows(); ++i)
    for (std::size_t j = 0; j < disp.cols(); ++j) mean[j] += disp(i, j) / m;
  double var = 0.0;
  for (std::size_t i = 0; i < disp.rows(); ++i)
    for (std::size_t j = 0; j < disp.cols(); ++j) var += (disp(i, j) - mean[j]) * (disp(i, j) - mean[j]) / m;
  return std::sqrt(var);
}

Json cmd_train_parametric(const ParametricExperiment& e, const std::filesystem::path& out) {
  write_manifest(out, make_manifest("train-parametric", e.to_json(), e.seed,
                                    {"checkpoint.json", "history.csv", "history.gp", "summary.json"}));
  const ParametricTrainResult r = train_parametric_experiment(e);
  write_json(out / "checkpoint.json", to_json(r.params));
  write_history_csv(out / "history.csv", r.history);
  write_text(out / "history.gp", gnuplot_history("history.csv", "parametric training risk"));
  Json summary = history_summary(r.history, r.aborted, r.abort_reason);
  summary["manifest"] = "manifest.json";
  write_json(out / "summary.json", summary);
  return summary;
}

Json cmd_scaling_law(const ParametricExperiment& e, const std::filesystem::path& out) {
  const bool synthetic = e.synthetic.has_value();
  const bool train_inline = !synthetic && !e.checkpoint;
  std::vector<std::string> outputs{"sweep.csv", "fit.json", "sweep.gp"};
  if (train_inline) outputs.insert(outputs.end(), {"checkpoint.json", "history.csv", "history.gp"});
  if (e.checkpoint && !synthetic && !std::filesystem::exists(*e.checkpoint)) {
    throw MissingArtifactError("checkpoint not found: " + e.checkpoint->string());
  }
  write_manifest(out, make_manifest("scaling-law", e.to_json(), e.seed, outputs));

  ParametricParams params;
  if (train_inline) {
    const ParametricTrainResult r = train_parametric_experiment(e);
    params = r.params;
    write_json(out / "checkpoint.json", to_json(params));
    write_history_csv(out / "history.csv", r.history);
    write_text(out / "history.gp", gnuplot_history("history.csv", "parametric training risk"));
  } else if (!synthetic) {
    params = parametric_from_json(read_json(*e.checkpoint));
  }

  std::ostringstream csv_text;
  CsvWriter csv(csv_text);
  csv.row({std::string("n"), std::string("seed"), std::string("excess_loss"), std::string("map_error"),
           std::string("risk"), std::string("reference"), std::string("sample_noise")});
  std::vector<ScalingPoint> excess_points, map_points;
  Json noise_by_n = Json::object();
  for (std::size_t n : e.test_n) {
    double excess_mean = 0.0, map_mean = 0.0, noise_mean = 0.0;
    for (std::size_t s = 0; s < e.eval_seeds; ++s) {
      ExcessLossReport rep;
      double map_err = 0.0;
      if (synthetic) {
        const double x = static_cast<double>(n);
        rep.excess = e.synthetic->a / std::sqrt(x) + e.synthetic->b / x + e.synthetic->c;
        map_err = rep.excess;
      } else {
        const auto tasks = sample_task_set(e.family, e.seed, e.test_tasks, kTestTaskIndex + s * e.test_tasks);
        rep = excess_loss_estimate(params, tasks, e.train.lambda, n, eval_seed(e.seed, s));
        map_err = transport_map_error(params, tasks, n, eval_seed(e.seed, s));
      }
      csv.row({static_cast<std::int64_t>(n), static_cast<std::int64_t>(s), rep.excess, map_err, rep.risk,
               rep.reference, rep.sample_noise});
      const double k = static_cast<double>(e.eval_seeds);
      excess_mean += rep.excess / k;
      map_mean += map_err / k;
      noise_mean += rep.sample_noise / k;
    }
    excess_points.push_back({static_cast<double>(n), excess_mean, ErrorKind::ExcessLoss});
    map_points.push_back({static_cast<double>(n), map_mean, ErrorKind::MapError});
    noise_by_n[std::to_string(n)] = noise_mean;
  }
  write_text(out / "sweep.csv", csv_text.str());

  const FitResult fe = fit_scaling_law(excess_points);
  const FitResult fm = fit_scaling_law(map_points);
  Json fit{{"excess_loss", fit_json(fe)},
           {"map_error", fit_json(fm)},
           {"fit_input", "mean over eval seeds at each n"},
           {"reference", "excess = risk - mean f_min(Sigma, lambda) over test tasks"},
           {"sample_noise_by_n", noise_by_n},
           {"bias_note", "sample_noise = lambda*(tr(S)^2+tr(S^2))/n is the O(lambda/n) part no map removes; "
                         "it is included in excess_loss"},
           {"synthetic", synthetic},
           {"manifest", "manifest.json"}};
  write_json(out / "fit.json", fit);

  std::ostringstream gp;
  gp << "# excess loss and map error against prompt length\n"
     << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set logscale xy\n"
     << "set xlabel 'n'\n"
     << "fe(x) = " << format_number(fe.a) << "/sqrt(x) + " << format_number(fe.b) << "/x + " << format_number(fe.c)
     << "\n"
     << "fm(x) = " << format_number(fm.a) << "/sqrt(x) + " << format_number(fm.b) << "/x + " << format_number(fm.c)
     << "\n"
     << "plot 'sweep.csv' using 1:3 with points title 'excess loss', fe(x) title 'fit', \\\n"
     << "     'sweep.csv' using 1:4 with points title 'map error', fm(x) title 'fit'\n";
  write_text(out / "sweep.gp", gp.str());
  return fit;
}

Json cmd_train_nonparametric(const NonparametricExperiment& e, const std::filesystem::path& out) {
  write_manifest(out, make_manifest("train-nonparametric", e.to_json(), e.seed,
                                    {"checkpoint.json", "history.csv", "history.gp", "predictions.csv",
                                     "predictions.gp", "eval.json"}));
  const KernelSpec kernel = KernelSpec::multiscale_rbf(e.kernel_levels);
  Stream init_rng(e.seed, StreamPurpose::Init);
  const NonparametricWeights init = NonparametricWeights::init(e.model, init_rng);
  const auto train_tasks = nonparametric_tasks(e, 0, e.tasks, e.pairs);
  const NonparametricTrainResult r = train_nonparametric(init, train_tasks, kernel, e.train);
  write_json(out / "checkpoint.json", to_json(r.weights));
  write_history_csv(out / "history.csv", r.history);
  write_text(out / "history.gp", gnuplot_history("history.csv", "cross-attention training risk"));

  const std::size_t d = e.family.dim;
  const auto test = nonparametric_tasks(e, kTestTaskIndex, e.test_tasks, e.queries);
  std::ostringstream csv_text;
  CsvWriter csv(csv_text);
  std::vector<CsvWriter::Cell> header{std::string("task")};
  for (const char* prefix : {"x", "yhat", "t"})
    for (std::size_t j = 0; j < d; ++j) header.emplace_back(prefix + std::to_string(j + 1));
  csv.row(header);

  Json per_task = Json::array();
  double worst_mmd = -1e300, worst_ratio = 0.0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const GaussianTask task = sample_task_at(e.family, e.seed, kTestTaskIndex + k);
    const Matrix pred = np_forward(r.weights, test[k].prompt, test[k].sources);
    const Matrix truth = ot_map_oracle(task).apply_rows(test[k].sources);
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      std::vector<CsvWriter::Cell> row{static_cast<std::int64_t>(k)};
      for (const Matrix* m : {&test[k].sources, &pred, &truth})
        for (std::size_t j = 0; j < d; ++j) row.emplace_back((*m)(i, j));
      csv.row(row);
    }
    const double mmd = mmd2_u(pred, test[k].targets, kernel);
    const double spread = displacement_std(test[k].sources, pred);
    double mean_norm = 0.0;
    for (double v : task.mean) mean_norm += v * v;
    mean_norm = std::sqrt(mean_norm);
    const double ratio = mean_norm > 0.0 ? spread / mean_norm : std::numeric_limits<double>::infinity();
    const double map_mse = frob_sq(pred - truth) / static_cast<double>(pred.rows());
    worst_mmd = std::max(worst_mmd, mmd);
    worst_ratio = std::max(worst_ratio, ratio);
    per_task.push_back({{"task", k}, {"mean", task.mean}, {"mmd2_u", mmd}, {"displacement_std", spread},
                        {"mean_norm", mean_norm}, {"std_over_mean_norm", ratio}, {"map_mse", map_mse}});
  }
  write_text(out / "predictions.csv", csv_text.str());
  std::ostringstream gp;
  gp << "# predicted vs true transport of held-out queries (first two coordinates)\n"
     << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "plot 'predictions.csv' using " << (2) << ":" << (3) << ":(column(" << (2 + d) << ")-column(2)):(column("
     << (3 + d) << ")-column(3)) with vectors nohead title 'x -> yhat', \\\n"
     << "     '' using " << (2 + 2 * d) << ":" << (3 + 2 * d) << " with dots title 'T(x)'\n";
  write_text(out / "predictions.gp", gp.str());

  Json eval{{"tasks", per_task},
            {"max_mmd2_u", worst_mmd},
            {"max_std_over_mean_norm", worst_ratio},
            {"training", history_summary(r.history, r.aborted, r.abort_reason)},
            {"manifest", "manifest.json"}};
  write_json(out / "eval.json", eval);
  return eval;
}

TheoryReport cmd_validate_theory(const CheckOptions& options, const std::filesystem::path& out) {
  Json resolved{{"seed", options.seed},
                {"construction_scale", options.construction_scale},
                {"biased_mmd_as_unbiased", options.biased_mmd_as_unbiased}};
  write_manifest(out, make_manifest("validate-theory", resolved, options.seed, {"report.json"}));
  TheoryReport report;
  report.checks = run_theory_checks(options);
  report.passed = std::all_of(report.checks.begin(), report.checks.end(), [](const CheckResult& c) { return c.passed; });
  Json checks = Json::array();
  for (const CheckResult& c : report.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"details", c.details}});
  write_json(out / "report.json", {{"checks", checks}, {"passed", report.passed}, {"manifest", "manifest.json"}});
  return report;
}

}  // namespace ictxot
