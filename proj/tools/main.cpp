#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ictxot/commands.hpp"
#include "ictxot/parallel.hpp"

namespace {

using namespace ictxot;

enum Exit : int { kOk = 0, kCheckFailed = 1, kConfig = 2, kMissing = 3, kInternal = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "experiment JSON");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads (default: ICTXOT_THREADS or hardware)");
}

void apply_threads(std::size_t requested) {
  if (requested == 0) {
    if (const char* env = std::getenv("ICTXOT_THREADS")) {
      try {
        requested = std::stoul(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("ICTXOT_THREADS is not a number: ") + env);
      }
    }
  }
  if (requested > 0) set_thread_count(requested);
}

Json resolved_json(const Common& c) {
  Json j = load_config(c.config);
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"In-context optimal transport experiments"};
  app.require_subcommand(1);

  Common tp, sl, np, vt;
  auto* train_p = app.add_subcommand("train-parametric", "train the linear-transformer map");
  add_common(train_p, tp, true);

  auto* scaling = app.add_subcommand("scaling-law", "sweep prompt length and fit a/sqrt(n) + b/n + c");
  add_common(scaling, sl, true);
  std::string checkpoint;
  scaling->add_option("--checkpoint", checkpoint, "trained parameters (overrides the config)");

  auto* train_np = app.add_subcommand("train-nonparametric", "train the cross-attention map");
  add_common(train_np, np, true);

  auto* validate = app.add_subcommand("validate-theory", "numerical checks of the theory");
  add_common(validate, vt, false);
  CheckOptions check_options;
  validate->add_option("--construction-scale", check_options.construction_scale,
                       "scale of Q in the construction check");
  validate->add_flag("--biased-mmd", check_options.biased_mmd_as_unbiased,
                     "use the biased MMD estimator in the unbiasedness check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_p->parsed()) {
      apply_threads(tp.threads);
      const Json summary = cmd_train_parametric(parse_parametric(resolved_json(tp)), tp.out);
      std::cout << summary.dump(2) << "\n";
      return summary.value("aborted", false) ? kInternal : kOk;
    }
    if (scaling->parsed()) {
      apply_threads(sl.threads);
      ParametricExperiment e = parse_parametric(resolved_json(sl));
      if (!checkpoint.empty()) e.checkpoint = checkpoint;
      std::cout << cmd_scaling_law(e, sl.out).dump(2) << "\n";
      return kOk;
    }
    if (train_np->parsed()) {
      apply_threads(np.threads);
      const Json eval = cmd_train_nonparametric(parse_nonparametric(resolved_json(np)), np.out);
      std::cout << "max mmd2_u " << eval["max_mmd2_u"] << ", max std/|mu| " << eval["max_std_over_mean_norm"]
                << "\n";
      return eval["training"].value("aborted", false) ? kInternal : kOk;
    }
    apply_threads(vt.threads);
    if (!vt.config.empty()) check_options.seed = resolved_json(vt).value("seed", std::uint64_t{0});
    if (vt.seed) check_options.seed = *vt.seed;
    const TheoryReport report = cmd_validate_theory(check_options, vt.out);
    for (const CheckResult& c : report.checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "\n";
    return report.passed ? kOk : kCheckFailed;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
