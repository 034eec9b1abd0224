#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "ictxot/commands.hpp"

namespace fs = std::filesystem;
using namespace ictxot;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ictxot_cli_" + name);
  fs::remove_all(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ICTXOT_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const std::string& name) { return std::string(ICTXOT_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(Csv, EscapesOnlyWhenNeeded) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_escape("two\nlines"), "\"two\nlines\"");
  EXPECT_EQ(csv_escape(""), "");
}

TEST(Csv, RowsUseCrlfAndFullPrecision) {
  std::ostringstream s;
  CsvWriter w(s);
  w.row({std::string("n"), std::string("x,y")});
  w.row({std::int64_t{5000}, 0.1});
  EXPECT_EQ(s.str(), "n,\"x,y\"\r\n5000,0.10000000000000001\r\n");
}

TEST(Hash, MatchesGitBlobIds) {
  // `git hash-object` of the empty file and of "hello\n".
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Checkpoint, ParametricRoundTripIsExact) {
  Stream rng(3, StreamPurpose::Init);
  const ParametricParams p = init_params(2, 16, 1000.0, 1e4, rng);
  const ParametricParams q = parametric_from_json(Json::parse(to_json(p).dump()));
  EXPECT_EQ(pack(p), pack(q));
  EXPECT_EQ(p.lambda, q.lambda);
  EXPECT_EQ(p.c_theta, q.c_theta);
  EXPECT_EQ(p.capacity, q.capacity);
}

TEST(Checkpoint, NonparametricRoundTripIsExact) {
  Stream rng(4, StreamPurpose::Init);
  const NonparametricWeights w = NonparametricWeights::init({2, 16, 2, 8}, rng);
  const NonparametricWeights v = nonparametric_from_json(Json::parse(to_json(w).dump()));
  EXPECT_EQ(pack(w), pack(v));
  EXPECT_EQ(v.config.hidden, 16u);
  EXPECT_EQ(v.config.heads, 2u);
}

TEST(Checkpoint, RejectsWrongShapes) {
  Stream rng(4, StreamPurpose::Init);
  Json j = to_json(NonparametricWeights::init({2, 16, 2, 8}, rng));
  j["config"]["hidden"] = 32;
  EXPECT_ANY_THROW(nonparametric_from_json(j));
}

TEST(Config, DefaultsAreFilledIn) {
  const ParametricExperiment e = parse_parametric(Json::object());
  EXPECT_EQ(e.train.lambda, 1000.0);
  EXPECT_EQ(e.test_n, std::vector<std::size_t>{5000});
  EXPECT_EQ(e.n_grid, (std::vector<std::size_t>{600, 800, 1000, 1200, 1400, 1600}));
  const NonparametricExperiment n = parse_nonparametric(Json::object());
  EXPECT_EQ(n.family.kind, TaskKind::MeanShift);
  EXPECT_EQ(n.family.mean_box[1].lo, 4.0);
  EXPECT_EQ(n.family.mean_box[1].hi, 6.0);
  EXPECT_FALSE(n.train.projection);
}

TEST(Config, ResolvedConfigReparsesToItself) {
  const ParametricExperiment e = parse_parametric(load_config(config_path("scaling.json")));
  EXPECT_EQ(parse_parametric(e.to_json()).to_json(), e.to_json());
  const NonparametricExperiment n = parse_nonparametric(load_config(config_path("nonparametric.json")));
  EXPECT_EQ(parse_nonparametric(n.to_json()).to_json(), n.to_json());
}

TEST(Config, BadInputsAreConfigErrors) {
  EXPECT_THROW(parse_parametric(Json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(parse_parametric(Json{{"train", {{"base_lr", -1.0}}}}), ConfigError);
  EXPECT_THROW(parse_parametric(Json{{"train", {{"epochs", "many"}}}}), ConfigError);
  EXPECT_THROW(parse_parametric(Json{{"train", {{"epochs", -3}}}}), ConfigError);
  EXPECT_THROW(parse_parametric(Json{{"eval", {{"test_n", {500, -1}}}}}), ConfigError);
  EXPECT_THROW(parse_parametric(Json{{"task_family", {{"kind", "Banana"}}}}), ConfigError);
  EXPECT_THROW(parse_parametric(Json{{"eval", {{"test_n", Json::array()}}}}), ConfigError);
  EXPECT_THROW(parse_nonparametric(Json{{"model", {{"hidden", 30}, {"heads", 4}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Commands, DisplacementStdOfATranslationIsZero) {
  Stream rng(1, StreamPurpose::Check);
  const Matrix x = sample_standard_normal(50, 2, rng);
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    y(i, 0) += 4.0;
    y(i, 1) -= 5.0;
  }
  EXPECT_LT(displacement_std(x, y), 1e-14);
  // Displacements ±1 along one axis: std 1.
  Matrix z = x;
  for (std::size_t i = 0; i < z.rows(); ++i) z(i, 0) += (i % 2 == 0) ? 1.0 : -1.0;
  EXPECT_NEAR(displacement_std(x, z), 1.0, 1e-14);
}

TEST(Commands, SyntheticSweepFitsExactly) {
  const fs::path out = scratch("synthetic");
  const ParametricExperiment e = parse_parametric(load_config(config_path("synthetic.json")));
  const Json fit = cmd_scaling_law(e, out);
  for (const char* kind : {"excess_loss", "map_error"}) {
    EXPECT_NEAR(fit[kind]["r2"].get<double>(), 1.0, 1e-12);
    EXPECT_NEAR(fit[kind]["a"].get<double>(), 2.0, 1e-9);
    EXPECT_NEAR(fit[kind]["b"].get<double>(), 30.0, 1e-7);
    EXPECT_NEAR(fit[kind]["c"].get<double>(), 0.25, 1e-11);
  }
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_EQ(read_json(out / "fit.json")["manifest"], "manifest.json");
}

TEST(Commands, ManifestIsWrittenBeforeCompute) {
  const fs::path out = scratch("manifest");
  const fs::path bad = out.string() + "_bad_checkpoint.json";
  write_text(bad, "not json");
  ParametricExperiment e = parse_parametric(load_config(config_path("parametric_smoke.json")));
  e.checkpoint = bad;
  EXPECT_ANY_THROW(cmd_scaling_law(e, out));
  const Json m = read_json(out / "manifest.json");
  EXPECT_EQ(m["command"], "scaling-law");
  EXPECT_EQ(m["config_sha1"], git_blob_sha1(e.to_json().dump(2) + "\n"));
  EXPECT_EQ(m["config"], e.to_json());
}

TEST(Commands, MissingCheckpointIsReported) {
  ParametricExperiment e = parse_parametric(load_config(config_path("parametric_smoke.json")));
  e.checkpoint = "/nonexistent/checkpoint.json";
  EXPECT_THROW(cmd_scaling_law(e, scratch("missing")), MissingArtifactError);
}

TEST(Checks, DefaultsPassAndInjectedFaultsFail) {
  CheckOptions good;
  EXPECT_TRUE(check_construction(good).passed);
  EXPECT_TRUE(check_mmd_unbiased(good).passed);

  CheckOptions wrong_scale;
  wrong_scale.construction_scale = 1.0;
  EXPECT_FALSE(check_construction(wrong_scale).passed);

  CheckOptions biased;
  biased.biased_mmd_as_unbiased = true;
  EXPECT_FALSE(check_mmd_unbiased(biased).passed);
}

TEST(Binary, ExitCodes) {
  const fs::path out = scratch("exit");
  EXPECT_EQ(run_cli("validate-theory --out " + (out / "ok").string()), 0);
  EXPECT_EQ(run_cli("validate-theory --construction-scale 1 --out " + (out / "scale").string()), 1);
  EXPECT_EQ(run_cli("validate-theory --biased-mmd --out " + (out / "mmd").string()), 1);

  const fs::path bad = out / "bad.json";
  write_text(bad, R"({"train": {"epochs": -3}})");
  EXPECT_EQ(run_cli("train-parametric --config " + bad.string() + " --out " + (out / "bad").string()), 2);
  EXPECT_EQ(run_cli("scaling-law --config " + config_path("parametric_smoke.json") +
                    " --checkpoint /nonexistent.json --out " + (out / "miss").string()),
            3);
}

TEST(Binary, SeedFlagOverridesConfig) {
  const fs::path out = scratch("seed");
  ASSERT_EQ(run_cli("train-parametric --config " + config_path("parametric_smoke.json") + " --seed 99 --threads 1 --out " +
                    out.string()),
            0);
  const Json m = read_json(out / "manifest.json");
  EXPECT_EQ(m["seed"], 99);
  EXPECT_EQ(m["config"]["seed"], 99);
}

TEST(Binary, ThreadCountDoesNotChangeOutputs) {
  const fs::path a = scratch("threads_a"), b = scratch("threads_b");
  const std::string cfg = " --config " + config_path("parametric_smoke.json");
  ASSERT_EQ(run_cli("train-parametric" + cfg + " --threads 1 --out " + a.string()), 0);
  ASSERT_EQ(run_cli("train-parametric" + cfg + " --threads 3 --out " + b.string()), 0);
  for (const char* f : {"checkpoint.json", "history.csv", "summary.json", "manifest.json"}) {
    EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
  }
}

// More training tasks should not make held-out risk worse.
TEST(Trend, MoreTasksLowerHeldOutRisk) {
  auto held_out_risk = [](std::size_t tasks) {
    NonparametricExperiment e;
    e.seed = 21;
    e.model = {2, 16, 2, 32};
    e.tasks = tasks;
    e.pairs = 32;
    e.train.epochs = 40;
    e.train.base_lr = 1e-3;
    e.train.lambda = 1.0;
    e.train.projection = false;
    e.train.seed = e.seed;
    const KernelSpec kernel = KernelSpec::multiscale_rbf(5);
    Stream rng(e.seed, StreamPurpose::Init);
    const auto r = train_nonparametric(NonparametricWeights::init(e.model, rng),
                                       nonparametric_tasks(e, 0, e.tasks, e.pairs), kernel, e.train);
    double risk = 0.0;
    const auto test = nonparametric_tasks(e, kTestTaskIndex, 16, 64);
    for (const NpTaskData& t : test) risk += np_loss(r.weights, t.prompt, t.sources, t.targets, 1.0, kernel).total;
    return risk / static_cast<double>(test.size());
  };
  EXPECT_LE(held_out_risk(32), held_out_risk(8));
}
