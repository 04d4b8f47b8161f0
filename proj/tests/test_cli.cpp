#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixopt/domains.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = MIXOPT_CLI_PATH;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / "mixopt-cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome run_cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = "'" + kCli + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const auto p = dir / "config.toml";
  std::ofstream(p) << body;
  return p;
}

// Small but complete configurations, one per subcommand.
const std::map<std::string, std::string>& small_configs() {
  static const std::map<std::string, std::string> table{
      {"mixture", "seeds = [3]\n[mixture]\nsources = 3\ndim = 3\niterations = 500\nrecord_every = 50\n"},
      {"coerm", "seeds = [3]\n[coerm]\nM = 5\nK = 50\naudit_pairs = 200\n"},
      {"wstar", "seeds = [3]\n[wstar]\nn = 20\nwidth = 16\nouter_steps = 30\ntrace_every = 10\ntrace_test_size = 20\nn_test = 50\n"},
      {"online", "seeds = [3]\n[online]\nT = 300\np = 0.5\nlabel_steps = 20\naudit_every = 100\n"},
      {"grouped", "seeds = [3]\n[grouped]\ntargets = [\"group_0\", \"copy_1\"]\nminimax_iterations = 100\nerm_steps = 50\n"},
      {"phase", "seeds = [3]\n[phase]\nn = 10\nouter_steps = 20\nwidth = 8\ntargets = [1, 100, 1000]\n"},
  };
  return table;
}

std::vector<fs::path> outputs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TEST(Cli, HelpExitsZeroForEverySubcommand) {
  const auto dir = scratch("help");
  for (const auto& [sub, cfg] : small_configs()) {
    const auto r = run_cli(sub + " --help", dir);
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << sub;
    EXPECT_NE(r.out.find("--seed"), std::string::npos) << sub;
  }
  EXPECT_EQ(run_cli("--help", dir).code, 0);
}

TEST(Cli, MissingConfigIsUsageError) {
  const auto dir = scratch("missing");
  const auto r = run_cli("online", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--config"), std::string::npos);
  EXPECT_EQ(run_cli("", dir).code, 2);
  EXPECT_EQ(run_cli("bogus", dir).code, 2);
  EXPECT_EQ(run_cli("online --config /nonexistent/file.toml", dir).code, 2);
  EXPECT_EQ(run_cli("mixture --preset no-such-preset", dir).code, 2);
}

TEST(Cli, ConfigErrorsNameTheField) {
  const auto dir = scratch("field");
  auto expect_field_error = [&](const std::string& body, const std::string& field) {
    const auto cfg = write_config(dir, body);
    const auto r = run_cli("mixture --config '" + cfg.string() + "' --out '" + (dir / "o").string() + "'", dir);
    EXPECT_EQ(r.code, 2) << body;
    EXPECT_NE(r.err.find(field), std::string::npos) << r.err;
  };
  expect_field_error("[mixture]\nbogus = 1\n", "mixture.bogus");
  expect_field_error("[mixture]\niterations = \"many\"\n", "mixture.iterations");
  expect_field_error("[mixture]\nmu = 2.0\nL = 1.0\n", "mixture.mu");
  expect_field_error("[mixture]\nC = -1.0\n", "mixture.C");
  expect_field_error("seeds = []\n", "seeds");
  expect_field_error("extra = 1\n", "extra");
  expect_field_error("[mixtrue]\n", "mixtrue");
  expect_field_error("[mixture]\ntarget = \"copy\"\ntarget_source = 9\n", "mixture.target_source");
}

TEST(Cli, TomlSyntaxErrorIsConfigError) {
  const auto dir = scratch("syntax");
  const auto cfg = write_config(dir, "[mixture\nsources = 3\n");
  const auto r = run_cli("mixture --config '" + cfg.string() + "'", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line"), std::string::npos);
}

TEST(Cli, OutputsAreDeterministicAndCarryTheConfigHash) {
  for (const auto& [sub, body] : small_configs()) {
    const auto dir = scratch("det-" + sub);
    const auto cfg = write_config(dir, body);
    const auto a = dir / "a", b = dir / "b";
    ASSERT_EQ(run_cli(sub + " --config '" + cfg.string() + "' --out '" + a.string() + "'", dir).code, 0) << sub;
    ASSERT_EQ(run_cli(sub + " --config '" + cfg.string() + "' --out '" + b.string() + "'", dir).code, 0) << sub;
    const auto fa = outputs(a), fb = outputs(b);
    ASSERT_EQ(fa.size(), fb.size()) << sub;
    ASSERT_FALSE(fa.empty());
    std::set<std::string> hashes;
    for (std::size_t k = 0; k < fa.size(); ++k) {
      EXPECT_EQ(fa[k].filename(), fb[k].filename());
      EXPECT_EQ(fa[k].filename().string().rfind(sub + "-", 0), 0u) << fa[k];
      const std::string text = slurp(fa[k]);
      EXPECT_EQ(text, slurp(fb[k])) << fa[k];
      if (fa[k].extension() == ".csv") {
        ASSERT_EQ(text.rfind("# config_hash=", 0), 0u) << fa[k];
        hashes.insert(text.substr(14, 16));
      } else if (fa[k].filename().string().find("summary") != std::string::npos) {
        hashes.insert(json::parse(text).at("config_hash").get<std::string>());
      }
    }
    EXPECT_EQ(hashes.size(), 1u) << sub;
  }
}

TEST(Cli, SeedFlagOverridesAndChangesOutputs) {
  const auto dir = scratch("seed");
  const auto cfg = write_config(dir, small_configs().at("online"));
  ASSERT_EQ(run_cli("online --config '" + cfg.string() + "' --seed 7 --out '" + (dir / "s7").string() + "'", dir).code, 0);
  ASSERT_EQ(run_cli("online --config '" + cfg.string() + "' --out '" + (dir / "s3").string() + "'", dir).code, 0);
  ASSERT_TRUE(fs::exists(dir / "s7" / "online-seed7-stream.csv"));
  ASSERT_TRUE(fs::exists(dir / "s3" / "online-seed3-stream.csv"));
  const auto s7 = json::parse(slurp(dir / "s7" / "online-seed7-summary.json"));
  const auto s3 = json::parse(slurp(dir / "s3" / "online-seed3-summary.json"));
  EXPECT_NE(s7.at("config_hash"), s3.at("config_hash"));
  EXPECT_NE(s7.at("cumulative_regret"), s3.at("cumulative_regret"));
}

TEST(Cli, JsonSummariesFollowTheSchema) {
  const std::map<std::string, std::vector<std::string>> schema{
      {"mixture", {"config_hash", "seed", "eta", "gamma", "iterations", "final_alpha", "final_w", "final_objective",
                   "mean_gap_sq_first_quartile", "mean_gap_sq_last_quartile"}},
      {"coerm", {"config_hash", "seed", "M", "K", "step", "grad_evals", "max_error_vs_closed_form", "lipschitz"}},
      {"wstar", {"config_hash", "seed", "n", "width", "outer_steps", "label_steps", "test_excess_risk", "n_test",
                 "label_grad_evals", "net_passes"}},
      {"online", {"config_hash", "seed", "T", "p", "average_loss", "cumulative_regret", "label_count", "centers",
                  "final_radius", "packing_constant_fit", "audits_passed"}},
      {"grouped", {"config_hash", "seeds", "targets", "mean_learned_minus_uniform"}},
      {"phase", {"config_hash", "seed", "train_cost", "label_cost", "net_passes", "per_solve_cost", "crossover_M",
                 "formula_crossover_M"}},
  };
  for (const auto& [sub, keys] : schema) {
    const auto dir = scratch("schema-" + sub);
    const auto cfg = write_config(dir, small_configs().at(sub));
    ASSERT_EQ(run_cli(sub + " --config '" + cfg.string() + "' --out '" + (dir / "o").string() + "'", dir).code, 0);
    const auto path = dir / "o" / (sub == "grouped" ? "grouped-summary.json" : sub + "-seed3-summary.json");
    const auto j = json::parse(slurp(path));
    for (const auto& k : keys) EXPECT_TRUE(j.contains(k)) << sub << " missing " << k;
    EXPECT_EQ(j.size(), keys.size()) << sub;
  }
  const auto dir = scratch("schema-detail");
  const auto cfg = write_config(dir, small_configs().at("coerm"));
  ASSERT_EQ(run_cli("coerm --config '" + cfg.string() + "' --out '" + (dir / "o").string() + "'", dir).code, 0);
  const auto j = json::parse(slurp(dir / "o" / "coerm-seed3-summary.json"));
  EXPECT_EQ(j.at("grad_evals").get<int>(), 5 * 50 * 3);
  EXPECT_EQ(j.at("lipschitz").at("violations").get<int>(), 0);
  for (const auto& k : {"pairs", "max_ratio", "bound", "violations", "saw_boundary"})
    EXPECT_TRUE(j.at("lipschitz").contains(k)) << k;
}

TEST(Cli, QuadraticMatchPresetFindsTheMatchingSource) {
  const auto dir = scratch("preset");
  const auto r = run_cli("mixture --preset quadratic-match --out '" + (dir / "o").string() + "'", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(slurp(dir / "o" / "mixture-seed1-summary.json"));
  EXPECT_EQ(j.at("matching_source").get<int>(), 2);
  EXPECT_GE(j.at("matching_mass").get<double>(), 0.9);
}

TEST(Cli, CsvOutputsLoadWithTheLibraryLoader) {
  const std::map<std::string, std::pair<std::string, mixopt::CsvSchema>> csvs{
      {"mixture", {"mixture-seed3-trajectory.csv", {"t", {}}}},
      {"coerm", {"coerm-seed3-solutions.csv", {"grad_evals", {}}}},
      {"wstar", {"wstar-seed3-trace.csv", {"t", {}}}},
      {"online", {"online-seed3-stream.csv", {"loss", {}}}},
      {"grouped", {"grouped-runs.csv", {"seed", {"acc_learned", "acc_uniform", "acc_target_only"}}}},
      {"phase", {"phase-seed3-costs.csv", {"M", {}}}},
  };
  for (const auto& [sub, spec] : csvs) {
    const auto dir = scratch("csv-" + sub);
    const auto cfg = write_config(dir, small_configs().at(sub));
    ASSERT_EQ(run_cli(sub + " --config '" + cfg.string() + "' --out '" + (dir / "o").string() + "'", dir).code, 0);
    const auto ds = mixopt::load_csv((dir / "o" / spec.first).string(), spec.second);
    EXPECT_GT(ds.sample_count(), 0u) << sub;
  }
}

TEST(Cli, SampleConfigsParse) {
  // Every shipped config is accepted; only the cheap ones are run to completion.
  for (const auto& sub : {"mixture", "coerm", "wstar", "online", "grouped", "phase"}) {
    const fs::path cfg = fs::path(MIXOPT_CONFIG_DIR) / (std::string(sub) + ".toml");
    ASSERT_TRUE(fs::exists(cfg)) << cfg;
  }
  const auto dir = scratch("shipped");
  for (const auto& sub : {"coerm", "phase", "online"}) {
    const fs::path cfg = fs::path(MIXOPT_CONFIG_DIR) / (std::string(sub) + ".toml");
    const auto r = run_cli(std::string(sub) + " --config '" + cfg.string() + "' --out '" + (dir / sub).string() + "'", dir);
    EXPECT_EQ(r.code, 0) << sub << ": " << r.err;
  }
}
