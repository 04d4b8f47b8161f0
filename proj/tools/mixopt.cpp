// mixopt: command-line front end for the mixture-weight, co-component ERM,
// solution-predictor and online-regression experiments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config.hpp"
#include "json.hpp"
#include "mixopt/mixopt.hpp"
#include "toml.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixopt;
using cli::Section;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitInternal = 1;

const std::vector<std::string> kSubcommands{"mixture", "coerm", "wstar", "online", "grouped", "phase"};

/// Built-in configurations, keyed by (subcommand, name).
const std::map<std::pair<std::string, std::string>, std::string>& presets() {
  static const std::map<std::pair<std::string, std::string>, std::string> table{
      {{"mixture", "quadratic-match"}, R"(
seeds = [1]
[mixture]
sources = 5
dim = 10
mu = 0.2
L = 1.0
radius = 10.0
target = "copy"
target_source = 2
C = 0.01
iterations = 4000
eta = 0.01
gamma = 0.05
beta = 0.5
record_every = 20
)"},
  };
  return table;
}

struct Context {
  std::string subcommand;
  std::vector<std::uint64_t> seeds;
  fs::path out;
  json effective;
  std::string hash;

  /// Fixes the config hash once every field has been read, and creates the
  /// output directory. The output location is not part of the hash.
  void seal() {
    json hashed = effective;
    hashed.erase("out");
    hash = hex64(fnv1a64(hashed.dump()));
    fs::create_directories(out);
  }

  std::string comment(std::uint64_t seed) const {
    return "config_hash=" + hash + " seed=" + std::to_string(seed);
  }
  std::string comment() const { return "config_hash=" + hash; }
  fs::path file(const std::string& artifact, std::optional<std::uint64_t> seed = std::nullopt) const {
    std::string name = subcommand;
    if (seed) name += "-seed" + std::to_string(*seed);
    return out / (name + "-" + artifact);
  }
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path.string());
  f << j.dump(2) << '\n';
  std::cout << "wrote " << path.string() << '\n';
}

void announce(const fs::path& path) { std::cout << "wrote " << path.string() << '\n'; }

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Quadratic suite parameters shared by several subcommands.
struct SuiteSpec {
  std::size_t sources;
  Eigen::Index dim;
  double mu;
  double L;
  double radius;
  std::size_t nominal_samples;
  std::optional<double> center_scale;

  static SuiteSpec read(Section& s, std::size_t sources, Eigen::Index dim, double mu, double L) {
    SuiteSpec spec;
    spec.sources = s.count("sources", sources);
    spec.dim = static_cast<Eigen::Index>(s.count("dim", static_cast<std::size_t>(dim)));
    spec.mu = s.real("mu", mu);
    spec.L = s.real("L", L);
    spec.radius = s.real("radius", kDefaultRadius);
    spec.nominal_samples = s.count("nominal_samples", 100);
    spec.center_scale = s.optional_real("center_scale");
    if (!(spec.mu > 0.0 && spec.mu <= spec.L)) s.fail("mu", "need 0 < mu <= L");
    if (!(spec.radius > 0.0)) s.fail("radius", "must be positive");
    return spec;
  }

  QuadraticSuiteOptions options() const { return {radius, nominal_samples, center_scale}; }

  std::vector<LossModel> make(std::uint64_t seed) const {
    return make_quadratic_suite(sources, dim, mu, L, seed, options());
  }
};

// --------------------------------------------------------------------------

int cmd_mixture(Section& s, Context& ctx) {
  const auto suite = SuiteSpec::read(s, 5, 10, 0.2, 1.0);
  const std::string target_kind = s.text("target", "random");
  if (target_kind != "random" && target_kind != "copy") s.fail("target", "expected \"random\" or \"copy\"");
  const std::size_t target_source = s.count("target_source", 0, 0);
  if (target_kind == "copy" && target_source >= suite.sources) s.fail("target_source", "out of range");
  const double C = s.real("C", 1.0);
  const double c = s.real("smoothing", SmoothAbs::kDefaultC);
  if (!(C > 0.0)) s.fail("C", "must be positive");
  if (!(c > 0.0)) s.fail("smoothing", "must be positive");
  MinimaxConfig base;
  base.iterations = s.count("iterations", 20000);
  base.beta = s.real("beta", 0.1);
  base.batch_size = s.count("batch_size", 1);
  base.record_every = s.count("record_every", 10);
  const auto eta = s.optional_real("eta");
  const auto gamma = s.optional_real("gamma");
  s.finish();
  ctx.seal();

  for (auto seed : ctx.seeds) {
    auto sources = suite.make(seed);
    LossModel target = target_kind == "copy"
                           ? sources[target_source]
                           : make_quadratic_suite(1, suite.dim, suite.mu, suite.L, seed, suite.options(), streams::kTarget)
                                 .front();
    MinimaxInstance instance{std::move(sources), std::move(target), suite.radius};
    const SmoothAbs g(c);
    MinimaxConfig cfg = default_config(instance, C, g);
    cfg.iterations = base.iterations;
    cfg.beta = base.beta;
    cfg.batch_size = base.batch_size;
    cfg.record_every = base.record_every;
    if (eta) cfg.eta = *eta;
    if (gamma) cfg.gamma = *gamma;
    cfg.seed = seed;
    const auto result = run(instance, cfg);

    const auto csv = ctx.file("trajectory.csv", seed);
    write_trajectory_csv(result, csv.string(), ctx.comment(seed));
    announce(csv);
    json summary{{"config_hash", ctx.hash},
                 {"seed", seed},
                 {"eta", cfg.eta},
                 {"gamma", cfg.gamma},
                 {"iterations", cfg.iterations},
                 {"final_alpha", to_json(result.final_state.alpha.values())},
                 {"final_w", to_json(result.final_state.w.values())},
                 {"final_objective", result.trajectory.empty() ? 0.0 : result.trajectory.back().objective},
                 {"mean_gap_sq_first_quartile", result.first_quartile_gap_sq},
                 {"mean_gap_sq_last_quartile", result.last_quartile_gap_sq}};
    if (target_kind == "copy") {
      summary["matching_source"] = target_source;
      summary["matching_mass"] = result.final_state.alpha[static_cast<Eigen::Index>(target_source)];
    }
    write_json(ctx.file("summary.json", seed), summary);
  }
  return kExitOk;
}

int cmd_coerm(Section& s, Context& ctx) {
  const auto suite_spec = SuiteSpec::read(s, 3, 4, 0.2, 1.0);
  const std::size_t M = s.count("M", 10);
  const std::size_t K = s.count("K", 100);
  const std::size_t pairs = s.count("audit_pairs", 10000, 0);
  s.finish();
  ctx.seal();

  for (auto seed : ctx.seeds) {
    const auto suite = suite_spec.make(seed);
    const auto alphas = sample_mixtures(M, static_cast<Eigen::Index>(suite_spec.sources), seed, streams::kTestAlphas);
    const GdConfig gd = GdConfig::for_suite(suite, K, suite_spec.radius);
    const auto sol = solve_batch(alphas, suite, gd);
    double max_err = 0.0;
    for (std::size_t i = 0; i < M; ++i)
      max_err = std::max(max_err, (sol.params[i].values() - closed_form_wstar(suite, alphas[i], suite_spec.radius).params.values()).norm());

    const auto csv = ctx.file("solutions.csv", seed);
    write_batch_csv(alphas, sol, K * suite.size(), csv.string(), ctx.comment(seed));
    announce(csv);
    json summary{{"config_hash", ctx.hash},
                 {"seed", seed},
                 {"M", M},
                 {"K", K},
                 {"step", gd.step},
                 {"grad_evals", sol.grad_evals},
                 {"max_error_vs_closed_form", max_err}};
    if (pairs > 0) {
      const auto audit = lipschitz_audit(suite, pairs, seed, suite_spec.radius);
      summary["lipschitz"] = {{"pairs", audit.pairs},
                              {"max_ratio", audit.max_ratio},
                              {"bound", audit.bound},
                              {"violations", audit.violations},
                              {"saw_boundary", audit.saw_boundary}};
    }
    write_json(ctx.file("summary.json", seed), summary);
  }
  return kExitOk;
}

int cmd_wstar(Section& s, Context& ctx) {
  const auto suite_spec = SuiteSpec::read(s, 3, 2, 0.2, 1.0);
  const std::size_t n = s.count("n", 100);
  NetTrainConfig nc;
  nc.width = static_cast<Eigen::Index>(s.count("width", 512, 2));
  nc.eta = s.real("eta", 0.5);
  nc.outer_steps = s.count("outer_steps", 500, 0);
  nc.label_steps = s.count("label_steps", 1, 0);
  nc.label_step = s.real("label_step", 0.0);
  nc.trace_every = s.count("trace_every", 50, 0);
  nc.trace_test_size = s.count("trace_test_size", 200, 0);
  const std::size_t n_test = s.count("n_test", 1000);
  nc.radius = suite_spec.radius;
  if (nc.width % 2 != 0) s.fail("width", "must be even");
  if (!(nc.eta > 0.0 && nc.eta <= 0.5)) s.fail("eta", "must lie in (0, 0.5]");
  s.finish();
  ctx.seal();

  for (auto seed : ctx.seeds) {
    const auto suite = suite_spec.make(seed);
    const auto alphas = sample_mixtures(n, static_cast<Eigen::Index>(suite_spec.sources), seed, streams::kTrainAlphas);
    nc.seed = seed;
    const auto result = train(alphas, suite, nc);
    const double risk = excess_risk(result.net, suite, n_test, seed, suite_spec.radius);

    const auto csv = ctx.file("trace.csv", seed);
    write_trace_csv(result.trace, csv.string(), ctx.comment(seed));
    announce(csv);
    const auto ckpt = ctx.file("checkpoint.json", seed);
    save_checkpoint(result.net, ckpt.string());
    announce(ckpt);
    write_json(ctx.file("summary.json", seed), {{"config_hash", ctx.hash},
                                                {"seed", seed},
                                                {"n", n},
                                                {"width", nc.width},
                                                {"outer_steps", nc.outer_steps},
                                                {"label_steps", nc.label_steps},
                                                {"test_excess_risk", risk},
                                                {"n_test", n_test},
                                                {"label_grad_evals", result.label_grad_evals},
                                                {"net_passes", result.net_passes}});
  }
  return kExitOk;
}

int cmd_online(Section& s, Context& ctx) {
  const auto suite_spec = SuiteSpec::read(s, 2, 2, 0.2, 1.0);
  const std::size_t T = s.count("T", 4096);
  OnlineConfig oc;
  oc.p = s.real("p", 1.0);
  oc.label_steps = s.count("label_steps", 100, 0);
  oc.label_step = s.real("label_step", 0.0);
  oc.cold_start_dim = s.count("cold_start_dim", 0, 0);
  oc.store_zero_labels = s.flag("store_zero_labels", false);
  const std::size_t audit_every = s.count("audit_every", 512, 0);
  oc.radius = suite_spec.radius;
  if (!(oc.p >= 0.0 && oc.p <= 1.0)) s.fail("p", "must lie in [0, 1]");
  s.finish();
  ctx.seal();

  for (auto seed : ctx.seeds) {
    const auto suite = suite_spec.make(seed);
    const auto alphas = sample_mixtures(T, static_cast<Eigen::Index>(suite_spec.sources), seed, streams::kOnlineStream);
    const auto result = run_stream(alphas, suite, oc, seed, audit_every);

    const auto csv = ctx.file("stream.csv", seed);
    write_stream_csv(result, csv.string(), ctx.comment(seed));
    announce(csv);
    const auto audit = packing_audit(result.final_state);
    write_json(ctx.file("summary.json", seed), {{"config_hash", ctx.hash},
                                                {"seed", seed},
                                                {"T", T},
                                                {"p", oc.p},
                                                {"average_loss", result.average_loss(T)},
                                                {"cumulative_regret", result.cumulative_regret},
                                                {"label_count", result.label_count},
                                                {"centers", audit.centers},
                                                {"final_radius", audit.final_radius},
                                                {"packing_constant_fit", audit.fitted_constant},
                                                {"audits_passed", result.audits.size()}});
  }
  return kExitOk;
}

TargetSpec parse_target(Section& s, const std::string& text, int groups, int sources) {
  auto number = [&](const std::string& prefix) {
    const auto v = parse_double(text.substr(prefix.size()));
    if (!v || *v < 0 || *v != std::floor(*v)) s.fail("targets", "bad target '" + text + "'");
    return static_cast<int>(*v);
  };
  if (text == "mix") {
    if (groups < 2) s.fail("targets", "'mix' needs at least two groups");
    return TargetSpec::mix();
  }
  if (text.rfind("group_", 0) == 0) {
    const int g = number("group_");
    if (g >= groups) s.fail("targets", "group index out of range in '" + text + "'");
    return TargetSpec::group(g);
  }
  if (text.rfind("copy_", 0) == 0) {
    const int j = number("copy_");
    if (j >= sources) s.fail("targets", "source index out of range in '" + text + "'");
    return TargetSpec::copy_of(j);
  }
  s.fail("targets", "expected group_<g>, mix or copy_<source>, got '" + text + "'");
}

int cmd_grouped(Section& s, Context& ctx) {
  GroupedConfig gc;
  gc.groups = static_cast<int>(s.count("groups", 3));
  gc.domains_per_group = static_cast<int>(s.count("domains_per_group", 5));
  gc.samples_per_domain = static_cast<int>(s.count("samples_per_domain", 100, 2));
  gc.target_samples = static_cast<int>(s.count("target_samples", 100, 2));
  gc.train_fraction = s.real("train_fraction", gc.train_fraction);
  gc.lambda = s.real("lambda", gc.lambda);
  gc.data.feature_dim = static_cast<Eigen::Index>(s.count("feature_dim", static_cast<std::size_t>(gc.data.feature_dim)));
  gc.data.class_separation = s.real("class_separation", gc.data.class_separation);
  gc.data.group_offset = s.real("group_offset", gc.data.group_offset);
  gc.data.domain_shift = s.real("domain_shift", gc.data.domain_shift);
  gc.data.noise = s.real("noise", gc.data.noise);
  gc.minimax_iterations = s.count("minimax_iterations", gc.minimax_iterations);
  gc.batch_size = s.count("batch_size", gc.batch_size);
  gc.beta = s.real("beta", gc.beta);
  gc.eta = s.real("eta", gc.eta);
  gc.gamma = s.real("gamma", gc.gamma);
  gc.C = s.real("C", gc.C);
  gc.smoothing = s.real("smoothing", gc.smoothing);
  gc.radius = s.real("radius", gc.radius);
  gc.erm_steps = s.count("erm_steps", gc.erm_steps);
  std::vector<std::string> default_targets;
  for (int g = 0; g < gc.groups; ++g) default_targets.push_back("group_" + std::to_string(g));
  if (gc.groups >= 2) default_targets.emplace_back("mix");
  const auto target_names = s.texts("targets", default_targets);
  if (target_names.empty()) s.fail("targets", "must not be empty");
  std::vector<TargetSpec> targets;
  for (const auto& t : target_names) targets.push_back(parse_target(s, t, gc.groups, gc.groups * gc.domains_per_group));
  s.finish();
  gc.validate();
  ctx.seal();

  std::vector<GroupedRun> runs;
  for (const auto& target : targets)
    for (auto seed : ctx.seeds) runs.push_back(run_grouped_once(gc, target, seed));

  std::vector<std::string> run_cols{"target", "seed", "acc_learned", "acc_uniform", "acc_target_only"};
  for (int g = 0; g < gc.groups; ++g) run_cols.push_back("mass_group_" + std::to_string(g));
  {
    const auto path = ctx.file("runs.csv");
    CsvWriter out(path.string(), run_cols, ctx.comment());
    for (const auto& r : runs) {
      out.cell(r.target).cell(static_cast<std::size_t>(r.seed)).cell(r.acc_learned).cell(r.acc_uniform).cell(r.acc_target_only);
      for (double m : r.group_mass) out.cell(m);
      out.end_row();
    }
    announce(path);
  }
  const auto summary = summarize(runs);
  std::vector<std::string> sum_cols{"target", "seeds", "acc_learned", "acc_uniform", "acc_target_only"};
  for (int g = 0; g < gc.groups; ++g) sum_cols.push_back("mass_group_" + std::to_string(g));
  json rows = json::array();
  double gap = 0.0;
  {
    const auto path = ctx.file("summary.csv");
    CsvWriter out(path.string(), sum_cols, ctx.comment());
    for (const auto& r : summary) {
      out.cell(r.target).cell(r.seeds).cell(r.acc_learned).cell(r.acc_uniform).cell(r.acc_target_only);
      for (double m : r.group_mass) out.cell(m);
      out.end_row();
      rows.push_back({{"target", r.target},
                      {"seeds", r.seeds},
                      {"acc_learned", r.acc_learned},
                      {"acc_uniform", r.acc_uniform},
                      {"acc_target_only", r.acc_target_only},
                      {"group_mass", r.group_mass}});
      gap += r.acc_learned - r.acc_uniform;
    }
    announce(path);
  }
  write_json(ctx.file("summary.json"), {{"config_hash", ctx.hash},
                                        {"seeds", ctx.seeds},
                                        {"targets", rows},
                                        {"mean_learned_minus_uniform", gap / static_cast<double>(summary.size())}});
  return kExitOk;
}

int cmd_phase(Section& s, Context& ctx) {
  PhaseConfig pc;
  pc.sources = s.count("sources", pc.sources);
  pc.dim = static_cast<Eigen::Index>(s.count("dim", static_cast<std::size_t>(pc.dim)));
  pc.mu = s.real("mu", pc.mu);
  pc.L = s.real("L", pc.L);
  pc.radius = s.real("radius", pc.radius);
  pc.n = s.count("n", pc.n);
  pc.outer_steps = s.count("outer_steps", pc.outer_steps);
  pc.label_steps = s.count("label_steps", pc.label_steps, 0);
  pc.width = static_cast<Eigen::Index>(s.count("width", static_cast<std::size_t>(pc.width), 2));
  pc.net_eta = s.real("eta", pc.net_eta);
  pc.solve_steps = s.count("solve_steps", pc.solve_steps);
  pc.targets = s.counts("targets", pc.targets);
  if (!(pc.mu > 0.0 && pc.mu <= pc.L)) s.fail("mu", "need 0 < mu <= L");
  if (pc.width % 2 != 0) s.fail("width", "must be even");
  if (!(pc.net_eta > 0.0 && pc.net_eta <= 0.5)) s.fail("eta", "must lie in (0, 0.5]");
  s.finish();
  ctx.seal();

  for (auto seed : ctx.seeds) {
    const auto report = run_phase(pc, seed);
    const auto path = ctx.file("costs.csv", seed);
    {
      CsvWriter out(path.string(), {"M", "solve_cost", "learn_cost", "prediction_gap"}, ctx.comment(seed));
      for (const auto& r : report.rows) out.cell(r.M).cell(r.solve_cost).cell(r.learn_cost).cell(r.prediction_gap).end_row();
    }
    announce(path);
    write_json(ctx.file("summary.json", seed), {{"config_hash", ctx.hash},
                                                {"seed", seed},
                                                {"train_cost", report.train_cost},
                                                {"label_cost", report.label_cost},
                                                {"net_passes", report.net_passes},
                                                {"per_solve_cost", report.per_solve_cost},
                                                {"crossover_M", report.crossover},
                                                {"formula_crossover_M", report.formula_crossover}});
  }
  return kExitOk;
}

int dispatch(const std::string& sub, Section& s, Context& ctx) {
  if (sub == "mixture") return cmd_mixture(s, ctx);
  if (sub == "coerm") return cmd_coerm(s, ctx);
  if (sub == "wstar") return cmd_wstar(s, ctx);
  if (sub == "online") return cmd_online(s, ctx);
  if (sub == "grouped") return cmd_grouped(s, ctx);
  return cmd_phase(s, ctx);
}

struct Flags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int execute(const std::string& sub, const Flags& flags) {
  toml::table root;
  if (!flags.preset.empty()) {
    const auto it = presets().find({sub, flags.preset});
    require(it != presets().end(), ErrorKind::Config, "unknown preset '" + flags.preset + "' for " + sub);
    root = toml::parse(it->second, "preset:" + flags.preset);
  } else {
    require(fs::exists(flags.config), ErrorKind::Config, "config file not found: " + flags.config);
    root = toml::parse_file(flags.config);
  }
  for (const auto& [k, v] : root) {
    if (!v.is_table()) continue;
    const std::string key(k.str());
    require(std::find(kSubcommands.begin(), kSubcommands.end(), key) != kSubcommands.end(), ErrorKind::Config,
            "unknown config section '" + key + "'");
  }

  Context ctx;
  ctx.subcommand = sub;
  Section top(&root, "", ctx.effective);
  ctx.seeds = top.seeds("seeds", {1});
  ctx.out = top.text("out", "out");
  if (flags.seed) {
    ctx.seeds = {*flags.seed};
    top.override_value("seeds", ctx.seeds);
  }
  if (flags.out) {
    ctx.out = *flags.out;
    top.override_value("out", *flags.out);
  }
  top.finish();

  Section section(root[sub].as_table(), sub, ctx.effective);
  return dispatch(sub, section, ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-weight estimation, co-component ERM, solution prediction and online regression experiments",
               "mixopt"};
  app.require_subcommand(1);
  Flags flags;
  for (const auto& name : kSubcommands) {
    auto* sub = app.add_subcommand(name, "Run the " + name + " experiment");
    auto* cfg = sub->add_option("--config", flags.config, "TOML configuration file")->check(CLI::ExistingFile);
    auto* pre = sub->add_option("--preset", flags.preset, "Built-in configuration name");
    cfg->excludes(pre);
    sub->add_option("--seed", flags.seed, "Run a single seed, overriding the config's seed list");
    sub->add_option("--out", flags.out, "Output directory, overriding the config");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  if (flags.config.empty() && flags.preset.empty()) {
    std::cerr << "mixopt " << sub << ": one of --config or --preset is required\n"
              << app.get_subcommands().front()->help();
    return kExitConfig;
  }
  try {
    return execute(sub, flags);
  } catch (const toml::parse_error& e) {
    std::cerr << "config error: " << e.description() << " at line " << e.source().begin.line << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << (e.kind() == ErrorKind::InvariantFailure ? "invariant failure: " : "error: ") << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::InvariantFailure: return kExitInvariant;
      case ErrorKind::Internal: return kExitInternal;
      default: return kExitConfig;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
}
