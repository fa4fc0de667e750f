#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "primfit/scene_io.hpp"

using namespace primfit;
using namespace primfit::cli;

namespace {

// String-valued flags of a config-driven command. Given flags override the
// config file, which overrides the defaults.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::string config;

  void add(CLI::App* app, const std::string& name, const std::string& help) {
    app->add_option("--" + name, values[name], help);
  }
  void add_switch(CLI::App* app, const std::string& name, const std::string& help) {
    app->add_flag("--" + name, switches[name], help);
  }
  nlohmann::json given(const CLI::App* app) const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values)
      if (app->count("--" + k) > 0) j[k] = v;
    for (const auto& [k, v] : switches)
      if (app->count("--" + k) > 0) j[k] = v;
    return j;
  }
  nlohmann::json config_json() const {
    if (config.empty()) return nlohmann::json::object();
    return nlohmann::json::parse(read_file(config));
  }
};

std::vector<double> parse_eps(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("--eps: bad value '" + item + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"primfit: primitive fitting, evaluation and gradient checks"};
  app.require_subcommand(1);
  Invocation inv;
  for (int i = 0; i < argc; ++i) inv.argv.emplace_back(argv[i]);

  auto* gen = app.add_subcommand("generate", "Generate synthetic ground-truth scenes");
  FlagSet gen_flags;
  gen_flags.add(gen, "n", "points per scene (default 8192)");
  gen_flags.add(gen, "m", "samples per bounded surface (default 512)");
  gen_flags.add(gen, "noise", "uniform noise amplitude along the normal (default 0.01)");
  gen_flags.add(gen, "k", "primitive count range a..b (default 3..12)");
  gen_flags.add(gen, "count", "number of scenes (default 1)");
  gen_flags.add(gen, "seed", "batch seed (default 0)");
  gen_flags.add(gen, "out", "output directory");
  gen_flags.add(gen, "outliers", "fraction of outlier points (default 0)");
  gen_flags.add(gen, "type-mix", "plane,sphere,cylinder,cone weights (default uniform)");
  gen_flags.add(gen, "min-area", "minimum area fraction per primitive (default 0.02)");
  gen->add_option("--config", gen_flags.config, "JSON file of option values");

  auto* fit = app.add_subcommand("fit", "Fit primitives to every scene of a directory");
  FlagSet fit_flags;
  fit_flags.add(fit, "method", "oracle | ransac | ransac+em (default ransac)");
  fit_flags.add(fit, "scenes", "scene directory");
  fit_flags.add(fit, "out", "output directory");
  fit_flags.add(fit, "inject", "ground truth to inject: any of w,n,t");
  fit_flags.add(fit, "seed", "seed (default 0)");
  fit_flags.add(fit, "eps", "RANSAC inlier distance (default 0.02)");
  fit_flags.add(fit, "normal-deg", "RANSAC normal agreement in degrees (default 20)");
  fit_flags.add(fit, "min-inliers", "RANSAC minimum inliers (default 50)");
  fit_flags.add(fit, "candidates", "RANSAC candidates per round (default 200)");
  fit_flags.add(fit, "rounds", "RANSAC restarts (default 3)");
  fit_flags.add(fit, "max-primitives", "RANSAC primitive limit (default 24)");
  fit_flags.add(fit, "em-iterations", "EM iterations (default 20)");
  fit_flags.add_switch(fit, "em-soft", "soft EM assignment");
  fit_flags.add(fit, "em-temperature", "soft assignment temperature (default 1e-4)");
  fit_flags.add(fit, "em-cap", "hard assignment distance cap, <= 0 disables (default 0.03)");
  fit_flags.add(fit, "em-kmax", "EM column limit (default 24)");
  fit_flags.add(fit, "em-assign", "distance | algebraic (default distance)");
  fit_flags.add(fit, "discard", "drop columns below this membership fraction (default 0: off)");
  fit_flags.add(fit, "normal-k", "neighbors for PCA normals (default 16)");
  fit->add_option("--config", fit_flags.config, "JSON file of option values");

  auto* eval = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  EvalSettings eval_s;
  std::string eps_list = "0.01,0.02";
  std::string match = "riou";
  eval->add_option("--pred", eval_s.pred, "prediction directory")->required();
  eval->add_option("--gt", eval_s.gt, "ground-truth scene directory")->required();
  eval->add_option("--out", eval_s.out, "report JSON path");
  eval->add_option("--eps", eps_list, "coverage thresholds (default 0.01,0.02)");
  eval->add_option("--match", match, "riou | residual (default riou)");
  eval->add_option("--label", eval_s.label, "method label for the report");

  auto* grad = app.add_subcommand("gradcheck", "Check estimator gradients against finite differences");
  GradcheckSettings grad_s;
  bool no_degenerate = false;
  grad->add_option("--estimator", grad_s.estimator, "all | plane | sphere | cylinder | cone (default all)");
  grad->add_option("--trials", grad_s.trials, "random segments per estimator (default 100)");
  grad->add_option("--seed", grad_s.seed, "seed (default 0)");
  grad->add_option("--out", grad_s.out, "report JSON path");
  grad->add_flag("--no-degenerate", no_degenerate, "skip the degenerate-input suite");

  auto* cmp = app.add_subcommand("compare", "Paired deltas between two evaluation reports");
  CompareSettings cmp_s;
  cmp->add_option("a", cmp_s.a, "first report")->required();
  cmp->add_option("b", cmp_s.b, "second report")->required();
  cmp->add_option("--out", cmp_s.out, "delta JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      GenerateSettings s;
      apply_config(s, gen_flags.config_json());
      apply_config(s, gen_flags.given(gen));
      return run_generate(s, inv);
    }
    if (*fit) {
      FitSettings s;
      apply_config(s, fit_flags.config_json());
      apply_config(s, fit_flags.given(fit));
      return run_fit(s, inv);
    }
    if (*eval) {
      eval_s.options.epsilons = parse_eps(eps_list);
      if (match == "riou") eval_s.options.match = MatchMode::kRiou;
      else if (match == "residual") eval_s.options.match = MatchMode::kResidual;
      else throw std::invalid_argument("--match: expected riou or residual");
      return run_eval(eval_s, inv);
    }
    if (*grad) {
      grad_s.degenerate = !no_degenerate;
      return run_gradcheck(grad_s, inv);
    }
    if (*cmp) return run_compare(cmp_s, inv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
