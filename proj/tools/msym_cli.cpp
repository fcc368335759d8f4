// Command-line front end: `msym verify <config>` and `msym run <config>`.
#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "msym/errors.hpp"
#include "msym/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multisymplectic continuum mechanics: verification suites and variational time integration"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  long seed = -1;
  int refine = 1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Scenario configuration (JSON)")->required();
    sub->add_option("--output-dir", output_dir, "Directory for reports and artifacts");
    sub->add_option("--seed", seed, "Seed for randomised check sampling")->check(CLI::NonNegativeNumber);
    sub->add_option("--refine", refine, "Uniform refinement multiplier")->check(CLI::PositiveNumber);
  };
  CLI::App* verify = app.add_subcommand("verify", "Run the invariant and oracle checks for a scenario");
  CLI::App* run = app.add_subcommand("run", "Integrate a scenario and write snapshots and diagnostics");
  common(verify);
  common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  msym::ScenarioConfig cfg;
  try {
    cfg = msym::refined(msym::load_config(config_path), refine);
    if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
  } catch (const msym::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }

  try {
    if (*verify) {
      const msym::VerifyReport rep = msym::run_verify(cfg);
      msym::write_verify_report(rep, cfg.output_dir);
      for (const auto& c : rep.checks)
        std::printf("%-32s %s  value=%.3e  tol=%.1e\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.value,
                    c.tolerance);
      return rep.all_pass() ? kExitOk : kExitFail;
    }
    const msym::RunOutcome out = msym::run_scenario(cfg, cfg.output_dir);
    if (out.exit_code != 0) {
      std::fprintf(stderr, "run failed at step %ld: %s\n", out.failed_step.value_or(-1), out.message.c_str());
      return kExitFail;
    }
    std::printf("%ld steps, max constraint %.3e, output in %s\n", out.steps_done, out.max_constraint,
                cfg.output_dir.c_str());
    return kExitOk;
  } catch (const msym::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const msym::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFail;
  }
}
