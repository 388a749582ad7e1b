// Batch front end: simulate <config>, morphology <config>, check <config>.
// Exit status is 0 only when every sweep point converged.

#include "opvfem/errors.hpp"
#include "opvfem/run.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>

int main(int argc, char** argv) {
  CLI::App app{"Finite-element device simulator for organic solar cells"};
  app.require_subcommand(1);

  std::string sim_config, morph_config, check_config, morph_out;

  auto* sim = app.add_subcommand("simulate", "Run a voltage sweep from a config file");
  sim->add_option("config", sim_config, "run configuration")->required();

  auto* morph = app.add_subcommand("morphology", "Generate a PHF morphology file");
  morph->add_option("config", morph_config, "morphology configuration")->required();
  morph->add_option("-o,--out", morph_out, "output PHF path (overrides [morphology] out)");

  auto* check = app.add_subcommand("check", "Validate a config file and exit");
  check->add_option("config", check_config, "configuration to validate")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const opvfem::RunConfig cfg = opvfem::parse_config(sim_config);
      const opvfem::RunSummary summary = opvfem::run_simulate(cfg);
      std::printf("%zu sweep points, wall clock %.2f s\n", summary.curve.points.size(),
                  summary.wall_clock_s);
      for (const auto& f : summary.outputs) std::printf("wrote %s\n", f.c_str());
      if (!summary.all_converged) {
        std::fprintf(stderr, "error: sweep did not converge at every voltage point\n");
        return 2;
      }
      return 0;
    }
    if (morph->parsed()) {
      const opvfem::RunConfig cfg = opvfem::parse_config(morph_config);
      const std::string path = opvfem::run_generate_morphology(cfg, morph_out);
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }
    if (check->parsed()) {
      opvfem::parse_config(check_config);
      std::printf("config ok\n");
      return 0;
    }
  } catch (const opvfem::config_error& e) {
    for (const auto& p : e.problems) std::fprintf(stderr, "error: %s\n", p.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
