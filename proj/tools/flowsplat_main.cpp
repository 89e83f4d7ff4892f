#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowsplat.h"

namespace {

int exit_code_for(fsp_status status) {
  switch (status) {
    case FSP_OK:
      return 0;
    case FSP_ERROR_IO:
    case FSP_ERROR_PARSE:
      return 2;
    default:
      return 1;
  }
}

int fail(fsp_status status) {
  std::fprintf(stderr, "error: %s\n", fsp_last_error());
  return exit_code_for(status);
}

struct ConfigHandle {
  fsp_config* ptr = nullptr;
  ~ConfigHandle() { fsp_config_destroy(ptr); }
};

// Builds the configuration from --config, convenience flags and --set
// overrides (applied in that order). Returns FSP_OK on success.
fsp_status build_config(ConfigHandle& config, const std::string& config_path,
                        const std::string& preset, const std::string& dataset,
                        const std::string& spec, const std::string& output,
                        const std::vector<std::string>& overrides) {
  fsp_status status = config_path.empty() ? fsp_config_create(&config.ptr)
                                          : fsp_config_load(config_path.c_str(), &config.ptr);
  if (status != FSP_OK) return status;
  std::vector<std::string> assignments;
  if (!preset.empty()) assignments.push_back("preset=" + preset);
  if (!dataset.empty()) assignments.push_back("dataset_root=" + dataset);
  if (!spec.empty()) assignments.push_back("synthetic_spec=" + spec);
  if (!output.empty()) assignments.push_back("output_dir=" + output);
  assignments.insert(assignments.end(), overrides.begin(), overrides.end());
  for (const std::string& assignment : assignments) {
    status = fsp_config_set(config.ptr, assignment.c_str());
    if (status != FSP_OK) return status;
  }
  return FSP_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowsplat: RGB-D SLAM with Gaussian splatting and per-object "
               "loss-flow filtering of moving objects"};
  app.require_subcommand(1);

  std::string config_path, preset, dataset, spec, output;
  std::vector<std::string> overrides;
  auto add_config_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_option("--preset", preset, "tum | bonn | synthetic");
    cmd->add_option("--dataset", dataset, "TUM-layout sequence directory");
    cmd->add_option("--synthetic-spec", spec, "synthetic scene JSON to run on");
    cmd->add_option("--output", output, "output directory");
    cmd->add_option("--set", overrides, "extra key=value override (repeatable)");
  };

  CLI::App* run = app.add_subcommand("run", "Track, filter and map a sequence");
  add_config_options(run);

  std::string flows_path = "loss_flows.csv";
  CLI::App* flows = app.add_subcommand(
      "dump-flows", "Run the pipeline and dump per-object rendering-loss flows");
  add_config_options(flows);
  flows->add_option("--out", flows_path, "CSV output path");

  std::string estimated, groundtruth, report_path, errors_path;
  double tolerance = 0.02;
  CLI::App* eval = app.add_subcommand("eval", "Trajectory error against ground truth");
  eval->add_option("estimated", estimated, "estimated trajectory (TUM format)")->required();
  eval->add_option("groundtruth", groundtruth, "ground-truth trajectory (TUM format)")
      ->required();
  eval->add_option("--report", report_path, "summary output file");
  eval->add_option("--errors", errors_path, "per-frame error CSV");
  eval->add_option("--tolerance", tolerance, "timestamp association tolerance, seconds");

  std::string synth_spec, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Generate a TUM-layout synthetic dataset");
  synth->add_option("spec", synth_spec, "scene description JSON")->required();
  synth->add_option("out_dir", synth_out, "dataset output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed() || flows->parsed()) {
    ConfigHandle config;
    fsp_status status =
        build_config(config, config_path, preset, dataset, spec, output, overrides);
    if (status != FSP_OK) return fail(status);
    if (flows->parsed()) {
      status = fsp_dump_loss_flows(config.ptr, flows_path.c_str());
      if (status != FSP_OK) return fail(status);
      std::printf("loss flows written to %s\n", flows_path.c_str());
      return 0;
    }
    fsp_run_stats stats{};
    status = fsp_run(config.ptr, &stats);
    if (status != FSP_OK) return fail(status);
    char out_dir[512] = {0};
    fsp_config_get(config.ptr, "output_dir", out_dir, sizeof(out_dir));
    std::printf("processed %d frames, %d keyframes, %llu primitives\n",
                stats.frames_processed, stats.keyframes,
                static_cast<unsigned long long>(stats.final_primitives));
    if (!std::isnan(stats.ate_rmse_m)) std::printf("ate_rmse_m %.6f\n", stats.ate_rmse_m);
    std::printf("artifacts in %s\n", out_dir);
    return 0;
  }

  if (eval->parsed()) {
    double rmse = 0.0;
    const fsp_status status = fsp_evaluate(
        estimated.c_str(), groundtruth.c_str(), report_path.empty() ? nullptr : report_path.c_str(),
        errors_path.empty() ? nullptr : errors_path.c_str(), tolerance, &rmse);
    if (status != FSP_OK) return fail(status);
    std::printf("ate_rmse_m %.9f\n", rmse);
    return 0;
  }

  if (synth->parsed()) {
    const fsp_status status = fsp_synthesize(synth_spec.c_str(), synth_out.c_str());
    if (status != FSP_OK) return fail(status);
    std::printf("dataset written to %s\n", synth_out.c_str());
    return 0;
  }

  return 2;
}
