#include "flowsplat.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <string>

#include "config.hpp"
#include "dataset_io.hpp"
#include "evaluation.hpp"
#include "pipeline.hpp"
#include "synthetic.hpp"

namespace {

thread_local std::string g_last_error;

struct null_argument : std::exception {
  const char* what() const noexcept override { return "null pointer argument"; }
};

template <typename Fn>
fsp_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FSP_OK;
  } catch (const null_argument& e) {
    g_last_error = e.what();
    return FSP_ERROR_INPUT;
  } catch (const fsp::InputError& e) {
    g_last_error = e.what();
    return FSP_ERROR_INPUT;
  } catch (const fsp::IoError& e) {
    g_last_error = e.what();
    return FSP_ERROR_IO;
  } catch (const fsp::ParseError& e) {
    g_last_error = e.what();
    return FSP_ERROR_PARSE;
  } catch (const fsp::NumericError& e) {
    g_last_error = e.what();
    return FSP_ERROR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FSP_ERROR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FSP_ERROR_INTERNAL;
  }
}

const char* require(const char* arg) {
  if (arg == nullptr) throw null_argument{};
  return arg;
}

template <typename T>
T* require(T* arg) {
  if (arg == nullptr) throw null_argument{};
  return arg;
}

}  // namespace

struct fsp_config {
  fsp::PipelineConfig impl;
};

extern "C" {

const char* fsp_version(void) { return "0.1.0"; }

const char* fsp_last_error(void) { return g_last_error.c_str(); }

fsp_status fsp_config_create(fsp_config** out) {
  return guarded([&] { *require(out) = new fsp_config{}; });
}

fsp_status fsp_config_load(const char* path, fsp_config** out) {
  return guarded([&] {
    fsp::PipelineConfig loaded = fsp::load_config(require(path));
    *require(out) = new fsp_config{std::move(loaded)};
  });
}

fsp_status fsp_config_set(fsp_config* config, const char* assignment) {
  return guarded(
      [&] { fsp::apply_assignment(require(config)->impl, require(assignment)); });
}

fsp_status fsp_config_get(const fsp_config* config, const char* key, char* buf, size_t cap) {
  return guarded([&] {
    require(config);
    require(key);
    require(buf);
    if (cap == 0) throw fsp::InputError("fsp_config_get: zero-capacity buffer");
    const std::string needle = std::string(key) + "=";
    const std::string text = config->impl.canonical_text();
    size_t begin = 0;
    while (begin < text.size()) {
      size_t end = text.find('\n', begin);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(begin, end - begin);
      if (line.compare(0, needle.size(), needle) == 0) {
        const std::string value = line.substr(needle.size());
        const size_t n = std::min(cap - 1, value.size());
        std::memcpy(buf, value.data(), n);
        buf[n] = '\0';
        return;
      }
      begin = end + 1;
    }
    throw fsp::InputError("fsp_config_get: unknown key '" + std::string(key) + "'");
  });
}

void fsp_config_destroy(fsp_config* config) { delete config; }

fsp_status fsp_run(const fsp_config* config, fsp_run_stats* stats) {
  return guarded([&] {
    const fsp::RunResult result = fsp::run_and_write(require(config)->impl);
    if (stats != nullptr) {
      stats->frames_processed = result.summary.frames_processed;
      stats->keyframes = result.summary.keyframes;
      stats->final_primitives = result.summary.final_primitives;
      stats->ate_rmse_m =
          result.summary.ate ? result.summary.ate->rmse : std::nan("");
      stats->total_seconds = result.summary.timings.total;
      stats->config_hash = result.summary.config_hash;
    }
  });
}

fsp_status fsp_dump_loss_flows(const fsp_config* config, const char* csv_path) {
  return guarded([&] {
    require(csv_path);
    const fsp::PipelineConfig& cfg = require(config)->impl;
    cfg.validate();
    const fsp::SequenceInput input = fsp::load_input(cfg);
    const fsp::RunResult result = fsp::run_pipeline(input, cfg);
    fsp::write_loss_flows_csv(result.loss_flows, csv_path);
  });
}

fsp_status fsp_evaluate(const char* estimated_path, const char* groundtruth_path,
                        const char* report_path, const char* errors_csv_path,
                        double association_tolerance, double* rmse_out) {
  return guarded([&] {
    const fsp::Trajectory estimated = fsp::read_trajectory(require(estimated_path));
    const fsp::Trajectory ground_truth = fsp::read_trajectory(require(groundtruth_path));
    const fsp::AteReport report =
        fsp::align_and_ate(estimated, ground_truth, association_tolerance);
    if (report_path != nullptr || errors_csv_path != nullptr) {
      fsp::write_ate_report(report, report_path ? report_path : "",
                            errors_csv_path ? errors_csv_path : "");
    }
    if (rmse_out != nullptr) *rmse_out = report.rmse;
  });
}

fsp_status fsp_synthesize(const char* spec_path, const char* out_dir) {
  return guarded([&] {
    const fsp::SyntheticSceneSpec spec = fsp::load_scene_spec(require(spec_path));
    fsp::write_tum_dataset(spec, require(out_dir));
  });
}

}  // extern "C"
