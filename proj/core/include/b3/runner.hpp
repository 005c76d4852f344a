#pragma once

#include <optional>
#include <string>
#include <vector>

#include "b3/model.hpp"
#include "b3/project.hpp"
#include "b3/sampler.hpp"
#include "b3/validate.hpp"

namespace b3 {

enum class RunMode { global, country, validate, w_sweep };

std::optional<RunMode> run_mode_from_label(const std::string& label);

struct RunConfig {
  RunMode mode = RunMode::global;
  std::string data_path;
  std::string config_path;  // optional TOML config
  std::string births_path;  // optional births table
  std::string hyper_path;   // hyperparameter file (country mode)
  std::string out_dir = ".";
  SamplerConfig sampler;    // country mode: callers normally start from country_defaults()
  ValidationConfig validation;
  double w = 0.5;
  std::optional<double> projection_year;  // overrides the config file
  std::vector<std::string> countries;     // empty = all
  bool strict = false;
  double rhat_threshold = 1.1;
  bool write_plots = true;
  bool aggregate_vr = true;
  double cv_threshold = 0.10;
};

/// Run one pipeline end to end, writing all artifacts under out_dir. Throws
/// ConfigError / DataError / SamplerError / DiagnosticsError; on failure any
/// partially written artifacts are removed.
void run(const RunConfig& cfg);

/// Posterior medians of every global hyperparameter plus the global change
/// distribution, in the key-value format `run` consumes for country mode.
void export_hyperparameters(const Model& model, const PosteriorSample& sample,
                            const GlobalChangeDist& dist, const std::string& path);

struct ImportedHyperparameters {
  GlobalParams globals;
  GlobalChangeDist dist;
};
ImportedHyperparameters import_hyperparameters(const std::string& path);

}  // namespace b3
