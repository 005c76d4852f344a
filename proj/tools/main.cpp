#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "b3/errors.hpp"
#include "b3/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "b3 - penalized B-spline estimation of under-five mortality from "
      "multi-source country data, with bias modeling, pooled projections, and "
      "out-of-sample validation"};

  std::string mode = "global";
  std::string data, config, births, hyper;
  std::string out = "b3-out";
  std::uint64_t seed = 4711;
  int chains = 6;
  long iters = -1;
  long burn = 10000;
  int thin = 20;
  double w = 0.5;
  double cutoff = 2006.0;
  int n_sets = 100;
  int jobs = 1;
  double projection_year = 0.0;
  std::vector<std::string> countries;
  bool strict = false;
  double rhat_threshold = 1.1;
  bool no_plots = false;
  bool no_aggregate_vr = false;
  double cv_threshold = 0.10;

  app.add_option("--mode", mode, "global | country | validate | w-sweep")
      ->capture_default_str();
  app.add_option("--data", data, "observations CSV")->required();
  app.add_option("--config", config, "model configuration file");
  app.add_option("--births", births, "births table CSV (country,year,births)");
  app.add_option("--hyper", hyper, "hyperparameter file from a global run (country mode)");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "RNG seed")->capture_default_str();
  app.add_option("--chains", chains, "number of MCMC chains")->capture_default_str();
  app.add_option("--iters", iters,
                 "iterations per chain (default 50000 global, 35000 country)");
  app.add_option("--burn", burn, "burn-in iterations per chain")->capture_default_str();
  app.add_option("--thin", thin, "thinning interval")->capture_default_str();
  app.add_option("--W", w, "overall pooling weight for projections")
      ->capture_default_str();
  app.add_option("--cutoff", cutoff, "validation training cutoff year")
      ->capture_default_str();
  app.add_option("--n-sets", n_sets, "number of left-out validation sets")
      ->capture_default_str();
  app.add_option("--jobs", jobs, "parallel chains")->capture_default_str();
  app.add_option("--projection-year", projection_year,
                 "projection horizon (default: current year + 2)");
  app.add_option("--countries", countries, "restrict to these country codes")
      ->delimiter(',');
  app.add_flag("--strict", strict, "fail when max R-hat exceeds --rhat-threshold");
  app.add_option("--rhat-threshold", rhat_threshold, "R-hat limit for --strict")
      ->capture_default_str();
  app.add_flag("--no-plots", no_plots, "skip SVG trajectory plots");
  app.add_flag("--no-aggregate-vr", no_aggregate_vr,
               "keep single-year VR periods regardless of their CV");
  app.add_option("--cv-threshold", cv_threshold,
                 "coefficient-of-variation limit for VR period merging")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  b3::RunConfig rc;
  const auto parsed_mode = b3::run_mode_from_label(mode);
  if (!parsed_mode) {
    std::cerr << "error: unknown mode '" << mode << "'\n";
    return 1;
  }
  rc.mode = *parsed_mode;
  rc.data_path = data;
  rc.config_path = config;
  rc.births_path = births;
  rc.hyper_path = hyper;
  rc.out_dir = out;
  rc.sampler = rc.mode == b3::RunMode::country ? b3::SamplerConfig::country_defaults()
                                               : b3::SamplerConfig::global_defaults();
  rc.sampler.seed = seed;
  rc.sampler.n_chains = chains;
  if (iters > 0) rc.sampler.n_iter = iters;
  rc.sampler.burn_in = burn;
  rc.sampler.thin = thin;
  rc.sampler.jobs = jobs;
  rc.validation.cutoff = cutoff;
  rc.validation.n_sets = n_sets;
  rc.validation.seed = seed;
  rc.w = w;
  if (projection_year > 0.0) rc.projection_year = projection_year;
  rc.countries = countries;
  rc.strict = strict;
  rc.rhat_threshold = rhat_threshold;
  rc.write_plots = !no_plots;
  rc.aggregate_vr = !no_aggregate_vr;
  rc.cv_threshold = cv_threshold;

  try {
    b3::run(rc);
  } catch (const b3::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const b3::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const b3::DiagnosticsError& e) {
    std::cerr << "diagnostics error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "sampler error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
