#include "b3/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "b3/errors.hpp"
#include "b3/ingest.hpp"
#include "b3/plot.hpp"

namespace b3 {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<RunMode> run_mode_from_label(const std::string& label) {
  if (label == "global") return RunMode::global;
  if (label == "country") return RunMode::country;
  if (label == "validate") return RunMode::validate;
  if (label == "w-sweep") return RunMode::w_sweep;
  return std::nullopt;
}

namespace {

/// Removes everything written during a failed run.
class ArtifactTracker {
 public:
  ~ArtifactTracker() {
    if (keep_) return;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) {
      std::error_code ec;
      fs::remove(*it, ec);
    }
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) {
      std::error_code ec;
      if (fs::is_empty(*it, ec)) fs::remove(*it, ec);
    }
  }
  fs::path file(const fs::path& p) {
    files_.push_back(p);
    return p;
  }
  void dir(const fs::path& p) {
    if (!fs::exists(p)) {
      fs::create_directories(p);
      dirs_.push_back(p);
    }
  }
  void keep() { keep_ = true; }

 private:
  std::vector<fs::path> files_, dirs_;
  bool keep_ = false;
};

std::string fmt_fixed(double v) {
  if (!std::isfinite(v)) throw SamplerError("non-finite value in an output table");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int current_utc_year() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return tm.tm_year + 1900;
}

struct LoadedInputs {
  std::vector<Observation> observations;
  ModelConfig model_config;
  BirthsTable births;
  bool have_births = false;
};

std::vector<Observation> apply_vr_aggregation(std::vector<Observation> obs,
                                              double cv_threshold) {
  std::map<std::string, std::vector<std::size_t>> vr_series;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Observation& o = obs[i];
    if (o.source_type == SourceType::vr && o.vr_status == VrStatus::complete)
      vr_series[o.series_id].push_back(i);
  }
  std::set<std::size_t> drop;
  std::vector<Observation> merged_tail;
  for (const auto& [id, rows] : vr_series) {
    bool complete_counts = true;
    for (std::size_t i : rows)
      complete_counts = complete_counts && obs[i].births && obs[i].deaths;
    if (!complete_counts || rows.size() < 2) continue;
    bool needs_merge = false;
    for (std::size_t i : rows)
      needs_merge = needs_merge || 1.0 / std::sqrt(*obs[i].deaths) > cv_threshold;
    if (!needs_merge) continue;
    std::vector<Observation> single;
    for (std::size_t i : rows) {
      single.push_back(obs[i]);
      drop.insert(i);
    }
    bool tail = false;
    auto merged = aggregate_vr_periods(std::move(single), cv_threshold, &tail);
    if (tail)
      std::cerr << "warning: series " << id
                << ": residual VR period still above the CV threshold\n";
    merged_tail.insert(merged_tail.end(), merged.begin(), merged.end());
  }
  if (drop.empty()) return obs;
  std::vector<Observation> out;
  out.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (!drop.count(i)) out.push_back(std::move(obs[i]));
  out.insert(out.end(), merged_tail.begin(), merged_tail.end());
  return out;
}

LoadedInputs load_inputs(const RunConfig& cfg) {
  LoadedInputs in;
  if (cfg.data_path.empty()) throw ConfigError("--data is required");

  if (!cfg.config_path.empty()) {
    const Config file = Config::parse_file(cfg.config_path);
    in.model_config = parse_model_config(file);
  }
  if (cfg.projection_year) in.model_config.projection_year = *cfg.projection_year;
  if (!(in.model_config.projection_year > 0.0))
    in.model_config.projection_year = current_utc_year() + 2;

  ParseResult parsed = parse_observations(cfg.data_path);
  for (const auto& rej : parsed.rejections)
    std::cerr << "warning: " << cfg.data_path << ":" << rej.line << ": " << rej.reason
              << " (row skipped)\n";
  if (parsed.observations.empty()) throw DataError("no usable observations in " + cfg.data_path);

  if (!cfg.countries.empty()) {
    const std::set<std::string> want(cfg.countries.begin(), cfg.countries.end());
    std::vector<Observation> filtered;
    for (auto& o : parsed.observations)
      if (want.count(o.country)) filtered.push_back(std::move(o));
    std::set<std::string> present;
    for (const auto& o : filtered) present.insert(o.country);
    for (const auto& c : want)
      if (!present.count(c)) throw DataError("no observations for requested country " + c);
    parsed.observations = std::move(filtered);
  }

  if (cfg.aggregate_vr)
    parsed.observations =
        apply_vr_aggregation(std::move(parsed.observations), cfg.cv_threshold);

  if (!cfg.births_path.empty()) {
    in.births = BirthsTable::parse_file(cfg.births_path);
    in.have_births = true;
  }
  in.observations = std::move(parsed.observations);
  return in;
}

struct EstimateRow {
  std::string country;
  double year, median, lower, upper;
};

void write_estimates_csv(const fs::path& path, std::vector<EstimateRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const EstimateRow& a, const EstimateRow& b) {
    return a.country != b.country ? a.country < b.country : a.year < b.year;
  });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "country,year,median,lower90,upper90\n";
  for (const auto& r : rows)
    out << r.country << "," << fmt_fixed(r.year) << "," << fmt_fixed(r.median) << ","
        << fmt_fixed(r.lower) << "," << fmt_fixed(r.upper) << "\n";
}

void write_traces(ArtifactTracker& artifacts, const fs::path& dir,
                  const std::string& prefix, const PosteriorSample& sample) {
  for (int c = 0; c < sample.n_chains(); ++c) {
    const fs::path path =
        artifacts.file(dir / (prefix + "chain_" + std::to_string(c) + ".csv"));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "iteration";
    for (const auto& e : sample.layout().entries()) out << "," << e.name;
    out << "\n";
    const Eigen::MatrixXd& ch = sample.chain(c);
    for (Eigen::Index i = 0; i < ch.rows(); ++i) {
      out << i;
      for (Eigen::Index j = 0; j < ch.cols(); ++j) out << "," << fmt_short(ch(i, j));
      out << "\n";
    }
  }
}

json diagnostics_json(const Diagnostics& diag) {
  json params = json::array();
  for (const auto& p : diag.params) {
    params.push_back({{"name", p.name},
                      {"rhat", p.rhat_degenerate ? json("degenerate") : json(p.rhat)},
                      {"ess", p.ess},
                      {"mean", p.mean},
                      {"q05", p.quantiles.lower},
                      {"median", p.quantiles.median},
                      {"q95", p.quantiles.upper}});
  }
  json blocks = json::array();
  for (const auto& b : diag.blocks)
    blocks.push_back({{"block", b.label}, {"accept_rate", b.accept_rate}});
  return json{{"max_rhat", diag.max_rhat},
              {"worst_param", diag.worst_param},
              {"parameters", params},
              {"acceptance", blocks}};
}

void check_strict(const RunConfig& cfg, const Diagnostics& diag) {
  if (!cfg.strict) return;
  if (diag.max_rhat > cfg.rhat_threshold)
    throw DiagnosticsError("R-hat " + std::to_string(diag.max_rhat) + " for " +
                           diag.worst_param + " exceeds " +
                           std::to_string(cfg.rhat_threshold));
}

std::vector<double> year_grid(const Model& model, int country, double step) {
  const auto& cm = model.countries()[static_cast<std::size_t>(country)];
  const double lo = std::ceil(cm.coeffs.basis().obs_start - 1e-9);
  const double hi = std::floor(model.config().projection_year + 1e-9);
  std::vector<double> years;
  for (double y = lo; y <= hi + 1e-9; y += step) years.push_back(y);
  return years;
}

GlobalChangeDist pooled_dist(const Model& model, const PosteriorSample& sample) {
  std::vector<double> medians;
  for (std::size_t c = 0; c < model.countries().size(); ++c) {
    const Eigen::MatrixXd alpha = alpha_eff_draws(model, static_cast<int>(c), sample);
    const auto diffs = median_first_differences(alpha, model.countries()[c].coeffs);
    medians.insert(medians.end(), diffs.begin(), diffs.end());
  }
  try {
    return build_global_dist(medians);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("cannot build the global change distribution: ") + e.what());
  }
}

void write_country_plot(ArtifactTracker& artifacts, const fs::path& dir, const Model& model,
                        int country, const TrajectorySummary& est,
                        const BirthsTable* births) {
  const auto& cm = model.countries()[static_cast<std::size_t>(country)];
  PlotData plot;
  plot.title = cm.code;
  plot.estimate = est;
  std::map<std::string, PlotSeries> by_series;
  for (const Observation& o : model.observations()) {
    if (o.country != cm.code) continue;
    PlotSeries& s = by_series[o.series_id];
    s.label = o.series_id;
    s.years.push_back(o.ref_year);
    s.rates.push_back(o.u5mr);
    double se = 0.0;
    try {
      se = resolve_sampling_sd(o, model.config(), births);
    } catch (const DataError&) {
      se = 0.0;
    }
    s.log_se.push_back(se);
  }
  for (auto& [id, s] : by_series) plot.series.push_back(std::move(s));
  const fs::path path = artifacts.file(dir / (cm.code + ".svg"));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << render_trajectory_svg(plot);
}

void run_estimation(const RunConfig& cfg, const LoadedInputs& in,
                    ArtifactTracker& artifacts) {
  const fs::path out_dir(cfg.out_dir);
  const BirthsTable* births = in.have_births ? &in.births : nullptr;

  ImportedHyperparameters imported;
  const bool country_mode = cfg.mode == RunMode::country;
  if (country_mode) {
    if (cfg.hyper_path.empty())
      throw ConfigError("country mode requires --hyper <hyperparameter file>");
    imported = import_hyperparameters(cfg.hyper_path);
  }

  std::vector<EstimateRow> estimates;
  json diagnostics;
  fs::path plots_dir = out_dir / "plots";
  if (cfg.write_plots) artifacts.dir(plots_dir);

  if (!country_mode) {
    Model model = Model::build(in.observations, in.model_config, births);
    for (const auto& w : model.warnings()) std::cerr << "warning: " << w << "\n";
    const FitResult fit = run_global(model, cfg.sampler);
    check_strict(cfg, fit.diagnostics);
    const GlobalChangeDist dist = pooled_dist(model, fit.sample);

    for (std::size_t c = 0; c < model.countries().size(); ++c) {
      const int ci = static_cast<int>(c);
      const auto& cm = model.countries()[c];
      Rng rng(cfg.sampler.seed, splitmix64(0xB00C + c));
      const Eigen::MatrixXd alpha = alpha_eff_draws(model, ci, fit.sample);
      const Eigen::VectorXd s2 = sigma2_draws(model, ci, fit.sample);
      const Eigen::MatrixXd extended =
          project_coefficients(alpha, s2, cm.coeffs.p_eff(), dist, cfg.w, rng);
      const auto grid = year_grid(model, ci, 1.0);
      const TrajectorySummary summary = trajectory(extended, cm.coeffs, grid);
      for (std::size_t i = 0; i < grid.size(); ++i)
        estimates.push_back({cm.code, grid[i], summary.median[i], summary.lower90[i],
                             summary.upper90[i]});
      if (cfg.write_plots) {
        const TrajectorySummary fine =
            trajectory(extended, cm.coeffs, year_grid(model, ci, 0.5));
        write_country_plot(artifacts, plots_dir, model, ci, fine, births);
      }
    }
    write_traces(artifacts, out_dir, "trace_", fit.sample);
    diagnostics = diagnostics_json(fit.diagnostics);
    export_hyperparameters(model, fit.sample, dist,
                           artifacts.file(out_dir / "hyperparameters.toml").string());
  } else {
    std::set<std::string> codes;
    for (const auto& o : in.observations) codes.insert(o.country);
    diagnostics = json::object();
    for (const std::string& code : codes) {
      std::vector<Observation> subset;
      for (const auto& o : in.observations)
        if (o.country == code) subset.push_back(o);
      Model model = Model::build(std::move(subset), in.model_config, births);
      for (const auto& w : model.warnings()) std::cerr << "warning: " << w << "\n";
      const FitResult fit = run_country(model, imported.globals, cfg.sampler);
      check_strict(cfg, fit.diagnostics);

      Rng rng(cfg.sampler.seed, splitmix64(0xC0DE + std::hash<std::string>{}(code)));
      const auto& cm = model.countries()[0];
      const Eigen::MatrixXd alpha = alpha_eff_draws(model, 0, fit.sample);
      const Eigen::VectorXd s2 = sigma2_draws(model, 0, fit.sample);
      const Eigen::MatrixXd extended =
          project_coefficients(alpha, s2, cm.coeffs.p_eff(), imported.dist, cfg.w, rng);
      const auto grid = year_grid(model, 0, 1.0);
      const TrajectorySummary summary = trajectory(extended, cm.coeffs, grid);
      for (std::size_t i = 0; i < grid.size(); ++i)
        estimates.push_back({cm.code, grid[i], summary.median[i], summary.lower90[i],
                             summary.upper90[i]});
      if (cfg.write_plots) {
        const TrajectorySummary fine =
            trajectory(extended, cm.coeffs, year_grid(model, 0, 0.5));
        write_country_plot(artifacts, plots_dir, model, 0, fine, births);
      }
      write_traces(artifacts, out_dir, "trace_" + code + "_", fit.sample);
      diagnostics[code] = diagnostics_json(fit.diagnostics);
    }
  }

  write_estimates_csv(artifacts.file(out_dir / "estimates.csv"), std::move(estimates));
  std::ofstream diag_out(artifacts.file(out_dir / "diagnostics.json"));
  diag_out << diagnostics.dump(2) << "\n";
}

void write_validation_outputs(const RunConfig& cfg, const ValidationReport& report,
                              ArtifactTracker& artifacts) {
  const fs::path out_dir(cfg.out_dir);
  {
    std::ofstream out(artifacts.file(out_dir / "validation_leftout.csv"), std::ios::binary);
    out << "W,split,n_countries,n_sets,variant,me,me_sd,mae,mae_sd,mre,mre_sd,mare,"
           "mare_sd,score,score_sd,pct_below,pct_below_sd,pct_above,pct_above_sd\n";
    for (const auto& row : report.leftout) {
      for (int variant = 0; variant < 2; ++variant) {
        out << fmt_fixed(row.w) << "," << row.split << "," << row.n_countries << ","
            << row.n_sets << "," << (variant == 0 ? "median" : "mean");
        for (const MeasureStat* m :
             {&row.me[variant], &row.mae[variant], &row.mre[variant], &row.mare[variant],
              &row.score[variant]})
          out << "," << fmt_fixed(m->median_of_sets) << "," << fmt_fixed(m->sd_of_sets);
        out << "," << fmt_fixed(row.pct_below.median_of_sets) << ","
            << fmt_fixed(row.pct_below.sd_of_sets) << ","
            << fmt_fixed(row.pct_above.median_of_sets) << ","
            << fmt_fixed(row.pct_above.sd_of_sets) << "\n";
      }
    }
  }
  {
    std::ofstream out(artifacts.file(out_dir / "validation_estimates.csv"),
                      std::ios::binary);
    out << "W,target,n_countries,median_err,median_abs_err,median_score,mean_err,"
           "mean_abs_err,mean_score,pct_below,pct_above\n";
    for (const auto& row : report.estimates) {
      out << fmt_fixed(row.w) << "," << row.target << "," << row.n_countries << ","
          << fmt_fixed(row.median_err) << "," << fmt_fixed(row.median_abs_err) << ","
          << fmt_fixed(row.median_score) << "," << fmt_fixed(row.mean_err) << ","
          << fmt_fixed(row.mean_abs_err) << "," << fmt_fixed(row.mean_score) << ","
          << fmt_fixed(row.pct_below) << "," << fmt_fixed(row.pct_above) << "\n";
    }
  }
  {
    std::ofstream out(artifacts.file(out_dir / "validation_summary.txt"));
    out << "out-of-sample validation summary\n";
    out << "cutoff year: " << cfg.validation.cutoff << "\n";
    out << "sets: " << cfg.validation.n_sets << "\n";
    for (const auto& note : report.notes) out << "note: " << note << "\n";
    for (const auto& row : report.leftout) {
      out << "W=" << row.w << " split=" << row.split << " countries=" << row.n_countries
          << " | median ME " << row.me[0].median_of_sets << " (sd "
          << row.me[0].sd_of_sets << "), MARE " << row.mare[0].median_of_sets
          << ", score " << row.score[0].median_of_sets << ", %below "
          << row.pct_below.median_of_sets << ", %above " << row.pct_above.median_of_sets
          << "\n";
    }
    for (const auto& row : report.estimates) {
      out << "W=" << row.w << " target=" << row.target << " countries=" << row.n_countries
          << " | median err " << row.median_err << ", median |err| " << row.median_abs_err
          << ", score " << row.median_score << ", %below " << row.pct_below << ", %above "
          << row.pct_above << "\n";
    }
  }
}

}  // namespace

void export_hyperparameters(const Model& model, const PosteriorSample& sample,
                            const GlobalChangeDist& dist, const std::string& path) {
  const ParamLayout& layout = model.layout();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "# posterior medians of the global parameters\n";
  out << "[hyperparameters]\n";
  out << "chi = " << fmt_short(sample.median_of(layout.chi())) << "\n";
  out << "phi_sigma = " << fmt_short(sample.median_of(layout.phi_sigma())) << "\n";
  if (layout.nu() >= 0) out << "nu = " << fmt_short(sample.median_of(layout.nu())) << "\n";
  auto section = [&](const char* name, auto index_of) {
    out << "[" << name << "]\n";
    for (int g = 0; g < kSourceGroupCount; ++g) {
      const int idx = index_of(g);
      if (idx >= 0)
        out << to_label(static_cast<SourceGroup>(g)) << " = "
            << fmt_short(sample.median_of(idx)) << "\n";
    }
  };
  section("mu0", [&](int g) { return layout.mu0(g); });
  section("phi0", [&](int g) { return layout.phi0(g); });
  section("mu1", [&](int g) { return layout.mu1(g); });
  section("phi1", [&](int g) { return layout.phi1(g); });
  out << "[omega]\n";
  for (int st = 0; st < kSourceTypeCount; ++st)
    if (layout.omega(st) >= 0)
      out << to_label(static_cast<SourceType>(st)) << " = "
          << fmt_short(sample.median_of(layout.omega(st))) << "\n";
  out << "[pooling]\n";
  out << "g = " << fmt_short(dist.median_change) << "\n";
  out << "v = " << fmt_short(dist.variance) << "\n";
}

ImportedHyperparameters import_hyperparameters(const std::string& path) {
  const Config cfg = Config::parse_file(path);
  ImportedHyperparameters imp;
  imp.globals.chi = cfg.number("hyperparameters.chi");
  imp.globals.phi_sigma = cfg.number("hyperparameters.phi_sigma");
  imp.globals.nu = cfg.number_or("hyperparameters.nu", imp.globals.nu);
  auto read_section = [&](const char* name, auto& array) {
    for (const std::string& label : cfg.keys_under(name)) {
      bool known = false;
      for (int g = 0; g < kSourceGroupCount; ++g) {
        if (label == to_label(static_cast<SourceGroup>(g))) {
          array[static_cast<std::size_t>(g)] = cfg.number(std::string(name) + "." + label);
          known = true;
        }
      }
      if (!known)
        throw ConfigError(path + ": unknown source type '" + label + "' in [" + name + "]");
    }
  };
  read_section("mu0", imp.globals.mu0);
  read_section("phi0", imp.globals.phi0);
  read_section("mu1", imp.globals.mu1);
  read_section("phi1", imp.globals.phi1);
  for (const std::string& label : cfg.keys_under("omega")) {
    const auto st = source_type_from_label(label);
    if (!st) throw ConfigError(path + ": unknown source type '" + label + "' in [omega]");
    imp.globals.omega_of(*st) = cfg.number("omega." + label);
  }
  imp.dist.median_change = cfg.number("pooling.g");
  imp.dist.variance = cfg.number("pooling.v");
  if (!(imp.dist.variance > 0.0))
    throw ConfigError(path + ": pooling.v must be positive");
  return imp;
}

void run(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("--out directory is required");
  fs::create_directories(cfg.out_dir);
  ArtifactTracker artifacts;
  const LoadedInputs in = load_inputs(cfg);

  switch (cfg.mode) {
    case RunMode::global:
    case RunMode::country:
      run_estimation(cfg, in, artifacts);
      break;
    case RunMode::validate:
    case RunMode::w_sweep: {
      ValidationRunInputs vin;
      vin.observations = in.observations;
      vin.model_config = in.model_config;
      vin.sampler_config = cfg.sampler;
      vin.config = cfg.validation;
      vin.config.reference_w = cfg.w;
      if (cfg.mode == RunMode::w_sweep)
        vin.config.w_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
      else
        vin.config.w_grid = {cfg.w};
      vin.births = in.have_births ? &in.births : nullptr;
      const ValidationReport report = run_validation(vin);
      write_validation_outputs(cfg, report, artifacts);
      break;
    }
  }
  artifacts.keep();
}

}  // namespace b3
