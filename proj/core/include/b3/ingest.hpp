#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "b3/observation.hpp"

namespace b3 {

struct CsvSchema {
  char delimiter = ',';
};

struct RowRejection {
  long line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<Observation> observations;
  std::vector<SeriesMeta> series;
  std::vector<RowRejection> rejections;
};

/// Parse the observations CSV. Every data row becomes exactly one Observation
/// or one rejection with its line number and reason; the file as a whole only
/// fails on a missing/unreadable file or a bad header.
ParseResult parse_observations(const std::string& path, const CsvSchema& schema = {});
ParseResult parse_observations_text(std::string_view csv, const CsvSchema& schema = {},
                                    const std::string& origin = "<csv>");

std::string observations_to_csv(const std::vector<Observation>& observations);
void write_observations(const std::vector<Observation>& observations,
                        const std::string& path);

/// Stochastic standard deviation on the log scale for a (S)VR observation:
/// max(1/sqrt(births * u5mr / 1000), 0.025) when birth counts are known,
/// 0.1 for sample registration without them.
double vr_stochastic_sd(std::optional<double> births, double u5mr, bool svr,
                        double floor = 0.025, double svr_default = 0.1);

/// Live-birth counts by (country, calendar year).
class BirthsTable {
 public:
  static BirthsTable parse_file(const std::string& path);
  static BirthsTable parse_text(std::string_view csv, const std::string& origin = "<csv>");
  void add(const std::string& country, int year, double births);
  std::optional<double> lookup(const std::string& country, double ref_year) const;
  std::size_t size() const { return rows_.size(); }

 private:
  std::map<std::pair<std::string, int>, double> rows_;
};

/// Merge consecutive single-year VR observations (summing births and deaths,
/// recomputing the rate at the period midpoint) until each merged observation
/// has coefficient of variation <= threshold. Greedy left-to-right. A residual
/// tail period may still exceed the threshold; *tail_over_threshold reports it.
std::vector<Observation> aggregate_vr_periods(std::vector<Observation> single_year,
                                              double cv_threshold = 0.10,
                                              bool* tail_over_threshold = nullptr);

/// Per-country incomplete-VR handling, normally read from the config file.
struct IncompleteVrCountry {
  std::string country;
  std::optional<double> min_completeness;  // m in (0,1]; bounds get an upper cap
  double bound_from = 2005.0;              // earliest year eligible as a bound
  bool use_bounds = true;
};

struct IncompleteVrConfig {
  std::vector<IncompleteVrCountry> countries;
  const IncompleteVrCountry* find(const std::string& country) const;
};

/// Pick the trend pair (the 1990 observation plus the maximum over 1991-1995)
/// and the most recent bound observation among one country's incomplete-VR
/// rows. `country_rows` holds indices into `all`; returned indices point into
/// `all` as well. Sets *no_trend_data when the 1990-1995 window is empty.
IncompleteVrSelection select_incomplete_vr(const std::vector<Observation>& all,
                                           const std::vector<int>& country_rows,
                                           const IncompleteVrCountry& cfg,
                                           bool* no_trend_data = nullptr);

}  // namespace b3
