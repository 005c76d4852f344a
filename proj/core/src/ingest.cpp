#include "b3/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "b3/errors.hpp"

namespace b3 {

SourceGroup group_of(SourceType t) {
  switch (t) {
    case SourceType::vr: return SourceGroup::vr;
    case SourceType::dhs_direct_se:
    case SourceType::dhs_direct_nose: return SourceGroup::dhs_direct;
    case SourceType::other_dhs_se:
    case SourceType::other_dhs_nose: return SourceGroup::other_dhs_direct;
    case SourceType::mics_se:
    case SourceType::mics_nose: return SourceGroup::mics_indirect;
    case SourceType::census_indirect: return SourceGroup::census_indirect;
    case SourceType::others_direct: return SourceGroup::others_direct;
    case SourceType::others_indirect: return SourceGroup::others_indirect;
    case SourceType::household_deaths: return SourceGroup::household_deaths;
    case SourceType::life_table: return SourceGroup::life_table;
  }
  return SourceGroup::vr;
}

bool repeated_group(SourceGroup g) {
  switch (g) {
    case SourceGroup::dhs_direct:
    case SourceGroup::other_dhs_direct:
    case SourceGroup::mics_indirect:
    case SourceGroup::census_indirect:
    case SourceGroup::others_direct:
    case SourceGroup::others_indirect: return true;
    default: return false;
  }
}

bool normal_error_group(SourceGroup g) {
  return g == SourceGroup::dhs_direct || g == SourceGroup::other_dhs_direct;
}

bool reports_se(SourceType t) {
  return t == SourceType::dhs_direct_se || t == SourceType::other_dhs_se ||
         t == SourceType::mics_se;
}

namespace {

constexpr const char* kTypeLabels[kSourceTypeCount] = {
    "vr",
    "dhs_direct_se",
    "dhs_direct_nose",
    "other_dhs_direct_se",
    "other_dhs_direct_nose",
    "mics_indirect_se",
    "mics_indirect_nose",
    "census_indirect",
    "others_direct",
    "others_indirect",
    "others_household_deaths",
    "others_life_table",
};

constexpr const char* kGroupLabels[kSourceGroupCount] = {
    "vr",
    "dhs_direct",
    "other_dhs_direct",
    "mics_indirect",
    "census_indirect",
    "others_direct",
    "others_indirect",
    "others_household_deaths",
    "others_life_table",
};

}  // namespace

const char* to_label(SourceType t) { return kTypeLabels[static_cast<int>(t)]; }
const char* to_label(SourceGroup g) { return kGroupLabels[static_cast<int>(g)]; }

const char* to_label(VrStatus s) {
  switch (s) {
    case VrStatus::complete: return "complete";
    case VrStatus::incomplete: return "incomplete";
    default: return "";
  }
}

std::optional<SourceType> source_type_from_label(std::string_view label) {
  for (int i = 0; i < kSourceTypeCount; ++i)
    if (label == kTypeLabels[i]) return static_cast<SourceType>(i);
  return std::nullopt;
}

std::optional<VrStatus> vr_status_from_label(std::string_view label) {
  if (label.empty() || label == "not_vr") return VrStatus::not_vr;
  if (label == "complete") return VrStatus::complete;
  if (label == "incomplete") return VrStatus::incomplete;
  return std::nullopt;
}

namespace {

constexpr const char* kColumns[] = {"country",     "ref_year", "u5mr",      "series_id",
                                    "source_type", "survey_year", "reported_se",
                                    "vr_status",   "svr",      "births",    "deaths"};
constexpr int kColumnCount = 11;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

ParseResult parse_observations(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open observations file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_observations_text(buf.str(), schema, path);
}

ParseResult parse_observations_text(std::string_view csv, const CsvSchema& schema,
                                    const std::string& origin) {
  ParseResult result;
  std::size_t start = 0;
  long line_no = 0;

  auto next_line = [&](std::string_view& line) {
    if (start > csv.size()) return false;
    const std::size_t nl = csv.find('\n', start);
    line = csv.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                          : nl - start);
    start = (nl == std::string_view::npos) ? csv.size() + 1 : nl + 1;
    ++line_no;
    return true;
  };

  std::string_view header;
  if (!next_line(header)) throw DataError(origin + ": empty file");
  const auto names = split_line(header, schema.delimiter);
  int col_of[kColumnCount];
  std::fill(std::begin(col_of), std::end(col_of), -1);
  for (std::size_t j = 0; j < names.size(); ++j) {
    bool known = false;
    for (int k = 0; k < kColumnCount; ++k) {
      if (names[j] == kColumns[k]) {
        if (col_of[k] >= 0) throw DataError(origin + ": duplicate column '" + std::string(names[j]) + "'");
        col_of[k] = static_cast<int>(j);
        known = true;
      }
    }
    if (!known)
      throw DataError(origin + ": unknown column '" + std::string(names[j]) + "'");
  }
  for (int k : {0, 1, 2, 3, 4}) {
    if (col_of[k] < 0)
      throw DataError(origin + ": missing required column '" + std::string(kColumns[k]) + "'");
  }

  // (series_id, ref_year) pairs already seen, for duplicate detection.
  std::map<std::pair<std::string, double>, bool> seen;
  // series_id -> index into result.series
  std::map<std::string, std::size_t> series_index;

  std::string_view line;
  while (next_line(line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, schema.delimiter);
    auto reject = [&](const std::string& why) {
      result.rejections.push_back(RowRejection{line_no, why});
    };
    if (fields.size() != names.size()) {
      reject("field count mismatch");
      continue;
    }
    auto field = [&](int k) -> std::string_view {
      return col_of[k] >= 0 ? fields[static_cast<std::size_t>(col_of[k])]
                            : std::string_view{};
    };

    Observation obs;
    obs.country = std::string(field(0));
    if (obs.country.empty()) {
      reject("missing country");
      continue;
    }
    if (!parse_double(field(1), obs.ref_year)) {
      reject("malformed ref_year");
      continue;
    }
    if (!parse_double(field(2), obs.u5mr)) {
      reject("malformed u5mr");
      continue;
    }
    if (!(obs.u5mr > 0.0)) {
      reject("nonpositive rate");
      continue;
    }
    obs.log_u5mr = std::log(obs.u5mr);
    obs.series_id = std::string(field(3));
    if (obs.series_id.empty()) {
      reject("missing series_id");
      continue;
    }
    const auto type = source_type_from_label(field(4));
    if (!type) {
      reject("unknown source_type '" + std::string(field(4)) + "'");
      continue;
    }
    obs.source_type = *type;

    bool bad = false;
    auto optional_number = [&](int k, const char* what) -> std::optional<double> {
      const auto s = field(k);
      if (s.empty()) return std::nullopt;
      double v;
      if (!parse_double(s, v)) {
        reject(std::string("malformed ") + what);
        bad = true;
        return std::nullopt;
      }
      return v;
    };
    obs.survey_year = optional_number(5, "survey_year");
    if (bad) continue;
    obs.reported_se = optional_number(6, "reported_se");
    if (bad) continue;

    const auto status = vr_status_from_label(field(7));
    if (!status) {
      reject("unknown vr_status '" + std::string(field(7)) + "'");
      continue;
    }
    obs.vr_status = *status;
    const bool is_vr = obs.source_type == SourceType::vr;
    if (is_vr && obs.vr_status == VrStatus::not_vr) obs.vr_status = VrStatus::complete;
    if (!is_vr && obs.vr_status != VrStatus::not_vr) {
      reject("vr_status set on a non-VR row");
      continue;
    }

    const auto svr_field = field(8);
    if (!svr_field.empty()) {
      if (svr_field == "1")
        obs.svr = true;
      else if (svr_field != "0") {
        reject("malformed svr flag");
        continue;
      }
    }
    obs.births = optional_number(9, "births");
    if (bad) continue;
    obs.deaths = optional_number(10, "deaths");
    if (bad) continue;

    if (obs.survey_year && *obs.survey_year < obs.ref_year) {
      reject("survey_year earlier than ref_year");
      continue;
    }
    const SourceGroup group = group_of(obs.source_type);
    if (!is_vr && repeated_group(group) && !obs.survey_year) {
      reject("missing survey_year for a repeated-source observation");
      continue;
    }
    if (reports_se(obs.source_type) && !obs.reported_se) {
      reject("missing reported_se for a with-reported-SE source type");
      continue;
    }

    const auto key = std::make_pair(obs.series_id, obs.ref_year);
    if (seen.count(key)) {
      reject("duplicate (series_id, ref_year)");
      continue;
    }

    const auto it = series_index.find(obs.series_id);
    if (it == series_index.end()) {
      SeriesMeta meta;
      meta.series_id = obs.series_id;
      meta.country = obs.country;
      meta.group = group;
      meta.subtype = obs.source_type;
      meta.repeated = repeated_group(group);
      series_index.emplace(obs.series_id, result.series.size());
      result.series.push_back(std::move(meta));
    } else {
      const SeriesMeta& meta = result.series[it->second];
      if (meta.subtype != obs.source_type) {
        reject("source_type differs from earlier rows of series " + obs.series_id);
        continue;
      }
      if (meta.country != obs.country) {
        reject("country differs from earlier rows of series " + obs.series_id);
        continue;
      }
    }

    seen.emplace(key, true);
    result.observations.push_back(std::move(obs));
  }
  return result;
}

std::string observations_to_csv(const std::vector<Observation>& observations) {
  std::ostringstream out;
  for (int k = 0; k < kColumnCount; ++k) out << (k ? "," : "") << kColumns[k];
  out << "\n";
  for (const Observation& o : observations) {
    out << o.country << "," << format_double(o.ref_year) << "," << format_double(o.u5mr)
        << "," << o.series_id << "," << to_label(o.source_type) << ",";
    if (o.survey_year) out << format_double(*o.survey_year);
    out << ",";
    if (o.reported_se) out << format_double(*o.reported_se);
    out << "," << to_label(o.vr_status) << "," << (o.svr ? "1" : "0") << ",";
    if (o.births) out << format_double(*o.births);
    out << ",";
    if (o.deaths) out << format_double(*o.deaths);
    out << "\n";
  }
  return out.str();
}

void write_observations(const std::vector<Observation>& observations,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write observations file: " + path);
  out << observations_to_csv(observations);
}

double vr_stochastic_sd(std::optional<double> births, double u5mr, bool svr,
                        double floor, double svr_default) {
  if (!births) {
    if (svr) return svr_default;
    throw DataError("complete-VR observation without births or a reported SE");
  }
  if (!(*births > 0.0)) throw DataError("VR observation with nonpositive births");
  const double expected_deaths = *births * u5mr / 1000.0;
  return std::max(1.0 / std::sqrt(expected_deaths), floor);
}

BirthsTable BirthsTable::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open births file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

BirthsTable BirthsTable::parse_text(std::string_view csv, const std::string& origin) {
  BirthsTable table;
  std::size_t start = 0;
  long line_no = 0;
  bool header_done = false;
  while (start <= csv.size()) {
    const std::size_t nl = csv.find('\n', start);
    const std::string_view line =
        csv.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = (nl == std::string_view::npos) ? csv.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, ',');
    if (!header_done) {
      if (fields.size() != 3 || fields[0] != "country" || fields[1] != "year" ||
          fields[2] != "births")
        throw DataError(origin + ": births header must be country,year,births");
      header_done = true;
      continue;
    }
    double year, births;
    if (fields.size() != 3 || !parse_double(fields[1], year) ||
        !parse_double(fields[2], births))
      throw DataError(origin + ":" + std::to_string(line_no) + ": malformed births row");
    table.add(std::string(fields[0]), static_cast<int>(std::lround(year)), births);
  }
  return table;
}

void BirthsTable::add(const std::string& country, int year, double births) {
  rows_[{country, year}] = births;
}

std::optional<double> BirthsTable::lookup(const std::string& country, double ref_year) const {
  // An annual observation for calendar year Y has midpoint Y + 0.5.
  const int year = static_cast<int>(std::floor(ref_year));
  const auto it = rows_.find({country, year});
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

std::vector<Observation> aggregate_vr_periods(std::vector<Observation> single_year,
                                              double cv_threshold,
                                              bool* tail_over_threshold) {
  if (tail_over_threshold) *tail_over_threshold = false;
  if (single_year.empty()) return {};
  for (const Observation& o : single_year) {
    if (!o.births || !o.deaths)
      throw DataError("aggregate_vr_periods requires births and deaths on every row");
  }
  std::sort(single_year.begin(), single_year.end(),
            [](const Observation& a, const Observation& b) { return a.ref_year < b.ref_year; });

  std::vector<Observation> merged;
  std::size_t i = 0;
  while (i < single_year.size()) {
    double births = *single_year[i].births;
    double deaths = *single_year[i].deaths;
    double year_sum = single_year[i].ref_year;
    std::size_t n = 1;
    auto cv = [&]() {
      return deaths > 0.0 ? 1.0 / std::sqrt(deaths)
                          : std::numeric_limits<double>::infinity();
    };
    while (cv() > cv_threshold && i + n < single_year.size()) {
      const Observation& next = single_year[i + n];
      births += *next.births;
      deaths += *next.deaths;
      year_sum += next.ref_year;
      ++n;
    }
    if (!(deaths > 0.0))
      throw DataError("aggregate_vr_periods: zero deaths over the whole tail period");
    if (cv() > cv_threshold && tail_over_threshold) *tail_over_threshold = true;

    Observation out = single_year[i];
    out.ref_year = year_sum / static_cast<double>(n);
    out.births = births;
    out.deaths = deaths;
    out.u5mr = 1000.0 * deaths / births;
    out.log_u5mr = std::log(out.u5mr);
    out.reported_se = std::nullopt;
    merged.push_back(std::move(out));
    i += n;
  }
  return merged;
}

const IncompleteVrCountry* IncompleteVrConfig::find(const std::string& country) const {
  for (const auto& c : countries)
    if (c.country == country) return &c;
  return nullptr;
}

IncompleteVrSelection select_incomplete_vr(const std::vector<Observation>& all,
                                           const std::vector<int>& country_rows,
                                           const IncompleteVrCountry& cfg,
                                           bool* no_trend_data) {
  IncompleteVrSelection sel;
  if (no_trend_data) *no_trend_data = false;

  int obs_1990 = -1;
  int obs_max_91_95 = -1;
  for (int idx : country_rows) {
    const Observation& o = all[static_cast<std::size_t>(idx)];
    if (o.vr_status != VrStatus::incomplete) continue;
    if (o.ref_year >= 1990.0 && o.ref_year < 1991.0) {
      // Several observations can fall in 1990 under multi-period reporting;
      // the one whose period midpoint is closest to 1990.0 wins.
      if (obs_1990 < 0 ||
          std::abs(o.ref_year - 1990.0) <
              std::abs(all[static_cast<std::size_t>(obs_1990)].ref_year - 1990.0))
        obs_1990 = idx;
    } else if (o.ref_year >= 1991.0 && o.ref_year < 1996.0) {
      if (obs_max_91_95 < 0 ||
          o.u5mr > all[static_cast<std::size_t>(obs_max_91_95)].u5mr)
        obs_max_91_95 = idx;
    }
  }
  if (obs_1990 >= 0) sel.trend_obs.push_back(obs_1990);
  if (obs_max_91_95 >= 0) sel.trend_obs.push_back(obs_max_91_95);
  if (sel.trend_obs.empty() && no_trend_data) *no_trend_data = true;

  if (cfg.use_bounds) {
    int bound = -1;
    for (int idx : country_rows) {
      const Observation& o = all[static_cast<std::size_t>(idx)];
      if (o.vr_status != VrStatus::incomplete) continue;
      if (o.ref_year < cfg.bound_from) continue;
      if (idx == obs_1990 || idx == obs_max_91_95) continue;  // keep the sets disjoint
      if (bound < 0 || o.ref_year > all[static_cast<std::size_t>(bound)].ref_year)
        bound = idx;
    }
    if (bound >= 0) {
      if (cfg.min_completeness &&
          !(*cfg.min_completeness > 0.0 && *cfg.min_completeness <= 1.0))
        throw ConfigError("min completeness for " + cfg.country + " must lie in (0,1]");
      sel.bound_obs.push_back(bound);
      sel.min_completeness.push_back(cfg.min_completeness);
    }
  }
  return sel;
}

}  // namespace b3
