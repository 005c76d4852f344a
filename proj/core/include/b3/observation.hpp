#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace b3 {

/// The twelve source categories observations carry in the data file. The
/// with/without split for DHS, Other-DHS and MICS series reflects whether
/// sampling standard errors are reported for their observations.
enum class SourceType {
  vr,
  dhs_direct_se,
  dhs_direct_nose,
  other_dhs_se,
  other_dhs_nose,
  mics_se,
  mics_nose,
  census_indirect,
  others_direct,
  others_indirect,
  household_deaths,
  life_table,
};
inline constexpr int kSourceTypeCount = 12;

/// Bias-model grouping: the with/without-reported-SE categories collapse.
enum class SourceGroup {
  vr,
  dhs_direct,
  other_dhs_direct,
  mics_indirect,
  census_indirect,
  others_direct,
  others_indirect,
  household_deaths,
  life_table,
};
inline constexpr int kSourceGroupCount = 9;

enum class VrStatus { not_vr, complete, incomplete };

SourceGroup group_of(SourceType t);

/// Groups with potentially multiple observations per series; these get
/// series-level level/slope bias parameters under the multilevel model.
bool repeated_group(SourceGroup g);

/// Groups whose observation errors are normal rather than t (the DHS-class
/// direct series).
bool normal_error_group(SourceGroup g);

/// Whether the category declares reported sampling errors.
bool reports_se(SourceType t);

const char* to_label(SourceType t);
const char* to_label(SourceGroup g);
const char* to_label(VrStatus s);
std::optional<SourceType> source_type_from_label(std::string_view label);
std::optional<VrStatus> vr_status_from_label(std::string_view label);

/// One U5MR data point.
struct Observation {
  std::string country;            // ISO-style country code
  double ref_year = 0.0;          // midpoint of the reference period (decimal year)
  double u5mr = 0.0;              // deaths per 1000 live births, > 0
  double log_u5mr = 0.0;          // ln(u5mr)
  std::string series_id;
  SourceType source_type = SourceType::vr;
  std::optional<double> survey_year;   // collection date of the survey/census
  std::optional<double> reported_se;   // sampling SE on the log scale
  VrStatus vr_status = VrStatus::not_vr;
  bool svr = false;                    // sample vital registration
  std::optional<double> births;
  std::optional<double> deaths;

  /// Years between collection and reference date; empty without survey_year.
  std::optional<double> retrospective_period() const {
    if (!survey_year) return std::nullopt;
    return *survey_year - ref_year;
  }
};

/// Per-series metadata derived while parsing.
struct SeriesMeta {
  std::string series_id;
  std::string country;
  SourceGroup group = SourceGroup::vr;     // bias-model category d
  SourceType subtype = SourceType::vr;     // error-scale category d'
  bool repeated = false;
};

/// Observations from an incomplete-VR country picked for special treatment:
/// the early-1990s trend pair and the recent observations used as bounds.
struct IncompleteVrSelection {
  std::vector<int> trend_obs;                       // at most two indices
  std::vector<int> bound_obs;                       // indices used as bounds
  std::vector<std::optional<double>> min_completeness;  // m_i per bound obs
};

}  // namespace b3
