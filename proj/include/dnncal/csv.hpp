#pragma once

// CSV schemas for ensembles, contaminated sets, observations, test scenarios,
// estimates and metrics. Every number is written in the shortest decimal form
// that parses back to the same double.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dnncal/calibration.hpp"
#include "dnncal/discrepancy.hpp"
#include "dnncal/study.hpp"

namespace dnncal {

std::string format_double(double v);

/// Parses a finite decimal; throws DataError naming `where` otherwise.
double parse_double(std::string_view text, const std::string& where);

/// Header plus numeric body. Rows are numbered from 1 after the header.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws DataError when absent
  bool has_column(const std::string& name) const;
};

NumericTable parse_table(std::string_view text, const std::string& source = "<input>");
NumericTable read_table(const std::filesystem::path& path);
std::string render_table(const NumericTable& table);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// theta_1..theta_D,y_1..y_P
std::string render_ensemble(const Ensemble& e);
Ensemble parse_ensemble(std::string_view text, const std::string& source = "<input>");
void save_ensemble(const std::filesystem::path& path, const Ensemble& e);
Ensemble load_ensemble(const std::filesystem::path& path);

/// Ensemble columns followed by i,j,zeta,kappa,phi.
void save_contaminated(const std::filesystem::path& path, const ContaminatedSet& c);
ContaminatedSet load_contaminated(const std::filesystem::path& path);

/// y_1..y_P, a single row.
void save_observation(const std::filesystem::path& path, const TimeSeries& z);
TimeSeries load_observation(const std::filesystem::path& path);

/// Ensemble columns followed by zeta,kappa,phi.
void save_scenarios(const std::filesystem::path& path, const std::vector<TestScenario>& s);
std::vector<TestScenario> load_scenarios(const std::filesystem::path& path);

/// parameter,median,lower,upper
void save_estimate(const std::filesystem::path& path, const CalibrationEstimate& e);

/// parameter,method,bias,rmse,pi_length,pi_coverage
std::string render_metrics(const std::vector<MetricsRow>& rows);
void save_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

}  // namespace dnncal
