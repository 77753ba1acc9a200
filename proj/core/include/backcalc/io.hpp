#pragma once

#include "backcalc/inference.hpp"
#include "backcalc/models.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace backcalc {

// `date,deaths` CSV with contiguous daily rows. Lines starting with '#' and
// blank lines are skipped. Throws InputError naming the offending line, the
// duplicated date or the missing dates.
DeathSeries ingest_deaths(const std::filesystem::path& path);
void write_deaths(const std::filesystem::path& path, const DeathSeries& series);

// A plain CSV table of strings with a header row. Missing numeric values are
// written as NA and read back as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // throws InputError if absent
  std::vector<double> numeric(const std::string& name) const;
  std::vector<std::string> text(const std::string& name) const;

  void add_column(const std::string& name, const std::vector<std::string>& values);
  void add_column(const std::string& name, const Eigen::VectorXd& values);
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::string format_number(double v);

// Day numbers relative to the figure preset (13 March 2020 is day 0).
int figure_day(Date d);

// day,date,median,q2.5,q16,q84,q97.5 for every incidence (or death) day.
CsvTable bands_table(const std::vector<Date>& dates, const Bands& bands);
Bands bands_from_table(const CsvTable& table);

CsvTable peak_table(const std::vector<Date>& dates, const std::vector<double>& probability);

}  // namespace backcalc
