#include "backcalc/io.hpp"

#include "backcalc/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace backcalc {

namespace {

std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool skippable(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

DeathSeries ingest_deaths(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  DeathSeries s;
  std::vector<double> counts;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto cells = split(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (cells.size() != 2 || cells[0] != "date" || cells[1] != "deaths") {
        throw InputError(where + ": expected header 'date,deaths'");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != 2) throw InputError(where + ": expected two fields");
    const Date d = parse_date(cells[0]);
    double v = 0.0;
    const auto& c = cells[1];
    const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
    if (res.ec != std::errc() || res.ptr != c.data() + c.size() || !std::isfinite(v)) {
      throw InputError(where + ": deaths '" + c + "' is not a number");
    }
    if (v < 0.0 || v != std::floor(v)) {
      throw InputError(where + ": deaths must be a non-negative integer, got '" + c + "'");
    }
    if (!s.dates.empty()) {
      const Date prev = s.dates.back();
      if (d == prev || d < prev) {
        const int dup = s.index_of(d);
        if (dup >= 0) throw InputError(where + ": duplicate date " + format_date(d));
        throw InputError(where + ": dates out of order at " + format_date(d));
      }
      if (d != prev + std::chrono::days{1}) {
        std::string missing;
        for (Date m = prev + std::chrono::days{1}; m < d; m += std::chrono::days{1}) {
          missing += (missing.empty() ? "" : ", ") + format_date(m);
        }
        throw InputError(where + ": missing dates " + missing);
      }
    }
    s.dates.push_back(d);
    counts.push_back(v);
  }
  if (!header_seen) throw InputError(path.string() + ": empty file");
  if (counts.empty()) throw InputError(path.string() + ": no data rows");
  s.deaths = Eigen::Map<Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(counts.size()));
  return s;
}

void write_deaths(const std::filesystem::path& path, const DeathSeries& series) {
  CsvTable t;
  std::vector<std::string> dates;
  for (const auto& d : series.dates) dates.push_back(format_date(d));
  t.add_column("date", dates);
  t.add_column("deaths", series.deaths);
  write_csv(path, t);
}

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw InputError("missing column '" + name + "'");
}

std::vector<double> CsvTable::numeric(const std::string& name) const {
  const auto c = static_cast<std::size_t>(column_index(name));
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const std::string& cell = r.at(c);
    if (cell == "NA" || cell.empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
      throw InputError("column '" + name + "': '" + cell + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> CsvTable::text(const std::string& name) const {
  const auto c = static_cast<std::size_t>(column_index(name));
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

void CsvTable::add_column(const std::string& name, const std::vector<std::string>& values) {
  if (!header.empty() && values.size() != rows.size()) throw DimensionError("column length mismatch");
  if (header.empty()) rows.assign(values.size(), {});
  header.push_back(name);
  for (std::size_t i = 0; i < values.size(); ++i) rows[i].push_back(values[i]);
}

void CsvTable::add_column(const std::string& name, const Eigen::VectorXd& values) {
  std::vector<std::string> s;
  s.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) s.push_back(format_number(values(i)));
  add_column(name, s);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
  return std::string(buf, res.ptr);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (skippable(line)) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw InputError(path.string() + ": row with " + std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw InputError(path.string() + ": empty file");
  return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& r : table.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

int figure_day(Date d) {
  return static_cast<int>((d - Date{kFigureDayZero}).count());
}

CsvTable bands_table(const std::vector<Date>& dates, const Bands& b) {
  if (static_cast<Eigen::Index>(dates.size()) != b.median.size()) throw DimensionError("dates do not match bands");
  CsvTable t;
  std::vector<std::string> day, date;
  for (const auto& d : dates) {
    day.push_back(std::to_string(figure_day(d)));
    date.push_back(format_date(d));
  }
  t.add_column("day", day);
  t.add_column("date", date);
  t.add_column("median", b.median);
  t.add_column("q2.5", b.q025);
  t.add_column("q16", b.q16);
  t.add_column("q84", b.q84);
  t.add_column("q97.5", b.q975);
  return t;
}

Bands bands_from_table(const CsvTable& t) {
  auto vec = [&](const std::string& name) {
    const auto v = t.numeric(name);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  return {vec("q2.5"), vec("q16"), vec("median"), vec("q84"), vec("q97.5")};
}

CsvTable peak_table(const std::vector<Date>& dates, const std::vector<double>& probability) {
  if (dates.size() != probability.size()) throw DimensionError("dates do not match probabilities");
  CsvTable t;
  std::vector<std::string> day, date, prob;
  for (std::size_t i = 0; i < dates.size(); ++i) {
    day.push_back(std::to_string(figure_day(dates[i])));
    date.push_back(format_date(dates[i]));
    prob.push_back(format_number(probability[i]));
  }
  t.add_column("day", day);
  t.add_column("date", date);
  t.add_column("probability", prob);
  return t;
}

}  // namespace backcalc
