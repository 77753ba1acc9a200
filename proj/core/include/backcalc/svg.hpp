#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace backcalc {

// Minimal line/band/bar chart writer.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label);

  void band(const std::vector<double>& x, const std::vector<double>& lo,
            const std::vector<double>& hi, const std::string& colour, double opacity);
  void line(const std::vector<double>& x, const std::vector<double>& y, const std::string& colour,
            double width = 1.5, bool dashed = false);
  void points(const std::vector<double>& x, const std::vector<double>& y, const std::string& colour);
  void bars(const std::vector<double>& x, const std::vector<double>& y, const std::string& colour);
  void vline(double x, const std::string& colour);
  void hline(double y, const std::string& colour);

  std::string render(int width = 720, int height = 420) const;
  void save(const std::filesystem::path& path) const;

 private:
  struct Item {
    enum Kind { band, line, points, bars, vline, hline } kind;
    std::vector<double> x, y, y2;
    std::string colour;
    double opacity = 1.0;
    double width = 1.5;
    bool dashed = false;
  };
  std::string title_, x_label_, y_label_;
  std::vector<Item> items_;
};

// Figures from the CSVs written by the pipeline. Vertical markers are in
// figure days.
void plot_bands_csv(const std::filesystem::path& csv, const std::filesystem::path& svg,
                    const std::string& title, const std::string& y_label,
                    const std::vector<double>& markers = {}, double reference = -1.0);
void plot_peak_csv(const std::filesystem::path& csv, const std::filesystem::path& svg,
                   const std::vector<double>& markers = {});
void plot_sanity_csv(const std::filesystem::path& csv, const std::filesystem::path& svg);
void plot_pcr_csv(const std::filesystem::path& csv, const std::filesystem::path& svg);

}  // namespace backcalc
