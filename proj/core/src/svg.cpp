#include "backcalc/svg.hpp"

#include "backcalc/errors.hpp"
#include "backcalc/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace backcalc {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round tick step: 1, 2 or 5 times a power of ten.
double nice_step(double range, int target) {
  if (!(range > 0.0)) return 1.0;
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

}  // namespace

SvgPlot::SvgPlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgPlot::band(const std::vector<double>& x, const std::vector<double>& lo,
                   const std::vector<double>& hi, const std::string& colour, double opacity) {
  if (x.size() != lo.size() || x.size() != hi.size()) throw DimensionError("band lengths differ");
  items_.push_back({Item::band, x, lo, hi, colour, opacity});
}

void SvgPlot::line(const std::vector<double>& x, const std::vector<double>& y, const std::string& colour,
                   double width, bool dashed) {
  if (x.size() != y.size()) throw DimensionError("line lengths differ");
  items_.push_back({Item::line, x, y, {}, colour, 1.0, width, dashed});
}

void SvgPlot::points(const std::vector<double>& x, const std::vector<double>& y, const std::string& colour) {
  if (x.size() != y.size()) throw DimensionError("point lengths differ");
  items_.push_back({Item::points, x, y, {}, colour});
}

void SvgPlot::bars(const std::vector<double>& x, const std::vector<double>& y, const std::string& colour) {
  if (x.size() != y.size()) throw DimensionError("bar lengths differ");
  items_.push_back({Item::bars, x, y, {}, colour});
}

void SvgPlot::vline(double x, const std::string& colour) {
  items_.push_back({Item::vline, {x}, {}, {}, colour, 1.0, 1.0, true});
}

void SvgPlot::hline(double y, const std::string& colour) {
  items_.push_back({Item::hline, {}, {y}, {}, colour, 1.0, 1.0, true});
}

std::string SvgPlot::render(int width, int height) const {
  const double left = 70, right = 20, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  auto grow = [](double v, double& lo, double& hi) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  for (const auto& it : items_) {
    for (double v : it.x) grow(v, x0, x1);
    for (double v : it.y) grow(v, y0, y1);
    for (double v : it.y2) grow(v, y0, y1);
    if (it.kind == Item::bars) grow(0.0, y0, y1);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.04 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title_)
    << "</text>\n";

  const double xs = nice_step(x1 - x0, 8), ys = nice_step(y1 - y0, 6);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9; t += xs) {
    o << "<line x1=\"" << fmt(sx(t)) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(sx(t)) << "\" y2=\""
      << fmt(top + ph) << "\" stroke=\"#eee\"/>\n";
    o << "<text x=\"" << fmt(sx(t)) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">"
      << fmt(t) << "</text>\n";
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-12; t += ys) {
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(sy(t)) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
      << fmt(sy(t)) << "\" stroke=\"#eee\"/>\n";
    o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(sy(t) + 4) << "\" text-anchor=\"end\">" << fmt(t)
      << "</text>\n";
  }
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
    << escape(x_label_) << "</text>\n";
  o << "<text transform=\"translate(16," << fmt(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(y_label_) << "</text>\n";

  for (const auto& it : items_) {
    switch (it.kind) {
      case Item::band: {
        // One polygon per run of finite values.
        std::size_t i = 0;
        while (i < it.x.size()) {
          while (i < it.x.size() && !(std::isfinite(it.y[i]) && std::isfinite(it.y2[i]))) ++i;
          std::size_t j = i;
          while (j < it.x.size() && std::isfinite(it.y[j]) && std::isfinite(it.y2[j])) ++j;
          if (j > i) {
            o << "<polygon fill=\"" << it.colour << "\" fill-opacity=\"" << it.opacity << "\" points=\"";
            for (std::size_t k = i; k < j; ++k) o << fmt(sx(it.x[k])) << ',' << fmt(sy(it.y2[k])) << ' ';
            for (std::size_t k = j; k-- > i;) o << fmt(sx(it.x[k])) << ',' << fmt(sy(it.y[k])) << ' ';
            o << "\"/>\n";
          }
          i = j;
        }
        break;
      }
      case Item::line: {
        std::string path;
        bool pen = false;
        for (std::size_t k = 0; k < it.x.size(); ++k) {
          if (!std::isfinite(it.y[k])) {
            pen = false;
            continue;
          }
          path += (pen ? "L" : "M") + fmt(sx(it.x[k])) + "," + fmt(sy(it.y[k])) + " ";
          pen = true;
        }
        o << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << it.colour << "\" stroke-width=\""
          << it.width << "\"" << (it.dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
        break;
      }
      case Item::points:
        for (std::size_t k = 0; k < it.x.size(); ++k) {
          if (!std::isfinite(it.y[k])) continue;
          o << "<circle cx=\"" << fmt(sx(it.x[k])) << "\" cy=\"" << fmt(sy(it.y[k])) << "\" r=\"2\" fill=\""
            << it.colour << "\"/>\n";
        }
        break;
      case Item::bars: {
        const double w = 0.8 * pw / std::max<double>(1.0, x1 - x0 + 1);
        for (std::size_t k = 0; k < it.x.size(); ++k) {
          if (!(it.y[k] > 0.0)) continue;
          o << "<rect x=\"" << fmt(sx(it.x[k]) - w / 2) << "\" y=\"" << fmt(sy(it.y[k])) << "\" width=\""
            << fmt(w) << "\" height=\"" << fmt(sy(0.0) - sy(it.y[k])) << "\" fill=\"" << it.colour << "\"/>\n";
        }
        break;
      }
      case Item::vline:
        o << "<line x1=\"" << fmt(sx(it.x[0])) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(sx(it.x[0]))
          << "\" y2=\"" << fmt(top + ph) << "\" stroke=\"" << it.colour << "\" stroke-dasharray=\"5,3\"/>\n";
        break;
      case Item::hline:
        if (it.y[0] < y0 || it.y[0] > y1) break;
        o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(sy(it.y[0])) << "\" x2=\"" << fmt(left + pw)
          << "\" y2=\"" << fmt(sy(it.y[0])) << "\" stroke=\"" << it.colour << "\" stroke-dasharray=\"5,3\"/>\n";
        break;
    }
  }
  o << "</svg>\n";
  return o.str();
}

void SvgPlot::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << render();
}

void plot_bands_csv(const std::filesystem::path& csv, const std::filesystem::path& svg,
                    const std::string& title, const std::string& y_label,
                    const std::vector<double>& markers, double reference) {
  const CsvTable t = read_csv(csv);
  const auto x = t.numeric("day");
  SvgPlot p(title, "day (0 = 13 March 2020)", y_label);
  p.band(x, t.numeric("q2.5"), t.numeric("q97.5"), "#9ecae1", 0.6);
  p.band(x, t.numeric("q16"), t.numeric("q84"), "#4292c6", 0.6);
  p.line(x, t.numeric("median"), "#08306b", 2.0);
  if (std::find(t.header.begin(), t.header.end(), "truth") != t.header.end()) {
    p.line(x, t.numeric("truth"), "#d62728", 1.5, true);
  }
  for (double m : markers) p.vline(m, "#555");
  if (reference >= 0.0) p.hline(reference, "#d62728");
  p.save(svg);
}

void plot_peak_csv(const std::filesystem::path& csv, const std::filesystem::path& svg,
                   const std::vector<double>& markers) {
  const CsvTable t = read_csv(csv);
  SvgPlot p("Posterior distribution of the fatal incidence peak", "day (0 = 13 March 2020)", "probability");
  p.bars(t.numeric("day"), t.numeric("probability"), "#6a51a3");
  for (double m : markers) p.vline(m, "#555");
  p.save(svg);
}

void plot_sanity_csv(const std::filesystem::path& csv, const std::filesystem::path& svg) {
  const CsvTable t = read_csv(csv);
  const auto x = t.numeric("day");
  SvgPlot p("Deaths simulated forward from the median fatal incidence", "day (0 = 13 March 2020)", "deaths");
  p.band(x, t.numeric("lower"), t.numeric("upper"), "#bdbdbd", 0.7);
  p.line(x, t.numeric("expected"), "#252525", 1.5);
  p.points(x, t.numeric("observed"), "#d62728");
  p.save(svg);
}

void plot_pcr_csv(const std::filesystem::path& csv, const std::filesystem::path& svg) {
  const CsvTable t = read_csv(csv);
  const auto x = t.numeric("day");
  SvgPlot p("Incidence from randomized PCR testing", "day", "new infections per person per day");
  p.band(x, t.numeric("lower"), t.numeric("upper"), "#9ecae1", 0.7);
  p.line(x, t.numeric("fitted"), "#08306b", 2.0);
  if (std::find(t.header.begin(), t.header.end(), "truth") != t.header.end()) {
    p.line(x, t.numeric("truth"), "#d62728", 1.5, true);
  }
  p.save(svg);
}

}  // namespace backcalc
