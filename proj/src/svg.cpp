#include "ddmpc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ddmpc/errors.hpp"

namespace ddmpc::svg {

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 16.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 48.0;

const char* kPalette[] = {"#1f6fb2", "#d1495b", "#3a8f5d",
                          "#b07c1a", "#6f5aa8", "#3aa0a8"};

std::string num(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// Tick spacing from the 1-2-5 ladder covering span with <= 8 intervals.
double tick_step(double span) {
  if (!(span > 0.0)) return 1.0;
  double raw = span / 6.0;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * mult >= raw) return mag * mult;
  }
  return mag * 10.0;
}

std::string tick_label(double v, bool log_scale) {
  if (log_scale) {
    std::ostringstream out;
    out << "1e" << num(v);
    return out.str();
  }
  if (v == 0.0) return "0";
  double a = std::abs(v);
  std::ostringstream out;
  if (a >= 1e5 || a < 1e-3) {
    out.precision(2);
    out << std::scientific << v;
  } else {
    out.precision(6);
    out << v;
  }
  return out.str();
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series, bool log_y) {
  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -y_min;
  size_t n_max = 0;
  for (const auto& s : series) {
    n_max = std::max(n_max, s.y.size());
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      if (log_y && !(v > 0.0)) continue;
      double t = log_y ? std::log10(v) : v;
      y_min = std::min(y_min, t);
      y_max = std::max(y_max, t);
    }
  }
  if (!(y_min <= y_max)) {
    y_min = 0.0;
    y_max = 1.0;
  }
  if (y_max - y_min < 1e-12) {
    double pad = std::max(1.0, std::abs(y_max)) * 0.05;
    y_min -= pad;
    y_max += pad;
  } else {
    double pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;
  }
  double x_max = n_max > 1 ? static_cast<double>(n_max - 1) : 1.0;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * (x / x_max); };
  auto py = [&](double y) {
    return kTop + ph * (1.0 - (y - y_min) / (y_max - y_min));
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"#ffffff\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << escape(title) << "</text>\n";

  double xs = tick_step(x_max);
  for (double x = 0.0; x <= x_max + 1e-9; x += xs) {
    double gx = px(x);
    out << "<line x1=\"" << num(gx) << "\" y1=\"" << kTop << "\" x2=\""
        << num(gx) << "\" y2=\"" << kTop + ph
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << num(gx) << "\" y=\"" << kTop + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << tick_label(x, false) << "</text>\n";
  }
  double ys = tick_step(y_max - y_min);
  double y0 = std::ceil(y_min / ys) * ys;
  for (double y = y0; y <= y_max + 1e-9 * ys; y += ys) {
    double gy = py(y);
    out << "<line x1=\"" << kLeft << "\" y1=\"" << num(gy) << "\" x2=\""
        << kLeft + pw << "\" y2=\"" << num(gy)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(gy + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << tick_label(y, log_y) << "</text>\n";
  }
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw
      << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#606060\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << escape(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 "
      << kTop + ph / 2 << ")\">" << escape(y_label) << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(*kPalette))];
    std::ostringstream pts;
    bool open = false;
    for (size_t i = 0; i < s.y.size(); ++i) {
      double v = s.y[i];
      bool ok = std::isfinite(v) && (!log_y || v > 0.0);
      if (!ok) {
        if (open) {
          out << "<polyline points=\"" << pts.str()
              << "\" fill=\"none\" stroke=\"" << color
              << "\" stroke-width=\"1.6\"/>\n";
          pts.str("");
          open = false;
        }
        continue;
      }
      double t = log_y ? std::log10(v) : v;
      pts << num(px(static_cast<double>(i))) << "," << num(py(t)) << " ";
      open = true;
    }
    if (open) {
      out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
          << color << "\" stroke-width=\"1.6\"/>\n";
    }
    double lx = kLeft + pw - 140.0;
    double ly = kTop + 14.0 + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\""
        << lx + 22 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void save(const std::string& path, const std::string& svg_text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << svg_text;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace ddmpc::svg
