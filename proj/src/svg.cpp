#include "iotflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace iotflow::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr double kPanelW = 640, kPanelH = 360, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (lo == hi) lo -= 0.5, hi += 0.5;
  }
};

// Maps data coordinates into one panel's plotting area.
struct Frame {
  double x0 = 0, y0 = 0, w = 0, h = 0;
  Range xr, yr;
  bool log_x = false, log_y = false;

  double tx(double v) const {
    const double a = log_x ? std::log10(xr.lo) : xr.lo, b = log_x ? std::log10(xr.hi) : xr.hi;
    const double t = log_x ? std::log10(v) : v;
    return x0 + (t - a) / (b - a) * w;
  }
  double ty(double v) const {
    const double a = log_y ? std::log10(yr.lo) : yr.lo, b = log_y ? std::log10(yr.hi) : yr.hi;
    const double t = log_y ? std::log10(v) : v;
    return y0 + h - (t - a) / (b - a) * h;
  }
};

Frame make_frame(double x0) {
  Frame f;
  f.x0 = x0;
  f.y0 = kTop;
  f.w = kPanelW - kLeft - kRight;
  f.h = kPanelH - kTop - kBottom;
  return f;
}

void axes(std::ostream& out, const Frame& f, const std::string& x_label, const std::string& y_label) {
  out << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.w) << "\" height=\""
      << num(f.h) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = k / 4.0;
    const double xv = f.log_x ? std::pow(10.0, std::log10(f.xr.lo) + fx * (std::log10(f.xr.hi) - std::log10(f.xr.lo)))
                              : f.xr.lo + fx * (f.xr.hi - f.xr.lo);
    const double yv = f.log_y ? std::pow(10.0, std::log10(f.yr.lo) + fx * (std::log10(f.yr.hi) - std::log10(f.yr.lo)))
                              : f.yr.lo + fx * (f.yr.hi - f.yr.lo);
    const double px = f.x0 + fx * f.w, py = f.y0 + f.h - fx * f.h;
    out << "<text x=\"" << num(px) << "\" y=\"" << num(f.y0 + f.h + 16) << "\" font-size=\"11\" text-anchor=\"middle\">"
        << tick(xv) << "</text>\n";
    out << "<text x=\"" << num(f.x0 - 6) << "\" y=\"" << num(py + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
        << tick(yv) << "</text>\n";
  }
  out << "<text x=\"" << num(f.x0 + f.w / 2) << "\" y=\"" << num(f.y0 + f.h + 36)
      << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  out << "<text transform=\"translate(" << num(f.x0 - 52) << ',' << num(f.y0 + f.h / 2)
      << ") rotate(-90)\" font-size=\"12\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

void open(std::ostream& out, double w, double h, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(w / 2) << "\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">" << escape(title)
      << "</text>\n";
}

void legend(std::ostream& out, double x, double y, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double yy = y + 16.0 * static_cast<double>(i);
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(yy - 9) << "\" width=\"10\" height=\"10\" fill=\"" << color(i)
        << "\"/>\n";
    out << "<text x=\"" << num(x + 14) << "\" y=\"" << num(yy) << "\" font-size=\"11\">" << escape(names[i])
        << "</text>\n";
  }
}

}  // namespace

void write(std::ostream& out, const LineChart& chart) {
  Frame f = make_frame(kLeft);
  f.log_x = chart.log_x;
  for (const auto& l : chart.lines) {
    for (double v : l.x)
      if (!chart.log_x || v > 0) f.xr.add(v);
    for (double v : l.y) f.yr.add(v);
  }
  for (const auto& b : chart.bands) {
    for (double v : b.x)
      if (!chart.log_x || v > 0) f.xr.add(v);
    for (double v : b.lower) f.yr.add(v);
    for (double v : b.upper) f.yr.add(v);
  }
  f.xr.settle();
  f.yr.settle();
  if (chart.log_x && f.xr.lo <= 0) f.xr.lo = f.xr.hi / 1e3;
  open(out, kPanelW, kPanelH, chart.title);
  axes(out, f, chart.x_label, chart.y_label);
  std::vector<std::string> names;
  std::size_t c = 0;
  for (const auto& b : chart.bands) {
    out << "<polygon fill=\"" << color(c) << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < b.x.size(); ++i) out << num(f.tx(b.x[i])) << ',' << num(f.ty(b.upper[i])) << ' ';
    for (std::size_t i = b.x.size(); i-- > 0;) out << num(f.tx(b.x[i])) << ',' << num(f.ty(b.lower[i])) << ' ';
    out << "\"/>\n";
    names.push_back(b.name);
    ++c;
  }
  for (const auto& l : chart.lines) {
    out << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << color(c) << "\" points=\"";
    for (std::size_t i = 0; i < l.x.size() && i < l.y.size(); ++i) {
      if (chart.log_x && l.x[i] <= 0) continue;
      out << num(f.tx(l.x[i])) << ',' << num(f.ty(l.y[i])) << ' ';
    }
    out << "\"/>\n";
    names.push_back(l.name);
    ++c;
  }
  legend(out, f.x0 + 10, f.y0 + 16, names);
  out << "</svg>\n";
}

void write(std::ostream& out, const BarChart& chart) {
  Frame f = make_frame(kLeft);
  f.log_y = chart.log_y;
  f.xr.add(0.0);
  f.xr.add(static_cast<double>(std::max<std::size_t>(chart.bars.size(), 1)));
  for (const auto& b : chart.bars)
    if (!chart.log_y || b.value > 0) f.yr.add(b.value);
  if (!chart.log_y) f.yr.add(0.0);
  f.yr.settle();
  if (chart.log_y && f.yr.lo <= 0) f.yr.lo = f.yr.hi / 1e3;
  open(out, kPanelW, kPanelH, chart.title);
  axes(out, f, "", chart.y_label);
  const double slot = f.w / f.xr.hi;
  const double base = chart.log_y ? f.y0 + f.h : f.ty(0.0);
  for (std::size_t i = 0; i < chart.bars.size(); ++i) {
    const double v = chart.bars[i].value;
    const double top = chart.log_y && v <= 0 ? base : f.ty(v);
    out << "<rect x=\"" << num(f.x0 + slot * (static_cast<double>(i) + 0.15)) << "\" y=\"" << num(std::min(top, base))
        << "\" width=\"" << num(slot * 0.7) << "\" height=\"" << num(std::fabs(base - top)) << "\" fill=\""
        << color(0) << "\"><title>" << escape(chart.bars[i].label) << "</title></rect>\n";
    if (chart.bars.size() <= 24) {
      out << "<text x=\"" << num(f.x0 + slot * (static_cast<double>(i) + 0.5)) << "\" y=\"" << num(f.y0 + f.h + 28)
          << "\" font-size=\"10\" text-anchor=\"middle\">" << escape(chart.bars[i].label) << "</text>\n";
    }
  }
  out << "</svg>\n";
}

void write(std::ostream& out, const std::string& title, const std::vector<ScatterPanel>& panels) {
  const double width = kPanelW * static_cast<double>(std::max<std::size_t>(panels.size(), 1));
  open(out, width, kPanelH, title);
  std::vector<std::string> names;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    Frame f = make_frame(kLeft + kPanelW * static_cast<double>(p));
    for (const auto& g : panels[p].groups) {
      for (double v : g.x) f.xr.add(v);
      for (double v : g.y) f.yr.add(v);
    }
    f.xr.settle();
    f.yr.settle();
    axes(out, f, panels[p].x_label, panels[p].y_label);
    for (std::size_t g = 0; g < panels[p].groups.size(); ++g) {
      const auto& grp = panels[p].groups[g];
      for (std::size_t i = 0; i < grp.x.size() && i < grp.y.size(); ++i) {
        out << "<circle cx=\"" << num(f.tx(grp.x[i])) << "\" cy=\"" << num(f.ty(grp.y[i])) << "\" r=\"2\" fill=\""
            << color(g) << "\"/>\n";
      }
      if (p == 0) names.push_back(grp.name);
    }
  }
  legend(out, kLeft + 10, kTop + 16, names);
  out << "</svg>\n";
}

}  // namespace iotflow::svg
