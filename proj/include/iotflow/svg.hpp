#pragma once

// Minimal static SVG charts. Output depends only on the data, so plots are
// as reproducible as the CSV files they accompany.

#include <iosfwd>
#include <string>
#include <vector>

namespace iotflow::svg {

struct Line {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Band {
  std::string name;
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<Band> bands;
  std::vector<Line> lines;
};

struct Bar {
  std::string label;
  double value = 0.0;
};

struct BarChart {
  std::string title;
  std::string y_label;
  bool log_y = false;
  std::vector<Bar> bars;
};

struct ScatterGroup {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ScatterPanel {
  std::string x_label;
  std::string y_label;
  std::vector<ScatterGroup> groups;
};

void write(std::ostream& out, const LineChart& chart);
void write(std::ostream& out, const BarChart& chart);
/// Side-by-side scatter panels sharing one legend.
void write(std::ostream& out, const std::string& title, const std::vector<ScatterPanel>& panels);

}  // namespace iotflow::svg
