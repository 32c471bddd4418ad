// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/plot/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dethub/core/errors.hpp"

namespace dethub::plot {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 60;
constexpr int kMarginBottom = 50;
constexpr int kMarginTop = 30;
constexpr int kMarginRight = 20;

const char* kPalette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#b279a2"};

struct SvgDoc {
  std::ostringstream body;

  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "start") {
    body << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s
         << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& color = "#888",
            double width = 1.0) {
    body << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
         << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    body << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) body << x << "," << y << " ";
    body << "\"/>\n";
  }
  void save(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write plot: " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body.str() << "</svg>\n";
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void axes(SvgDoc& doc, double xmin, double xmax, double ymin, double ymax,
          const std::string& x_label, const std::string& y_label) {
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;
  doc.line(px0, py0, px1, py0, "#333");
  doc.line(px0, py0, px0, py1, "#333");
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double x = px0 + t * (px1 - px0);
    const double y = py0 - t * (py0 - py1);
    doc.line(x, py0, x, py0 + 4, "#333");
    doc.text(x, py0 + 18, fmt(xmin + t * (xmax - xmin)), 10, "middle");
    doc.line(px0 - 4, y, px0, y, "#333");
    doc.text(px0 - 8, y + 4, fmt(ymin + t * (ymax - ymin)), 10, "end");
  }
  doc.text((px0 + px1) / 2, kHeight - 12, x_label, 12, "middle");
  doc.text(14, (py0 + py1) / 2, y_label, 12, "middle");
}

}  // namespace

void plot_loss_curve(const std::vector<nlohmann::json>& metrics, const std::string& out_svg) {
  if (metrics.empty()) throw DataError("empty metrics input");
  std::vector<std::pair<double, double>> loss;
  for (const auto& m : metrics)
    if (m.contains("step") && m.contains("loss_total"))
      loss.emplace_back(m["step"].get<double>(), m["loss_total"].get<double>());
  if (loss.empty()) throw DataError("metrics carry no loss_total records");

  double xmin = loss.front().first, xmax = loss.back().first;
  double ymin = loss[0].second, ymax = loss[0].second;
  for (const auto& [x, y] : loss) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  SvgDoc doc;
  doc.text(kWidth / 2.0, 18, "training loss", 14, "middle");
  axes(doc, xmin, xmax, ymin, ymax, "step", "loss");
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;
  std::vector<std::pair<double, double>> pts;
  for (const auto& [x, y] : loss)
    pts.emplace_back(px0 + (x - xmin) / (xmax - xmin) * (px1 - px0),
                     py0 - (y - ymin) / (ymax - ymin) * (py0 - py1));
  doc.polyline(pts, kPalette[0]);
  doc.save(out_svg);
}

void plot_grouped_bars(const std::vector<std::string>& group_labels,
                       const std::vector<std::string>& series_labels,
                       const std::vector<std::vector<double>>& values, const std::string& title,
                       const std::string& y_label, const std::string& out_svg) {
  if (group_labels.empty() || series_labels.empty())
    throw DataError("empty input for bar plot");
  double ymax = 0;
  for (const auto& row : values)
    for (double v : row) ymax = std::max(ymax, v);
  if (ymax <= 0) ymax = 1;

  SvgDoc doc;
  doc.text(kWidth / 2.0, 18, title, 14, "middle");
  axes(doc, 0, static_cast<double>(group_labels.size()), 0, ymax, "", y_label);
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;
  const double group_w = (px1 - px0) / group_labels.size();
  const double bar_w = group_w * 0.8 / series_labels.size();

  for (size_t g = 0; g < group_labels.size(); ++g) {
    for (size_t s = 0; s < series_labels.size(); ++s) {
      const double v = g < values.size() && s < values[g].size() ? values[g][s] : 0.0;
      const double h = v / ymax * (py0 - py1);
      const double x = px0 + g * group_w + group_w * 0.1 + s * bar_w;
      doc.rect(x, py0 - h, bar_w * 0.92, h, kPalette[s % 6]);
    }
    doc.text(px0 + g * group_w + group_w / 2, py0 + 32, group_labels[g], 11, "middle");
  }
  for (size_t s = 0; s < series_labels.size(); ++s) {
    const double lx = px0 + 10 + 110.0 * static_cast<double>(s);
    doc.rect(lx, py1 - 14, 10, 10, kPalette[s % 6]);
    doc.text(lx + 14, py1 - 5, series_labels[s], 11);
  }
  doc.save(out_svg);
}

void plot_ablation_bars(const std::string& csv_text, const std::string& out_svg) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty ablation csv");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  int ap_col = -1;
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("ap_", 0) == 0) {
      ap_col = static_cast<int>(i);
      break;
    }
  if (ap_col < 0) throw DataError("ablation csv has no ap_ column");

  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) <= ap_col) continue;
    std::string label;
    for (size_t i = 1; i < static_cast<size_t>(ap_col) && i < cells.size(); ++i) {
      if (!label.empty()) label += " ";
      label += cells[i];
    }
    labels.push_back(label.empty() ? "row" + std::to_string(labels.size()) : label);
    values.push_back({cells[static_cast<size_t>(ap_col)].empty()
                          ? 0.0
                          : std::stod(cells[static_cast<size_t>(ap_col)])});
  }
  if (labels.empty()) throw DataError("ablation csv has no rows");
  plot_grouped_bars(labels, {header[static_cast<size_t>(ap_col)]}, values, "ablation",
                    "AP x100", out_svg);
}

}  // namespace dethub::plot
