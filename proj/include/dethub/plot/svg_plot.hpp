// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace dethub::plot {

// loss_total (and lr on a second implicit scale) over training steps
void plot_loss_curve(const std::vector<nlohmann::json>& metrics, const std::string& out_svg);

// one bar group per row label, one bar per series label
void plot_grouped_bars(const std::vector<std::string>& group_labels,
                       const std::vector<std::string>& series_labels,
                       const std::vector<std::vector<double>>& values, const std::string& title,
                       const std::string& y_label, const std::string& out_svg);

// bars from an ablation CSV produced by the engine (first ap_ column)
void plot_ablation_bars(const std::string& csv_text, const std::string& out_svg);

}  // namespace dethub::plot
