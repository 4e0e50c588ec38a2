#pragma once

#include "smile/data/phantom.hpp"
#include "smile/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace smile::report {

/// Writes the images side by side as one binary PGM, separated by 2-pixel
/// white bars. Values are clamped to [0,1].
void write_panel(const std::filesystem::path& path, const std::vector<data::Image>& tiles);

struct Series {
  std::string name;
  std::vector<double> values;  // NaN entries are skipped
};

/// Line plot as SVG: one polyline per series over x = 1..n, with legend.
std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

/// Per-phase loss curves and the validation metric curve. Returns the files
/// written.
std::vector<std::filesystem::path> write_curves(const std::filesystem::path& dir,
                                                const std::vector<training::EpochRecord>& history);

}  // namespace smile::report
