#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace msmgp::plot {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart on shared axes; one colour per series. No text is drawn.
void line_chart(const std::filesystem::path& path, const std::vector<Series>& series, bool log_y = false,
                int width = 900, int height = 400);

/// Rows of values rendered top to bottom as a grey-scale image, 0 white, max black.
void heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& values, int cell_w = 2, int cell_h = 24);

}  // namespace msmgp::plot
