#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "sitsx/image.hpp"

namespace sitsx::plot {

struct Series {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
    std::array<float, 3> color{0.12f, 0.35f, 0.70f};
};

// Small self-contained PNG charts: enough for loss curves, PR curves and
// histograms without an external plotting stack.
void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::string& xlabel, const std::string& ylabel,
                const std::vector<Series>& series, int width = 800, int height = 500);

void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::string& xlabel, const std::string& ylabel,
               const std::vector<double>& heights, double x_lo = 0.0, double x_hi = 1.0,
               int width = 800, int height = 500);

// exposed for tests
void draw_text(Image& img, int x, int y, const std::string& text,
               const std::array<float, 3>& color, int scale = 1);

}  // namespace sitsx::plot
