#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace e2v::plot {

// Minimal PNG encoder (8-bit RGB, zlib-compressed).
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Simple line chart with axes, tick labels and a legend.
void line_chart(const std::string& path, const std::string& title,
                const std::string& x_label, const std::vector<Series>& series,
                int width = 720, int height = 480);

}  // namespace e2v::plot
