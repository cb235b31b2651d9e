#include "e2v/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace e2v::plot {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_chunk(std::ofstream& os, const char type[4],
                 const std::vector<std::uint8_t>& data) {
    std::vector<std::uint8_t> head;
    put_be32(head, static_cast<std::uint32_t>(data.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    os.write(type, 4);
    if (!data.empty()) {
        os.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size()));
    }
    std::uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) {
        crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    }
    std::vector<std::uint8_t> tail;
    put_be32(tail, crc);
    os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

// 5x7 bitmap glyphs for chart labels (digits, letters, few symbols)
const char* glyph(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case '0': return "01110100011001110101110011000101110";
        case '1': return "00100011000010000100001000010001110";
        case '2': return "01110100010000100110010001000011111";
        case '3': return "01110100010000101100000011000101110";
        case '4': return "00010001100101010010111110001000010";
        case '5': return "11111100001111000001000011000101110";
        case '6': return "01110100001000011110100011000101110";
        case '7': return "11111000010001000100010001000010000";
        case '8': return "01110100011000101110100011000101110";
        case '9': return "01110100011000101111000010000101110";
        case '.': return "00000000000000000000000000110001100";
        case '-': return "00000000000000011111000000000000000";
        case '_': return "00000000000000000000000000000011111";
        case '=': return "00000000001111100000111110000000000";
        case ',': return "00000000000000000000001100010001000";
        case '(': return "00010001000100001000010000010000010";
        case ')': return "01000001000001000010000100010001000";
        case '%': return "11001110010001000100010001001110011";
        case 'A': return "01110100011000111111100011000110001";
        case 'B': return "11110100011000111110100011000111110";
        case 'C': return "01110100011000010000100001000101110";
        case 'D': return "11110100011000110001100011000111110";
        case 'E': return "11111100001000011110100001000011111";
        case 'F': return "11111100001000011110100001000010000";
        case 'G': return "01110100011000010111100011000101111";
        case 'H': return "10001100011000111111100011000110001";
        case 'I': return "01110001000010000100001000010001110";
        case 'J': return "00111000100001000010000101001001100";
        case 'K': return "10001100101010011000101001001010001";
        case 'L': return "10000100001000010000100001000011111";
        case 'M': return "10001110111010110101100011000110001";
        case 'N': return "10001110011010110011100011000110001";
        case 'O': return "01110100011000110001100011000101110";
        case 'P': return "11110100011000111110100001000010000";
        case 'Q': return "01110100011000110001101011001001101";
        case 'R': return "11110100011000111110101001001010001";
        case 'S': return "01111100001000001110000010000111110";
        case 'T': return "11111001000010000100001000010000100";
        case 'U': return "10001100011000110001100011000101110";
        case 'V': return "10001100011000110001100010101000100";
        case 'W': return "10001100011000110101101011101110001";
        case 'X': return "10001100010101000100010101000110001";
        case 'Y': return "10001100010101000100001000010000100";
        case 'Z': return "11111000010001000100010001000011111";
        default: return nullptr;  // space and unknown draw nothing
    }
}

struct Canvas {
    int w, h;
    std::vector<std::uint8_t> rgb;
    Canvas(int width, int height) : w(width), h(height), rgb(width * height * 3, 255) {}
    void px(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
    void line(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
              std::uint8_t b) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            px(x0, y0, r, g, b);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
    void text(int x, int y, const std::string& s, std::uint8_t r = 40,
              std::uint8_t g = 40, std::uint8_t b = 40) {
        int cx = x;
        for (char c : s) {
            const char* bits = glyph(c);
            if (bits) {
                for (int gy = 0; gy < 7; ++gy) {
                    for (int gx = 0; gx < 5; ++gx) {
                        if (bits[gy * 5 + gx] == '1') px(cx + gx, y + gy, r, g, b);
                    }
                }
            }
            cx += 6;
        }
    }
};

std::string format_tick(double v) {
    char buf[32];
    if (v == 0.0) return "0";
    if (std::fabs(v) >= 0.01 && std::fabs(v) < 10000.0) {
        std::snprintf(buf, sizeof(buf), "%.4g", v);
    } else {
        std::snprintf(buf, sizeof(buf), "%.2e", v);
    }
    return buf;
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw std::invalid_argument("write_png_rgb: buffer size mismatch");
    }
    // filter byte 0 per scanline
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (width * 3 + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
        raw.insert(raw.end(), row, row + width * 3);
    }
    uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_bound);
    if (compress2(comp.data(), &comp_bound, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK) {
        throw std::runtime_error("write_png_rgb: deflate failed");
    }
    comp.resize(comp_bound);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    os.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(width));
    put_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    write_chunk(os, "IHDR", ihdr);
    write_chunk(os, "IDAT", comp);
    write_chunk(os, "IEND", {});
}

void line_chart(const std::string& path, const std::string& title,
                const std::string& x_label, const std::vector<Series>& series,
                int width, int height) {
    Canvas canvas(width, height);
    const int ml = 70, mr = 20, mt = 30, mb = 45;
    const int px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (!std::isfinite(xmin) || xmin == xmax) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (!std::isfinite(ymin) || ymin == ymax) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto to_px = [&](double x) {
        return px0 + static_cast<int>((x - xmin) / (xmax - xmin) * (px1 - px0));
    };
    auto to_py = [&](double y) {
        return py1 - static_cast<int>((y - ymin) / (ymax - ymin) * (py1 - py0));
    };

    // axes and ticks
    canvas.line(px0, py0, px0, py1, 0, 0, 0);
    canvas.line(px0, py1, px1, py1, 0, 0, 0);
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        const int tx = to_px(xv), ty = to_py(yv);
        canvas.line(tx, py1, tx, py1 + 4, 0, 0, 0);
        canvas.text(tx - 12, py1 + 8, format_tick(xv));
        canvas.line(px0 - 4, ty, px0, ty, 0, 0, 0);
        canvas.text(4, ty - 3, format_tick(yv));
    }
    canvas.text(px0, 10, title);
    canvas.text((px0 + px1) / 2 - 3 * static_cast<int>(x_label.size()), height - 14,
                x_label);

    const std::uint8_t palette[4][3] = {
        {200, 60, 60}, {60, 90, 200}, {40, 150, 80}, {150, 80, 180}};
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const auto* color = palette[si % 4];
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
            canvas.line(to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]),
                        to_py(s.y[i + 1]), color[0], color[1], color[2]);
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const int cx = to_px(s.x[i]), cy = to_py(s.y[i]);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    canvas.px(cx + dx, cy + dy, color[0], color[1], color[2]);
        }
        const int ly = py0 + 12 * static_cast<int>(si);
        canvas.line(px1 - 60, ly, px1 - 45, ly, color[0], color[1], color[2]);
        canvas.text(px1 - 40, ly - 3, s.label);
    }
    write_png_rgb(path, width, height, canvas.rgb);
}

}  // namespace e2v::plot
