#include "sitsx/plotting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "sitsx/errors.hpp"
#include "sitsx/image_io.hpp"

namespace sitsx::plot {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used, bit 4 leftmost
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> f = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F}},
        {'3', {0x0E, 0x11, 0x01, 0x0E, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
        {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    return f;
}

void put_pixel(Image& img, int x, int y, const std::array<float, 3>& color) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, const std::array<float, 3>& color) {
    for (int y = std::max(0, y0); y <= std::min(img.height - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(img.width - 1, x1); ++x)
            put_pixel(img, x, y, color);
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, const std::array<float, 3>& color) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        put_pixel(img, x0, y0, color);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
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

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3G", v);
    return buf;
}

struct Frame {
    int left, right, top, bottom;  // plot area in pixels
    double x_lo, x_hi, y_lo, y_hi;

    int px(double x) const {
        return left + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * (right - left)));
    }
    int py(double y) const {
        return bottom -
               static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * (bottom - top)));
    }
};

const std::array<float, 3> kBlack{0.0f, 0.0f, 0.0f};
const std::array<float, 3> kGrey{0.85f, 0.85f, 0.85f};

Frame draw_frame(Image& img, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel, double x_lo, double x_hi, double y_lo, double y_hi) {
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    if (y_hi <= y_lo) y_hi = y_lo + 1.0;
    Frame fr{60, img.width - 20, 30, img.height - 45, x_lo, x_hi, y_lo, y_hi};

    for (int k = 0; k <= 5; ++k) {
        double xv = x_lo + (x_hi - x_lo) * k / 5.0;
        double yv = y_lo + (y_hi - y_lo) * k / 5.0;
        int x = fr.px(xv), y = fr.py(yv);
        draw_line(img, x, fr.top, x, fr.bottom, kGrey);
        draw_line(img, fr.left, y, fr.right, y, kGrey);
        std::string xs = fmt_tick(xv), ys = fmt_tick(yv);
        draw_text(img, x - static_cast<int>(xs.size()) * 3, fr.bottom + 6, xs, kBlack);
        draw_text(img, fr.left - 6 - static_cast<int>(ys.size()) * 6, y - 3, ys, kBlack);
    }
    draw_line(img, fr.left, fr.top, fr.left, fr.bottom, kBlack);
    draw_line(img, fr.left, fr.bottom, fr.right, fr.bottom, kBlack);
    draw_text(img, fr.left, 12, title, kBlack);
    draw_text(img, (fr.left + fr.right) / 2 - static_cast<int>(xlabel.size()) * 3,
              img.height - 14, xlabel, kBlack);
    draw_text(img, 4, fr.top - 12, ylabel, kBlack);
    return fr;
}

Image blank(int width, int height) {
    Image img(3, height, width);
    std::fill(img.data.begin(), img.data.end(), 1.0f);
    return img;
}

}  // namespace

void draw_text(Image& img, int x, int y, const std::string& text,
               const std::array<float, 3>& color, int scale) {
    int cx = x;
    for (char raw : text) {
        char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
        auto it = font().find(ch);
        if (it == font().end()) it = font().find(' ');
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 5; ++c)
                if (it->second[r] & (1 << (4 - c)))
                    for (int sy = 0; sy < scale; ++sy)
                        for (int sx = 0; sx < scale; ++sx)
                            put_pixel(img, cx + c * scale + sx, y + r * scale + sy, color);
        cx += 6 * scale;
    }
}

void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::string& xlabel, const std::string& ylabel,
                const std::vector<Series>& series, int width, int height) {
    if (series.empty()) throw ConfigError("line_chart: no series");
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& s : series) {
        if (s.xs.size() != s.ys.size()) throw ShapeMismatch("line_chart: xs/ys length mismatch");
        for (double v : s.xs) {
            x_lo = std::min(x_lo, v);
            x_hi = std::max(x_hi, v);
        }
        for (double v : s.ys) {
            y_lo = std::min(y_lo, v);
            y_hi = std::max(y_hi, v);
        }
    }
    if (x_lo > x_hi) {
        x_lo = 0;
        x_hi = 1;
        y_lo = 0;
        y_hi = 1;
    }
    double pad = 0.05 * (y_hi - y_lo + 1e-12);
    Image img = blank(width, height);
    Frame fr = draw_frame(img, title, xlabel, ylabel, x_lo, x_hi, y_lo - pad, y_hi + pad);

    int legend_y = fr.top + 6;
    for (const auto& s : series) {
        for (std::size_t i = 1; i < s.xs.size(); ++i)
            draw_line(img, fr.px(s.xs[i - 1]), fr.py(s.ys[i - 1]), fr.px(s.xs[i]),
                      fr.py(s.ys[i]), s.color);
        if (s.xs.size() == 1) put_pixel(img, fr.px(s.xs[0]), fr.py(s.ys[0]), s.color);
        if (!s.name.empty()) {
            int lx = fr.right - 150;
            fill_rect(img, lx, legend_y, lx + 8, legend_y + 6, s.color);
            draw_text(img, lx + 12, legend_y, s.name, kBlack);
            legend_y += 12;
        }
    }
    write_image_png(path, img);
}

void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::string& xlabel, const std::string& ylabel,
               const std::vector<double>& heights, double x_lo, double x_hi, int width,
               int height) {
    if (heights.empty()) throw ConfigError("bar_chart: no bars");
    double y_hi = *std::max_element(heights.begin(), heights.end());
    if (y_hi <= 0.0) y_hi = 1.0;
    Image img = blank(width, height);
    Frame fr = draw_frame(img, title, xlabel, ylabel, x_lo, x_hi, 0.0, y_hi * 1.05);

    const std::array<float, 3> fill{0.25f, 0.45f, 0.75f};
    double bw = (x_hi - x_lo) / static_cast<double>(heights.size());
    for (std::size_t i = 0; i < heights.size(); ++i) {
        int x0 = fr.px(x_lo + bw * static_cast<double>(i)) + 1;
        int x1 = fr.px(x_lo + bw * static_cast<double>(i + 1)) - 1;
        int y0 = fr.py(heights[i]);
        if (x1 < x0) x1 = x0;
        fill_rect(img, x0, y0, x1, fr.bottom - 1, fill);
    }
    write_image_png(path, img);
}

}  // namespace sitsx::plot
