#include "cli/plot.hpp"

#include <algorithm>
#include <cmath>

namespace patchkit::cli {

namespace {

constexpr int kMargin = 40;
const Color kAxis{0.2, 0.2, 0.2};
const Color kGrid{0.88, 0.88, 0.88};
const Color kMissing{0.7, 0.7, 0.7};

void put(RgbImage& img, int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
    for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[static_cast<std::size_t>(k)];
}

void fill(RgbImage& img, int x0, int y0, int x1, int y1, const Color& c) {
    for (int y = std::max(0, y0); y < std::min(img.height(), y1); ++y)
        for (int x = std::max(0, x0); x < std::min(img.width(), x1); ++x) put(img, x, y, c);
}

void line(RgbImage& img, int x0, int y0, int x1, int y1, const Color& c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(img, x0, y0, c);
        put(img, x0, y0 + 1, c);
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

void frame(RgbImage& img) {
    const int w = img.width(), h = img.height();
    for (int i = 1; i < 5; ++i) {
        const int y = kMargin + (h - 2 * kMargin) * i / 5;
        line(img, kMargin, y, w - kMargin, y, kGrid);
    }
    line(img, kMargin, kMargin, kMargin, h - kMargin, kAxis);
    line(img, kMargin, h - kMargin, w - kMargin, h - kMargin, kAxis);
}

}  // namespace

Color palette(std::size_t i) {
    static const Color colors[] = {{0.12, 0.47, 0.71}, {1.0, 0.5, 0.05}, {0.17, 0.63, 0.17},
                                   {0.84, 0.15, 0.16}, {0.58, 0.4, 0.74}, {0.55, 0.34, 0.29}};
    return colors[i % std::size(colors)];
}

RgbImage line_plot(const std::vector<std::vector<double>>& series, int width, int height) {
    RgbImage img(height, width, 1.0);
    frame(img);
    double lo = 0.0, hi = 0.0;
    std::size_t n = 0;
    bool any = false;
    for (const auto& s : series) {
        n = std::max(n, s.size());
        for (double v : s) {
            if (!std::isfinite(v)) continue;
            lo = any ? std::min(lo, v) : v;
            hi = any ? std::max(hi, v) : v;
            any = true;
        }
    }
    if (!any || n == 0) return img;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double pw = width - 2 * kMargin, ph = height - 2 * kMargin;
    const auto px = [&](std::size_t i) { return kMargin + static_cast<int>(n > 1 ? pw * i / (n - 1) : pw / 2); };
    const auto py = [&](double v) { return height - kMargin - static_cast<int>(std::lround(ph * (v - lo) / (hi - lo))); };
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        for (std::size_t i = 1; i < s.size(); ++i)
            if (std::isfinite(s[i - 1]) && std::isfinite(s[i]))
                line(img, px(i - 1), py(s[i - 1]), px(i), py(s[i]), palette(k));
    }
    return img;
}

RgbImage bar_plot(const std::vector<std::optional<double>>& values, double y_max, int width, int height) {
    RgbImage img(height, width, 1.0);
    frame(img);
    if (values.empty() || !(y_max > 0.0)) return img;
    const double slot = static_cast<double>(width - 2 * kMargin) / static_cast<double>(values.size());
    const double ph = height - 2 * kMargin;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int x0 = kMargin + static_cast<int>(slot * (i + 0.15));
        const int x1 = kMargin + static_cast<int>(slot * (i + 0.85));
        const int base = height - kMargin;
        if (!values[i]) {
            fill(img, x0, base - 4, x1, base, kMissing);
            continue;
        }
        const double v = std::clamp(*values[i], 0.0, y_max);
        fill(img, x0, base - static_cast<int>(std::lround(ph * v / y_max)), x1, base, palette(i));
    }
    return img;
}

RgbImage heatmap(const std::vector<std::vector<std::optional<double>>>& cells, double v_max, int cell_px) {
    const int rows = static_cast<int>(cells.size());
    const int cols = rows ? static_cast<int>(cells[0].size()) : 0;
    RgbImage img(std::max(1, rows * cell_px), std::max(1, cols * cell_px), 1.0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const auto& v = cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            Color color = kMissing;
            if (v) {
                const double t = v_max > 0.0 ? std::clamp(*v / v_max, 0.0, 1.0) : 0.0;
                color = {t, 0.2, 1.0 - t};
            }
            fill(img, c * cell_px + 1, r * cell_px + 1, (c + 1) * cell_px - 1, (r + 1) * cell_px - 1, color);
        }
    }
    return img;
}

}  // namespace patchkit::cli
