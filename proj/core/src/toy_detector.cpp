#include "patchkit/toy_detector.hpp"

#include <cmath>
#include <random>

#include "patchkit/error.hpp"
#include "patchkit/nms.hpp"

namespace patchkit {

namespace {

constexpr int kC = RgbImage::kChannels;

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

struct CoreLayout {
    int row0, row1, col0, col1;               // core cells, half-open
    int inner_row0, inner_row1, inner_col0, inner_col1;
};

// Tile of `body` color with a ring/center block pattern over the core cells.
std::pair<std::vector<double>, std::vector<double>> core_tile(int rows, int cols, const CoreLayout& l,
                                                             std::array<double, 3> body,
                                                             std::array<double, 3> ring,
                                                             std::array<double, 3> center) {
    std::vector<double> tile(static_cast<std::size_t>(rows * cols * kC));
    std::vector<double> mask(tile.size(), 0.0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const bool core = r >= l.row0 && r < l.row1 && c >= l.col0 && c < l.col1;
            const bool inner = r >= l.inner_row0 && r < l.inner_row1 && c >= l.inner_col0 && c < l.inner_col1;
            for (int ch = 0; ch < kC; ++ch) {
                const std::size_t i = static_cast<std::size_t>((r * cols + c) * kC + ch);
                const auto k = static_cast<std::size_t>(ch);
                tile[i] = inner ? center[k] : core ? ring[k] : body[k];
                mask[i] = core ? 1.0 : 0.0;
            }
        }
    }
    return {tile, mask};
}

struct Integral {
    int h = 0, w = 0;
    std::vector<double> sums;  // (h+1) x (w+1) x 3

    explicit Integral(const SceneImage& img) : h(img.height()), w(img.width()) {
        const std::size_t stride = static_cast<std::size_t>(w + 1);
        sums.assign(static_cast<std::size_t>(h + 1) * stride * kC, 0.0);
        for (int y = 0; y < h; ++y) {
            std::array<double, 3> row{0.0, 0.0, 0.0};
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < kC; ++c) {
                    row[static_cast<std::size_t>(c)] += img.at(y, x, c);
                    at(y + 1, x + 1, c) = at(y, x + 1, c) + row[static_cast<std::size_t>(c)];
                }
            }
        }
    }

    std::size_t offset(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(w + 1) + static_cast<std::size_t>(x)) * kC +
               static_cast<std::size_t>(c);
    }
    double& at(int y, int x, int c) { return sums[offset(y, x, c)]; }
    double at(int y, int x, int c) const { return sums[offset(y, x, c)]; }

    double rect(int y0, int x0, int y1, int x1, int c) const {
        return at(y1, x1, c) - at(y0, x1, c) - at(y1, x0, c) + at(y0, x0, c);
    }
};

}  // namespace

std::vector<double> matched_weights(const std::vector<double>& tile, const std::vector<double>& mask,
                                    double cell_area) {
    if (tile.size() != mask.size() || tile.size() % kC != 0)
        throw InvalidArgument("tile and mask must have matching cell x channel layout");
    std::array<double, 3> mean{0, 0, 0}, count{0, 0, 0};
    for (std::size_t i = 0; i < tile.size(); ++i) {
        mean[i % kC] += mask[i] * tile[i];
        count[i % kC] += mask[i];
    }
    for (std::size_t c = 0; c < 3; ++c) mean[c] = count[c] > 0 ? mean[c] / count[c] : 0.0;

    std::vector<double> w(tile.size(), 0.0);
    double energy = 0.0;
    for (std::size_t i = 0; i < tile.size(); ++i) {
        w[i] = mask[i] * (tile[i] - mean[i % kC]);
        energy += w[i] * w[i];
    }
    if (energy <= 0.0) throw InvalidArgument("template core has no contrast");
    for (double& v : w) v /= energy * cell_area;
    return w;
}

void ToyDetectorParams::validate() const {
    if (grid_rows < 1 || grid_cols < 1 || cell_size < 1 || stride < 1)
        throw InvalidArgument("toy detector grid, cell size and stride must be positive");
    if (!(sharpness > 0.0)) throw InvalidArgument("toy detector sharpness must be positive");
    if (!(max_offset_fraction >= 0.0 && max_offset_fraction < 1.0))
        throw InvalidArgument("toy detector max_offset_fraction must be in [0, 1)");
    if (templates.empty()) throw InvalidArgument("toy detector needs at least one template");
    const std::size_t n = cell_count() * kC;
    for (const auto& t : templates) {
        if (t.cell_weights.size() != n || t.tile.size() != n)
            throw InvalidArgument("toy template '" + t.label + "' has the wrong number of cells");
    }
    for (const auto& v : offset_weights) {
        if (v.size() != n) throw InvalidArgument("toy offset head has the wrong number of weights");
    }
}

ToyDetectorParams ToyDetectorParams::standard(std::uint64_t seed) {
    ToyDetectorParams p;
    const double area = static_cast<double>(p.cell_size * p.cell_size);

    // Person analog: dark figure with a high-contrast torso block.
    const CoreLayout person_core{1, 5, 2, 6, 2, 4, 3, 5};
    auto [ptile, pmask] = core_tile(p.grid_rows, p.grid_cols, person_core, {0.35, 0.35, 0.35}, {0.1, 0.1, 0.1},
                                    {0.9, 0.9, 0.9});
    p.templates.push_back({kPersonLabel, matched_weights(ptile, pmask, area), ptile, -0.3});

    // Distractor: colored block low in the window.
    const CoreLayout other_core{4, 8, 1, 5, 5, 7, 2, 4};
    auto [dtile, dmask] = core_tile(p.grid_rows, p.grid_cols, other_core, {0.35, 0.35, 0.35}, {0.1, 0.1, 0.8},
                                    {0.9, 0.2, 0.1});
    p.templates.push_back({"distractor", matched_weights(dtile, dmask, area), dtile, -0.3});

    std::mt19937_64 rng(seed);
    const std::size_t n = p.cell_count() * kC;
    std::normal_distribution<double> gauss(0.0, 1.5 / std::sqrt(static_cast<double>(n)));
    for (std::size_t k = 0; k < 4; ++k) {
        p.offset_weights[k].resize(n);
        double sum = 0.0;
        for (double& v : p.offset_weights[k]) {
            v = gauss(rng);
            sum += v;
        }
        // A uniform gray window yields zero offset.
        p.offset_bias[k] = -0.5 * sum;
    }
    return p;
}

ToyDetector::ToyDetector(ToyDetectorParams params) : params_(std::move(params)) { params_.validate(); }

RawCandidates ToyDetector::forward(const SceneImage& image) const {
    const auto& p = params_;
    const int th = p.template_height();
    const int tw = p.template_width();
    if (image.height() < th || image.width() < tw)
        throw InvalidArgument("image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                              " is smaller than the toy detector window " + std::to_string(tw) + "x" +
                              std::to_string(th));

    const Integral integral(image);
    const std::size_t n = p.cell_count() * kC;
    const double area = static_cast<double>(p.cell_size * p.cell_size);
    std::vector<double> sums(n);

    RawCandidates out;
    for (int wy = 0; wy + th <= image.height(); wy += p.stride) {
        for (int wx = 0; wx + tw <= image.width(); wx += p.stride) {
            for (int r = 0; r < p.grid_rows; ++r) {
                for (int c = 0; c < p.grid_cols; ++c) {
                    const int y0 = wy + r * p.cell_size;
                    const int x0 = wx + c * p.cell_size;
                    for (int ch = 0; ch < kC; ++ch)
                        sums[static_cast<std::size_t>((r * p.grid_cols + c) * kC + ch)] =
                            integral.rect(y0, x0, y0 + p.cell_size, x0 + p.cell_size, ch);
                }
            }

            std::array<double, 4> u{};
            for (std::size_t k = 0; k < 4; ++k) {
                double acc = p.offset_bias[k];
                for (std::size_t i = 0; i < n; ++i) acc += p.offset_weights[k][i] * sums[i] / area;
                u[k] = acc;
            }
            const double mo = p.max_offset_fraction;
            const double cx = wx + 0.5 * tw + mo * tw * std::tanh(u[0]);
            const double cy = wy + 0.5 * th + mo * th * std::tanh(u[1]);
            const double bw = tw * (1.0 + mo * std::tanh(u[2]));
            const double bh = th * (1.0 + mo * std::tanh(u[3]));
            const BoundingBox box{cx - 0.5 * bw, cy - 0.5 * bh, cx + 0.5 * bw, cy + 0.5 * bh};

            for (std::size_t t = 0; t < p.templates.size(); ++t) {
                const ToyTemplate& tmpl = p.templates[t];
                double s = tmpl.bias;
                for (std::size_t i = 0; i < n; ++i) s += tmpl.cell_weights[i] * sums[i];
                out.detections.push_back({box, tmpl.label, sigmoid(p.sharpness * s)});
                out.origins.push_back({static_cast<int>(t), wx, wy, u});
            }
        }
    }
    return out;
}

RgbImage ToyDetector::backward(const SceneImage& image, const RawCandidates& candidates,
                               std::span<const CandidateGrad> grads) const {
    const auto& p = params_;
    if (grads.size() != candidates.detections.size())
        throw InvalidArgument("gradient count does not match candidate count");
    const int h = image.height();
    const int w = image.width();
    const int th = p.template_height();
    const int tw = p.template_width();
    const std::size_t n = p.cell_count() * kC;
    const double area = static_cast<double>(p.cell_size * p.cell_size);
    const double mo = p.max_offset_fraction;

    // Rectangle updates go into a difference array, prefix-summed at the end.
    const std::size_t stride = static_cast<std::size_t>(w + 1);
    std::vector<double> diff(static_cast<std::size_t>(h + 1) * stride * kC, 0.0);
    const auto bump = [&](int y, int x, std::size_t c, double v) {
        diff[(static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x)) * kC + c] += v;
    };

    std::vector<double> dsums(n);
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const CandidateGrad& g = grads[k];
        if (g.confidence == 0.0 && g.box[0] == 0.0 && g.box[1] == 0.0 && g.box[2] == 0.0 && g.box[3] == 0.0)
            continue;
        const CandidateOrigin& o = candidates.origins[k];
        const ToyTemplate& tmpl = p.templates[static_cast<std::size_t>(o.template_index)];
        const double c = candidates.detections[k].confidence;

        const double ds = g.confidence * c * (1.0 - c) * p.sharpness;
        const double dcx = g.box[0] + g.box[2];
        const double dcy = g.box[1] + g.box[3];
        const double dbw = 0.5 * (g.box[2] - g.box[0]);
        const double dbh = 0.5 * (g.box[3] - g.box[1]);
        const auto dtanh = [](double u) {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        };
        const std::array<double, 4> du{dcx * mo * tw * dtanh(o.offset_preactivation[0]),
                                       dcy * mo * th * dtanh(o.offset_preactivation[1]),
                                       dbw * tw * mo * dtanh(o.offset_preactivation[2]),
                                       dbh * th * mo * dtanh(o.offset_preactivation[3])};

        for (std::size_t i = 0; i < n; ++i) {
            double v = ds * tmpl.cell_weights[i];
            for (std::size_t j = 0; j < 4; ++j) v += du[j] * p.offset_weights[j][i] / area;
            dsums[i] = v;
        }
        for (int r = 0; r < p.grid_rows; ++r) {
            for (int cc = 0; cc < p.grid_cols; ++cc) {
                const int y0 = o.window_y + r * p.cell_size;
                const int x0 = o.window_x + cc * p.cell_size;
                const int y1 = y0 + p.cell_size;
                const int x1 = x0 + p.cell_size;
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    const double v = dsums[static_cast<std::size_t>(r * p.grid_cols + cc) * kC + ch];
                    if (v == 0.0) continue;
                    bump(y0, x0, ch, v);
                    bump(y0, x1, ch, -v);
                    bump(y1, x0, ch, -v);
                    bump(y1, x1, ch, v);
                }
            }
        }
    }

    RgbImage grad(h, w);
    std::vector<double> col(static_cast<std::size_t>(w) * kC, 0.0);
    for (int y = 0; y < h; ++y) {
        std::array<double, 3> row{0, 0, 0};
        for (int x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                row[ch] += diff[(static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x)) * kC + ch];
                double& acc = col[static_cast<std::size_t>(x) * kC + ch];
                acc += row[ch];
                grad.at(y, x, static_cast<int>(ch)) = acc;
            }
        }
    }
    return grad;
}

RgbImage ToyDetector::dense_template(std::size_t index) const {
    const auto& p = params_;
    const ToyTemplate& t = p.templates.at(index);
    RgbImage out(p.template_height(), p.template_width());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < kC; ++c)
                out.at(y, x, c) = t.cell_weights[static_cast<std::size_t>(
                    ((y / p.cell_size) * p.grid_cols + x / p.cell_size) * kC + c)];
    return out;
}

RgbImage ToyDetector::render_tile(std::size_t index) const {
    const auto& p = params_;
    const ToyTemplate& t = p.templates.at(index);
    RgbImage out(p.template_height(), p.template_width());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < kC; ++c)
                out.at(y, x, c) =
                    t.tile[static_cast<std::size_t>(((y / p.cell_size) * p.grid_cols + x / p.cell_size) * kC + c)];
    return out;
}

ToyEvalDetector::ToyEvalDetector(std::string name, ToyDetectorParams params, AttackThresholds thresholds)
    : name_(std::move(name)), model_(std::move(params)), thresholds_(thresholds) {}

DetectorOutput ToyEvalDetector::detect(const SceneImage& image) {
    const RawCandidates raw = model_.forward(image);
    return greedy_nms(raw.detections, thresholds_.nms, thresholds_.det);
}

}  // namespace patchkit
