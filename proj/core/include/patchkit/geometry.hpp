#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace patchkit {

// Axis-aligned box in continuous pixel coordinates, corner format.
struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1 > 0.0 ? x2 - x1 : 0.0; }
    double height() const { return y2 - y1 > 0.0 ? y2 - y1 : 0.0; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x1 + x2); }
    double center_y() const { return 0.5 * (y1 + y2); }

    // x1 <= x2, y1 <= y2 and all coordinates finite.
    bool valid() const;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline constexpr const char* kPersonLabel = "person";

struct Detection {
    BoundingBox box;
    std::string label;
    double confidence = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

// Partial derivatives with respect to (x1, y1, x2, y2).
using BoxGradient = std::array<double, 4>;

// Upstream gradient of a scalar objective with respect to one candidate.
struct CandidateGrad {
    double confidence = 0.0;
    BoxGradient box{};
};

double iou(const BoundingBox& a, const BoundingBox& b);

// iou(a, b) plus its partial derivatives. Ties at overlap boundaries resolve
// to the first box's coordinate; the function is not differentiable there.
double iou_with_gradient(const BoundingBox& a, const BoundingBox& b, BoxGradient& grad_a,
                         BoxGradient& grad_b);

// Row-major n x n matrix, entry (i, j) = iou(boxes[i], boxes[j]).
std::vector<double> pairwise_iou(std::span<const BoundingBox> boxes);

BoundingBox clip_box(const BoundingBox& b, double width, double height);

}  // namespace patchkit
