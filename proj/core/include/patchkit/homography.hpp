#pragma once

#include <array>
#include <optional>

namespace patchkit {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// 3x3 projective transform acting on homogeneous 2-D points, row-major.
class Homography {
public:
    Homography() = default;  // identity
    explicit Homography(const std::array<double, 9>& m) : m_(m) {}

    static Homography translation(double tx, double ty);
    static Homography scaling(double sx, double sy);
    static Homography rotation(double radians);
    // Projective row (px, py): w = px * x + py * y + 1.
    static Homography perspective(double px, double py);

    // Returns nullopt when the point maps to the line at infinity (w <= 0).
    std::optional<Point2> apply(Point2 p) const;

    Homography inverse() const;
    bool is_identity() const;

    const std::array<double, 9>& matrix() const { return m_; }
    double operator()(int r, int c) const { return m_[static_cast<std::size_t>(r * 3 + c)]; }

    // (*this) * rhs: applies rhs first.
    friend Homography operator*(const Homography& lhs, const Homography& rhs);

private:
    std::array<double, 9> m_{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

}  // namespace patchkit
