#include "patchkit/homography.hpp"

#include <cmath>

#include "patchkit/error.hpp"

namespace patchkit {

Homography Homography::translation(double tx, double ty) { return Homography({1, 0, tx, 0, 1, ty, 0, 0, 1}); }

Homography Homography::scaling(double sx, double sy) { return Homography({sx, 0, 0, 0, sy, 0, 0, 0, 1}); }

Homography Homography::rotation(double radians) {
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    return Homography({c, -s, 0, s, c, 0, 0, 0, 1});
}

Homography Homography::perspective(double px, double py) { return Homography({1, 0, 0, 0, 1, 0, px, py, 1}); }

std::optional<Point2> Homography::apply(Point2 p) const {
    const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
    if (!(w > 0.0)) return std::nullopt;
    return Point2{(m_[0] * p.x + m_[1] * p.y + m_[2]) / w, (m_[3] * p.x + m_[4] * p.y + m_[5]) / w};
}

Homography Homography::inverse() const {
    const auto& m = m_;
    const double c00 = m[4] * m[8] - m[5] * m[7];
    const double c01 = m[5] * m[6] - m[3] * m[8];
    const double c02 = m[3] * m[7] - m[4] * m[6];
    const double det = m[0] * c00 + m[1] * c01 + m[2] * c02;
    if (std::abs(det) < 1e-300) throw InvalidArgument("homography is singular");
    const double inv = 1.0 / det;
    return Homography({c00 * inv, (m[2] * m[7] - m[1] * m[8]) * inv, (m[1] * m[5] - m[2] * m[4]) * inv,
                       c01 * inv, (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
                       c02 * inv, (m[1] * m[6] - m[0] * m[7]) * inv, (m[0] * m[4] - m[1] * m[3]) * inv});
}

bool Homography::is_identity() const { return m_ == Homography().m_; }

Homography operator*(const Homography& lhs, const Homography& rhs) {
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += lhs(r, k) * rhs(k, c);
            out[static_cast<std::size_t>(r * 3 + c)] = s;
        }
    return Homography(out);
}

}  // namespace patchkit
