#pragma once

#include <cmath>
#include <stdexcept>

namespace chsd {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    /// Rotation by +90 degrees: (x, y) -> (-y, x).
    Vec2 rot90() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
    double x0, y0, x1, y1;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }

    void validate() const {
        if (!(x1 > x0) || !(y1 > y0))
            throw std::invalid_argument("Rect: degenerate or inverted rectangle");
    }
};

} // namespace chsd
