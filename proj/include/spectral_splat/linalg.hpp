#pragma once

// Small fixed-size linear algebra for 2D/3D covariance work. Row-major,
// double precision throughout; covariances are stored upper-triangle only.

#include <array>
#include <cmath>
#include <optional>

namespace sgs {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double c) const { return {x * c, y * c}; }
    Vec2& operator+=(const Vec2& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double c) const { return {x * c, y * c, z * c}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

struct Mat2 {
    // m[r][c]
    std::array<std::array<double, 2>, 2> m{{{1.0, 0.0}, {0.0, 1.0}}};

    static Mat2 identity() { return {}; }
    Vec2 col(int c) const { return {m[0][c], m[1][c]}; }
};

struct Mat3 {
    std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

    static Mat3 identity() { return {}; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
                r.m[i][j] = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }

    Vec3 col(int c) const { return {m[0][c], m[1][c], m[2][c]}; }
};

// 2x3 matrix (screen-space projection Jacobians).
struct Mat23 {
    std::array<std::array<double, 3>, 2> m{{{0, 0, 0}, {0, 0, 0}}};

    Vec2 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z};
    }
    Mat23 operator*(double c) const {
        Mat23 r = *this;
        for (auto& row : r.m)
            for (auto& e : row) e *= c;
        return r;
    }
};

// 3x2 matrix (right inverses of Jacobians).
struct Mat32 {
    std::array<std::array<double, 2>, 3> m{{{0, 0}, {0, 0}, {0, 0}}};
};

// Upper-triangle symmetric 2x2: [[xx, xy], [xy, yy]].
struct SymMat2 {
    double xx = 0.0, xy = 0.0, yy = 0.0;

    static SymMat2 identity() { return {1.0, 0.0, 1.0}; }
    static SymMat2 diagonal(double a, double b) { return {a, 0.0, b}; }

    double trace() const { return xx + yy; }
    double det() const { return xx * yy - xy * xy; }
    double max_abs() const { return std::max({std::abs(xx), std::abs(xy), std::abs(yy)}); }
    bool finite() const { return std::isfinite(xx) && std::isfinite(xy) && std::isfinite(yy); }

    SymMat2 operator+(const SymMat2& o) const { return {xx + o.xx, xy + o.xy, yy + o.yy}; }
    SymMat2 operator-(const SymMat2& o) const { return {xx - o.xx, xy - o.xy, yy - o.yy}; }
    SymMat2 operator*(double c) const { return {xx * c, xy * c, yy * c}; }
    SymMat2 plus_scaled_identity(double s) const { return {xx + s, xy, yy + s}; }

    Vec2 operator*(const Vec2& v) const {
        return {xx * v.x + xy * v.y, xy * v.x + yy * v.y};
    }

    std::optional<SymMat2> inverse() const {
        const double d = det();
        if (d == 0.0 || !std::isfinite(d)) return std::nullopt;
        return SymMat2{yy / d, -xy / d, xx / d};
    }
};

// Upper-triangle symmetric 3x3.
struct SymMat3 {
    double xx = 0.0, xy = 0.0, xz = 0.0, yy = 0.0, yz = 0.0, zz = 0.0;

    static SymMat3 identity() { return {1, 0, 0, 1, 0, 1}; }
    static SymMat3 diagonal(double a, double b, double c) { return {a, 0, 0, b, 0, c}; }
    static SymMat3 diagonal(const Vec3& d) { return {d.x, 0, 0, d.y, 0, d.z}; }

    static SymMat3 from_full(const Mat3& a) {
        return {a.m[0][0], 0.5 * (a.m[0][1] + a.m[1][0]), 0.5 * (a.m[0][2] + a.m[2][0]),
                a.m[1][1], 0.5 * (a.m[1][2] + a.m[2][1]), a.m[2][2]};
    }

    Mat3 full() const {
        Mat3 a;
        a.m = {{{xx, xy, xz}, {xy, yy, yz}, {xz, yz, zz}}};
        return a;
    }

    double trace() const { return xx + yy + zz; }
    double det() const {
        return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz);
    }
    double max_abs() const {
        return std::max({std::abs(xx), std::abs(xy), std::abs(xz),
                         std::abs(yy), std::abs(yz), std::abs(zz)});
    }
    bool finite() const {
        return std::isfinite(xx) && std::isfinite(xy) && std::isfinite(xz) &&
               std::isfinite(yy) && std::isfinite(yz) && std::isfinite(zz);
    }

    SymMat3 operator+(const SymMat3& o) const {
        return {xx + o.xx, xy + o.xy, xz + o.xz, yy + o.yy, yz + o.yz, zz + o.zz};
    }
    SymMat3 operator-(const SymMat3& o) const {
        return {xx - o.xx, xy - o.xy, xz - o.xz, yy - o.yy, yz - o.yz, zz - o.zz};
    }
    SymMat3 operator*(double c) const {
        return {xx * c, xy * c, xz * c, yy * c, yz * c, zz * c};
    }
    SymMat3 plus_scaled_identity(double s) const {
        return {xx + s, xy, xz, yy + s, yz, zz + s};
    }

    Vec3 operator*(const Vec3& v) const {
        return {xx * v.x + xy * v.y + xz * v.z,
                xy * v.x + yy * v.y + yz * v.z,
                xz * v.x + yz * v.y + zz * v.z};
    }
};

// Unit quaternion (w, x, y, z) convention; stores rotations of Gaussian frames.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        const double n = norm();
        if (n == 0.0) return {1.0, 0.0, 0.0, 0.0};
        return {w / n, x / n, y / n, z / n};
    }

    // Rotation matrix of the normalized quaternion.
    Mat3 rotation() const {
        const Quat q = normalized();
        Mat3 r;
        r.m = {{{1 - 2 * (q.y * q.y + q.z * q.z), 2 * (q.x * q.y - q.w * q.z), 2 * (q.x * q.z + q.w * q.y)},
                {2 * (q.x * q.y + q.w * q.z), 1 - 2 * (q.x * q.x + q.z * q.z), 2 * (q.y * q.z - q.w * q.x)},
                {2 * (q.x * q.z - q.w * q.y), 2 * (q.y * q.z + q.w * q.x), 1 - 2 * (q.x * q.x + q.y * q.y)}}};
        return r;
    }

    static Quat axis_angle(const Vec3& axis, double angle) {
        const double n = axis.norm();
        if (n == 0.0) return {};
        const double h = 0.5 * angle;
        const double s = std::sin(h) / n;
        return {std::cos(h), axis.x * s, axis.y * s, axis.z * s};
    }
};

// A * S * A^T for symmetric S.
inline SymMat3 congruence(const Mat3& a, const SymMat3& s) {
    const Mat3 sf = s.full();
    const Mat3 t = a * sf * a.transposed();
    return SymMat3::from_full(t);
}

// J * S * J^T -> 2x2 for 2x3 J and symmetric 3x3 S.
inline SymMat2 congruence(const Mat23& j, const SymMat3& s) {
    const Mat3 sf = s.full();
    // rows of J*S
    double js[2][3];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            js[r][c] = j.m[r][0] * sf.m[0][c] + j.m[r][1] * sf.m[1][c] + j.m[r][2] * sf.m[2][c];
    SymMat2 out;
    out.xx = js[0][0] * j.m[0][0] + js[0][1] * j.m[0][1] + js[0][2] * j.m[0][2];
    out.xy = js[0][0] * j.m[1][0] + js[0][1] * j.m[1][1] + js[0][2] * j.m[1][2];
    out.yy = js[1][0] * j.m[1][0] + js[1][1] * j.m[1][1] + js[1][2] * j.m[1][2];
    return out;
}

// Lower-triangular Cholesky factor; nullopt when not positive definite.
inline std::optional<Mat3> cholesky(const SymMat3& s) {
    Mat3 l;
    l.m = {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
    const double a = s.xx;
    if (a <= 0.0) return std::nullopt;
    l.m[0][0] = std::sqrt(a);
    l.m[1][0] = s.xy / l.m[0][0];
    l.m[2][0] = s.xz / l.m[0][0];
    const double d1 = s.yy - l.m[1][0] * l.m[1][0];
    if (d1 <= 0.0) return std::nullopt;
    l.m[1][1] = std::sqrt(d1);
    l.m[2][1] = (s.yz - l.m[2][0] * l.m[1][0]) / l.m[1][1];
    const double d2 = s.zz - l.m[2][0] * l.m[2][0] - l.m[2][1] * l.m[2][1];
    if (d2 <= 0.0) return std::nullopt;
    l.m[2][2] = std::sqrt(d2);
    return l;
}

// Moore-Penrose right inverse J^T (J J^T)^{-1} of a full-row-rank 2x3 matrix.
inline std::optional<Mat32> right_inverse(const Mat23& j) {
    SymMat2 jjt;
    jjt.xx = j.m[0][0] * j.m[0][0] + j.m[0][1] * j.m[0][1] + j.m[0][2] * j.m[0][2];
    jjt.xy = j.m[0][0] * j.m[1][0] + j.m[0][1] * j.m[1][1] + j.m[0][2] * j.m[1][2];
    jjt.yy = j.m[1][0] * j.m[1][0] + j.m[1][1] * j.m[1][1] + j.m[1][2] * j.m[1][2];
    const auto inv = jjt.inverse();
    if (!inv) return std::nullopt;
    Mat32 r;
    for (int i = 0; i < 3; ++i) {
        const double a = j.m[0][i], b = j.m[1][i];
        r.m[i][0] = a * inv->xx + b * inv->xy;
        r.m[i][1] = a * inv->xy + b * inv->yy;
    }
    return r;
}

// (J_test * P) * s * (J_test * P)^T for a 3x2 right inverse P: 2x2 symmetric.
inline SymMat2 scaled_product_kernel(const Mat23& j_test, const Mat32& p, double s) {
    double q[2][2];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            q[r][c] = j_test.m[r][0] * p.m[0][c] + j_test.m[r][1] * p.m[1][c] + j_test.m[r][2] * p.m[2][c];
    SymMat2 out;
    out.xx = s * (q[0][0] * q[0][0] + q[0][1] * q[0][1]);
    out.xy = s * (q[0][0] * q[1][0] + q[0][1] * q[1][1]);
    out.yy = s * (q[1][0] * q[1][0] + q[1][1] * q[1][1]);
    return out;
}

} // namespace sgs
