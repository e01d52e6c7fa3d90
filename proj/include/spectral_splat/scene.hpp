#pragma once

// Gaussian primitive, camera model, and the world -> screen projection
// pipeline: Sigma = R S S^T R^T composition, rigid camera transform, local
// affine Jacobian, and perspective splatting.

#include <cmath>
#include <utility>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/linalg.hpp"
#include "spectral_splat/spectral.hpp"

namespace sgs {

// Gaussians closer than this to the camera plane are culled, not errored.
inline constexpr double kNearPlane = 0.01;

// Frustum culling margin in pixels around the image rectangle.
inline constexpr double kCullMarginPx = 16.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct Gaussian3D {
    Vec3 position;               // world units
    Quat rotation;               // unit quaternion
    Vec3 log_scales;             // ln of per-axis stddevs, world units
    double opacity_logit = 0.0;  // o = sigmoid(opacity_logit)
    Vec3 color;                  // RGB in [0,1], SH degree 0 only
    double nu_hat = 0.0;         // max sampling rate (px per world unit); 0 = unset

    double opacity() const { return sigmoid(opacity_logit); }
};

using Scene = std::vector<Gaussian3D>;

struct CameraView {
    // Rigid world->camera transform: x_cam = rot * x_world + trans.
    // Camera convention: x right, y down, z forward (positive depth).
    Mat3 rot;
    Vec3 trans;
    double fx = 1.0, fy = 1.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
    int width = 0, height = 0;

    Vec3 to_camera(const Vec3& p) const { return rot * p + trans; }

    Vec3 center() const {
        // eye = -R^T t
        const Mat3 rt = rot.transposed();
        const Vec3 e = rt * trans;
        return {-e.x, -e.y, -e.z};
    }

    static CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                              double fx, double fy, int width, int height) {
        const Vec3 fwd = target - eye;
        const double fn = fwd.norm();
        if (fn == 0.0) throw DomainError("look_at: eye equals target");
        const Vec3 f{fwd.x / fn, fwd.y / fn, fwd.z / fn};
        Vec3 r{f.y * up.z - f.z * up.y, f.z * up.x - f.x * up.z, f.x * up.y - f.y * up.x};
        const double rn = r.norm();
        if (rn == 0.0) throw DomainError("look_at: up parallel to view direction");
        r = {r.x / rn, r.y / rn, r.z / rn};
        const Vec3 d{f.y * r.z - f.z * r.y, f.z * r.x - f.x * r.z, f.x * r.y - f.y * r.x};

        CameraView v;
        v.rot.m = {{{r.x, r.y, r.z}, {d.x, d.y, d.z}, {f.x, f.y, f.z}}};
        const Vec3 re = v.rot * eye;
        v.trans = {-re.x, -re.y, -re.z};
        v.fx = fx;
        v.fy = fy;
        v.cx = 0.5 * width;
        v.cy = 0.5 * height;
        v.width = width;
        v.height = height;
        return v;
    }
};

struct Splat2D {
    Vec2 mu_proj;        // pixels
    SymMat2 sigma_proj;  // pixels^2
    double depth = 0.0;  // camera z
    double opacity = 0.0;
    Vec3 color;
    int source_index = -1;
};

// Sigma = R diag(exp(2*log_scales)) R^T. Quaternion re-normalized internally.
inline SymMat3 compose_covariance(const Quat& rotation, const Vec3& log_scales) {
    const Mat3 r = rotation.rotation();
    const SymMat3 d = SymMat3::diagonal(std::exp(2.0 * log_scales.x),
                                        std::exp(2.0 * log_scales.y),
                                        std::exp(2.0 * log_scales.z));
    return congruence(r, d);
}

inline SymMat3 covariance_of(const Gaussian3D& g) {
    return compose_covariance(g.rotation, g.log_scales);
}

// Rigid transform into camera space: mu' = R mu + t, Sigma' = R Sigma R^T.
inline std::pair<Vec3, SymMat3> world_to_camera(const Gaussian3D& g, const CameraView& v) {
    const SymMat3 sigma = covariance_of(g);
    return {v.to_camera(g.position), congruence(v.rot, sigma)};
}

// Local affine approximation of the perspective projection at mu':
// J = [[fx/z, 0, -fx*x/z^2], [0, fy/z, -fy*y/z^2]].
inline Mat23 projection_jacobian(const Vec3& mu_cam, double fx, double fy) {
    const double z = mu_cam.z;
    if (z <= kNearPlane) throw BehindCameraError("projection_jacobian: depth at or behind near plane");
    Mat23 j;
    j.m[0][0] = fx / z;
    j.m[0][2] = -fx * mu_cam.x / (z * z);
    j.m[1][1] = fy / z;
    j.m[1][2] = -fy * mu_cam.y / (z * z);
    return j;
}

// Full projection of one Gaussian into a view: perspective position,
// Sigma_proj = J Sigma' J^T, recorded depth.
inline Splat2D project(const Gaussian3D& g, const CameraView& v, int source_index = -1) {
    const auto [mu_cam, sigma_cam] = world_to_camera(g, v);
    if (mu_cam.z <= kNearPlane) throw BehindCameraError("project: gaussian behind near plane");
    const Mat23 j = projection_jacobian(mu_cam, v.fx, v.fy);

    Splat2D s;
    s.mu_proj = {v.fx * mu_cam.x / mu_cam.z + v.cx, v.fy * mu_cam.y / mu_cam.z + v.cy};
    s.sigma_proj = congruence(j, sigma_cam);
    s.depth = mu_cam.z;
    s.opacity = g.opacity();
    s.color = g.color;
    s.source_index = source_index;
    return s;
}

// True when the splat's 3-sigma extent overlaps the image rectangle expanded
// by the culling margin. The ellipse's tight AABB is [±3√Σxx] x [±3√Σyy].
inline bool in_frustum(const Splat2D& s, int width, int height,
                       double margin = kCullMarginPx) {
    const double rx = 3.0 * std::sqrt(std::max(s.sigma_proj.xx, 0.0));
    const double ry = 3.0 * std::sqrt(std::max(s.sigma_proj.yy, 0.0));
    return s.mu_proj.x + rx >= -margin && s.mu_proj.x - rx <= width + margin &&
           s.mu_proj.y + ry >= -margin && s.mu_proj.y - ry <= height + margin;
}

// Radius of the positions' bounding sphere around their centroid. Used to
// normalize densification thresholds.
inline double scene_extent(const Scene& scene) {
    if (scene.empty()) return 0.0;
    Vec3 c;
    for (const auto& g : scene) c = c + g.position;
    c = c * (1.0 / static_cast<double>(scene.size()));
    double r2 = 0.0;
    for (const auto& g : scene) {
        const Vec3 d = g.position - c;
        r2 = std::max(r2, d.dot(d));
    }
    return std::sqrt(r2);
}

} // namespace sgs
