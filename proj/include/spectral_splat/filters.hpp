#pragma once

// Screen/object-space low-pass filters: EWA dilation, 3D smoothing, 2D Mip
// (determinant-compensated opacity), and the view-consistent filter whose
// kernel scales with the per-view sampling rate f/depth. Includes the exact
// blur-kernel path built from projection Jacobians for the property suite.

#include <algorithm>
#include <cmath>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/linalg.hpp"
#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"

namespace sgs {

inline constexpr double kEwaDefaultS = 0.3;   // px^2
inline constexpr double kMipDefaultS = 0.1;   // px^2
inline constexpr double kVcDefaultS0 = 0.1;   // base kernel of the view-consistent filter

enum class FilterKind { None, EWA, Mip, ViewConsistent };

struct FilterMode {
    FilterKind kind = FilterKind::EWA;
    double s = kEwaDefaultS;    // fixed kernel for EWA/Mip, px^2
    double s0 = kVcDefaultS0;   // view-consistent kernel scale

    static FilterMode none() { return {FilterKind::None, 0.0, 0.0}; }
    static FilterMode ewa(double s = kEwaDefaultS) { return {FilterKind::EWA, s, 0.0}; }
    static FilterMode mip(double s = kMipDefaultS) { return {FilterKind::Mip, s, 0.0}; }
    static FilterMode view_consistent(double s0 = kVcDefaultS0) {
        return {FilterKind::ViewConsistent, 0.0, s0};
    }
};

struct FilteredSplat {
    SymMat2 sigma_filter;
    double o_filter = 0.0;
    double s_eff = 0.0;  // isotropic kernel actually applied (diagnostic)
};

namespace detail {

// sqrt(|Sigma_proj| / |Sigma_filter|) clamped into [0, 1].
inline double det_opacity_factor(const SymMat2& sigma_proj, const SymMat2& sigma_filter) {
    const double dp = std::max(sigma_proj.det(), 0.0);
    const double df = sigma_filter.det();
    if (!(df > 0.0)) return 0.0;
    return std::min(std::sqrt(dp / df), 1.0);
}

} // namespace detail

// Eq.-2-style dilation: Sigma + s I, opacity untouched.
inline FilteredSplat ewa_filter(const Splat2D& splat, double s) {
    if (!(s > 0.0)) throw DomainError("ewa_filter: s must be > 0");
    return {splat.sigma_proj.plus_scaled_identity(s), splat.opacity, s};
}

// Mip-style dilation: same covariance as EWA, opacity scaled by the
// determinant ratio so the filtered splat keeps its integrated energy.
inline FilteredSplat mip_filter_2d(const Splat2D& splat, double s) {
    if (!(s > 0.0)) throw DomainError("mip_filter_2d: s must be > 0");
    const SymMat2 sf = splat.sigma_proj.plus_scaled_identity(s);
    return {sf, splat.opacity * detail::det_opacity_factor(splat.sigma_proj, sf), s};
}

// Object-space smoothing: Sigma <- Sigma + (s/nu_hat^2) I, realized on the
// log-scales in the Gaussian's own eigenbasis, with the matching determinant
// opacity compensation baked into the logit.
inline Gaussian3D smoothing_filter_3d(const Gaussian3D& g, double s) {
    if (!(s > 0.0)) throw DomainError("smoothing_filter_3d: s must be > 0");
    if (!(g.nu_hat > 0.0))
        throw NoVisibilityError("smoothing_filter_3d: max sampling rate unset");
    const double c = s / (g.nu_hat * g.nu_hat);

    Gaussian3D out = g;
    double det_ratio = 1.0;
    for (int i = 0; i < 3; ++i) {
        const double var = std::exp(2.0 * g.log_scales[i]);
        det_ratio *= var / (var + c);
        out.log_scales[i] = 0.5 * std::log(var + c);
    }
    const double o = g.opacity() * std::sqrt(det_ratio);
    out.opacity_logit = logit(std::clamp(o, 1e-12, 1.0 - 1e-12));
    return out;
}

// Exact blur kernel between a training view and a test view:
// (J_test J_train^+) s I (J_test J_train^+)^T - s I. May be indefinite when
// the test view samples less densely than the training view.
inline SymMat2 blur_kernel(const Mat23& j_test, const Mat32& j_train_pinv, double s) {
    const SymMat2 outer = scaled_product_kernel(j_test, j_train_pinv, s);
    return outer.plus_scaled_identity(-s);
}

inline SymMat2 blur_kernel(const Mat23& j_test, const Mat23& j_train, double s) {
    const auto pinv = right_inverse(j_train);
    if (!pinv) throw RankDeficientError("blur_kernel: training Jacobian rank-deficient");
    return blur_kernel(j_test, *pinv, s);
}

// View-consistent filter, kernel-function form: s_eff = s0 * (f/depth)^2,
// determinant-compensated opacity. ref_ratio is retained for diagnostics of
// the exact-path comparison and does not alter the kernel here.
inline FilteredSplat view_consistent_filter(const Splat2D& splat, double s0, double f,
                                            double ref_ratio = 0.0) {
    (void)ref_ratio;
    if (!(s0 > 0.0)) throw DomainError("view_consistent_filter: s0 must be > 0");
    if (!(splat.depth > kNearPlane))
        throw BehindCameraError("view_consistent_filter: depth at or behind near plane");
    const double ratio = f / splat.depth;
    const double s_eff = s0 * ratio * ratio;
    const SymMat2 sf = splat.sigma_proj.plus_scaled_identity(s_eff);
    return {sf, splat.opacity * detail::det_opacity_factor(splat.sigma_proj, sf), s_eff};
}

// Pipeline variant: when the view samples less densely than the densest
// training view (f/depth < nu_hat) the adaptive kernel is clamped to the
// training-view value, reproducing fixed-kernel behavior below the training
// sampling rate.
inline FilteredSplat view_consistent_filter_clamped(const Splat2D& splat, double s0, double f,
                                                    double nu_hat) {
    if (!(s0 > 0.0)) throw DomainError("view_consistent_filter: s0 must be > 0");
    if (!(splat.depth > kNearPlane))
        throw BehindCameraError("view_consistent_filter: depth at or behind near plane");
    const double ratio = std::max(f / splat.depth, nu_hat > 0.0 ? nu_hat : 0.0);
    const double s_eff = s0 * ratio * ratio;
    const SymMat2 sf = splat.sigma_proj.plus_scaled_identity(s_eff);
    return {sf, splat.opacity * detail::det_opacity_factor(splat.sigma_proj, sf), s_eff};
}

// Exact Eq.-18-style path: the anisotropic blur kernel is added after being
// clamped to its PSD part, with the blur-augmented determinant in the
// opacity factor.
inline FilteredSplat view_consistent_filter_exact(const Splat2D& splat, const Mat23& j_test,
                                                  const Mat23& j_train, double s) {
    const SymMat2 raw = blur_kernel(j_test, j_train, s);
    // PSD projection: eig_sym clamps negative eigenvalues (the zoom-out
    // direction), so rebuilding from its spectrum drops the indefinite part.
    const Spectrum2 sp = eig_sym(raw);
    const Vec2 e0 = sp.basis.col(0);
    const Vec2 e1 = sp.basis.col(1);
    SymMat2 blur;
    blur.xx = sp.lambda[0] * e0.x * e0.x + sp.lambda[1] * e1.x * e1.x;
    blur.xy = sp.lambda[0] * e0.x * e0.y + sp.lambda[1] * e1.x * e1.y;
    blur.yy = sp.lambda[0] * e0.y * e0.y + sp.lambda[1] * e1.y * e1.y;
    const SymMat2 sf = splat.sigma_proj + blur;
    const double trace_kernel = 0.5 * blur.trace();
    return {sf, splat.opacity * detail::det_opacity_factor(splat.sigma_proj, sf), trace_kernel};
}

// nu_hat = max over views that can see the Gaussian of fx/depth.
inline Gaussian3D update_max_sampling_rate(const Gaussian3D& g,
                                           const std::vector<CameraView>& views) {
    Gaussian3D out = g;
    double best = 0.0;
    for (const auto& v : views) {
        const Vec3 mu_cam = v.to_camera(g.position);
        if (mu_cam.z <= kNearPlane) continue;
        Splat2D s;
        try {
            s = project(g, v);
        } catch (const BehindCameraError&) {
            continue;
        }
        if (!in_frustum(s, v.width, v.height)) continue;
        best = std::max(best, v.fx / mu_cam.z);
    }
    out.nu_hat = best;  // 0 = unset when invisible everywhere
    return out;
}

inline void update_max_sampling_rates(Scene& scene, const std::vector<CameraView>& views) {
    for (auto& g : scene) g = update_max_sampling_rate(g, views);
}

// Renderer-facing dispatch.
inline FilteredSplat apply_filter(const Splat2D& splat, const FilterMode& mode, double fx,
                                  double nu_hat) {
    switch (mode.kind) {
        case FilterKind::None:
            return {splat.sigma_proj, splat.opacity, 0.0};
        case FilterKind::EWA:
            return ewa_filter(splat, mode.s);
        case FilterKind::Mip:
            return mip_filter_2d(splat, mode.s);
        case FilterKind::ViewConsistent:
            return view_consistent_filter_clamped(splat, mode.s0, fx, nu_hat);
    }
    throw DomainError("apply_filter: unknown filter kind");
}

} // namespace sgs
