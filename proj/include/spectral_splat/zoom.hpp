#pragma once

// Zoom benchmark: sweeps focal multipliers over a base view, collects
// condition-number and entropy statistics of the filtered screen-space
// covariances, and overlays the closed-form zoom curve for an on-axis probe
// splat. Constant-kernel filters must show strictly increasing anisotropy
// under zoom-in; the view-consistent filter must hold it constant.
//
// The sweep follows the analysis convention that the projected position is
// held fixed while the focal length scales (a pure zoom, not a dolly): the
// probe is evaluated exactly on the optical axis, and scene statistics use
// every splat in front of the camera regardless of the zoomed frustum so the
// population is identical across multipliers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/filters.hpp"
#include "spectral_splat/image_metrics.hpp"
#include "spectral_splat/renderer.hpp"
#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"

namespace sgs {

struct ZoomQuartiles {
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
};

struct ZoomPoint {
    double multiplier = 1.0;
    ZoomQuartiles kappa;        // kappa(Sigma_filter) over the scene
    double mean_entropy = 0.0;  // mean H(Sigma_filter) over the scene
    double psnr_vs_reference = std::numeric_limits<double>::quiet_NaN();
    double probe_kappa = std::numeric_limits<double>::quiet_NaN();
    double probe_analytic_kappa = std::numeric_limits<double>::quiet_NaN();
};

struct ZoomReport {
    FilterKind filter = FilterKind::None;
    std::vector<ZoomPoint> points; // ascending multipliers
};

// Closed-form zoom curve: an on-axis splat with unfiltered screen-space
// eigenvalues (l1 >= l2) at multiplier 1 projects to m^2 * diag(l1, l2), so
// with kernel k(m) the filtered condition number is
// (m^2 l1 + k) / (m^2 l2 + k).
inline double analytic_zoom_kappa(double lambda1, double lambda2, double multiplier,
                                  double kernel) {
    const double m2 = multiplier * multiplier;
    return detail::condition_number_impl(m2 * lambda1 + kernel, m2 * lambda2 + kernel);
}

namespace detail {

inline double interpolated_quantile(std::vector<double> sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace detail

struct ZoomBenchOptions {
    std::vector<double> multipliers = {1.0, 2.0, 4.0, 8.0};
    bool render_psnr = true;  // render each multiplier and compare to the
                              // unfiltered reference render of the same view
    RenderConfig raster;
};

inline ZoomReport zoom_bench(const Scene& scene, const CameraView& base_view,
                             const FilterMode& mode, const ZoomBenchOptions& opts = {}) {
    if (scene.empty()) throw EmptySceneError("zoom_bench: empty scene");
    if (opts.multipliers.empty()) throw DomainError("zoom_bench: no multipliers");
    for (std::size_t i = 1; i < opts.multipliers.size(); ++i) {
        if (!(opts.multipliers[i] > opts.multipliers[i - 1]))
            throw DomainError("zoom_bench: multipliers must be strictly ascending");
    }

    // Sampling-rate baselines come from the base view alone, so zooming in
    // never trips the view-consistent filter's zoom-out clamp.
    Scene prepared = scene;
    update_max_sampling_rates(prepared, {base_view});

    // Probe: the splat closest to the optical axis, moved exactly onto it at
    // its own depth (the pure-zoom analysis convention).
    std::size_t probe_index = 0;
    double best_off_axis = std::numeric_limits<double>::infinity();
    bool any_visible = false;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        const Vec3 cam = base_view.to_camera(prepared[i].position);
        if (cam.z <= kNearPlane) continue;
        any_visible = true;
        const double off = std::hypot(cam.x / cam.z, cam.y / cam.z);
        if (off < best_off_axis) {
            best_off_axis = off;
            probe_index = i;
        }
    }
    if (!any_visible) throw EmptySceneError("zoom_bench: no splat in front of the base view");

    Gaussian3D probe = prepared[probe_index];
    {
        const double z = base_view.to_camera(probe.position).z;
        const Vec3 on_axis_cam{0.0, 0.0, z};
        const Mat3 rt = base_view.rot.transposed();
        probe.position = rt * (on_axis_cam - base_view.trans);
    }

    // Unfiltered on-axis eigenvalues at multiplier 1 feed the closed form.
    const Splat2D probe_base = project(probe, base_view);
    const Spectrum2 probe_spec = eig_sym(probe_base.sigma_proj);
    const double probe_z = base_view.to_camera(probe.position).z;

    ZoomReport report;
    report.filter = mode.kind;
    for (double m : opts.multipliers) {
        CameraView zoomed = base_view;
        zoomed.fx *= m;
        zoomed.fy *= m;

        ZoomPoint point;
        point.multiplier = m;

        std::vector<double> kappas;
        double entropy_acc = 0.0;
        std::size_t counted = 0;
        for (const Gaussian3D& g : prepared) {
            const Vec3 cam = zoomed.to_camera(g.position);
            if (cam.z <= kNearPlane) continue;
            const Splat2D raw = project(g, zoomed);
            const FilteredSplat filtered = apply_filter(raw, mode, zoomed.fx, g.nu_hat);
            const Spectrum2 sp = eig_sym(filtered.sigma_filter);
            kappas.push_back(condition_number(sp));
            entropy_acc += spectral_entropy(sp);
            ++counted;
        }
        if (counted == 0) throw EmptySceneError("zoom_bench: no splat visible at multiplier " +
                                                std::to_string(m));
        std::sort(kappas.begin(), kappas.end());
        point.kappa.q25 = detail::interpolated_quantile(kappas, 0.25);
        point.kappa.median = detail::interpolated_quantile(kappas, 0.5);
        point.kappa.q75 = detail::interpolated_quantile(kappas, 0.75);
        point.mean_entropy = entropy_acc / static_cast<double>(counted);

        // On-axis probe, measured through the same projection + filter path.
        {
            const Splat2D raw = project(probe, zoomed);
            const FilteredSplat filtered = apply_filter(raw, mode, zoomed.fx, probe.nu_hat);
            point.probe_kappa = condition_number(eig_sym(filtered.sigma_filter));

            double kernel = 0.0;
            switch (mode.kind) {
                case FilterKind::None: kernel = 0.0; break;
                case FilterKind::EWA: kernel = mode.s; break;
                case FilterKind::Mip: kernel = mode.s; break;
                case FilterKind::ViewConsistent: {
                    const double ratio = zoomed.fx / probe_z;
                    const double clamped =
                        probe.nu_hat > 0.0 ? std::max(ratio, probe.nu_hat) : ratio;
                    kernel = mode.s0 * clamped * clamped;
                    break;
                }
            }
            point.probe_analytic_kappa =
                analytic_zoom_kappa(probe_spec.lambda[0], probe_spec.lambda[1], m, kernel);
        }

        if (opts.render_psnr) {
            RenderOptions filtered_opts;
            filtered_opts.filter = mode;
            filtered_opts.raster = opts.raster;
            RenderOptions reference_opts;
            reference_opts.filter = FilterMode::none();
            reference_opts.raster = opts.raster;
            const Framebuffer rendered = render_forward(prepared, zoomed, filtered_opts);
            const Framebuffer reference = render_forward(prepared, zoomed, reference_opts);
            point.psnr_vs_reference = psnr(rendered, reference);
        }
        report.points.push_back(point);
    }

    // Executable zoom-consistency properties. A constant kernel inflates the
    // small eigenvalue proportionally more than the large one, so the probe's
    // kappa must rise strictly under zoom-in whenever the probe is
    // anisotropic; an exactly isotropic probe stays at kappa = 1 instead.
    const bool probe_anisotropic =
        probe_spec.lambda[0] > probe_spec.lambda[1] * (1.0 + 1e-9);
    for (std::size_t i = 1; i < report.points.size(); ++i) {
        const ZoomPoint& prev = report.points[i - 1];
        const ZoomPoint& cur = report.points[i];
        if ((mode.kind == FilterKind::EWA || mode.kind == FilterKind::Mip) &&
            probe_anisotropic) {
            if (!(cur.probe_kappa > prev.probe_kappa)) {
                throw DomainError("zoom_bench: constant-kernel probe kappa failed to increase "
                                  "between multipliers " +
                                  std::to_string(prev.multiplier) + " and " +
                                  std::to_string(cur.multiplier));
            }
        } else if (mode.kind == FilterKind::ViewConsistent) {
            const double tol = 1e-9 * std::max(1.0, std::abs(prev.probe_kappa));
            if (std::abs(cur.probe_kappa - prev.probe_kappa) > tol) {
                throw DomainError("zoom_bench: view-consistent probe kappa drifted between "
                                  "multipliers " +
                                  std::to_string(prev.multiplier) + " and " +
                                  std::to_string(cur.multiplier));
            }
        }
    }
    return report;
}

} // namespace sgs
