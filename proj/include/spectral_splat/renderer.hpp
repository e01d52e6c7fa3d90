#pragma once

// Tile-based CPU rasterizer for projected 2D Gaussians plus the scene-level
// differentiable pipeline (cull -> project -> filter -> rasterize) and its
// analytic backward pass.
//
// Determinism contract: pixels belong to exactly one tile, tiles accumulate
// into private buffers, and shared per-splat gradients are merged in tile
// order after the parallel section. Images and gradients are therefore
// bit-identical for any tile size and any thread count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/filters.hpp"
#include "spectral_splat/linalg.hpp"
#include "spectral_splat/parallel.hpp"
#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"

namespace sgs {

// ---------------------------------------------------------------------------
// Framebuffer
// ---------------------------------------------------------------------------

struct Framebuffer {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;   // 3 * width * height, row-major, [r,g,b] per pixel
    std::vector<double> alpha; // width * height accumulated opacity

    Framebuffer() = default;
    Framebuffer(int w, int h)
        : width(w),
          height(h),
          rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0.0),
          alpha(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0) {}

    [[nodiscard]] std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    [[nodiscard]] std::size_t rgb_index(int x, int y) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)) * 3;
    }
    [[nodiscard]] std::size_t alpha_index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x);
    }
    [[nodiscard]] Vec3 pixel(int x, int y) const {
        const std::size_t i = rgb_index(x, y);
        return {rgb[i], rgb[i + 1], rgb[i + 2]};
    }
    void set_pixel(int x, int y, const Vec3& c) {
        const std::size_t i = rgb_index(x, y);
        rgb[i] = c.x;
        rgb[i + 1] = c.y;
        rgb[i + 2] = c.z;
    }
};

// ---------------------------------------------------------------------------
// Rasterizer configuration
// ---------------------------------------------------------------------------

struct RenderConfig {
    int tile_size = 16;
    double gaussian_cutoff = 9.0;        // squared Mahalanobis radius
    Vec3 background{0.0, 0.0, 0.0};
    double alpha_min = 1.0 / 255.0;      // contributions below this are skipped
    double alpha_max = 0.99;             // per-splat alpha clamp
    double transmittance_min = 1e-4;     // front-to-back early termination
    int threads = 1;                     // 0 = resolve from environment
};

// A screen-space splat ready for rasterization. `index` is a stable identity
// used as the depth tiebreak and as the key for gradient accumulation, so
// rasterization is invariant to the order splats are handed in.
struct RenderSplat {
    Vec2 mu{};            // pixel coordinates of the center
    SymMat2 cov{};        // filtered screen-space covariance
    double opacity = 0.0; // filtered peak opacity
    Vec3 color{};
    double depth = 0.0;   // camera-space depth, ascending = front first
    int index = 0;
};

// Gradients of a scalar loss with respect to one RenderSplat. `d_cov` uses the
// full-matrix convention for symmetric inputs: dL = d_cov.xx * dS.xx
// + d_cov.yy * dS.yy + 2 * d_cov.xy * dS.xy.
struct RenderSplatGrads {
    Vec2 d_mu{};
    SymMat2 d_cov{};
    double d_opacity = 0.0;
    Vec3 d_color{};
};

// ---------------------------------------------------------------------------
// Rasterizer
// ---------------------------------------------------------------------------

class Rasterizer {
  public:
    Rasterizer(std::vector<RenderSplat> splats, const CameraView& view, RenderConfig config)
        : cfg_(config), width_(view.width), height_(view.height) {
        init(std::move(splats));
    }

    Rasterizer(std::vector<RenderSplat> splats, int width, int height, RenderConfig config)
        : cfg_(config), width_(width), height_(height) {
        init(std::move(splats));
    }

    [[nodiscard]] Framebuffer forward() const {
        Framebuffer fb(width_, height_);
        parallel_for(tile_count(), cfg_.threads, [&](int tile) { forward_tile(tile, fb); });
        return fb;
    }

    // `upstream` carries dL/dC in its rgb channels; the alpha plane is ignored.
    // The result is indexed by the `index` field of the input splats, which
    // must therefore lie in [0, n) for an n-splat input.
    [[nodiscard]] std::vector<RenderSplatGrads> backward(const Framebuffer& upstream) const {
        if (upstream.width != width_ || upstream.height != height_) {
            throw ShapeMismatchError("backward: upstream gradient image has size " +
                                     std::to_string(upstream.width) + "x" +
                                     std::to_string(upstream.height) + ", expected " +
                                     std::to_string(width_) + "x" + std::to_string(height_));
        }
        const int tiles = tile_count();
        std::vector<std::vector<RenderSplatGrads>> local(static_cast<std::size_t>(tiles));
        parallel_for(tiles, cfg_.threads, [&](int tile) {
            local[static_cast<std::size_t>(tile)] = backward_tile(tile, upstream);
        });
        // Deterministic merge: tiles in order, splats within a tile in sorted
        // (front-to-back) order.
        std::vector<RenderSplatGrads> grads(index_count_);
        for (int tile = 0; tile < tiles; ++tile) {
            const auto& bin = bins_[static_cast<std::size_t>(tile)];
            const auto& part = local[static_cast<std::size_t>(tile)];
            for (std::size_t k = 0; k < bin.size(); ++k) {
                const auto idx = static_cast<std::size_t>(sorted_[bin[k]].index);
                RenderSplatGrads& g = grads[idx];
                const RenderSplatGrads& p = part[k];
                g.d_mu += p.d_mu;
                g.d_cov.xx += p.d_cov.xx;
                g.d_cov.xy += p.d_cov.xy;
                g.d_cov.yy += p.d_cov.yy;
                g.d_opacity += p.d_opacity;
                g.d_color += p.d_color;
            }
        }
        return grads;
    }

    [[nodiscard]] const std::vector<RenderSplat>& sorted_splats() const { return sorted_; }

  private:
    struct Contribution {
        std::size_t slot;      // position in the tile bin
        double alpha;
        double transmittance;  // T before this contribution
        Vec2 offset;           // pixel center minus splat center
    };

    RenderConfig cfg_;
    int width_ = 0;
    int height_ = 0;
    int tiles_x_ = 0;
    int tiles_y_ = 0;
    std::size_t index_count_ = 0;
    std::vector<RenderSplat> sorted_;
    std::vector<SymMat2> inv_cov_;          // aligned with sorted_
    std::vector<std::vector<int>> bins_;    // per tile, indices into sorted_

    void init(std::vector<RenderSplat> splats) {
        if (width_ <= 0 || height_ <= 0) {
            throw ShapeMismatchError("rasterize: image dimensions must be positive");
        }
        if (cfg_.tile_size <= 0) {
            throw ShapeMismatchError("rasterize: tile_size must be positive");
        }
        sorted_ = std::move(splats);
        for (const RenderSplat& s : sorted_) {
            if (s.index < 0) {
                throw ShapeMismatchError("rasterize: splat index must be non-negative");
            }
            index_count_ = std::max(index_count_, static_cast<std::size_t>(s.index) + 1);
        }
        std::sort(sorted_.begin(), sorted_.end(), [](const RenderSplat& a, const RenderSplat& b) {
            if (a.depth != b.depth) return a.depth < b.depth;
            return a.index < b.index;
        });
        inv_cov_.reserve(sorted_.size());
        for (const RenderSplat& s : sorted_) {
            const auto inv = s.cov.inverse();
            if (!inv) {
                throw SingularCovarianceError(
                    "rasterize: filtered covariance of splat " + std::to_string(s.index) +
                    " is not invertible (det=" + std::to_string(s.cov.det()) + ")");
            }
            inv_cov_.push_back(*inv);
        }
        tiles_x_ = (width_ + cfg_.tile_size - 1) / cfg_.tile_size;
        tiles_y_ = (height_ + cfg_.tile_size - 1) / cfg_.tile_size;
        bins_.assign(static_cast<std::size_t>(tiles_x_) * static_cast<std::size_t>(tiles_y_), {});
        const double radius_scale = std::sqrt(std::max(cfg_.gaussian_cutoff, 0.0));
        for (std::size_t i = 0; i < sorted_.size(); ++i) {
            const RenderSplat& s = sorted_[i];
            if (!(s.opacity >= cfg_.alpha_min)) continue; // can never pass the alpha gate
            const double rx = radius_scale * std::sqrt(std::max(s.cov.xx, 0.0));
            const double ry = radius_scale * std::sqrt(std::max(s.cov.yy, 0.0));
            const int x0 = std::clamp(static_cast<int>(std::floor(s.mu.x - rx)), 0, width_ - 1);
            const int x1 = std::clamp(static_cast<int>(std::ceil(s.mu.x + rx)), 0, width_ - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor(s.mu.y - ry)), 0, height_ - 1);
            const int y1 = std::clamp(static_cast<int>(std::ceil(s.mu.y + ry)), 0, height_ - 1);
            if (s.mu.x + rx < 0.0 || s.mu.x - rx > width_ || s.mu.y + ry < 0.0 ||
                s.mu.y - ry > height_) {
                continue;
            }
            const int tx0 = x0 / cfg_.tile_size;
            const int tx1 = x1 / cfg_.tile_size;
            const int ty0 = y0 / cfg_.tile_size;
            const int ty1 = y1 / cfg_.tile_size;
            for (int ty = ty0; ty <= ty1; ++ty) {
                for (int tx = tx0; tx <= tx1; ++tx) {
                    bins_[static_cast<std::size_t>(ty) * static_cast<std::size_t>(tiles_x_) +
                          static_cast<std::size_t>(tx)]
                        .push_back(static_cast<int>(i));
                }
            }
        }
    }

    [[nodiscard]] int tile_count() const { return tiles_x_ * tiles_y_; }

    struct TileRect {
        int x0, x1, y0, y1; // half-open pixel range
    };

    [[nodiscard]] TileRect tile_rect(int tile) const {
        const int tx = tile % tiles_x_;
        const int ty = tile / tiles_x_;
        return {tx * cfg_.tile_size, std::min((tx + 1) * cfg_.tile_size, width_),
                ty * cfg_.tile_size, std::min((ty + 1) * cfg_.tile_size, height_)};
    }

    // Walks the tile's splats front to back for one pixel, invoking
    // `visit(slot, alpha, T_before, offset)` for each surviving contribution.
    // Returns the final transmittance.
    template <typename Visit>
    double walk_pixel(const std::vector<int>& bin, double px, double py, Visit&& visit) const {
        double transmittance = 1.0;
        for (std::size_t k = 0; k < bin.size(); ++k) {
            if (transmittance < cfg_.transmittance_min) break;
            const RenderSplat& s = sorted_[static_cast<std::size_t>(bin[k])];
            const SymMat2& a = inv_cov_[static_cast<std::size_t>(bin[k])];
            const Vec2 d{px - s.mu.x, py - s.mu.y};
            const double maha =
                d.x * (a.xx * d.x + a.xy * d.y) + d.y * (a.xy * d.x + a.yy * d.y);
            if (!(maha <= cfg_.gaussian_cutoff)) continue;
            double alpha = s.opacity * std::exp(-0.5 * maha);
            if (alpha > cfg_.alpha_max) alpha = cfg_.alpha_max;
            if (alpha < cfg_.alpha_min) continue;
            visit(k, alpha, transmittance, d);
            transmittance *= 1.0 - alpha;
        }
        return transmittance;
    }

    void forward_tile(int tile, Framebuffer& fb) const {
        const TileRect r = tile_rect(tile);
        const auto& bin = bins_[static_cast<std::size_t>(tile)];
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                Vec3 color{0.0, 0.0, 0.0};
                const double t_final =
                    walk_pixel(bin, px, py,
                               [&](std::size_t k, double alpha, double t_before, const Vec2&) {
                                   const RenderSplat& s =
                                       sorted_[static_cast<std::size_t>(bin[k])];
                                   color += s.color * (alpha * t_before);
                               });
                color += cfg_.background * t_final;
                fb.set_pixel(x, y, color);
                fb.alpha[fb.alpha_index(x, y)] = 1.0 - t_final;
            }
        }
    }

    [[nodiscard]] std::vector<RenderSplatGrads> backward_tile(int tile,
                                                              const Framebuffer& upstream) const {
        const TileRect r = tile_rect(tile);
        const auto& bin = bins_[static_cast<std::size_t>(tile)];
        std::vector<RenderSplatGrads> grads(bin.size());
        std::vector<Contribution> stack;
        stack.reserve(64);
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const Vec3 g = upstream.pixel(x, y);
                if (g.x == 0.0 && g.y == 0.0 && g.z == 0.0) continue;
                const double px = x + 0.5;
                const double py = y + 0.5;
                stack.clear();
                const double t_final = walk_pixel(
                    bin, px, py,
                    [&](std::size_t k, double alpha, double t_before, const Vec2& d) {
                        stack.push_back({k, alpha, t_before, d});
                    });
                // Reverse sweep with a suffix color accumulator: at step i the
                // derivative of the blend with respect to alpha_i is
                // c_i * T_i - B_i / (1 - alpha_i), where B_i collects every
                // contribution behind i (background included).
                Vec3 suffix = cfg_.background * t_final;
                for (std::size_t j = stack.size(); j-- > 0;) {
                    const Contribution& c = stack[j];
                    const RenderSplat& s = sorted_[static_cast<std::size_t>(bin[c.slot])];
                    const SymMat2& a = inv_cov_[static_cast<std::size_t>(bin[c.slot])];
                    RenderSplatGrads& out = grads[c.slot];
                    const double weight = c.alpha * c.transmittance;
                    out.d_color += g * weight;
                    const double one_minus = 1.0 - c.alpha;
                    const Vec3 dc_dalpha{
                        s.color.x * c.transmittance - suffix.x / one_minus,
                        s.color.y * c.transmittance - suffix.y / one_minus,
                        s.color.z * c.transmittance - suffix.z / one_minus};
                    double d_alpha = g.dot(dc_dalpha);
                    suffix += s.color * weight;
                    if (c.alpha >= cfg_.alpha_max) continue; // clamped: flat locally
                    out.d_opacity += d_alpha * (c.alpha / s.opacity);
                    const double d_maha = d_alpha * (-0.5 * c.alpha);
                    const Vec2 ad{a.xx * c.offset.x + a.xy * c.offset.y,
                                  a.xy * c.offset.x + a.yy * c.offset.y};
                    // d maha / d mu = -2 * Sigma^-1 * offset
                    out.d_mu.x += d_maha * (-2.0 * ad.x);
                    out.d_mu.y += d_maha * (-2.0 * ad.y);
                    // d maha / d Sigma = -(Sigma^-1 d)(Sigma^-1 d)^T
                    out.d_cov.xx += d_maha * (-ad.x * ad.x);
                    out.d_cov.xy += d_maha * (-ad.x * ad.y);
                    out.d_cov.yy += d_maha * (-ad.y * ad.y);
                }
            }
        }
        return grads;
    }
};

inline Framebuffer rasterize(std::vector<RenderSplat> splats, const CameraView& view,
                             const RenderConfig& config = {}) {
    return Rasterizer(std::move(splats), view, config).forward();
}

// ---------------------------------------------------------------------------
// Scene-level differentiable pipeline
// ---------------------------------------------------------------------------

struct RenderOptions {
    FilterMode filter = FilterMode::none();
    // Differentiable 3D pre-smoothing (applied before projection); the
    // covariance gains c * I in the Gaussian's eigenbasis with c = s / nu^2
    // and the opacity is scaled by the induced determinant ratio.
    bool smooth3d = false;
    double smooth3d_s = kMipDefaultS;
    RenderConfig raster{};
};

namespace detail {

// Everything the backward pass needs about one visible Gaussian.
struct SplatRecord {
    int scene_index = -1;
    Vec3 mu_cam{};
    Mat3 r_world;       // camera rotation (world -> camera)
    Mat3 r_quat;        // Gaussian orientation from the normalized quaternion
    std::array<double, 4> quat_hat{}; // normalized quaternion (w, x, y, z)
    Vec3 raw_var{};     // exp(2 * log_scales)
    double smooth_c = 0.0;
    double smooth_fac = 1.0;
    SymMat3 sigma_cam{};
    Mat23 jac{};
    SymMat2 sigma_proj{};
    SymMat2 sigma_filter{};
    double s_eff = 0.0;
    bool depth_dependent_kernel = false; // true when s_eff varies with depth
    double k_det = 1.0;
    double o_base = 0.0;
    double fx = 0.0;
    double fy = 0.0;
    double quat_norm = 1.0;
};

inline std::array<Mat3, 4> quat_rotation_partials(const std::array<double, 4>& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d{};
    d[0].m = {{{0.0, -2.0 * z, 2.0 * y}, {2.0 * z, 0.0, -2.0 * x}, {-2.0 * y, 2.0 * x, 0.0}}};
    d[1].m = {{{0.0, 2.0 * y, 2.0 * z}, {2.0 * y, -4.0 * x, -2.0 * w}, {2.0 * z, 2.0 * w, -4.0 * x}}};
    d[2].m = {{{-4.0 * y, 2.0 * x, 2.0 * w}, {2.0 * x, 0.0, 2.0 * z}, {-2.0 * w, 2.0 * z, -4.0 * y}}};
    d[3].m = {{{-4.0 * z, -2.0 * w, 2.0 * x}, {2.0 * w, -4.0 * z, 2.0 * y}, {2.0 * x, 2.0 * y, 0.0}}};
    return d;
}

} // namespace detail

// Tape connecting a rendered image back to scene parameters.
struct ForwardContext {
    CameraView view{};
    RenderOptions options{};
    std::size_t scene_size = 0;
    std::vector<detail::SplatRecord> records;
    std::optional<Rasterizer> rasterizer;
};

// Per-Gaussian gradients plus the screen-space bookkeeping used by adaptive
// density control. All vectors have one entry per scene Gaussian; culled
// Gaussians keep zeros.
struct ParamGrads {
    std::vector<Vec3> position;
    std::vector<std::array<double, 4>> rotation;
    std::vector<Vec3> log_scales;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color;
    std::vector<Vec2> mu_proj;        // view-space positional gradient
    std::vector<double> mu_proj_norm; // magnitude of the above

    explicit ParamGrads(std::size_t n)
        : position(n), rotation(n, {0.0, 0.0, 0.0, 0.0}), log_scales(n), opacity_logit(n, 0.0),
          color(n), mu_proj(n), mu_proj_norm(n, 0.0) {}
};

inline Framebuffer render_forward(const Scene& scene, const CameraView& view,
                                  const RenderOptions& options, ForwardContext* ctx = nullptr) {
    std::vector<RenderSplat> splats;
    splats.reserve(scene.size());
    std::vector<detail::SplatRecord> records;
    if (ctx) records.reserve(scene.size());

    for (std::size_t gi = 0; gi < scene.size(); ++gi) {
        const Gaussian3D& g = scene[gi];
        detail::SplatRecord rec;
        rec.scene_index = static_cast<int>(gi);
        rec.r_world = view.rot;
        rec.fx = view.fx;
        rec.fy = view.fy;

        const Quat qh = g.rotation.normalized();
        rec.quat_hat = {qh.w, qh.x, qh.y, qh.z};
        rec.r_quat = qh.rotation();
        const double qn = g.rotation.norm();
        rec.quat_norm = qn > 0.0 ? qn : 1.0;
        rec.raw_var = {std::exp(2.0 * g.log_scales.x), std::exp(2.0 * g.log_scales.y),
                       std::exp(2.0 * g.log_scales.z)};

        double smooth_c = 0.0;
        double smooth_fac = 1.0;
        if (options.smooth3d) {
            if (!(g.nu_hat > 0.0)) {
                throw NoVisibilityError("render: Gaussian " + std::to_string(gi) +
                                        " has no recorded sampling rate for 3D smoothing");
            }
            smooth_c = options.smooth3d_s / (g.nu_hat * g.nu_hat);
            double det_ratio = 1.0;
            for (int k = 0; k < 3; ++k) {
                const double v = k == 0 ? rec.raw_var.x : (k == 1 ? rec.raw_var.y : rec.raw_var.z);
                det_ratio *= v / (v + smooth_c);
            }
            smooth_fac = std::sqrt(det_ratio);
        }
        rec.smooth_c = smooth_c;
        rec.smooth_fac = smooth_fac;

        const SymMat3 diag{rec.raw_var.x + smooth_c, 0.0, 0.0,
                           rec.raw_var.y + smooth_c, 0.0, rec.raw_var.z + smooth_c};
        const SymMat3 sigma_world = congruence(rec.r_quat, diag);

        const Vec3 mu_cam = view.to_camera(g.position);
        if (mu_cam.z <= kNearPlane) continue; // culled, never an error
        const SymMat3 sigma_cam = congruence(view.rot, sigma_world);
        rec.mu_cam = mu_cam;
        rec.sigma_cam = sigma_cam;

        rec.jac = projection_jacobian(mu_cam, view.fx, view.fy);
        rec.sigma_proj = congruence(rec.jac, sigma_cam);
        const Vec2 mu_proj{view.fx * mu_cam.x / mu_cam.z + view.cx,
                           view.fy * mu_cam.y / mu_cam.z + view.cy};

        Splat2D probe;
        probe.mu_proj = mu_proj;
        probe.sigma_proj = rec.sigma_proj;
        if (!in_frustum(probe, view.width, view.height)) continue;

        // Filtering. All modes reduce to sigma_proj + s_eff * I with an
        // optional determinant-ratio opacity factor.
        double s_eff = 0.0;
        double k_det = 1.0;
        bool depth_dependent = false;
        switch (options.filter.kind) {
            case FilterKind::None:
                break;
            case FilterKind::EWA:
                s_eff = options.filter.s;
                break;
            case FilterKind::Mip:
                s_eff = options.filter.s;
                break;
            case FilterKind::ViewConsistent: {
                const double ratio_view = view.fx / mu_cam.z;
                double ratio = ratio_view;
                if (g.nu_hat > 0.0 && ratio < g.nu_hat) {
                    ratio = g.nu_hat; // below the training sampling rate: freeze
                } else {
                    depth_dependent = true;
                }
                s_eff = options.filter.s0 * ratio * ratio;
                break;
            }
        }
        rec.s_eff = s_eff;
        rec.depth_dependent_kernel = depth_dependent;
        rec.sigma_filter = rec.sigma_proj.plus_scaled_identity(s_eff);
        if (options.filter.kind == FilterKind::Mip ||
            options.filter.kind == FilterKind::ViewConsistent) {
            k_det = detail::det_opacity_factor(rec.sigma_proj, rec.sigma_filter);
        }
        rec.k_det = k_det;
        rec.o_base = g.opacity();

        RenderSplat splat;
        splat.mu = mu_proj;
        splat.cov = rec.sigma_filter;
        splat.opacity = rec.o_base * smooth_fac * k_det;
        splat.color = g.color;
        splat.depth = mu_cam.z;
        splat.index = static_cast<int>(gi);
        splats.push_back(splat);
        if (ctx) records.push_back(rec);
    }

    Rasterizer raster(std::move(splats), view, options.raster);
    Framebuffer fb = raster.forward();
    if (ctx) {
        ctx->view = view;
        ctx->options = options;
        ctx->scene_size = scene.size();
        ctx->records = std::move(records);
        ctx->rasterizer.emplace(std::move(raster));
    }
    return fb;
}

inline ParamGrads render_backward(const ForwardContext& ctx, const Framebuffer& upstream) {
    if (!ctx.rasterizer) {
        throw ShapeMismatchError("render_backward: forward context is empty");
    }
    const std::vector<RenderSplatGrads> raster_grads = ctx.rasterizer->backward(upstream);
    ParamGrads out(ctx.scene_size);

    for (const detail::SplatRecord& rec : ctx.records) {
        const auto gi = static_cast<std::size_t>(rec.scene_index);
        const RenderSplatGrads& rg = raster_grads[gi];

        // --- opacity chain: o_filter = o_base * smooth_fac * k_det ---------
        const double go_base = rg.d_opacity * rec.smooth_fac * rec.k_det;
        const double g_smooth_fac = rg.d_opacity * rec.o_base * rec.k_det;
        const double g_k_det = rg.d_opacity * rec.o_base * rec.smooth_fac;
        out.opacity_logit[gi] += go_base * rec.o_base * (1.0 - rec.o_base);

        // --- covariance chain in screen space ------------------------------
        // Full-matrix gradients. Start from the rasterizer's d_cov and add the
        // determinant-factor terms, then split into sigma_proj and s_eff.
        SymMat2 g_filter = rg.d_cov;
        SymMat2 g_proj{0.0, 0.0, 0.0};
        if (rec.k_det > 0.0 &&
            (ctx.options.filter.kind == FilterKind::Mip ||
             ctx.options.filter.kind == FilterKind::ViewConsistent)) {
            const double det_p = rec.sigma_proj.det();
            const double det_f = rec.sigma_filter.det();
            if (det_p > 0.0 && det_f > 0.0 && rec.k_det < 1.0) {
                const auto inv_p = rec.sigma_proj.inverse();
                const auto inv_f = rec.sigma_filter.inverse();
                if (inv_p && inv_f) {
                    const double half_k = 0.5 * rec.k_det * g_k_det;
                    g_proj.xx += half_k * inv_p->xx;
                    g_proj.xy += half_k * inv_p->xy;
                    g_proj.yy += half_k * inv_p->yy;
                    g_filter.xx -= half_k * inv_f->xx;
                    g_filter.xy -= half_k * inv_f->xy;
                    g_filter.yy -= half_k * inv_f->yy;
                }
            }
        }
        // sigma_filter = sigma_proj + s_eff * I
        g_proj.xx += g_filter.xx;
        g_proj.xy += g_filter.xy;
        g_proj.yy += g_filter.yy;
        const double g_s_eff = g_filter.xx + g_filter.yy;

        // --- depth-dependent kernel (view-consistent, unclamped) -----------
        double gz_extra = 0.0;
        if (rec.depth_dependent_kernel) {
            // s_eff = s0 * (fx / z)^2  =>  d s_eff / d z = -2 s_eff / z
            gz_extra = g_s_eff * (-2.0 * rec.s_eff / rec.mu_cam.z);
        }

        // --- projection: sigma_proj = J sigma_cam J^T ----------------------
        // d(sigma_cam) = J^T G J; d(J) = 2 G J sigma_cam
        const Mat3 sigma_cam_full = rec.sigma_cam.full();
        const Mat23& J = rec.jac;
        // G * J (2x3)
        Mat23 gj{};
        gj.m[0][0] = g_proj.xx * J.m[0][0] + g_proj.xy * J.m[1][0];
        gj.m[0][1] = g_proj.xx * J.m[0][1] + g_proj.xy * J.m[1][1];
        gj.m[0][2] = g_proj.xx * J.m[0][2] + g_proj.xy * J.m[1][2];
        gj.m[1][0] = g_proj.xy * J.m[0][0] + g_proj.yy * J.m[1][0];
        gj.m[1][1] = g_proj.xy * J.m[0][1] + g_proj.yy * J.m[1][1];
        gj.m[1][2] = g_proj.xy * J.m[0][2] + g_proj.yy * J.m[1][2];
        // dL/dJ = 2 * (G J) * sigma_cam
        Mat23 d_jac{};
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += gj.m[r][k] * sigma_cam_full.m[k][c];
                d_jac.m[r][c] = 2.0 * acc;
            }
        }
        // dL/dsigma_cam = J^T G J (3x3 symmetric)
        Mat3 g_sigma_cam{};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                // (J^T G J)_{rc} = sum_{a,b} J_{a r} G_{a b} J_{b c}
                double acc = 0.0;
                acc += J.m[0][r] * (g_proj.xx * J.m[0][c] + g_proj.xy * J.m[1][c]);
                acc += J.m[1][r] * (g_proj.xy * J.m[0][c] + g_proj.yy * J.m[1][c]);
                g_sigma_cam.m[r][c] = acc;
            }
        }

        // --- camera-space position gradient --------------------------------
        const double x = rec.mu_cam.x, y = rec.mu_cam.y, z = rec.mu_cam.z;
        const double inv_z = 1.0 / z;
        const double inv_z2 = inv_z * inv_z;
        Vec3 g_mu_cam{0.0, 0.0, 0.0};
        // through mu_proj = (fx x / z + cx, fy y / z + cy)
        g_mu_cam.x += rg.d_mu.x * rec.fx * inv_z;
        g_mu_cam.y += rg.d_mu.y * rec.fy * inv_z;
        g_mu_cam.z += rg.d_mu.x * (-rec.fx * x * inv_z2) + rg.d_mu.y * (-rec.fy * y * inv_z2);
        // through J entries
        g_mu_cam.x += d_jac.m[0][2] * (-rec.fx * inv_z2);
        g_mu_cam.y += d_jac.m[1][2] * (-rec.fy * inv_z2);
        g_mu_cam.z += d_jac.m[0][0] * (-rec.fx * inv_z2) + d_jac.m[1][1] * (-rec.fy * inv_z2) +
                      d_jac.m[0][2] * (2.0 * rec.fx * x * inv_z2 * inv_z) +
                      d_jac.m[1][2] * (2.0 * rec.fy * y * inv_z2 * inv_z);
        // through the depth-dependent kernel
        g_mu_cam.z += gz_extra;

        // world position: mu_cam = R mu + t  =>  dL/dmu = R^T g_mu_cam
        const Mat3 rt = rec.r_world.transposed();
        out.position[gi] += rt * g_mu_cam;

        // --- world covariance gradient -------------------------------------
        // sigma_cam = R sigma_world R^T  =>  G_world = R^T G_cam R
        Mat3 g_sigma_world{};
        {
            const Mat3& R = rec.r_world;
            Mat3 tmp{}; // G_cam * R
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int k = 0; k < 3; ++k) acc += g_sigma_cam.m[r][k] * R.m[k][c];
                    tmp.m[r][c] = acc;
                }
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int k = 0; k < 3; ++k) acc += R.m[k][r] * tmp.m[k][c];
                    g_sigma_world.m[r][c] = acc;
                }
        }

        // sigma_world = Rq (D + cI) Rq^T with D = diag(exp(2 l))
        const Mat3& Rq = rec.r_quat;
        // B = Rq^T G_world Rq
        Mat3 b{};
        {
            Mat3 tmp{}; // G_world * Rq
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int k = 0; k < 3; ++k) acc += g_sigma_world.m[r][k] * Rq.m[k][c];
                    tmp.m[r][c] = acc;
                }
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int k = 0; k < 3; ++k) acc += Rq.m[k][r] * tmp.m[k][c];
                    b.m[r][c] = acc;
                }
        }
        const std::array<double, 3> raw{rec.raw_var.x, rec.raw_var.y, rec.raw_var.z};
        for (int k = 0; k < 3; ++k) {
            double gl = 2.0 * raw[static_cast<std::size_t>(k)] * b.m[k][k];
            if (rec.smooth_c > 0.0) {
                // opacity compensation factor also depends on the raw scales
                gl += g_smooth_fac * rec.smooth_fac * rec.smooth_c /
                      (raw[static_cast<std::size_t>(k)] + rec.smooth_c);
            }
            if (k == 0) out.log_scales[gi].x += gl;
            else if (k == 1) out.log_scales[gi].y += gl;
            else out.log_scales[gi].z += gl;
        }

        // dL/dRq = 2 G_world Rq (D + cI)
        Mat3 d_rq{};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += g_sigma_world.m[r][k] * Rq.m[k][c];
                d_rq.m[r][c] = 2.0 * acc * (raw[static_cast<std::size_t>(c)] + rec.smooth_c);
            }
        }
        // chain through the rotation formula and the normalization map
        const auto partials = detail::quat_rotation_partials(rec.quat_hat);
        std::array<double, 4> g_qhat{};
        for (int b4 = 0; b4 < 4; ++b4) {
            double acc = 0.0;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    acc += d_rq.m[r][c] * partials[static_cast<std::size_t>(b4)].m[r][c];
            g_qhat[static_cast<std::size_t>(b4)] = acc;
        }
        // q_hat = q / |q|: the normalization Jacobian (I - q_hat q_hat^T)/|q|
        // removes the radial component and rescales the rest.
        double radial = 0.0;
        for (int i = 0; i < 4; ++i)
            radial += g_qhat[static_cast<std::size_t>(i)] * rec.quat_hat[static_cast<std::size_t>(i)];
        for (int i = 0; i < 4; ++i) {
            out.rotation[gi][static_cast<std::size_t>(i)] +=
                (g_qhat[static_cast<std::size_t>(i)] -
                 radial * rec.quat_hat[static_cast<std::size_t>(i)]) / rec.quat_norm;
        }

        // --- color ----------------------------------------------------------
        out.color[gi] += rg.d_color;

        // --- densification bookkeeping --------------------------------------
        out.mu_proj[gi] += rg.d_mu;
        out.mu_proj_norm[gi] =
            std::sqrt(out.mu_proj[gi].x * out.mu_proj[gi].x + out.mu_proj[gi].y * out.mu_proj[gi].y);
    }
    return out;
}

// Convenience entry point matching the classic pipeline: cull, project,
// filter, rasterize.
inline Framebuffer splat_and_render(const Scene& scene, const CameraView& view,
                                    const FilterMode& mode, const RenderConfig& config = {}) {
    RenderOptions options;
    options.filter = mode;
    options.raster = config;
    return render_forward(scene, view, options, nullptr);
}

// ---------------------------------------------------------------------------
// Entropy map
// ---------------------------------------------------------------------------

// Alpha-blends each parent's 3D spectral entropy and normalizes by the
// accumulated alpha. Pixels with no coverage carry the maximum-entropy
// sentinel ln 3. The scalar is replicated across all three channels.
inline Framebuffer render_entropy_map(const Scene& scene, const CameraView& view,
                                      const FilterMode& mode, const RenderConfig& config = {}) {
    RenderOptions options;
    options.filter = mode;
    options.raster = config;
    options.raster.background = {0.0, 0.0, 0.0};

    ForwardContext ctx;
    render_forward(scene, view, options, &ctx);

    // Re-rasterize with per-splat entropy as the color channel, reusing the
    // already-projected splats for exact consistency with the color pass.
    std::vector<RenderSplat> splats = ctx.rasterizer->sorted_splats();
    for (RenderSplat& s : splats) {
        const Gaussian3D& g = scene[static_cast<std::size_t>(s.index)];
        const double h = spectral_entropy(eig_sym(covariance_of(g)));
        s.color = {h, h, h};
    }
    Framebuffer fb = Rasterizer(std::move(splats), view, options.raster).forward();
    const double sentinel = std::log(3.0);
    for (std::size_t p = 0; p < fb.pixel_count(); ++p) {
        const double acc = fb.alpha[p];
        double value = sentinel;
        if (acc > 1e-12) value = fb.rgb[3 * p] / acc;
        fb.rgb[3 * p] = value;
        fb.rgb[3 * p + 1] = value;
        fb.rgb[3 * p + 2] = value;
    }
    return fb;
}

} // namespace sgs
