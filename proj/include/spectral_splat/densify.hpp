#pragma once

// Adaptive density control: the gradient-driven baseline clone/split, the
// spectral split that contracts the condition number, spectrum-aware
// pruning, and the per-epoch refinement pass that applies them in order
// (prune, loss densify, spectral split) per Gaussian.

#include <cmath>
#include <random>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"

namespace sgs {

// Baseline split shrinks every axis by this factor, preserving shape.
inline constexpr double kBaselineSplitK = 1.6;

struct DensifyConfig {
    double tau_loss = 2e-4;      // view-space positional gradient gate
    double tau_radius = 1e-4;    // world units^2; (0.01 * scene_extent)^2
    double tau_spectral = 0.5;   // entropy gate for the spectral split
    double k = 0.6;              // extra shrink on the dominant axis
    double k0 = 1.0;             // base shrink on every axis
    int K = 2;                   // children per spectral split
    double eps_o = 0.005;        // opacity prune gate
    double kappa_max = 1e8;      // invalid-spectrum prune bound
};

struct DensifyStats {
    long cloned = 0;
    long split_baseline = 0;
    long split_spectral = 0;
    long pruned_opacity = 0;
    long pruned_spectrum = 0;
};

inline bool should_split_spectral(const SymMat3& sigma, double tau_spectral) {
    return spectral_entropy(eig_sym(sigma)) < tau_spectral;
}

// Right-hand side of the admissibility bound k < -k0 + k0 * rho^{3/2} / sqrt(|Sigma|).
inline double split_k_bound(const SymMat3& sigma, double k0) {
    const double det = sigma.det();
    if (!(det > 0.0)) throw DegenerateError("split_k_bound: covariance not SPD");
    const double rho = spectral_radius(eig_sym(sigma));
    return -k0 + k0 * std::pow(rho, 1.5) / std::sqrt(det);
}

namespace detail {

// One sample from the Gaussian's own density, Cholesky-based with an
// R·S fallback for PSD-degenerate covariances.
inline Vec3 sample_position(const Gaussian3D& g, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const Vec3 z{n01(rng), n01(rng), n01(rng)};
    const SymMat3 sigma = covariance_of(g);
    if (const auto l = cholesky(sigma)) {
        return g.position + *l * z;
    }
    const Mat3 r = g.rotation.rotation();
    const Vec3 sz{std::exp(g.log_scales.x) * z.x, std::exp(g.log_scales.y) * z.y,
                  std::exp(g.log_scales.z) * z.z};
    return g.position + r * sz;
}

} // namespace detail

// Split a low-entropy Gaussian into K children with
// Sigma_split = R diag(s_i^2 / k_i^2) R^T, k_i = k·1{s_i^2 = rho} + k0,
// the indicator taken with 1e-9 relative tie tolerance. Child means are
// i.i.d. samples of the parent density; opacity and color are copied.
inline std::vector<Gaussian3D> spectral_split(const Gaussian3D& g, const DensifyConfig& cfg,
                                              std::mt19937_64& rng, bool* k_was_clamped = nullptr) {
    const SymMat3 sigma = covariance_of(g);
    const double bound = split_k_bound(sigma, cfg.k0);
    double k = cfg.k;
    bool clamped = false;
    if (k >= bound) {
        k = std::max(0.95 * bound, 0.0);
        clamped = true;
    }
    if (k_was_clamped) *k_was_clamped = clamped;

    const double var[3] = {std::exp(2.0 * g.log_scales.x), std::exp(2.0 * g.log_scales.y),
                           std::exp(2.0 * g.log_scales.z)};
    const double rho = std::max({var[0], var[1], var[2]});
    Vec3 child_log_scales;
    for (int i = 0; i < 3; ++i) {
        const bool is_max = var[i] >= rho * (1.0 - 1e-9);
        const double ki = (is_max ? k : 0.0) + cfg.k0;
        child_log_scales[i] = g.log_scales[i] - std::log(ki);
    }

    std::vector<Gaussian3D> children;
    children.reserve(static_cast<std::size_t>(cfg.K));
    for (int c = 0; c < cfg.K; ++c) {
        Gaussian3D child = g;
        child.log_scales = child_log_scales;
        child.position = detail::sample_position(g, rng);
        children.push_back(child);
    }
    return children;
}

enum class DensifyActionKind { None, Clone, Split };

struct DensifyAction {
    DensifyActionKind kind = DensifyActionKind::None;
    std::vector<Gaussian3D> result;  // replaces the parent when kind != None… see note
};

// Baseline 3D-GS densification. Above the gradient gate: split (all axes
// shrunk by 1.6, two children sampled from the parent density) for large
// Gaussians, clone for small ones (the copy nudged along the accumulated
// positional gradient direction). The result replaces the parent for Split;
// for Clone it is the extra copy, the parent stays.
inline DensifyAction baseline_densify(const Gaussian3D& g, double grad_norm,
                                      const DensifyConfig& cfg, std::mt19937_64& rng,
                                      const Vec3& grad_dir = {}) {
    DensifyAction act;
    if (!(grad_norm > cfg.tau_loss)) return act;

    const double rho = spectral_radius(eig_sym(covariance_of(g)));
    if (rho > cfg.tau_radius) {
        act.kind = DensifyActionKind::Split;
        const double lnk = std::log(kBaselineSplitK);
        for (int c = 0; c < 2; ++c) {
            Gaussian3D child = g;
            child.position = detail::sample_position(g, rng);
            child.log_scales = {g.log_scales.x - lnk, g.log_scales.y - lnk, g.log_scales.z - lnk};
            act.result.push_back(child);
        }
    } else {
        act.kind = DensifyActionKind::Clone;
        Gaussian3D copy = g;
        const double dn = grad_dir.norm();
        if (dn > 0.0) {
            const double step = 0.1 * std::sqrt(rho);
            copy.position = copy.position + grad_dir * (step / dn);
        }
        act.result.push_back(copy);
    }
    return act;
}

// True (remove) when the opacity is below the floor or the spectrum is
// invalid: non-finite, negative beyond the PSD tolerance, or kappa above
// the configured bound.
inline bool prune(const Gaussian3D& g, const DensifyConfig& cfg) {
    if (g.opacity() < cfg.eps_o) return true;
    Spectrum3 sp;
    try {
        sp = eig_sym(covariance_of(g));
    } catch (const NonFiniteError&) {
        return true;
    }
    if (sp.not_psd) return true;
    for (double l : sp.lambda)
        if (!std::isfinite(l)) return true;
    const double kappa = condition_number(sp);
    return kappa > cfg.kappa_max;
}

// Which of prune's two gates fired — for per-epoch stats.
inline bool prune_is_opacity(const Gaussian3D& g, const DensifyConfig& cfg) {
    return g.opacity() < cfg.eps_o;
}

struct RefineResult {
    Scene scene;
    DensifyStats stats;
    // For each output Gaussian: index of the input Gaussian whose optimizer
    // state it inherits, or -1 for freshly created children.
    std::vector<int> moment_source;
};

// One refinement epoch over the whole scene, per-Gaussian order: prune,
// then loss-based densify, then spectral split (skipped if the Gaussian was
// already replaced by a loss split; baseline children keep the parent's
// shape, so the next epoch catches them).
inline RefineResult refine_scene(const Scene& scene, const std::vector<double>& grad_norms,
                                 const std::vector<Vec3>& grad_dirs, const DensifyConfig& cfg,
                                 std::mt19937_64& rng, bool enable_loss_densify,
                                 bool enable_spectral_split) {
    if (!grad_norms.empty() && grad_norms.size() != scene.size())
        throw ShapeMismatchError("refine_scene: grad_norms size mismatch");
    if (!grad_dirs.empty() && grad_dirs.size() != scene.size())
        throw ShapeMismatchError("refine_scene: grad_dirs size mismatch");

    RefineResult out;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& g = scene[i];

        if (prune(g, cfg)) {
            if (prune_is_opacity(g, cfg))
                ++out.stats.pruned_opacity;
            else
                ++out.stats.pruned_spectrum;
            continue;
        }

        bool parent_alive = true;
        if (enable_loss_densify && !grad_norms.empty()) {
            const Vec3 dir = grad_dirs.empty() ? Vec3{} : grad_dirs[i];
            const DensifyAction act = baseline_densify(g, grad_norms[i], cfg, rng, dir);
            if (act.kind == DensifyActionKind::Split) {
                ++out.stats.split_baseline;
                parent_alive = false;
                for (const auto& child : act.result) {
                    out.scene.push_back(child);
                    out.moment_source.push_back(-1);
                }
            } else if (act.kind == DensifyActionKind::Clone) {
                ++out.stats.cloned;
                for (const auto& child : act.result) {
                    out.scene.push_back(child);
                    out.moment_source.push_back(-1);
                }
            }
        }

        if (parent_alive) {
            if (enable_spectral_split &&
                should_split_spectral(covariance_of(g), cfg.tau_spectral)) {
                ++out.stats.split_spectral;
                for (const auto& child : spectral_split(g, cfg, rng)) {
                    out.scene.push_back(child);
                    out.moment_source.push_back(-1);
                }
            } else {
                out.scene.push_back(g);
                out.moment_source.push_back(static_cast<int>(i));
            }
        }
    }
    return out;
}

} // namespace sgs
