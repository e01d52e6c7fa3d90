#pragma once

// Optimization loop: Adam over the 14 per-Gaussian parameters, the combined
// photometric loss, the entropy shape regularizer, periodic refinement
// (prune / clone / split) with optimizer-state remapping, and the named
// training variants that wire filters and densification strategies together.

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "spectral_splat/densify.hpp"
#include "spectral_splat/errors.hpp"
#include "spectral_splat/filters.hpp"
#include "spectral_splat/image_metrics.hpp"
#include "spectral_splat/renderer.hpp"
#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"

namespace sgs {

// ---------------------------------------------------------------------------
// Scene-level spectral statistics
// ---------------------------------------------------------------------------

// Unweighted mean covariance entropy over the scene; ln 3 for isotropic
// Gaussians, approaching 0 as shapes degenerate into needles.
inline double scene_entropy_metric(const Scene& scene) {
    if (scene.empty()) throw EmptySceneError("scene_entropy_metric: empty scene");
    double acc = 0.0;
    for (const Gaussian3D& g : scene) {
        acc += spectral_entropy(eig_sym(covariance_of(g)));
    }
    return acc / static_cast<double>(scene.size());
}

inline double scene_kappa_median(const Scene& scene) {
    if (scene.empty()) throw EmptySceneError("scene_kappa_median: empty scene");
    std::vector<double> kappas;
    kappas.reserve(scene.size());
    for (const Gaussian3D& g : scene) {
        kappas.push_back(condition_number(eig_sym(covariance_of(g))));
    }
    std::sort(kappas.begin(), kappas.end());
    const std::size_t n = kappas.size();
    if (n % 2 == 1) return kappas[n / 2];
    return 0.5 * (kappas[n / 2 - 1] + kappas[n / 2]);
}

// ---------------------------------------------------------------------------
// Shape regularizer: mean(ln 3 - H(Sigma))
// ---------------------------------------------------------------------------

struct ShapeRegularizerResult {
    double value = 0.0;
    // d(value)/d(log_scales). The covariance spectrum is exactly
    // {exp(2 l_k)} regardless of orientation, so the entropy has no
    // dependence on the quaternion or the position: those gradients are
    // structurally zero and are not materialized.
    std::vector<Vec3> d_log_scales;
};

inline ShapeRegularizerResult shape_regularizer(const Scene& scene) {
    if (scene.empty()) throw EmptySceneError("shape_regularizer: empty scene");
    const double n = static_cast<double>(scene.size());
    ShapeRegularizerResult out;
    out.d_log_scales.assign(scene.size(), Vec3{});
    const double ln3 = std::log(3.0);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        std::array<double, 3> v{};
        double tr = 0.0;
        for (int k = 0; k < 3; ++k) {
            v[static_cast<std::size_t>(k)] = std::exp(2.0 * scene[i].log_scales[k]);
            tr += v[static_cast<std::size_t>(k)];
        }
        double entropy = 0.0;
        for (double vk : v) {
            const double t = vk / tr;
            entropy -= t * std::log(t);
        }
        out.value += (ln3 - entropy) / n;
        for (int k = 0; k < 3; ++k) {
            const double vk = v[static_cast<std::size_t>(k)];
            const double t = vk / tr;
            const double dh_dv = -(std::log(t) + entropy) / tr;
            // d/dl of (ln3 - H)/n, with dv/dl = 2v
            out.d_log_scales[i][k] = -dh_dv * 2.0 * vk / n;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

inline constexpr int kParamsPerGaussian = 14; // 3 pos + 4 quat + 3 log-scale + 1 opacity + 3 color
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

struct LearningRates {
    double position_init = 1.6e-4;
    double position_final = 1.6e-6; // exponential decay target at the last iteration
    double rotation = 1e-3;
    double log_scales = 5e-3;
    double opacity = 5e-2;
    double color = 2.5e-3;
};

// Exponentially interpolated position learning rate for iteration `iter` of
// `max_iter` (iter counts from 1).
inline double position_lr_at(const LearningRates& lr, int iter, int max_iter) {
    if (max_iter <= 0 || lr.position_init <= 0.0 || lr.position_final <= 0.0)
        return lr.position_init;
    const double t = static_cast<double>(iter) / static_cast<double>(max_iter);
    return lr.position_init * std::pow(lr.position_final / lr.position_init, t);
}

struct AdamMoments {
    std::array<double, kParamsPerGaussian> m{};
    std::array<double, kParamsPerGaussian> v{};
};

struct TrainState {
    Scene scene;
    std::vector<AdamMoments> moments;
    // Refinement statistics accumulated since the last refinement epoch:
    // summed view-space positional-gradient norms, summed world-space
    // positional gradients (the clone direction), and per-Gaussian counts of
    // iterations in which the Gaussian was actually rasterized.
    std::vector<double> accum_grad_norm;
    std::vector<Vec3> accum_grad_dir;
    std::vector<long> accum_count;
    long adam_step_count = 0;
    int iteration = 0;

    explicit TrainState(Scene initial = {}) : scene(std::move(initial)) { reset_bookkeeping(); }

    void reset_bookkeeping() {
        moments.assign(scene.size(), AdamMoments{});
        reset_accumulators();
    }

    void reset_accumulators() {
        accum_grad_norm.assign(scene.size(), 0.0);
        accum_grad_dir.assign(scene.size(), Vec3{});
        accum_count.assign(scene.size(), 0L);
    }
};

namespace detail {

inline void gather_grads(const ParamGrads& grads, std::size_t i,
                         std::array<double, kParamsPerGaussian>& out) {
    for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(k)] = grads.position[i][k];
    for (int k = 0; k < 4; ++k) out[static_cast<std::size_t>(3 + k)] = grads.rotation[i][static_cast<std::size_t>(k)];
    for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(7 + k)] = grads.log_scales[i][k];
    out[10] = grads.opacity_logit[i];
    for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(11 + k)] = grads.color[i][k];
}

inline double slot_lr(const LearningRates& lr, int slot, double position_lr) {
    if (slot < 3) return position_lr;
    if (slot < 7) return lr.rotation;
    if (slot < 10) return lr.log_scales;
    if (slot == 10) return lr.opacity;
    return lr.color;
}

inline void apply_update(Gaussian3D& g, int slot, double delta) {
    if (slot < 3) {
        g.position[slot] -= delta;
    } else if (slot < 7) {
        double* q[4] = {&g.rotation.w, &g.rotation.x, &g.rotation.y, &g.rotation.z};
        *q[slot - 3] -= delta;
    } else if (slot < 10) {
        g.log_scales[slot - 7] -= delta;
    } else if (slot == 10) {
        g.opacity_logit -= delta;
    } else {
        g.color[slot - 11] -= delta;
    }
}

} // namespace detail

// One Adam update over every parameter of every Gaussian. `position_lr` < 0
// means "use lr.position_init" (no decay). Quaternions are re-normalized
// after the step; the moments live in the raw parameter space.
inline void adam_step(TrainState& state, const ParamGrads& grads, const LearningRates& lr,
                      double position_lr = -1.0) {
    if (grads.position.size() != state.scene.size() || state.moments.size() != state.scene.size())
        throw ShapeMismatchError("adam_step: gradient/moment size mismatch with scene");
    const double pos_lr = position_lr >= 0.0 ? position_lr : lr.position_init;
    ++state.adam_step_count;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.adam_step_count));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.adam_step_count));
    std::array<double, kParamsPerGaussian> g{};
    for (std::size_t i = 0; i < state.scene.size(); ++i) {
        detail::gather_grads(grads, i, g);
        AdamMoments& mom = state.moments[i];
        for (int slot = 0; slot < kParamsPerGaussian; ++slot) {
            const std::size_t s = static_cast<std::size_t>(slot);
            mom.m[s] = kAdamBeta1 * mom.m[s] + (1.0 - kAdamBeta1) * g[s];
            mom.v[s] = kAdamBeta2 * mom.v[s] + (1.0 - kAdamBeta2) * g[s] * g[s];
            const double m_hat = mom.m[s] / bias1;
            const double v_hat = mom.v[s] / bias2;
            const double delta =
                detail::slot_lr(lr, slot, pos_lr) * m_hat / (std::sqrt(v_hat) + kAdamEps);
            detail::apply_update(state.scene[i], slot, delta);
        }
        state.scene[i].rotation = state.scene[i].rotation.normalized();
    }
}

// Carries optimizer state across a topology change: output slot j inherits
// the moments of input Gaussian source[j], or starts fresh when source[j] is
// negative (newly created children).
inline std::vector<AdamMoments> remap_moments(const std::vector<AdamMoments>& old,
                                              const std::vector<int>& source) {
    std::vector<AdamMoments> out(source.size());
    for (std::size_t j = 0; j < source.size(); ++j) {
        const int src = source[j];
        if (src < 0) continue;
        if (static_cast<std::size_t>(src) >= old.size())
            throw ShapeMismatchError("remap_moments: source index out of range");
        out[j] = old[static_cast<std::size_t>(src)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training variants
// ---------------------------------------------------------------------------

enum class Variant {
    Baseline3dgs,     // EWA dilation + loss-gated densification
    Mip,              // 3D smoothing + Mip 2D kernel + loss-gated densification
    Spectral,         // view-consistent filter + loss densify + spectral split
    SpectralNoSplit,  // view-consistent filter only
    SpectralNoFilter, // EWA filter + spectral split
    NaiveRegularizer, // baseline plus lambda2 * shape regularizer
};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Baseline3dgs: return "baseline-3dgs";
        case Variant::Mip: return "mip";
        case Variant::Spectral: return "spectral";
        case Variant::SpectralNoSplit: return "spectral-no-split";
        case Variant::SpectralNoFilter: return "spectral-no-filter";
        case Variant::NaiveRegularizer: return "naive-regularizer";
    }
    return "?";
}

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {
        Variant::Baseline3dgs,     Variant::Mip,
        Variant::Spectral,         Variant::SpectralNoSplit,
        Variant::SpectralNoFilter, Variant::NaiveRegularizer,
    };
    return v;
}

inline std::optional<Variant> parse_variant(const std::string& name) {
    for (Variant v : all_variants()) {
        if (name == variant_name(v)) return v;
    }
    return std::nullopt;
}

struct VariantSpec {
    FilterMode filter;
    bool smooth3d = false;
    bool spectral_split = false;
    bool loss_densify = true;
    double default_lambda2 = 0.0;
};

inline VariantSpec variant_spec(Variant v) {
    switch (v) {
        case Variant::Baseline3dgs: return {FilterMode::ewa(), false, false, true, 0.0};
        case Variant::Mip: return {FilterMode::mip(), true, false, true, 0.0};
        case Variant::Spectral: return {FilterMode::view_consistent(), false, true, true, 0.0};
        case Variant::SpectralNoSplit:
            return {FilterMode::view_consistent(), false, false, true, 0.0};
        case Variant::SpectralNoFilter: return {FilterMode::ewa(), false, true, true, 0.0};
        case Variant::NaiveRegularizer: return {FilterMode::ewa(), false, false, true, 0.05};
    }
    return {FilterMode::none(), false, false, true, 0.0};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    int iterations = 3000;
    double lambda1 = 0.2;  // D-SSIM weight in the photometric loss
    double lambda2 = 0.0;  // shape-regularizer weight; 0 defers to the variant default
    int refine_every = 100;
    int refine_start = 500;
    int refine_stop = 0; // 0 resolves to 0.8 * iterations
    int eval_every = 0;  // 0 resolves to max(iterations / 10, 1)
    LearningRates lr;
    std::uint64_t seed = 0;
    int threads = 1;
    RenderConfig raster;
};

struct TrainView {
    CameraView view;
    Framebuffer image;
};

struct TrainLogRecord {
    int iter = 0;
    double loss = 0.0;
    double psnr_mean = 0.0;
    double entropy_mean = 0.0;
    double kappa_median = 0.0;
    std::size_t count = 0;
};

namespace detail {

inline std::string json_number(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline std::string format_log_record(const TrainLogRecord& r) {
    std::string out = "{\"iter\": " + std::to_string(r.iter);
    out += ", \"loss\": " + detail::json_number(r.loss);
    out += ", \"psnr_mean\": " + detail::json_number(r.psnr_mean);
    out += ", \"entropy_mean\": " + detail::json_number(r.entropy_mean);
    out += ", \"kappa_median\": " + detail::json_number(r.kappa_median);
    out += ", \"count\": " + std::to_string(r.count) + "}";
    return out;
}

struct TrainResult {
    Scene scene;
    std::vector<TrainLogRecord> log;
    DensifyStats refine_totals;
    double final_loss = 0.0;
};

namespace detail {

inline std::vector<CameraView> view_list(const std::vector<TrainView>& views) {
    std::vector<CameraView> out;
    out.reserve(views.size());
    for (const TrainView& tv : views) out.push_back(tv.view);
    return out;
}

} // namespace detail

// Fits `initial` to the training views. Deterministic for a fixed seed and
// thread count: views are visited round-robin, refinement sampling uses a
// seeded generator, and the rasterizer is order-stable.
inline TrainResult train(const std::vector<TrainView>& views, const TrainConfig& cfg,
                         const DensifyConfig& dcfg, const FilterMode& mode, Variant variant,
                         Scene initial, std::ostream* log_out = nullptr) {
    if (views.empty()) throw ShapeMismatchError("train: no training views");
    if (initial.empty()) throw EmptySceneError("train: empty initial scene");
    for (const TrainView& tv : views) {
        if (tv.image.width != tv.view.width || tv.image.height != tv.view.height)
            throw ShapeMismatchError("train: view/image size mismatch");
    }

    const VariantSpec spec = variant_spec(variant);
    const double lambda2 = cfg.lambda2 > 0.0 ? cfg.lambda2 : spec.default_lambda2;
    const int refine_stop =
        cfg.refine_stop > 0 ? cfg.refine_stop
                            : static_cast<int>(0.8 * static_cast<double>(cfg.iterations));
    const int eval_every = cfg.eval_every > 0 ? cfg.eval_every : std::max(cfg.iterations / 10, 1);

    RenderOptions options;
    options.filter = mode;
    options.smooth3d = spec.smooth3d;
    options.raster = cfg.raster;
    options.raster.threads = cfg.threads;

    TrainState state(std::move(initial));
    const std::vector<CameraView> cams = detail::view_list(views);
    update_max_sampling_rates(state.scene, cams);
    std::mt19937_64 rng(cfg.seed);

    TrainResult result;
    double last_loss = 0.0;

    const auto evaluate = [&](int iter, double loss_value) {
        TrainLogRecord rec;
        rec.iter = iter;
        rec.loss = loss_value;
        double psnr_acc = 0.0;
        for (const TrainView& tv : views) {
            const Framebuffer fb = render_forward(state.scene, tv.view, options);
            psnr_acc += psnr(fb, tv.image);
        }
        rec.psnr_mean = psnr_acc / static_cast<double>(views.size());
        rec.entropy_mean = scene_entropy_metric(state.scene);
        rec.kappa_median = scene_kappa_median(state.scene);
        rec.count = state.scene.size();
        result.log.push_back(rec);
        if (log_out) (*log_out) << format_log_record(rec) << "\n";
    };

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        state.iteration = iter;
        const TrainView& tv = views[static_cast<std::size_t>((iter - 1) %
                                                            static_cast<int>(views.size()))];

        ForwardContext ctx;
        const Framebuffer fb = render_forward(state.scene, tv.view, options, &ctx);
        LossResult loss = photometric_loss(fb, tv.image, cfg.lambda1);
        ParamGrads grads = render_backward(ctx, loss.grad);

        double total_loss = loss.value;
        if (lambda2 > 0.0) {
            const ShapeRegularizerResult reg = shape_regularizer(state.scene);
            total_loss += lambda2 * reg.value;
            for (std::size_t i = 0; i < state.scene.size(); ++i) {
                grads.log_scales[i] += reg.d_log_scales[i] * lambda2;
            }
        }
        if (!std::isfinite(total_loss)) {
            throw NonFiniteError("train: loss is not finite at iteration " +
                                 std::to_string(iter));
        }
        last_loss = total_loss;

        // Refinement statistics: only Gaussians that were actually rasterized
        // in this view contribute an observation.
        for (const auto& rec : ctx.records) {
            const std::size_t i = static_cast<std::size_t>(rec.scene_index);
            state.accum_grad_norm[i] += grads.mu_proj_norm[i];
            state.accum_grad_dir[i] += grads.position[i];
            ++state.accum_count[i];
        }

        adam_step(state, grads, cfg.lr, position_lr_at(cfg.lr, iter, cfg.iterations));

        if (iter % cfg.refine_every == 0 && iter >= cfg.refine_start && iter <= refine_stop) {
            std::vector<double> grad_norms(state.scene.size(), 0.0);
            std::vector<Vec3> grad_dirs(state.scene.size(), Vec3{});
            for (std::size_t i = 0; i < state.scene.size(); ++i) {
                const double n = static_cast<double>(std::max(state.accum_count[i], 1L));
                grad_norms[i] = state.accum_grad_norm[i] / n;
                grad_dirs[i] = state.accum_grad_dir[i] * (1.0 / n);
            }
            RefineResult refined = refine_scene(state.scene, grad_norms, grad_dirs, dcfg, rng,
                                                spec.loss_densify, spec.spectral_split);
            result.refine_totals.cloned += refined.stats.cloned;
            result.refine_totals.split_baseline += refined.stats.split_baseline;
            result.refine_totals.split_spectral += refined.stats.split_spectral;
            result.refine_totals.pruned_opacity += refined.stats.pruned_opacity;
            result.refine_totals.pruned_spectrum += refined.stats.pruned_spectrum;

            std::vector<AdamMoments> remapped =
                remap_moments(state.moments, refined.moment_source);
            state.scene = std::move(refined.scene);
            state.moments = std::move(remapped);
            state.reset_accumulators();
            if (state.scene.empty())
                throw EmptySceneError("train: scene became empty during refinement at iteration " +
                                      std::to_string(iter));
            update_max_sampling_rates(state.scene, cams);
        }

        if (iter % eval_every == 0 || iter == cfg.iterations) {
            evaluate(iter, total_loss);
        }
    }

    result.scene = std::move(state.scene);
    result.final_loss = last_loss;
    return result;
}

} // namespace sgs
