#pragma once

// Deterministic synthetic scene and camera-rig generators used by the CLI
// and the end-to-end benchmarks: a needle field (strongly anisotropic), an
// isotropic field, and a textured ball (a sphere shell carrying seeded
// high-frequency procedural color).

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spectral_splat/scene.hpp"

namespace sgs {

inline constexpr double kSynthPi = std::numbers::pi;

enum class SynthKind { Needles, Isotropic, TexturedBall };

inline const char* synth_kind_name(SynthKind k) {
    switch (k) {
        case SynthKind::Needles: return "needles";
        case SynthKind::Isotropic: return "isotropic";
        case SynthKind::TexturedBall: return "textured-ball";
    }
    return "?";
}

inline std::optional<SynthKind> parse_synth_kind(const std::string& name) {
    if (name == "textured-ball-analog") return SynthKind::TexturedBall;
    for (SynthKind k : {SynthKind::Needles, SynthKind::Isotropic, SynthKind::TexturedBall}) {
        if (name == synth_kind_name(k)) return k;
    }
    return std::nullopt;
}

namespace detail {

inline Quat random_unit_quat(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u1 = uni(rng);
    const double u2 = uni(rng);
    const double u3 = uni(rng);
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    return Quat{b * std::cos(2.0 * kSynthPi * u3), a * std::sin(2.0 * kSynthPi * u2),
                a * std::cos(2.0 * kSynthPi * u2), b * std::sin(2.0 * kSynthPi * u3)};
}

inline Vec3 random_in_ball(std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (;;) {
        const Vec3 p{uni(rng), uni(rng), uni(rng)};
        if (p.dot(p) <= 1.0) return p * radius;
    }
}

inline Vec3 random_unit_vector(std::mt19937_64& rng) {
    for (;;) {
        const Vec3 p = random_in_ball(rng, 1.0);
        const double n = p.norm();
        if (n > 1e-3) return p * (1.0 / n);
    }
}

} // namespace detail

inline Scene synth_scene(SynthKind kind, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Scene scene;
    scene.reserve(static_cast<std::size_t>(count));

    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        switch (kind) {
            case SynthKind::Needles: {
                g.position = detail::random_in_ball(rng, 0.8);
                g.rotation = detail::random_unit_quat(rng);
                // Condition number log-uniform in [1e2, 1e4]: variance ratio
                // between the long axis and the two short axes.
                const double kappa = std::pow(10.0, 2.0 + 2.0 * uni(rng));
                const double sigma = 0.02 + 0.03 * uni(rng); // short-axis stddev
                const double l_short = std::log(sigma);
                g.log_scales = {l_short + 0.5 * std::log(kappa), l_short, l_short};
                g.opacity_logit = logit(0.5 + 0.4 * uni(rng));
                g.color = {0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng)};
                break;
            }
            case SynthKind::Isotropic: {
                g.position = detail::random_in_ball(rng, 0.8);
                g.rotation = detail::random_unit_quat(rng);
                const double sigma = 0.03 + 0.05 * uni(rng);
                const double l = std::log(sigma);
                g.log_scales = {l, l, l};
                g.opacity_logit = logit(0.5 + 0.4 * uni(rng));
                g.color = {0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng)};
                break;
            }
            case SynthKind::TexturedBall: {
                // Shell of a radius-0.5 sphere with mild radial jitter; the
                // color is a high-frequency plane-wave texture, so nearby
                // Gaussians carry strongly different colors.
                const Vec3 dir = detail::random_unit_vector(rng);
                g.position = dir * (0.5 + 0.04 * (uni(rng) - 0.5));
                g.rotation = detail::random_unit_quat(rng);
                const double base = std::log(0.02 + 0.025 * uni(rng));
                g.log_scales = {base + 0.4 * (uni(rng) - 0.5), base + 0.4 * (uni(rng) - 0.5),
                                base + 0.4 * (uni(rng) - 0.5)};
                g.opacity_logit = logit(0.6 + 0.35 * uni(rng));
                const Vec3 freq{10.0 + 15.0 * uni(rng), 10.0 + 15.0 * uni(rng),
                                10.0 + 15.0 * uni(rng)};
                const double phase = 2.0 * kSynthPi * uni(rng);
                g.color = {0.5 + 0.45 * std::sin(freq.x * g.position.x + phase),
                           0.5 + 0.45 * std::sin(freq.y * g.position.y + 2.0 * phase),
                           0.5 + 0.45 * std::sin(freq.z * g.position.z + 3.0 * phase)};
                break;
            }
        }
        scene.push_back(g);
    }
    return scene;
}

// A structure-free starting point for fitting: mid-gray isotropic blobs
// scattered through the working volume.
inline Scene random_init_scene(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Scene scene;
    scene.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        g.position = detail::random_in_ball(rng, 0.7);
        g.rotation = detail::random_unit_quat(rng);
        const double l = std::log(0.04 + 0.03 * uni(rng));
        g.log_scales = {l, l, l};
        g.opacity_logit = logit(0.3 + 0.2 * uni(rng));
        g.color = {0.4 + 0.2 * uni(rng), 0.4 + 0.2 * uni(rng), 0.4 + 0.2 * uni(rng)};
        scene.push_back(g);
    }
    return scene;
}

struct SynthRig {
    std::vector<CameraView> train_views; // ring of 8
    std::vector<CameraView> test_views;  // 3 held-out poses between ring stops
};

// Ring of `train_count` cameras at radius `radius` looking at the origin,
// plus `test_count` held-out cameras at offset azimuths and a different
// elevation, so test poses are never training poses.
inline SynthRig synth_camera_rig(int width, int height, double focal, double radius = 3.0,
                                 int train_count = 8, int test_count = 3) {
    SynthRig rig;
    for (int i = 0; i < train_count; ++i) {
        const double theta = 2.0 * kSynthPi * static_cast<double>(i) / train_count;
        const double elev = (i % 2 == 0) ? 0.35 : -0.35;
        const Vec3 eye{radius * std::sin(theta), elev, radius * std::cos(theta)};
        rig.train_views.push_back(
            CameraView::look_at(eye, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, focal, focal, width,
                                height));
    }
    for (int i = 0; i < test_count; ++i) {
        const double theta =
            2.0 * kSynthPi * (static_cast<double>(i) + 0.5) / std::max(test_count, 1) + 0.21;
        const Vec3 eye{radius * std::sin(theta), 0.7, radius * std::cos(theta)};
        rig.test_views.push_back(
            CameraView::look_at(eye, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, focal, focal, width,
                                height));
    }
    return rig;
}

} // namespace sgs
