#pragma once

// Photometric losses and quality metrics on framebuffers: L1, single-scale
// SSIM (11x11 Gaussian window, sigma 1.5, standard stabilizers) with an
// analytic backward pass, the D-SSIM transform, PSNR, and the combined
// training loss (1 - lambda1) * L1 + lambda1 * DSSIM.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/renderer.hpp"

namespace sgs {

inline void require_same_shape(const Framebuffer& a, const Framebuffer& b, const char* who) {
    if (a.width != b.width || a.height != b.height) {
        throw ShapeMismatchError(std::string(who) + ": image sizes " + std::to_string(a.width) +
                                 "x" + std::to_string(a.height) + " vs " +
                                 std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

// ---------------------------------------------------------------------------
// L1 and PSNR
// ---------------------------------------------------------------------------

inline double l1_loss(const Framebuffer& prediction, const Framebuffer& target) {
    require_same_shape(prediction, target, "l1_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.rgb.size(); ++i) {
        acc += std::abs(prediction.rgb[i] - target.rgb[i]);
    }
    return acc / static_cast<double>(prediction.rgb.size());
}

inline double mse(const Framebuffer& prediction, const Framebuffer& target) {
    require_same_shape(prediction, target, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.rgb.size(); ++i) {
        const double d = prediction.rgb[i] - target.rgb[i];
        acc += d * d;
    }
    return acc / static_cast<double>(prediction.rgb.size());
}

// 10*log10(1/MSE) on the [0,1] range, capped at 100 dB (the cap is continuous:
// MSE = 1e-10 maps to exactly 100).
inline double psnr(const Framebuffer& prediction, const Framebuffer& target) {
    const double m = mse(prediction, target);
    if (m < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / m);
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr int kSsimRadius = 5; // 11-tap window
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, 11>& ssim_window() {
    static const std::array<double, 11> w = [] {
        std::array<double, 11> g{};
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - kSsimRadius;
            g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += g[static_cast<std::size_t>(i)];
        }
        for (double& v : g) v /= sum;
        return g;
    }();
    return w;
}

// Zero-padded same-size separable blur; the kernel is symmetric, so this is
// its own adjoint and serves both forward and backward passes.
inline std::vector<double> ssim_blur(const std::vector<double>& src, int width, int height) {
    const auto& w = ssim_window();
    std::vector<double> tmp(src.size(), 0.0);
    std::vector<double> out(src.size(), 0.0);
    for (int y = 0; y < height; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * static_cast<std::size_t>(width);
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
                const int xx = x + k;
                if (xx < 0 || xx >= width) continue;
                acc += w[static_cast<std::size_t>(k + kSsimRadius)] *
                       src[row + static_cast<std::size_t>(xx)];
            }
            tmp[row + static_cast<std::size_t>(x)] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
                const int yy = y + k;
                if (yy < 0 || yy >= height) continue;
                acc += w[static_cast<std::size_t>(k + kSsimRadius)] *
                       tmp[static_cast<std::size_t>(yy) * static_cast<std::size_t>(width) +
                           static_cast<std::size_t>(x)];
            }
            out[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)] = acc;
        }
    }
    return out;
}

inline std::vector<double> channel_plane(const Framebuffer& fb, int channel) {
    std::vector<double> plane(fb.pixel_count());
    for (std::size_t p = 0; p < plane.size(); ++p) {
        plane[p] = fb.rgb[3 * p + static_cast<std::size_t>(channel)];
    }
    return plane;
}

} // namespace detail

// Mean single-scale SSIM over all channels. When `grad_wrt_first` is non-null
// it receives d(mean SSIM)/d(first image) accumulated per rgb entry.
inline double ssim(const Framebuffer& prediction, const Framebuffer& target,
                   Framebuffer* grad_wrt_first = nullptr) {
    require_same_shape(prediction, target, "ssim");
    const int w = prediction.width;
    const int h = prediction.height;
    const std::size_t npx = prediction.pixel_count();
    const double denom = static_cast<double>(npx) * 3.0;
    if (grad_wrt_first) *grad_wrt_first = Framebuffer(w, h);

    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const std::vector<double> y = detail::channel_plane(prediction, c);
        const std::vector<double> x = detail::channel_plane(target, c);
        std::vector<double> yy(npx), xy(npx);
        for (std::size_t p = 0; p < npx; ++p) {
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const std::vector<double> mu_x = detail::ssim_blur(x, w, h);
        const std::vector<double> mu_y = detail::ssim_blur(y, w, h);
        std::vector<double> xx(npx);
        for (std::size_t p = 0; p < npx; ++p) xx[p] = x[p] * x[p];
        const std::vector<double> e_xx = detail::ssim_blur(xx, w, h);
        const std::vector<double> e_yy = detail::ssim_blur(yy, w, h);
        const std::vector<double> e_xy = detail::ssim_blur(xy, w, h);

        std::vector<double> g_mu, g_exy, g_eyy;
        if (grad_wrt_first) {
            g_mu.assign(npx, 0.0);
            g_exy.assign(npx, 0.0);
            g_eyy.assign(npx, 0.0);
        }
        for (std::size_t p = 0; p < npx; ++p) {
            const double mx = mu_x[p];
            const double my = mu_y[p];
            const double sx = e_xx[p] - mx * mx;
            const double sy = e_yy[p] - my * my;
            const double sxy = e_xy[p] - mx * my;
            const double a1 = 2.0 * mx * my + detail::kSsimC1;
            const double a2 = 2.0 * sxy + detail::kSsimC2;
            const double b1 = mx * mx + my * my + detail::kSsimC1;
            const double b2 = sx + sy + detail::kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad_wrt_first) {
                const double inv_bb = 1.0 / (b1 * b2);
                const double d_a1 = a2 * inv_bb;
                const double d_a2 = a1 * inv_bb;
                const double d_b1 = -s / b1;
                const double d_b2 = -s / b2;
                // partials with respect to (mu_y, E[xy], E[y^2])
                g_mu[p] = d_a1 * 2.0 * mx + d_a2 * (-2.0 * mx) + d_b1 * 2.0 * my +
                          d_b2 * (-2.0 * my);
                g_exy[p] = d_a2 * 2.0;
                g_eyy[p] = d_b2;
            }
        }
        if (grad_wrt_first) {
            const std::vector<double> back_mu = detail::ssim_blur(g_mu, w, h);
            const std::vector<double> back_exy = detail::ssim_blur(g_exy, w, h);
            const std::vector<double> back_eyy = detail::ssim_blur(g_eyy, w, h);
            for (std::size_t p = 0; p < npx; ++p) {
                grad_wrt_first->rgb[3 * p + static_cast<std::size_t>(c)] =
                    (back_mu[p] + x[p] * back_exy[p] + 2.0 * y[p] * back_eyy[p]) / denom;
            }
        }
    }
    return total / denom;
}

// (1 - SSIM) / 2 in [0, 1] for images in [0, 1].
inline double dssim(const Framebuffer& prediction, const Framebuffer& target) {
    return 0.5 * (1.0 - ssim(prediction, target));
}

// ---------------------------------------------------------------------------
// Combined training loss
// ---------------------------------------------------------------------------

struct LossResult {
    double value = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    Framebuffer grad; // d(loss)/d(prediction), rgb channels
};

// L = (1 - lambda1) * L1 + lambda1 * (1 - SSIM)/2, with the gradient taken
// with respect to the prediction (the rendered image).
inline LossResult photometric_loss(const Framebuffer& prediction, const Framebuffer& target,
                                   double lambda1) {
    require_same_shape(prediction, target, "photometric_loss");
    LossResult out;
    out.grad = Framebuffer(prediction.width, prediction.height);

    const double n = static_cast<double>(prediction.rgb.size());
    double l1_acc = 0.0;
    for (std::size_t i = 0; i < prediction.rgb.size(); ++i) {
        const double d = prediction.rgb[i] - target.rgb[i];
        l1_acc += std::abs(d);
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        out.grad.rgb[i] = (1.0 - lambda1) * sign / n;
    }
    out.l1 = l1_acc / n;

    if (lambda1 != 0.0) {
        Framebuffer ssim_grad;
        const double s = ssim(prediction, target, &ssim_grad);
        out.dssim = 0.5 * (1.0 - s);
        for (std::size_t i = 0; i < out.grad.rgb.size(); ++i) {
            out.grad.rgb[i] += lambda1 * (-0.5) * ssim_grad.rgb[i];
        }
    } else {
        out.dssim = 0.0;
    }
    out.value = (1.0 - lambda1) * out.l1 + lambda1 * out.dssim;
    return out;
}

} // namespace sgs
