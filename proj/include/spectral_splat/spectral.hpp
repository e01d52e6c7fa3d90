#pragma once

// Symmetric eigendecomposition and spectral shape metrics for 2x2/3x3
// covariances: spectral radius, condition number, spectral entropy (with
// closed forms in terms of the condition number), eccentricity, and a
// Fourier-closure check used by the filter analysis.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/linalg.hpp"

namespace sgs {

// Relative tolerance below which negative eigenvalues are treated as
// float noise and clamped to zero.
inline constexpr double kEpsPsd = 1e-9;

inline constexpr double kKappaInf = std::numeric_limits<double>::infinity();

struct Spectrum2 {
    std::array<double, 2> lambda{};  // descending
    Mat2 basis;                      // columns are eigenvectors
    bool not_psd = false;
};

struct Spectrum3 {
    std::array<double, 3> lambda{};  // descending
    Mat3 basis;                      // columns are eigenvectors
    bool not_psd = false;
};

namespace detail {

// Clamp small negative eigenvalues (|λ| ≤ kEpsPsd·|tr|) to zero; anything
// more negative marks the spectrum as not positive semi-definite but is
// still clamped so downstream metrics stay defined.
template <std::size_t N>
inline bool clamp_spectrum(std::array<double, N>& lambda) {
    double tr = 0.0;
    for (double l : lambda) tr += l;
    const double tol = kEpsPsd * std::max(std::abs(tr), 1.0e-300);
    bool not_psd = false;
    for (double& l : lambda) {
        if (l < 0.0) {
            if (l < -tol) not_psd = true;
            l = 0.0;
        }
    }
    return not_psd;
}

} // namespace detail

// Closed-form eigendecomposition of a symmetric 2x2 matrix.
inline Spectrum2 eig_sym(const SymMat2& m) {
    if (!m.finite()) throw NonFiniteError("eig_sym: non-finite 2x2 input");
    Spectrum2 sp;
    const double tr = m.trace();
    const double diff = m.xx - m.yy;
    const double disc = std::sqrt(diff * diff + 4.0 * m.xy * m.xy);
    sp.lambda = {0.5 * (tr + disc), 0.5 * (tr - disc)};

    if (m.xy == 0.0) {
        if (m.xx >= m.yy) {
            sp.basis.m = {{{1.0, 0.0}, {0.0, 1.0}}};
        } else {
            sp.basis.m = {{{0.0, 1.0}, {-1.0, 0.0}}};
        }
    } else {
        // Eigenvector of λ₁ from whichever row gives the better-conditioned
        // expression; the second eigenvector is its perpendicular.
        Vec2 v1{m.xy, sp.lambda[0] - m.xx};
        Vec2 v2{sp.lambda[0] - m.yy, m.xy};
        Vec2 v = (v1.norm() >= v2.norm()) ? v1 : v2;
        const double n = v.norm();
        v = {v.x / n, v.y / n};
        sp.basis.m = {{{v.x, -v.y}, {v.y, v.x}}};
    }
    sp.not_psd = detail::clamp_spectrum(sp.lambda);
    return sp;
}

// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Robust for
// near-degenerate needle covariances where the closed-form roots lose
// precision.
inline Spectrum3 eig_sym(const SymMat3& m) {
    if (!m.finite()) throw NonFiniteError("eig_sym: non-finite 3x3 input");
    Mat3 a = m.full();
    Mat3 v = Mat3::identity();

    double frob = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) frob += a.m[i][j] * a.m[i][j];
    frob = std::sqrt(frob);
    const double tol = 1e-12 * frob;

    constexpr int kMaxSweeps = 50;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        const double off = std::sqrt(2.0 * (a.m[0][1] * a.m[0][1] +
                                            a.m[0][2] * a.m[0][2] +
                                            a.m[1][2] * a.m[1][2]));
        if (off <= tol) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                const double apq = a.m[p][q];
                if (apq == 0.0) continue;
                // Annihilation angle: smaller-magnitude root of t^2 - 2*theta*t - 1.
                const double theta = (a.m[p][p] - a.m[q][q]) / (2.0 * apq);
                const double sign = theta >= 0.0 ? 1.0 : -1.0;
                const double t = -sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Mat3 g = Mat3::identity();
                g.m[p][p] = c;
                g.m[q][q] = c;
                g.m[p][q] = s;
                g.m[q][p] = -s;
                a = g.transposed() * a * g;
                a.m[p][q] = a.m[q][p] = 0.0;  // exact by construction
                v = v * g;
            }
        }
    }

    Spectrum3 sp;
    std::array<int, 3> order{0, 1, 2};
    std::array<double, 3> diag{a.m[0][0], a.m[1][1], a.m[2][2]};
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return diag[i] > diag[j]; });
    for (int k = 0; k < 3; ++k) {
        sp.lambda[k] = diag[order[k]];
        for (int r = 0; r < 3; ++r) sp.basis.m[r][k] = v.m[r][order[k]];
    }
    sp.not_psd = detail::clamp_spectrum(sp.lambda);
    return sp;
}

// λ₁ — the scale of the Gaussian.
inline double spectral_radius(const Spectrum2& sp) { return sp.lambda[0]; }
inline double spectral_radius(const Spectrum3& sp) { return sp.lambda[0]; }

namespace detail {

inline double condition_number_impl(double lmax, double lmin) {
    if (lmin < 0.0) throw DegenerateError("condition_number: negative eigenvalue");
    if (lmin == 0.0) return kKappaInf;
    return lmax / lmin;
}

template <std::size_t N>
inline double entropy_impl(const std::array<double, N>& lambda) {
    double tr = 0.0;
    for (double l : lambda) tr += l;
    if (!(tr > 0.0)) throw ZeroTraceError("spectral_entropy: trace <= 0");
    double h = 0.0;
    for (double l : lambda) {
        const double t = l / tr;
        if (t > 0.0) h -= t * std::log(t);  // 0·ln 0 := 0
    }
    return h;
}

} // namespace detail

// λ₁/λ_min; +inf sentinel when λ_min = 0 after clamping.
inline double condition_number(const Spectrum2& sp) {
    return detail::condition_number_impl(sp.lambda[0], sp.lambda[1]);
}
inline double condition_number(const Spectrum3& sp) {
    return detail::condition_number_impl(sp.lambda[0], sp.lambda[2]);
}

// H = −Σ tᵢ ln tᵢ, tᵢ = λᵢ / tr. Range [0, ln dim].
inline double spectral_entropy(const Spectrum2& sp) { return detail::entropy_impl(sp.lambda); }
inline double spectral_entropy(const Spectrum3& sp) { return detail::entropy_impl(sp.lambda); }

// Closed form for the 2D entropy of a spectrum (κ, 1):
// H = ln(κ+1) − κ ln κ / (κ+1).
inline double entropy_from_kappa_2d(double kappa) {
    if (!(kappa >= 1.0)) throw DomainError("entropy_from_kappa: kappa < 1");
    if (std::isinf(kappa)) return 0.0;
    return std::log(kappa + 1.0) - kappa * std::log(kappa) / (kappa + 1.0);
}

// Closed form for the 3D entropy of a spectrum (κ, λ, 1) with λ the middle
// eigenvalue expressed relative to the smallest:
// H = ln(κ+λ+1) − (κ ln κ + λ ln λ) / (κ+λ+1).
inline double entropy_from_kappa_3d(double kappa, double lambda_mid_ratio) {
    if (!(kappa >= 1.0)) throw DomainError("entropy_from_kappa: kappa < 1");
    if (!(lambda_mid_ratio >= 1.0) || lambda_mid_ratio > kappa)
        throw DomainError("entropy_from_kappa: need 1 <= lambda_mid_ratio <= kappa");
    if (std::isinf(kappa)) return 0.0;
    const double denom = kappa + lambda_mid_ratio + 1.0;
    return std::log(denom) -
           (kappa * std::log(kappa) + lambda_mid_ratio * std::log(lambda_mid_ratio)) / denom;
}

inline double entropy_from_kappa(int dim, double kappa, double lambda_mid_ratio = 1.0) {
    if (dim == 2) return entropy_from_kappa_2d(kappa);
    if (dim == 3) return entropy_from_kappa_3d(kappa, lambda_mid_ratio);
    throw DomainError("entropy_from_kappa: dim must be 2 or 3");
}

// e = √(1 − 1/κ) of the level-set ellipse.
inline double eccentricity(double kappa) {
    if (!(kappa >= 1.0)) throw DomainError("eccentricity: kappa < 1");
    return std::sqrt(1.0 - 1.0 / kappa);
}

struct SpectralSummary {
    double radius = 0.0;
    double kappa = 1.0;     // +inf sentinel allowed
    double entropy = 0.0;
    double eccentricity = 0.0;
};

namespace detail {

template <typename Spectrum>
inline SpectralSummary summarize_impl(const Spectrum& sp) {
    SpectralSummary s;
    s.radius = spectral_radius(sp);
    s.kappa = condition_number(sp);
    s.entropy = spectral_entropy(sp);
    s.eccentricity = sgs::eccentricity(s.kappa);
    return s;
}

} // namespace detail

inline SpectralSummary summarize(const Spectrum2& sp) { return detail::summarize_impl(sp); }
inline SpectralSummary summarize(const Spectrum3& sp) { return detail::summarize_impl(sp); }
inline SpectralSummary summarize(const SymMat2& m) { return summarize(eig_sym(m)); }
inline SpectralSummary summarize(const SymMat3& m) { return summarize(eig_sym(m)); }

// κ serialization: the +inf sentinel prints as "inf".
inline std::string kappa_repr(double kappa) {
    if (std::isinf(kappa)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", kappa);
    return buf;
}

// dH/dλ_k = −(ln t_k + H) / tr for the eigenvalue-sum entropy. Used by the
// shape regularizer; eigenvalues are assumed strictly positive (they come
// from exp-parameterized scales), tiny values are floored inside the log.
inline Vec3 entropy_gradient(const Spectrum3& sp) {
    const double tr = sp.lambda[0] + sp.lambda[1] + sp.lambda[2];
    if (!(tr > 0.0)) throw ZeroTraceError("entropy_gradient: trace <= 0");
    const double h = spectral_entropy(sp);
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
        const double t = std::max(sp.lambda[i] / tr, 1e-300);
        g[i] = -(std::log(t) + h) / tr;
    }
    return g;
}

// Checks that the sampled unit-mass Gaussian's discrete Fourier transform
// magnitude matches the closed form exp(−2π² ωᵀΣω) on the half-Nyquist
// band. Returns the max abs deviation.
inline double fourier_closure_check(const SymMat2& sigma, int grid_size, double extent) {
    if (!sigma.finite()) throw NonFiniteError("fourier_closure_check: non-finite covariance");
    const double det = sigma.det();
    if (!(sigma.xx > 0.0) || !(det > 0.0))
        throw DegenerateError("fourier_closure_check: covariance not SPD");
    if (grid_size < 4 || !(extent > 0.0))
        throw DomainError("fourier_closure_check: bad grid");

    const auto inv = sigma.inverse();
    if (!inv) throw DegenerateError("fourier_closure_check: covariance not invertible");

    const int n = grid_size;
    const double h = 2.0 * extent / n;
    const double peak = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));

    // Sample positions x_i = (i − n/2)·h.
    std::vector<double> coord(n);
    for (int i = 0; i < n; ++i) coord[i] = (i - n / 2) * h;

    std::vector<double> f(static_cast<std::size_t>(n) * n);
    double boundary_max = 0.0;
    for (int iy = 0; iy < n; ++iy) {
        for (int ix = 0; ix < n; ++ix) {
            const Vec2 x{coord[ix], coord[iy]};
            const double q = x.dot(*inv * x);
            const double val = peak * std::exp(-0.5 * q);
            f[static_cast<std::size_t>(iy) * n + ix] = val;
            if (ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1)
                boundary_max = std::max(boundary_max, val);
        }
    }
    if (boundary_max > 1e-8 * peak)
        throw GridTooSmallError("fourier_closure_check: boundary mass above 1e-8 of peak");

    // Direct transform F(ω) ≈ h² Σ f(x) e^{−2πi ω·x}, applied separably:
    // first over x for each row, then over y.
    const int kband = n / 4;  // half-Nyquist: |ω| ≤ 1/(4h)
    const int nfreq = 2 * kband + 1;
    std::vector<double> freq(nfreq);
    for (int k = 0; k < nfreq; ++k) freq[k] = (k - kband) / (n * h);

    using cd = std::complex<double>;
    std::vector<cd> stage(static_cast<std::size_t>(nfreq) * n);
    for (int k = 0; k < nfreq; ++k) {
        for (int iy = 0; iy < n; ++iy) {
            cd acc{0.0, 0.0};
            for (int ix = 0; ix < n; ++ix) {
                const double phase = -2.0 * std::numbers::pi * freq[k] * coord[ix];
                acc += f[static_cast<std::size_t>(iy) * n + ix] * cd{std::cos(phase), std::sin(phase)};
            }
            stage[static_cast<std::size_t>(k) * n + iy] = acc;
        }
    }

    double max_err = 0.0;
    for (int ky = 0; ky < nfreq; ++ky) {
        for (int kx = 0; kx < nfreq; ++kx) {
            cd acc{0.0, 0.0};
            for (int iy = 0; iy < n; ++iy) {
                const double phase = -2.0 * std::numbers::pi * freq[ky] * coord[iy];
                acc += stage[static_cast<std::size_t>(kx) * n + iy] * cd{std::cos(phase), std::sin(phase)};
            }
            const double dft_mag = std::abs(acc) * h * h;
            const Vec2 w{freq[kx], freq[ky]};
            const double closed = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * w.dot(sigma * w));
            max_err = std::max(max_err, std::abs(dft_mag - closed));
        }
    }
    return max_err;
}

} // namespace sgs
