#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spectral_splat/linalg.hpp"
#include "spectral_splat/spectral.hpp"
#include "support/oracles.hpp"

using namespace sgs;

namespace {

double max_abs_diff(const SymMat3& a, const SymMat3& b) { return (a - b).max_abs(); }

SymMat3 reconstruct(const Spectrum3& sp) {
    const Mat3& b = sp.basis;
    Mat3 d;
    d.m = {{{sp.lambda[0], 0, 0}, {0, sp.lambda[1], 0}, {0, 0, sp.lambda[2]}}};
    return SymMat3::from_full(b * d * b.transposed());
}

// Frozen rotated case: R = axis (1,2,2)/3, angle 0.7, spectrum (9,4,1).
const SymMat3 kRotatedNineFourOne{
    6.43196629628775,    2.0644920941364155,  -2.748255409044928,
    5.1238982460025193,  -0.62113098143783729, 2.4441354577097307};
const Quat kRotatedQuat{0.93937271284737889, 0.11429926915181711, 0.22859853830363422,
                        0.22859853830363422};

} // namespace

TEST_CASE("linalg congruence matches explicit products") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const auto spd = oracle::random_spd(rng);
        const Mat3 r = oracle::random_quat(rng).rotation();
        const SymMat3 via_helper = congruence(r, spd.m);
        const SymMat3 manual = SymMat3::from_full(r * spd.m.full() * r.transposed());
        REQUIRE(max_abs_diff(via_helper, manual) < 1e-12);
    }
}

TEST_CASE("quaternion rotations are orthonormal") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const Mat3 r = oracle::random_quat(rng).rotation();
        const Mat3 should_be_identity = r * r.transposed();
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                REQUIRE(std::abs(should_be_identity.m[a][b] - (a == b ? 1.0 : 0.0)) < 1e-12);
    }
}

TEST_CASE("cholesky factor reconstructs SPD matrices") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 100; ++i) {
        const auto spd = oracle::random_spd(rng);
        const auto l = cholesky(spd.m);
        REQUIRE(l.has_value());
        const SymMat3 back = SymMat3::from_full(*l * l->transposed());
        REQUIRE(max_abs_diff(back, spd.m) < 1e-10 * std::max(1.0, spd.m.max_abs()));
    }
    REQUIRE_FALSE(cholesky(SymMat3::diagonal(1.0, -1.0, 1.0)).has_value());
}

TEST_CASE("right inverse satisfies J * Jpinv = I") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        Mat23 j;
        for (auto& row : j.m)
            for (auto& e : row) e = u(rng);
        const auto p = right_inverse(j);
        REQUIRE(p.has_value());
        // J * P should be the 2x2 identity.
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += j.m[r][k] * p->m[k][c];
                REQUIRE(std::abs(s - (r == c ? 1.0 : 0.0)) < 1e-9);
            }
    }
    Mat23 degenerate;  // rank 0
    REQUIRE_FALSE(right_inverse(degenerate).has_value());
}

TEST_CASE("eig_sym 3x3 on axis-aligned and identity input") {
    SECTION("diagonal entries come back sorted with a permutation basis") {
        const Spectrum3 sp = eig_sym(SymMat3::diagonal(4.0, 1.0, 9.0));
        REQUIRE(sp.lambda[0] == Catch::Approx(9.0).margin(1e-12));
        REQUIRE(sp.lambda[1] == Catch::Approx(4.0).margin(1e-12));
        REQUIRE(sp.lambda[2] == Catch::Approx(1.0).margin(1e-12));
        REQUIRE_FALSE(sp.not_psd);
        // Basis columns should be +/- axis vectors: z, x, y.
        REQUIRE(std::abs(std::abs(sp.basis.m[2][0]) - 1.0) < 1e-12);
        REQUIRE(std::abs(std::abs(sp.basis.m[0][1]) - 1.0) < 1e-12);
        REQUIRE(std::abs(std::abs(sp.basis.m[1][2]) - 1.0) < 1e-12);
    }
    SECTION("identity has unit spectrum") {
        const Spectrum3 sp = eig_sym(SymMat3::identity());
        for (double l : sp.lambda) REQUIRE(l == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("eig_sym recovers the frozen rotated spectrum (9,4,1)") {
    const Spectrum3 sp = eig_sym(kRotatedNineFourOne);
    REQUIRE(std::abs(sp.lambda[0] - 9.0) < 1e-8);
    REQUIRE(std::abs(sp.lambda[1] - 4.0) < 1e-8);
    REQUIRE(std::abs(sp.lambda[2] - 1.0) < 1e-8);

    // Cross-check against the characteristic-polynomial bisection oracle.
    const auto ell = oracle::eigenvalues3(kRotatedNineFourOne);
    for (int i = 0; i < 3; ++i) REQUIRE(std::abs(sp.lambda[i] - ell[i]) < 1e-7);
}

TEST_CASE("eig_sym random SPD round trip and oracle agreement") {
    std::mt19937_64 rng(23);
    int oracle_checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto spd = oracle::random_spd(rng);
        const Spectrum3 sp = eig_sym(spd.m);

        const double scale = std::max(1.0, spd.m.max_abs());
        REQUIRE(max_abs_diff(reconstruct(sp), spd.m) <= 1e-8 * scale);
        REQUIRE(sp.lambda[0] >= sp.lambda[1]);
        REQUIRE(sp.lambda[1] >= sp.lambda[2]);

        // Recovery of exp(2*log_scales), sorted, within 1e-8 relative.
        for (int k = 0; k < 3; ++k)
            REQUIRE(std::abs(sp.lambda[k] - spd.lambda[k]) <= 1e-8 * std::max(1.0, spd.lambda[k]));

        // Basis orthonormality within 1e-9.
        const Mat3 btb = sp.basis.transposed() * sp.basis;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                REQUIRE(std::abs(btb.m[a][b] - (a == b ? 1.0 : 0.0)) < 1e-9);

        if (i % 100 == 0) {
            const auto ell = oracle::eigenvalues3(spd.m);
            for (int k = 0; k < 3; ++k)
                REQUIRE(std::abs(sp.lambda[k] - ell[k]) <= 1e-6 * std::max(1.0, ell[k]));
            ++oracle_checked;
        }
    }
    REQUIRE(oracle_checked == 100);
}

TEST_CASE("eig_sym 2x2 closed form matches the bisection oracle") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 2000; ++i) {
        SymMat2 m{u(rng), u(rng), u(rng)};
        m.xx = std::abs(m.xx) + 0.1;
        m.yy = std::abs(m.yy) + 0.1;
        m.xy *= 0.3 * std::sqrt(m.xx * m.yy);  // keep the matrix positive definite
        const Spectrum2 sp = eig_sym(m);
        const auto ell = oracle::eigenvalues2(m);
        REQUIRE(std::abs(sp.lambda[0] - ell[0]) < 1e-9 * std::max(1.0, std::abs(ell[0])));
        REQUIRE(std::abs(sp.lambda[1] - ell[1]) < 1e-9 * std::max(1.0, std::abs(ell[1])));

        // Reconstruction through the eigenbasis.
        const Vec2 e0 = sp.basis.col(0);
        const Vec2 e1 = sp.basis.col(1);
        const double rxx = sp.lambda[0] * e0.x * e0.x + sp.lambda[1] * e1.x * e1.x;
        const double rxy = sp.lambda[0] * e0.x * e0.y + sp.lambda[1] * e1.x * e1.y;
        const double ryy = sp.lambda[0] * e0.y * e0.y + sp.lambda[1] * e1.y * e1.y;
        const double scale = std::max(1.0, m.max_abs());
        REQUIRE(std::abs(rxx - m.xx) < 1e-8 * scale);
        REQUIRE(std::abs(rxy - m.xy) < 1e-8 * scale);
        REQUIRE(std::abs(ryy - m.yy) < 1e-8 * scale);
    }
}

TEST_CASE("eig_sym error and clamp behavior") {
    SECTION("non-finite input throws") {
        SymMat3 bad = SymMat3::identity();
        bad.xy = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_AS(eig_sym(bad), NonFiniteError);
    }
    SECTION("tiny negatives clamp silently") {
        const Spectrum3 sp = eig_sym(SymMat3::diagonal(1.0, 1.0, -1e-12));
        REQUIRE_FALSE(sp.not_psd);
        REQUIRE(sp.lambda[2] == 0.0);
    }
    SECTION("clearly negative eigenvalues set the flag and clamp") {
        const Spectrum3 sp = eig_sym(SymMat3::diagonal(1.0, 1.0, -0.5));
        REQUIRE(sp.not_psd);
        REQUIRE(sp.lambda[2] == 0.0);
    }
}

TEST_CASE("spectral_radius") {
    REQUIRE(spectral_radius(eig_sym(SymMat3::diagonal(4, 1, 9))) == Catch::Approx(9.0));
    REQUIRE(spectral_radius(eig_sym(SymMat3::identity())) == Catch::Approx(1.0));
    REQUIRE(spectral_radius(eig_sym(SymMat3::diagonal(25, 1, 1))) == Catch::Approx(25.0));
}

TEST_CASE("condition_number") {
    REQUIRE(condition_number(eig_sym(SymMat3::diagonal(9, 4, 1))) == Catch::Approx(9.0));
    REQUIRE(condition_number(eig_sym(SymMat3::identity())) == Catch::Approx(1.0));
    // The fixed-training-Gaussian anisotropy level: kappa = 144.
    REQUIRE(condition_number(eig_sym(SymMat3::diagonal(144, 1, 1))) == Catch::Approx(144.0));
    SECTION("zero minimum eigenvalue reports the +inf sentinel") {
        const double k = condition_number(eig_sym(SymMat3::diagonal(1, 1, 0)));
        REQUIRE(std::isinf(k));
        REQUIRE(kappa_repr(k) == "inf");
    }
}

TEST_CASE("spectral_entropy frozen values") {
    REQUIRE(std::abs(spectral_entropy(eig_sym(SymMat3::identity())) - std::log(3.0)) < 1e-12);
    // 2D spectrum (4,1): direct summation gives 0.500402423538.
    REQUIRE(std::abs(spectral_entropy(eig_sym(SymMat2::diagonal(4, 1))) - 0.500402423538) <
            1e-9);
    // Fully degenerate needle (1,0,0): the 0 ln 0 convention gives 0.
    REQUIRE(spectral_entropy(eig_sym(SymMat3::diagonal(1, 0, 0))) == 0.0);
    // (9,4,1) three ways: direct, closed form, oracle.
    const double h = spectral_entropy(eig_sym(SymMat3::diagonal(9, 4, 1)));
    REQUIRE(std::abs(h - 0.830471712436) < 1e-9);
    REQUIRE(std::abs(h - entropy_from_kappa_3d(9.0, 4.0)) < 1e-12);
    REQUIRE(std::abs(h - oracle::entropy(std::array<double, 3>{9, 4, 1})) < 1e-12);

    SECTION("zero trace throws") {
        Spectrum3 sp;
        sp.lambda = {0, 0, 0};
        REQUIRE_THROWS_AS(spectral_entropy(sp), ZeroTraceError);
    }
}

TEST_CASE("entropy_from_kappa closed forms") {
    REQUIRE(std::abs(entropy_from_kappa(2, 1.0) - std::log(2.0)) < 1e-12);
    REQUIRE(std::abs(entropy_from_kappa(2, 4.0) - 0.500402423538) < 1e-9);
    REQUIRE(std::abs(entropy_from_kappa(3, 1.0, 1.0) - std::log(3.0)) < 1e-12);
    REQUIRE_THROWS_AS(entropy_from_kappa(2, 0.5), DomainError);
    REQUIRE_THROWS_AS(entropy_from_kappa(3, 4.0, 9.0), DomainError);  // mid ratio > kappa

    SECTION("agrees with direct entropy across a kappa grid, 2D and 3D") {
        for (double kappa = 1.0; kappa < 2000.0; kappa *= 1.7) {
            const double direct2 = spectral_entropy(eig_sym(SymMat2::diagonal(kappa, 1.0)));
            REQUIRE(std::abs(direct2 - entropy_from_kappa(2, kappa)) < 1e-10);
            const double mid = std::sqrt(kappa);
            const double direct3 =
                spectral_entropy(eig_sym(SymMat3::diagonal(kappa, mid, 1.0)));
            REQUIRE(std::abs(direct3 - entropy_from_kappa(3, kappa, mid)) < 1e-10);
        }
    }
    SECTION("2D closed form is nonincreasing in kappa") {
        double prev = entropy_from_kappa(2, 1.0);
        for (double kappa = 1.0; kappa < 1e6; kappa *= 1.3) {
            const double h = entropy_from_kappa(2, kappa);
            REQUIRE(h <= prev + 1e-12);
            prev = h;
        }
    }
}

TEST_CASE("eccentricity") {
    REQUIRE(eccentricity(1.0) == 0.0);
    REQUIRE(std::abs(eccentricity(4.0) - 0.866025403784) < 1e-10);
    // e(1e6) = sqrt(1 - 1e-6) = 0.99999949999987...; approaches 1 from below.
    REQUIRE(eccentricity(1e6) > 0.999999);
    REQUIRE(std::abs(eccentricity(1e6) - 0.9999994999998750) < 1e-15);
    REQUIRE(eccentricity(kKappaInf) == 1.0);
    REQUIRE_THROWS_AS(eccentricity(0.99), DomainError);
}

TEST_CASE("spectral metric bounds over random SPD matrices") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 10000; ++i) {
        const auto spd = oracle::random_spd(rng);
        const Spectrum3 sp = eig_sym(spd.m);
        const double h = spectral_entropy(sp);
        const double kappa = condition_number(sp);
        REQUIRE(h <= std::log(3.0) + 1e-12);
        REQUIRE(kappa >= 1.0 - 1e-12);

        // Scale invariance of the entropy.
        const double c = 0.1 + 3.0 * std::abs(spd.log_scales.x);
        REQUIRE(std::abs(spectral_entropy(eig_sym(spd.m * c)) - h) < 1e-12 + 1e-10 * h);

        // Closed-form consistency on this spectrum.
        if (sp.lambda[2] > 1e-12) {
            const double hk = entropy_from_kappa(3, sp.lambda[0] / sp.lambda[2],
                                                 sp.lambda[1] / sp.lambda[2]);
            REQUIRE(std::abs(hk - h) < 1e-10);
        }
    }
    SECTION("both bounds are tight exactly at isotropy") {
        const Spectrum3 sp = eig_sym(SymMat3::identity() * 2.5);
        REQUIRE(std::abs(spectral_entropy(sp) - std::log(3.0)) < 1e-12);
        REQUIRE(std::abs(condition_number(sp) - 1.0) < 1e-12);
    }
}

TEST_CASE("summarize ties the metrics together") {
    const SpectralSummary s = summarize(SymMat3::diagonal(9, 4, 1));
    REQUIRE(s.radius == Catch::Approx(9.0));
    REQUIRE(s.kappa == Catch::Approx(9.0));
    REQUIRE(std::abs(s.entropy - 0.830471712436) < 1e-9);
    REQUIRE(std::abs(s.eccentricity - std::sqrt(1.0 - 1.0 / 9.0)) < 1e-12);
}

TEST_CASE("entropy_gradient matches finite differences") {
    std::mt19937_64 rng(37);
    for (int i = 0; i < 50; ++i) {
        const auto spd = oracle::random_spd(rng, -0.7, 0.7);
        Spectrum3 sp = eig_sym(spd.m);
        const Vec3 g = entropy_gradient(sp);
        for (int k = 0; k < 3; ++k) {
            const double eps = 1e-6 * std::max(1.0, sp.lambda[k]);
            Spectrum3 plus = sp, minus = sp;
            plus.lambda[k] += eps;
            minus.lambda[k] -= eps;
            const double fd = (spectral_entropy(plus) - spectral_entropy(minus)) / (2 * eps);
            REQUIRE(std::abs(g[k] - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("fourier closure of the sampled Gaussian") {
    SECTION("isotropic unit covariance on a +/-8 sigma grid") {
        REQUIRE(fourier_closure_check(SymMat2::identity(), 64, 8.0) < 1e-3);
    }
    SECTION("anisotropic diag(4,1)") {
        REQUIRE(fourier_closure_check(SymMat2::diagonal(4.0, 1.0), 64, 16.0) < 1e-3);
    }
    SECTION("scaled covariances keep the closed-form scaling symmetry") {
        REQUIRE(fourier_closure_check(SymMat2::identity() * 0.25, 64, 4.0) < 1e-3);
        REQUIRE(fourier_closure_check(SymMat2::identity() * 4.0, 64, 16.0) < 1e-3);
        // The closed form depends on Sigma only through the quadratic form:
        // evaluating 4I at w equals 0.25I at 4w by construction.
        const double w = 0.13;
        const double a = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * 4.0 * w * w);
        const double b = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * 0.25 * (4 * w) * (4 * w));
        REQUIRE(a == Catch::Approx(b).epsilon(1e-14));
    }
    SECTION("grids that truncate the Gaussian are rejected") {
        REQUIRE_THROWS_AS(fourier_closure_check(SymMat2::identity(), 64, 3.0),
                          GridTooSmallError);
    }
}
