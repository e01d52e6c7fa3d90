#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"
#include "support/oracles.hpp"

using namespace sgs;

namespace {

Gaussian3D unit_gaussian_at(const Vec3& p) {
    Gaussian3D g;
    g.position = p;
    g.color = {0.5, 0.5, 0.5};
    g.opacity_logit = logit(0.8);
    return g;
}

CameraView identity_view(double f = 1.0) {
    CameraView v;
    v.fx = v.fy = f;
    v.cx = v.cy = 0.0;
    v.width = 64;
    v.height = 64;
    return v;
}

} // namespace

TEST_CASE("compose_covariance on axis-aligned cases") {
    SECTION("identity rotation, stddevs (2,1,1)") {
        const SymMat3 s = compose_covariance({}, {std::log(2.0), 0.0, 0.0});
        REQUIRE(std::abs(s.xx - 4.0) < 1e-12);
        REQUIRE(std::abs(s.yy - 1.0) < 1e-12);
        REQUIRE(std::abs(s.zz - 1.0) < 1e-12);
        REQUIRE(std::abs(s.xy) + std::abs(s.xz) + std::abs(s.yz) < 1e-12);
    }
    SECTION("90 degree rotation about z permutes the axes") {
        const Quat q = Quat::axis_angle({0, 0, 1}, std::numbers::pi / 2);
        const SymMat3 s = compose_covariance(q, {std::log(2.0), 0.0, 0.0});
        REQUIRE(std::abs(s.xx - 1.0) < 1e-9);
        REQUIRE(std::abs(s.yy - 4.0) < 1e-9);
        REQUIRE(std::abs(s.zz - 1.0) < 1e-9);
    }
    SECTION("non-unit quaternions are renormalized internally") {
        const Quat q{2.0, 0.0, 0.0, 0.0};  // scales to identity rotation
        const SymMat3 a = compose_covariance(q, {0.1, 0.2, 0.3});
        const SymMat3 b = compose_covariance({}, {0.1, 0.2, 0.3});
        REQUIRE((a - b).max_abs() < 1e-12);
    }
}

TEST_CASE("compose_covariance random round trip through eig_sym") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const Quat q = oracle::random_quat(rng);
        const Vec3 ls{u(rng), u(rng), u(rng)};
        const SymMat3 sigma = compose_covariance(q, ls);
        const Spectrum3 sp = eig_sym(sigma);
        std::array<double, 3> expect{std::exp(2.0 * ls.x), std::exp(2.0 * ls.y),
                                     std::exp(2.0 * ls.z)};
        std::sort(expect.begin(), expect.end(), std::greater<>());
        for (int k = 0; k < 3; ++k)
            REQUIRE(std::abs(sp.lambda[k] - expect[k]) <= 1e-9 * std::max(1.0, expect[k]));
    }
}

TEST_CASE("world_to_camera preserves the spectrum") {
    std::mt19937_64 rng(43);
    Gaussian3D g = unit_gaussian_at({0.3, -0.2, 1.0});
    g.rotation = oracle::random_quat(rng);
    g.log_scales = {0.4, -0.3, 0.1};

    SECTION("identity transform changes nothing") {
        const auto [mu, sigma] = world_to_camera(g, identity_view());
        REQUIRE((sigma - covariance_of(g)).max_abs() < 1e-15);
        REQUIRE((mu - g.position).norm() < 1e-15);
    }
    SECTION("pure translation shifts the mean only") {
        CameraView v = identity_view();
        v.trans = {1.0, 2.0, 3.0};
        const auto [mu, sigma] = world_to_camera(g, v);
        REQUIRE((sigma - covariance_of(g)).max_abs() < 1e-15);
        REQUIRE((mu - (g.position + v.trans)).norm() < 1e-15);
    }
    SECTION("random rigid transforms keep entropy and kappa") {
        for (int i = 0; i < 200; ++i) {
            CameraView v = identity_view();
            v.rot = oracle::random_quat(rng).rotation();
            std::uniform_real_distribution<double> u(-2.0, 2.0);
            v.trans = {u(rng), u(rng), u(rng)};
            const auto [mu, sigma] = world_to_camera(g, v);
            (void)mu;
            const SpectralSummary before = summarize(covariance_of(g));
            const SpectralSummary after = summarize(sigma);
            REQUIRE(std::abs(before.entropy - after.entropy) < 1e-9);
            REQUIRE(std::abs(before.kappa - after.kappa) < 1e-9 * before.kappa);
        }
    }
}

TEST_CASE("projection_jacobian closed form") {
    SECTION("on-axis at depth 2") {
        const Mat23 j = projection_jacobian({0, 0, 2}, 1.0, 1.0);
        REQUIRE(j.m[0][0] == Catch::Approx(0.5));
        REQUIRE(j.m[0][1] == 0.0);
        REQUIRE(j.m[0][2] == 0.0);
        REQUIRE(j.m[1][1] == Catch::Approx(0.5));
        REQUIRE(j.m[1][2] == 0.0);
    }
    SECTION("off-axis third column") {
        const Mat23 j = projection_jacobian({2, 0, 2}, 1.0, 1.0);
        REQUIRE(j.m[0][2] == Catch::Approx(-0.5));
    }
    SECTION("linearity in the focal length") {
        const Mat23 j1 = projection_jacobian({0.7, -0.4, 3.0}, 1.0, 1.0);
        const Mat23 j2 = projection_jacobian({0.7, -0.4, 3.0}, 2.0, 1.0);
        for (int c = 0; c < 3; ++c)
            REQUIRE(j2.m[0][c] == Catch::Approx(2.0 * j1.m[0][c]).margin(1e-15));
    }
    SECTION("behind the near plane throws") {
        REQUIRE_THROWS_AS(projection_jacobian({0, 0, 0.005}, 1.0, 1.0), BehindCameraError);
        REQUIRE_THROWS_AS(projection_jacobian({0, 0, -1.0}, 1.0, 1.0), BehindCameraError);
    }
}

TEST_CASE("project") {
    SECTION("isotropic unit Gaussian at unit depth is the identity splat") {
        Gaussian3D g = unit_gaussian_at({0, 0, 1});
        const Splat2D s = project(g, identity_view());
        REQUIRE(std::abs(s.sigma_proj.xx - 1.0) < 1e-12);
        REQUIRE(std::abs(s.sigma_proj.yy - 1.0) < 1e-12);
        REQUIRE(std::abs(s.sigma_proj.xy) < 1e-12);
        REQUIRE(s.depth == Catch::Approx(1.0));
        REQUIRE(s.opacity == Catch::Approx(0.8));
    }
    SECTION("depth 2 scales the covariance by 0.25") {
        Gaussian3D g = unit_gaussian_at({0, 0, 2});
        const Splat2D s = project(g, identity_view());
        REQUIRE(std::abs(s.sigma_proj.xx - 0.25) < 1e-12);
        REQUIRE(std::abs(s.sigma_proj.yy - 0.25) < 1e-12);
    }
    SECTION("behind camera throws") {
        REQUIRE_THROWS_AS(project(unit_gaussian_at({0, 0, -2}), identity_view()),
                          BehindCameraError);
    }
    SECTION("spectral norm submultiplicativity over random cases") {
        std::mt19937_64 rng(47);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (int i = 0; i < 1000; ++i) {
            Gaussian3D g = unit_gaussian_at({u(rng), u(rng), 2.0 + u(rng)});
            g.rotation = oracle::random_quat(rng);
            g.log_scales = {u(rng), u(rng), u(rng)};
            const CameraView v = identity_view(1.5);
            const Splat2D s = project(g, v);

            const auto [mu_cam, sigma_cam] = world_to_camera(g, v);
            const Mat23 j = projection_jacobian(mu_cam, v.fx, v.fy);
            // ||J||^2 = lambda_max(J J^T).
            SymMat2 jjt;
            jjt.xx = j.m[0][0] * j.m[0][0] + j.m[0][1] * j.m[0][1] + j.m[0][2] * j.m[0][2];
            jjt.xy = j.m[0][0] * j.m[1][0] + j.m[0][1] * j.m[1][1] + j.m[0][2] * j.m[1][2];
            jjt.yy = j.m[1][0] * j.m[1][0] + j.m[1][1] * j.m[1][1] + j.m[1][2] * j.m[1][2];
            const double jn2 = eig_sym(jjt).lambda[0];
            const double lhs = eig_sym(s.sigma_proj).lambda[0];
            const double rhs = eig_sym(sigma_cam).lambda[0] * jn2;
            REQUIRE(lhs <= rhs * (1.0 + 1e-9));
        }
    }
    SECTION("on-axis zoom scales the covariance by c^2 and keeps kappa") {
        std::mt19937_64 rng(53);
        Gaussian3D g = unit_gaussian_at({0, 0, 4});
        g.rotation = oracle::random_quat(rng);
        g.log_scales = {0.5, -0.2, 0.0};
        const Splat2D base = project(g, identity_view(1.0));
        const double kappa_base = condition_number(eig_sym(base.sigma_proj));
        for (double c : {2.0, 3.5, 10.0}) {
            const Splat2D zoomed = project(g, identity_view(c));
            REQUIRE(std::abs(zoomed.sigma_proj.xx - c * c * base.sigma_proj.xx) <
                    1e-12 * c * c);
            REQUIRE(std::abs(zoomed.sigma_proj.xy - c * c * base.sigma_proj.xy) <
                    1e-12 * c * c);
            REQUIRE(std::abs(zoomed.sigma_proj.yy - c * c * base.sigma_proj.yy) <
                    1e-12 * c * c);
            const double kappa = condition_number(eig_sym(zoomed.sigma_proj));
            REQUIRE(std::abs(kappa - kappa_base) < 1e-9 * kappa_base);
        }
    }
    SECTION("projection is deterministic") {
        Gaussian3D g = unit_gaussian_at({0.2, 0.1, 3.0});
        g.rotation = Quat::axis_angle({1, 1, 0}, 0.4);
        const Splat2D a = project(g, identity_view(2.0));
        const Splat2D b = project(g, identity_view(2.0));
        REQUIRE(a.mu_proj.x == b.mu_proj.x);
        REQUIRE(a.mu_proj.y == b.mu_proj.y);
        REQUIRE(a.sigma_proj.xx == b.sigma_proj.xx);
        REQUIRE(a.sigma_proj.xy == b.sigma_proj.xy);
        REQUIRE(a.sigma_proj.yy == b.sigma_proj.yy);
    }
}

TEST_CASE("frustum culling with the 16 px margin") {
    Splat2D s;
    s.sigma_proj = SymMat2::identity();  // 3 sigma = 3 px
    s.mu_proj = {32, 32};
    REQUIRE(in_frustum(s, 64, 64));
    s.mu_proj = {-18, 32};
    REQUIRE(in_frustum(s, 64, 64));  // inside margin + 3 sigma
    s.mu_proj = {-20, 32};
    REQUIRE_FALSE(in_frustum(s, 64, 64));
    s.mu_proj = {32, 64 + 18};
    REQUIRE(in_frustum(s, 64, 64));
    s.mu_proj = {32, 64 + 20};
    REQUIRE_FALSE(in_frustum(s, 64, 64));
}

TEST_CASE("look_at builds a valid camera") {
    const Vec3 eye{0, -6, 2};
    const CameraView v = CameraView::look_at(eye, {0, 0, 0}, {0, 0, 1}, 128, 128, 64, 48);

    // Rotation block orthonormal with determinant +1.
    const Mat3 rrt = v.rot * v.rot.transposed();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            REQUIRE(std::abs(rrt.m[a][b] - (a == b ? 1.0 : 0.0)) < 1e-12);

    const Vec3 cam_target = v.to_camera({0, 0, 0});
    REQUIRE(std::abs(cam_target.x) < 1e-12);
    REQUIRE(std::abs(cam_target.y) < 1e-12);
    REQUIRE(cam_target.z == Catch::Approx(eye.norm()));
    REQUIRE((v.center() - eye).norm() < 1e-12);
    REQUIRE(v.cx == Catch::Approx(32.0));
    REQUIRE(v.cy == Catch::Approx(24.0));
}

TEST_CASE("scene_extent is the bounding-sphere radius about the centroid") {
    Scene scene;
    scene.push_back(unit_gaussian_at({-1, 0, 0}));
    scene.push_back(unit_gaussian_at({3, 0, 0}));
    REQUIRE(scene_extent(scene) == Catch::Approx(2.0));
    REQUIRE(scene_extent({}) == 0.0);
}
