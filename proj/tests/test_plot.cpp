#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spectral_splat/plot.hpp"

namespace {

using namespace sgs;

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("sgs_plot_" + std::to_string(std::rand()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::size_t count_rgb(const ImageU8& img, int r, int g, int b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 2 < img.pixels.size(); i += 3) {
        if (img.pixels[i] == r && img.pixels[i + 1] == g && img.pixels[i + 2] == b) ++n;
    }
    return n;
}

} // namespace

TEST_CASE("plot renders requested canvas with visible series and chrome") {
    PlotSeries s;
    s.xs = {1.0, 2.0, 4.0, 8.0};
    s.ys = {1.0, 3.0, 9.0, 20.0};
    s.rgb = {1.0, 0.0, 0.0};
    s.label = "kappa";

    PlotOptions opts;
    opts.width = 320;
    opts.height = 200;
    opts.title = "zoom";
    opts.x_label = "multiplier";
    opts.y_label = "kappa";

    const ImageU8 img = render_plot({s}, opts);
    CHECK(img.width == 320);
    CHECK(img.height == 200);
    CHECK(img.channels == 3);
    CHECK(img.pixels.size() == 320u * 200u * 3u);

    // Pure-red series pixels and near-black text pixels both present; white
    // background still dominant.
    CHECK(count_rgb(img, 255, 0, 0) > 20);
    CHECK(count_rgb(img, 38, 38, 46) > 50);
    CHECK(count_rgb(img, 255, 255, 255) > 320u * 200u / 2);
}

TEST_CASE("plot output is deterministic") {
    PlotSeries a;
    a.xs = {0.0, 1.0, 2.0};
    a.ys = {0.5, -0.25, 1.5};
    a.rgb = {0.0, 0.4, 0.9};
    a.label = "a";
    PlotSeries b = a;
    b.ys = {1.0, 0.75, -0.5};
    b.rgb = {0.9, 0.4, 0.0};
    b.label = "b";
    b.dashed = true;

    const ImageU8 one = render_plot({a, b});
    const ImageU8 two = render_plot({a, b});
    CHECK(one.pixels == two.pixels);
}

TEST_CASE("log-scale axis skips nonpositive values instead of failing") {
    PlotSeries s;
    s.xs = {1.0, 2.0, 3.0, 4.0};
    s.ys = {100.0, 0.0, 1000.0, 10000.0};
    PlotOptions opts;
    opts.log_y = true;
    const ImageU8 img = render_plot({s}, opts);
    CHECK(img.width == 640);

    // All-nonpositive under log: nothing plottable.
    PlotSeries dead;
    dead.xs = {1.0, 2.0};
    dead.ys = {0.0, -1.0};
    CHECK_THROWS_AS(render_plot({dead}, opts), DomainError);
}

TEST_CASE("plot rejects bad inputs") {
    PlotSeries mismatched;
    mismatched.xs = {1.0, 2.0};
    mismatched.ys = {1.0};
    CHECK_THROWS_AS(render_plot({mismatched}), ShapeMismatchError);

    CHECK_THROWS_AS(render_plot({}), DomainError);

    PlotSeries s;
    s.xs = {1.0};
    s.ys = {1.0};
    PlotOptions tiny;
    tiny.width = 30;
    tiny.height = 30;
    CHECK_THROWS_AS(render_plot({s}, tiny), DomainError);
}

TEST_CASE("saved plot round-trips through the PNG reader") {
    TempDir dir;
    PlotSeries s;
    s.xs = {1.0, 2.0, 4.0};
    s.ys = {2.0, 5.0, 11.0};
    s.label = "probe";
    PlotOptions opts;
    opts.width = 240;
    opts.height = 160;
    const std::string path = (dir.path / "curve.png").string();
    save_plot_png(path, {s}, opts);

    const ImageU8 back = load_png(path);
    CHECK(back.width == 240);
    CHECK(back.height == 160);
    CHECK(back.channels == 3);
    CHECK(back.pixels == render_plot({s}, opts).pixels);
}
