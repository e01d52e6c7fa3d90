// spectral-splat: command-line workbench around the spectral_splat library.
//
// Commands: analyze, render, train, zoom-bench, entropy-map.
// Exit codes: 0 success, 2 usage error, 3 data error (unreadable or
// inconsistent inputs, empty scenes), 4 numerical failure (non-finite loss,
// degenerate covariances).
//
// SPECTRAL_SPLAT_THREADS caps worker threads when no explicit count is set;
// --deterministic forces single-threaded rendering.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spectral_splat/camera_io.hpp"
#include "spectral_splat/config_io.hpp"
#include "spectral_splat/errors.hpp"
#include "spectral_splat/filters.hpp"
#include "spectral_splat/image_metrics.hpp"
#include "spectral_splat/plot.hpp"
#include "spectral_splat/ply.hpp"
#include "spectral_splat/png_io.hpp"
#include "spectral_splat/renderer.hpp"
#include "spectral_splat/scene.hpp"
#include "spectral_splat/spectral.hpp"
#include "spectral_splat/synth.hpp"
#include "spectral_splat/trainer.hpp"
#include "spectral_splat/zoom.hpp"

namespace {

using namespace sgs;
using nlohmann::json;

// Post-parse flag/selection problems that should read as usage errors.
struct UsageError {
    std::string message;
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_number(double v) { return std::isfinite(v) ? fmt17(v) : "nan"; }

json json_or_null(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

// ---------------------------------------------------------------------------
// Shared option plumbing
// ---------------------------------------------------------------------------

const std::vector<std::string> kFilterNames = {"none", "ewa", "mip", "view-consistent"};

FilterMode filter_from_name(const std::string& name) {
    if (name == "none") return FilterMode::none();
    if (name == "ewa") return FilterMode::ewa();
    if (name == "mip") return FilterMode::mip();
    if (name == "view-consistent") return FilterMode::view_consistent();
    throw UsageError{"unknown filter '" + name + "' (choose from none, ewa, mip, view-consistent)"};
}

struct CommonState {
    json config;       // parsed --config document ({} when absent)
    bool has_config = false;
    bool deterministic = false;

    int threads() const { return deterministic ? 1 : 0; }  // 0 = env/hardware

    void load(const std::string& config_path) {
        if (config_path.empty()) return;
        config = load_config(config_path);
        has_config = true;
    }

    // Config lookup helpers; command-line flags win (count > 0).
    template <typename T>
    void overlay(const char* section, const char* key, std::size_t cli_count, T& out) const {
        if (!has_config || cli_count > 0) return;
        const auto sect = config.find(section);
        if (sect == config.end() || !sect->is_object()) return;
        const auto val = sect->find(key);
        if (val == sect->end()) return;
        try {
            out = val->get<T>();
        } catch (const json::exception&) {
            throw IoError(std::string("config: [") + section + "] " + key +
                          " has the wrong type");
        }
    }
};

// Resolves filter selection from flag + config ([filter] mode/s/s0).
FilterMode resolve_filter(const CommonState& state, CLI::App* cmd, std::string name, double s,
                          double s0) {
    state.overlay("filter", "mode", cmd->count("--filter"), name);
    FilterMode mode = filter_from_name(name);
    double s_value = mode.s;
    double s0_value = mode.s0;
    state.overlay("filter", "s", cmd->count("--s"), s_value);
    state.overlay("filter", "s0", cmd->count("--s0"), s0_value);
    if (cmd->count("--s") > 0) s_value = s;
    if (cmd->count("--s0") > 0) s0_value = s0;
    mode.s = s_value;
    mode.s0 = s0_value;
    return mode;
}

void apply_train_config(const CommonState& state, CLI::App* cmd, TrainConfig& cfg) {
    state.overlay("train", "iterations", cmd->count("--iterations"), cfg.iterations);
    state.overlay("train", "lambda1", cmd->count("--lambda1"), cfg.lambda1);
    state.overlay("train", "lambda2", cmd->count("--lambda2"), cfg.lambda2);
    state.overlay("train", "seed", cmd->count("--seed"), cfg.seed);
    state.overlay("train", "refine_every", 0, cfg.refine_every);
    state.overlay("train", "refine_start", 0, cfg.refine_start);
    state.overlay("train", "refine_stop", 0, cfg.refine_stop);
    state.overlay("train", "eval_every", 0, cfg.eval_every);
    state.overlay("train", "lr_position", 0, cfg.lr.position_init);
    state.overlay("train", "lr_position_final", 0, cfg.lr.position_final);
    state.overlay("train", "lr_rotation", 0, cfg.lr.rotation);
    state.overlay("train", "lr_log_scales", 0, cfg.lr.log_scales);
    state.overlay("train", "lr_opacity", 0, cfg.lr.opacity);
    state.overlay("train", "lr_color", 0, cfg.lr.color);
}

void apply_densify_config(const CommonState& state, DensifyConfig& cfg) {
    state.overlay("densify", "tau_loss", 0, cfg.tau_loss);
    state.overlay("densify", "tau_radius", 0, cfg.tau_radius);
    state.overlay("densify", "tau_spectral", 0, cfg.tau_spectral);
    state.overlay("densify", "k", 0, cfg.k);
    state.overlay("densify", "k0", 0, cfg.k0);
    state.overlay("densify", "K", 0, cfg.K);
    state.overlay("densify", "eps_o", 0, cfg.eps_o);
    state.overlay("densify", "kappa_max", 0, cfg.kappa_max);
}

Scene load_scene_or_die(const std::string& ply_path) { return load_ply(ply_path).scene; }

CameraView select_view(const std::vector<CameraRecord>& cameras, int view_index) {
    if (cameras.empty()) throw IoError("camera file contains no cameras");
    if (view_index < 0 || static_cast<std::size_t>(view_index) >= cameras.size())
        throw UsageError{"--view-index " + std::to_string(view_index) +
                         " out of range (file has " + std::to_string(cameras.size()) +
                         " cameras)"};
    return cameras[static_cast<std::size_t>(view_index)].view;
}

void write_text_output(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        if (!std::cout) throw IoError("failed writing to stdout");
        return;
    }
    write_file_atomic(path, text);
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct PerGaussianSpectral {
    double rho = 0.0;
    double kappa = 0.0;
    double entropy = 0.0;
};

struct AnalyzeSummary {
    double mean_entropy = 0.0;
    double kappa_q25 = 0.0;
    double kappa_median = 0.0;
    double kappa_q75 = 0.0;
    std::size_t needle_count = 0;
    double needle_threshold = 0.0;
};

AnalyzeSummary summarize_spectral(const std::vector<PerGaussianSpectral>& rows,
                                  double threshold) {
    AnalyzeSummary summary;
    summary.needle_threshold = threshold;
    std::vector<double> kappas;
    kappas.reserve(rows.size());
    double entropy_acc = 0.0;
    for (const PerGaussianSpectral& r : rows) {
        kappas.push_back(r.kappa);
        entropy_acc += r.entropy;
        if (r.entropy < threshold) ++summary.needle_count;
    }
    std::sort(kappas.begin(), kappas.end());
    summary.mean_entropy = entropy_acc / static_cast<double>(rows.size());
    summary.kappa_q25 = detail::interpolated_quantile(kappas, 0.25);
    summary.kappa_median = detail::interpolated_quantile(kappas, 0.5);
    summary.kappa_q75 = detail::interpolated_quantile(kappas, 0.75);
    return summary;
}

int cmd_analyze(const std::string& ply_path, const std::string& out_path,
                const std::string& format, double threshold) {
    const Scene scene = load_scene_or_die(ply_path);
    if (scene.empty()) throw EmptySceneError("analyze: '" + ply_path + "' holds no Gaussians");

    std::vector<PerGaussianSpectral> rows;
    rows.reserve(scene.size());
    for (const Gaussian3D& g : scene) {
        const Spectrum3 sp = eig_sym(covariance_of(g));
        rows.push_back({spectral_radius(sp), condition_number(sp), spectral_entropy(sp)});
    }
    const AnalyzeSummary summary = summarize_spectral(rows, threshold);

    std::string text;
    if (format == "csv") {
        std::ostringstream out;
        out << "# spectral-splat analyze\n";
        out << "# count=" << rows.size() << "\n";
        out << "# mean_entropy=" << fmt17(summary.mean_entropy) << "\n";
        out << "# kappa_q25=" << fmt17(summary.kappa_q25) << "\n";
        out << "# kappa_median=" << fmt17(summary.kappa_median) << "\n";
        out << "# kappa_q75=" << fmt17(summary.kappa_q75) << "\n";
        out << "# needle_count=" << summary.needle_count << "\n";
        out << "# needle_threshold=" << fmt17(summary.needle_threshold) << "\n";
        out << "index,rho,kappa,entropy\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out << i << ',' << fmt17(rows[i].rho) << ',' << fmt17(rows[i].kappa) << ','
                << fmt17(rows[i].entropy) << "\n";
        }
        text = out.str();
    } else {
        json doc;
        doc["count"] = rows.size();
        doc["summary"] = {{"mean_entropy", summary.mean_entropy},
                          {"kappa_q25", summary.kappa_q25},
                          {"kappa_median", summary.kappa_median},
                          {"kappa_q75", summary.kappa_q75},
                          {"needle_count", summary.needle_count},
                          {"needle_threshold", summary.needle_threshold}};
        json list = json::array();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            list.push_back({{"index", i},
                            {"rho", rows[i].rho},
                            {"kappa", rows[i].kappa},
                            {"entropy", rows[i].entropy}});
        }
        doc["gaussians"] = std::move(list);
        text = doc.dump(2) + "\n";
    }
    write_text_output(out_path, text);
    return 0;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

struct ViewFilterStats {
    std::size_t in_front = 0;
    std::size_t in_frustum = 0;
    double kappa_median = std::numeric_limits<double>::quiet_NaN();
    double mean_entropy = std::numeric_limits<double>::quiet_NaN();
};

ViewFilterStats filtered_view_stats(const Scene& scene, const CameraView& view,
                                    const FilterMode& mode) {
    ViewFilterStats stats;
    std::vector<double> kappas;
    double entropy_acc = 0.0;
    for (const Gaussian3D& g : scene) {
        if (view.to_camera(g.position).z <= kNearPlane) continue;
        const Splat2D raw = project(g, view);
        ++stats.in_front;
        if (in_frustum(raw, view.width, view.height)) ++stats.in_frustum;
        const Spectrum2 sp = eig_sym(apply_filter(raw, mode, view.fx, g.nu_hat).sigma_filter);
        kappas.push_back(condition_number(sp));
        entropy_acc += spectral_entropy(sp);
    }
    if (!kappas.empty()) {
        std::sort(kappas.begin(), kappas.end());
        stats.kappa_median = detail::interpolated_quantile(kappas, 0.5);
        stats.mean_entropy = entropy_acc / static_cast<double>(kappas.size());
    }
    return stats;
}

int cmd_render(const std::string& ply_path, const std::string& cameras_path,
               const std::string& out_dir, const FilterMode& mode, bool smooth3d, int threads) {
    Scene scene = load_scene_or_die(ply_path);
    const std::vector<CameraRecord> cameras = load_cameras(cameras_path);
    if (cameras.empty()) throw IoError("render: '" + cameras_path + "' contains no cameras");

    std::vector<CameraView> views;
    views.reserve(cameras.size());
    for (const CameraRecord& rec : cameras) views.push_back(rec.view);
    update_max_sampling_rates(scene, views);

    std::filesystem::create_directories(out_dir);

    RenderOptions options;
    options.filter = mode;
    options.smooth3d = smooth3d;
    options.raster.threads = threads;

    json stats = json::array();
    for (const CameraRecord& rec : cameras) {
        const Framebuffer fb = render_forward(scene, rec.view, options);
        const std::string name = "view_" + std::to_string(rec.id) + ".png";
        save_png_rgb8((std::filesystem::path(out_dir) / name).string(), framebuffer_to_u8(fb));

        const ViewFilterStats vs = filtered_view_stats(scene, rec.view, mode);
        double alpha_acc = 0.0;
        for (double a : fb.alpha) alpha_acc += a;
        stats.push_back(
            {{"id", rec.id},
             {"image", name},
             {"width", rec.view.width},
             {"height", rec.view.height},
             {"splats_in_front", vs.in_front},
             {"splats_in_frustum", vs.in_frustum},
             {"kappa_median_filtered", json_or_null(vs.kappa_median)},
             {"mean_entropy_filtered", json_or_null(vs.mean_entropy)},
             {"mean_alpha", fb.alpha.empty()
                                ? 0.0
                                : alpha_acc / static_cast<double>(fb.alpha.size())}});
    }
    write_file_atomic((std::filesystem::path(out_dir) / "render_stats.json").string(),
                      stats.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// zoom-bench
// ---------------------------------------------------------------------------

Vec3 zoom_series_color(FilterKind kind) {
    switch (kind) {
        case FilterKind::None: return {0.45, 0.45, 0.5};
        case FilterKind::EWA: return {0.15, 0.35, 0.85};
        case FilterKind::Mip: return {0.9, 0.5, 0.1};
        case FilterKind::ViewConsistent: return {0.1, 0.65, 0.25};
    }
    return {0.0, 0.0, 0.0};
}

const char* zoom_filter_name(FilterKind kind) {
    switch (kind) {
        case FilterKind::None: return "none";
        case FilterKind::EWA: return "ewa";
        case FilterKind::Mip: return "mip";
        case FilterKind::ViewConsistent: return "view-consistent";
    }
    return "?";
}

int cmd_zoom_bench(const Scene& scene, const CameraView& base_view,
                   const std::vector<FilterMode>& modes, const std::vector<double>& multipliers,
                   bool render_psnr, const std::string& out_csv, const std::string& out_png,
                   int threads) {
    ZoomBenchOptions opts;
    opts.multipliers = multipliers;
    opts.render_psnr = render_psnr;
    opts.raster.threads = threads;

    std::vector<ZoomReport> reports;
    reports.reserve(modes.size());
    for (const FilterMode& mode : modes) reports.push_back(zoom_bench(scene, base_view, mode, opts));

    std::ostringstream csv;
    csv << "filter,multiplier,kappa_q25,kappa_median,kappa_q75,mean_entropy,"
           "psnr_vs_reference,probe_kappa,probe_analytic_kappa\n";
    for (const ZoomReport& report : reports) {
        for (const ZoomPoint& p : report.points) {
            csv << zoom_filter_name(report.filter) << ',' << fmt17(p.multiplier) << ','
                << fmt17(p.kappa.q25) << ',' << fmt17(p.kappa.median) << ','
                << fmt17(p.kappa.q75) << ',' << fmt17(p.mean_entropy) << ','
                << csv_number(p.psnr_vs_reference) << ',' << csv_number(p.probe_kappa) << ','
                << csv_number(p.probe_analytic_kappa) << "\n";
        }
    }
    write_text_output(out_csv, csv.str());

    if (!out_png.empty()) {
        std::vector<PlotSeries> series;
        double kappa_max = 1.0;
        for (const ZoomReport& report : reports) {
            PlotSeries measured;
            measured.rgb = zoom_series_color(report.filter);
            measured.label = zoom_filter_name(report.filter);
            PlotSeries analytic = measured;
            analytic.label.clear();
            analytic.dashed = true;
            analytic.markers = false;
            for (const ZoomPoint& p : report.points) {
                measured.xs.push_back(p.multiplier);
                measured.ys.push_back(p.probe_kappa);
                analytic.xs.push_back(p.multiplier);
                analytic.ys.push_back(p.probe_analytic_kappa);
                kappa_max = std::max(kappa_max, p.probe_kappa);
            }
            series.push_back(std::move(measured));
            series.push_back(std::move(analytic));
        }
        PlotOptions popt;
        popt.title = "zoom sweep";
        popt.x_label = "focal multiplier";
        popt.y_label = "probe kappa";
        popt.log_y = kappa_max > 50.0;
        save_plot_png(out_png, series, popt);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// entropy-map
// ---------------------------------------------------------------------------

int cmd_entropy_map(const std::string& ply_path, const std::string& cameras_path, int view_index,
                    const std::string& out_png, const FilterMode& mode, int threads) {
    Scene scene = load_scene_or_die(ply_path);
    const std::vector<CameraRecord> cameras = load_cameras(cameras_path);
    const CameraView view = select_view(cameras, view_index);
    update_max_sampling_rates(scene, {view});

    // Splat each Gaussian's 3D spectral entropy through the normal compositor
    // by standing it in for the color channel.
    Scene entropy_scene = scene;
    for (Gaussian3D& g : entropy_scene) {
        const double h = spectral_entropy(eig_sym(covariance_of(g)));
        g.color = {h, h, h};
    }

    RenderOptions options;
    options.filter = mode;
    options.raster.threads = threads;
    options.raster.background = {0.0, 0.0, 0.0};
    const Framebuffer fb = render_forward(entropy_scene, view, options);

    const double ln3 = std::log(3.0);
    const Vec3 low{0.10, 0.20, 0.85};   // needle footprints
    const Vec3 high{0.10, 0.80, 0.20};  // isotropic regions
    const Vec3 sentinel{0.15, 0.15, 0.18};
    auto shade = [&](double t) {
        return Vec3{low.x + (high.x - low.x) * t, low.y + (high.y - low.y) * t,
                    low.z + (high.z - low.z) * t};
    };

    const int bar_margin = 44;
    ImageU8 img;
    img.width = fb.width + bar_margin;
    img.height = fb.height;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 255);

    for (int y = 0; y < fb.height; ++y) {
        for (int x = 0; x < fb.width; ++x) {
            const std::size_t at = static_cast<std::size_t>(y) * fb.width + x;
            Vec3 rgb = sentinel;
            if (fb.alpha[at] > 1e-12) {
                // Accumulated color / accumulated alpha = opacity-weighted
                // mean entropy of the splats covering this pixel.
                const double h = fb.rgb[at * 3] / fb.alpha[at];
                rgb = shade(std::clamp(h / ln3, 0.0, 1.0));
            }
            detail::plot_set_px(img, x, y, rgb);
        }
    }

    // Colorbar: 0 at the bottom, ln 3 at the top.
    const int bar_x0 = fb.width + 10;
    const int bar_x1 = bar_x0 + 12;
    for (int y = 0; y < fb.height; ++y) {
        const double t = fb.height > 1
                             ? 1.0 - static_cast<double>(y) / (fb.height - 1)
                             : 1.0;
        for (int x = bar_x0; x < bar_x1; ++x) detail::plot_set_px(img, x, y, shade(t));
    }
    const Vec3 text{0.1, 0.1, 0.1};
    detail::plot_text(img, bar_x1 + 3, 1, "LN3", text);
    detail::plot_text(img, bar_x1 + 3, fb.height - 6, "0", text);

    save_png_rgb8(out_png, img);
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainInputs {
    std::vector<TrainView> train_views;
    std::vector<TrainView> held_out_views;  // synthetic rigs only
    Scene initial;
};

TrainInputs build_synth_train_inputs(SynthKind kind, int count, int init_count, int size,
                                     double focal, unsigned long long seed, int threads) {
    TrainInputs inputs;
    const Scene reference = synth_scene(kind, count, seed);
    const SynthRig rig = synth_camera_rig(size, size, focal);

    RenderOptions gt;
    gt.filter = FilterMode::none();
    gt.raster.threads = threads;
    for (const CameraView& view : rig.train_views)
        inputs.train_views.push_back({view, render_forward(reference, view, gt)});
    for (const CameraView& view : rig.test_views)
        inputs.held_out_views.push_back({view, render_forward(reference, view, gt)});

    inputs.initial = random_init_scene(init_count > 0 ? init_count : count, seed + 1);
    return inputs;
}

TrainInputs build_image_train_inputs(const std::string& cameras_path,
                                     const std::string& images_dir,
                                     const std::string& init_ply, int init_count,
                                     unsigned long long seed) {
    TrainInputs inputs;
    const std::vector<CameraRecord> cameras = load_cameras(cameras_path);
    if (cameras.empty()) throw IoError("train: '" + cameras_path + "' contains no cameras");
    for (const CameraRecord& rec : cameras) {
        if (rec.image_path.empty())
            throw IoError("train: camera id " + std::to_string(rec.id) +
                          " lacks image_path; cannot use it as a training view");
        const std::string path =
            (std::filesystem::path(images_dir) / rec.image_path).string();
        const Framebuffer image = u8_to_framebuffer(load_png(path));
        if (image.width != rec.view.width || image.height != rec.view.height)
            throw ShapeMismatchError("train: image '" + path + "' is " +
                                     std::to_string(image.width) + "x" +
                                     std::to_string(image.height) + " but camera id " +
                                     std::to_string(rec.id) + " expects " +
                                     std::to_string(rec.view.width) + "x" +
                                     std::to_string(rec.view.height));
        inputs.train_views.push_back({rec.view, image});
    }
    if (!init_ply.empty()) {
        inputs.initial = load_ply(init_ply).scene;
        if (inputs.initial.empty())
            throw EmptySceneError("train: init scene '" + init_ply + "' holds no Gaussians");
    } else {
        inputs.initial = random_init_scene(init_count > 0 ? init_count : 1000, seed + 1);
    }
    return inputs;
}

int cmd_train(TrainInputs inputs, Variant variant, const FilterMode& mode, TrainConfig cfg,
              const DensifyConfig& dcfg, const std::string& out_ply,
              const std::string& log_path) {
    std::ofstream log_file;
    std::ostream* log_out = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path, std::ios::trunc);
        if (!log_file) throw IoError("train: cannot open log file '" + log_path + "'");
        log_out = &log_file;
    }

    TrainResult result = train(inputs.train_views, cfg, dcfg, mode, variant,
                               std::move(inputs.initial), log_out);
    if (log_file.is_open()) {
        log_file.flush();
        if (!log_file) throw IoError("train: failed writing log file '" + log_path + "'");
    }

    save_ply(out_ply, result.scene);

    std::ostringstream summary;
    summary << "trained " << cfg.iterations << " iterations: count=" << result.scene.size()
            << " loss=" << fmt17(result.final_loss);
    if (!result.scene.empty()) {
        summary << " entropy_mean=" << fmt17(scene_entropy_metric(result.scene))
                << " kappa_median=" << fmt17(scene_kappa_median(result.scene));
    }
    summary << " cloned=" << result.refine_totals.cloned
            << " split_baseline=" << result.refine_totals.split_baseline
            << " split_spectral=" << result.refine_totals.split_spectral
            << " pruned=" << (result.refine_totals.pruned_opacity +
                              result.refine_totals.pruned_spectrum);
    if (!inputs.held_out_views.empty()) {
        RenderOptions options;
        options.filter = mode;
        options.smooth3d = variant_spec(variant).smooth3d;
        options.raster.threads = cfg.threads;
        double acc = 0.0;
        for (const TrainView& tv : inputs.held_out_views) {
            acc += psnr(render_forward(result.scene, tv.view, options), tv.image);
        }
        summary << " test_psnr_mean="
                << fmt17(acc / static_cast<double>(inputs.held_out_views.size()));
    }
    std::cerr << summary.str() << "\n";
    return 0;
}

} // namespace

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"spectral-splat: spectral analysis, filtering, and training workbench "
                 "for 3D Gaussian scenes"};
    app.require_subcommand(1);

    std::vector<std::string> variant_names;
    for (Variant v : all_variants()) variant_names.push_back(variant_name(v));

    // ---- analyze ----
    auto* analyze = app.add_subcommand(
        "analyze", "Per-Gaussian spectral statistics (rho, kappa, entropy) of a PLY scene");
    std::string an_ply, an_out, an_format = "csv";
    double an_threshold = 0.5;
    analyze->add_option("--ply", an_ply, "Input scene (binary little-endian PLY)")->required();
    analyze->add_option("--out", an_out, "Output path (default: stdout)");
    analyze->add_option("--format", an_format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    analyze->add_option("--needle-threshold", an_threshold,
                        "Entropy below this counts as a needle (default 0.5)");

    // ---- render ----
    auto* render = app.add_subcommand("render", "Render one PNG per camera plus a stats sidecar");
    std::string re_ply, re_cameras, re_out_dir, re_filter = "ewa", re_config;
    double re_s = 0.0, re_s0 = 0.0;
    bool re_smooth3d = false, re_deterministic = false;
    render->add_option("--ply", re_ply, "Input scene PLY")->required();
    render->add_option("--cameras", re_cameras, "Camera JSON file")->required();
    render->add_option("--out-dir", re_out_dir, "Output directory")->required();
    render->add_option("--filter", re_filter, "Screen-space filter")
        ->check(CLI::IsMember(kFilterNames));
    render->add_option("--s", re_s, "Constant kernel size for ewa/mip (px^2)");
    render->add_option("--s0", re_s0, "View-consistent kernel scale");
    render->add_flag("--smooth3d", re_smooth3d, "Enable 3D pre-smoothing (mip-style)");
    render->add_flag("--deterministic", re_deterministic, "Force single-threaded rendering");
    render->add_option("--config", re_config, "TOML or JSON config file");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "Fit a scene to training views");
    std::string tr_synth, tr_cameras, tr_images_dir, tr_init_ply, tr_out, tr_log, tr_config;
    std::string tr_variant = "spectral", tr_filter;
    int tr_count = 200, tr_init_count = 0, tr_size = 256;
    double tr_focal = 300.0, tr_s = 0.0, tr_s0 = 0.0;
    bool tr_deterministic = false;
    TrainConfig tr_cfg;
    train_cmd->add_option("--synth", tr_synth,
                          "Synthetic scene kind (needles, isotropic, textured-ball-analog)");
    train_cmd->add_option("--count", tr_count, "Synthetic reference Gaussian count");
    train_cmd->add_option("--size", tr_size, "Synthetic view size in pixels (square)");
    train_cmd->add_option("--focal", tr_focal, "Synthetic camera focal length");
    train_cmd->add_option("--cameras", tr_cameras, "Camera JSON file (image training)");
    train_cmd->add_option("--images-dir", tr_images_dir, "Root for camera image_path entries");
    train_cmd->add_option("--init-ply", tr_init_ply, "Initial scene PLY (image training)");
    train_cmd->add_option("--init-count", tr_init_count,
                          "Random-init Gaussian count (default: synth count / 1000)");
    train_cmd->add_option("--variant", tr_variant, "Training variant")
        ->check(CLI::IsMember(variant_names));
    train_cmd->add_option("--filter", tr_filter, "Override the variant's filter")
        ->check(CLI::IsMember(kFilterNames));
    train_cmd->add_option("--s", tr_s, "Constant kernel size for ewa/mip (px^2)");
    train_cmd->add_option("--s0", tr_s0, "View-consistent kernel scale");
    train_cmd->add_option("--iterations", tr_cfg.iterations, "Training iterations");
    train_cmd->add_option("--lambda1", tr_cfg.lambda1, "D-SSIM weight in the photometric loss");
    train_cmd->add_option("--lambda2", tr_cfg.lambda2,
                          "Shape-regularizer weight (0 = variant default)");
    train_cmd->add_option("--seed", tr_cfg.seed, "Random seed");
    train_cmd->add_option("--out", tr_out, "Output PLY for the trained scene")->required();
    train_cmd->add_option("--log-file", tr_log, "JSON-lines training log (default: stdout)");
    train_cmd->add_flag("--deterministic", tr_deterministic, "Force single-threaded rendering");
    train_cmd->add_option("--config", tr_config, "TOML or JSON config file");

    // ---- zoom-bench ----
    auto* zoom = app.add_subcommand(
        "zoom-bench", "Sweep focal multipliers and report filtered-covariance statistics");
    std::string zb_ply, zb_cameras, zb_synth, zb_out_csv, zb_out_png = "zoom_bench.png";
    std::string zb_config;
    std::vector<std::string> zb_filters;
    std::vector<double> zb_multipliers = {1.0, 2.0, 4.0, 8.0};
    int zb_count = 100, zb_view_index = 0, zb_size = 160;
    double zb_focal = 120.0, zb_s = 0.0, zb_s0 = 0.0;
    std::uint64_t zb_seed = 1234;
    bool zb_no_psnr = false, zb_deterministic = false;
    zoom->add_option("--ply", zb_ply, "Input scene PLY");
    zoom->add_option("--cameras", zb_cameras, "Camera JSON file (with --ply)");
    zoom->add_option("--view-index", zb_view_index, "Base view index (default 0)");
    zoom->add_option("--synth", zb_synth,
                     "Synthetic scene kind (needles, isotropic, textured-ball-analog)");
    zoom->add_option("--count", zb_count, "Synthetic Gaussian count");
    zoom->add_option("--size", zb_size, "Synthetic view size in pixels");
    zoom->add_option("--focal", zb_focal, "Synthetic camera focal length");
    zoom->add_option("--seed", zb_seed, "Random seed for synthetic scenes");
    zoom->add_option("--filter", zb_filters, "Filter mode(s) to sweep (default: all)")
        ->check(CLI::IsMember(kFilterNames));
    zoom->add_option("--multipliers", zb_multipliers,
                     "Ascending focal multipliers (comma-separated)")
        ->delimiter(',');
    zoom->add_option("--s", zb_s, "Constant kernel size for ewa/mip (px^2)");
    zoom->add_option("--s0", zb_s0, "View-consistent kernel scale");
    zoom->add_option("--out-csv", zb_out_csv, "CSV output path (default: stdout)");
    zoom->add_option("--out-png", zb_out_png,
                     "Curve PNG output path (default zoom_bench.png; empty disables)");
    zoom->add_flag("--no-psnr", zb_no_psnr, "Skip the per-multiplier reference renders");
    zoom->add_flag("--deterministic", zb_deterministic, "Force single-threaded rendering");
    zoom->add_option("--config", zb_config, "TOML or JSON config file");

    // ---- entropy-map ----
    auto* emap = app.add_subcommand("entropy-map",
                                    "Render a blue-to-green spectral-entropy heatmap");
    std::string em_ply, em_cameras, em_out, em_filter = "none", em_config;
    int em_view_index = 0;
    double em_s = 0.0, em_s0 = 0.0;
    bool em_deterministic = false;
    emap->add_option("--ply", em_ply, "Input scene PLY")->required();
    emap->add_option("--cameras", em_cameras, "Camera JSON file")->required();
    emap->add_option("--view-index", em_view_index, "View index (default 0)");
    emap->add_option("--out", em_out, "Output PNG path")->required();
    emap->add_option("--filter", em_filter, "Screen-space filter for the footprints")
        ->check(CLI::IsMember(kFilterNames));
    emap->add_option("--s", em_s, "Constant kernel size for ewa/mip (px^2)");
    emap->add_option("--s0", em_s0, "View-consistent kernel scale");
    emap->add_flag("--deterministic", em_deterministic, "Force single-threaded rendering");
    emap->add_option("--config", em_config, "TOML or JSON config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exits 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "spectral-splat: " << e.what() << "\n"
                  << "Run 'spectral-splat --help' or 'spectral-splat <command> --help'.\n";
        return 2;
    }

    try {
        if (*analyze) {
            return cmd_analyze(an_ply, an_out, an_format, an_threshold);
        }

        if (*render) {
            CommonState state;
            state.deterministic = re_deterministic;
            state.load(re_config);
            const FilterMode mode = resolve_filter(state, render, re_filter, re_s, re_s0);
            return cmd_render(re_ply, re_cameras, re_out_dir, mode, re_smooth3d,
                              state.threads());
        }

        if (*train_cmd) {
            CommonState state;
            state.deterministic = tr_deterministic;
            state.load(tr_config);

            const bool synth_mode = !tr_synth.empty();
            const bool image_mode = !tr_cameras.empty();
            if (synth_mode == image_mode)
                throw UsageError{"train needs exactly one of --synth or --cameras"};

            apply_train_config(state, train_cmd, tr_cfg);
            DensifyConfig dcfg;
            apply_densify_config(state, dcfg);
            tr_cfg.threads = state.threads();

            const auto variant_opt = parse_variant(tr_variant);
            if (!variant_opt) throw UsageError{"unknown variant '" + tr_variant + "'"};
            const Variant variant = *variant_opt;
            FilterMode mode = variant_spec(variant).filter;
            if (train_cmd->count("--filter") > 0 || (state.has_config &&
                                                     state.config.contains("filter"))) {
                mode = resolve_filter(state, train_cmd,
                                      train_cmd->count("--filter") > 0
                                          ? tr_filter
                                          : zoom_filter_name(mode.kind),
                                      tr_s, tr_s0);
            } else {
                if (train_cmd->count("--s") > 0) mode.s = tr_s;
                if (train_cmd->count("--s0") > 0) mode.s0 = tr_s0;
            }

            TrainInputs inputs;
            if (synth_mode) {
                const auto kind = parse_synth_kind(tr_synth);
                if (!kind)
                    throw UsageError{"unknown synthetic kind '" + tr_synth +
                                     "' (choose from needles, isotropic, "
                                     "textured-ball-analog)"};
                if (tr_count < 1) throw UsageError{"--count must be >= 1"};
                inputs = build_synth_train_inputs(*kind, tr_count, tr_init_count, tr_size,
                                                  tr_focal, tr_cfg.seed, tr_cfg.threads);
            } else {
                inputs = build_image_train_inputs(tr_cameras, tr_images_dir, tr_init_ply,
                                                  tr_init_count, tr_cfg.seed);
            }
            return cmd_train(std::move(inputs), variant, mode, tr_cfg, dcfg, tr_out, tr_log);
        }

        if (*zoom) {
            CommonState state;
            state.deterministic = zb_deterministic;
            state.load(zb_config);

            const bool synth_mode = !zb_synth.empty();
            const bool ply_mode = !zb_ply.empty();
            if (synth_mode == ply_mode)
                throw UsageError{"zoom-bench needs exactly one of --ply or --synth"};
            for (std::size_t i = 1; i < zb_multipliers.size(); ++i) {
                if (!(zb_multipliers[i] > zb_multipliers[i - 1]))
                    throw UsageError{"--multipliers must be strictly ascending"};
            }

            Scene scene;
            CameraView base_view;
            if (synth_mode) {
                const auto kind = parse_synth_kind(zb_synth);
                if (!kind)
                    throw UsageError{"unknown synthetic kind '" + zb_synth +
                                     "' (choose from needles, isotropic, "
                                     "textured-ball-analog)"};
                if (zb_count < 1) throw UsageError{"--count must be >= 1"};
                scene = synth_scene(*kind, zb_count, zb_seed);
                const SynthRig rig = synth_camera_rig(zb_size, zb_size, zb_focal);
                if (zb_view_index < 0 ||
                    static_cast<std::size_t>(zb_view_index) >= rig.train_views.size())
                    throw UsageError{"--view-index out of range for the synthetic rig"};
                base_view = rig.train_views[static_cast<std::size_t>(zb_view_index)];
            } else {
                if (zb_cameras.empty())
                    throw UsageError{"zoom-bench with --ply also needs --cameras"};
                scene = load_scene_or_die(zb_ply);
                base_view = select_view(load_cameras(zb_cameras), zb_view_index);
            }

            std::vector<FilterMode> modes;
            const std::vector<std::string>& names =
                zb_filters.empty() ? kFilterNames : zb_filters;
            for (const std::string& name : names) {
                FilterMode mode = filter_from_name(name);
                double s_value = mode.s;
                double s0_value = mode.s0;
                state.overlay("filter", "s", zoom->count("--s"), s_value);
                state.overlay("filter", "s0", zoom->count("--s0"), s0_value);
                if (zoom->count("--s") > 0) s_value = zb_s;
                if (zoom->count("--s0") > 0) s0_value = zb_s0;
                mode.s = s_value;
                mode.s0 = s0_value;
                modes.push_back(mode);
            }

            return cmd_zoom_bench(scene, base_view, modes, zb_multipliers, !zb_no_psnr,
                                  zb_out_csv, zb_out_png, state.threads());
        }

        if (*emap) {
            CommonState state;
            state.deterministic = em_deterministic;
            state.load(em_config);
            const FilterMode mode = resolve_filter(state, emap, em_filter, em_s, em_s0);
            return cmd_entropy_map(em_ply, em_cameras, em_view_index, em_out, mode,
                                   state.threads());
        }
    } catch (const UsageError& e) {
        std::cerr << "spectral-splat: " << e.message << "\n"
                  << "Run 'spectral-splat <command> --help' for usage.\n";
        return 2;
    } catch (const NonFiniteError& e) {
        std::cerr << "spectral-splat: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const SingularCovarianceError& e) {
        std::cerr << "spectral-splat: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const DegenerateError& e) {
        std::cerr << "spectral-splat: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const RankDeficientError& e) {
        std::cerr << "spectral-splat: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const ZeroTraceError& e) {
        std::cerr << "spectral-splat: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "spectral-splat: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "spectral-splat: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
