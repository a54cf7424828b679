// anms_vo command-line tool.
//
//   anms_vo anms  --features f.spft --n 1000 --out sel.spft
//   anms_vo run   --dataset dir [--source spft|classical] [--config run.cfg] --out-traj est.txt [--format kitti|tum]
//   anms_vo eval  --est est.txt --gt gt.txt --mode ate|rpe|kitti [--plot xz.svg]
//   anms_vo synth --out dir [--shape circle] [--frames 200] ...
//
// Data goes to stdout, diagnostics to stderr. Exit status 0 on success,
// 1 on a runtime error, 2 on a usage error.

#include "anms_vo/anms_vo.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace anms_vo;

namespace {

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---------------------------------------------------------------------------
// anms

struct AnmsArgs {
    std::string features;
    std::size_t n = kDefaultAnmsCount;
    std::string out;
};

int cmd_anms(const AnmsArgs& a) {
    const FeatureSet in = load_features(a.features);
    const SuppressionResult res = select_top_n(in, a.n);
    FeatureSet sel = in.subset(res.selected);
    save_features(sel, a.out);

    std::cout << "input " << in.size() << '\n' << "selected " << sel.size() << '\n';
    double min_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sel.size(); ++i)
        for (std::size_t j = i + 1; j < sel.size(); ++j)
            min_d = std::min(min_d, std::hypot(sel.keypoints[i].x - sel.keypoints[j].x,
                                               sel.keypoints[i].y - sel.keypoints[j].y));
    std::cout << "min_pairwise_distance_px ";
    if (sel.size() < 2) std::cout << "-\n";
    else std::cout << min_d << '\n';

    std::vector<double> finite;
    for (const std::size_t i : res.selected)
        if (std::isfinite(res.radii[i])) finite.push_back(res.radii[i]);
    std::cout << "unbounded_radii " << sel.size() - finite.size() << '\n';
    if (finite.empty()) {
        std::cout << "radius_quantiles_px -\n";
    } else {
        std::cout << "radius_quantiles_px min " << quantile(finite, 0.0) << " q25 " << quantile(finite, 0.25) << " median "
                  << quantile(finite, 0.5) << " q75 " << quantile(finite, 0.75) << " max " << quantile(finite, 1.0)
                  << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
    std::string dataset;
    std::string source = "spft";
    std::string config;
    std::string out_traj;
    std::string format = "kitti";
};

TrajectoryFormat parse_format(const std::string& s) { return s == "tum" ? TrajectoryFormat::tum : TrajectoryFormat::kitti; }

int cmd_run(const RunArgs& a) {
    const fs::path dir = a.dataset;
    const RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
    cfg.pipeline.validate();

    std::unique_ptr<FeatureSource> source;
    ImageSize size;
    if (a.source == "spft") {
        auto src = std::make_unique<SpftDirectorySource>(dir);
        if (src->frame_count() == 0) throw Error(dir.string() + " contains no <frame>_left/right.spft pairs");
        const FeatureSet first = load_features(src->frames().front().left);
        size = {first.width, first.height};
        source = std::move(src);
    } else {
        const auto frames = list_stereo_dir(dir, "pgm");
        if (frames.empty()) throw Error(dir.string() + " contains no <frame>_left/right.pgm pairs");
        const GrayImage first = read_pgm(frames.front().left);
        size = {first.width, first.height};
        source = std::make_unique<ClassicalImageSource>(make_pgm_source(dir, cfg.effective_pool_size()));
    }
    const CameraRig rig = read_kitti_calib(dir / "calib.txt", size);

    std::vector<double> times;
    if (fs::exists(dir / "times.txt")) {
        times = read_timestamps(dir / "times.txt");
        if (times.size() != source->frame_count())
            throw FormatError("has " + std::to_string(times.size()) + " timestamps for " +
                                  std::to_string(source->frame_count()) + " frames",
                              (dir / "times.txt").string());
    }
    const TrajectoryFormat format = parse_format(a.format);
    if (format == TrajectoryFormat::tum && times.empty())
        throw ValidationError("--format tum needs " + (dir / "times.txt").string());

    const SequenceResult res = run_sequence(*source, rig, cfg.pipeline, times);
    write_trajectory(res.trajectory, fs::path(a.out_traj), format);

    std::size_t keyframes = 0, tracked = 0, inliers = 0;
    double secs = 0.0;
    for (std::size_t i = 0; i < res.frames.size(); ++i) {
        const auto& f = res.frames[i];
        keyframes += f.keyframe ? 1 : 0;
        secs += f.track_seconds;
        if (i > 0 && f.status == TrackingStatus::ok && f.inliers > 0) {
            ++tracked;
            inliers += f.inliers;
        }
    }
    std::cout << "frames " << res.frames.size() << '\n'
              << "ok " << res.count(TrackingStatus::ok) << '\n'
              << "lost " << res.count(TrackingStatus::lost) << '\n'
              << "keyframes " << keyframes << '\n'
              << "mean_inliers " << (tracked ? static_cast<double>(inliers) / static_cast<double>(tracked) : 0.0) << '\n'
              << "mean_track_ms " << 1000.0 * secs / static_cast<double>(res.frames.size()) << '\n'
              << "trajectory " << a.out_traj << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string est;
    std::string gt;
    std::string mode = "kitti";
    std::string plot;
    std::string csv;
    std::string align = "rigid";
    std::size_t delta = 1;
};

int cmd_eval(const EvalArgs& a) {
    const Trajectory est = read_trajectory(a.est);
    const Trajectory gt = read_trajectory(a.gt);
    const Association assoc =
        est.has_timestamps() && gt.has_timestamps() ? Association::timestamp : Association::frame_index;
    if (associate(est, gt, assoc).empty())
        throw ValidationError("no estimate pose associates with a ground-truth pose (" +
                              std::string(assoc == Association::timestamp ? "timestamps within 10 ms" : "frame index") +
                              ")");

    std::cout << std::fixed;
    if (a.mode == "ate") {
        const AteReport r = ate_rmse(est, gt, a.align == "none" ? Alignment::none : Alignment::rigid, assoc);
        const double len = gt.path_length();
        std::cout << "poses " << r.residuals.size() << '\n'
                  << "alignment " << a.align << '\n'
                  << "ate_rmse_m " << std::setprecision(6) << r.rmse << '\n'
                  << "gt_path_length_m " << std::setprecision(3) << len << '\n';
        if (len > 0.0) std::cout << "ate_percent_of_path " << std::setprecision(4) << 100.0 * r.rmse / len << '\n';
    } else if (a.mode == "rpe") {
        const RpeReport r = rpe(est, gt, a.delta, assoc);
        std::cout << "pairs " << r.translational.size() << '\n'
                  << "delta " << a.delta << '\n'
                  << "rpe_trans_rmse_m " << std::setprecision(6) << r.rmse << '\n'
                  << "rpe_rot_rmse_deg " << std::setprecision(6) << r.rotational_rmse_deg << '\n';
    } else {
        const SegmentErrorReport r = kitti_segment_errors(est, gt, kitti_segment_lengths(), kKittiStartStride, assoc);
        print_segment_table(std::cout, r);
        if (!r.ok) std::cerr << "warning: " << r.status << '\n';
        std::cout << std::fixed << "translational_error " << std::setprecision(2) << r.translational_percent << " %\n"
                  << "rotational_error " << std::setprecision(4) << r.rotational_deg_per_m << " deg/m\n";
        if (assoc == Association::frame_index) {
            const SegmentErrorReport p = planar_segment_errors(est, gt);
            std::cout << "translational_error_2d " << std::setprecision(2) << p.translational_percent << " %\n"
                      << "rotational_error_2d " << std::setprecision(4) << p.rotational_deg_per_m << " deg/m\n";
        }
        if (!a.csv.empty()) {
            std::ofstream f(a.csv);
            if (!f) throw Error("cannot open " + a.csv + " for writing");
            write_segment_csv(f, r);
        }
    }
    if (!a.plot.empty()) {
        std::ofstream f(a.plot);
        if (!f) throw Error("cannot open " + a.plot + " for writing");
        write_xz_svg(f, {{"ground truth", "black", &gt}, {"estimate", "#d62728", &est}});
    }
    return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string out;
    std::string shape = "circle";
    std::size_t frames = 200;
    double size = 10.0;
    std::size_t landmarks = 400;
    double noise = 0.0;
    double outliers = 0.0;
    std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a) {
    static const std::map<std::string, TrajectoryShape> shapes{
        {"line", TrajectoryShape::line}, {"circle", TrajectoryShape::circle}, {"figure8", TrajectoryShape::figure8}};
    SceneSpec spec;
    spec.shape = shapes.at(a.shape);
    spec.frames = a.frames;
    spec.size = a.size;
    spec.n_landmarks = a.landmarks;
    spec.noise_px = a.noise;
    spec.outlier_rate = a.outliers;
    spec.seed = a.seed;
    const SyntheticScene scene = generate_scene(spec);
    dump_scene(scene, a.out);
    std::cout << "frames " << scene.trajectory.size() << '\n'
              << "landmarks " << scene.landmarks.size() << '\n'
              << "path_length_m " << scene.trajectory.path_length() << '\n'
              << "dir " << a.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stereo visual odometry with adaptive non-maximal suppression"};
    app.require_subcommand(1);

    AnmsArgs anms_args;
    auto* anms = app.add_subcommand("anms", "Select N keypoints of a feature file with ANMS");
    anms->add_option("--features", anms_args.features, "Input SPFT file")->required()->check(CLI::ExistingFile);
    anms->add_option("--n", anms_args.n, "Keypoints to keep")->capture_default_str();
    anms->add_option("--out", anms_args.out, "Output SPFT file")->required();

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run stereo odometry over a dataset directory");
    run->add_option("--dataset", run_args.dataset, "Directory with calib.txt and <frame>_{left,right} files")
        ->required()
        ->check(CLI::ExistingDirectory);
    run->add_option("--source", run_args.source, "Feature source")
        ->check(CLI::IsMember({"spft", "classical"}))
        ->capture_default_str();
    run->add_option("--config", run_args.config, "key = value run configuration")->check(CLI::ExistingFile);
    run->add_option("--out-traj", run_args.out_traj, "Output trajectory file")->required();
    run->add_option("--format", run_args.format, "Trajectory format")
        ->check(CLI::IsMember({"kitti", "tum"}))
        ->capture_default_str();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Compare an estimated trajectory with ground truth");
    eval->add_option("--est", eval_args.est, "Estimated trajectory (KITTI or TUM)")->required()->check(CLI::ExistingFile);
    eval->add_option("--gt", eval_args.gt, "Ground-truth trajectory (KITTI or TUM)")->required()->check(CLI::ExistingFile);
    eval->add_option("--mode", eval_args.mode, "Metric")
        ->check(CLI::IsMember({"ate", "rpe", "kitti"}))
        ->capture_default_str();
    eval->add_option("--plot", eval_args.plot, "Write an XZ-plane SVG plot");
    eval->add_option("--csv", eval_args.csv, "Write per-segment errors (kitti mode)");
    eval->add_option("--align", eval_args.align, "ATE alignment")
        ->check(CLI::IsMember({"rigid", "none"}))
        ->capture_default_str();
    eval->add_option("--delta", eval_args.delta, "RPE frame offset")->check(CLI::PositiveNumber)->capture_default_str();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Write a synthetic SPFT dataset with ground truth");
    synth->add_option("--out", synth_args.out, "Output directory")->required();
    synth->add_option("--shape", synth_args.shape, "Trajectory shape")
        ->check(CLI::IsMember({"line", "circle", "figure8"}))
        ->capture_default_str();
    synth->add_option("--frames", synth_args.frames, "Frame count")->capture_default_str();
    synth->add_option("--size", synth_args.size, "Line length / circle radius / figure-8 half-width, metres")
        ->capture_default_str();
    synth->add_option("--landmarks", synth_args.landmarks, "Landmark count")->capture_default_str();
    synth->add_option("--noise", synth_args.noise, "Pixel noise std-dev")->capture_default_str();
    synth->add_option("--outliers", synth_args.outliers, "Descriptor outlier rate")->capture_default_str();
    synth->add_option("--seed", synth_args.seed, "Seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, std::cerr, std::cerr) == 0 ? 0 : 2;
    }

    try {
        if (anms->parsed()) return cmd_anms(anms_args);
        if (run->parsed()) return cmd_run(run_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (synth->parsed()) return cmd_synth(synth_args);
    } catch (const InitializationError& e) {
        std::cerr << "anms_vo: initialisation failed: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "anms_vo: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
