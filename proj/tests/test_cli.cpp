#include "anms_vo/anms_vo.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace anms_vo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::string& args) {
    const fs::path err_file = fs::temp_directory_path() / "anms_vo_cli_stderr.txt";
    const std::string cmd = std::string(ANMS_VO_CLI) + " " + args + " 2>" + err_file.string();
    Outcome o;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return o;
    std::array<char, 4096> buf{};
    while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) o.out.append(buf.data(), n);
    const int raw = ::pclose(p);
    o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream e(err_file);
    o.err.assign(std::istreambuf_iterator<char>(e), {});
    return o;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("anms_vo_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Noiseless synthetic circle, dumped once per test binary run.
const fs::path& synth_dir() {
    static const fs::path dir = [] {
        const fs::path d = temp_dir("synth");
        SceneSpec spec;
        spec.frames = 40;
        spec.seed = 2;
        dump_scene(generate_scene(spec), d);
        return d;
    }();
    return dir;
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run_cli("").status, 2);
    EXPECT_EQ(run_cli("frobnicate").status, 2);
    const Outcome o = run_cli("eval --est /nonexistent --gt /nonexistent");
    EXPECT_EQ(o.status, 2);
    EXPECT_TRUE(o.out.empty());
}

TEST(Cli, AnmsMatchesLibrary) {
    const fs::path d = temp_dir("anms");
    const fs::path in = synth_dir() / "000007_left.spft";
    const Outcome o = run_cli("anms --features " + q(in) + " --n 50 --out " + q(d / "sel.spft"));
    ASSERT_EQ(o.status, 0) << o.err;
    const FeatureSet src = load_features(in);
    const FeatureSet sel = load_features(d / "sel.spft");
    const auto want = select_top_n(src, 50).selected;
    ASSERT_EQ(sel.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(sel.keypoints[i].x, src.keypoints[want[i]].x);
        EXPECT_EQ(sel.keypoints[i].y, src.keypoints[want[i]].y);
    }
    EXPECT_NE(o.out.find("selected 50"), std::string::npos);
    EXPECT_NE(o.out.find("min_pairwise_distance_px"), std::string::npos);
    EXPECT_NE(o.out.find("radius_quantiles_px"), std::string::npos);
}

TEST(Cli, AnmsLargeAndZeroN) {
    const fs::path d = temp_dir("anms2");
    const fs::path in = synth_dir() / "000000_left.spft";
    const FeatureSet src = load_features(in);
    ASSERT_EQ(run_cli("anms --features " + q(in) + " --n 100000 --out " + q(d / "all.spft")).status, 0);
    EXPECT_EQ(encode_spft(load_features(d / "all.spft")), encode_spft(src.subset(select_top_n(src, src.size()).selected)));
    ASSERT_EQ(run_cli("anms --features " + q(in) + " --n 0 --out " + q(d / "none.spft")).status, 0);
    const FeatureSet none = load_features(d / "none.spft");
    EXPECT_EQ(none.size(), 0u);
    EXPECT_EQ(none.dim(), src.dim());
}

TEST(Cli, RunSyntheticNoiseless) {
    const fs::path d = temp_dir("run");
    const Outcome o = run_cli("run --dataset " + q(synth_dir()) + " --source spft --out-traj " + q(d / "est.txt"));
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_NE(o.out.find("lost 0"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("mean_inliers"), std::string::npos);
    EXPECT_NE(o.out.find("mean_track_ms"), std::string::npos);
    const Trajectory est = read_kitti_poses(d / "est.txt");
    const Trajectory gt = read_kitti_poses(synth_dir() / "gt_poses.txt");
    ASSERT_EQ(est.size(), 40u);
    EXPECT_LT(ate_rmse(est, gt, Alignment::none).rmse, 1e-3 * gt.path_length());

    const Outcome tum = run_cli("run --dataset " + q(synth_dir()) + " --out-traj " + q(d / "est.tum") + " --format tum");
    ASSERT_EQ(tum.status, 0) << tum.err;
    EXPECT_TRUE(read_trajectory(d / "est.tum").has_timestamps());
}

TEST(Cli, RunWithConfig) {
    const fs::path d = temp_dir("runcfg");
    std::ofstream(d / "good.cfg") << "anms_n = 200\nseed = 4\n";
    std::ofstream(d / "bad.cfg") << "anms_n = 200\nanms = 3\n";
    EXPECT_EQ(run_cli("run --dataset " + q(synth_dir()) + " --config " + q(d / "good.cfg") + " --out-traj " +
                      q(d / "a.txt"))
                  .status,
              0);
    const Outcome bad = run_cli("run --dataset " + q(synth_dir()) + " --config " + q(d / "bad.cfg") + " --out-traj " +
                                q(d / "b.txt"));
    EXPECT_EQ(bad.status, 1);
    EXPECT_NE(bad.err.find("bad.cfg:2"), std::string::npos) << bad.err;
}

TEST(Cli, RunSingleFrame) {
    const fs::path d = temp_dir("one");
    for (const char* f : {"000000_left.spft", "000000_right.spft", "calib.txt"}) fs::copy_file(synth_dir() / f, d / f);
    const Outcome o = run_cli("run --dataset " + q(d) + " --out-traj " + q(d / "est.txt"));
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_EQ(read_kitti_poses(d / "est.txt").size(), 1u);
}

TEST(Cli, RunMismatchedDimensions) {
    const fs::path d = temp_dir("dims");
    for (const char* f : {"000000_left.spft", "000000_right.spft", "calib.txt"}) fs::copy_file(synth_dir() / f, d / f);
    FeatureSet l = load_features(synth_dir() / "000001_left.spft");
    FeatureSet r = load_features(synth_dir() / "000001_right.spft");
    l.descriptors = l.descriptors.leftCols(128).eval();
    r.descriptors = r.descriptors.leftCols(128).eval();
    l.normalized = r.normalized = false;
    save_features(l, d / "000001_left.spft");
    save_features(r, d / "000001_right.spft");
    const Outcome o = run_cli("run --dataset " + q(d) + " --out-traj " + q(d / "est.txt"));
    EXPECT_EQ(o.status, 1);
    EXPECT_NE(o.err.find("dimension"), std::string::npos) << o.err;
    EXPECT_TRUE(o.out.empty());
}

TEST(Cli, RunInitializationFailure) {
    const fs::path d = temp_dir("init");
    fs::copy_file(synth_dir() / "calib.txt", d / "calib.txt");
    FeatureSet empty;
    empty.width = 1241;
    empty.height = 376;
    save_features(empty, d / "000000_left.spft");
    save_features(empty, d / "000000_right.spft");
    const Outcome o = run_cli("run --dataset " + q(d) + " --out-traj " + q(d / "est.txt"));
    EXPECT_EQ(o.status, 1);
    EXPECT_NE(o.err.find("initialisation failed"), std::string::npos) << o.err;
}

TEST(Cli, EvalIdentical) {
    const fs::path gt = synth_dir() / "gt_poses.txt";
    const fs::path d = temp_dir("evalsame");
    Trajectory line;
    for (int i = 0; i <= 300; ++i) line.push_back(i, PoseSE3(Eigen::Matrix3d::Identity(), {0.0, 0.0, 1.0 * i}));
    write_trajectory(line, d / "line.txt", TrajectoryFormat::kitti);
    const Outcome o = run_cli("eval --est " + q(d / "line.txt") + " --gt " + q(d / "line.txt") + " --mode kitti");
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_NE(o.out.find("translational_error 0.00 %"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("rotational_error 0.0000 deg/m"), std::string::npos) << o.out;
    const Outcome ate = run_cli("eval --est " + q(gt) + " --gt " + q(gt) + " --mode ate");
    ASSERT_EQ(ate.status, 0);
    EXPECT_NE(ate.out.find("ate_rmse_m 0.000000"), std::string::npos) << ate.out;
    const Outcome rpe = run_cli("eval --est " + q(gt) + " --gt " + q(gt) + " --mode rpe --delta 2");
    ASSERT_EQ(rpe.status, 0);
    EXPECT_NE(rpe.out.find("rpe_trans_rmse_m 0.000000"), std::string::npos) << rpe.out;
}

TEST(Cli, EvalDriftFixtureAndPlot) {
    const fs::path d = temp_dir("evaldrift");
    Trajectory gt, est;
    for (int i = 0; i <= 1000; ++i) {
        const Eigen::Vector3d t(0.0, 0.0, 1.0 * i);
        gt.push_back(i, PoseSE3(Eigen::Matrix3d::Identity(), t));
        est.push_back(i, PoseSE3(Eigen::AngleAxisd(0.001 * i, Eigen::Vector3d::UnitY()).toRotationMatrix(), t));
    }
    write_trajectory(gt, d / "gt.txt", TrajectoryFormat::kitti);
    write_trajectory(est, d / "est.txt", TrajectoryFormat::kitti);
    const Outcome o = run_cli("eval --est " + q(d / "est.txt") + " --gt " + q(d / "gt.txt") + " --mode kitti --plot " +
                              q(d / "xz.svg") + " --csv " + q(d / "seg.csv"));
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_NE(o.out.find("rotational_error 0.0573 deg/m"), std::string::npos) << o.out;

    std::ifstream svg(d / "xz.svg");
    const std::string text(std::istreambuf_iterator<char>(svg), {});
    EXPECT_EQ(text.rfind("<?xml", 0), 0u);
    EXPECT_NE(text.find("<svg"), std::string::npos);
    EXPECT_NE(text.find("</svg>"), std::string::npos);
    EXPECT_EQ(count_of(text, "<polyline"), 2u);

    std::ifstream csv(d / "seg.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header.rfind("first_frame", 0), 0u);
}

TEST(Cli, EvalNoAssociationIsDiagnosed) {
    const fs::path d = temp_dir("evalassoc");
    std::ofstream(d / "a.txt") << "0.0 0 0 0 0 0 0 1\n1.0 0 0 0 0 0 0 1\n";
    std::ofstream(d / "b.txt") << "5.0 0 0 0 0 0 0 1\n6.0 0 0 0 0 0 0 1\n";
    const Outcome o = run_cli("eval --est " + q(d / "a.txt") + " --gt " + q(d / "b.txt") + " --mode ate");
    EXPECT_EQ(o.status, 1);
    EXPECT_NE(o.err.find("associate"), std::string::npos) << o.err;
}

TEST(Cli, SynthWritesDataset) {
    const fs::path d = temp_dir("synthcmd");
    const Outcome o = run_cli("synth --out " + q(d / "ds") + " --frames 3 --shape line --landmarks 80");
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_EQ(read_feature_dir(d / "ds").size(), 3u);
    EXPECT_EQ(read_kitti_poses(d / "ds" / "gt_poses.txt").size(), 3u);
}
