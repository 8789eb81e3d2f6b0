#include <cmath>
#include <map>
#include <memory>

#include <gtest/gtest.h>

#include "ksim/experiment.hpp"
#include "oracles.hpp"

using namespace ksim;

namespace {

const PhantomVolume& phantom64() {
    static const PhantomVolume p = generate_phantom(64);
    return p;
}

SliceMaps center_slice() { return extract_slice(phantom64(), Plane::axial, 32); }

ScanParams scan64() {
    ScanParams p;
    p.grid_n = 64;
    return p;
}

TrajectoryPtr cart64(const ScanParams& p) { return std::make_shared<const Trajectory>(cartesian_trajectory(p)); }

DesignVector short_design() { return build_design({2, 2, 3, 2}); }

}  // namespace

TEST(Design, WorkedExampleCounts) {
    const auto d = build_design({16, 19, 16, 16});
    EXPECT_EQ(d.size(), 624u);
    EXPECT_EQ(d.task_count(), 304u);
    EXPECT_EQ(d.n_initial_rest, 16u);
    for (std::size_t t = 0; t < 16; ++t) EXPECT_EQ(d.x[t], 0);
    EXPECT_EQ(d.x[16], 1);
    EXPECT_EQ(d.x[31], 1);
    EXPECT_EQ(d.x[32], 0);
    EXPECT_EQ(d.x[48], 1);
    EXPECT_EQ(d.x[623], 0);
}

TEST(Design, SmallCases) {
    EXPECT_EQ(build_design({0, 1, 1, 0}).x, std::vector<std::uint8_t>{1});
    EXPECT_EQ(build_design({2, 0, 5, 5}).x, (std::vector<std::uint8_t>{0, 0}));
    EXPECT_EQ(build_design({1, 2, 1, 1}).x, (std::vector<std::uint8_t>{0, 1, 0, 1, 0}));
    EXPECT_THROW(build_design({0, 0, 4, 4}), validation_error);
    EXPECT_THROW(build_design({0, 3, 0, 0}), validation_error);
}

TEST(Design, TaskCountEqualsEpochsTimesTask) {
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t e = 0; e < 5; ++e)
            for (std::size_t k = 0; k < 4; ++k)
                for (std::size_t q = 0; q < 3; ++q) {
                    const TaskDesign d{r, e, k, q};
                    if (d.total() == 0) continue;
                    const auto v = build_design(d);
                    EXPECT_EQ(v.size(), d.total());
                    EXPECT_EQ(v.task_count(), e * k);
                }
}

TEST(ActivationSpec, Validation) {
    EXPECT_NO_THROW(ActivationSpec{}.validate());
    EXPECT_THROW((ActivationSpec{0.0, 0.5, 0.0}.validate()), validation_error);
    EXPECT_THROW((ActivationSpec{5.0, -0.1, 0.0}.validate()), validation_error);
    try {
        ActivationSpec{5.0, 0.5, 181.0}.validate();
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_EQ(e.field(), "trpc_deg");
    }
}

TEST(ApplyActivation, ScalesAndRotatesActiveVoxelsOnly) {
    const SliceMaps s = center_slice();
    ASSERT_GT(std::count(s.act_map.storage().begin(), s.act_map.storage().end(), 1), 0);
    const ActivationSpec spec{5.0, 0.5, 30.0};

    const SliceMaps rest = apply_activation(s, spec, 1.0, 0.1, false);
    EXPECT_EQ(rest.m0, s.m0);
    EXPECT_EQ(rest.phase_offset, s.phase_offset);

    const SliceMaps task = apply_activation(s, spec, 1.0, 0.1, true);
    for (std::size_t i = 0; i < s.m0.size(); ++i) {
        if (s.act_map[i]) {
            EXPECT_NEAR(task.m0[i], 1.1 * s.m0[i], 1e-15);
            EXPECT_NEAR(task.phase_offset[i], pi / 6, 1e-15);
        } else {
            EXPECT_EQ(task.m0[i], s.m0[i]);
            EXPECT_EQ(task.phase_offset[i], 0.0);
        }
        EXPECT_EQ(task.t1[i], s.t1[i]);
    }
    const SliceMaps idle = apply_activation(s, {5.0, 0.0, 0.0}, 1.0, 0.0, true);
    EXPECT_EQ(idle.m0, s.m0);
}

TEST(ApplyActivation, WarnsWhenNothingToActivate) {
    SliceMaps s = center_slice();
    std::fill(s.act_map.storage().begin(), s.act_map.storage().end(), 0);
    std::vector<std::string> warnings;
    const SliceMaps out = apply_activation(s, {5.0, 0.5, 0.0}, 1.0, 0.1, true, &warnings);
    EXPECT_EQ(out.m0, s.m0);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("no active voxels"), std::string::npos);
}

TEST(Simulator, DegenerateSeriesEqualsPlainSignal) {
    const SliceMaps s = center_slice();
    const ScanParams p = scan64();
    const auto traj = cart64(p);
    const auto series = simulate_time_series(s, traj, p, build_design({1, 0, 0, 0}), {5.0, 0.0, 0.0}, 3,
                                             {BaselineMode::active, false});
    ASSERT_EQ(series.frames.size(), 1u);
    const auto plain = gre_signal(s, traj, p, coil_sensitivities(1, 64)[0]);
    EXPECT_EQ(series.at(0, 0).values, plain.values);
}

TEST(Simulator, TaskMinusRestIsSignalOfActivationIncrement) {
    const SliceMaps s = center_slice();
    const ScanParams p = scan64();
    const auto traj = cart64(p);
    const SeriesSimulator sim(s, traj, p, short_design(), {5.0, 0.8, 0.0}, 9, {BaselineMode::active, false});
    const auto& c = sim.calibration();
    EXPECT_GT(c.beta1, 0.0);
    SliceMaps diff = s;
    for (std::size_t i = 0; i < diff.m0.size(); ++i)
        diff.m0[i] = s.act_map[i] ? s.m0[i] * c.beta1 / c.beta0 : 0.0;
    const auto expected = gre_signal(diff, traj, p, sim.coils()[0]);
    const auto& task = sim.noiseless(true, 0).values;
    const auto& rest = sim.noiseless(false, 0).values;
    std::vector<cplx> delta(task.size());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = task[j] - rest[j];
    EXPECT_LE(oracle::max_abs_diff(delta, expected.values), 1e-10 * oracle::max_abs(expected.values));
    // Frames follow the design.
    EXPECT_EQ(sim.frame(0, 0).values, rest);
    EXPECT_EQ(sim.frame(2, 0).values, task);
}

TEST(Simulator, CalibrationUsesActiveVoxelBaseline) {
    const SliceMaps s = center_slice();
    const ScanParams p = scan64();
    const SeriesSimulator sim(s, cart64(p), p, short_design(), {5.0, 0.5, 0.0}, 1);
    const auto mag = sim.reference_images()[0].magnitude();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mag.size(); ++i)
        if (s.act_map[i]) {
            sum += mag[i];
            ++n;
        }
    EXPECT_NEAR(sim.baseline_rho(), sum / n, 1e-15);
    EXPECT_EQ(sim.calibration().beta0, sim.baseline_rho());
    EXPECT_NEAR(sim.calibration().sigma_r, sim.baseline_rho() / 5.0, 1e-9 * sim.baseline_rho());
    EXPECT_NEAR(sim.calibration().beta1, 0.5 * sim.calibration().sigma_r, 1e-15);

    const SeriesSimulator whole(s, cart64(p), p, short_design(), {5.0, 0.5, 0.0}, 1, {BaselineMode::brain, true});
    double bsum = 0.0;
    std::size_t bn = 0;
    for (std::size_t i = 0; i < mag.size(); ++i)
        if (s.m0[i] > 0.0) {
            bsum += mag[i];
            ++bn;
        }
    EXPECT_NEAR(whole.baseline_rho(), bsum / bn, 1e-15);
}

TEST(Simulator, FallsBackToBrainMeanWithoutActiveVoxels) {
    SliceMaps s = center_slice();
    std::fill(s.act_map.storage().begin(), s.act_map.storage().end(), 0);
    const ScanParams p = scan64();
    const SeriesSimulator sim(s, cart64(p), p, short_design(), {5.0, 0.5, 0.0}, 1);
    EXPECT_GE(sim.warnings().size(), 2u);
    EXPECT_GT(sim.baseline_rho(), 0.0);
}

TEST(Simulator, ReproducibleAndOrderIndependent) {
    const SliceMaps s = center_slice();
    ScanParams p = scan64();
    p.n_coils = 2;
    const auto traj = cart64(p);
    const SeriesSimulator a(s, traj, p, short_design(), {5.0, 0.5, 0.0}, 77);
    const SeriesSimulator b(s, traj, p, short_design(), {5.0, 0.5, 0.0}, 77);
    const SeriesSimulator other(s, traj, p, short_design(), {5.0, 0.5, 0.0}, 78);
    const auto late = b.frame(6, 1);
    const auto series = simulate_time_series(a);
    ASSERT_EQ(series.frames.size(), 24u);
    EXPECT_EQ(series.at(6, 1).values, late.values);
    EXPECT_EQ(series.at(6, 1).coil_index, 1);
    for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(series.at(t, 0).values, b.frame(t, 0).values);
    EXPECT_NE(series.at(3, 0).values, other.frame(3, 0).values);
    EXPECT_NE(series.at(3, 0).values, series.at(3, 1).values);
    EXPECT_THROW(a.frame(12, 0), validation_error);
    EXPECT_THROW(a.frame(0, 2), validation_error);
}

TEST(Simulator, RestFramesAverageToNoiselessFrame) {
    const SliceMaps s = center_slice();
    const ScanParams p = scan64();
    const std::size_t n = 200;
    const SeriesSimulator sim(s, cart64(p), p, build_design({n, 0, 0, 0}), {5.0, 0.5, 0.0}, 5);
    const auto& clean = sim.noiseless(false, 0).values;
    std::vector<cplx> mean(clean.size());
    for (std::size_t t = 0; t < n; ++t) {
        const auto f = sim.frame(t, 0);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += f.values[j] / static_cast<double>(n);
    }
    double msd = 0.0;
    for (std::size_t j = 0; j < mean.size(); ++j) msd += std::norm(mean[j] - clean[j]);
    msd /= static_cast<double>(mean.size());
    const double sk = sim.calibration().sigma_k;
    EXPECT_NEAR(msd / (2 * sk * sk / n), 1.0, 0.05);
}

TEST(Simulator, PhaseChangeAppearsAtActiveVoxels) {
    const SliceMaps s = center_slice();
    ScanParams p = scan64();
    p.include_delta_b = false;
    p.assume_te = true;
    const auto traj = cart64(p);
    const SeriesSimulator sim(s, traj, p, short_design(), {5.0, 0.5, 30.0}, 2, {BaselineMode::active, false});
    const auto rest = reconstruct(sim.frame(0, 0), ReconKind::cartesian_idft);
    const auto task = reconstruct(sim.frame(2, 0), ReconKind::cartesian_idft);
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.m0.size(); ++i) {
        if (!s.act_map[i]) continue;
        ++n;
        EXPECT_NEAR(std::arg(task.data[i] / rest.data[i]), pi / 6, 1e-6);
        EXPECT_NEAR(std::abs(task.data[i]) - std::abs(rest.data[i]), sim.calibration().beta1 *
                    std::abs(rest.data[i]) / sim.calibration().beta0, 1e-9);
    }
    EXPECT_GT(n, 0u);
}

TEST(Simulator, InfiniteSnrIsNoiseless) {
    const SliceMaps s = center_slice();
    const ScanParams p = scan64();
    const SeriesSimulator sim(s, cart64(p), p, short_design(), {std::numeric_limits<double>::infinity(), 0.5, 0.0}, 2);
    EXPECT_EQ(sim.calibration().sigma_k, 0.0);
    EXPECT_EQ(sim.frame(1, 0).values, sim.noiseless(false, 0).values);
    EXPECT_EQ(sim.calibration().beta1, 0.0);
}

TEST(Summary, WorkedExampleParagraph) {
    RunDescription r;
    r.timestamp = "2024-11-11T17:07:23";
    r.scan.te = 0.0604;
    r.scan.tr = 1.0;
    r.scan.eesp = 0.832e-3;
    r.activation = {5.0, 0.5, 0.0};
    const std::string s = summarize_run(r);
    const std::vector<std::string> ordered = {
        "11-Nov-2024 at 17:07:23",
        "slice 48",
        "size 96 phantom",
        "Axial plane",
        "Acceleration Factor = 1",
        "Field Strength = 3T",
        "TE = 60.4ms",
        "TR = 1000ms",
        "Flip Angle = 90deg",
        "EESP = 0.832ms",
        "Number of Coils = 1",
        "GradientEcho signal equation",
        "Cartesian k-space trajectory",
        "initial 16 rest images",
        "19 epochs",
        "16 task images followed by 16 rest images",
        "total of 624 images",
        "SNR was set to 5",
        "CNR was set to 0.5",
        "0 degrees of phase",
        "CartesianIDFT",
    };
    std::size_t pos = 0;
    for (const auto& needle : ordered) {
        const auto at = s.find(needle, pos);
        ASSERT_NE(at, std::string::npos) << needle << "\n" << s;
        pos = at + needle.size();
    }
    EXPECT_EQ(s.find('\n'), std::string::npos);
}

TEST(Summary, OtherChoicesAreNamed) {
    RunDescription r;
    r.scan.sequence = Sequence::ir;
    r.scan.ti = 0.3;
    r.trajectory = TrajectoryKind::spiral;
    r.recon = ReconKind::gridding;
    r.activation.trpc_deg = -12.5;
    const std::string s = summarize_run(r);
    EXPECT_NE(s.find("InversionRecovery signal equation using the Spiral k-space trajectory"), std::string::npos);
    EXPECT_NE(s.find("TI = 300ms"), std::string::npos);
    EXPECT_NE(s.find("-12.5 degrees of phase"), std::string::npos);
    EXPECT_NE(s.find("Gridding"), std::string::npos);
    EXPECT_NE(s.find("an unknown date"), std::string::npos);
}
