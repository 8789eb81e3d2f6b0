#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include <gtest/gtest.h>

#include "ksim/constants.hpp"
#include "ksim/phantom.hpp"

using namespace ksim;
namespace fs = std::filesystem;

namespace {

const PhantomVolume& phantom96() {
    static const PhantomVolume p = generate_phantom(96);
    return p;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("ksim_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Phantom, SupportedSizesProduceCubicGrids) {
    for (std::size_t n : {64u, 96u, 128u}) {
        const PhantomVolume p = n == 96 ? phantom96() : generate_phantom(n);
        EXPECT_EQ(p.size, n);
        EXPECT_TRUE(p.dimensions_agree());
        EXPECT_NO_THROW(p.validate());
    }
}

TEST(Phantom, UnsupportedSizeIsRejected) {
    try {
        generate_phantom(100);
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_EQ(e.field(), "size");
    }
}

TEST(Phantom, NonPositiveRelaxationRejected) {
    TissueParams t;
    t.wm.t1 = 0.0;
    EXPECT_THROW(generate_phantom(64, t), validation_error);
    t = {};
    t.csf.t2star = -1.0;
    EXPECT_THROW(generate_phantom(64, t), validation_error);
}

TEST(Phantom, EmptyOutsideHeadMatchesEllipsoidOracle) {
    // Independent membership test for the outermost shell (semi-axes 0.76, 0.92, 0.78).
    const auto& p = phantom96();
    const std::size_t n = 96;
    std::size_t inside = 0, nonzero = 0;
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double ux = (2.0 * x + 1.0) / n - 1.0;
                const double uy = (2.0 * y + 1.0) / n - 1.0;
                const double uz = (2.0 * z + 1.0) / n - 1.0;
                const bool in = ux * ux / (0.76 * 0.76) + uy * uy / (0.92 * 0.92) + uz * uz / (0.78 * 0.78) <= 1.0;
                inside += in;
                nonzero += p.m0(x, y, z) > 0.0;
                if (!in) {
                    ASSERT_EQ(p.m0(x, y, z), 0.0);
                    ASSERT_EQ(p.delta_b(x, y, z), 0.0);
                }
            }
    EXPECT_EQ(nonzero, inside);
}

TEST(Phantom, TissueValuesAreAssignedDirectly) {
    TissueParams t;
    const auto& p = phantom96();
    std::set<double> t1_values;
    for (std::size_t i = 0; i < p.m0.size(); ++i) {
        if (p.m0[i] == 0.0) continue;
        t1_values.insert(p.t1[i]);
        if (p.m0[i] == t.csf.m0) EXPECT_EQ(p.t1[i], t.csf.t1);
        if (p.m0[i] == t.wm.m0) EXPECT_EQ(p.t2star[i], t.wm.t2star);
    }
    EXPECT_EQ(t1_values, (std::set<double>{t.gm.t1, t.wm.t1, t.csf.t1}));
}

TEST(Phantom, CsfT1AboveWmT1) {
    const auto& p = phantom96();
    TissueParams t;
    double min_csf = 1e9, max_wm = 0.0;
    for (std::size_t i = 0; i < p.m0.size(); ++i) {
        if (p.m0[i] == t.csf.m0) min_csf = std::min(min_csf, p.t1[i]);
        if (p.m0[i] == t.wm.m0) max_wm = std::max(max_wm, p.t1[i]);
    }
    EXPECT_GT(min_csf, max_wm);
}

TEST(Phantom, SizeChangesDensityNotValues) {
    const PhantomVolume a = generate_phantom(64);
    const auto& b = phantom96();
    auto values = [](const PhantomVolume& p) {
        std::set<std::tuple<double, double, double>> s;
        for (std::size_t i = 0; i < p.m0.size(); ++i)
            if (p.m0[i] > 0.0) s.insert({p.m0[i], p.t1[i], p.t2star[i]});
        return s;
    };
    EXPECT_EQ(values(a), values(b));
}

TEST(Phantom, Deterministic) {
    const PhantomVolume a = generate_phantom(64);
    const PhantomVolume b = generate_phantom(64);
    EXPECT_EQ(a.m0, b.m0);
    EXPECT_EQ(a.delta_b, b.delta_b);
    EXPECT_EQ(a.act_map, b.act_map);
}

TEST(Phantom, DeltaBSpansAboutATenthOfARadianAtTe) {
    const auto& p = phantom96();
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < p.m0.size(); ++i)
        if (p.m0[i] > 0.0) {
            lo = std::min(lo, p.delta_b[i]);
            hi = std::max(hi, p.delta_b[i]);
        }
    const double span = gamma_hz_per_t * (hi - lo) * 0.06;
    EXPECT_GT(span, 0.05);
    EXPECT_LT(span, 1.0);
}

TEST(Slice, CentralAxialHasTissueEdgeSagittalIsEmpty) {
    const auto& p = phantom96();
    const SliceMaps mid = extract_slice(p, Plane::axial, 48);
    double total = 0.0;
    for (double v : mid.m0.storage()) total += v;
    EXPECT_GT(total, 0.0);
    const SliceMaps edge = extract_slice(p, Plane::sagittal, 1);
    for (double v : edge.m0.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Slice, OrientationConventions) {
    const auto& p = phantom96();
    const SliceMaps ax = extract_slice(p, Plane::axial, 40);
    const SliceMaps sag = extract_slice(p, Plane::sagittal, 30);
    const SliceMaps cor = extract_slice(p, Plane::coronal, 50);
    for (std::size_t r = 0; r < 96; r += 7)
        for (std::size_t c = 0; c < 96; c += 5) {
            EXPECT_EQ(ax.m0(c, r), p.m0(c, r, 39));
            EXPECT_EQ(sag.m0(c, r), p.m0(29, c, r));
            EXPECT_EQ(cor.m0(c, r), p.m0(c, 49, r));
        }
}

TEST(Slice, IndexOutOfRange) {
    EXPECT_THROW(extract_slice(phantom96(), Plane::axial, 0), validation_error);
    EXPECT_THROW(extract_slice(phantom96(), Plane::coronal, 97), validation_error);
}

TEST(Slice, ExtractEmbedIdentity) {
    PhantomVolume p = generate_phantom(64);
    const PhantomVolume orig = p;
    for (Plane pl : {Plane::axial, Plane::sagittal, Plane::coronal}) {
        SliceMaps s = extract_slice(p, pl, 33);
        embed_slice(p, s);
        EXPECT_EQ(p.m0, orig.m0);
        EXPECT_EQ(p.t1, orig.t1);
        EXPECT_EQ(p.delta_b, orig.delta_b);
        EXPECT_EQ(p.act_map, orig.act_map);
    }
    // Modified slice lands exactly in its plane.
    SliceMaps s = extract_slice(p, Plane::coronal, 10);
    s.m0(3, 4) = 0.123;
    embed_slice(p, s);
    EXPECT_EQ(p.m0(3, 9, 4), 0.123);
}

TEST(DeriveT2, Examples) {
    EXPECT_DOUBLE_EQ(derive_t2(0.05, 0.0, gamma_hz_per_t), 0.05);
    // gamma dB = 5 s^-1
    const double db = 5.0 / gamma_hz_per_t;
    EXPECT_NEAR(derive_t2(0.05, db, gamma_hz_per_t), 1.0 / 15.0, 1e-14);
    // gamma dB >= 1/T2* clamps
    EXPECT_EQ(derive_t2(0.05, 25.0 / gamma_hz_per_t, gamma_hz_per_t), 3.0);
    EXPECT_EQ(derive_t2(0.05, 20.0 / gamma_hz_per_t, gamma_hz_per_t, 2.0), 2.0);
}

TEST(DeriveT2, InverseRelationOnUnclampedVoxels) {
    const auto& p = phantom96();
    for (std::size_t i = 0; i < p.m0.size(); i += 37) {
        if (p.m0[i] <= 0.0) continue;
        const double t2 = derive_t2(p.t2star[i], p.delta_b[i], gamma_hz_per_t);
        if (t2 == 3.0) continue;
        EXPECT_NEAR(1.0 / t2 + gamma_hz_per_t * std::abs(p.delta_b[i]), 1.0 / p.t2star[i], 1e-9);
    }
}

TEST(Activation, DefaultRegionMatchesSphereOracle) {
    const auto& p = phantom96();
    const ActivationRegion r = default_activation_region(96);
    // Lattice points of a sphere of integer center and radius 3.
    ASSERT_EQ(r.radius, 3.0);
    std::size_t lattice = 0, in_tissue = 0;
    for (int dz = -3; dz <= 3; ++dz)
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx)
                if (dx * dx + dy * dy + dz * dz <= 9) {
                    ++lattice;
                    const auto x = static_cast<std::size_t>(r.center[0] + dx);
                    const auto y = static_cast<std::size_t>(r.center[1] + dy);
                    const auto z = static_cast<std::size_t>(r.center[2] + dz);
                    in_tissue += p.m0(x, y, z) > 0.0;
                    EXPECT_EQ(p.m0(x, y, z), TissueParams{}.gm.m0) << "sphere should sit in gray matter";
                }
    EXPECT_EQ(lattice, 123u);
    std::size_t count = 0;
    for (auto v : p.act_map.storage()) count += v;
    EXPECT_EQ(count, in_tissue);
    const SliceMaps s = extract_slice(p, Plane::axial, 48);
    std::size_t in_slice = 0;
    for (auto v : s.act_map.storage()) in_slice += v;
    EXPECT_EQ(in_slice, 29u);  // disc of radius 3 on the lattice
}

TEST(Activation, RadiusZeroIsSingleVoxel) {
    const auto& p = phantom96();
    const auto act = generate_activation_map(p, {{48, 48, 48}, 0.0});
    std::size_t count = 0;
    for (auto v : act.storage()) count += v;
    EXPECT_EQ(count, 1u);
    EXPECT_EQ(act(48, 48, 48), 1);
}

TEST(Activation, EmptyCornerIsAnError) {
    EXPECT_THROW(generate_activation_map(phantom96(), {{2, 2, 2}, 2.0}), validation_error);
}

TEST(PhantomFile, RoundTripIsBitwise) {
    const PhantomVolume p = generate_phantom(64);
    const auto path = temp_file("rt.shkph");
    save_phantom(p, path);
    const PhantomVolume q = load_phantom(path);
    EXPECT_EQ(q.size, 64u);
    EXPECT_EQ(p.m0, q.m0);
    EXPECT_EQ(p.t1, q.t1);
    EXPECT_EQ(p.t2star, q.t2star);
    EXPECT_EQ(p.delta_b, q.delta_b);
    EXPECT_EQ(p.act_map, q.act_map);
    fs::remove(path);
}

TEST(PhantomFile, ActivationSizeMismatch) {
    const PhantomVolume small = generate_phantom(64);
    const auto path = temp_file("act64.shkph");
    save_activation_map(small.act_map, path);
    EXPECT_EQ(load_activation_map(path, small), small.act_map);
    try {
        load_activation_map(path, phantom96());
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_EQ(e.field(), "dimensions");
    }
    fs::remove(path);
}

TEST(PhantomFile, TruncatedAndBadHeader) {
    const PhantomVolume p = generate_phantom(64);
    const auto path = temp_file("trunc.shkph");
    save_phantom(p, path);
    fs::resize_file(path, fs::file_size(path) - 100);
    EXPECT_THROW(load_phantom(path), format_error);
    fs::resize_file(path, 8);
    EXPECT_THROW(load_phantom(path), format_error);
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOTAPHANTOM";
    }
    EXPECT_THROW(load_phantom(path), format_error);
    fs::remove(path);
}
