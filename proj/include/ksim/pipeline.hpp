#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ksim/archive.hpp"
#include "ksim/config.hpp"
#include "ksim/experiment.hpp"
#include "ksim/noise.hpp"
#include "ksim/parallel.hpp"
#include "ksim/phantom.hpp"
#include "ksim/recon.hpp"
#include "ksim/stats.hpp"

namespace ksim {

/// Inputs resolved from a RunConfig, ready for simulation.
struct PreparedRun {
    RunConfig config;
    SliceMaps slice;
    TrajectoryPtr trajectory;
    DesignVector design;
};

inline PhantomVolume build_phantom(const RunConfig& c) {
    PhantomVolume p;
    if (c.phantom.file) {
        p = load_phantom(*c.phantom.file);
    } else {
        p = generate_phantom(c.phantom_size(), c.phantom.tissues);
    }
    if (c.phantom.activation_file)
        p.act_map = load_activation_map(*c.phantom.activation_file, p);
    else if (c.phantom.activation_region)
        p.act_map = generate_activation_map(p, *c.phantom.activation_region);
    return p;
}

/// Validates, stamps the timestamp when missing, and resolves phantom, slice and trajectory.
inline PreparedRun prepare_run(RunConfig c) {
    if (c.timestamp.empty()) c.timestamp = now_timestamp();
    validate_config(c);
    PreparedRun r;
    const PhantomVolume p = build_phantom(c);
    detail::require(p.size == c.scan.grid_n, "phantom size does not match the data matrix", "phantom");
    r.slice = extract_slice(p, c.plane, c.slice_index);
    r.trajectory = std::make_shared<const Trajectory>(make_trajectory(c.trajectory, c.scan));
    r.design = build_design(c.design);
    r.config = std::move(c);
    return r;
}

inline SeriesSimulator make_simulator(const PreparedRun& r) {
    return SeriesSimulator(r.slice, r.trajectory, r.config.scan, r.design, r.config.activation,
                           r.config.seed, {r.config.baseline, r.config.add_noise});
}

inline nlohmann::json run_metadata(const PreparedRun& r, const SeriesSimulator& sim) {
    const Calibration& cal = sim.calibration();
    nlohmann::json m;
    m["format"] = std::string(archive_magic);
    m["format_version"] = std::to_string(archive_major) + "." + std::to_string(archive_minor);
    m["config"] = config_to_json(r.config);
    m["summary"] = summarize_run(describe(r.config));
    m["timestamp"] = r.config.timestamp;
    m["seed"] = r.config.seed;
    m["prng"] = std::string(prng_name);
    m["calibration"] = {{"sigma_k", cal.sigma_k},   {"sigma", cal.sigma}, {"sigma_r", cal.sigma_r},
                        {"beta0", cal.beta0},       {"beta1", cal.beta1},
                        {"baseline_rho", sim.baseline_rho()}};
    m["design"] = r.design.x;
    m["n_initial_rest"] = r.design.n_initial_rest;
    m["n_frames"] = sim.n_frames();
    m["n_coils"] = sim.n_coils();
    m["grid_n"] = r.config.scan.grid_n;
    m["trajectory"] = std::string(to_string(r.config.trajectory));
    m["reconstruction"] = std::string(to_string(r.config.recon));
    m["warnings"] = sim.warnings();
    return m;
}

/// Receives frames in (t, coil) order; image is empty when reconstruction is disabled.
using FrameSink = std::function<void(std::size_t t, int coil, KSpaceFrame&&, std::optional<ImageFrame>&&)>;

using StartHook = std::function<void(const nlohmann::json&, const SeriesSimulator&)>;

/**
 * The single orchestration path: builds the simulator, reports metadata, then
 * produces frames in parallel batches and hands them to the sink in order.
 */
inline nlohmann::json execute_run(const PreparedRun& r, const StartHook& on_start, const FrameSink& sink) {
    const SeriesSimulator sim = make_simulator(r);
    nlohmann::json meta = run_metadata(r, sim);
    if (on_start) on_start(meta, sim);
    const auto n_coils = static_cast<std::size_t>(sim.n_coils());
    const std::size_t total = sim.n_frames() * n_coils;
    const bool recon = r.config.recon != ReconKind::none;
    const std::size_t batch = std::max<std::size_t>(8, 4 * thread_count());
    std::vector<KSpaceFrame> ks;
    std::vector<std::optional<ImageFrame>> imgs;
    for (std::size_t start = 0; start < total; start += batch) {
        const std::size_t end = std::min(total, start + batch);
        ks.assign(end - start, {});
        imgs.assign(end - start, std::nullopt);
        parallel_for(end - start, [&](std::size_t i) {
            const std::size_t idx = start + i;
            ks[i] = sim.frame(idx / n_coils, static_cast<int>(idx % n_coils));
            if (recon) imgs[i] = reconstruct(ks[i], r.config.recon);
        });
        for (std::size_t i = 0; i < end - start; ++i) {
            const std::size_t idx = start + i;
            sink(idx / n_coils, static_cast<int>(idx % n_coils), std::move(ks[i]), std::move(imgs[i]));
        }
    }
    return meta;
}

/// Runs and streams every frame to an archive at `path`. progress(frames_done) after each frame.
inline nlohmann::json run_to_archive(const PreparedRun& r, const std::filesystem::path& path,
                                     const StartHook& on_start = {},
                                     const std::function<void(std::size_t)>& progress = {}) {
    std::optional<ArchiveWriter> writer;
    const int n_coils = r.config.scan.n_coils;
    auto meta = execute_run(
        r,
        [&](const nlohmann::json& m, const SeriesSimulator& sim) {
            writer.emplace(path, m, r.trajectory, r.design.size(), n_coils,
                           r.config.recon != ReconKind::none);
            if (on_start) on_start(m, sim);
        },
        [&](std::size_t t, int coil, KSpaceFrame&& k, std::optional<ImageFrame>&& img) {
            writer->write(k, img ? &*img : nullptr);
            if (progress && coil == n_coils - 1) progress(t + 1);
        });
    writer->finish();
    return meta;
}

/// Runs into memory.
inline SeriesArchive run_to_memory(const PreparedRun& r) {
    SeriesArchive a;
    a.trajectory = r.trajectory;
    a.n_frames = r.design.size();
    a.n_coils = r.config.scan.n_coils;
    a.metadata = execute_run(r, {}, [&](std::size_t, int, KSpaceFrame&& k, std::optional<ImageFrame>&& img) {
        a.kspace.push_back(std::move(k));
        if (img) a.images.push_back(std::move(*img));
    });
    return a;
}

// ---------------------------------------------------------------------------
// Analysis of stored series

inline RunConfig config_from_metadata(const nlohmann::json& meta) {
    detail::require(meta.contains("config"), "archive metadata has no configuration", "metadata");
    return config_from_json(meta.at("config"));
}

inline DesignVector design_from_metadata(const nlohmann::json& meta) {
    DesignVector d;
    try {
        d.x = meta.at("design").get<std::vector<std::uint8_t>>();
        d.n_initial_rest = meta.at("n_initial_rest").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("archive metadata lacks the design vector: ") + e.what());
    }
    return d;
}

/// Images of every frame, reconstructed on the fly when the archive holds only k-space.
inline ImageSeries images_of(const SeriesArchive& a) {
    ImageSeries s;
    s.n_frames = a.n_frames;
    s.n_coils = a.n_coils;
    if (!a.images.empty()) {
        s.frames = a.images;
        return s;
    }
    const ReconKind kind = natural_recon(a.trajectory->kind());
    s.frames.resize(a.kspace.size());
    parallel_for(a.kspace.size(), [&](std::size_t i) { s.frames[i] = reconstruct(a.kspace[i], kind); });
    return s;
}

inline ImageSeries images_of(const ArchiveReader& r) {
    ImageSeries s;
    s.n_frames = r.frames_available();
    s.n_coils = r.n_coils();
    s.frames.resize(s.n_frames * static_cast<std::size_t>(s.n_coils));
    const ReconKind kind = natural_recon(r.trajectory()->kind());
    parallel_for(s.frames.size(), [&](std::size_t i) {
        auto f = r.read(i / static_cast<std::size_t>(s.n_coils), static_cast<int>(i % static_cast<std::size_t>(s.n_coils)));
        s.frames[i] = f.image ? std::move(*f.image) : reconstruct(f.kspace, kind);
    });
    return s;
}

/// Noise level and noiseless references for histogram overlays, replayed from the metadata.
inline NoiseTheory theory_of(const SeriesSimulator& sim) {
    NoiseTheory t;
    t.sigma = sim.calibration().sigma;
    t.reference = sim.reference_images();
    return t;
}

inline NoiseTheory replay_theory(const nlohmann::json& meta) {
    return theory_of(make_simulator(prepare_run(config_from_metadata(meta))));
}

inline StatMap compute_stat(const ImageSeries& images, const DesignVector& d, StatKind kind,
                            double threshold) {
    const auto mags = images.magnitudes();
    StatMap m = kind == StatKind::tstat ? ttest_map(mags, d, d.n_initial_rest)
                                        : snr_map(mags, d, d.n_initial_rest);
    m.threshold = threshold;
    return m;
}

}  // namespace ksim
