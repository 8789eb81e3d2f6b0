// ksim command-line front end. Exit codes: 0 ok, 1 invalid input, 2 runtime failure.

#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ksim/archive.hpp"
#include "ksim/config.hpp"
#include "ksim/export.hpp"
#include "ksim/parallel.hpp"
#include "ksim/phantom.hpp"
#include "ksim/pipeline.hpp"
#include "ksim/server.hpp"
#include "ksim/stats.hpp"
#include "ksim/trajectory.hpp"

namespace fs = std::filesystem;
using namespace ksim;

namespace {

ksim::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool quiet) {
    RunConfig cfg = load_config(config_path);
    const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
    fs::create_directories(dir);
    const PreparedRun run = prepare_run(std::move(cfg));
    const fs::path archive = dir / "series.shk";
    const auto meta = run_to_archive(run, archive, {}, [&](std::size_t done) {
        if (!quiet && (done % 32 == 0 || done == run.design.size()))
            std::cerr << "\rframes " << done << "/" << run.design.size() << std::flush;
    });
    if (!quiet) std::cerr << "\n";
    std::ofstream(dir / "config.json") << config_to_json(run.config).dump(2) << "\n";
    std::ofstream(dir / "summary.txt") << meta.at("summary").get<std::string>() << "\n";
    for (const auto& w : meta.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << "\n";
    std::cout << meta.at("summary").get<std::string>() << "\n";
    std::cout << "archive: " << archive.string() << "\n";
    return 0;
}

int cmd_recon(const std::string& path, const std::string& out) {
    SeriesArchive a = load_series(path);
    if (!a.images.empty()) {
        std::cout << "archive already holds " << a.images.size() << " reconstructed images\n";
        return 0;
    }
    a.images = images_of(a).frames;
    a.metadata["reconstruction"] = std::string(to_string(natural_recon(a.trajectory->kind())));
    const fs::path dest = out.empty() ? fs::path(path).replace_extension(".recon.shk") : fs::path(out);
    save_series(a, dest);
    std::cout << "reconstructed " << a.images.size() << " images into " << dest.string() << "\n";
    return 0;
}

int cmd_stats(const std::string& path, const std::string& kind_name, double threshold, const std::string& out) {
    const StatKind kind = parse_stat_kind(kind_name);
    ArchiveReader reader(path);
    const DesignVector d = design_from_metadata(reader.metadata());
    const ImageSeries images = images_of(reader);
    const StatMap m = compute_stat(images, d, kind, threshold);
    std::size_t above = 0, finite = 0;
    for (double v : m.values.storage()) {
        if (!std::isfinite(v)) continue;
        ++finite;
        if (std::abs(v) > threshold) ++above;
    }
    const fs::path prefix =
        out.empty() ? fs::path(fs::path(path).replace_extension("").string() + "_" + std::string(to_string(kind)))
                    : fs::path(out);
    {
        std::ofstream csv(prefix.string() + ".csv");
        for (std::size_t y = 0; y < m.values.ny(); ++y)
            for (std::size_t x = 0; x < m.values.nx(); ++x)
                csv << m.values(x, y) << (x + 1 == m.values.nx() ? "\n" : ",");
    }
    Grid2D<double> shown = m.values;
    for (double& v : shown.storage())
        if (std::isfinite(v) && std::abs(v) <= threshold) v = 0.0;
    export_image(shown, Part::real, prefix.string() + ".ppm", Colormap::hot);
    std::cout << to_string(kind) << ": " << above << " of " << finite << " voxels with |value| > " << threshold;
    if (kind == StatKind::tstat) std::cout << " (df " << m.df << ", t_0.025 = " << t_critical(m.df) << ")";
    std::cout << "\nmap: " << prefix.string() << ".csv, " << prefix.string() << ".ppm\n";
    return 0;
}

int cmd_export(const std::string& path, std::size_t frame, const std::string& part_name, const std::string& space,
               int coil, const std::string& cmap, const std::string& out) {
    const Part part = parse_part(part_name);
    detail::require(space == "image" || space == "kspace", "space must be image or kspace", "space");
    ArchiveReader reader(path);
    detail::require(frame >= 1 && frame <= reader.n_frames(),
                    "frame must be in 1.." + std::to_string(reader.n_frames()), "frame");
    auto f = reader.read(frame - 1, coil);
    Grid2D<cplx> g;
    if (space == "kspace")
        g = kspace_grid(f.kspace);
    else
        g = f.image ? f.image->data : reconstruct(f.kspace, natural_recon(reader.trajectory()->kind())).data;
    const fs::path dest =
        out.empty() ? fs::path(fs::path(path).replace_extension("").string() + "_f" + std::to_string(frame) + "_" +
                               std::string(to_string(part)) + (cmap == "gray" ? ".pgm" : ".ppm"))
                    : fs::path(out);
    const Window w = export_image(part_of(g, part), part, dest, parse_colormap(cmap));
    std::cout << dest.string() << " window [" << w.lo << ", " << w.hi << "]\n";
    return 0;
}

int cmd_serve(int port, const std::string& host, const std::string& storage) {
    Service service(storage);
    const int bound = service.bind(host, port);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << bound << "\n" << std::flush;
    service.listen();
    g_service = nullptr;
    return 0;
}

int cmd_phantom(std::size_t size, const std::string& out, const std::string& act_out) {
    PhantomVolume p = generate_phantom(size);
    p.act_map = generate_activation_map(p, default_activation_region(size));
    save_phantom(p, out);
    if (!act_out.empty()) save_activation_map(p.act_map, act_out);
    std::size_t brain = 0, active = 0;
    for (std::size_t i = 0; i < p.m0.size(); ++i) {
        brain += p.m0[i] > 0.0;
        active += p.act_map[i];
    }
    std::cout << "phantom " << size << "^3: " << brain << " tissue voxels, " << active << " active -> " << out
              << "\n";
    return 0;
}

int cmd_trajectory(const std::string& config_path, const std::string& out) {
    const RunConfig cfg = load_config(config_path);
    const Trajectory t = make_trajectory(cfg.trajectory, cfg.scan);
    if (out.empty() || out == "-") {
        write_trajectory_csv(t, std::cout);
    } else {
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot open " + out);
        write_trajectory_csv(t, os);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ksim: k-space fMRI time-series simulator"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (default: KSIM_THREADS or all cores)");

    std::string config_path, out, archive, kind = "tstat", part = "magnitude", space = "image", cmap = "gray";
    std::string host = "127.0.0.1", storage = "ksim_runs", act_out;
    bool quiet = false;
    double threshold = 5.0;
    std::size_t frame = 1, size = 96;
    int coil = 0, port = 8080;

    auto* sim = app.add_subcommand("simulate", "run a configuration and write a series archive");
    sim->add_option("config", config_path, "configuration file (JSON)")->required();
    sim->add_option("-o,--out", out, "output directory (default: output_dir from the config)");
    sim->add_flag("-q,--quiet", quiet, "no progress output");

    auto* rec = app.add_subcommand("recon", "reconstruct every frame of an archive");
    rec->add_option("archive", archive)->required();
    rec->add_option("-o,--out", out, "destination archive (default: <archive>.recon.shk)");

    auto* st = app.add_subcommand("stats", "t or SNR map of an archive");
    st->add_option("archive", archive)->required();
    st->add_option("--kind", kind, "tstat or snr");
    st->add_option("--threshold", threshold, "overlay threshold on |value|");
    st->add_option("-o,--out", out, "output prefix for .csv and .ppm");

    auto* ex = app.add_subcommand("export", "render one frame as PGM/PPM");
    ex->add_option("archive", archive)->required();
    ex->add_option("--frame", frame, "frame number (1-based)");
    ex->add_option("--part", part, "real, imag, magnitude or phase");
    ex->add_option("--space", space, "image or kspace");
    ex->add_option("--coil", coil, "coil index (0-based)");
    ex->add_option("--colormap", cmap, "gray, hot or jet");
    ex->add_option("-o,--out", out, "output file");

    auto* sv = app.add_subcommand("serve", "start the HTTP service");
    sv->add_option("--port", port, "port (0 picks a free one)");
    sv->add_option("--host", host, "bind address");
    sv->add_option("--storage", storage, "directory for run archives");

    auto* ph = app.add_subcommand("phantom", "phantom utilities");
    ph->require_subcommand(1);
    auto* gen = ph->add_subcommand("gen", "generate and save a phantom");
    gen->add_option("--size", size, "64, 96 or 128");
    gen->add_option("-o,--out", out, "output file")->required();
    gen->add_option("--activation-out", act_out, "also save the activation map alone");

    auto* tr = app.add_subcommand("trajectory", "write the configured k-space trajectory as CSV");
    tr->add_option("config", config_path)->required();
    tr->add_option("-o,--out", out, "CSV file (default: stdout)");

    auto* cf = app.add_subcommand("config", "print the default configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    if (threads > 0) set_thread_count(threads);

    try {
        if (*sim) return cmd_simulate(config_path, out, quiet);
        if (*rec) return cmd_recon(archive, out);
        if (*st) return cmd_stats(archive, kind, threshold, out);
        if (*ex) return cmd_export(archive, frame, part, space, coil, cmap, out);
        if (*sv) return cmd_serve(port, host, storage);
        if (*gen) return cmd_phantom(size, out, act_out);
        if (*tr) return cmd_trajectory(config_path, out);
        if (*cf) {
            std::cout << config_to_json(default_config()).dump(2) << "\n";
            return 0;
        }
    } catch (const config_syntax_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const validation_error& e) {
        std::cerr << "error";
        if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
        std::cerr << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
