#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ksim/archive.hpp"
#include "ksim/config.hpp"
#include "ksim/pipeline.hpp"
#include "ksim/stats.hpp"

namespace ksim {

/**
 * HTTP control surface. Runs are queued and executed one at a time by a
 * single worker; each streams its frames to an archive under the storage
 * directory, so frames become readable as soon as they are written.
 */
class Service {
  public:
    explicit Service(std::filesystem::path storage) : storage_(std::move(storage)) {
        std::filesystem::create_directories(storage_);
        install_routes();
        worker_ = std::thread([this] { work(); });
    }

    ~Service() {
        stop();
        {
            std::lock_guard lock(mu_);
            shutdown_ = true;
        }
        cv_.notify_all();
        if (worker_.joinable()) worker_.join();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to host:port (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host = "127.0.0.1", int port = 0) {
        if (port == 0) return server_.bind_to_any_port(host);
        if (!server_.bind_to_port(host, port)) throw std::runtime_error("cannot bind port " + std::to_string(port));
        return port;
    }

    /// Serves requests until stop(); call after bind().
    void listen() { server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    bool running() const { return server_.is_running(); }

    /// Blocks until the run leaves the queue and finishes (tests and CLI use).
    void wait(const std::string& id) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] {
            auto it = runs_.find(id);
            return it == runs_.end() || it->second->status == "complete" || it->second->status == "failed";
        });
    }

  private:
    using json = nlohmann::json;

    struct Run {
        std::string id;
        PreparedRun prepared;
        std::string status = "queued";
        std::size_t frames_done = 0;
        std::size_t n_frames = 0;
        json metadata;
        std::string error;
        std::filesystem::path archive;
        std::optional<NoiseTheory> theory;
        std::shared_ptr<const ImageSeries> images;  // cached after completion
        std::map<StatKind, std::shared_ptr<const StatMap>> stats;
    };

    // -- helpers -----------------------------------------------------------

    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& msg,
                           const std::string& field = {}, std::optional<std::uint64_t> seed = {}) {
        json body = {{"error", msg}};
        if (!field.empty()) body["field"] = field;
        if (seed) body["seed"] = *seed;
        send_json(res, status, body);
    }

    std::shared_ptr<Run> find(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = runs_.find(id);
        return it == runs_.end() ? nullptr : it->second;
    }

    json status_json(const Run& r) const {
        json j = {{"id", r.id},
                  {"status", r.status},
                  {"frames_done", r.frames_done},
                  {"n_frames", r.n_frames},
                  {"n_coils", r.prepared.config.scan.n_coils},
                  {"grid_n", r.prepared.config.scan.grid_n},
                  {"seed", r.prepared.config.seed},
                  {"config", config_to_json(r.prepared.config)}};
        if (r.status == "queued") {
            std::size_t pos = 0;
            for (const auto& q : queue_) {
                ++pos;
                if (q == r.id) break;
            }
            j["position"] = pos;
        }
        if (!r.metadata.is_null()) {
            j["summary"] = r.metadata.value("summary", "");
            j["calibration"] = r.metadata.value("calibration", json::object());
            j["warnings"] = r.metadata.value("warnings", json::array());
            j["design"] = r.metadata.value("design", json::array());
            j["n_initial_rest"] = r.metadata.value("n_initial_rest", 0);
        }
        if (!r.error.empty()) j["error"] = r.error;
        return j;
    }

    static json grid_json(const Grid2D<double>& g) {
        json values = json::array();
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (double v : g.storage()) {
            values.push_back(std::isfinite(v) ? json(v) : json(nullptr));
            if (std::isfinite(v)) {
                if (!any) lo = hi = v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                any = true;
            }
        }
        return {{"nx", g.nx()}, {"ny", g.ny()}, {"order", "row-major, x fastest"},
                {"min", lo},    {"max", hi},    {"values", values}};
    }

    static void send_grid(const httplib::Request& req, httplib::Response& res, const Grid2D<double>& g,
                          json extra, std::optional<std::uint64_t> seed) {
        const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
        if (seed) res.set_header("X-Run-Seed", std::to_string(*seed));
        if (format == "raw") {
            std::ostringstream os;
            binary::put_doubles(os, g.values());
            res.set_header("X-Grid-Nx", std::to_string(g.nx()));
            res.set_header("X-Grid-Ny", std::to_string(g.ny()));
            res.status = 200;
            res.set_content(os.str(), "application/octet-stream");
            return;
        }
        if (format != "json") return send_error(res, 400, "format must be json or raw", "format", seed);
        json body = grid_json(g);
        for (auto& [k, v] : extra.items()) body[k] = v;
        if (seed) body["seed"] = *seed;
        send_json(res, 200, body);
    }

    static std::size_t parse_index(const std::string& s, const char* field) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(s, &pos);
        } catch (const std::exception&) {
            throw validation_error(std::string(field) + " must be a non-negative integer", field);
        }
        if (pos != s.size()) throw validation_error(std::string(field) + " must be a non-negative integer", field);
        return static_cast<std::size_t>(v);
    }

    std::shared_ptr<const ImageSeries> images_for(Run& r) {
        {
            std::lock_guard lock(mu_);
            if (r.images) return r.images;
        }
        ArchiveReader reader(r.archive);
        auto imgs = std::make_shared<const ImageSeries>(images_of(reader));
        std::lock_guard lock(mu_);
        // Keep image caches for the most recent completed runs only.
        cache_order_.push_back(r.id);
        while (cache_order_.size() > 2) {
            auto old = runs_.find(cache_order_.front());
            if (old != runs_.end()) old->second->images.reset();
            cache_order_.pop_front();
        }
        r.images = imgs;
        return imgs;
    }

    // -- routes ------------------------------------------------------------

    void install_routes() {
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const validation_error& e) {
                send_error(res, 400, e.what(), e.field());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        });

        server_.Get("/config/default", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, config_to_json(default_config()));
        });

        server_.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
            PreparedRun prepared;
            try {
                prepared = prepare_run(parse_config(req.body));
            } catch (const config_syntax_error& e) {
                json body = {{"error", e.what()}, {"field", e.field()}, {"line", e.line()}, {"column", e.column()}};
                return send_json(res, 400, body);
            } catch (const validation_error& e) {
                return send_error(res, 400, e.what(), e.field());
            } catch (const format_error& e) {
                return send_error(res, 400, e.what(), "phantom");
            }
            auto run = std::make_shared<Run>();
            run->prepared = std::move(prepared);
            run->n_frames = run->prepared.design.size();
            json body;
            {
                std::lock_guard lock(mu_);
                run->id = "r" + std::to_string(++counter_);
                run->archive = storage_ / (run->id + ".shk");
                runs_[run->id] = run;
                queue_.push_back(run->id);
                body = status_json(*run);
            }
            cv_.notify_all();
            res.set_header("Location", "/runs/" + run->id);
            send_json(res, 202, body);
        });

        server_.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            std::lock_guard lock(mu_);
            for (const auto& [id, r] : runs_)
                list.push_back({{"id", id}, {"status", r->status}, {"seed", r->prepared.config.seed}});
            send_json(res, 200, {{"runs", list}});
        });

        server_.Get(R"(/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto r = find(req.matches[1]);
            if (!r) return send_error(res, 404, "unknown run " + std::string(req.matches[1]), "id");
            std::lock_guard lock(mu_);
            send_json(res, 200, status_json(*r));
        });

        server_.Get(R"(/runs/([^/]+)/frames/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto r = find(req.matches[1]);
            if (!r) return send_error(res, 404, "unknown run " + std::string(req.matches[1]), "id");
            const std::uint64_t seed = r->prepared.config.seed;
            const std::size_t t = parse_index(req.matches[2], "frame");
            const Part part = parse_part(req.has_param("part") ? req.get_param_value("part") : "magnitude");
            const std::string space = req.has_param("space") ? req.get_param_value("space") : "image";
            if (space != "image" && space != "kspace")
                return send_error(res, 400, "space must be image or kspace", "space", seed);
            const int coil = static_cast<int>(parse_index(req.has_param("coil") ? req.get_param_value("coil") : "0", "coil"));
            std::size_t done;
            std::string status;
            {
                std::lock_guard lock(mu_);
                done = r->frames_done;
                status = r->status;
            }
            if (t < 1 || t > r->n_frames)
                return send_error(res, 404, "frame " + std::to_string(t) + " outside 1.." + std::to_string(r->n_frames), "frame", seed);
            if (coil >= r->prepared.config.scan.n_coils)
                return send_error(res, 400, "coil index out of range", "coil", seed);
            if (t > done) {
                if (status == "failed") return send_error(res, 404, "run failed: frame never produced", "frame", seed);
                res.set_header("X-Frames-Done", std::to_string(done));
                return send_error(res, 409, "frame " + std::to_string(t) + " not ready (" + std::to_string(done) + " done)", "frame", seed);
            }
            ArchiveReader reader(r->archive, true);
            auto f = reader.read(t - 1, coil);
            Grid2D<cplx> g;
            if (space == "kspace") {
                g = kspace_grid(f.kspace);
            } else {
                g = f.image ? f.image->data : reconstruct(f.kspace, natural_recon(f.kspace.trajectory->kind())).data;
            }
            send_grid(req, res, part_of(g, part),
                      {{"frame", t}, {"part", std::string(to_string(part))}, {"space", space}, {"coil", coil}}, seed);
        });

        server_.Get(R"(/runs/([^/]+)/stats)", [this](const httplib::Request& req, httplib::Response& res) {
            auto r = find(req.matches[1]);
            if (!r) return send_error(res, 404, "unknown run " + std::string(req.matches[1]), "id");
            const std::uint64_t seed = r->prepared.config.seed;
            const StatKind kind = parse_stat_kind(req.has_param("kind") ? req.get_param_value("kind") : "tstat");
            double threshold = 5.0;
            if (req.has_param("threshold")) {
                try {
                    threshold = std::stod(req.get_param_value("threshold"));
                } catch (const std::exception&) {
                    return send_error(res, 400, "threshold must be a number", "threshold", seed);
                }
            }
            if (!ready(*r)) return send_error(res, 409, "run not complete", "status", seed);
            std::shared_ptr<const StatMap> m;
            {
                std::lock_guard lock(mu_);
                auto it = r->stats.find(kind);
                if (it != r->stats.end()) m = it->second;
            }
            auto imgs = images_for(*r);
            if (!m) {
                m = std::make_shared<const StatMap>(compute_stat(*imgs, r->prepared.design, kind, threshold));
                std::lock_guard lock(mu_);
                r->stats[kind] = m;
            }
            Grid2D<double> anatomy(imgs->frames[0].data.nx(), imgs->frames[0].data.ny(), 0.0);
            const auto mags = imgs->magnitudes();
            for (const auto& g : mags)
                for (std::size_t i = 0; i < anatomy.size(); ++i) anatomy[i] += g[i] / static_cast<double>(mags.size());
            json extra = {{"kind", std::string(to_string(kind))},
                          {"df", m->df},
                          {"threshold", threshold},
                          {"skip_initial", r->prepared.design.n_initial_rest},
                          {"anatomy", grid_json(anatomy)}};
            if (kind == StatKind::tstat) extra["critical_0.05"] = t_critical(m->df, 0.05);
            send_grid(req, res, m->values, extra, seed);
        });

        server_.Get(R"(/runs/([^/]+)/voxel/([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto r = find(req.matches[1]);
            if (!r) return send_error(res, 404, "unknown run " + std::string(req.matches[1]), "id");
            const std::uint64_t seed = r->prepared.config.seed;
            const std::size_t x = parse_index(req.matches[2], "x");
            const std::size_t y = parse_index(req.matches[3], "y");
            const Part part = parse_part(req.has_param("part") ? req.get_param_value("part") : "magnitude");
            const std::size_t bins = req.has_param("bins") ? parse_index(req.get_param_value("bins"), "bins") : 30;
            const int coil = static_cast<int>(parse_index(req.has_param("coil") ? req.get_param_value("coil") : "0", "coil"));
            const std::size_t n = r->prepared.config.scan.grid_n;
            if (x >= n || y >= n) return send_error(res, 400, "voxel outside the image", "voxel", seed);
            if (!ready(*r)) return send_error(res, 409, "run not complete", "status", seed);
            auto imgs = images_for(*r);
            NoiseTheory theory;
            {
                std::lock_guard lock(mu_);
                theory = *r->theory;
            }
            if (theory.sigma <= 0.0) return send_error(res, 400, "run has no noise; histogram theory undefined", "snr", seed);
            const auto series = voxel_series(*imgs, x, y, part, coil);
            const auto h = voxel_histogram(*imgs, r->prepared.design, r->prepared.design.n_initial_rest, x, y, part,
                                           bins, theory, coil);
            json body = {{"x", x},
                         {"y", y},
                         {"part", std::string(to_string(part))},
                         {"coil", coil},
                         {"series", series},
                         {"design", r->prepared.design.x},
                         {"histogram",
                          {{"edges", h.edges},
                           {"counts", h.counts},
                           {"density", h.density},
                           {"theory", h.theory},
                           {"model", h.model},
                           {"n", h.n},
                           {"rho", h.rho},
                           {"theta", h.theta},
                           {"sigma", h.sigma}}},
                         {"seed", seed}};
            res.set_header("X-Run-Seed", std::to_string(seed));
            send_json(res, 200, body);
        });

        server_.Get("/phantom/slice", [this](const httplib::Request& req, httplib::Response& res) {
            const std::size_t size = req.has_param("size") ? parse_index(req.get_param_value("size"), "size") : 96;
            const Plane plane = parse_plane(req.has_param("plane") ? req.get_param_value("plane") : "axial");
            const std::size_t index =
                req.has_param("index") ? parse_index(req.get_param_value("index"), "index") : size / 2;
            const std::string map = req.has_param("map") ? req.get_param_value("map") : "m0";
            detail::require(index >= 1 && index <= size, "slice index must be in 1.." + std::to_string(size), "index");
            std::shared_ptr<const PhantomVolume> p;
            {
                std::lock_guard lock(phantom_mu_);
                auto& slot = phantoms_[size];
                if (!slot) {
                    auto v = generate_phantom(size);
                    v.act_map = generate_activation_map(v, default_activation_region(size));
                    slot = std::make_shared<const PhantomVolume>(std::move(v));
                }
                p = slot;
            }
            const SliceMaps s = extract_slice(*p, plane, index);
            Grid2D<double> g;
            if (map == "m0") g = s.m0;
            else if (map == "t1") g = s.t1;
            else if (map == "t2star") g = s.t2star;
            else if (map == "delta_b") g = s.delta_b;
            else if (map == "act_map") g = map_grid(s.act_map, [](std::uint8_t v) { return static_cast<double>(v); });
            else return send_error(res, 400, "map must be m0, t1, t2star, delta_b or act_map", "map");
            send_grid(req, res, g,
                      {{"plane", std::string(to_string(plane))}, {"index", index}, {"map", map}, {"size", size}},
                      std::nullopt);
        });
    }

    bool ready(const Run& r) {
        std::lock_guard lock(mu_);
        return r.status == "complete";
    }

    // -- worker ------------------------------------------------------------

    void work() {
        for (;;) {
            std::shared_ptr<Run> run;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return shutdown_ || !queue_.empty(); });
                if (shutdown_) return;
                run = runs_.at(queue_.front());
                queue_.pop_front();
                run->status = "running";
            }
            try {
                run_to_archive(
                    run->prepared, run->archive,
                    [&](const json& meta, const SeriesSimulator& sim) {
                        std::lock_guard lock(mu_);
                        run->metadata = meta;
                        run->theory = theory_of(sim);
                    },
                    [&](std::size_t done) {
                        {
                            std::lock_guard lock(mu_);
                            run->frames_done = done;
                            if (shutdown_) throw std::runtime_error("service shutting down");
                        }
                    });
                std::lock_guard lock(mu_);
                run->status = "complete";
            } catch (const std::exception& e) {
                std::lock_guard lock(mu_);
                run->status = "failed";
                run->error = e.what();
            }
            cv_.notify_all();
        }
    }

    std::filesystem::path storage_;
    httplib::Server server_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, std::shared_ptr<Run>> runs_;
    std::deque<std::string> queue_;
    std::deque<std::string> cache_order_;
    std::size_t counter_ = 0;
    bool shutdown_ = false;
    std::thread worker_;
    std::mutex phantom_mu_;
    std::map<std::size_t, std::shared_ptr<const PhantomVolume>> phantoms_;
};

}  // namespace ksim
