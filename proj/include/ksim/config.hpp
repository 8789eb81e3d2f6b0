#pragma once

#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ksim/error.hpp"
#include "ksim/experiment.hpp"
#include "ksim/phantom.hpp"
#include "ksim/recon.hpp"
#include "ksim/trajectory.hpp"

namespace ksim {

using json = nlohmann::json;

/// Malformed configuration text; carries the 1-based position of the problem.
class config_syntax_error : public validation_error {
  public:
    config_syntax_error(const std::string& what, std::size_t line, std::size_t column)
        : validation_error(what, "syntax"), line_(line), column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

  private:
    std::size_t line_, column_;
};

struct PhantomSource {
    std::optional<std::size_t> size;              ///< generate at this size
    std::optional<std::string> file;              ///< or load a saved volume
    std::optional<std::string> activation_file;   ///< replaces the generated activation map
    std::optional<ActivationRegion> activation_region;
    TissueParams tissues;
};

struct RunConfig {
    PhantomSource phantom;
    Plane plane = Plane::axial;
    std::size_t slice_index = 48;  ///< 1-based
    ScanParams scan;
    TaskDesign design;
    ActivationSpec activation;
    TrajectoryKind trajectory = TrajectoryKind::cartesian;
    ReconKind recon = ReconKind::cartesian_idft;
    BaselineMode baseline = BaselineMode::active;
    bool add_noise = true;
    std::uint64_t seed = 1;
    std::string output_dir = "ksim_out";
    std::string timestamp;  ///< ISO 8601; stamped at submission when empty

    /// Phantom edge length; requires a resolved size for file sources.
    std::size_t phantom_size() const { return phantom.size.value_or(scan.grid_n); }
};

/// Current local time as YYYY-MM-DDTHH:MM:SS.
inline std::string now_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    return buf;
}

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) {
            const std::string path = where.empty() ? key : where + "." + key;
            throw validation_error("unknown configuration key '" + path + "'", path);
        }
}

inline const json& object_at(const json& parent, const char* key, const std::string& where) {
    const json& v = parent.at(key);
    const std::string path = where.empty() ? key : where + "." + key;
    require(v.is_object(), "'" + path + "' must be an object", path);
    return v;
}

/// Reads parent[key] into out when present, converting type errors to validation errors.
template <typename T>
bool read_field(const json& parent, const char* key, T& out, const std::string& field) {
    auto it = parent.find(key);
    if (it == parent.end()) return false;
    try {
        if constexpr (std::is_same_v<T, double>) {
            require(it->is_number(), "'" + field + "' must be a number", field);
        } else if constexpr (std::is_same_v<T, bool>) {
            require(it->is_boolean(), "'" + field + "' must be true or false", field);
        } else if constexpr (std::is_integral_v<T>) {
            require(it->is_number_integer() ||
                        (it->is_number_float() && std::floor(it->get<double>()) == it->get<double>()),
                    "'" + field + "' must be an integer", field);
            if constexpr (std::is_unsigned_v<T>)
                require(it->get<double>() >= 0.0, "'" + field + "' must be >= 0", field);
            if (it->is_number_float()) {
                out = static_cast<T>(it->get<double>());
                return true;
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            require(it->is_string(), "'" + field + "' must be a string", field);
        }
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw validation_error("'" + field + "': " + e.what(), field);
    }
    return true;
}

inline bool read_ms(const json& parent, const char* key, double& seconds, const std::string& field) {
    double ms = 0.0;
    if (!read_field(parent, key, ms, field)) return false;
    seconds = ms * 1e-3;
    return true;
}

inline void read_tissue(const json& t, TissueValues& v, const std::string& where) {
    reject_unknown(t, {"m0", "t1_ms", "t2star_ms"}, where);
    read_field(t, "m0", v.m0, where + ".m0");
    read_ms(t, "t1_ms", v.t1, where + ".t1_ms");
    read_ms(t, "t2star_ms", v.t2star, where + ".t2star_ms");
}

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace detail

/**
 * Cross-field validation. Checks the phantom source, slice range, scan
 * parameters, design and activation, and that the chosen trajectory fits
 * before TE (the readout may not start before excitation).
 */
inline void validate_config(const RunConfig& c) {
    using detail::require;
    const bool generated = c.phantom.size.has_value();
    require(generated != c.phantom.file.has_value(),
            generated ? "phantom source must be either a size or a file, not both"
                      : "phantom source required (phantom.size or phantom.file)",
            "phantom");
    if (generated)
        require(*c.phantom.size == 64 || *c.phantom.size == 96 || *c.phantom.size == 128,
                "phantom size must be 64, 96 or 128", "phantom.size");
    for (const auto* tv : {&c.phantom.tissues.gm, &c.phantom.tissues.wm, &c.phantom.tissues.csf}) {
        require(tv->t1 > 0.0 && tv->t2star > 0.0, "tissue relaxation times must be > 0",
                "phantom.tissues");
        require(tv->m0 >= 0.0, "tissue m0 must be >= 0", "phantom.tissues");
    }
    if (c.phantom.activation_region)
        require(c.phantom.activation_region->radius >= 0.0, "activation radius must be >= 0",
                "phantom.activation_region.radius");
    const std::size_t n = c.scan.grid_n;
    require(c.slice_index >= 1 && c.slice_index <= n,
            "slice index must be in 1.." + std::to_string(n), "slice.index");
    c.scan.validate();
    require(c.design.total() >= 1, "task design has zero frames", "design");
    c.activation.validate();
    require(!(c.recon == ReconKind::cartesian_idft && c.trajectory != TrajectoryKind::cartesian),
            "cartesian_idft reconstruction needs the cartesian trajectory; use gridding",
            "reconstruction");
    (void)make_trajectory(c.trajectory, c.scan);
}

inline RunConfig config_from_json(const json& root) {
    using detail::read_field;
    using detail::read_ms;
    detail::require(root.is_object(), "configuration must be a JSON object", "config");
    detail::reject_unknown(root,
                           {"phantom", "slice", "scan", "trajectory", "reconstruction", "design",
                            "activation", "baseline", "add_noise", "seed", "output_dir", "timestamp"},
                           "");
    RunConfig c;
    if (root.contains("phantom")) {
        const json& p = detail::object_at(root, "phantom", "");
        detail::reject_unknown(p, {"size", "file", "activation_file", "activation_region", "tissues"},
                               "phantom");
        std::size_t size = 0;
        if (read_field(p, "size", size, "phantom.size")) c.phantom.size = size;
        std::string s;
        if (read_field(p, "file", s, "phantom.file")) c.phantom.file = s;
        if (read_field(p, "activation_file", s, "phantom.activation_file")) c.phantom.activation_file = s;
        if (p.contains("activation_region")) {
            const json& a = detail::object_at(p, "activation_region", "phantom");
            detail::reject_unknown(a, {"center", "radius"}, "phantom.activation_region");
            ActivationRegion r{{0, 0, 0}, 0};
            detail::require(a.contains("center") && a.contains("radius"),
                            "activation_region needs center and radius", "phantom.activation_region");
            const json& ce = a.at("center");
            detail::require(ce.is_array() && ce.size() == 3 &&
                                std::all_of(ce.begin(), ce.end(), [](const json& v) { return v.is_number(); }),
                            "activation_region.center must be three numbers",
                            "phantom.activation_region.center");
            for (std::size_t i = 0; i < 3; ++i) r.center[i] = ce[i].get<double>();
            read_field(a, "radius", r.radius, "phantom.activation_region.radius");
            c.phantom.activation_region = r;
        }
        if (p.contains("tissues")) {
            const json& t = detail::object_at(p, "tissues", "phantom");
            detail::reject_unknown(t, {"gm", "wm", "csf", "delta_b_gradient_t"}, "phantom.tissues");
            if (t.contains("gm")) detail::read_tissue(detail::object_at(t, "gm", "phantom.tissues"), c.phantom.tissues.gm, "phantom.tissues.gm");
            if (t.contains("wm")) detail::read_tissue(detail::object_at(t, "wm", "phantom.tissues"), c.phantom.tissues.wm, "phantom.tissues.wm");
            if (t.contains("csf")) detail::read_tissue(detail::object_at(t, "csf", "phantom.tissues"), c.phantom.tissues.csf, "phantom.tissues.csf");
            read_field(t, "delta_b_gradient_t", c.phantom.tissues.delta_b_gradient,
                       "phantom.tissues.delta_b_gradient_t");
        }
    }
    if (root.contains("slice")) {
        const json& s = detail::object_at(root, "slice", "");
        detail::reject_unknown(s, {"plane", "index"}, "slice");
        std::string plane;
        if (read_field(s, "plane", plane, "slice.plane")) c.plane = parse_plane(plane);
        read_field(s, "index", c.slice_index, "slice.index");
    }
    bool ti_given = false;
    if (root.contains("scan")) {
        const json& s = detail::object_at(root, "scan", "");
        detail::reject_unknown(s,
                               {"sequence", "b0_t", "te_ms", "tr_ms", "ti_ms", "flip_deg", "eesp_ms",
                                "accel", "n_coils", "include_delta_b", "assume_te"},
                               "scan");
        std::string seq;
        if (read_field(s, "sequence", seq, "scan.sequence")) c.scan.sequence = parse_sequence(seq);
        read_field(s, "b0_t", c.scan.b0, "scan.b0_t");
        read_ms(s, "te_ms", c.scan.te, "scan.te_ms");
        read_ms(s, "tr_ms", c.scan.tr, "scan.tr_ms");
        ti_given = read_ms(s, "ti_ms", c.scan.ti, "scan.ti_ms");
        read_field(s, "flip_deg", c.scan.flip_deg, "scan.flip_deg");
        read_ms(s, "eesp_ms", c.scan.eesp, "scan.eesp_ms");
        read_field(s, "accel", c.scan.accel, "accel");
        read_field(s, "n_coils", c.scan.n_coils, "scan.n_coils");
        read_field(s, "include_delta_b", c.scan.include_delta_b, "scan.include_delta_b");
        read_field(s, "assume_te", c.scan.assume_te, "scan.assume_te");
    }
    if (c.scan.sequence == Sequence::ir)
        detail::require(ti_given, "IR sequence requires ti (scan.ti_ms)", "ti");
    std::string s;
    if (read_field(root, "trajectory", s, "trajectory")) c.trajectory = parse_trajectory_kind(s);
    if (read_field(root, "reconstruction", s, "reconstruction"))
        c.recon = parse_recon_kind(s);
    else
        c.recon = natural_recon(c.trajectory);
    if (root.contains("design")) {
        const json& d = detail::object_at(root, "design", "");
        detail::reject_unknown(d, {"initial_rest", "epochs", "task_per_epoch", "rest_per_epoch"}, "design");
        read_field(d, "initial_rest", c.design.n_initial_rest, "design.initial_rest");
        read_field(d, "epochs", c.design.n_epochs, "design.epochs");
        read_field(d, "task_per_epoch", c.design.n_task_per_epoch, "design.task_per_epoch");
        read_field(d, "rest_per_epoch", c.design.n_rest_per_epoch, "design.rest_per_epoch");
    }
    if (root.contains("activation")) {
        const json& a = detail::object_at(root, "activation", "");
        detail::reject_unknown(a, {"snr", "cnr", "trpc_deg"}, "activation");
        if (a.contains("snr") && a.at("snr").is_string() && a.at("snr").get<std::string>() == "inf")
            c.activation.snr = std::numeric_limits<double>::infinity();
        else
            read_field(a, "snr", c.activation.snr, "snr");
        read_field(a, "cnr", c.activation.cnr, "cnr");
        read_field(a, "trpc_deg", c.activation.trpc_deg, "trpc_deg");
    }
    if (read_field(root, "baseline", s, "baseline")) {
        detail::require(s == "active" || s == "brain", "baseline must be 'active' or 'brain'", "baseline");
        c.baseline = s == "active" ? BaselineMode::active : BaselineMode::brain;
    }
    read_field(root, "add_noise", c.add_noise, "add_noise");
    read_field(root, "seed", c.seed, "seed");
    read_field(root, "output_dir", c.output_dir, "output_dir");
    read_field(root, "timestamp", c.timestamp, "timestamp");

    // The data matrix matches the phantom; file sources resolve their size on load.
    if (c.phantom.size) c.scan.grid_n = *c.phantom.size;
    if (c.phantom.file && !c.phantom.size) {
        std::ifstream is(*c.phantom.file, std::ios::binary);
        detail::require(static_cast<bool>(is), "cannot open phantom file " + *c.phantom.file,
                        "phantom.file");
        c.scan.grid_n = detail::read_phantom_header(is);
    }
    validate_config(c);
    return c;
}

/// Parses and validates configuration text. Empty text means "all defaults".
inline RunConfig parse_config(const std::string& text) {
    json root;
    const bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
    if (blank) {
        root = json::object();
    } else {
        try {
            root = json::parse(text);
        } catch (const json::parse_error& e) {
            const auto [line, col] = detail::line_col(text, e.byte);
            throw config_syntax_error("syntax error at line " + std::to_string(line) + ", column " +
                                          std::to_string(col) + ": " + e.what(),
                                      line, col);
        }
    }
    return config_from_json(root);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    detail::require(static_cast<bool>(is), "cannot open configuration file " + path, "config");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

namespace detail {
/// Seconds to milliseconds, rounded to 1 ps so repeated round trips are stable.
inline double to_ms(double seconds) { return std::round(seconds * 1e12) / 1e9; }
}  // namespace detail

/// Canonical JSON form; config_from_json(config_to_json(c)) reproduces c.
inline json config_to_json(const RunConfig& c) {
    using detail::to_ms;
    json j;
    json p = json::object();
    if (c.phantom.size) p["size"] = *c.phantom.size;
    if (c.phantom.file) p["file"] = *c.phantom.file;
    if (c.phantom.activation_file) p["activation_file"] = *c.phantom.activation_file;
    if (c.phantom.activation_region)
        p["activation_region"] = {{"center", c.phantom.activation_region->center},
                                  {"radius", c.phantom.activation_region->radius}};
    auto tissue = [](const TissueValues& v) {
        return json{{"m0", v.m0}, {"t1_ms", to_ms(v.t1)}, {"t2star_ms", to_ms(v.t2star)}};
    };
    p["tissues"] = {{"gm", tissue(c.phantom.tissues.gm)},
                    {"wm", tissue(c.phantom.tissues.wm)},
                    {"csf", tissue(c.phantom.tissues.csf)},
                    {"delta_b_gradient_t", c.phantom.tissues.delta_b_gradient}};
    j["phantom"] = p;
    j["slice"] = {{"plane", std::string(to_string(c.plane))}, {"index", c.slice_index}};
    json s = {{"sequence", std::string(to_string(c.scan.sequence))},
              {"b0_t", c.scan.b0},
              {"te_ms", to_ms(c.scan.te)},
              {"tr_ms", to_ms(c.scan.tr)},
              {"flip_deg", c.scan.flip_deg},
              {"eesp_ms", to_ms(c.scan.eesp)},
              {"accel", c.scan.accel},
              {"n_coils", c.scan.n_coils},
              {"include_delta_b", c.scan.include_delta_b},
              {"assume_te", c.scan.assume_te}};
    if (c.scan.sequence == Sequence::ir || c.scan.ti > 0.0) s["ti_ms"] = to_ms(c.scan.ti);
    j["scan"] = s;
    j["trajectory"] = std::string(to_string(c.trajectory));
    j["reconstruction"] = std::string(to_string(c.recon));
    j["design"] = {{"initial_rest", c.design.n_initial_rest},
                   {"epochs", c.design.n_epochs},
                   {"task_per_epoch", c.design.n_task_per_epoch},
                   {"rest_per_epoch", c.design.n_rest_per_epoch}};
    j["activation"] = {{"cnr", c.activation.cnr}, {"trpc_deg", c.activation.trpc_deg}};
    if (std::isinf(c.activation.snr))
        j["activation"]["snr"] = "inf";
    else
        j["activation"]["snr"] = c.activation.snr;
    j["baseline"] = c.baseline == BaselineMode::active ? "active" : "brain";
    j["add_noise"] = c.add_noise;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    if (!c.timestamp.empty()) j["timestamp"] = c.timestamp;
    return j;
}

/// Defaults used by the service's form: the worked example on a generated 96^3 phantom.
inline RunConfig default_config() {
    RunConfig c;
    c.phantom.size = 96;
    c.scan.grid_n = 96;
    return c;
}

inline RunDescription describe(const RunConfig& c) {
    RunDescription r;
    r.timestamp = c.timestamp;
    r.slice_index = c.slice_index;
    r.phantom_size = c.scan.grid_n;
    r.plane = c.plane;
    r.scan = c.scan;
    r.trajectory = c.trajectory;
    r.design = c.design;
    r.activation = c.activation;
    r.recon = c.recon;
    return r;
}

}  // namespace ksim
