#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "ksim/constants.hpp"
#include "ksim/error.hpp"
#include "ksim/grid.hpp"
#include "ksim/stats.hpp"

namespace ksim {

enum class Colormap { gray, hot, jet };

inline std::string_view to_string(Colormap c) {
    switch (c) {
        case Colormap::gray: return "gray";
        case Colormap::hot: return "hot";
        case Colormap::jet: return "jet";
    }
    return "?";
}

inline Colormap parse_colormap(std::string_view s) {
    if (s == "gray" || s == "grey") return Colormap::gray;
    if (s == "hot") return Colormap::hot;
    if (s == "jet") return Colormap::jet;
    throw validation_error("unknown colormap '" + std::string(s) + "'", "colormap");
}

struct Window {
    double lo = 0.0;
    double hi = 1.0;
};

/// Min-max window over finite values; phase always uses [-pi, pi).
inline Window display_window(const Grid2D<double>& g, Part part) {
    if (part == Part::phase) return {-pi, pi};
    bool any = false;
    Window w{0.0, 0.0};
    for (double v : g.storage()) {
        if (!std::isfinite(v)) continue;
        if (!any) {
            w = {v, v};
            any = true;
        }
        w.lo = std::min(w.lo, v);
        w.hi = std::max(w.hi, v);
    }
    detail::require(any, "grid has no finite values to display", "grid");
    return w;
}

/// 8-bit level of a value in the window. Constant windows map to mid gray; non-finite to 0.
inline std::uint8_t window_level(double v, const Window& w) {
    if (!std::isfinite(v)) return 0;
    if (w.hi <= w.lo) return 128;
    const double u = std::clamp((v - w.lo) / (w.hi - w.lo), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(u * 255.0));
}

inline std::array<std::uint8_t, 3> colormap_rgb(std::uint8_t level, Colormap c) {
    const double u = level / 255.0;
    auto byte = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
    switch (c) {
        case Colormap::gray: return {level, level, level};
        case Colormap::hot: return {byte(3.0 * u), byte(3.0 * u - 1.0), byte(3.0 * u - 2.0)};
        case Colormap::jet:
            return {byte(1.5 - std::abs(4.0 * u - 3.0)), byte(1.5 - std::abs(4.0 * u - 2.0)),
                    byte(1.5 - std::abs(4.0 * u - 1.0))};
    }
    return {level, level, level};
}

/// 8-bit levels row by row, top row first (highest y at the top of the picture).
inline std::vector<std::uint8_t> render_levels(const Grid2D<double>& g, const Window& w) {
    std::vector<std::uint8_t> out;
    out.reserve(g.size());
    for (std::size_t r = 0; r < g.ny(); ++r) {
        const std::size_t y = g.ny() - 1 - r;
        for (std::size_t x = 0; x < g.nx(); ++x) out.push_back(window_level(g(x, y), w));
    }
    return out;
}

/**
 * Writes a binary PGM (gray) or PPM (other colormaps) and a sidecar text file
 * `<path>.txt` recording the window bounds. Returns the window used.
 */
inline Window export_image(const Grid2D<double>& g, Part part, const std::filesystem::path& path,
                           Colormap cmap = Colormap::gray) {
    detail::require(!g.empty(), "cannot export an empty grid", "grid");
    const Window w = display_window(g, part);
    const auto levels = render_levels(g, w);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (cmap == Colormap::gray) {
        os << "P5\n" << g.nx() << " " << g.ny() << "\n255\n";
        os.write(reinterpret_cast<const char*>(levels.data()), static_cast<std::streamsize>(levels.size()));
    } else {
        os << "P6\n" << g.nx() << " " << g.ny() << "\n255\n";
        for (auto l : levels) {
            const auto rgb = colormap_rgb(l, cmap);
            os.write(reinterpret_cast<const char*>(rgb.data()), 3);
        }
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());

    std::ofstream side(path.string() + ".txt");
    char buf[160];
    std::snprintf(buf, sizeof buf, "part=%s\ncolormap=%s\nwindow_min=%.17g\nwindow_max=%.17g\n",
                  std::string(to_string(part)).c_str(), std::string(to_string(cmap)).c_str(), w.lo, w.hi);
    side << buf;
    return w;
}

}  // namespace ksim
