#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "ksim/binary_io.hpp"
#include "ksim/constants.hpp"
#include "ksim/error.hpp"
#include "ksim/grid.hpp"

namespace ksim {

/// Relaxation values for one tissue class (m0 dimensionless, times in seconds).
struct TissueValues {
    double m0 = 0.0;
    double t1 = 0.0;
    double t2star = 0.0;
};

/**
 * Per-tissue parameters at 3 T plus the field-inhomogeneity gradient strength.
 * The defaults are common literature values; nothing downstream depends on them.
 */
struct TissueParams {
    TissueValues gm{0.85, 1.33, 0.052};
    TissueValues wm{0.70, 0.83, 0.045};
    TissueValues csf{1.00, 3.70, 0.50};
    double delta_b_gradient = 3e-8;  ///< Tesla per normalized unit of (x + y + z) / size
};

enum class Tissue : std::uint8_t { empty = 0, csf = 1, gm = 2, wm = 3 };

/**
 * One ellipsoid of the phantom composition. Coordinates are normalized so the
 * volume spans (-1, 1) on every axis; `yaw_deg` rotates about z.
 */
struct Ellipsoid {
    std::array<double, 3> center;
    std::array<double, 3> semi_axes;
    double yaw_deg;
    Tissue tissue;

    bool contains(double ux, double uy, double uz) const {
        const double c = std::cos(yaw_deg * pi / 180.0);
        const double s = std::sin(yaw_deg * pi / 180.0);
        const double dx = ux - center[0], dy = uy - center[1], dz = uz - center[2];
        const double rx = c * dx + s * dy;
        const double ry = -s * dx + c * dy;
        const double q = rx * rx / (semi_axes[0] * semi_axes[0]) +
                         ry * ry / (semi_axes[1] * semi_axes[1]) +
                         dz * dz / (semi_axes[2] * semi_axes[2]);
        return q <= 1.0;
    }
};

/**
 * Painter's-order composition: later ellipsoids overwrite earlier labels.
 * x is left-right, y posterior-anterior, z inferior-superior.
 */
inline const std::vector<Ellipsoid>& brain_ellipsoids() {
    static const std::vector<Ellipsoid> shapes = {
        {{0.00, 0.00, 0.00}, {0.76, 0.92, 0.78}, 0.0, Tissue::csf},    // outer CSF layer
        {{0.00, 0.00, 0.00}, {0.72, 0.88, 0.74}, 0.0, Tissue::gm},     // cortex
        {{0.00, 0.02, 0.04}, {0.55, 0.70, 0.55}, 0.0, Tissue::wm},     // white matter core
        {{-0.20, -0.12, 0.00}, {0.10, 0.13, 0.10}, 0.0, Tissue::gm},   // deep gray, left
        {{0.20, -0.12, 0.00}, {0.10, 0.13, 0.10}, 0.0, Tissue::gm},    // deep gray, right
        {{-0.11, 0.06, 0.06}, {0.07, 0.26, 0.12}, 12.0, Tissue::csf},  // lateral ventricle, left
        {{0.11, 0.06, 0.06}, {0.07, 0.26, 0.12}, -12.0, Tissue::csf},  // lateral ventricle, right
    };
    return shapes;
}

/// Normalized coordinate of voxel index i on an n-voxel axis (voxel centers).
inline double normalized_coord(std::size_t i, std::size_t n) {
    return 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 1.0;
}

/// Four co-registered maps plus the binary activation map, all size^3.
struct PhantomVolume {
    std::size_t size = 0;
    Grid3D<double> m0;
    Grid3D<double> t1;       ///< seconds
    Grid3D<double> t2star;   ///< seconds
    Grid3D<double> delta_b;  ///< Tesla
    Grid3D<std::uint8_t> act_map;

    bool dimensions_agree() const {
        auto cube = [this](const auto& g) {
            return g.nx() == size && g.ny() == size && g.nz() == size;
        };
        return cube(m0) && cube(t1) && cube(t2star) && cube(delta_b) && cube(act_map);
    }

    /// Throws validation_error when any invariant of the volume is broken.
    void validate() const {
        detail::require(size > 0, "phantom size must be positive", "size");
        detail::require(dimensions_agree(), "phantom maps have mismatched dimensions", "dimensions");
        for (std::size_t i = 0; i < m0.size(); ++i) {
            detail::require(m0[i] >= 0.0 && std::isfinite(m0[i]), "m0 must be finite and >= 0", "m0");
            if (m0[i] > 0.0) {
                detail::require(t1[i] > 0.0, "t1 must be > 0 wherever m0 > 0", "t1");
                detail::require(t2star[i] > 0.0, "t2star must be > 0 wherever m0 > 0", "t2star");
            }
            detail::require(act_map[i] <= 1, "act_map must be binary", "act_map");
            detail::require(act_map[i] == 0 || m0[i] > 0.0,
                            "act_map may only be set where m0 > 0", "act_map");
        }
    }
};

enum class Plane { axial, sagittal, coronal };

inline std::string_view to_string(Plane p) {
    switch (p) {
        case Plane::axial: return "axial";
        case Plane::sagittal: return "sagittal";
        case Plane::coronal: return "coronal";
    }
    return "?";
}

inline Plane parse_plane(std::string_view s) {
    if (s == "axial" || s == "Axial") return Plane::axial;
    if (s == "sagittal" || s == "Sagittal") return Plane::sagittal;
    if (s == "coronal" || s == "Coronal") return Plane::coronal;
    throw validation_error("unknown plane '" + std::string(s) + "'", "plane");
}

/**
 * One 2-D slice of the phantom. Orientation (column axis, row axis):
 * axial (x, y), sagittal (y, z), coronal (x, z). `phase_offset` carries any
 * extra per-voxel phase in radians (zero after extraction; set by activation).
 */
struct SliceMaps {
    Plane plane = Plane::axial;
    std::size_t index = 1;  ///< 1-based slice number
    Grid2D<double> m0;
    Grid2D<double> t1;
    Grid2D<double> t2star;
    Grid2D<double> delta_b;
    Grid2D<std::uint8_t> act_map;
    Grid2D<double> phase_offset;

    std::size_t n() const { return m0.nx(); }
};

namespace detail {
// Maps in-plane (col, row) of a slice to volume (x, y, z).
inline std::array<std::size_t, 3> slice_to_volume(Plane plane, std::size_t k, std::size_t col,
                                                  std::size_t row) {
    switch (plane) {
        case Plane::axial: return {col, row, k};
        case Plane::sagittal: return {k, col, row};
        case Plane::coronal: return {col, k, row};
    }
    return {0, 0, 0};
}
}  // namespace detail

/**
 * Relaxation T2 from T2* and field offset: 1/T2 = 1/T2* - gamma*|dB|.
 * Degenerate voxels (rate <= 1/t2_max) clamp to t2_max.
 */
inline double derive_t2(double t2star, double delta_b, double gamma, double t2_max = 3.0) {
    const double rate = 1.0 / t2star - gamma * std::abs(delta_b);
    if (rate <= 1.0 / t2_max) return t2_max;
    return 1.0 / rate;
}

struct ActivationRegion {
    std::array<double, 3> center;  ///< voxel coordinates (0-based)
    double radius;                 ///< voxels
};

/**
 * Default region: a small sphere in the left cortical ribbon at mid-height,
 * roughly where a hand motor area would sit. It intersects the central
 * axial slice (1-based index size/2).
 */
inline ActivationRegion default_activation_region(std::size_t size) {
    const double n = static_cast<double>(size);
    const double cx = std::round((-0.635 + 1.0) * n / 2.0 - 0.5);
    const double c = n / 2.0 - 1.0;
    return {{cx, c, c}, n / 32.0};
}

/// Binary map of voxels inside the sphere that also have m0 > 0.
inline Grid3D<std::uint8_t> generate_activation_map(const PhantomVolume& p,
                                                    const ActivationRegion& region) {
    detail::require(region.radius >= 0.0, "activation radius must be >= 0", "radius");
    Grid3D<std::uint8_t> act(p.size, p.size, p.size, 0);
    std::size_t count = 0;
    const double r2 = region.radius * region.radius;
    for (std::size_t z = 0; z < p.size; ++z)
        for (std::size_t y = 0; y < p.size; ++y)
            for (std::size_t x = 0; x < p.size; ++x) {
                const double dx = static_cast<double>(x) - region.center[0];
                const double dy = static_cast<double>(y) - region.center[1];
                const double dz = static_cast<double>(z) - region.center[2];
                if (dx * dx + dy * dy + dz * dz <= r2 && p.m0(x, y, z) > 0.0) {
                    act(x, y, z) = 1;
                    ++count;
                }
            }
    if (count == 0)
        throw validation_error("activation region does not intersect any tissue", "activation");
    return act;
}

/// Brain-like phantom on a size^3 grid. Deterministic for fixed inputs.
inline PhantomVolume generate_phantom(std::size_t size, const TissueParams& tissues = {}) {
    detail::require(size == 64 || size == 96 || size == 128,
                    "phantom size must be 64, 96 or 128", "size");
    for (const auto* tv : {&tissues.gm, &tissues.wm, &tissues.csf}) {
        detail::require(tv->t1 > 0.0 && tv->t2star > 0.0,
                        "tissue relaxation times must be positive", "tissue_params");
        detail::require(tv->m0 >= 0.0, "tissue m0 must be >= 0", "tissue_params");
    }

    PhantomVolume p;
    p.size = size;
    p.m0 = Grid3D<double>(size, size, size, 0.0);
    p.t1 = p.m0;
    p.t2star = p.m0;
    p.delta_b = p.m0;

    const auto& shapes = brain_ellipsoids();
    for (std::size_t z = 0; z < size; ++z) {
        const double uz = normalized_coord(z, size);
        for (std::size_t y = 0; y < size; ++y) {
            const double uy = normalized_coord(y, size);
            for (std::size_t x = 0; x < size; ++x) {
                const double ux = normalized_coord(x, size);
                Tissue label = Tissue::empty;
                for (const auto& e : shapes)
                    if (e.contains(ux, uy, uz)) label = e.tissue;
                const TissueValues* tv = nullptr;
                switch (label) {
                    case Tissue::gm: tv = &tissues.gm; break;
                    case Tissue::wm: tv = &tissues.wm; break;
                    case Tissue::csf: tv = &tissues.csf; break;
                    case Tissue::empty: break;
                }
                if (tv == nullptr) continue;
                p.m0(x, y, z) = tv->m0;
                p.t1(x, y, z) = tv->t1;
                p.t2star(x, y, z) = tv->t2star;
            }
        }
    }

    // Field map: planar scanner gradient plus a small T2*-correlated term,
    // both restricted to tissue voxels.
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n_brain = 0;
    for (std::size_t i = 0; i < p.m0.size(); ++i)
        if (p.m0[i] > 0.0) {
            sum += p.t2star[i];
            ++n_brain;
        }
    const double mean = n_brain ? sum / static_cast<double>(n_brain) : 0.0;
    for (std::size_t i = 0; i < p.m0.size(); ++i)
        if (p.m0[i] > 0.0) sum_sq += (p.t2star[i] - mean) * (p.t2star[i] - mean);
    const double sd = n_brain ? std::sqrt(sum_sq / static_cast<double>(n_brain)) : 0.0;
    const double g = tissues.delta_b_gradient;
    const double n = static_cast<double>(size);
    for (std::size_t z = 0; z < size; ++z)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                if (p.m0(x, y, z) <= 0.0) continue;
                const double planar = g * static_cast<double>(x + y + z) / n;
                const double detail = sd > 0.0 ? 0.1 * g * (p.t2star(x, y, z) - mean) / sd : 0.0;
                p.delta_b(x, y, z) = planar + detail;
            }

    p.act_map = generate_activation_map(p, default_activation_region(size));
    return p;
}

/// 2-D restriction of all maps at a 1-based slice index.
inline SliceMaps extract_slice(const PhantomVolume& p, Plane plane, std::size_t index) {
    detail::require(index >= 1 && index <= p.size,
                    "slice index " + std::to_string(index) + " outside 1.." + std::to_string(p.size),
                    "slice");
    const std::size_t n = p.size;
    const std::size_t k = index - 1;
    SliceMaps s;
    s.plane = plane;
    s.index = index;
    s.m0 = Grid2D<double>(n, n);
    s.t1 = s.m0;
    s.t2star = s.m0;
    s.delta_b = s.m0;
    s.phase_offset = s.m0;
    s.act_map = Grid2D<std::uint8_t>(n, n, 0);
    for (std::size_t row = 0; row < n; ++row)
        for (std::size_t col = 0; col < n; ++col) {
            const auto [x, y, z] = detail::slice_to_volume(plane, k, col, row);
            s.m0(col, row) = p.m0(x, y, z);
            s.t1(col, row) = p.t1(x, y, z);
            s.t2star(col, row) = p.t2star(x, y, z);
            s.delta_b(col, row) = p.delta_b(x, y, z);
            s.act_map(col, row) = p.act_map(x, y, z);
        }
    return s;
}

/// Writes a slice back into the volume at its plane and index.
inline void embed_slice(PhantomVolume& p, const SliceMaps& s) {
    detail::require(s.n() == p.size && s.index >= 1 && s.index <= p.size,
                    "slice does not fit phantom", "slice");
    const std::size_t k = s.index - 1;
    for (std::size_t row = 0; row < p.size; ++row)
        for (std::size_t col = 0; col < p.size; ++col) {
            const auto [x, y, z] = detail::slice_to_volume(s.plane, k, col, row);
            p.m0(x, y, z) = s.m0(col, row);
            p.t1(x, y, z) = s.t1(col, row);
            p.t2star(x, y, z) = s.t2star(col, row);
            p.delta_b(x, y, z) = s.delta_b(col, row);
            p.act_map(x, y, z) = s.act_map(col, row);
        }
}

// ---------------------------------------------------------------------------
// Phantom file: "SHKPH1", u32 size, then float64 grids (x fastest), little
// endian. A full phantom holds m0, t1, t2star, delta_b, act_map; an
// activation-only file holds just the act_map grid.

inline constexpr std::string_view phantom_magic = "SHKPH1";

namespace detail {
inline void write_grid(std::ostream& os, const Grid3D<double>& g) {
    binary::put_doubles(os, g.values());
}

inline std::size_t read_phantom_header(std::istream& is) {
    char magic[6];
    if (!is.read(magic, 6) || std::string_view(magic, 6) != phantom_magic)
        throw format_error("malformed phantom header: bad magic");
    const auto size = binary::get<std::uint32_t>(is, "phantom header");
    if (size == 0 || size > 4096) throw format_error("malformed phantom header: bad size");
    return size;
}

inline std::size_t payload_grids(std::istream& is, std::size_t size) {
    const auto here = is.tellg();
    is.seekg(0, std::ios::end);
    const auto end = is.tellg();
    is.seekg(here);
    const auto bytes = static_cast<std::size_t>(end - here);
    const std::size_t grid_bytes = size * size * size * sizeof(double);
    if (bytes % grid_bytes != 0) throw format_error("malformed phantom file: truncated grid data");
    return bytes / grid_bytes;
}

inline Grid3D<double> read_grid(std::istream& is, std::size_t size, const char* what) {
    Grid3D<double> g(size, size, size);
    binary::get_doubles(is, g.values(), what);
    return g;
}

inline Grid3D<std::uint8_t> to_binary(const Grid3D<double>& g) {
    Grid3D<std::uint8_t> out(g.nx(), g.ny(), g.nz());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] != 0.0 && g[i] != 1.0) throw format_error("activation map is not binary");
        out[i] = g[i] == 1.0 ? 1 : 0;
    }
    return out;
}
}  // namespace detail

inline void save_phantom(const PhantomVolume& p, const std::filesystem::path& path) {
    if (!p.dimensions_agree())
        throw validation_error("phantom maps have mismatched dimensions", "dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(phantom_magic.data(), 6);
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.size));
    detail::write_grid(os, p.m0);
    detail::write_grid(os, p.t1);
    detail::write_grid(os, p.t2star);
    detail::write_grid(os, p.delta_b);
    Grid3D<double> act(p.size, p.size, p.size);
    for (std::size_t i = 0; i < act.size(); ++i) act[i] = p.act_map[i];
    detail::write_grid(os, act);
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

inline void save_activation_map(const Grid3D<std::uint8_t>& act, const std::filesystem::path& path) {
    if (act.nx() != act.ny() || act.ny() != act.nz())
        throw validation_error("activation map must be a cube", "dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(phantom_magic.data(), 6);
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(act.nx()));
    Grid3D<double> g(act.nx(), act.ny(), act.nz());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = act[i];
    detail::write_grid(os, g);
}

inline PhantomVolume load_phantom(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    PhantomVolume p;
    p.size = detail::read_phantom_header(is);
    if (detail::payload_grids(is, p.size) != 5)
        throw format_error("malformed phantom file: expected five grids");
    p.m0 = detail::read_grid(is, p.size, "m0");
    p.t1 = detail::read_grid(is, p.size, "t1");
    p.t2star = detail::read_grid(is, p.size, "t2star");
    p.delta_b = detail::read_grid(is, p.size, "delta_b");
    p.act_map = detail::to_binary(detail::read_grid(is, p.size, "act_map"));
    p.validate();
    return p;
}

/// Reads an activation-only file and checks it against the phantom's size.
inline Grid3D<std::uint8_t> load_activation_map(const std::filesystem::path& path,
                                                const PhantomVolume& p) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    const std::size_t size = detail::read_phantom_header(is);
    if (detail::payload_grids(is, size) != 1)
        throw format_error("malformed activation file: expected a single grid");
    if (size != p.size)
        throw validation_error("activation map is " + std::to_string(size) + "^3 but phantom is " +
                                   std::to_string(p.size) + "^3",
                               "dimensions");
    auto act = detail::to_binary(detail::read_grid(is, size, "act_map"));
    for (std::size_t i = 0; i < act.size(); ++i)
        if (act[i] && p.m0[i] <= 0.0) act[i] = 0;
    return act;
}

}  // namespace ksim
