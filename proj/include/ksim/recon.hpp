#pragma once

#include <cmath>
#include <string_view>
#include <vector>

#include "ksim/dft.hpp"
#include "ksim/error.hpp"
#include "ksim/grid.hpp"
#include "ksim/signal.hpp"

namespace ksim {

/// Reconstructed complex image, grid_n x grid_n, centered coordinates.
struct ImageFrame {
    Grid2D<cplx> data;

    Grid2D<double> real() const { return map_grid(data, [](cplx v) { return v.real(); }); }
    Grid2D<double> imag() const { return map_grid(data, [](cplx v) { return v.imag(); }); }
    Grid2D<double> magnitude() const { return map_grid(data, [](cplx v) { return std::abs(v); }); }
    /// Phase in [-pi, pi).
    Grid2D<double> phase() const {
        return map_grid(data, [](cplx v) {
            const double a = std::arg(v);
            return a >= pi ? -pi : a;
        });
    }
};

enum class ReconKind { none, cartesian_idft, gridding };

inline std::string_view to_string(ReconKind r) {
    switch (r) {
        case ReconKind::none: return "none";
        case ReconKind::cartesian_idft: return "cartesian_idft";
        case ReconKind::gridding: return "gridding";
    }
    return "?";
}

inline ReconKind parse_recon_kind(std::string_view s) {
    if (s == "none") return ReconKind::none;
    if (s == "cartesian_idft" || s == "idft") return ReconKind::cartesian_idft;
    if (s == "gridding") return ReconKind::gridding;
    throw validation_error("unknown reconstruction '" + std::string(s) + "'", "reconstruction");
}

/// Scatters Cartesian samples onto the full grid; unsampled cells stay zero.
inline Grid2D<cplx> cartesian_kspace_grid(const KSpaceFrame& frame) {
    detail::require(frame.trajectory != nullptr, "frame has no trajectory", "trajectory");
    const Trajectory& traj = *frame.trajectory;
    detail::require(traj.kind() == TrajectoryKind::cartesian,
                    "inverse DFT needs a Cartesian trajectory; grid non-Cartesian data first",
                    "reconstruction");
    detail::require(frame.values.size() == traj.size(), "frame length does not match trajectory",
                    "trajectory");
    const std::size_t n = traj.grid_n();
    Grid2D<cplx> k(n, n, cplx{});
    for (std::size_t j = 0; j < traj.size(); ++j) {
        std::size_t ix = 0, iy = 0;
        const double kx = traj[j].kx, ky = traj[j].ky;
        detail::require(kx == std::round(kx) && ky == std::round(ky) &&
                            uncentered(static_cast<long>(kx), n, ix) &&
                            uncentered(static_cast<long>(ky), n, iy),
                        "Cartesian sample off the integer grid", "trajectory");
        k(ix, iy) = frame.values[j];
    }
    return k;
}

/// Inverse DFT of a centered k-space grid (1/(nx ny) normalization).
inline ImageFrame idft_grid(const Grid2D<cplx>& k) { return {dft::inverse(k)}; }

/// Inverse DFT of a Cartesian frame; skipped (accelerated) lines are zero-filled.
inline ImageFrame idft_recon(const KSpaceFrame& frame) {
    return idft_grid(cartesian_kspace_grid(frame));
}

/**
 * Nearest-grid-point binning of arbitrary samples. Each cell receives the mean
 * of the samples that round to it (sample-count density compensation); cells
 * with no samples are zero and samples outside the grid are dropped.
 */
inline Grid2D<cplx> grid_noncartesian(const KSpaceFrame& frame) {
    detail::require(frame.trajectory != nullptr, "frame has no trajectory", "trajectory");
    const Trajectory& traj = *frame.trajectory;
    detail::require(traj.size() > 0 && frame.values.size() == traj.size(),
                    "gridding needs a non-empty frame matching its trajectory", "trajectory");
    const std::size_t n = traj.grid_n();
    Grid2D<cplx> sum(n, n, cplx{});
    Grid2D<unsigned> count(n, n, 0u);
    for (std::size_t j = 0; j < traj.size(); ++j) {
        std::size_t ix = 0, iy = 0;
        if (!uncentered(static_cast<long>(std::lround(traj[j].kx)), n, ix) ||
            !uncentered(static_cast<long>(std::lround(traj[j].ky)), n, iy))
            continue;
        sum(ix, iy) += frame.values[j];
        count(ix, iy) += 1;
    }
    for (std::size_t i = 0; i < sum.size(); ++i)
        if (count[i] > 0) sum[i] /= static_cast<double>(count[i]);
    return sum;
}

/// Centered k-space grid of a frame, whatever its trajectory.
inline Grid2D<cplx> kspace_grid(const KSpaceFrame& frame) {
    return frame.trajectory && frame.trajectory->kind() == TrajectoryKind::cartesian
               ? cartesian_kspace_grid(frame)
               : grid_noncartesian(frame);
}

inline ImageFrame reconstruct(const KSpaceFrame& frame, ReconKind kind) {
    switch (kind) {
        case ReconKind::cartesian_idft: return idft_recon(frame);
        case ReconKind::gridding: return idft_grid(grid_noncartesian(frame));
        case ReconKind::none: break;
    }
    throw validation_error("reconstruction disabled", "reconstruction");
}

/// Voxelwise root-sum-of-squares magnitude over coils.
inline Grid2D<double> combine_coils_rss(const std::vector<ImageFrame>& images) {
    detail::require(!images.empty(), "need at least one coil image", "n_coils");
    Grid2D<double> out(images[0].data.nx(), images[0].data.ny(), 0.0);
    for (const auto& img : images) {
        detail::require(img.data.same_shape(images[0].data), "coil images differ in dimensions",
                        "dimensions");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::norm(img.data[i]);
    }
    for (double& v : out.storage()) v = std::sqrt(v);
    return out;
}

}  // namespace ksim
