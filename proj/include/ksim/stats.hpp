#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "ksim/error.hpp"
#include "ksim/experiment.hpp"
#include "ksim/grid.hpp"
#include "ksim/noise.hpp"
#include "ksim/parallel.hpp"
#include "ksim/recon.hpp"

namespace ksim {

enum class StatKind { tstat, snr };

inline std::string_view to_string(StatKind k) { return k == StatKind::tstat ? "tstat" : "snr"; }

inline StatKind parse_stat_kind(std::string_view s) {
    if (s == "tstat" || s == "t") return StatKind::tstat;
    if (s == "snr") return StatKind::snr;
    throw validation_error("unknown statistic '" + std::string(s) + "'", "kind");
}

struct StatMap {
    Grid2D<double> values;
    StatKind kind = StatKind::tstat;
    double df = 0.0;         ///< degrees of freedom (t maps)
    double threshold = 5.0;  ///< overlay shows |value| > threshold
    std::size_t n_task = 0;
    std::size_t n_rest = 0;
};

/// Magnitude (or any real part) of every frame, one grid per frame.
using MagnitudeSeries = std::vector<Grid2D<double>>;

namespace detail {
inline void check_series(const MagnitudeSeries& series, const DesignVector& x) {
    require(!series.empty(), "empty series", "series");
    require(series.size() == x.size(), "series length does not match the design vector", "design");
    for (const auto& g : series)
        require(g.same_shape(series[0]), "frames differ in dimensions", "dimensions");
}
}  // namespace detail

/**
 * Two-sample pooled-variance t statistic (task minus rest) per voxel, ignoring
 * the first skip_initial frames. A voxel with zero pooled variance is NaN when
 * the group means agree and +-inf when they differ.
 */
inline StatMap ttest_map(const MagnitudeSeries& series, const DesignVector& x, std::size_t skip_initial) {
    detail::check_series(series, x);
    std::size_t n1 = 0, n0 = 0;
    for (std::size_t t = skip_initial; t < x.size(); ++t) (x.x[t] ? n1 : n0) += 1;
    detail::require(n1 >= 1 && n0 >= 1, "t test needs task and rest frames after skipping", "design");
    detail::require(n1 + n0 >= 3, "t test needs at least one degree of freedom", "design");

    const std::size_t nx = series[0].nx(), ny = series[0].ny();
    StatMap m;
    m.kind = StatKind::tstat;
    m.values = Grid2D<double>(nx, ny, 0.0);
    m.df = static_cast<double>(n1 + n0 - 2);
    m.n_task = n1;
    m.n_rest = n0;
    const double f1 = static_cast<double>(n1), f0 = static_cast<double>(n0);
    parallel_for(ny, [&](std::size_t y) {
        for (std::size_t xx = 0; xx < nx; ++xx) {
            double s1 = 0.0, s0 = 0.0;
            for (std::size_t t = skip_initial; t < x.size(); ++t)
                (x.x[t] ? s1 : s0) += series[t](xx, y);
            const double m1 = s1 / f1, m0 = s0 / f0;
            double q1 = 0.0, q0 = 0.0;
            for (std::size_t t = skip_initial; t < x.size(); ++t) {
                const double v = series[t](xx, y);
                if (x.x[t])
                    q1 += (v - m1) * (v - m1);
                else
                    q0 += (v - m0) * (v - m0);
            }
            const double pooled = (q1 + q0) / m.df;
            const double diff = m1 - m0;
            double tv;
            if (pooled > 0.0)
                tv = diff / std::sqrt(pooled * (1.0 / f1 + 1.0 / f0));
            else if (diff == 0.0)
                tv = std::numeric_limits<double>::quiet_NaN();
            else
                tv = diff > 0.0 ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
            m.values(xx, y) = tv;
        }
    });
    return m;
}

/// Two-sided critical value t_{alpha/2, df}.
inline double t_critical(double df, double alpha = 0.05) {
    detail::require(df > 0.0, "df must be > 0", "df");
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)", "alpha");
    boost::math::students_t dist(df);
    return boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
}

/// mean / std (sample std, n - 1) of the rest frames after skip_initial; NaN where std is zero.
inline StatMap snr_map(const MagnitudeSeries& series, const DesignVector& x, std::size_t skip_initial) {
    detail::check_series(series, x);
    std::vector<std::size_t> rest;
    for (std::size_t t = skip_initial; t < x.size(); ++t)
        if (!x.x[t]) rest.push_back(t);
    detail::require(rest.size() >= 2, "SNR map needs at least two rest frames", "design");
    const std::size_t nx = series[0].nx(), ny = series[0].ny();
    StatMap m;
    m.kind = StatKind::snr;
    m.values = Grid2D<double>(nx, ny, 0.0);
    m.n_rest = rest.size();
    m.df = static_cast<double>(rest.size() - 1);
    const double n = static_cast<double>(rest.size());
    parallel_for(ny, [&](std::size_t y) {
        for (std::size_t xx = 0; xx < nx; ++xx) {
            double s = 0.0;
            for (auto t : rest) s += series[t](xx, y);
            const double mean = s / n;
            double q = 0.0;
            for (auto t : rest) q += (series[t](xx, y) - mean) * (series[t](xx, y) - mean);
            const double sd = std::sqrt(q / (n - 1.0));
            m.values(xx, y) = sd > 0.0 ? mean / sd : std::numeric_limits<double>::quiet_NaN();
        }
    });
    return m;
}

// ---------------------------------------------------------------------------
// Voxel histograms

enum class Part { real, imag, magnitude, phase };

inline std::string_view to_string(Part p) {
    switch (p) {
        case Part::real: return "real";
        case Part::imag: return "imag";
        case Part::magnitude: return "magnitude";
        case Part::phase: return "phase";
    }
    return "?";
}

inline Part parse_part(std::string_view s) {
    if (s == "real") return Part::real;
    if (s == "imag" || s == "imaginary") return Part::imag;
    if (s == "magnitude" || s == "mag") return Part::magnitude;
    if (s == "phase") return Part::phase;
    throw validation_error("unknown part '" + std::string(s) + "'", "part");
}

inline Grid2D<double> part_of(const ImageFrame& img, Part p) {
    switch (p) {
        case Part::real: return img.real();
        case Part::imag: return img.imag();
        case Part::magnitude: return img.magnitude();
        case Part::phase: return img.phase();
    }
    throw validation_error("unknown part", "part");
}

inline Grid2D<double> part_of(const Grid2D<cplx>& g, Part p) { return part_of(ImageFrame{g}, p); }

/// Reconstructed images indexed [t * n_coils + coil].
struct ImageSeries {
    std::size_t n_frames = 0;
    int n_coils = 1;
    std::vector<ImageFrame> frames;

    const ImageFrame& at(std::size_t t, int coil) const {
        return frames[t * static_cast<std::size_t>(n_coils) + static_cast<std::size_t>(coil)];
    }

    /// Per-frame magnitudes (RSS over coils when there are several).
    MagnitudeSeries magnitudes() const {
        MagnitudeSeries out(n_frames);
        parallel_for(n_frames, [&](std::size_t t) {
            if (n_coils == 1) {
                out[t] = at(t, 0).magnitude();
                return;
            }
            std::vector<ImageFrame> c(frames.begin() + static_cast<long>(t * n_coils),
                                      frames.begin() + static_cast<long>((t + 1) * n_coils));
            out[t] = combine_coils_rss(c);
        });
        return out;
    }
};

/// Reference quantities for theoretical overlays.
struct NoiseTheory {
    double sigma = 0.0;                ///< image-space per-channel std
    std::vector<ImageFrame> reference; ///< noiseless rest image per coil
};

struct VoxelHistogram {
    std::vector<double> edges;    ///< bins + 1 edges
    std::vector<double> counts;
    std::vector<double> density;  ///< counts / (n * width)
    std::vector<double> theory;   ///< pdf at bin centers
    std::string model;            ///< normal, rician, rayleigh, phase, uniform, noncentral_chi
    std::size_t n = 0;
    double rho = 0.0;             ///< true magnitude used by the model
    double theta = 0.0;
    double sigma = 0.0;
};

/// Values of one voxel over frames; coil < 0 means RSS magnitude over coils.
inline std::vector<double> voxel_series(const ImageSeries& s, std::size_t vx, std::size_t vy, Part part,
                                        int coil = 0) {
    detail::require(!s.frames.empty(), "empty series", "series");
    const auto& g0 = s.frames[0].data;
    detail::require(vx < g0.nx() && vy < g0.ny(), "voxel outside the image", "voxel");
    detail::require(coil < s.n_coils, "coil index out of range", "coil");
    std::vector<double> out(s.n_frames);
    for (std::size_t t = 0; t < s.n_frames; ++t) {
        if (coil < 0 || (part == Part::magnitude && s.n_coils > 1)) {
            double acc = 0.0;
            for (int c = 0; c < s.n_coils; ++c) acc += std::norm(s.at(t, c).data(vx, vy));
            out[t] = std::sqrt(acc);
            continue;
        }
        const cplx v = s.at(t, coil).data(vx, vy);
        switch (part) {
            case Part::real: out[t] = v.real(); break;
            case Part::imag: out[t] = v.imag(); break;
            case Part::magnitude: out[t] = std::abs(v); break;
            case Part::phase: {
                const double a = std::arg(v);
                out[t] = a >= pi ? -pi : a;
                break;
            }
        }
    }
    return out;
}

/**
 * Histogram of one voxel over the rest frames (after skip_initial) with the
 * matching theoretical density evaluated at bin centers: normal for real and
 * imaginary parts, Ricean (Rayleigh at zero signal) for single-coil magnitude,
 * non-central chi for multi-coil RSS magnitude, and the phase density.
 */
inline VoxelHistogram voxel_histogram(const ImageSeries& s, const DesignVector& x,
                                      std::size_t skip_initial, std::size_t vx, std::size_t vy,
                                      Part part, std::size_t bins, const NoiseTheory& theory,
                                      int coil = 0) {
    detail::require(bins >= 1, "bins must be >= 1", "bins");
    detail::require(x.size() == s.n_frames, "series length does not match the design vector",
                    "design");
    detail::require(coil >= 0 && coil < s.n_coils, "coil index out of range", "coil");
    detail::require(theory.sigma > 0.0, "theory sigma must be > 0", "sigma");
    detail::require(theory.reference.size() == static_cast<std::size_t>(s.n_coils),
                    "one reference image per coil required", "reference");
    const auto all = voxel_series(s, vx, vy, part, coil);
    std::vector<double> vals;
    for (std::size_t t = skip_initial; t < all.size(); ++t)
        if (!x.x[t]) vals.push_back(all[t]);
    detail::require(!vals.empty(), "no rest frames to histogram", "design");

    VoxelHistogram h;
    h.n = vals.size();
    h.sigma = theory.sigma;
    double lo, hi;
    if (part == Part::phase) {
        lo = -pi;
        hi = pi;
    } else {
        lo = *std::min_element(vals.begin(), vals.end());
        hi = *std::max_element(vals.begin(), vals.end());
        if (part == Part::magnitude) lo = std::min(lo, 0.0);
        if (hi <= lo) hi = lo + 1.0;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
    h.edges[bins] = hi;
    h.counts.assign(bins, 0.0);
    for (double v : vals) {
        auto b = static_cast<long>(std::floor((v - lo) / width));
        b = std::clamp<long>(b, 0, static_cast<long>(bins) - 1);
        h.counts[static_cast<std::size_t>(b)] += 1.0;
    }
    h.density.resize(bins);
    for (std::size_t b = 0; b < bins; ++b)
        h.density[b] = h.counts[b] / (static_cast<double>(h.n) * width);

    const cplx ref = theory.reference[static_cast<std::size_t>(coil)].data(vx, vy);
    h.rho = std::abs(ref);
    h.theta = std::arg(ref);
    const double sigma = theory.sigma;
    // Signal this far below the noise is indistinguishable from zero.
    const bool no_signal = h.rho < 0.01 * sigma;

    double rho_c = 0.0;
    if (part == Part::magnitude && s.n_coils > 1) {
        for (const auto& r : theory.reference) rho_c += std::norm(r.data(vx, vy));
        rho_c = std::sqrt(rho_c);
        h.rho = rho_c;
    }

    h.theory.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double c = 0.5 * (h.edges[b] + h.edges[b + 1]);
        switch (part) {
            case Part::real: h.theory[b] = normal_pdf(c, ref.real(), sigma); break;
            case Part::imag: h.theory[b] = normal_pdf(c, ref.imag(), sigma); break;
            case Part::magnitude:
                if (s.n_coils > 1)
                    h.theory[b] = noncentral_chi_pdf(c, rho_c, sigma, s.n_coils);
                else
                    h.theory[b] = rician_pdf(c, {no_signal ? 0.0 : h.rho, 0.0, sigma});
                break;
            case Part::phase:
                h.theory[b] = phase_pdf(c, {no_signal ? 0.0 : h.rho, h.theta, sigma});
                break;
        }
    }
    switch (part) {
        case Part::real:
        case Part::imag: h.model = "normal"; break;
        case Part::magnitude:
            h.model = s.n_coils > 1 ? "noncentral_chi" : (no_signal ? "rayleigh" : "rician");
            break;
        case Part::phase: h.model = no_signal ? "uniform" : "phase"; break;
    }
    if (no_signal && !(part == Part::magnitude && s.n_coils > 1)) h.rho = 0.0;
    return h;
}

}  // namespace ksim
