#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ksim/constants.hpp"
#include "ksim/dft.hpp"
#include "ksim/error.hpp"
#include "ksim/grid.hpp"
#include "ksim/parallel.hpp"
#include "ksim/phantom.hpp"
#include "ksim/trajectory.hpp"

namespace ksim {

using TrajectoryPtr = std::shared_ptr<const Trajectory>;

/// Complex samples in trajectory order for one receive coil.
struct KSpaceFrame {
    std::vector<cplx> values;
    TrajectoryPtr trajectory;
    int coil_index = 0;

    std::size_t size() const { return values.size(); }
};

/// Receive sensitivity of one coil. Coil position in centered grid coordinates.
struct SensitivityMap {
    Grid2D<double> weights;
    double coil_x = 0.0;
    double coil_y = 0.0;
};

/**
 * Coils sit on a circle of radius 0.55 * grid_n around the geometric center of
 * the grid, coil j at angle 2 pi j / n_c. Weight falls off as the inverse of
 * the distance to the coil point (clamped at one voxel) and is normalized so
 * the grid maximum is 1. A single coil is uniform.
 */
inline std::vector<SensitivityMap> coil_sensitivities(int n_coils, std::size_t grid_n) {
    detail::require(n_coils >= 1, "n_coils must be >= 1", "n_coils");
    detail::require(grid_n >= 1, "grid_n must be >= 1", "grid_n");
    std::vector<SensitivityMap> maps;
    if (n_coils == 1) {
        maps.push_back({Grid2D<double>(grid_n, grid_n, 1.0), 0.0, 0.0});
        return maps;
    }
    // Centered coordinates run -n/2 .. n/2-1, so the geometric center is at -1/2.
    const double mid = -0.5;
    const double radius = 0.55 * static_cast<double>(grid_n);
    constexpr double d_min = 1.0;
    for (int j = 0; j < n_coils; ++j) {
        const double angle = two_pi * j / n_coils;
        SensitivityMap m;
        m.coil_x = mid + radius * std::cos(angle);
        m.coil_y = mid + radius * std::sin(angle);
        m.weights = Grid2D<double>(grid_n, grid_n);
        double peak = 0.0;
        for (std::size_t y = 0; y < grid_n; ++y)
            for (std::size_t x = 0; x < grid_n; ++x) {
                const double dx = static_cast<double>(centered(x, grid_n)) - m.coil_x;
                const double dy = static_cast<double>(centered(y, grid_n)) - m.coil_y;
                const double w = d_min / std::max(std::hypot(dx, dy), d_min);
                m.weights(x, y) = w;
                peak = std::max(peak, w);
            }
        for (double& w : m.weights.storage()) w /= peak;
        maps.push_back(std::move(m));
    }
    return maps;
}

/**
 * Per-voxel terms of a signal equation: every contributing voxel adds
 * amplitude * exp(rate * t) * exp(-i 2 pi (kx x + ky y) / n) to each sample.
 * Stored struct-of-arrays, grouped by row.
 */
struct VoxelModel {
    std::size_t n = 0;
    std::vector<long> x;  ///< centered coordinates
    std::vector<long> y;
    std::vector<cplx> amplitude;
    std::vector<cplx> rate;  ///< -R + i omega, s^-1
};

namespace detail {

inline void check_slice_for_signal(const SliceMaps& slice, const Trajectory& traj,
                                   const SensitivityMap& coil) {
    require(slice.n() == traj.grid_n() && slice.m0.ny() == traj.grid_n(),
            "slice dimensions do not match trajectory grid_n", "grid_n");
    require(coil.weights.same_shape(slice.m0), "coil sensitivity does not match slice dimensions",
            "n_coils");
}

template <typename Weight>
VoxelModel build_model(const SliceMaps& slice, const SensitivityMap& coil, Weight&& weight) {
    VoxelModel m;
    m.n = slice.n();
    for (std::size_t yy = 0; yy < slice.m0.ny(); ++yy)
        for (std::size_t xx = 0; xx < slice.m0.nx(); ++xx) {
            if (slice.m0(xx, yy) <= 0.0) continue;
            require(slice.t1(xx, yy) > 0.0 && slice.t2star(xx, yy) > 0.0,
                    "T1 and T2* must be > 0 on every voxel with m0 > 0", "t1");
            auto [amp, rate] = weight(xx, yy);
            const double phase = slice.phase_offset.empty() ? 0.0 : slice.phase_offset(xx, yy);
            amp *= coil.weights(xx, yy) * std::polar(1.0, phase);
            m.x.push_back(centered(xx, m.n));
            m.y.push_back(centered(yy, m.n));
            m.amplitude.push_back(amp);
            m.rate.push_back(rate);
        }
    return m;
}

inline double off_resonance(const SliceMaps& s, const ScanParams& p, std::size_t x, std::size_t y) {
    return p.include_delta_b ? gamma_hz_per_t * s.delta_b(x, y) : 0.0;
}

}  // namespace detail

/// GRE: M0 sin(a) (1 - E1) / (1 - cos(a) E1) e^{-t/T2*} e^{i gamma dB t}.
inline VoxelModel gre_model(const SliceMaps& s, const ScanParams& p, const SensitivityMap& coil) {
    const double alpha = p.flip_deg * pi / 180.0;
    return detail::build_model(s, coil, [&](std::size_t x, std::size_t y) {
        const double e1 = std::exp(-p.tr / s.t1(x, y));
        const double a = s.m0(x, y) * std::sin(alpha) * (1.0 - e1) / (1.0 - std::cos(alpha) * e1);
        return std::pair{cplx(a, 0.0), cplx(-1.0 / s.t2star(x, y), detail::off_resonance(s, p, x, y))};
    });
}

/// SE: M0 (1 - E1) e^{-t/T2} e^{i gamma dB t}, T2 derived from T2* and dB.
inline VoxelModel se_model(const SliceMaps& s, const ScanParams& p, const SensitivityMap& coil) {
    return detail::build_model(s, coil, [&](std::size_t x, std::size_t y) {
        const double e1 = std::exp(-p.tr / s.t1(x, y));
        const double db = p.include_delta_b ? s.delta_b(x, y) : 0.0;
        const double t2 = derive_t2(s.t2star(x, y), db, gamma_hz_per_t);
        return std::pair{cplx(s.m0(x, y) * (1.0 - e1), 0.0),
                         cplx(-1.0 / t2, detail::off_resonance(s, p, x, y))};
    });
}

/// IR: M0 (1 - 2 e^{-TI/T1} + e^{-TR/T1}) e^{i gamma dB t}; no transverse decay term.
inline VoxelModel ir_model(const SliceMaps& s, const ScanParams& p, const SensitivityMap& coil) {
    return detail::build_model(s, coil, [&](std::size_t x, std::size_t y) {
        const double t1 = s.t1(x, y);
        const double f = 1.0 - 2.0 * std::exp(-p.ti / t1) + std::exp(-p.tr / t1);
        return std::pair{cplx(s.m0(x, y) * f, 0.0), cplx(0.0, detail::off_resonance(s, p, x, y))};
    });
}

inline VoxelModel signal_model(const SliceMaps& s, const ScanParams& p, const SensitivityMap& coil) {
    switch (p.sequence) {
        case Sequence::gre: return gre_model(s, p, coil);
        case Sequence::se: return se_model(s, p, coil);
        case Sequence::ir: return ir_model(s, p, coil);
    }
    throw validation_error("unknown sequence", "sequence");
}

namespace detail {

// Per-sample x and y kernels exp(-i 2 pi k c / n) over centered c.
inline void axis_kernel(double k, std::size_t n, std::vector<double>& re, std::vector<double>& im) {
    re.resize(n);
    im.resize(n);
    const double nn = static_cast<double>(n);
    const double rk = std::round(k);
    if (k == rk) {
        // Integer frequency: reduce the phase index exactly.
        const long ln = static_cast<long>(n), ik = static_cast<long>(rk);
        for (std::size_t i = 0; i < n; ++i) {
            long m = (ik * centered(i, n)) % ln;
            if (m < 0) m += ln;
            const double a = -two_pi * static_cast<double>(m) / nn;
            re[i] = std::cos(a);
            im[i] = std::sin(a);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double a = -two_pi * k * static_cast<double>(centered(i, n)) / nn;
            re[i] = std::cos(a);
            im[i] = std::sin(a);
        }
    }
}

/**
 * Evaluates samples [lo, hi) of a time-varying model. The per-voxel factor
 * amplitude * exp(rate * t) is computed directly at the first sample and then
 * advanced by exp(rate * dt) while the sample spacing stays uniform.
 */
inline void evaluate_segment(const VoxelModel& m, const Trajectory& traj, std::size_t lo,
                             std::size_t hi, std::vector<cplx>& out) {
    const std::size_t nv = m.x.size();
    const std::size_t n = m.n;
    std::vector<double> wr(nv), wi(nv), pr(nv), pi_(nv);
    std::vector<double> exr, exi, eyr, eyi;
    std::vector<std::size_t> xi(nv);
    for (std::size_t v = 0; v < nv; ++v) xi[v] = static_cast<std::size_t>(m.x[v] + static_cast<long>(n / 2));

    auto anchor = [&](double t) {
        for (std::size_t v = 0; v < nv; ++v) {
            const cplx w = m.amplitude[v] * std::exp(m.rate[v] * t);
            wr[v] = w.real();
            wi[v] = w.imag();
        }
    };
    double step = 0.0;
    bool stepping = false;
    for (std::size_t j = lo; j < hi; ++j) {
        const auto& s = traj[j];
        const double dt = j > lo ? s.t - traj[j - 1].t : 0.0;
        if (j == lo) {
            anchor(s.t);
            stepping = false;
        } else if (!stepping || std::abs(dt - step) <= 1e-15 * std::max(1.0, s.t)) {
            if (!stepping) {
                step = dt;
                stepping = true;
                for (std::size_t v = 0; v < nv; ++v) {
                    const cplx p = std::exp(m.rate[v] * step);
                    pr[v] = p.real();
                    pi_[v] = p.imag();
                }
            }
            for (std::size_t v = 0; v < nv; ++v) {
                const double a = wr[v] * pr[v] - wi[v] * pi_[v];
                wi[v] = wr[v] * pi_[v] + wi[v] * pr[v];
                wr[v] = a;
            }
        } else {
            anchor(s.t);
            stepping = false;
        }
        axis_kernel(s.kx, n, exr, exi);
        axis_kernel(s.ky, n, eyr, eyi);
        double sr = 0.0, si = 0.0;
        std::size_t v = 0;
        while (v < nv) {
            const long row = m.y[v];
            double rr = 0.0, ri = 0.0;
            for (; v < nv && m.y[v] == row; ++v) {
                const double br = exr[xi[v]], bi = exi[xi[v]];
                rr += wr[v] * br - wi[v] * bi;
                ri += wr[v] * bi + wi[v] * br;
            }
            const std::size_t yi = static_cast<std::size_t>(row + static_cast<long>(n / 2));
            sr += rr * eyr[yi] - ri * eyi[yi];
            si += rr * eyi[yi] + ri * eyr[yi];
        }
        out[j] = cplx(sr, si);
    }
}

}  // namespace detail

/**
 * Evaluates the discretized signal equation of `model` at every trajectory
 * sample using each sample's own acquisition time (or TE for every sample when
 * `common_time` is set). Samples are processed in independent blocks of
 * grid_n, so results do not depend on the worker count.
 */
inline std::vector<cplx> evaluate_model(const VoxelModel& model, const Trajectory& traj,
                                        std::optional<double> common_time = std::nullopt) {
    std::vector<cplx> out(traj.size());
    if (common_time) {
        Grid2D<cplx> img(model.n, model.n, cplx{});
        for (std::size_t v = 0; v < model.x.size(); ++v) {
            const auto xi = static_cast<std::size_t>(model.x[v] + static_cast<long>(model.n / 2));
            const auto yi = static_cast<std::size_t>(model.y[v] + static_cast<long>(model.n / 2));
            img(xi, yi) += model.amplitude[v] * std::exp(model.rate[v] * *common_time);
        }
        if (traj.kind() == TrajectoryKind::cartesian) {
            // Fast path: one separable DFT, then pick the sampled cells.
            const auto k = dft::forward(img);
            for (std::size_t j = 0; j < traj.size(); ++j) {
                std::size_t ix = 0, iy = 0;
                const bool ok = uncentered(static_cast<long>(traj[j].kx), model.n, ix) &&
                                uncentered(static_cast<long>(traj[j].ky), model.n, iy);
                if (!ok) throw validation_error("cartesian sample outside grid", "trajectory");
                out[j] = k(ix, iy);
            }
            return out;
        }
        VoxelModel flat;
        flat.n = model.n;
        for (std::size_t yi = 0; yi < model.n; ++yi)
            for (std::size_t xi = 0; xi < model.n; ++xi)
                if (img(xi, yi) != cplx{}) {
                    flat.x.push_back(centered(xi, model.n));
                    flat.y.push_back(centered(yi, model.n));
                    flat.amplitude.push_back(img(xi, yi));
                    flat.rate.push_back(cplx{});
                }
        return evaluate_model(flat, traj);
    }
    const std::size_t block = std::max<std::size_t>(1, model.n);
    const std::size_t n_blocks = (traj.size() + block - 1) / block;
    parallel_for(n_blocks, [&](std::size_t b) {
        detail::evaluate_segment(model, traj, b * block, std::min(traj.size(), (b + 1) * block), out);
    });
    return out;
}

namespace detail {
inline KSpaceFrame run_sequence(Sequence expected, const SliceMaps& slice, const TrajectoryPtr& traj,
                                const ScanParams& params, const SensitivityMap& coil, int coil_index) {
    require(traj != nullptr, "missing trajectory", "trajectory");
    require(params.sequence == expected,
            "scan parameters select " + std::string(to_string(params.sequence)) + ", not " +
                std::string(to_string(expected)),
            "sequence");
    if (expected == Sequence::ir) require(params.ti > 0.0, "IR sequence requires ti > 0", "ti");
    check_slice_for_signal(slice, *traj, coil);
    const VoxelModel model = signal_model(slice, params, coil);
    KSpaceFrame f;
    f.trajectory = traj;
    f.coil_index = coil_index;
    f.values = evaluate_model(model, *traj,
                              params.assume_te ? std::optional<double>(params.te) : std::nullopt);
    return f;
}
}  // namespace detail

inline KSpaceFrame gre_signal(const SliceMaps& slice, const TrajectoryPtr& traj,
                              const ScanParams& params, const SensitivityMap& coil, int coil_index = 0) {
    return detail::run_sequence(Sequence::gre, slice, traj, params, coil, coil_index);
}

inline KSpaceFrame se_signal(const SliceMaps& slice, const TrajectoryPtr& traj,
                             const ScanParams& params, const SensitivityMap& coil, int coil_index = 0) {
    return detail::run_sequence(Sequence::se, slice, traj, params, coil, coil_index);
}

inline KSpaceFrame ir_signal(const SliceMaps& slice, const TrajectoryPtr& traj,
                             const ScanParams& params, const SensitivityMap& coil, int coil_index = 0) {
    return detail::run_sequence(Sequence::ir, slice, traj, params, coil, coil_index);
}

/// Dispatches on params.sequence.
inline KSpaceFrame simulate_signal(const SliceMaps& slice, const TrajectoryPtr& traj,
                                   const ScanParams& params, const SensitivityMap& coil,
                                   int coil_index = 0) {
    return detail::run_sequence(params.sequence, slice, traj, params, coil, coil_index);
}

/// Time-independent kernel: s(k) = sum_{x,y} img(x, y) exp(-i 2 pi (kx x + ky y) / n).
inline KSpaceFrame forward_dft(const Grid2D<cplx>& img, const TrajectoryPtr& traj) {
    detail::require(traj != nullptr, "missing trajectory", "trajectory");
    detail::require(img.nx() == traj->grid_n() && img.ny() == traj->grid_n(),
                    "image dimensions do not match trajectory grid_n", "grid_n");
    VoxelModel m;
    m.n = img.nx();
    for (std::size_t y = 0; y < img.ny(); ++y)
        for (std::size_t x = 0; x < img.nx(); ++x)
            if (img(x, y) != cplx{}) {
                m.x.push_back(centered(x, m.n));
                m.y.push_back(centered(y, m.n));
                m.amplitude.push_back(img(x, y));
                m.rate.push_back(cplx{});
            }
    KSpaceFrame f;
    f.trajectory = traj;
    f.values = evaluate_model(m, *traj);
    return f;
}

}  // namespace ksim
