#pragma once

#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ksim/constants.hpp"
#include "ksim/error.hpp"

namespace ksim {

enum class Sequence { gre, se, ir };
enum class TrajectoryKind { cartesian, radial, spiral };

inline std::string_view to_string(Sequence s) {
    switch (s) {
        case Sequence::gre: return "GRE";
        case Sequence::se: return "SE";
        case Sequence::ir: return "IR";
    }
    return "?";
}

inline Sequence parse_sequence(std::string_view s) {
    if (s == "GRE" || s == "gre") return Sequence::gre;
    if (s == "SE" || s == "se") return Sequence::se;
    if (s == "IR" || s == "ir") return Sequence::ir;
    throw validation_error("unknown sequence '" + std::string(s) + "' (expected GRE, SE or IR)",
                           "sequence");
}

inline std::string_view to_string(TrajectoryKind k) {
    switch (k) {
        case TrajectoryKind::cartesian: return "cartesian";
        case TrajectoryKind::radial: return "radial";
        case TrajectoryKind::spiral: return "spiral";
    }
    return "?";
}

inline TrajectoryKind parse_trajectory_kind(std::string_view s) {
    if (s == "cartesian") return TrajectoryKind::cartesian;
    if (s == "radial") return TrajectoryKind::radial;
    if (s == "spiral") return TrajectoryKind::spiral;
    throw validation_error("unknown trajectory '" + std::string(s) + "'", "trajectory");
}

/// Scanner settings. Times in seconds, field in Tesla.
struct ScanParams {
    Sequence sequence = Sequence::gre;
    double b0 = 3.0;
    double te = 0.0604;
    double tr = 1.0;
    double ti = 0.0;  ///< IR only
    double flip_deg = 90.0;
    double eesp = 0.832e-3;
    int accel = 1;
    int n_coils = 1;
    std::size_t grid_n = 96;
    bool include_delta_b = true;
    /// Evaluate every sample at t = TE instead of its acquisition time.
    bool assume_te = false;

    void validate() const {
        detail::require(b0 > 0.0, "b0 must be > 0", "b0");
        detail::require(te > 0.0, "te must be > 0", "te");
        detail::require(te < tr, "te must be shorter than tr", "te");
        detail::require(eesp > 0.0, "eesp must be > 0", "eesp");
        detail::require(flip_deg > 0.0 && flip_deg <= 180.0, "flip angle must be in (0, 180]",
                        "flip_deg");
        detail::require(accel >= 1, "accel must be >= 1", "accel");
        detail::require(n_coils >= 1, "n_coils must be >= 1", "n_coils");
        detail::require(grid_n >= 2, "grid_n must be >= 2", "grid_n");
        if (sequence == Sequence::ir) {
            detail::require(ti > 0.0, "IR sequence requires ti > 0", "ti");
            detail::require(ti < tr, "ti must be shorter than tr", "ti");
        }
    }
};

/// One k-space sample: location in cycles per field of view, acquisition time in seconds.
struct KSample {
    double kx;
    double ky;
    double t;
};

/**
 * Ordered sampling schedule. Times are non-decreasing and positive; the
 * built-in generators produce strictly increasing times.
 */
class Trajectory {
  public:
    Trajectory() = default;
    Trajectory(TrajectoryKind kind, std::size_t grid_n, int accel, std::vector<KSample> samples)
        : kind_(kind), grid_n_(grid_n), accel_(accel), samples_(std::move(samples)) {
        detail::require(!samples_.empty(), "trajectory has no samples", "trajectory");
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            detail::require(samples_[i].t > 0.0,
                            "trajectory sample times must be > 0 (is TE long enough for the readout?)",
                            "te");
            if (i > 0)
                detail::require(samples_[i].t >= samples_[i - 1].t,
                                "trajectory times must be non-decreasing", "trajectory");
        }
    }

    TrajectoryKind kind() const { return kind_; }
    std::size_t grid_n() const { return grid_n_; }
    int accel() const { return accel_; }
    const std::vector<KSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    const KSample& operator[](std::size_t i) const { return samples_[i]; }

  private:
    TrajectoryKind kind_ = TrajectoryKind::cartesian;
    std::size_t grid_n_ = 0;
    int accel_ = 1;
    std::vector<KSample> samples_;
};

namespace detail {
inline void check_trajectory_params(const ScanParams& p) {
    require(p.grid_n % 2 == 0, "grid_n must be even", "grid_n");
    require(p.accel >= 1, "accel must be >= 1", "accel");
    require(static_cast<std::size_t>(p.accel) < p.grid_n, "accel must be smaller than grid_n",
            "accel");
    require(p.eesp > 0.0, "eesp must be > 0", "eesp");
}
}  // namespace detail

/**
 * EPI-style Cartesian readout: rows (constant ky) from bottom to top in
 * alternating direction, one row per EESP with dwell EESP/grid_n. Only
 * phase-encode lines with ky divisible by accel are kept, so ky = 0 is always
 * acquired and its kx = 0 sample lands exactly at TE.
 */
inline Trajectory cartesian_trajectory(const ScanParams& p) {
    detail::check_trajectory_params(p);
    const long n = static_cast<long>(p.grid_n);
    const long a = p.accel;
    std::vector<long> rows;
    for (long ky = -n / 2; ky < n / 2; ++ky)
        if (((ky % a) + a) % a == 0) rows.push_back(ky);
    long center_row = 0;
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r] == 0) center_row = static_cast<long>(r);
    const long center_pos = center_row % 2 == 0 ? n / 2 : n / 2 - 1;
    const double dwell = p.eesp / static_cast<double>(n);

    std::vector<KSample> samples;
    samples.reserve(rows.size() * static_cast<std::size_t>(n));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const bool forward = r % 2 == 0;
        for (long j = 0; j < n; ++j) {
            const long kx = forward ? -n / 2 + j : n / 2 - 1 - j;
            const double t = p.te + static_cast<double>(static_cast<long>(r) - center_row) * p.eesp +
                             static_cast<double>(j - center_pos) * dwell;
            samples.push_back({static_cast<double>(kx), static_cast<double>(rows[r]), t});
        }
    }
    return Trajectory(TrajectoryKind::cartesian, p.grid_n, p.accel, std::move(samples));
}

/**
 * grid_n spokes over [0, pi), each with grid_n samples at integer radii
 * -grid_n/2 ... grid_n/2-1 (so every spoke hits the origin). Every accel-th
 * spoke is kept. Each spoke takes one EESP; kept spoke q crosses the origin
 * at TE + (q - n_spokes/2) * EESP with integer division.
 */
inline Trajectory radial_trajectory(const ScanParams& p) {
    detail::check_trajectory_params(p);
    const long n = static_cast<long>(p.grid_n);
    std::vector<long> spokes;
    for (long s = 0; s < n; s += p.accel) spokes.push_back(s);
    const long n_spokes = static_cast<long>(spokes.size());
    const double dwell = p.eesp / static_cast<double>(n);

    std::vector<KSample> samples;
    samples.reserve(spokes.size() * static_cast<std::size_t>(n));
    for (long q = 0; q < n_spokes; ++q) {
        const double theta = static_cast<double>(spokes[q]) * pi / static_cast<double>(n);
        const double c = std::cos(theta), s = std::sin(theta);
        const double t_center = p.te + static_cast<double>(q - n_spokes / 2) * p.eesp;
        for (long j = 0; j < n; ++j) {
            const double r = static_cast<double>(j - n / 2);
            samples.push_back({r * c, r * s, t_center + static_cast<double>(j - n / 2) * dwell});
        }
    }
    return Trajectory(TrajectoryKind::radial, p.grid_n, p.accel, std::move(samples));
}

/// Number of turns of the default spiral; accel reduces turns (and samples) proportionally.
inline double spiral_turns(std::size_t grid_n, int accel) {
    return static_cast<double>(grid_n) / 2.0 / static_cast<double>(accel);
}

/**
 * Single-shot Archimedean spiral-out r = (grid_n/2) * theta / theta_max,
 * uniform in theta, starting at the origin at t = TE with dwell EESP/grid_n.
 * grid_n^2 / accel samples over grid_n / (2 accel) turns.
 */
inline Trajectory spiral_trajectory(const ScanParams& p) {
    detail::check_trajectory_params(p);
    const std::size_t n = p.grid_n;
    const std::size_t count = n * n / static_cast<std::size_t>(p.accel);
    const double theta_max = two_pi * spiral_turns(n, p.accel);
    const double r_max = static_cast<double>(n) / 2.0;
    const double dwell = p.eesp / static_cast<double>(n);

    std::vector<KSample> samples;
    samples.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        const double frac = static_cast<double>(j) / static_cast<double>(count - 1);
        const double theta = theta_max * frac;
        const double r = r_max * frac;
        samples.push_back({r * std::cos(theta), r * std::sin(theta),
                           p.te + static_cast<double>(j) * dwell});
    }
    return Trajectory(TrajectoryKind::spiral, p.grid_n, p.accel, std::move(samples));
}

inline Trajectory make_trajectory(TrajectoryKind kind, const ScanParams& p) {
    switch (kind) {
        case TrajectoryKind::cartesian: return cartesian_trajectory(p);
        case TrajectoryKind::radial: return radial_trajectory(p);
        case TrajectoryKind::spiral: return spiral_trajectory(p);
    }
    throw validation_error("unknown trajectory kind", "trajectory");
}

/// Larmor frequency in MHz for a field in Tesla.
inline double larmor_frequency(double b0) {
    detail::require(b0 > 0.0, "b0 must be > 0", "b0");
    return gamma_mhz_per_t * b0;
}

/// CSV with header kx,ky,t; one row per sample in acquisition order.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
    os << "kx,ky,t\n";
    char line[96];
    for (const auto& s : traj.samples()) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", s.kx, s.ky, s.t);
        os << line;
    }
}

}  // namespace ksim
