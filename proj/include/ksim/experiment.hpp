#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "ksim/noise.hpp"
#include "ksim/parallel.hpp"
#include "ksim/phantom.hpp"
#include "ksim/recon.hpp"
#include "ksim/signal.hpp"
#include "ksim/trajectory.hpp"

namespace ksim {

/// Block design: initial rest frames, then epochs of task frames followed by rest frames.
struct TaskDesign {
    std::size_t n_initial_rest = 16;
    std::size_t n_epochs = 19;
    std::size_t n_task_per_epoch = 16;
    std::size_t n_rest_per_epoch = 16;

    std::size_t total() const {
        return n_initial_rest + n_epochs * (n_task_per_epoch + n_rest_per_epoch);
    }
};

struct DesignVector {
    std::vector<std::uint8_t> x;
    std::size_t n_initial_rest = 0;

    std::size_t size() const { return x.size(); }
    std::size_t task_count() const {
        std::size_t n = 0;
        for (auto v : x) n += v;
        return n;
    }
};

inline DesignVector build_design(const TaskDesign& d) {
    detail::require(d.total() >= 1, "task design has zero frames", "design");
    DesignVector v;
    v.n_initial_rest = d.n_initial_rest;
    v.x.assign(d.n_initial_rest, 0);
    for (std::size_t e = 0; e < d.n_epochs; ++e) {
        v.x.insert(v.x.end(), d.n_task_per_epoch, 1);
        v.x.insert(v.x.end(), d.n_rest_per_epoch, 0);
    }
    return v;
}

struct ActivationSpec {
    double snr = 5.0;
    double cnr = 0.5;
    double trpc_deg = 0.0;

    void validate() const {
        detail::require(snr > 0.0, "snr must be > 0", "snr");
        detail::require(cnr >= 0.0 && std::isfinite(cnr), "cnr must be >= 0", "cnr");
        detail::require(trpc_deg >= -180.0 && trpc_deg <= 180.0, "trpc_deg must be in [-180, 180]",
                        "trpc_deg");
    }
};

/**
 * Task-state slice. When x_t = 1, active voxels get m0 scaled by
 * (beta0 + beta1) / beta0 and an extra phase of trpc degrees; otherwise the
 * slice is returned unchanged.
 */
inline SliceMaps apply_activation(SliceMaps slice, const ActivationSpec& spec, double beta0,
                                  double beta1, bool x_t, std::vector<std::string>* warnings = nullptr) {
    if (!x_t) return slice;
    detail::require(beta0 > 0.0, "beta0 must be > 0", "beta0");
    std::size_t active = 0;
    for (auto a : slice.act_map.storage()) active += a;
    if (active == 0) {
        if ((spec.cnr > 0.0 || spec.trpc_deg != 0.0) && warnings)
            warnings->push_back("activation requested but the slice has no active voxels");
        return slice;
    }
    const double gain = (beta0 + beta1) / beta0;
    const double phase = spec.trpc_deg * pi / 180.0;
    if (slice.phase_offset.empty()) slice.phase_offset = Grid2D<double>(slice.n(), slice.n(), 0.0);
    for (std::size_t i = 0; i < slice.m0.size(); ++i) {
        if (!slice.act_map[i]) continue;
        slice.m0[i] *= gain;
        slice.phase_offset[i] += phase;
    }
    return slice;
}

/// Which voxels define beta0 during calibration.
enum class BaselineMode { active, brain };

struct SimulationOptions {
    BaselineMode baseline = BaselineMode::active;
    bool add_noise = true;
};

/// Frames indexed [t * n_coils + coil], t 0-based.
struct KSpaceSeries {
    TrajectoryPtr trajectory;
    std::size_t n_frames = 0;
    int n_coils = 1;
    std::vector<KSpaceFrame> frames;

    const KSpaceFrame& at(std::size_t t, int coil) const {
        return frames[t * static_cast<std::size_t>(n_coils) + static_cast<std::size_t>(coil)];
    }
};

/// Reconstruction used for calibration and analysis when none is configured.
inline ReconKind natural_recon(TrajectoryKind k) {
    return k == TrajectoryKind::cartesian ? ReconKind::cartesian_idft : ReconKind::gridding;
}

/**
 * Holds everything that is constant across a time series: coil maps, the
 * noiseless rest and task frames per coil, and the noise calibration.
 * Individual noisy frames are produced on demand from independent noise
 * substreams keyed by (seed, frame, coil), so frames can be generated in any
 * order or in parallel with identical results.
 */
class SeriesSimulator {
  public:
    SeriesSimulator(SliceMaps slice, TrajectoryPtr traj, ScanParams params, DesignVector design,
                    ActivationSpec spec, std::uint64_t seed, SimulationOptions opts = {})
        : slice_(std::move(slice)),
          traj_(std::move(traj)),
          params_(std::move(params)),
          design_(std::move(design)),
          spec_(spec),
          seed_(seed),
          opts_(opts) {
        detail::require(traj_ != nullptr, "missing trajectory", "trajectory");
        params_.validate();
        spec_.validate();
        detail::require(design_.size() >= 1, "task design has zero frames", "design");
        coils_ = coil_sensitivities(params_.n_coils, slice_.n());

        const auto n_coils = static_cast<std::size_t>(params_.n_coils);
        rest_.resize(n_coils);
        parallel_for(n_coils, [&](std::size_t c) {
            rest_[c] = simulate_signal(slice_, traj_, params_, coils_[c], static_cast<int>(c));
        });

        // Baseline: mean noiseless reconstructed (RSS) magnitude over the chosen voxels.
        const ReconKind recon = natural_recon(traj_->kind());
        for (const auto& f : rest_) reference_.push_back(reconstruct(f, recon));
        const Grid2D<double> mag = combine_coils_rss(reference_);
        baseline_rho_ = mean_over(mag, opts_.baseline);
        calibration_ = calibrate(spec_.snr, spec_.cnr, baseline_rho_, slice_.n(), slice_.n());

        const bool any_task = design_.task_count() > 0;
        if (any_task) {
            task_slice_ = apply_activation(slice_, spec_, calibration_.beta0, calibration_.beta1, true,
                                           &warnings_);
            task_.resize(n_coils);
            parallel_for(n_coils, [&](std::size_t c) {
                task_[c] = simulate_signal(task_slice_, traj_, params_, coils_[c], static_cast<int>(c));
            });
        }
    }

    std::size_t n_frames() const { return design_.size(); }
    int n_coils() const { return params_.n_coils; }
    const TrajectoryPtr& trajectory() const { return traj_; }
    const ScanParams& params() const { return params_; }
    const DesignVector& design() const { return design_; }
    const ActivationSpec& spec() const { return spec_; }
    const SliceMaps& slice() const { return slice_; }
    const std::vector<SensitivityMap>& coils() const { return coils_; }
    const Calibration& calibration() const { return calibration_; }
    double baseline_rho() const { return baseline_rho_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    /// Noiseless rest-state reconstruction per coil.
    const std::vector<ImageFrame>& reference_images() const { return reference_; }

    const KSpaceFrame& noiseless(bool task, int coil) const {
        const auto c = static_cast<std::size_t>(coil);
        return task && !task_.empty() ? task_[c] : rest_[c];
    }

    /// Noisy frame t (0-based) for one coil.
    KSpaceFrame frame(std::size_t t, int coil) const {
        detail::require(t < n_frames(), "frame index out of range", "frame");
        detail::require(coil >= 0 && coil < n_coils(), "coil index out of range", "coil");
        KSpaceFrame f = noiseless(design_.x[t] != 0, coil);
        if (!opts_.add_noise) return f;
        return add_kspace_noise(std::move(f), {calibration_.sigma_k, seed_}, t,
                                static_cast<std::uint64_t>(coil));
    }

  private:
    double mean_over(const Grid2D<double>& mag, BaselineMode mode) {
        double sum = 0.0;
        std::size_t n = 0;
        if (mode == BaselineMode::active) {
            for (std::size_t i = 0; i < mag.size(); ++i)
                if (slice_.act_map[i]) {
                    sum += mag[i];
                    ++n;
                }
            if (n == 0) {
                warnings_.push_back("no active voxels in slice; baseline uses the whole-brain mean");
                mode = BaselineMode::brain;
            }
        }
        if (mode == BaselineMode::brain) {
            for (std::size_t i = 0; i < mag.size(); ++i)
                if (slice_.m0[i] > 0.0) {
                    sum += mag[i];
                    ++n;
                }
        }
        detail::require(n > 0 && sum > 0.0, "slice contains no tissue signal to calibrate against",
                        "slice");
        return sum / static_cast<double>(n);
    }

    SliceMaps slice_;
    SliceMaps task_slice_;
    TrajectoryPtr traj_;
    ScanParams params_;
    DesignVector design_;
    ActivationSpec spec_;
    std::uint64_t seed_;
    SimulationOptions opts_;
    std::vector<SensitivityMap> coils_;
    std::vector<KSpaceFrame> rest_;
    std::vector<KSpaceFrame> task_;
    std::vector<ImageFrame> reference_;
    double baseline_rho_ = 0.0;
    Calibration calibration_;
    std::vector<std::string> warnings_;
};

/// Materializes every frame of the series for every coil.
inline KSpaceSeries simulate_time_series(const SeriesSimulator& sim) {
    KSpaceSeries s;
    s.trajectory = sim.trajectory();
    s.n_frames = sim.n_frames();
    s.n_coils = sim.n_coils();
    s.frames.resize(s.n_frames * static_cast<std::size_t>(s.n_coils));
    parallel_for(s.frames.size(), [&](std::size_t i) {
        s.frames[i] = sim.frame(i / static_cast<std::size_t>(s.n_coils),
                                static_cast<int>(i % static_cast<std::size_t>(s.n_coils)));
    });
    return s;
}

inline KSpaceSeries simulate_time_series(const SliceMaps& slice, TrajectoryPtr traj,
                                         const ScanParams& params, const DesignVector& design,
                                         const ActivationSpec& spec, std::uint64_t seed,
                                         SimulationOptions opts = {}) {
    return simulate_time_series(SeriesSimulator(slice, std::move(traj), params, design, spec, seed, opts));
}

// ---------------------------------------------------------------------------
// Run summary

/// Everything the one-paragraph run summary mentions.
struct RunDescription {
    std::string timestamp;  ///< ISO 8601, e.g. 2024-11-11T17:07:23
    std::size_t slice_index = 48;
    std::size_t phantom_size = 96;
    Plane plane = Plane::axial;
    ScanParams scan;
    TrajectoryKind trajectory = TrajectoryKind::cartesian;
    TaskDesign design;
    ActivationSpec activation;
    ReconKind recon = ReconKind::cartesian_idft;
};

namespace detail {
inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string human_date(const std::string& iso, std::string& clock) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    static const char* months[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) == 6 && mo >= 1 &&
        mo <= 12) {
        char date[32], tm[16];
        std::snprintf(date, sizeof date, "%02d-%s-%04d", d, months[mo - 1], y);
        std::snprintf(tm, sizeof tm, "%02d:%02d:%02d", h, mi, s);
        clock = tm;
        return date;
    }
    clock = "unknown time";
    return iso.empty() ? "an unknown date" : iso;
}

inline std::string sequence_label(Sequence s) {
    switch (s) {
        case Sequence::gre: return "GradientEcho";
        case Sequence::se: return "SpinEcho";
        case Sequence::ir: return "InversionRecovery";
    }
    return "?";
}

inline std::string trajectory_label(TrajectoryKind k) {
    switch (k) {
        case TrajectoryKind::cartesian: return "Cartesian";
        case TrajectoryKind::radial: return "Radial";
        case TrajectoryKind::spiral: return "Spiral";
    }
    return "?";
}

inline std::string plane_label(Plane p) {
    switch (p) {
        case Plane::axial: return "Axial";
        case Plane::sagittal: return "Sagittal";
        case Plane::coronal: return "Coronal";
    }
    return "?";
}
}  // namespace detail

/// One paragraph naming every run setting, in a fixed order.
inline std::string summarize_run(const RunDescription& r) {
    using detail::num;
    std::string clock;
    const std::string date = detail::human_date(r.timestamp, clock);
    std::string s;
    s += "The following fMRI time series data was simulated on " + date + " at " + clock + ". ";
    s += "The simulated time series is of slice " + std::to_string(r.slice_index) + " from a size " +
         std::to_string(r.phantom_size) + " phantom in the " + detail::plane_label(r.plane) + " plane. ";
    s += "The MRI parameters were set to be the following: Acceleration Factor = " +
         std::to_string(r.scan.accel) + ", Field Strength = " + num(r.scan.b0) +
         "T, TE = " + num(r.scan.te * 1e3) + "ms, TR = " + num(r.scan.tr * 1e3) +
         "ms, Flip Angle = " + num(r.scan.flip_deg) + "deg, EESP = " + num(r.scan.eesp * 1e3) +
         "ms, and Number of Coils = " + std::to_string(r.scan.n_coils) + ". ";
    if (r.scan.sequence == Sequence::ir) {
        s += "The inversion time was TI = " + num(r.scan.ti * 1e3) + "ms. ";
    }
    s += "The data was simulated with the " + detail::sequence_label(r.scan.sequence) +
         " signal equation using the " + detail::trajectory_label(r.trajectory) +
         " k-space trajectory. ";
    s += "The experimental design involved an initial " + std::to_string(r.design.n_initial_rest) +
         " rest images followed by " + std::to_string(r.design.n_epochs) +
         " epochs, each consisting of " + std::to_string(r.design.n_task_per_epoch) +
         " task images followed by " + std::to_string(r.design.n_rest_per_epoch) +
         " rest images for a total of " + std::to_string(r.design.total()) + " images. ";
    s += "The SNR was set to " + num(r.activation.snr) + " and the CNR was set to " +
         num(r.activation.cnr) + ". ";
    s += "There were " + num(r.activation.trpc_deg) + " degrees of phase added to the activation. ";
    switch (r.recon) {
        case ReconKind::cartesian_idft:
            s += "Images were reconstructed using the CartesianIDFT algorithm.";
            break;
        case ReconKind::gridding:
            s += "Images were reconstructed using the Gridding algorithm.";
            break;
        case ReconKind::none: s += "Images were not reconstructed."; break;
    }
    return s;
}

}  // namespace ksim
