#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include "ksim/constants.hpp"
#include "ksim/error.hpp"
#include "ksim/signal.hpp"

namespace ksim {

/// k-space noise: per-channel standard deviation and base seed.
struct NoiseParams {
    double sigma_k = 0.0;
    std::uint64_t seed = 0;
};

/// True magnitude rho, true phase theta and per-channel image-space std sigma.
struct RiceParams {
    double rho = 0.0;
    double theta = 0.0;
    double sigma = 1.0;
};

/// Generator behind every noise stream. Recorded in run metadata.
inline constexpr std::string_view prng_name = "mt19937_64 seeded by splitmix64(seed, frame, coil)";

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Independent substream for (seed, frame, coil); order of generation does not matter.
inline std::mt19937_64 noise_stream(std::uint64_t seed, std::uint64_t frame, std::uint64_t coil) {
    std::uint64_t s = detail::splitmix64(seed);
    s = detail::splitmix64(s ^ frame);
    s = detail::splitmix64(s ^ (coil + 0x5851F42D4C957F2DULL));
    return std::mt19937_64(s);
}

/// Adds iid N(0, sigma_k^2) to the real and imaginary part of every sample.
inline KSpaceFrame add_kspace_noise(KSpaceFrame frame, const NoiseParams& np,
                                    std::uint64_t frame_index = 0, std::uint64_t coil_index = 0) {
    detail::require(np.sigma_k >= 0.0 && std::isfinite(np.sigma_k), "sigma_k must be >= 0",
                    "sigma_k");
    if (np.sigma_k == 0.0) return frame;
    auto gen = noise_stream(np.seed, frame_index, coil_index);
    std::normal_distribution<double> normal(0.0, np.sigma_k);
    for (auto& v : frame.values) {
        const double re = normal(gen);
        const double im = normal(gen);
        v += cplx(re, im);
    }
    return frame;
}

/// Image-space per-channel variance after inverse DFT: sigma_k^2 / (nx ny).
inline double image_noise_variance(double sigma_k, std::size_t nx, std::size_t ny) {
    detail::require(nx >= 1 && ny >= 1, "image dimensions must be >= 1", "grid_n");
    return sigma_k * sigma_k / static_cast<double>(nx * ny);
}

// ---------------------------------------------------------------------------
// Special functions

/// log(exp(-z) I_nu(z)) for integer nu >= 0, z >= 0; stable for large z.
inline double log_scaled_bessel_i(int nu, double z) {
    if (z == 0.0) return nu == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (z < 1e-6 && nu > 0) {
        // Leading series term; avoids underflow of I_nu for tiny arguments.
        return nu * std::log(z / 2.0) - std::lgamma(nu + 1.0) +
               std::log1p(z * z / (4.0 * (nu + 1.0))) - z;
    }
    if (z < 500.0) {
        const double v = std::cyl_bessel_i(static_cast<double>(nu), z);
        if (v > 0.0 && std::isfinite(v)) return std::log(v) - z;
    }
    // Hankel asymptotic series for I_0 and I_1, then forward recurrence,
    // which is accurate while z is large compared with nu^2.
    auto asym = [z](double mu) {
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < 30; ++k) {
            term *= -(mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * z);
            sum += term;
            if (std::abs(term) < 1e-17 * std::abs(sum)) break;
        }
        return sum / std::sqrt(two_pi * z);
    };
    double i_prev = asym(0.0);  // e^{-z} I_0(z)
    if (nu == 0) return std::log(i_prev);
    double i_cur = asym(4.0);  // e^{-z} I_1(z)
    for (int k = 1; k < nu; ++k) {
        const double next = i_prev - (2.0 * k / z) * i_cur;
        i_prev = i_cur;
        i_cur = next;
    }
    return std::log(i_cur);
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(two_pi));
}

/**
 * Laguerre function L_{1/2}(x) for x <= 0 through
 * L_{1/2}(x) = e^{x/2} [(1 - x) I_0(-x/2) - x I_1(-x/2)].
 */
inline double laguerre_half(double x) {
    detail::require(x <= 0.0, "laguerre_half is evaluated for x <= 0 only", "x");
    const double z = -x / 2.0;
    const double i0 = std::exp(log_scaled_bessel_i(0, z));
    const double i1 = std::exp(log_scaled_bessel_i(1, z));
    return (1.0 - x) * i0 - x * i1;
}

// ---------------------------------------------------------------------------
// Magnitude and phase distributions of complex Gaussian data

/// Ricean magnitude density (r / s^2) exp(-(r^2 + rho^2) / 2 s^2) I_0(r rho / s^2).
inline double rician_pdf(double r, const RiceParams& p) {
    if (r < 0.0) return 0.0;
    const double s2 = p.sigma * p.sigma;
    if (r == 0.0) return 0.0;
    const double z = r * p.rho / s2;
    // exp(-(r^2 + rho^2)/2s^2) I_0(z) = exp(-(r - rho)^2 / 2s^2) * e^{-z} I_0(z)
    const double d = r - p.rho;
    return r / s2 * std::exp(-d * d / (2.0 * s2) + log_scaled_bessel_i(0, z));
}

struct Moments {
    double mean;
    double variance;
};

/**
 * Mean sigma sqrt(pi/2) L_{1/2}(-rho^2 / 2 sigma^2) and variance
 * 2 sigma^2 + rho^2 - (pi sigma^2 / 2) L_{1/2}^2. Beyond rho/sigma = 1e3 the
 * closed form cancels badly and the leading high-SNR expansion is used.
 */
inline Moments rician_moments(const RiceParams& p) {
    detail::require(p.sigma > 0.0, "sigma must be > 0", "sigma");
    const double s2 = p.sigma * p.sigma;
    const double a = p.rho / p.sigma;
    if (a > 1e3) {
        const double var = s2 * (1.0 - 0.5 / (a * a));
        return {std::sqrt(p.rho * p.rho + 2.0 * s2 - var), var};
    }
    const double l = laguerre_half(-p.rho * p.rho / (2.0 * s2));
    const double mean = p.sigma * std::sqrt(pi / 2.0) * l;
    const double var = 2.0 * s2 + p.rho * p.rho - pi * s2 / 2.0 * l * l;
    return {mean, var};
}

inline double rician_std(double rho, double sigma) {
    return std::sqrt(rician_moments({rho, 0.0, sigma}).variance);
}

/// Wraps an angle into [-pi, pi).
inline double wrap_phase(double a) {
    a = std::fmod(a + pi, two_pi);
    if (a < 0.0) a += two_pi;
    return a - pi;
}

/// Phase density of a complex Gaussian voxel with true magnitude rho and phase theta.
inline double phase_pdf(double phi, const RiceParams& p) {
    const double d = wrap_phase(phi - p.theta);
    const double a = p.rho / p.sigma;
    const double c = std::cos(d);
    const double s = std::sin(d);
    // exp(-a^2/2) exp(a^2 c^2 / 2) = exp(-a^2 s^2 / 2)
    return (std::exp(-a * a / 2.0) +
            a * std::sqrt(two_pi) * c * std::exp(-a * a * s * s / 2.0) * normal_cdf(a * c)) /
           two_pi;
}

/**
 * Density of the root-sum-of-squares magnitude over C coils:
 * (rho/s^2) (m/rho)^C exp(-(rho^2 + m^2) / 2 s^2) I_{C-1}(m rho / s^2),
 * with the central chi limit when rho = 0.
 */
inline double noncentral_chi_pdf(double m, double rho_c, double sigma, int n_coils) {
    detail::require(n_coils >= 1, "n_coils must be >= 1", "n_coils");
    detail::require(sigma > 0.0, "sigma must be > 0", "sigma");
    if (m <= 0.0) return 0.0;
    const double s2 = sigma * sigma;
    const double c = static_cast<double>(n_coils);
    if (rho_c <= 0.0) {
        const double log_f = (2.0 * c - 1.0) * std::log(m) - m * m / (2.0 * s2) - c * std::log(s2) -
                             (c - 1.0) * std::log(2.0) - std::lgamma(c);
        return std::exp(log_f);
    }
    const double z = m * rho_c / s2;
    const double d = m - rho_c;
    const double log_f = std::log(rho_c / s2) + c * std::log(m / rho_c) - d * d / (2.0 * s2) +
                         log_scaled_bessel_i(n_coils - 1, z);
    return std::exp(log_f);
}

// ---------------------------------------------------------------------------

/// Result of mapping (SNR, CNR) onto noise level and linear-model coefficients.
struct Calibration {
    double sigma_k = 0.0;  ///< k-space per-channel std
    double sigma = 0.0;    ///< image-space per-channel std
    double sigma_r = 0.0;  ///< Ricean std at rho = beta0
    double beta0 = 0.0;
    double beta1 = 0.0;
};

/**
 * beta0 = baseline_rho, target sigma_r = beta0 / snr. The image-space sigma
 * is found by bisection on the Ricean std (monotone in sigma) over
 * [beta0 / (10 snr), 10 beta0 / snr]; beta1 = cnr * sigma_r and
 * sigma_k = sigma sqrt(nx ny).
 */
inline Calibration calibrate(double snr, double cnr, double baseline_rho, std::size_t nx,
                             std::size_t ny) {
    detail::require(snr > 0.0, "snr must be > 0", "snr");
    detail::require(cnr >= 0.0, "cnr must be >= 0", "cnr");
    detail::require(baseline_rho > 0.0 && std::isfinite(baseline_rho), "baseline_rho must be > 0",
                    "baseline_rho");
    detail::require(nx >= 1 && ny >= 1, "image dimensions must be >= 1", "grid_n");
    Calibration c;
    c.beta0 = baseline_rho;
    if (std::isinf(snr)) return c;

    const double target = baseline_rho / snr;
    auto f = [&](double sigma) { return rician_std(baseline_rho, sigma) - target; };
    double lo = baseline_rho / (10.0 * snr);
    double hi = 10.0 * baseline_rho / snr;
    double flo = f(lo), fhi = f(hi);
    if (!(flo <= 0.0 && fhi >= 0.0))
        throw validation_error("noise calibration has no root for snr = " + std::to_string(snr), "snr");
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) <= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    c.sigma = 0.5 * (lo + hi);
    c.sigma_r = rician_std(baseline_rho, c.sigma);
    c.beta1 = cnr * c.sigma_r;
    c.sigma_k = c.sigma * std::sqrt(static_cast<double>(nx * ny));
    return c;
}

}  // namespace ksim
