#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "ksim/grid.hpp"

namespace oracle {

using cplx = std::complex<double>;
constexpr double pi = 3.14159265358979323846;

/// Direct double-loop evaluation of s(k) = sum_{x,y} img(x, y) exp(-i 2 pi (kx x + ky y) / n)
/// over centered coordinates, one sample at a time, in long double.
inline cplx dft_at(const ksim::Grid2D<cplx>& img, double kx, double ky) {
    const long nx = static_cast<long>(img.nx()), ny = static_cast<long>(img.ny());
    long double re = 0.0L, im = 0.0L;
    for (long yi = 0; yi < ny; ++yi)
        for (long xi = 0; xi < nx; ++xi) {
            const long double x = xi - nx / 2, y = yi - ny / 2;
            const long double a = -2.0L * 3.141592653589793238462643383279502884L *
                                  (kx * x / nx + ky * y / ny);
            const cplx v = img(static_cast<std::size_t>(xi), static_cast<std::size_t>(yi));
            re += v.real() * std::cos(a) - v.imag() * std::sin(a);
            im += v.real() * std::sin(a) + v.imag() * std::cos(a);
        }
    return {static_cast<double>(re), static_cast<double>(im)};
}

/// Full centered grid of dft_at.
inline ksim::Grid2D<cplx> dft_grid(const ksim::Grid2D<cplx>& img) {
    ksim::Grid2D<cplx> out(img.nx(), img.ny());
    for (std::size_t ky = 0; ky < img.ny(); ++ky)
        for (std::size_t kx = 0; kx < img.nx(); ++kx)
            out(kx, ky) = dft_at(img, static_cast<double>(static_cast<long>(kx) - static_cast<long>(img.nx() / 2)),
                                 static_cast<double>(static_cast<long>(ky) - static_cast<long>(img.ny() / 2)));
    return out;
}

inline ksim::Grid2D<cplx> random_image(std::size_t n, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ksim::Grid2D<cplx> g(n, n);
    for (auto& v : g.storage()) v = {u(gen), u(gen)};
    return g;
}

inline double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs(const std::vector<cplx>& a) {
    double m = 0.0;
    for (const auto& v : a) m = std::max(m, std::abs(v));
    return m;
}

/// Adaptive Gauss-Kronrod integral of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b) {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13, &err);
}

/// Kolmogorov-Smirnov distance between samples and a CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
    }
    return d;
}

/// Tabulated CDF of a density on [lo, hi] (trapezoid on a fine grid), for KS checks.
class TabulatedCdf {
  public:
    TabulatedCdf(const std::function<double(double)>& pdf, double lo, double hi, std::size_t n = 200000)
        : lo_(lo), hi_(hi), h_((hi - lo) / static_cast<double>(n)), cdf_(n + 1, 0.0) {
        double prev = pdf(lo);
        for (std::size_t i = 1; i <= n; ++i) {
            const double cur = pdf(lo + h_ * static_cast<double>(i));
            cdf_[i] = cdf_[i - 1] + 0.5 * h_ * (prev + cur);
            prev = cur;
        }
        for (auto& c : cdf_) c /= cdf_.back();
    }
    double operator()(double x) const {
        if (x <= lo_) return 0.0;
        if (x >= hi_) return 1.0;
        const double u = (x - lo_) / h_;
        const auto i = static_cast<std::size_t>(u);
        const double f = u - static_cast<double>(i);
        return cdf_[i] * (1.0 - f) + cdf_[std::min(i + 1, cdf_.size() - 1)] * f;
    }

  private:
    double lo_, hi_, h_;
    std::vector<double> cdf_;
};

/// Sample mean and (n - 1) variance.
inline std::pair<double, double> mean_var(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    const double m = s / static_cast<double>(v.size());
    double q = 0.0;
    for (double x : v) q += (x - m) * (x - m);
    return {m, q / static_cast<double>(v.size() - 1)};
}

}  // namespace oracle
