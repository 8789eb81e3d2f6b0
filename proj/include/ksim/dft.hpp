#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ksim/constants.hpp"
#include "ksim/error.hpp"
#include "ksim/grid.hpp"

// Separable 2-D DFT on centered integer grids. Coordinates and frequencies
// both run over -n/2 ... n/2-1. The forward transform carries no prefactor;
// the inverse carries 1/(nx*ny), so inverse(forward(img)) == img.
namespace ksim::dft {

namespace detail {

/// table[(k * x) mod n] = exp(sign * i 2 pi m / n)
inline std::vector<cplx> roots(std::size_t n, int sign) {
    std::vector<cplx> r(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = sign * two_pi * static_cast<double>(m) / static_cast<double>(n);
        r[m] = {std::cos(a), std::sin(a)};
    }
    return r;
}

/// Dense kernel K[k][x] over the given output and input index lists.
inline std::vector<cplx> kernel(std::size_t n, int sign, const std::vector<long>& outs,
                                const std::vector<long>& ins) {
    const auto r = roots(n, sign);
    const long ln = static_cast<long>(n);
    std::vector<cplx> k(outs.size() * ins.size());
    for (std::size_t o = 0; o < outs.size(); ++o)
        for (std::size_t i = 0; i < ins.size(); ++i) {
            long m = (outs[o] * ins[i]) % ln;
            if (m < 0) m += ln;
            k[o * ins.size() + i] = r[static_cast<std::size_t>(m)];
        }
    return k;
}

inline std::vector<long> centered_range(std::size_t n) {
    std::vector<long> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = centered(i, n);
    return v;
}

/**
 * out(o_x, o_y) = scale * sum_{x,y} in(x, y) Kx[o_x][x] Ky[o_y][y]
 * Complex products written out on doubles; std::complex multiplication adds
 * NaN recovery branches that defeat vectorization.
 */
inline Grid2D<cplx> separable(const Grid2D<cplx>& in, const std::vector<cplx>& kx,
                              std::size_t out_nx, const std::vector<cplx>& ky, std::size_t out_ny,
                              double scale) {
    const std::size_t nx = in.nx(), ny = in.ny();
    // Pass 1: transform along x for every input row.
    std::vector<double> tre(out_nx * ny), tim(out_nx * ny);
    for (std::size_t y = 0; y < ny; ++y) {
        const cplx* row = &in(0, y);
        for (std::size_t o = 0; o < out_nx; ++o) {
            const cplx* kr = &kx[o * nx];
            double sr = 0.0, si = 0.0;
            for (std::size_t x = 0; x < nx; ++x) {
                const double ar = row[x].real(), ai = row[x].imag();
                const double br = kr[x].real(), bi = kr[x].imag();
                sr += ar * br - ai * bi;
                si += ar * bi + ai * br;
            }
            tre[y * out_nx + o] = sr;
            tim[y * out_nx + o] = si;
        }
    }
    // Pass 2: along y.
    Grid2D<cplx> out(out_nx, out_ny);
    std::vector<double> ar(out_nx), ai(out_nx);
    for (std::size_t o = 0; o < out_ny; ++o) {
        std::fill(ar.begin(), ar.end(), 0.0);
        std::fill(ai.begin(), ai.end(), 0.0);
        const cplx* kr = &ky[o * ny];
        for (std::size_t y = 0; y < ny; ++y) {
            const double br = kr[y].real(), bi = kr[y].imag();
            const double* rr = &tre[y * out_nx];
            const double* ri = &tim[y * out_nx];
            for (std::size_t x = 0; x < out_nx; ++x) {
                ar[x] += rr[x] * br - ri[x] * bi;
                ai[x] += rr[x] * bi + ri[x] * br;
            }
        }
        for (std::size_t x = 0; x < out_nx; ++x) out(x, o) = cplx(ar[x] * scale, ai[x] * scale);
    }
    return out;
}

}  // namespace detail

/// K(kx, ky) = sum_{x,y} img(x, y) exp(-i 2 pi (kx x / nx + ky y / ny)).
inline Grid2D<cplx> forward(const Grid2D<cplx>& img) {
    const auto xs = detail::centered_range(img.nx());
    const auto ys = detail::centered_range(img.ny());
    return detail::separable(img, detail::kernel(img.nx(), -1, xs, xs), img.nx(),
                             detail::kernel(img.ny(), -1, ys, ys), img.ny(), 1.0);
}

/// img(x, y) = 1/(nx ny) sum_{kx,ky} K(kx, ky) exp(+i 2 pi (kx x / nx + ky y / ny)).
inline Grid2D<cplx> inverse(const Grid2D<cplx>& k) {
    const auto xs = detail::centered_range(k.nx());
    const auto ys = detail::centered_range(k.ny());
    const double scale = 1.0 / static_cast<double>(k.nx() * k.ny());
    return detail::separable(k, detail::kernel(k.nx(), +1, xs, xs), k.nx(),
                             detail::kernel(k.ny(), +1, ys, ys), k.ny(), scale);
}

/// Inverse transform evaluated only on the w x h voxel block starting at (x0, y0).
inline Grid2D<cplx> inverse_roi(const Grid2D<cplx>& k, std::size_t x0, std::size_t y0,
                                std::size_t w, std::size_t h) {
    ksim::detail::require(x0 + w <= k.nx() && y0 + h <= k.ny(), "ROI outside grid", "roi");
    const auto kxs = detail::centered_range(k.nx());
    const auto kys = detail::centered_range(k.ny());
    std::vector<long> xs(w), ys(h);
    for (std::size_t i = 0; i < w; ++i) xs[i] = centered(x0 + i, k.nx());
    for (std::size_t i = 0; i < h; ++i) ys[i] = centered(y0 + i, k.ny());
    const double scale = 1.0 / static_cast<double>(k.nx() * k.ny());
    return detail::separable(k, detail::kernel(k.nx(), +1, xs, kxs), w,
                             detail::kernel(k.ny(), +1, ys, kys), h, scale);
}

}  // namespace ksim::dft
