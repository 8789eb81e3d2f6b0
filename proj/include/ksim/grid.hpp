#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksim {

using cplx = std::complex<double>;

/**
 * Dense 2-D grid stored row-major with x fastest: element (x, y) lives at
 * index y * nx + x. Rows are y, columns are x.
 */
template <typename T>
class Grid2D {
  public:
    Grid2D() = default;
    Grid2D(std::size_t nx, std::size_t ny, T fill = T{})
        : nx_(nx), ny_(ny), data_(nx * ny, fill) {}

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t x, std::size_t y) { return data_[y * nx_ + x]; }
    const T& operator()(std::size_t x, std::size_t y) const { return data_[y * nx_ + x]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool same_shape(const Grid2D& other) const { return nx_ == other.nx_ && ny_ == other.ny_; }
    template <typename U>
    bool same_shape(const Grid2D<U>& other) const {
        return nx_ == other.nx() && ny_ == other.ny();
    }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

  private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::vector<T> data_;
};

/** Dense 3-D grid, x fastest then y then z. */
template <typename T>
class Grid3D {
  public:
    Grid3D() = default;
    Grid3D(std::size_t nx, std::size_t ny, std::size_t nz, T fill = T{})
        : nx_(nx), ny_(ny), nz_(nz), data_(nx * ny * nz, fill) {}

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t nz() const { return nz_; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return (z * ny_ + y) * nx_ + x;
    }
    T& operator()(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
    const T& operator()(std::size_t x, std::size_t y, std::size_t z) const {
        return data_[index(x, y, z)];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    template <typename U>
    bool same_shape(const Grid3D<U>& other) const {
        return nx_ == other.nx() && ny_ == other.ny() && nz_ == other.nz();
    }

    friend bool operator==(const Grid3D&, const Grid3D&) = default;

  private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::size_t nz_ = 0;
    std::vector<T> data_;
};

/// Centered integer coordinate of index i on an n-point axis: -n/2 ... n/2-1.
inline constexpr long centered(std::size_t i, std::size_t n) {
    return static_cast<long>(i) - static_cast<long>(n / 2);
}

/// Inverse of centered(); returns false when c falls outside the axis.
inline constexpr bool uncentered(long c, std::size_t n, std::size_t& i) {
    const long v = c + static_cast<long>(n / 2);
    if (v < 0 || v >= static_cast<long>(n)) return false;
    i = static_cast<std::size_t>(v);
    return true;
}

template <typename T, typename F>
auto map_grid(const Grid2D<T>& g, F&& f) {
    using R = decltype(f(g[0]));
    Grid2D<R> out(g.nx(), g.ny());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = f(g[i]);
    return out;
}

}  // namespace ksim
