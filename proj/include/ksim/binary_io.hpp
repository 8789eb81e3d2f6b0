#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "ksim/error.hpp"

// Little-endian primitives shared by the phantom and series file formats.
namespace ksim::binary {

template <typename T>
T to_le(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        return std::bit_cast<T>(bytes);
    } else {
        return v;
    }
}

template <typename T>
void put(std::ostream& os, T v) {
    v = to_le(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw format_error(std::string("truncated file while reading ") + what);
    return to_le(v);
}

inline void put_doubles(std::ostream& os, std::span<const double> values) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (double v : values) put(os, v);
    }
}

inline void get_doubles(std::istream& is, std::span<double> out, const char* what) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes())))
        throw format_error(std::string("truncated file while reading ") + what);
    if constexpr (std::endian::native == std::endian::big) {
        for (double& v : out) v = to_le(v);
    }
}

}  // namespace ksim::binary
