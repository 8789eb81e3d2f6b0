#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "ksim/binary_io.hpp"
#include "ksim/error.hpp"
#include "ksim/recon.hpp"
#include "ksim/signal.hpp"
#include "ksim/trajectory.hpp"

// Series archive layout (little endian):
//   "SHKTS1" u16 major u16 minor
//   u64 metadata length, metadata JSON bytes, u32 crc32(metadata)
//   header: u32 n_frames, u32 n_coils, u64 n_samples, u32 grid_n, u32 trajectory kind,
//           u32 accel, u32 has_images; trajectory samples (kx, ky, t) as float64;
//           u32 crc32(header + samples)
//   frame blocks in (t, coil) order, each: u32 t, u32 coil, k-space (re, im) float64 x n_samples,
//           image (re, im) float64 x grid_n^2 when has_images, u32 crc32(block)
namespace ksim {

inline constexpr std::string_view archive_magic = "SHKTS1";
inline constexpr std::uint16_t archive_major = 1;
inline constexpr std::uint16_t archive_minor = 0;

/// Whole series in memory. Frames indexed [t * n_coils + coil].
struct SeriesArchive {
    nlohmann::json metadata;
    TrajectoryPtr trajectory;
    std::size_t n_frames = 0;
    int n_coils = 1;
    std::vector<KSpaceFrame> kspace;
    std::vector<ImageFrame> images;  ///< empty when not reconstructed

    std::string summary() const { return metadata.value("summary", std::string{}); }
};

namespace detail {

inline std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline void put_complex(std::ostream& os, const cplx* v, std::size_t n) {
    binary::put_doubles(os, std::span<const double>(reinterpret_cast<const double*>(v), 2 * n));
}

inline std::uint32_t kind_code(TrajectoryKind k) { return static_cast<std::uint32_t>(k); }

inline TrajectoryKind kind_from_code(std::uint32_t c) {
    if (c > 2) throw format_error("archive names an unknown trajectory kind");
    return static_cast<TrajectoryKind>(c);
}

}  // namespace detail

/// Writes a series one frame at a time; frames must arrive in (t, coil) order.
class ArchiveWriter {
  public:
    ArchiveWriter(const std::filesystem::path& path, const nlohmann::json& metadata, TrajectoryPtr traj,
                  std::size_t n_frames, int n_coils, bool with_images)
        : traj_(std::move(traj)), n_frames_(n_frames), n_coils_(n_coils), with_images_(with_images) {
        detail::require(traj_ != nullptr, "missing trajectory", "trajectory");
        detail::require(n_coils >= 1, "n_coils must be >= 1", "n_coils");
        os_.open(path, std::ios::binary | std::ios::trunc);
        if (!os_) throw std::runtime_error("cannot open " + path.string() + " for writing");
        os_.write(archive_magic.data(), static_cast<std::streamsize>(archive_magic.size()));
        binary::put<std::uint16_t>(os_, archive_major);
        binary::put<std::uint16_t>(os_, archive_minor);
        const std::string meta = metadata.dump();
        binary::put<std::uint64_t>(os_, meta.size());
        os_.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        binary::put<std::uint32_t>(os_, detail::crc_of(meta));

        std::ostringstream h;
        binary::put<std::uint32_t>(h, static_cast<std::uint32_t>(n_frames));
        binary::put<std::uint32_t>(h, static_cast<std::uint32_t>(n_coils));
        binary::put<std::uint64_t>(h, traj_->size());
        binary::put<std::uint32_t>(h, static_cast<std::uint32_t>(traj_->grid_n()));
        binary::put<std::uint32_t>(h, detail::kind_code(traj_->kind()));
        binary::put<std::uint32_t>(h, static_cast<std::uint32_t>(traj_->accel()));
        binary::put<std::uint32_t>(h, with_images ? 1u : 0u);
        for (const auto& s : traj_->samples()) {
            binary::put(h, s.kx);
            binary::put(h, s.ky);
            binary::put(h, s.t);
        }
        const std::string hb = h.str();
        os_.write(hb.data(), static_cast<std::streamsize>(hb.size()));
        binary::put<std::uint32_t>(os_, detail::crc_of(hb));
        os_.flush();
    }

    void write(const KSpaceFrame& k, const ImageFrame* image = nullptr) {
        const std::size_t t = written_ / static_cast<std::size_t>(n_coils_);
        const int c = static_cast<int>(written_ % static_cast<std::size_t>(n_coils_));
        detail::require(t < n_frames_, "archive already holds every frame", "frame");
        detail::require(k.values.size() == traj_->size(), "frame length does not match trajectory",
                        "trajectory");
        detail::require(with_images_ == (image != nullptr),
                        with_images_ ? "archive expects an image with every frame"
                                     : "archive was opened without images",
                        "images");
        std::ostringstream b;
        binary::put<std::uint32_t>(b, static_cast<std::uint32_t>(t));
        binary::put<std::uint32_t>(b, static_cast<std::uint32_t>(c));
        detail::put_complex(b, k.values.data(), k.values.size());
        if (image) {
            const std::size_t n = traj_->grid_n();
            detail::require(image->data.nx() == n && image->data.ny() == n,
                            "image dimensions do not match grid_n", "grid_n");
            detail::put_complex(b, image->data.storage().data(), image->data.size());
        }
        const std::string bytes = b.str();
        os_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        binary::put<std::uint32_t>(os_, detail::crc_of(bytes));
        os_.flush();
        if (!os_) throw std::runtime_error("failed writing archive frame " + std::to_string(t));
        ++written_;
    }

    std::size_t frames_written() const { return written_ / static_cast<std::size_t>(n_coils_); }

    void finish() {
        detail::require(written_ == n_frames_ * static_cast<std::size_t>(n_coils_),
                        "archive closed before every frame was written", "frame");
        os_.close();
        if (os_.fail()) throw std::runtime_error("failed closing archive");
    }

  private:
    std::ofstream os_;
    TrajectoryPtr traj_;
    std::size_t n_frames_;
    int n_coils_;
    bool with_images_;
    std::size_t written_ = 0;
};

struct ArchiveFrame {
    KSpaceFrame kspace;
    std::optional<ImageFrame> image;
};

/**
 * Random-access reader. In strict mode the file must hold every frame; with
 * allow_partial a series still being written can be read up to the frames
 * present on disk.
 */
class ArchiveReader {
  public:
    explicit ArchiveReader(const std::filesystem::path& path, bool allow_partial = false)
        : path_(path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot open " + path.string());
        char magic[6];
        if (!is.read(magic, 6) || std::string_view(magic, 6) != archive_magic)
            throw format_error("not a series archive: bad magic");
        const auto major = binary::get<std::uint16_t>(is, "archive version");
        const auto minor = binary::get<std::uint16_t>(is, "archive version");
        if (major != archive_major)
            throw format_error("unsupported archive version " + std::to_string(major) + "." +
                               std::to_string(minor) + " (this build reads " +
                               std::to_string(archive_major) + ".x)");
        const auto meta_len = binary::get<std::uint64_t>(is, "metadata length");
        if (meta_len > (1u << 30)) throw format_error("implausible metadata length");
        std::string meta(meta_len, '\0');
        if (!is.read(meta.data(), static_cast<std::streamsize>(meta_len)))
            throw format_error("truncated file while reading metadata");
        if (binary::get<std::uint32_t>(is, "metadata checksum") != detail::crc_of(meta))
            throw format_error("checksum mismatch in archive metadata");
        try {
            metadata_ = nlohmann::json::parse(meta);
        } catch (const nlohmann::json::exception& e) {
            throw format_error(std::string("archive metadata is not valid JSON: ") + e.what());
        }

        std::string hb(4 + 4 + 8 + 4 * 4, '\0');
        if (!is.read(hb.data(), static_cast<std::streamsize>(hb.size())))
            throw format_error("truncated file while reading archive header");
        std::istringstream h(hb);
        n_frames_ = binary::get<std::uint32_t>(h, "header");
        n_coils_ = static_cast<int>(binary::get<std::uint32_t>(h, "header"));
        const auto n_samples = binary::get<std::uint64_t>(h, "header");
        const auto grid_n = binary::get<std::uint32_t>(h, "header");
        const auto kind = detail::kind_from_code(binary::get<std::uint32_t>(h, "header"));
        const auto accel = static_cast<int>(binary::get<std::uint32_t>(h, "header"));
        has_images_ = binary::get<std::uint32_t>(h, "header") != 0;
        if (n_coils_ < 1 || grid_n < 1 || n_samples > (1ull << 32))
            throw format_error("malformed archive header");
        std::string sb(n_samples * 3 * sizeof(double), '\0');
        if (!is.read(sb.data(), static_cast<std::streamsize>(sb.size())))
            throw format_error("truncated file while reading trajectory");
        if (binary::get<std::uint32_t>(is, "header checksum") != detail::crc_of(hb + sb))
            throw format_error("checksum mismatch in archive header");
        std::vector<KSample> samples(n_samples);
        std::istringstream ss(sb);
        for (auto& s : samples) {
            s.kx = binary::get<double>(ss, "trajectory");
            s.ky = binary::get<double>(ss, "trajectory");
            s.t = binary::get<double>(ss, "trajectory");
        }
        try {
            traj_ = std::make_shared<const Trajectory>(kind, grid_n, accel, std::move(samples));
        } catch (const validation_error& e) {
            throw format_error(std::string("archive trajectory is invalid: ") + e.what());
        }
        data_start_ = static_cast<std::uint64_t>(is.tellg());
        grid_n_ = grid_n;
        block_ = 8 + 16 * n_samples + (has_images_ ? 16ull * grid_n * grid_n : 0) + 4;

        is.seekg(0, std::ios::end);
        const auto end = static_cast<std::uint64_t>(is.tellg());
        const std::uint64_t blocks = (end - data_start_) / block_;
        const std::uint64_t expected = n_frames_ * static_cast<std::uint64_t>(n_coils_);
        if (!allow_partial && (blocks < expected || end != data_start_ + expected * block_))
            throw format_error("truncated archive: " + std::to_string(blocks) + " of " +
                               std::to_string(expected) + " frame blocks present");
        available_ = std::min<std::uint64_t>(blocks, expected) / static_cast<std::uint64_t>(n_coils_);
    }

    const nlohmann::json& metadata() const { return metadata_; }
    const TrajectoryPtr& trajectory() const { return traj_; }
    std::size_t n_frames() const { return n_frames_; }
    int n_coils() const { return n_coils_; }
    bool has_images() const { return has_images_; }
    /// Complete frames (all coils) present on disk when the reader was opened.
    std::size_t frames_available() const { return available_; }

    ArchiveFrame read(std::size_t t, int coil) const {
        detail::require(t < n_frames_, "frame index out of range", "frame");
        detail::require(coil >= 0 && coil < n_coils_, "coil index out of range", "coil");
        detail::require(t < available_, "frame " + std::to_string(t) + " not yet written", "frame");
        std::ifstream is(path_, std::ios::binary);
        if (!is) throw std::runtime_error("cannot open " + path_.string());
        const std::uint64_t idx = t * static_cast<std::uint64_t>(n_coils_) + static_cast<std::uint64_t>(coil);
        is.seekg(static_cast<std::streamoff>(data_start_ + idx * block_));
        std::string bytes(block_ - 4, '\0');
        if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
            throw format_error("truncated archive at frame " + std::to_string(t));
        const auto crc = binary::get<std::uint32_t>(is, "frame checksum");
        if (crc != detail::crc_of(bytes))
            throw format_error("checksum mismatch in frame " + std::to_string(t) + " (coil " +
                               std::to_string(coil) + ")");
        std::istringstream b(bytes);
        const auto ft = binary::get<std::uint32_t>(b, "frame");
        const auto fc = binary::get<std::uint32_t>(b, "frame");
        if (ft != t || fc != static_cast<std::uint32_t>(coil))
            throw format_error("frame block " + std::to_string(t) + " is out of order");
        ArchiveFrame f;
        f.kspace.trajectory = traj_;
        f.kspace.coil_index = coil;
        f.kspace.values.resize(traj_->size());
        binary::get_doubles(b, std::span<double>(reinterpret_cast<double*>(f.kspace.values.data()),
                                                 2 * f.kspace.values.size()),
                            "frame");
        if (has_images_) {
            ImageFrame img{Grid2D<cplx>(grid_n_, grid_n_)};
            binary::get_doubles(b, std::span<double>(reinterpret_cast<double*>(img.data.storage().data()),
                                                     2 * img.data.size()),
                                "frame image");
            f.image = std::move(img);
        }
        return f;
    }

  private:
    std::filesystem::path path_;
    nlohmann::json metadata_;
    TrajectoryPtr traj_;
    std::size_t n_frames_ = 0;
    int n_coils_ = 1;
    bool has_images_ = false;
    std::size_t grid_n_ = 0;
    std::uint64_t data_start_ = 0;
    std::uint64_t block_ = 0;
    std::size_t available_ = 0;
};

inline void save_series(const SeriesArchive& a, const std::filesystem::path& path) {
    const std::size_t total = a.n_frames * static_cast<std::size_t>(a.n_coils);
    detail::require(a.kspace.size() == total, "archive frame count does not match n_frames x n_coils",
                    "frame");
    detail::require(a.images.empty() || a.images.size() == total,
                    "archive image count does not match its k-space frames", "images");
    ArchiveWriter w(path, a.metadata, a.trajectory, a.n_frames, a.n_coils, !a.images.empty());
    for (std::size_t i = 0; i < total; ++i) w.write(a.kspace[i], a.images.empty() ? nullptr : &a.images[i]);
    w.finish();
}

inline SeriesArchive load_series(const std::filesystem::path& path) {
    ArchiveReader r(path);
    SeriesArchive a;
    a.metadata = r.metadata();
    a.trajectory = r.trajectory();
    a.n_frames = r.n_frames();
    a.n_coils = r.n_coils();
    for (std::size_t t = 0; t < a.n_frames; ++t)
        for (int c = 0; c < a.n_coils; ++c) {
            auto f = r.read(t, c);
            a.kspace.push_back(std::move(f.kspace));
            if (f.image) a.images.push_back(std::move(*f.image));
        }
    return a;
}

}  // namespace ksim
