#pragma once

// Minimal NIfTI-1 single-file reader/writer (.nii and .nii.gz via zlib).

#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/volume_io/types.hpp"

namespace cdanet::nifti {

enum DataType : std::int16_t {
    kUInt8 = 2,
    kInt16 = 4,
    kInt32 = 8,
    kFloat32 = 16,
    kFloat64 = 64,
    kInt8 = 256,
    kUInt16 = 512,
    kUInt32 = 768,
    kInt64 = 1024,
};

/// Decoded payload in canonical (D,H,W) order, values widened to double.
struct RawVolume {
    Grid3 grid;
    Spacing spacing;
    std::int16_t datatype = 0;
    std::vector<double> values;
};

namespace detail {

inline constexpr int kHeaderSize = 348;
inline constexpr int kDataOffset = 352;

inline std::vector<unsigned char> read_all(const std::string& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("volume file not found: " + path);
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open volume file: " + path);
    std::vector<unsigned char> buf;
    std::array<unsigned char, 1 << 16> chunk{};
    for (;;) {
        const int n = gzread(f, chunk.data(), unsigned(chunk.size()));
        if (n < 0) {
            gzclose(f);
            throw std::runtime_error("corrupt compressed stream in " + path);
        }
        if (n == 0) break;
        buf.insert(buf.end(), chunk.begin(), chunk.begin() + n);
    }
    gzclose(f);
    return buf;
}

inline bool is_gz(const std::string& path) {
    return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

inline void write_all(const std::string& path, std::span<const unsigned char> bytes) {
    if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
    gzFile f = gzopen(path.c_str(), is_gz(path) ? "wb6" : "wbT");
    if (!f) throw std::runtime_error("cannot write volume file: " + path);
    std::size_t off = 0;
    while (off < bytes.size()) {
        const unsigned n = unsigned(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        if (gzwrite(f, bytes.data() + off, n) != int(n)) {
            gzclose(f);
            throw std::runtime_error("write failed: " + path);
        }
        off += n;
    }
    if (gzclose(f) != Z_OK) throw std::runtime_error("write failed: " + path);
}

template <class V>
V load(const unsigned char* p, bool swap) {
    std::array<unsigned char, sizeof(V)> b;
    std::memcpy(b.data(), p, sizeof(V));
    if (swap) std::reverse(b.begin(), b.end());
    V v;
    std::memcpy(&v, b.data(), sizeof(V));
    return v;
}

template <class V>
void store(std::vector<unsigned char>& buf, std::size_t off, V v) {
    std::memcpy(buf.data() + off, &v, sizeof(V));
}

inline int bytes_per_voxel(std::int16_t dt) {
    switch (dt) {
        case kUInt8:
        case kInt8: return 1;
        case kInt16:
        case kUInt16: return 2;
        case kInt32:
        case kUInt32:
        case kFloat32: return 4;
        case kFloat64:
        case kInt64: return 8;
        default: return 0;
    }
}

inline double decode(const unsigned char* p, std::int16_t dt, bool swap) {
    switch (dt) {
        case kUInt8: return *p;
        case kInt8: return static_cast<std::int8_t>(*p);
        case kInt16: return load<std::int16_t>(p, swap);
        case kUInt16: return load<std::uint16_t>(p, swap);
        case kInt32: return load<std::int32_t>(p, swap);
        case kUInt32: return load<std::uint32_t>(p, swap);
        case kInt64: return double(load<std::int64_t>(p, swap));
        case kFloat32: return load<float>(p, swap);
        case kFloat64: return load<double>(p, swap);
        default: return 0;
    }
}

}  // namespace detail

inline RawVolume read(const std::string& path) {
    const auto buf = detail::read_all(path);
    if (buf.size() < std::size_t(detail::kHeaderSize))
        throw std::runtime_error("unreadable header in " + path + ": file shorter than a NIfTI-1 header");
    bool swap = false;
    const std::int32_t hs = detail::load<std::int32_t>(buf.data(), false);
    if (hs != detail::kHeaderSize) {
        if (detail::load<std::int32_t>(buf.data(), true) == detail::kHeaderSize)
            swap = true;
        else
            throw std::runtime_error("unreadable header in " + path + ": not a NIfTI-1 file");
    }
    const unsigned char* h = buf.data();
    if (std::memcmp(h + 344, "n+1", 3) != 0)
        throw std::runtime_error("unreadable header in " + path + ": only single-file NIfTI-1 (n+1) is supported");
    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[i] = detail::load<std::int16_t>(h + 40 + 2 * i, swap);
    int spatial = dim[0];
    while (spatial > 3 && dim[spatial] == 1) --spatial;
    if (spatial != 3)
        throw std::runtime_error(path + ": expected 3 spatial dimensions, found " + std::to_string(spatial));
    for (int i = 1; i <= 3; ++i)
        if (dim[i] <= 0) throw std::runtime_error("unreadable header in " + path + ": non-positive dimension");

    RawVolume v;
    v.grid = {dim[3], dim[2], dim[1]};
    std::array<float, 8> pix{};
    for (int i = 0; i < 8; ++i) pix[i] = detail::load<float>(h + 76 + 4 * i, swap);
    auto sp = [](float s) { return (std::isfinite(s) && s > 0) ? double(s) : 1.0; };
    v.spacing = {sp(pix[3]), sp(pix[2]), sp(pix[1])};
    v.datatype = detail::load<std::int16_t>(h + 70, swap);
    const int bpv = detail::bytes_per_voxel(v.datatype);
    if (bpv == 0) throw std::runtime_error(path + ": unsupported NIfTI datatype " + std::to_string(v.datatype));
    const auto off = static_cast<std::size_t>(detail::load<float>(h + 108, swap));
    const std::size_t n = v.grid.numel();
    if (off < std::size_t(detail::kHeaderSize) || buf.size() < off + n * std::size_t(bpv))
        throw std::runtime_error(path + ": truncated voxel payload");
    float slope = detail::load<float>(h + 112, swap);
    float inter = detail::load<float>(h + 116, swap);
    const bool scaled = std::isfinite(slope) && slope != 0.f && !(slope == 1.f && inter == 0.f);
    v.values.resize(n);
    const unsigned char* p = buf.data() + off;
    for (std::size_t i = 0; i < n; ++i) {
        double x = detail::decode(p + i * std::size_t(bpv), v.datatype, swap);
        if (scaled) x = x * slope + inter;
        v.values[i] = x;
    }
    return v;
}

/// Writes a (D,H,W) payload of the given datatype (kFloat32 or kInt32).
inline void write(const std::string& path, Grid3 grid, Spacing spacing, std::int16_t datatype,
                  std::span<const unsigned char> payload) {
    for (int n : {grid.d, grid.h, grid.w})
        if (n <= 0 || n > 32767) throw std::invalid_argument("NIfTI dimensions must lie in [1, 32767]");
    std::vector<unsigned char> buf(std::size_t(detail::kDataOffset), 0);
    detail::store<std::int32_t>(buf, 0, detail::kHeaderSize);
    const std::array<std::int16_t, 8> dim{3, std::int16_t(grid.w), std::int16_t(grid.h), std::int16_t(grid.d), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) detail::store<std::int16_t>(buf, 40 + 2 * i, dim[i]);
    detail::store<std::int16_t>(buf, 70, datatype);
    detail::store<std::int16_t>(buf, 72, std::int16_t(8 * detail::bytes_per_voxel(datatype)));
    const std::array<float, 8> pix{1.f, float(spacing.w), float(spacing.h), float(spacing.d), 1.f, 1.f, 1.f, 1.f};
    for (int i = 0; i < 8; ++i) detail::store<float>(buf, 76 + 4 * i, pix[i]);
    detail::store<float>(buf, 108, float(detail::kDataOffset));
    detail::store<float>(buf, 112, 0.f);  // scl_slope 0: no scaling
    buf[123] = 2;                          // millimetres
    detail::store<std::int16_t>(buf, 254, 1);  // sform_code
    const std::array<float, 12> srow{float(spacing.w), 0, 0, 0, 0, float(spacing.h), 0, 0, 0, 0, float(spacing.d), 0};
    for (int i = 0; i < 12; ++i) detail::store<float>(buf, 280 + 4 * i, srow[i]);
    std::memcpy(buf.data() + 344, "n+1", 4);
    buf.insert(buf.end(), payload.begin(), payload.end());
    detail::write_all(path, buf);
}

inline void write_float(const std::string& path, const Tensor<float>& vol, Spacing spacing) {
    if (vol.rank() != 3) throw std::invalid_argument("write_float expects a (D,H,W) tensor");
    write(path, vol.grid(), spacing, kFloat32,
          {reinterpret_cast<const unsigned char*>(vol.data()), vol.size() * sizeof(float)});
}

inline void write_int32(const std::string& path, const Tensor<std::int32_t>& vol, Spacing spacing) {
    if (vol.rank() != 3) throw std::invalid_argument("write_int32 expects a (D,H,W) tensor");
    write(path, vol.grid(), spacing, kInt32,
          {reinterpret_cast<const unsigned char*>(vol.data()), vol.size() * sizeof(std::int32_t)});
}

}  // namespace cdanet::nifti
