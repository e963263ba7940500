#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dintr/errors.hpp"
#include "dintr/tensor.hpp"

namespace dintr {

// Tensor container format "DTNR" v1.
//   bytes 0..3  magic 'D','T','N','R'
//   byte  4     version (1)
//   byte  5     dtype (0 = f64)
//   byte  6     ndim
//   byte  7     zero pad (header is 8 bytes total)
//   then ndim little-endian u64 dims, then the row-major little-endian f64 payload.

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline std::uint64_t f64_bits(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    return v;
}

inline double bits_f64(std::uint64_t v) {
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

} // namespace detail

inline std::string encode_tensor(const tensor& t) {
    if (t.rank() > 255) throw io_error("tensor rank exceeds format limit");
    std::string out;
    out.reserve(8 + 8 * t.rank() + 8 * t.size());
    out += "DTNR";
    out.push_back(1);          // version
    out.push_back(0);          // dtype f64
    out.push_back(static_cast<char>(t.rank()));
    out.push_back(0);          // pad
    for (std::size_t d : t.shape()) detail::put_u64_le(out, d);
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_u64_le(out, detail::f64_bits(t.data()[i]));
    return out;
}

inline tensor decode_tensor(const std::string& bytes, const std::string& origin = "<memory>") {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(p, "DTNR", 4) != 0)
        throw io_error(origin + ": bad magic");
    if (p[4] != 1) throw io_error(origin + ": unsupported version " + std::to_string(p[4]));
    if (p[5] != 0) throw io_error(origin + ": unsupported dtype " + std::to_string(p[5]));
    std::size_t ndim = p[6];
    if (bytes.size() < 8 + 8 * ndim) throw io_error(origin + ": truncated dims");
    std::vector<std::size_t> shape(ndim);
    std::size_t n = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        shape[i] = static_cast<std::size_t>(detail::get_u64_le(p + 8 + 8 * i));
        n *= shape[i];
    }
    std::size_t payload_at = 8 + 8 * ndim;
    if (bytes.size() != payload_at + 8 * n)
        throw io_error(origin + ": payload size mismatch (" + std::to_string(bytes.size() - payload_at) +
                       " bytes for " + std::to_string(n) + " elements)");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i)
        data[i] = detail::bits_f64(detail::get_u64_le(p + payload_at + 8 * i));
    return tensor(std::move(shape), std::move(data));
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open for write: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void save_tensor(const std::filesystem::path& path, const tensor& t) {
    write_file(path, encode_tensor(t));
}

inline tensor load_tensor(const std::filesystem::path& path) {
    return decode_tensor(read_file(path), path.string());
}

} // namespace dintr
