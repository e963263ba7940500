#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dintr/errors.hpp"
#include "dintr/io.hpp"
#include "dintr/tensor.hpp"

namespace dintr {

// RGB frame, values in [0,1], row-major (y, x, channel).
struct frame {
    std::size_t h = 0, w = 0;
    std::vector<double> rgb; // h * w * 3

    frame() = default;
    frame(std::size_t h_, std::size_t w_, double fill = 0.0) : h(h_), w(w_), rgb(h_ * w_ * 3, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * w + x) * 3 + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * w + x) * 3 + c]; }
};

// Lossless space-to-depth frame <-> latent codec. A latent is a tensor of shape
// {3*p*p, h/p, w/p}; the mapping is a pure permutation (linear, exactly invertible,
// norm-preserving). Channel c = (dy*p + dx)*3 + ch for the in-cell offset (dy,dx).

inline void check_patch(std::size_t h, std::size_t w, std::size_t p) {
    if (p == 0) throw contract_error("patch must be positive");
    if (h % p != 0 || w % p != 0)
        throw shape_error("frame " + std::to_string(w) + "x" + std::to_string(h) +
                          " not divisible by patch " + std::to_string(p));
}

inline tensor encode_frame(const frame& f, std::size_t p) {
    check_patch(f.h, f.w, p);
    std::size_t lh = f.h / p, lw = f.w / p, C = 3 * p * p;
    std::vector<double> out(C * lh * lw);
    for (std::size_t ly = 0; ly < lh; ++ly)
        for (std::size_t lx = 0; lx < lw; ++lx)
            for (std::size_t dy = 0; dy < p; ++dy)
                for (std::size_t dx = 0; dx < p; ++dx)
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        std::size_t c = (dy * p + dx) * 3 + ch;
                        out[(c * lh + ly) * lw + lx] = f.at(ly * p + dy, lx * p + dx, ch);
                    }
    return tensor({C, lh, lw}, std::move(out));
}

inline frame decode_latent(const tensor& z, std::size_t p) {
    if (z.rank() != 3) throw shape_error("latent must be rank 3");
    std::size_t C = z.dim(0), lh = z.dim(1), lw = z.dim(2);
    if (C != 3 * p * p) throw shape_error("latent channels do not match patch size");
    frame f(lh * p, lw * p);
    const double* x = z.data();
    for (std::size_t ly = 0; ly < lh; ++ly)
        for (std::size_t lx = 0; lx < lw; ++lx)
            for (std::size_t dy = 0; dy < p; ++dy)
                for (std::size_t dx = 0; dx < p; ++dx)
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        std::size_t c = (dy * p + dx) * 3 + ch;
                        f.at(ly * p + dy, lx * p + dx, ch) = x[(c * lh + ly) * lw + lx];
                    }
    return f;
}

// ----- PPM / PGM -----

// Binary PPM (P6, maxval 255). Import divides by 255; export rounds
// half-away-from-zero and clamps to [0,255]. Values inside the pipeline are
// never clamped; only image export is.
inline std::uint8_t to_byte(double v) {
    double scaled = v * 255.0;
    double rounded = std::floor(std::fabs(scaled) + 0.5) * (scaled < 0.0 ? -1.0 : 1.0);
    if (rounded < 0.0) rounded = 0.0;
    if (rounded > 255.0) rounded = 255.0;
    return static_cast<std::uint8_t>(rounded);
}

inline std::string encode_ppm(const frame& f) {
    std::string out = "P6\n" + std::to_string(f.w) + " " + std::to_string(f.h) + "\n255\n";
    out.reserve(out.size() + f.rgb.size());
    for (double v : f.rgb) out.push_back(static_cast<char>(to_byte(v)));
    return out;
}

namespace detail {

// Reads one whitespace-delimited token, skipping '#' comments.
inline std::string pnm_token(const std::string& bytes, std::size_t& pos, const std::string& origin) {
    while (pos < bytes.size()) {
        char c = bytes[pos];
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw io_error(origin + ": truncated header");
    return bytes.substr(start, pos - start);
}

} // namespace detail

inline frame decode_ppm(const std::string& bytes, const std::string& origin = "<memory>") {
    std::size_t pos = 0;
    if (detail::pnm_token(bytes, pos, origin) != "P6") throw io_error(origin + ": not a P6 ppm");
    std::size_t w = std::stoul(detail::pnm_token(bytes, pos, origin));
    std::size_t h = std::stoul(detail::pnm_token(bytes, pos, origin));
    std::size_t maxval = std::stoul(detail::pnm_token(bytes, pos, origin));
    if (maxval != 255) throw io_error(origin + ": only maxval 255 supported");
    ++pos; // single whitespace after maxval
    if (bytes.size() - pos < w * h * 3) throw io_error(origin + ": truncated pixel data");
    frame f(h, w);
    for (std::size_t i = 0; i < w * h * 3; ++i)
        f.rgb[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0;
    return f;
}

inline void save_ppm(const std::filesystem::path& path, const frame& f) {
    write_file(path, encode_ppm(f));
}

inline frame load_ppm(const std::filesystem::path& path) {
    return decode_ppm(read_file(path), path.string());
}

// Binary PGM (P5, maxval 255) used for masks: nonzero = foreground.
inline std::string encode_pgm(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w) {
    if (mask.size() != h * w) throw shape_error("pgm: mask size mismatch");
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::uint8_t v : mask) out.push_back(static_cast<char>(v ? 255 : 0));
    return out;
}

inline std::vector<std::uint8_t> decode_pgm(const std::string& bytes, std::size_t& h, std::size_t& w,
                                            const std::string& origin = "<memory>") {
    std::size_t pos = 0;
    if (detail::pnm_token(bytes, pos, origin) != "P5") throw io_error(origin + ": not a P5 pgm");
    w = std::stoul(detail::pnm_token(bytes, pos, origin));
    h = std::stoul(detail::pnm_token(bytes, pos, origin));
    std::size_t maxval = std::stoul(detail::pnm_token(bytes, pos, origin));
    if (maxval != 255) throw io_error(origin + ": only maxval 255 supported");
    ++pos;
    if (bytes.size() - pos < w * h) throw io_error(origin + ": truncated pixel data");
    std::vector<std::uint8_t> mask(w * h);
    for (std::size_t i = 0; i < w * h; ++i)
        mask[i] = static_cast<unsigned char>(bytes[pos + i]) ? 1 : 0;
    return mask;
}

inline void save_pgm(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask,
                     std::size_t h, std::size_t w) {
    write_file(path, encode_pgm(mask, h, w));
}

inline std::vector<std::uint8_t> load_pgm(const std::filesystem::path& path, std::size_t& h,
                                          std::size_t& w) {
    return decode_pgm(read_file(path), h, w, path.string());
}

} // namespace dintr
