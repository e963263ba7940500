#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dintr/conditioning.hpp"
#include "dintr/denoiser.hpp"
#include "dintr/errors.hpp"
#include "dintr/tensor.hpp"

namespace dintr {

// Correspondence extraction from captured attention. Denoising steps are
// indexed so that small k is nearly clean, i.e. closest to the interpolation
// endpoint; the accumulation window therefore covers k in [1, ceil(f*T)] and
// emphasizes the latents that look most like the next frame.

struct extraction_config {
    std::string mode = "propagate"; // propagate | elementwise
    std::size_t beta = 4;           // matrix-power / sharpening exponent, >= 1
    double window_fraction = 0.8;
    double seg_threshold = 0.5;     // fraction of the map maximum

    void validate() const {
        if (mode != "propagate" && mode != "elementwise")
            throw config_error("extraction.mode must be propagate or elementwise");
        if (beta < 1) throw config_error("extraction.beta must be >= 1");
        if (!(window_fraction > 0.0) || window_fraction > 1.0)
            throw config_error("extraction.window_fraction must be in (0, 1]");
        if (seg_threshold < 0.0 || seg_threshold > 1.0)
            throw config_error("extraction.seg_threshold must be in [0, 1]");
    }
};

inline std::size_t window_steps(std::size_t T, double fraction) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(T)));
}

// Means of the captured maps over the window, separately for self and cross
// attention. Only records with 1 <= step <= ceil(fraction * T) contribute; the
// normalizer is the exact count of contributing records, so identical records
// average to themselves.
struct attn_means {
    tensor self_mean;  // {hw, hw}
    tensor cross_mean; // {hw, m}
    std::size_t contributing = 0;
};

inline attn_means accumulate(const std::vector<attention_record>& records,
                             const noise_schedule& s, double window_fraction) {
    std::size_t kmax = window_steps(s.T, window_fraction);
    std::vector<double> self_acc, cross_acc;
    std::vector<std::size_t> self_shape, cross_shape;
    std::size_t count = 0;
    for (const auto& r : records) {
        if (r.step < 1 || r.step > kmax) continue;
        if (self_acc.empty()) {
            self_shape = r.self_map.shape();
            cross_shape = r.cross_map.shape();
            self_acc.assign(r.self_map.size(), 0.0);
            cross_acc.assign(r.cross_map.size(), 0.0);
        }
        if (r.self_map.shape() != self_shape || r.cross_map.shape() != cross_shape)
            throw shape_error("accumulate: records disagree on map shapes");
        const double* sm = r.self_map.data();
        for (std::size_t i = 0; i < self_acc.size(); ++i) self_acc[i] += sm[i];
        const double* cm = r.cross_map.data();
        for (std::size_t i = 0; i < cross_acc.size(); ++i) cross_acc[i] += cm[i];
        ++count;
    }
    if (count == 0) throw contract_error("accumulate: no attention records in the window");
    double inv = 1.0 / static_cast<double>(count);
    for (double& v : self_acc) v *= inv;
    for (double& v : cross_acc) v *= inv;
    attn_means out;
    out.self_mean = tensor(self_shape, std::move(self_acc));
    out.cross_mean = tensor(cross_shape, std::move(cross_acc));
    out.contributing = count;
    return out;
}

// Pixel-resolution saliency for one target, in [0,1] after min-max
// normalization. raw_max (the pre-normalization maximum) doubles as the
// confidence; a constant map normalizes to all zeros, which downstream treats
// as a lost target.
struct fused_saliency {
    std::size_t h = 0, w = 0;  // pixel dims
    std::vector<double> map;   // h*w
    double raw_max = 0.0;

    double max_value() const {
        double m = 0.0;
        for (double v : map) m = std::max(m, v);
        return m;
    }
};

namespace detail {

inline std::vector<double> bilinear_upsample(const std::vector<double>& grid, std::size_t gh,
                                             std::size_t gw, std::size_t patch) {
    std::size_t H = gh * patch, W = gw * patch;
    std::vector<double> out(H * W);
    for (std::size_t y = 0; y < H; ++y) {
        double gy = (static_cast<double>(y) + 0.5) / static_cast<double>(patch) - 0.5;
        double cy = std::clamp(gy, 0.0, static_cast<double>(gh - 1));
        std::size_t y0 = static_cast<std::size_t>(std::floor(cy));
        std::size_t y1 = std::min(y0 + 1, gh - 1);
        double fy = cy - static_cast<double>(y0);
        for (std::size_t x = 0; x < W; ++x) {
            double gx = (static_cast<double>(x) + 0.5) / static_cast<double>(patch) - 0.5;
            double cx = std::clamp(gx, 0.0, static_cast<double>(gw - 1));
            std::size_t x0 = static_cast<std::size_t>(std::floor(cx));
            std::size_t x1 = std::min(x0 + 1, gw - 1);
            double fx = cx - static_cast<double>(x0);
            double v = (1 - fy) * ((1 - fx) * grid[y0 * gw + x0] + fx * grid[y0 * gw + x1]) +
                       fy * ((1 - fx) * grid[y1 * gw + x0] + fx * grid[y1 * gw + x1]);
            out[y * W + x] = v;
        }
    }
    return out;
}

} // namespace detail

// Combines the averaged self-attention with one target's cross-attention
// saliency vector.
//   propagate:   (A_self)^beta . v, computed as beta stochastic mat-vec hops
//   elementwise: (per-cell received attention, i.e. column mean of A_self)^beta * v
// then min-max normalize and bilinearly upsample to pixel resolution.
inline fused_saliency fuse(const attn_means& means, const tensor& target_saliency,
                           const extraction_config& cfg, std::size_t grid_h, std::size_t grid_w,
                           std::size_t patch) {
    cfg.validate();
    std::size_t hw = grid_h * grid_w;
    if (means.self_mean.rank() != 2 || means.self_mean.dim(0) != hw || means.self_mean.dim(1) != hw)
        throw shape_error("fuse: self map must be {hw, hw}");
    if (target_saliency.rank() != 1 || target_saliency.dim(0) != hw)
        throw shape_error("fuse: target saliency must be {hw}");
    const double* A = means.self_mean.data();
    std::vector<double> v(target_saliency.data(), target_saliency.data() + hw);
    if (cfg.mode == "propagate") {
        std::vector<double> next(hw);
        for (std::size_t hop = 0; hop < cfg.beta; ++hop) {
            for (std::size_t i = 0; i < hw; ++i) {
                double s = 0.0;
                const double* row = A + i * hw;
                for (std::size_t j = 0; j < hw; ++j) s += row[j] * v[j];
                next[i] = s;
            }
            v.swap(next);
        }
    } else {
        for (std::size_t j = 0; j < hw; ++j) {
            double col = 0.0;
            for (std::size_t i = 0; i < hw; ++i) col += A[i * hw + j];
            col /= static_cast<double>(hw);
            v[j] *= std::pow(col, static_cast<double>(cfg.beta));
        }
    }
    fused_saliency out;
    out.raw_max = *std::max_element(v.begin(), v.end());
    out.h = grid_h * patch;
    out.w = grid_w * patch;
    // upsample first, then min-max normalize, so the final map has max exactly
    // 1 whenever it is not constant; a constant map carries no signal and
    // normalizes to all zeros
    out.map = detail::bilinear_upsample(v, grid_h, grid_w, patch);
    double lo = out.map[0], hi = out.map[0];
    for (double x : out.map) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi > lo) {
        double inv = 1.0 / (hi - lo);
        for (double& x : out.map) x = std::clamp((x - lo) * inv, 0.0, 1.0);
    } else {
        std::fill(out.map.begin(), out.map.end(), 0.0);
    }
    return out;
}

// ----- saliency -> indicator -----

// Strictly-greater threshold at fraction * max: a fraction of zero keeps every
// strictly positive pixel; an all-zero map means the target was lost.
inline std::vector<std::uint8_t> saliency_segment(const fused_saliency& sal, double fraction) {
    double mx = sal.max_value();
    if (mx <= 0.0) throw lost_target_error("all-zero saliency");
    double thr = fraction * mx;
    std::vector<std::uint8_t> mask(sal.map.size());
    for (std::size_t i = 0; i < sal.map.size(); ++i) mask[i] = sal.map[i] > thr ? 1 : 0;
    return mask;
}

// Argmax pixel center; ties break to the smallest row-major index.
inline point_ind saliency_point(const fused_saliency& sal) {
    double mx = sal.max_value();
    if (mx <= 0.0) throw lost_target_error("all-zero saliency");
    std::size_t best = 0;
    double bv = sal.map[0];
    for (std::size_t i = 1; i < sal.map.size(); ++i)
        if (sal.map[i] > bv) {
            bv = sal.map[i];
            best = i;
        }
    return point_ind{static_cast<double>(best % sal.w) + 0.5,
                     static_cast<double>(best / sal.w) + 0.5};
}

// Tight axis-aligned rectangle around the thresholded segment.
inline box_ind saliency_box(const fused_saliency& sal, double fraction) {
    std::vector<std::uint8_t> mask = saliency_segment(sal, fraction);
    std::size_t x0 = sal.w, y0 = sal.h, x1 = 0, y1 = 0;
    bool any = false;
    for (std::size_t y = 0; y < sal.h; ++y)
        for (std::size_t x = 0; x < sal.w; ++x)
            if (mask[y * sal.w + x]) {
                any = true;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (!any) throw lost_target_error("threshold removed every pixel");
    return box_ind{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
                   static_cast<double>(y1)};
}

inline indicator map_to_indicator(const fused_saliency& sal, const std::string& kind,
                                  const extraction_config& cfg) {
    if (kind == "point") return saliency_point(sal);
    if (kind == "box") return saliency_box(sal, cfg.seg_threshold);
    if (kind == "segment") {
        segment_ind s;
        s.h = sal.h;
        s.w = sal.w;
        s.mask = saliency_segment(sal, cfg.seg_threshold);
        return s;
    }
    throw contract_error("map_to_indicator handles point/box/segment kinds");
}

// Shannon entropy of a nonnegative map normalized to a distribution; used by
// diagnostics to confirm sharpening never spreads mass.
inline double spatial_entropy(const std::vector<double>& map) {
    double total = 0.0;
    for (double v : map) total += v;
    if (total <= 0.0) return 0.0;
    double ent = 0.0;
    for (double v : map) {
        if (v <= 0.0) continue;
        double p = v / total;
        ent -= p * std::log(p);
    }
    return ent;
}

} // namespace dintr
