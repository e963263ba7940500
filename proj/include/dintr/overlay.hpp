#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dintr/codec.hpp"
#include "dintr/conditioning.hpp"
#include "dintr/errors.hpp"
#include "dintr/metrics.hpp"
#include "dintr/tracker.hpp"

namespace dintr {

// Drawing predicted targets back onto frames: crosses for points and pose
// keypoints, rectangle outlines for boxes, boundary pixels for segment masks.
// Every target keeps one fixed color across the whole sequence; a lost entry
// leaves its frame untouched.

using rgb = std::array<double, 3>;

inline rgb overlay_color(std::size_t id) {
    static const rgb palette[] = {
        {0.90, 0.10, 0.29}, {0.24, 0.71, 0.29}, {1.00, 0.88, 0.10}, {0.00, 0.51, 0.78},
        {0.96, 0.51, 0.19}, {0.57, 0.12, 0.71}, {0.27, 0.94, 0.94}, {0.94, 0.20, 0.90},
    };
    return palette[id % (sizeof(palette) / sizeof(palette[0]))];
}

namespace detail {

inline void put(frame& f, long long x, long long y, const rgb& c) {
    if (x < 0 || y < 0 || x >= static_cast<long long>(f.w) || y >= static_cast<long long>(f.h))
        return;
    std::size_t base = (static_cast<std::size_t>(y) * f.w + static_cast<std::size_t>(x)) * 3;
    for (int ch = 0; ch < 3; ++ch) f.rgb[base + ch] = c[ch];
}

inline void draw_cross(frame& f, double px, double py, const rgb& c, int arm = 3) {
    long long cx = static_cast<long long>(std::floor(px));
    long long cy = static_cast<long long>(std::floor(py));
    for (int d = -arm; d <= arm; ++d) {
        put(f, cx + d, cy, c);
        put(f, cx, cy + d, c);
    }
}

inline void draw_rect(frame& f, const box_ind& b, const rgb& c) {
    long long x0 = static_cast<long long>(std::floor(b.x0));
    long long y0 = static_cast<long long>(std::floor(b.y0));
    long long x1 = static_cast<long long>(std::floor(b.x1));
    long long y1 = static_cast<long long>(std::floor(b.y1));
    for (long long x = x0; x <= x1; ++x) {
        put(f, x, y0, c);
        put(f, x, y1, c);
    }
    for (long long y = y0; y <= y1; ++y) {
        put(f, x0, y, c);
        put(f, x1, y, c);
    }
}

inline void draw_contour(frame& f, const segment_ind& seg, const rgb& c) {
    if (seg.h != f.h || seg.w != f.w)
        throw contract_error("segment mask dimensions differ from the frame");
    std::vector<std::uint8_t> edge = mask_boundary(seg);
    for (std::size_t y = 0; y < seg.h; ++y)
        for (std::size_t x = 0; x < seg.w; ++x)
            if (edge[y * seg.w + x])
                put(f, static_cast<long long>(x), static_cast<long long>(y), c);
}

} // namespace detail

// Draw one target's entry; lost entries and text indicators draw nothing.
inline void draw_entry(frame& f, const tracklet_entry& e, const rgb& c) {
    if (e.lost) return;
    if (const auto* p = std::get_if<point_ind>(&e.ind)) {
        detail::draw_cross(f, p->x, p->y, c);
    } else if (const auto* ps = std::get_if<pose_ind>(&e.ind)) {
        for (std::size_t i = 0; i < ps->points.size(); ++i) {
            if (i < e.kp_lost.size() && e.kp_lost[i]) continue;
            detail::draw_cross(f, ps->points[i].x, ps->points[i].y, c);
        }
    } else if (const auto* b = std::get_if<box_ind>(&e.ind)) {
        detail::draw_rect(f, *b, c);
    } else if (const auto* s = std::get_if<segment_ind>(&e.ind)) {
        detail::draw_contour(f, *s, c);
    }
}

// Copy every frame and draw each tracklet's entry for that frame on it. The
// tracklets must carry exactly one entry per frame.
inline std::vector<frame> overlay_sequence(const std::vector<frame>& frames,
                                           const std::vector<tracklet>& tracklets) {
    for (const auto& t : tracklets)
        if (t.entries.size() != frames.size())
            throw contract_error("tracklet length does not match the frame count");
    std::vector<frame> out = frames;
    for (std::size_t t = 0; t < out.size(); ++t)
        for (const auto& tr : tracklets) draw_entry(out[t], tr.entries[t], overlay_color(tr.id));
    return out;
}

} // namespace dintr
