#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dintr/conditioning.hpp"
#include "dintr/errors.hpp"

namespace dintr {

// Evaluation metrics over aligned prediction/truth sequences. All means are
// over contributing frames; size mismatches are programming errors.

inline double point_distance(const point_ind& a, const point_ind& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Fraction of frames with Euclidean error strictly below `radius`.
inline double point_accuracy(const std::vector<point_ind>& pred,
                             const std::vector<point_ind>& truth, double radius) {
    if (pred.size() != truth.size() || pred.empty())
        throw contract_error("point_accuracy: sequence mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (point_distance(pred[i], truth[i]) < radius) ++hit;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

inline std::vector<double> default_point_radii() { return {1.0, 2.0, 4.0, 8.0, 16.0}; }

// Per-threshold rates plus their average over the threshold set.
struct point_report {
    std::vector<double> radii;
    std::vector<double> rates;
    double average = 0.0;
};

inline point_report point_accuracy_report(const std::vector<point_ind>& pred,
                                          const std::vector<point_ind>& truth,
                                          std::vector<double> radii = default_point_radii()) {
    point_report rep;
    rep.radii = std::move(radii);
    double acc = 0.0;
    for (double r : rep.radii) {
        double rate = point_accuracy(pred, truth, r);
        rep.rates.push_back(rate);
        acc += rate;
    }
    rep.average = rep.radii.empty() ? 0.0 : acc / static_cast<double>(rep.radii.size());
    return rep;
}

// Keypoint-set accuracy: fraction of (frame, keypoint) pairs strictly within
// radius.
inline double pose_accuracy(const std::vector<pose_ind>& pred,
                            const std::vector<pose_ind>& truth, double radius) {
    if (pred.size() != truth.size() || pred.empty())
        throw contract_error("pose_accuracy: sequence mismatch");
    std::size_t hit = 0, total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].points.size() != truth[i].points.size())
            throw contract_error("pose_accuracy: keypoint count mismatch");
        for (std::size_t k = 0; k < pred[i].points.size(); ++k) {
            ++total;
            if (point_distance(pred[i].points[k], truth[i].points[k]) < radius) ++hit;
        }
    }
    if (total == 0) throw contract_error("pose_accuracy: no keypoints");
    return static_cast<double>(hit) / static_cast<double>(total);
}

// Intersection over union for inclusive-coordinate boxes (a box covering a
// single pixel has area 1).
inline double box_iou(const box_ind& a, const box_ind& b) {
    double ax0 = a.x0, ay0 = a.y0, ax1 = a.x1 + 1.0, ay1 = a.y1 + 1.0;
    double bx0 = b.x0, by0 = b.y0, bx1 = b.x1 + 1.0, by1 = b.y1 + 1.0;
    double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    double inter = ix * iy;
    double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    return uni > 0.0 ? inter / uni : 1.0;
}

inline double mean_box_iou(const std::vector<box_ind>& pred, const std::vector<box_ind>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw contract_error("mean_box_iou: sequence mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += box_iou(pred[i], truth[i]);
    return acc / static_cast<double>(pred.size());
}

// Region similarity J (Jaccard). An empty ground-truth mask has no defined
// region score.
inline double mask_jaccard(const segment_ind& pred, const segment_ind& truth) {
    if (pred.h != truth.h || pred.w != truth.w)
        throw shape_error("mask_jaccard: dimension mismatch");
    std::size_t inter = 0, uni = 0, nt = 0;
    for (std::size_t i = 0; i < pred.mask.size(); ++i) {
        bool fa = pred.mask[i] != 0, fb = truth.mask[i] != 0;
        if (fb) ++nt;
        if (fa && fb) ++inter;
        if (fa || fb) ++uni;
    }
    if (nt == 0) throw undefined_metric_error("empty ground-truth mask");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

// Boundary pixels via 4-connected erosion; outside the image counts as
// background, so foreground pixels on the border are boundary.
inline std::vector<std::uint8_t> mask_boundary(const segment_ind& m) {
    std::vector<std::uint8_t> out(m.mask.size(), 0);
    auto fg = [&](long long y, long long x) {
        if (y < 0 || x < 0 || y >= static_cast<long long>(m.h) || x >= static_cast<long long>(m.w))
            return false;
        return m.mask[static_cast<std::size_t>(y) * m.w + static_cast<std::size_t>(x)] != 0;
    };
    for (std::size_t y = 0; y < m.h; ++y)
        for (std::size_t x = 0; x < m.w; ++x) {
            if (!m.mask[y * m.w + x]) continue;
            long long yy = static_cast<long long>(y), xx = static_cast<long long>(x);
            bool interior = fg(yy - 1, xx) && fg(yy + 1, xx) && fg(yy, xx - 1) && fg(yy, xx + 1);
            if (!interior) out[y * m.w + x] = 1;
        }
    return out;
}

// Dilate a binary map by Euclidean radius `tol` (tol = 1 adds the plus-shaped
// neighborhood).
inline std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& m, std::size_t h,
                                        std::size_t w, double tol) {
    std::vector<std::uint8_t> out(m.size(), 0);
    int r = static_cast<int>(std::floor(tol));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (!m[y * w + x]) continue;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > tol * tol) continue;
                    long long ny = static_cast<long long>(y) + dy;
                    long long nx = static_cast<long long>(x) + dx;
                    if (ny < 0 || nx < 0 || ny >= static_cast<long long>(h) ||
                        nx >= static_cast<long long>(w))
                        continue;
                    out[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)] = 1;
                }
        }
    return out;
}

} // namespace detail

// Contour accuracy F: harmonic mean of boundary precision/recall with a
// 1-pixel matching tolerance.
inline double boundary_f(const segment_ind& pred, const segment_ind& truth, double tol = 1.0) {
    if (pred.h != truth.h || pred.w != truth.w) throw shape_error("boundary_f: dimension mismatch");
    bool gt_any = false;
    for (auto v : truth.mask)
        if (v) {
            gt_any = true;
            break;
        }
    if (!gt_any) throw undefined_metric_error("empty ground-truth mask");
    auto pb = detail::mask_boundary(pred);
    auto tb = detail::mask_boundary(truth);
    std::size_t np = 0, nt = 0;
    for (auto v : pb) np += v;
    for (auto v : tb) nt += v;
    if (np == 0) return 0.0;
    auto tb_d = detail::dilate(tb, pred.h, pred.w, tol);
    auto pb_d = detail::dilate(pb, pred.h, pred.w, tol);
    std::size_t p_hit = 0, t_hit = 0;
    for (std::size_t i = 0; i < pb.size(); ++i) {
        if (pb[i] && tb_d[i]) ++p_hit;
        if (tb[i] && pb_d[i]) ++t_hit;
    }
    double precision = static_cast<double>(p_hit) / static_cast<double>(np);
    double recall = static_cast<double>(t_hit) / static_cast<double>(nt);
    return (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline double mean_mask_jaccard(const std::vector<segment_ind>& pred,
                                const std::vector<segment_ind>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw shape_error("mean_mask_jaccard: sequence mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += mask_jaccard(pred[i], truth[i]);
    return acc / static_cast<double>(pred.size());
}

inline double mean_boundary_f(const std::vector<segment_ind>& pred,
                              const std::vector<segment_ind>& truth, double tol = 1.0) {
    if (pred.size() != truth.size() || pred.empty())
        throw shape_error("mean_boundary_f: sequence mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += boundary_f(pred[i], truth[i], tol);
    return acc / static_cast<double>(pred.size());
}

// Combined region-and-contour score.
inline double j_and_f(const std::vector<segment_ind>& pred, const std::vector<segment_ind>& truth) {
    return 0.5 * (mean_mask_jaccard(pred, truth) + mean_boundary_f(pred, truth));
}

// Identity consistency for multi-target tracking. Per frame, tracks are
// matched to true objects greedily (smallest point distance first, one object
// per track); a switch is a frame where a track's matched object id differs
// from the previous frame's. Returns (switch count, rate over matched
// transitions).
struct id_report {
    std::size_t switches = 0;
    double rate = 0.0;
};

inline id_report id_consistency(const std::vector<std::vector<point_ind>>& tracks,
                                const std::vector<std::vector<point_ind>>& truth) {
    if (tracks.empty()) throw contract_error("id_consistency: no tracks");
    std::size_t frames = tracks[0].size();
    for (const auto& t : tracks)
        if (t.size() != frames) throw contract_error("id_consistency: ragged tracks");
    for (const auto& t : truth)
        if (t.size() != frames) throw contract_error("id_consistency: ragged truth");
    std::vector<long long> prev(tracks.size(), -1);
    id_report rep;
    std::size_t transitions = 0;
    for (std::size_t f = 0; f < frames; ++f) {
        // greedy global matching: repeatedly bind the closest unmatched pair
        std::vector<long long> match(tracks.size(), -1);
        std::vector<bool> track_done(tracks.size(), false), obj_done(truth.size(), false);
        std::size_t rounds = std::min(tracks.size(), truth.size());
        for (std::size_t r = 0; r < rounds; ++r) {
            double best = 0.0;
            std::size_t bi = 0, bj = 0;
            bool found = false;
            for (std::size_t i = 0; i < tracks.size(); ++i) {
                if (track_done[i]) continue;
                for (std::size_t j = 0; j < truth.size(); ++j) {
                    if (obj_done[j]) continue;
                    double d = point_distance(tracks[i][f], truth[j][f]);
                    if (!found || d < best) {
                        best = d;
                        bi = i;
                        bj = j;
                        found = true;
                    }
                }
            }
            if (!found) break;
            track_done[bi] = true;
            obj_done[bj] = true;
            match[bi] = static_cast<long long>(bj);
        }
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            if (prev[i] >= 0 && match[i] >= 0) {
                ++transitions;
                if (match[i] != prev[i]) ++rep.switches;
            }
            if (match[i] >= 0) prev[i] = match[i];
        }
    }
    rep.rate = transitions == 0
                   ? 0.0
                   : static_cast<double>(rep.switches) / static_cast<double>(transitions);
    return rep;
}

} // namespace dintr
