#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dintr/denoiser.hpp"
#include "dintr/errors.hpp"
#include "dintr/tensor.hpp"
#include "json.hpp"

namespace dintr {

// ----- indicators -----
// The five target descriptions a tracker can carry. Coordinates are continuous
// pixel units: pixel (ix, iy) covers [ix, ix+1) x [iy, iy+1), center (ix+.5, iy+.5).

struct point_ind {
    double x = 0, y = 0;
};

struct pose_ind {
    std::vector<point_ind> points;
};

struct box_ind {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0; // inclusive region [x0,x1] x [y0,y1]
};

struct segment_ind {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> mask; // h*w, nonzero = foreground
};

struct text_ind {
    std::vector<std::size_t> ids;
};

using indicator = std::variant<point_ind, pose_ind, box_ind, segment_ind, text_ind>;

inline const char* indicator_kind(const indicator& ind) {
    switch (ind.index()) {
        case 0: return "point";
        case 1: return "pose";
        case 2: return "box";
        case 3: return "segment";
        default: return "text";
    }
}

inline void validate_indicator(const indicator& ind, std::size_t H, std::size_t W) {
    if (const auto* p = std::get_if<point_ind>(&ind)) {
        if (p->x < 0 || p->y < 0 || p->x >= static_cast<double>(W) || p->y >= static_cast<double>(H))
            throw bounds_error("point outside frame");
    } else if (const auto* ps = std::get_if<pose_ind>(&ind)) {
        if (ps->points.empty()) throw degenerate_indicator_error("pose with no keypoints");
        for (const auto& p : ps->points)
            validate_indicator(point_ind{p.x, p.y}, H, W);
    } else if (const auto* b = std::get_if<box_ind>(&ind)) {
        if (b->x0 > b->x1 || b->y0 > b->y1) throw degenerate_indicator_error("inverted box");
        if (b->x0 < 0 || b->y0 < 0 || b->x1 >= static_cast<double>(W) ||
            b->y1 >= static_cast<double>(H))
            throw bounds_error("box outside frame");
    } else if (const auto* s = std::get_if<segment_ind>(&ind)) {
        if (s->h != H || s->w != W) throw shape_error("segment mask dims differ from frame");
        bool any = false;
        for (auto v : s->mask) any = any || (v != 0);
        if (!any) throw degenerate_indicator_error("empty segment mask");
    } else if (const auto* t = std::get_if<text_ind>(&ind)) {
        if (t->ids.empty()) throw degenerate_indicator_error("text with no token ids");
    }
}

// ----- fixed projection maps -----
// All condition extractors project into the denoiser token space through fixed
// deterministic maps derived from the run seed:
//   point_proj  = the positional-code table itself (rows are cell codes), so a
//                 heatmap token is a heat-weighted average of cell codes;
//   region_proj = the same stream the denoiser input projection is initialized
//                 from, so pooled latent features land where content tokens start;
//   vocab       = seeded embedding table, replaceable/serializable (DTNR).

struct condition_maps {
    std::size_t grid_h = 0, grid_w = 0, channels = 0, embed_dim = 0, patch = 0;
    tensor point_proj; // {hw, d}
    tensor region_proj; // {C, d}
    tensor vocab;       // {V, d}

    static condition_maps build(std::uint64_t seed, std::size_t grid_h, std::size_t grid_w,
                                std::size_t channels, std::size_t embed_dim, std::size_t patch,
                                double pos_scale, std::size_t vocab_size) {
        condition_maps m;
        m.grid_h = grid_h;
        m.grid_w = grid_w;
        m.channels = channels;
        m.embed_dim = embed_dim;
        m.patch = patch;
        m.point_proj = positional_codes(grid_h, grid_w, embed_dim, seed, pos_scale);
        m.region_proj = tensor::seeded_uniform(
            {channels, embed_dim}, seed, "w_in", 1.0 / std::sqrt(static_cast<double>(channels)));
        m.vocab = tensor::seeded_uniform({vocab_size, embed_dim}, seed, "vocab",
                                         1.0 / std::sqrt(static_cast<double>(embed_dim)));
        return m;
    }
};

// ----- rasterization to the latent grid -----

inline std::vector<std::size_t> cells_in_box(const box_ind& b, std::size_t grid_h,
                                             std::size_t grid_w, std::size_t patch) {
    std::vector<std::size_t> cells;
    for (std::size_t iy = 0; iy < grid_h; ++iy)
        for (std::size_t ix = 0; ix < grid_w; ++ix) {
            double cx = (static_cast<double>(ix) + 0.5) * static_cast<double>(patch);
            double cy = (static_cast<double>(iy) + 0.5) * static_cast<double>(patch);
            if (cx >= b.x0 && cx <= b.x1 && cy >= b.y0 && cy <= b.y1)
                cells.push_back(iy * grid_w + ix);
        }
    return cells;
}

inline std::vector<std::size_t> cells_touching_mask(const segment_ind& s, std::size_t grid_h,
                                                    std::size_t grid_w, std::size_t patch) {
    std::vector<std::size_t> cells;
    for (std::size_t iy = 0; iy < grid_h; ++iy)
        for (std::size_t ix = 0; ix < grid_w; ++ix) {
            bool hit = false;
            for (std::size_t dy = 0; dy < patch && !hit; ++dy)
                for (std::size_t dx = 0; dx < patch && !hit; ++dx)
                    hit = s.mask[(iy * patch + dy) * s.w + (ix * patch + dx)] != 0;
            if (hit) cells.push_back(iy * grid_w + ix);
        }
    return cells;
}

// ----- token extractors -----

// Gaussian heatmap over latent cells, sigma in cell units, normalized to peak 1.
inline std::vector<double> point_heatmap(const point_ind& p, std::size_t grid_h,
                                         std::size_t grid_w, std::size_t patch, double sigma) {
    if (!(sigma > 0.0)) throw contract_error("heatmap sigma must be > 0");
    std::vector<double> heat(grid_h * grid_w);
    double px = p.x / static_cast<double>(patch);
    double py = p.y / static_cast<double>(patch);
    double mx = 0.0;
    for (std::size_t iy = 0; iy < grid_h; ++iy)
        for (std::size_t ix = 0; ix < grid_w; ++ix) {
            double du = (static_cast<double>(ix) + 0.5) - px;
            double dv = (static_cast<double>(iy) + 0.5) - py;
            double v = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
            heat[iy * grid_w + ix] = v;
            mx = std::max(mx, v);
        }
    for (double& v : heat) v /= mx;
    return heat;
}

// One token per point: heat-weighted average of the cell codes.
inline tensor point_tokens(const point_ind& p, const condition_maps& maps, double sigma,
                           std::size_t frame_h, std::size_t frame_w) {
    validate_indicator(p, frame_h, frame_w);
    std::vector<double> heat = point_heatmap(p, maps.grid_h, maps.grid_w, maps.patch, sigma);
    double total = 0.0;
    for (double v : heat) total += v;
    std::size_t d = maps.embed_dim;
    std::vector<double> tok(d, 0.0);
    const double* P = maps.point_proj.data();
    for (std::size_t u = 0; u < heat.size(); ++u)
        for (std::size_t j = 0; j < d; ++j) tok[j] += heat[u] * P[u * d + j];
    for (double& v : tok) v /= total;
    return tensor({1, d}, std::move(tok));
}

inline tensor pose_tokens(const pose_ind& ps, const condition_maps& maps, double sigma,
                          std::size_t frame_h, std::size_t frame_w) {
    validate_indicator(ps, frame_h, frame_w);
    std::vector<tensor> rows;
    for (const auto& p : ps.points) rows.push_back(point_tokens(p, maps, sigma, frame_h, frame_w));
    return concat(rows, 0);
}

// One token per region target: mean latent feature over the rasterized cells,
// projected to the token space. Empty rasterization is a degenerate indicator.
inline tensor region_tokens(const std::vector<std::size_t>& cells, const tensor& latent,
                            const condition_maps& maps) {
    if (cells.empty()) throw degenerate_indicator_error("region rasterizes to zero cells");
    if (latent.rank() != 3 || latent.dim(0) != maps.channels || latent.dim(1) != maps.grid_h ||
        latent.dim(2) != maps.grid_w)
        throw shape_error("region_tokens: latent shape mismatch");
    std::size_t C = maps.channels, hw = maps.grid_h * maps.grid_w, d = maps.embed_dim;
    std::vector<double> pooled(C, 0.0);
    const double* z = latent.data();
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t cell : cells) s += z[c * hw + cell];
        pooled[c] = s / static_cast<double>(cells.size());
    }
    std::vector<double> tok(d, 0.0);
    const double* G = maps.region_proj.data();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < d; ++j) tok[j] += pooled[c] * G[c * d + j];
    return tensor({1, d}, std::move(tok));
}

inline tensor box_tokens(const box_ind& b, const tensor& latent, const condition_maps& maps,
                         std::size_t frame_h, std::size_t frame_w) {
    validate_indicator(b, frame_h, frame_w);
    return region_tokens(cells_in_box(b, maps.grid_h, maps.grid_w, maps.patch), latent, maps);
}

inline tensor segment_tokens(const segment_ind& s, const tensor& latent, const condition_maps& maps,
                             std::size_t frame_h, std::size_t frame_w) {
    validate_indicator(s, frame_h, frame_w);
    return region_tokens(cells_touching_mask(s, maps.grid_h, maps.grid_w, maps.patch), latent,
                         maps);
}

// Token per id, straight table lookup.
inline tensor text_tokens(const text_ind& t, const condition_maps& maps) {
    if (t.ids.empty()) throw degenerate_indicator_error("text with no token ids");
    std::size_t V = maps.vocab.dim(0), d = maps.vocab.dim(1);
    std::vector<double> out(t.ids.size() * d);
    const double* tab = maps.vocab.data();
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
        if (t.ids[i] >= V)
            throw vocab_error("token id " + std::to_string(t.ids[i]) + " out of vocabulary " +
                              std::to_string(V));
        std::copy(tab + t.ids[i] * d, tab + (t.ids[i] + 1) * d, out.data() + i * d);
    }
    return tensor({t.ids.size(), d}, std::move(out));
}

// ----- packing -----

// Condition tokens for all targets of a frame pair: one {m, d} block plus the
// per-target (start, len) ranges, which are disjoint, ordered and tile [0, m).
struct condition_tokens {
    tensor tokens; // {m, d}
    std::vector<std::pair<std::size_t, std::size_t>> ranges;

    std::size_t total() const { return tokens.defined() ? tokens.dim(0) : 0; }
};

inline condition_tokens pack_targets(const std::vector<tensor>& blocks) {
    if (blocks.empty()) throw contract_error("pack_targets: no targets");
    condition_tokens out;
    std::size_t pos = 0;
    for (const tensor& b : blocks) {
        if (b.rank() != 2) throw shape_error("pack_targets: blocks must be rank 2");
        out.ranges.emplace_back(pos, b.dim(0));
        pos += b.dim(0);
    }
    out.tokens = concat(blocks, 0);
    return out;
}

// Per-target saliency: columns of the (row-stochastic) cross map belonging to a
// target's range, averaged into a single {hw} vector. Summing the outputs
// weighted by range widths recovers each row's unit mass.
inline std::vector<tensor> split_attention(const tensor& cross_map,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& ranges) {
    if (cross_map.rank() != 2) throw shape_error("split_attention: cross map must be rank 2");
    std::size_t hw = cross_map.dim(0), m = cross_map.dim(1);
    std::size_t covered = 0;
    for (auto [start, len] : ranges) {
        if (start != covered || len == 0) throw contract_error("ranges must be ordered and tile [0,m)");
        covered += len;
    }
    if (covered != m) throw contract_error("ranges do not cover the token axis");
    std::vector<tensor> out;
    const double* a = cross_map.data();
    for (auto [start, len] : ranges) {
        std::vector<double> v(hw, 0.0);
        for (std::size_t i = 0; i < hw; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < len; ++j) s += a[i * m + start + j];
            v[i] = s / static_cast<double>(len);
        }
        out.push_back(tensor({hw}, std::move(v)));
    }
    return out;
}

// ----- indicator JSON (used by files on disk and by the tracklet stream) -----

inline nlohmann::json indicator_to_json(const indicator& ind) {
    nlohmann::json j;
    j["type"] = indicator_kind(ind);
    if (const auto* p = std::get_if<point_ind>(&ind)) {
        j["point"] = {p->x, p->y};
    } else if (const auto* ps = std::get_if<pose_ind>(&ind)) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : ps->points) pts.push_back({p.x, p.y});
        j["points"] = pts;
    } else if (const auto* b = std::get_if<box_ind>(&ind)) {
        j["box"] = {b->x0, b->y0, b->x1, b->y1};
    } else if (const auto* s = std::get_if<segment_ind>(&ind)) {
        // row-major run lengths, alternating starting with background
        std::string rle;
        std::size_t n = s->mask.size(), i = 0;
        bool fg = false;
        while (i < n) {
            std::size_t run = 0;
            while (i < n && (s->mask[i] != 0) == fg) {
                ++run;
                ++i;
            }
            if (!rle.empty()) rle += " ";
            rle += std::to_string(run);
            fg = !fg;
        }
        j["rle"] = rle;
        j["size"] = {s->h, s->w};
    } else if (const auto* t = std::get_if<text_ind>(&ind)) {
        j["ids"] = t->ids;
    }
    return j;
}

inline segment_ind segment_from_rle(const std::string& rle, std::size_t h, std::size_t w) {
    segment_ind s;
    s.h = h;
    s.w = w;
    s.mask.assign(h * w, 0);
    std::size_t pos = 0;
    bool fg = false;
    std::size_t i = 0;
    while (i < rle.size()) {
        while (i < rle.size() && rle[i] == ' ') ++i;
        if (i >= rle.size()) break;
        std::size_t run = 0;
        while (i < rle.size() && rle[i] >= '0' && rle[i] <= '9') {
            run = run * 10 + static_cast<std::size_t>(rle[i] - '0');
            ++i;
        }
        if (pos + run > h * w) throw io_error("rle overruns mask");
        if (fg) std::fill(s.mask.begin() + pos, s.mask.begin() + pos + run, std::uint8_t{1});
        pos += run;
        fg = !fg;
    }
    if (pos != h * w) throw io_error("rle does not cover mask");
    return s;
}

inline indicator indicator_from_json(const nlohmann::json& j, std::size_t frame_h,
                                     std::size_t frame_w) {
    std::string type = j.at("type").get<std::string>();
    if (type == "point") {
        auto a = j.at("point");
        return point_ind{a.at(0).get<double>(), a.at(1).get<double>()};
    }
    if (type == "pose") {
        pose_ind ps;
        for (const auto& a : j.at("points"))
            ps.points.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
        return ps;
    }
    if (type == "box") {
        auto a = j.at("box");
        return box_ind{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>(),
                       a.at(3).get<double>()};
    }
    if (type == "segment") {
        if (j.contains("rle")) {
            std::size_t h = frame_h, w = frame_w;
            if (j.contains("size")) {
                h = j.at("size").at(0).get<std::size_t>();
                w = j.at("size").at(1).get<std::size_t>();
            }
            return segment_from_rle(j.at("rle").get<std::string>(), h, w);
        }
        throw config_error("segment indicator needs an rle field (or a mask file at CLI level)");
    }
    if (type == "text") {
        text_ind t;
        for (const auto& v : j.at("ids")) t.ids.push_back(v.get<std::size_t>());
        return t;
    }
    throw config_error("unknown indicator type: " + type);
}

} // namespace dintr
