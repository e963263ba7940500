#pragma once

#include <chrono>
#include <cstdlib>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dintr/codec.hpp"
#include "dintr/conditioning.hpp"
#include "dintr/config.hpp"
#include "dintr/denoiser.hpp"
#include "dintr/engine.hpp"
#include "dintr/errors.hpp"
#include "dintr/extraction.hpp"

namespace dintr {

// Online auto-regressive tracking: per frame pair, build condition tokens from
// the current indicators, finetune the model on that pair alone, run the
// configured process with attention capture, extract per-target saliency, and
// map it back to indicators. Each target keeps one tracklet entry per frame;
// frame 0 echoes the input indicator.

struct tracklet_entry {
    indicator ind;
    double conf = 0.0;
    bool lost = false;
    std::vector<bool> kp_lost; // per-keypoint flags (pose only)
};

struct tracklet {
    std::size_t id = 0;
    std::string kind; // kind of the per-frame outputs
    std::vector<tracklet_entry> entries;
};

struct track_run {
    run_config cfg;
    std::string seq_path;
    std::vector<tracklet> tracklets;
    std::size_t pairs = 0;
    std::size_t net_evals = 0;
    std::size_t expected_evals_per_pair = 0;
    double wall_seconds = 0.0;
    double finetune_seconds = 0.0;
};

namespace detail {

struct tau_layout {
    condition_tokens tokens;
    // block indices per target, in block order; pose targets own one block per
    // keypoint; the optional whole-frame context block is last and unowned
    std::vector<std::vector<std::size_t>> target_blocks;
};

// Square neighborhood of a point, clamped to the frame, used to pool the
// local appearance that travels with the target.
inline box_ind local_box(double x, double y, double radius, std::size_t H, std::size_t W) {
    box_ind b;
    b.x0 = std::max(0.0, std::floor(x - radius));
    b.y0 = std::max(0.0, std::floor(y - radius));
    b.x1 = std::min(static_cast<double>(W - 1), std::ceil(x + radius));
    b.y1 = std::min(static_cast<double>(H - 1), std::ceil(y + radius));
    return b;
}

// Centroid of an indicator's geometry in pixel coordinates. Returns false for
// text, which carries no location.
inline bool indicator_center(const indicator& ind, double& cx, double& cy) {
    if (const auto* p = std::get_if<point_ind>(&ind)) {
        cx = p->x;
        cy = p->y;
        return true;
    }
    if (const auto* ps = std::get_if<pose_ind>(&ind)) {
        double sx = 0, sy = 0;
        for (const auto& kp : ps->points) {
            sx += kp.x;
            sy += kp.y;
        }
        cx = sx / static_cast<double>(ps->points.size());
        cy = sy / static_cast<double>(ps->points.size());
        return true;
    }
    if (const auto* b = std::get_if<box_ind>(&ind)) {
        cx = (b->x0 + b->x1) / 2.0;
        cy = (b->y0 + b->y1) / 2.0;
        return true;
    }
    if (const auto* s = std::get_if<segment_ind>(&ind)) {
        double sx = 0, sy = 0, n = 0;
        for (std::size_t y = 0; y < s->h; ++y)
            for (std::size_t x = 0; x < s->w; ++x)
                if (s->mask[y * s->w + x]) {
                    sx += static_cast<double>(x) + 0.5;
                    sy += static_cast<double>(y) + 0.5;
                    n += 1.0;
                }
        if (n == 0) throw degenerate_indicator_error("empty segment mask");
        cx = sx / n;
        cy = sy / n;
        return true;
    }
    return false;
}

inline tau_layout build_tau(const std::vector<indicator>& inds, const tensor& latent,
                            const condition_maps& maps, const run_config& cfg, std::size_t H,
                            std::size_t W) {
    // One appearance token per geometric target (pooled latent features around
    // its current geometry). The token matches the object wherever it sits in
    // the near-endpoint latents; a separate positional search gate narrows the
    // answer to the neighborhood of the previous location. Keeping the block
    // single-token matters: tokens in one cross-attention softmax compete for
    // row mass, so a same-target positional token would punch a hole in the
    // appearance column exactly where both agree.
    tau_layout out;
    double radius = cfg.sigma * static_cast<double>(cfg.patch);
    std::vector<tensor> blocks;
    auto look_at = [&](const point_ind& p) {
        return box_tokens(local_box(p.x, p.y, radius, H, W), latent, maps, H, W);
    };
    for (const auto& ind : inds) {
        std::vector<std::size_t> owned;
        if (const auto* p = std::get_if<point_ind>(&ind)) {
            owned.push_back(blocks.size());
            blocks.push_back(look_at(*p));
        } else if (const auto* ps = std::get_if<pose_ind>(&ind)) {
            validate_indicator(ind, H, W);
            for (const auto& kp : ps->points) {
                owned.push_back(blocks.size());
                blocks.push_back(look_at(kp));
            }
        } else if (const auto* b = std::get_if<box_ind>(&ind)) {
            owned.push_back(blocks.size());
            blocks.push_back(box_tokens(*b, latent, maps, H, W));
        } else if (const auto* s = std::get_if<segment_ind>(&ind)) {
            owned.push_back(blocks.size());
            blocks.push_back(segment_tokens(*s, latent, maps, H, W));
        } else if (const auto* t = std::get_if<text_ind>(&ind)) {
            owned.push_back(blocks.size());
            blocks.push_back(text_tokens(*t, maps));
        }
        out.target_blocks.push_back(owned);
    }
    if (cfg.context_token) {
        // whole-frame pooled token: keeps cross-attention non-degenerate when a
        // single target would otherwise receive every row's full unit mass
        box_ind full{0.0, 0.0, static_cast<double>(W - 1), static_cast<double>(H - 1)};
        blocks.push_back(box_tokens(full, latent, maps, H, W));
    }
    out.tokens = pack_targets(blocks);
    return out;
}

// Width of the positional search window, in latent cells. Wide enough to admit
// plausible inter-frame motion, narrow enough to separate look-alike objects.
constexpr double search_sigma_cells = 1.5;

// Saliency-weighted centroid of the above-half-max pixels near the argmax.
// The argmax alone quantizes to the upsampling grid, which swallows sub-cell
// motion; the centroid recovers the fractional part. Throws lost_target_error
// on an all-zero map, like the plain argmax read-out.
inline point_ind refine_peak(const fused_saliency& sal, double radius_px) {
    point_ind peak = saliency_point(sal);
    double thr = 0.5 * sal.max_value();
    double r2 = radius_px * radius_px;
    double sx = 0.0, sy = 0.0, mass = 0.0;
    for (std::size_t y = 0; y < sal.h; ++y)
        for (std::size_t x = 0; x < sal.w; ++x) {
            double v = sal.map[y * sal.w + x];
            if (v < thr) continue;
            double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            double dx = px - peak.x, dy = py - peak.y;
            if (dx * dx + dy * dy > r2) continue;
            sx += v * px;
            sy += v * py;
            mass += v;
        }
    if (mass <= 0.0) return peak;
    return point_ind{sx / mass, sy / mass};
}

// Multiply a fused saliency map by a Gaussian window centered on the previous
// location, then rescale the maximum back to 1 so threshold fractions keep
// their meaning. Leaves an all-zero map untouched (lost target downstream).
inline void apply_search_gate(fused_saliency& sal, double cx, double cy, double sigma_px) {
    double inv = 1.0 / (2.0 * sigma_px * sigma_px);
    double best = 0.0;
    for (std::size_t y = 0; y < sal.h; ++y)
        for (std::size_t x = 0; x < sal.w; ++x) {
            double dx = static_cast<double>(x) + 0.5 - cx;
            double dy = static_cast<double>(y) + 0.5 - cy;
            double& v = sal.map[y * sal.w + x];
            v *= std::exp(-(dx * dx + dy * dy) * inv);
            best = std::max(best, v);
        }
    if (best > 0.0)
        for (double& v : sal.map) v /= best;
}

inline process_trace run_process(const denoiser& model, const tensor& z0, const tensor& z1,
                                 const tensor& tau, const noise_schedule& s, const run_config& cfg,
                                 const noise_context& nc, bool capture) {
    if (cfg.process == process_kind::interpolate)
        return interpolate(model, z0, z1, tau, s, cfg.op, nc, capture);
    return reconstruct(model, z0, tau, s, capture, cfg.closed_form_inversion);
}

// snapshot/restore parameter values with fresh gradient buffers
inline std::map<std::string, std::vector<double>> snapshot_params(const denoiser& model) {
    std::map<std::string, std::vector<double>> snap;
    for (const auto& [name, p] : model.params()) snap[name] = p.values();
    return snap;
}

inline void restore_params(denoiser& model, const std::map<std::string, std::vector<double>>& snap) {
    for (auto& [name, p] : model.params()) {
        std::vector<double> vals = snap.at(name);
        p = tensor(p.shape(), std::move(vals), true);
    }
}

} // namespace detail

// Per-frame extraction for one target from already-fused block saliencies.
// Throws lost_target_error only for non-pose kinds; pose handles keypoints
// individually.
inline track_run track_sequence(const std::vector<frame>& frames,
                                const std::vector<indicator>& initial, const run_config& cfg,
                                const std::string& seq_path = "") {
    auto t_start = std::chrono::steady_clock::now();
    if (frames.size() < 2) throw contract_error("track_sequence needs at least two frames");
    if (initial.empty()) throw contract_error("track_sequence needs at least one indicator");
    std::size_t H = frames[0].h, W = frames[0].w;
    for (const auto& f : frames)
        if (f.h != H || f.w != W) throw shape_error("frames disagree on dimensions");
    check_patch(H, W, cfg.patch);
    cfg.validate();
    for (const auto& ind : initial) validate_indicator(ind, H, W);

    std::size_t grid_h = H / cfg.patch, grid_w = W / cfg.patch;
    std::size_t C = 3 * cfg.patch * cfg.patch;
    std::uint64_t model_seed = mix_seed(cfg.seed, "model");

    denoiser model = denoiser::init(cfg.model, C, grid_h, grid_w, model_seed);
    condition_maps maps = condition_maps::build(model_seed, grid_h, grid_w, C, cfg.model.embed_dim,
                                                cfg.patch, cfg.model.pos_scale, cfg.vocab_size);
    noise_schedule s = cfg.make_schedule();
    auto initial_params = detail::snapshot_params(model);

    std::vector<tensor> latents;
    latents.reserve(frames.size());
    for (const auto& f : frames) latents.push_back(encode_frame(f, cfg.patch));

    track_run run;
    run.cfg = cfg;
    run.seq_path = seq_path;
    run.expected_evals_per_pair =
        cfg.process == process_kind::interpolate ? s.T : (cfg.closed_form_inversion ? s.T : 2 * s.T);

    std::vector<indicator> current = initial;
    run.tracklets.resize(initial.size());
    for (std::size_t i = 0; i < initial.size(); ++i) {
        run.tracklets[i].id = i;
        bool is_text = std::holds_alternative<text_ind>(initial[i]);
        run.tracklets[i].kind = is_text ? "box" : indicator_kind(initial[i]);
        tracklet_entry first;
        first.ind = initial[i];
        first.conf = 1.0;
        if (const auto* ps = std::get_if<pose_ind>(&initial[i]))
            first.kp_lost.assign(ps->points.size(), false);
        run.tracklets[i].entries.push_back(first);
    }

    for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
        if (!cfg.warm_start) detail::restore_params(model, initial_params);
        const tensor& z0 = latents[t];
        const tensor& z1 = latents[t + 1];
        const std::vector<indicator>& cond_src = cfg.rebuild_from_initial ? initial : current;
        detail::tau_layout tau = detail::build_tau(cond_src, z0, maps, cfg, H, W);

        noise_context nc{mix_seed(cfg.noise_seed(), t)};
        finetune_config fc = cfg.make_finetune(cfg.process);
        fc.seed = mix_seed(fc.seed, t);
        auto t_ft = std::chrono::steady_clock::now();
        finetune(model, z0, z1, tau.tokens.tokens, s, fc, nc);
        run.finetune_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_ft).count();

        process_trace trace =
            detail::run_process(model, z0, z1, tau.tokens.tokens, s, cfg, nc, true);
        run.net_evals += trace.net_evals;
        ++run.pairs;

        attn_means means = accumulate(trace.records, s, cfg.extraction.window_fraction);
        std::vector<tensor> block_sal = split_attention(means.cross_mean, tau.tokens.ranges);

        double gate_px = detail::search_sigma_cells * static_cast<double>(cfg.patch);
        for (std::size_t i = 0; i < initial.size(); ++i) {
            const auto& owned = tau.target_blocks[i];
            tracklet_entry entry;
            const indicator& prev = run.tracklets[i].entries.back().ind;
            if (const auto* prev_pose = std::get_if<pose_ind>(&prev)) {
                pose_ind next;
                entry.kp_lost.assign(prev_pose->points.size(), false);
                double conf_sum = 0.0;
                for (std::size_t k = 0; k < owned.size(); ++k) {
                    fused_saliency sal = fuse(means, block_sal[owned[k]], cfg.extraction, grid_h,
                                              grid_w, cfg.patch);
                    double conf = sal.raw_max;
                    detail::apply_search_gate(sal, prev_pose->points[k].x, prev_pose->points[k].y,
                                              gate_px);
                    try {
                        next.points.push_back(detail::refine_peak(sal, gate_px));
                        conf_sum += conf;
                    } catch (const lost_target_error&) {
                        next.points.push_back(prev_pose->points[k]);
                        entry.kp_lost[k] = true;
                    }
                }
                entry.ind = next;
                entry.conf = conf_sum / static_cast<double>(owned.size());
                bool all_lost = true;
                for (bool b : entry.kp_lost) all_lost = all_lost && b;
                entry.lost = all_lost;
            } else {
                fused_saliency sal =
                    fuse(means, block_sal[owned[0]], cfg.extraction, grid_h, grid_w, cfg.patch);
                double conf = sal.raw_max;
                double cx = 0.0, cy = 0.0;
                if (detail::indicator_center(prev, cx, cy))
                    detail::apply_search_gate(sal, cx, cy, gate_px);
                try {
                    const std::string& kind = run.tracklets[i].kind;
                    if (kind == "point")
                        entry.ind = detail::refine_peak(sal, gate_px);
                    else
                        entry.ind = map_to_indicator(sal, kind, cfg.extraction);
                    entry.conf = conf;
                } catch (const lost_target_error&) {
                    entry.ind = prev;
                    entry.conf = 0.0;
                    entry.lost = true;
                }
            }
            run.tracklets[i].entries.push_back(entry);
            // text conditioning is frozen; other kinds follow the prediction
            if (!std::holds_alternative<text_ind>(current[i]) && !entry.lost)
                current[i] = entry.ind;
        }
    }
    run.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return run;
}

// One extraction pass conditioned on text only: threshold the fused saliency,
// take 4-connected components ranked by total saliency mass, return the top-M
// tight boxes.
inline std::vector<box_ind> bootstrap_from_text(const frame& f0, const frame& f1,
                                                const text_ind& text, const run_config& cfg) {
    std::size_t H = f0.h, W = f0.w;
    if (f1.h != H || f1.w != W) throw shape_error("bootstrap frames disagree on dimensions");
    check_patch(H, W, cfg.patch);
    cfg.validate();
    std::size_t grid_h = H / cfg.patch, grid_w = W / cfg.patch;
    std::size_t C = 3 * cfg.patch * cfg.patch;
    std::uint64_t model_seed = mix_seed(cfg.seed, "model");
    denoiser model = denoiser::init(cfg.model, C, grid_h, grid_w, model_seed);
    condition_maps maps = condition_maps::build(model_seed, grid_h, grid_w, C, cfg.model.embed_dim,
                                                cfg.patch, cfg.model.pos_scale, cfg.vocab_size);
    noise_schedule s = cfg.make_schedule();
    tensor z0 = encode_frame(f0, cfg.patch), z1 = encode_frame(f1, cfg.patch);
    detail::tau_layout tau =
        detail::build_tau({indicator(text)}, z0, maps, cfg, H, W);
    noise_context nc{mix_seed(cfg.noise_seed(), 0)};
    process_trace trace = detail::run_process(model, z0, z1, tau.tokens.tokens, s, cfg, nc, true);
    attn_means means = accumulate(trace.records, s, cfg.extraction.window_fraction);
    std::vector<tensor> block_sal = split_attention(means.cross_mean, tau.tokens.ranges);
    fused_saliency sal;
    try {
        sal = fuse(means, block_sal[0], cfg.extraction, grid_h, grid_w, cfg.patch);
        if (sal.max_value() <= 0.0) throw lost_target_error("flat saliency");
    } catch (const lost_target_error& e) {
        throw bootstrap_error(std::string("no saliency above threshold: ") + e.what());
    }
    std::vector<std::uint8_t> mask = saliency_segment(sal, cfg.extraction.seg_threshold);
    // 4-connected components by flood fill
    std::vector<int> comp(mask.size(), -1);
    struct comp_info {
        double mass = 0.0;
        std::size_t x0, y0, x1, y1;
    };
    std::vector<comp_info> comps;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || comp[start] >= 0) continue;
        int id = static_cast<int>(comps.size());
        comp_info info{0.0, W, H, 0, 0};
        std::vector<std::size_t> stack{start};
        comp[start] = id;
        while (!stack.empty()) {
            std::size_t cur = stack.back();
            stack.pop_back();
            std::size_t y = cur / W, x = cur % W;
            info.mass += sal.map[cur];
            info.x0 = std::min(info.x0, x);
            info.y0 = std::min(info.y0, y);
            info.x1 = std::max(info.x1, x);
            info.y1 = std::max(info.y1, y);
            const long long dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int dir = 0; dir < 4; ++dir) {
                long long ny = static_cast<long long>(y) + dy[dir];
                long long nx = static_cast<long long>(x) + dx[dir];
                if (ny < 0 || nx < 0 || ny >= static_cast<long long>(H) ||
                    nx >= static_cast<long long>(W))
                    continue;
                std::size_t ni = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
                if (mask[ni] && comp[ni] < 0) {
                    comp[ni] = id;
                    stack.push_back(ni);
                }
            }
        }
        comps.push_back(info);
    }
    if (comps.empty()) throw bootstrap_error("no component above threshold");
    std::vector<std::size_t> order(comps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (comps[a].mass != comps[b].mass) return comps[a].mass > comps[b].mass;
        return a < b;
    });
    std::vector<box_ind> boxes;
    for (std::size_t r = 0; r < order.size() && r < cfg.bootstrap_targets; ++r) {
        const auto& c = comps[order[r]];
        boxes.push_back(box_ind{static_cast<double>(c.x0), static_cast<double>(c.y0),
                                static_cast<double>(c.x1), static_cast<double>(c.y1)});
    }
    return boxes;
}

// ----- tracklet JSONL -----
// One line per frame: {"frame":t,"targets":[{"id":..,"kind":..,<geometry>,
// "conf":..,"lost":..}, ...]}. Geometry: point [x,y]; pose points [[x,y],..]
// plus kp_lost; box [x0,y0,x1,y1]; segment RLE + size; text ids.

inline nlohmann::json target_entry_json(const tracklet& tr, std::size_t frame_idx) {
    const tracklet_entry& e = tr.entries.at(frame_idx);
    nlohmann::json j;
    j["id"] = tr.id;
    j["kind"] = indicator_kind(e.ind);
    nlohmann::json geo = indicator_to_json(e.ind);
    for (auto it = geo.begin(); it != geo.end(); ++it)
        if (it.key() != "type") j[it.key()] = it.value();
    j["conf"] = e.conf;
    j["lost"] = e.lost;
    if (!e.kp_lost.empty()) {
        nlohmann::json kl = nlohmann::json::array();
        for (bool b : e.kp_lost) kl.push_back(b);
        j["kp_lost"] = kl;
    }
    return j;
}

inline std::string tracklets_to_jsonl(const std::vector<tracklet>& tracklets) {
    if (tracklets.empty()) throw contract_error("no tracklets to serialize");
    std::size_t frames = tracklets[0].entries.size();
    for (const auto& tr : tracklets)
        if (tr.entries.size() != frames) throw contract_error("ragged tracklets");
    std::string out;
    for (std::size_t t = 0; t < frames; ++t) {
        nlohmann::json line;
        line["frame"] = t;
        line["targets"] = nlohmann::json::array();
        for (const auto& tr : tracklets) line["targets"].push_back(target_entry_json(tr, t));
        out += line.dump();
        out += "\n";
    }
    return out;
}

inline std::vector<tracklet> tracklets_from_jsonl(const std::string& text, std::size_t frame_h = 0,
                                                  std::size_t frame_w = 0) {
    std::vector<tracklet> out;
    std::istringstream in(text);
    std::string line;
    std::size_t frame_idx = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw io_error("bad JSONL line " + std::to_string(frame_idx) + ": " + e.what());
        }
        if (j.at("frame").get<std::size_t>() != frame_idx)
            throw io_error("JSONL frames out of order at line " + std::to_string(frame_idx));
        for (const auto& tj : j.at("targets")) {
            std::size_t id = tj.at("id").get<std::size_t>();
            if (out.size() <= id) out.resize(id + 1);
            tracklet& tr = out[id];
            tr.id = id;
            nlohmann::json geo = tj;
            geo["type"] = tj.at("kind");
            tracklet_entry e;
            e.ind = indicator_from_json(geo, frame_h, frame_w);
            e.conf = tj.value("conf", 0.0);
            e.lost = tj.value("lost", false);
            if (tj.contains("kp_lost"))
                for (const auto& b : tj.at("kp_lost")) e.kp_lost.push_back(b.get<bool>());
            if (tr.entries.size() != frame_idx)
                throw io_error("target " + std::to_string(id) + " missing from an earlier frame");
            tr.kind = indicator_kind(e.ind);
            tr.entries.push_back(e);
        }
        ++frame_idx;
    }
    if (out.empty()) throw io_error("empty tracklet stream");
    for (const auto& tr : out)
        if (tr.entries.size() != frame_idx) throw io_error("ragged tracklet stream");
    return out;
}

// DINTR_THREADS caps how many sequences run concurrently (each sequence is
// strictly sequential internally).
inline std::size_t thread_cap() {
    const char* env = std::getenv("DINTR_THREADS");
    if (!env) return 1;
    long v = std::strtol(env, nullptr, 10);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
}

template <typename Fn>
inline void for_each_sequence(std::size_t count, Fn fn) {
    std::size_t threads = std::min(thread_cap(), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t next = 0;
    for (std::size_t chunk = 0; chunk < threads; ++chunk) {
        std::size_t begin = next, end = begin + (count - begin) / (threads - chunk);
        next = end;
        pool.emplace_back([begin, end, &fn] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace dintr
