#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dintr/conditioning.hpp"
#include "dintr/errors.hpp"
#include "dintr/metrics.hpp"
#include "dintr/synthvid.hpp"
#include "dintr/tracker.hpp"

namespace dintr {

// Ground-truth JSONL (one line per frame) and the evaluation report joining a
// predicted tracklet stream against it. Predictions pair with objects by id.
// Frame 0 echoes the given indicators, so reports cover frames >= 1 unless
// asked otherwise.

inline std::string gt_to_jsonl(const rendered_scene& rs) {
    std::string out;
    for (std::size_t t = 0; t < rs.frames.size(); ++t) {
        nlohmann::json line;
        line["frame"] = t;
        line["objects"] = nlohmann::json::array();
        for (std::size_t i = 0; i < rs.truth.per_frame[t].size(); ++i) {
            const object_truth& tr = rs.truth.per_frame[t][i];
            nlohmann::json oj;
            oj["id"] = i;
            oj["center"] = {tr.cx, tr.cy};
            oj["box"] = {tr.box.x0, tr.box.y0, tr.box.x1, tr.box.y1};
            nlohmann::json seg = indicator_to_json(indicator(tr.mask));
            oj["mask_rle"] = seg.at("rle");
            oj["mask_h"] = tr.mask.h;
            oj["mask_w"] = tr.mask.w;
            nlohmann::json kps = nlohmann::json::array();
            for (std::size_t k = 0; k + 1 < tr.keypoints.size(); k += 2)
                kps.push_back({tr.keypoints[k], tr.keypoints[k + 1]});
            oj["keypoints"] = kps;
            oj["visible"] = tr.visible;
            line["objects"].push_back(oj);
        }
        out += line.dump();
        out += "\n";
    }
    return out;
}

struct gt_data {
    std::size_t h = 0, w = 0;
    std::vector<std::vector<object_truth>> per_frame;
};

inline gt_data gt_from_jsonl(const std::string& text) {
    gt_data gt;
    std::istringstream in(text);
    std::string line;
    std::size_t frame_idx = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw io_error("bad ground-truth line " + std::to_string(frame_idx) + ": " + e.what());
        }
        if (j.at("frame").get<std::size_t>() != frame_idx)
            throw io_error("ground-truth frames out of order at line " + std::to_string(frame_idx));
        std::vector<object_truth> objs;
        for (const auto& oj : j.at("objects")) {
            object_truth tr;
            tr.cx = oj.at("center").at(0).get<double>();
            tr.cy = oj.at("center").at(1).get<double>();
            tr.box = box_ind{oj.at("box").at(0).get<double>(), oj.at("box").at(1).get<double>(),
                             oj.at("box").at(2).get<double>(), oj.at("box").at(3).get<double>()};
            std::size_t mh = oj.at("mask_h").get<std::size_t>();
            std::size_t mw = oj.at("mask_w").get<std::size_t>();
            tr.mask = segment_from_rle(oj.at("mask_rle").get<std::string>(), mh, mw);
            for (const auto& kp : oj.at("keypoints")) {
                tr.keypoints.push_back(kp.at(0).get<double>());
                tr.keypoints.push_back(kp.at(1).get<double>());
            }
            tr.visible = oj.at("visible").get<bool>();
            gt.h = tr.mask.h;
            gt.w = tr.mask.w;
            objs.push_back(std::move(tr));
        }
        gt.per_frame.push_back(std::move(objs));
        ++frame_idx;
    }
    if (gt.per_frame.empty()) throw io_error("empty ground-truth stream");
    return gt;
}

// The stationary baseline: every frame repeats the initial indicator.
inline std::vector<tracklet> zero_motion_tracklets(const std::vector<indicator>& initial,
                                                   std::size_t frames) {
    std::vector<tracklet> out(initial.size());
    for (std::size_t i = 0; i < initial.size(); ++i) {
        out[i].id = i;
        out[i].kind = indicator_kind(initial[i]);
        tracklet_entry e;
        e.ind = initial[i];
        e.conf = 1.0;
        if (const auto* ps = std::get_if<pose_ind>(&initial[i]))
            e.kp_lost.assign(ps->points.size(), false);
        out[i].entries.assign(frames, e);
    }
    return out;
}

namespace detail {

inline point_ind representative_point(const indicator& ind, std::size_t H, std::size_t W) {
    if (const auto* p = std::get_if<point_ind>(&ind)) return *p;
    if (const auto* ps = std::get_if<pose_ind>(&ind)) {
        double sx = 0, sy = 0;
        for (const auto& p : ps->points) {
            sx += p.x;
            sy += p.y;
        }
        double n = std::max<std::size_t>(ps->points.size(), 1);
        return {sx / n, sy / n};
    }
    if (const auto* b = std::get_if<box_ind>(&ind))
        return {(b->x0 + b->x1 + 1.0) / 2.0, (b->y0 + b->y1 + 1.0) / 2.0};
    if (const auto* s = std::get_if<segment_ind>(&ind)) {
        double sx = 0, sy = 0, n = 0;
        for (std::size_t y = 0; y < s->h; ++y)
            for (std::size_t x = 0; x < s->w; ++x)
                if (s->mask[y * s->w + x]) {
                    sx += static_cast<double>(x) + 0.5;
                    sy += static_cast<double>(y) + 0.5;
                    n += 1.0;
                }
        if (n > 0) return {sx / n, sy / n};
    }
    return {static_cast<double>(W) / 2.0, static_cast<double>(H) / 2.0};
}

} // namespace detail

struct eval_request {
    bool point = true, pose = true, box = true, mask = true, jf = true, id = true;
    std::size_t start_frame = 1;
    double boundary_tol = 1.0;

    static eval_request from_names(const std::vector<std::string>& names) {
        eval_request r;
        r.point = r.pose = r.box = r.mask = r.jf = r.id = false;
        for (const auto& n : names) {
            if (n == "point")
                r.point = true;
            else if (n == "pose")
                r.pose = true;
            else if (n == "box")
                r.box = true;
            else if (n == "mask")
                r.mask = true;
            else if (n == "jf")
                r.jf = true;
            else if (n == "id")
                r.id = true;
            else
                throw config_error("unknown metric: " + n);
        }
        return r;
    }
};

inline nlohmann::json evaluate(const std::vector<tracklet>& pred, const gt_data& gt,
                               const eval_request& req = eval_request{}) {
    if (pred.empty()) throw contract_error("evaluate: no predicted tracklets");
    std::size_t frames = gt.per_frame.size();
    for (const auto& tr : pred)
        if (tr.entries.size() != frames)
            throw contract_error("evaluate: prediction/ground-truth frame counts differ");
    if (req.start_frame >= frames)
        throw contract_error("evaluate: no frames at or after start_frame");
    for (const auto& tr : pred)
        if (tr.id >= gt.per_frame[0].size())
            throw contract_error("evaluate: predicted id has no ground-truth object");

    nlohmann::json rep;
    rep["frames_evaluated"] = frames - req.start_frame;

    if (req.point) {
        std::vector<point_ind> pp, tp;
        for (const auto& tr : pred) {
            if (tr.kind != "point") continue;
            for (std::size_t t = req.start_frame; t < frames; ++t) {
                pp.push_back(std::get<point_ind>(tr.entries[t].ind));
                const auto& o = gt.per_frame[t][tr.id];
                tp.push_back({o.cx, o.cy});
            }
        }
        if (!pp.empty()) {
            point_report r = point_accuracy_report(pp, tp);
            rep["point"] = {{"radii", r.radii}, {"rates", r.rates}, {"average", r.average}};
        }
    }
    if (req.pose) {
        std::vector<pose_ind> pp, tp;
        for (const auto& tr : pred) {
            if (tr.kind != "pose") continue;
            for (std::size_t t = req.start_frame; t < frames; ++t) {
                pp.push_back(std::get<pose_ind>(tr.entries[t].ind));
                const auto& o = gt.per_frame[t][tr.id];
                pose_ind g;
                for (std::size_t k = 0; k + 1 < o.keypoints.size(); k += 2)
                    g.points.push_back({o.keypoints[k], o.keypoints[k + 1]});
                tp.push_back(std::move(g));
            }
        }
        if (!pp.empty()) {
            nlohmann::json pr;
            pr["radii"] = default_point_radii();
            pr["rates"] = nlohmann::json::array();
            double acc = 0.0;
            for (double r : default_point_radii()) {
                double v = pose_accuracy(pp, tp, r);
                pr["rates"].push_back(v);
                acc += v;
            }
            pr["average"] = acc / static_cast<double>(default_point_radii().size());
            rep["pose"] = pr;
        }
    }
    if (req.box) {
        std::vector<box_ind> pb, tb;
        for (const auto& tr : pred) {
            if (tr.kind != "box") continue;
            for (std::size_t t = req.start_frame; t < frames; ++t) {
                if (!std::holds_alternative<box_ind>(tr.entries[t].ind)) continue;
                pb.push_back(std::get<box_ind>(tr.entries[t].ind));
                tb.push_back(gt.per_frame[t][tr.id].box);
            }
        }
        if (!pb.empty()) rep["box"] = {{"mean_iou", mean_box_iou(pb, tb)}};
    }
    if (req.mask || req.jf) {
        std::vector<segment_ind> pm, tm;
        for (const auto& tr : pred) {
            if (tr.kind != "segment") continue;
            for (std::size_t t = req.start_frame; t < frames; ++t) {
                pm.push_back(std::get<segment_ind>(tr.entries[t].ind));
                tm.push_back(gt.per_frame[t][tr.id].mask);
            }
        }
        if (!pm.empty()) {
            double j = mean_mask_jaccard(pm, tm);
            double f = mean_boundary_f(pm, tm, req.boundary_tol);
            if (req.mask) rep["mask"] = {{"j", j}, {"f", f}};
            if (req.jf) rep["jf"] = 0.5 * (j + f);
        }
    }
    if (req.id) {
        std::vector<std::vector<point_ind>> tracks(pred.size()), truth(gt.per_frame[0].size());
        for (std::size_t i = 0; i < pred.size(); ++i)
            for (std::size_t t = req.start_frame; t < frames; ++t)
                tracks[i].push_back(
                    detail::representative_point(pred[i].entries[t].ind, gt.h, gt.w));
        for (std::size_t j = 0; j < truth.size(); ++j)
            for (std::size_t t = req.start_frame; t < frames; ++t)
                truth[j].push_back({gt.per_frame[t][j].cx, gt.per_frame[t][j].cy});
        id_report r = id_consistency(tracks, truth);
        rep["id"] = {{"switches", r.switches}, {"rate", r.rate}};
    }
    return rep;
}

} // namespace dintr
