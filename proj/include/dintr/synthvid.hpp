#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dintr/codec.hpp"
#include "dintr/conditioning.hpp"
#include "dintr/errors.hpp"

namespace dintr {

// Procedural scenes with analytically known motion. Frames are rendered with
// 4x4 supersampling so edges are smooth; ground truth (center, tight box,
// mask) is computed from the geometry, not from the rendered pixels, except
// that masks/boxes use the pixel-center-inside rule so they are exact for the
// discrete grid.

struct object_spec {
    std::string kind = "disc"; // disc | square
    double size = 6.0;         // radius (disc) or half side (square)
    std::uint8_t color[3] = {230, 220, 90};
    double start_x = 16.0, start_y = 16.0;
    double vel_x = 1.0, vel_y = 0.0;   // pixels per frame
    double amp_x = 0.0, amp_y = 0.0;   // sinusoidal wobble amplitude
    double period = 16.0;              // wobble period in frames
    std::vector<double> keypoints;     // flat (dx, dy) offsets from the center
    long long vocab_id = -1;           // text handle, -1 = none

    void validate() const {
        if (kind != "disc" && kind != "square")
            throw config_error("object kind must be disc or square");
        if (!(size > 0.0)) throw config_error("object size must be positive");
        if (!(period > 0.0)) throw config_error("object period must be positive");
        if (keypoints.size() % 2 != 0)
            throw config_error("keypoints must be (dx, dy) pairs");
    }

    void center(std::size_t t, double& cx, double& cy) const {
        double ph = 2.0 * M_PI * static_cast<double>(t) / period;
        cx = start_x + vel_x * static_cast<double>(t) + amp_x * std::sin(ph);
        cy = start_y + vel_y * static_cast<double>(t) + amp_y * std::sin(ph);
    }

    bool contains(double cx, double cy, double px, double py) const {
        if (kind == "disc") {
            double dx = px - cx, dy = py - cy;
            return dx * dx + dy * dy <= size * size;
        }
        return std::abs(px - cx) <= size && std::abs(py - cy) <= size;
    }
};

struct scene_spec {
    std::size_t width = 64, height = 64, frames = 32;
    std::uint8_t background[3] = {25, 28, 35};
    std::vector<object_spec> objects;

    void validate() const {
        if (width == 0 || height == 0) throw config_error("scene dims must be positive");
        if (frames < 2) throw config_error("scene needs at least two frames");
        if (objects.empty()) throw config_error("scene needs at least one object");
        for (const auto& o : objects) o.validate();
    }
};

// Ground truth for one object in one frame.
struct object_truth {
    double cx = 0.0, cy = 0.0;       // analytic center
    box_ind box{0, 0, 0, 0};         // tight box over the mask
    segment_ind mask;                // pixel-center-inside occupancy
    std::vector<double> keypoints;   // flat (x, y) absolute positions
    bool visible = false;            // any mask pixel on screen
};

struct scene_truth {
    // truth[t][obj]
    std::vector<std::vector<object_truth>> per_frame;
};

inline frame render_frame(const scene_spec& sc, std::size_t t) {
    frame f;
    f.h = sc.height;
    f.w = sc.width;
    f.rgb.assign(f.h * f.w * 3, 0);
    std::vector<double> cxs(sc.objects.size()), cys(sc.objects.size());
    for (std::size_t o = 0; o < sc.objects.size(); ++o)
        sc.objects[o].center(t, cxs[o], cys[o]);
    constexpr int SS = 4;
    for (std::size_t y = 0; y < f.h; ++y) {
        for (std::size_t x = 0; x < f.w; ++x) {
            double acc[3] = {0, 0, 0};
            for (int sy = 0; sy < SS; ++sy) {
                for (int sx = 0; sx < SS; ++sx) {
                    double px = static_cast<double>(x) + (sx + 0.5) / SS;
                    double py = static_cast<double>(y) + (sy + 0.5) / SS;
                    const std::uint8_t* c = sc.background;
                    // later objects draw on top
                    for (std::size_t o = sc.objects.size(); o-- > 0;) {
                        if (sc.objects[o].contains(cxs[o], cys[o], px, py)) {
                            c = sc.objects[o].color;
                            break;
                        }
                    }
                    for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
                }
            }
            // quantize to the byte grid so in-memory frames match a PPM round-trip
            for (int ch = 0; ch < 3; ++ch)
                f.rgb[(y * f.w + x) * 3 + ch] =
                    static_cast<double>(to_byte(acc[ch] / (SS * SS) / 255.0)) / 255.0;
        }
    }
    return f;
}

inline object_truth truth_for(const scene_spec& sc, const object_spec& obj, std::size_t t) {
    object_truth tr;
    obj.center(t, tr.cx, tr.cy);
    tr.mask.h = sc.height;
    tr.mask.w = sc.width;
    tr.mask.mask.assign(sc.height * sc.width, 0);
    std::size_t x0 = sc.width, y0 = sc.height, x1 = 0, y1 = 0;
    for (std::size_t y = 0; y < sc.height; ++y)
        for (std::size_t x = 0; x < sc.width; ++x) {
            double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            if (obj.contains(tr.cx, tr.cy, px, py)) {
                tr.mask.mask[y * sc.width + x] = 1;
                tr.visible = true;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    if (tr.visible)
        tr.box = box_ind{static_cast<double>(x0), static_cast<double>(y0),
                         static_cast<double>(x1), static_cast<double>(y1)};
    for (std::size_t i = 0; i + 1 < obj.keypoints.size(); i += 2) {
        tr.keypoints.push_back(tr.cx + obj.keypoints[i]);
        tr.keypoints.push_back(tr.cy + obj.keypoints[i + 1]);
    }
    return tr;
}

struct rendered_scene {
    std::vector<frame> frames;
    scene_truth truth;
};

inline rendered_scene render_scene(const scene_spec& sc) {
    sc.validate();
    rendered_scene out;
    out.frames.reserve(sc.frames);
    out.truth.per_frame.resize(sc.frames);
    for (std::size_t t = 0; t < sc.frames; ++t) {
        out.frames.push_back(render_frame(sc, t));
        for (const auto& obj : sc.objects) out.truth.per_frame[t].push_back(truth_for(sc, obj, t));
    }
    return out;
}

/// The stock scene used by the end-to-end checks: one bright disc drifting
// diagonally across a dark background.
inline scene_spec default_scene() {
    scene_spec sc;
    sc.width = 64;
    sc.height = 64;
    sc.frames = 32;
    object_spec disc;
    disc.kind = "disc";
    disc.size = 6.0;
    disc.start_x = 12.0;
    disc.start_y = 16.0;
    disc.vel_x = 1.0;
    disc.vel_y = 0.5;
    disc.vocab_id = 3;
    sc.objects.push_back(disc);
    return sc;
}

// Two well-separated movers for identity-consistency checks.
inline scene_spec two_object_scene() {
    scene_spec sc;
    sc.width = 64;
    sc.height = 64;
    sc.frames = 16;
    object_spec a;
    a.kind = "disc";
    a.size = 5.0;
    a.start_x = 12.0;
    a.start_y = 14.0;
    a.vel_x = 1.0;
    a.vel_y = 0.0;
    a.color[0] = 235;
    a.color[1] = 210;
    a.color[2] = 80;
    a.vocab_id = 3;
    sc.objects.push_back(a);
    object_spec b;
    b.kind = "square";
    b.size = 5.0;
    b.start_x = 14.0;
    b.start_y = 48.0;
    b.vel_x = 1.0;
    b.vel_y = 0.0;
    b.color[0] = 90;
    b.color[1] = 200;
    b.color[2] = 235;
    b.vocab_id = 5;
    sc.objects.push_back(b);
    return sc;
}

// ----- JSON scene (de)serialization for the CLI -----

inline nlohmann::json scene_to_json(const scene_spec& sc) {
    nlohmann::json j;
    j["width"] = sc.width;
    j["height"] = sc.height;
    j["frames"] = sc.frames;
    j["background"] = {sc.background[0], sc.background[1], sc.background[2]};
    j["objects"] = nlohmann::json::array();
    for (const auto& o : sc.objects) {
        nlohmann::json oj;
        oj["kind"] = o.kind;
        oj["size"] = o.size;
        oj["color"] = {o.color[0], o.color[1], o.color[2]};
        oj["start"] = {o.start_x, o.start_y};
        oj["velocity"] = {o.vel_x, o.vel_y};
        oj["amplitude"] = {o.amp_x, o.amp_y};
        oj["period"] = o.period;
        if (!o.keypoints.empty()) oj["keypoints"] = o.keypoints;
        if (o.vocab_id >= 0) oj["vocab_id"] = o.vocab_id;
        j["objects"].push_back(oj);
    }
    return j;
}

inline scene_spec scene_from_json(const nlohmann::json& j) {
    scene_spec sc;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key != "width" && key != "height" && key != "frames" && key != "background" &&
            key != "objects")
            throw config_error("unknown scene key: " + key);
    }
    sc.width = j.at("width").get<std::size_t>();
    sc.height = j.at("height").get<std::size_t>();
    sc.frames = j.at("frames").get<std::size_t>();
    if (j.contains("background")) {
        auto bg = j.at("background");
        if (!bg.is_array() || bg.size() != 3) throw config_error("background must be [r,g,b]");
        for (int c = 0; c < 3; ++c) sc.background[c] = bg.at(c).get<std::uint8_t>();
    }
    for (const auto& oj : j.at("objects")) {
        for (auto it = oj.begin(); it != oj.end(); ++it) {
            const std::string& key = it.key();
            if (key != "kind" && key != "size" && key != "color" && key != "start" &&
                key != "velocity" && key != "amplitude" && key != "period" &&
                key != "keypoints" && key != "vocab_id")
                throw config_error("unknown object key: " + key);
        }
        object_spec o;
        o.kind = oj.at("kind").get<std::string>();
        o.size = oj.at("size").get<double>();
        if (oj.contains("color")) {
            auto c = oj.at("color");
            if (!c.is_array() || c.size() != 3) throw config_error("color must be [r,g,b]");
            for (int i = 0; i < 3; ++i) o.color[i] = c.at(i).get<std::uint8_t>();
        }
        if (oj.contains("start")) {
            o.start_x = oj.at("start").at(0).get<double>();
            o.start_y = oj.at("start").at(1).get<double>();
        }
        if (oj.contains("velocity")) {
            o.vel_x = oj.at("velocity").at(0).get<double>();
            o.vel_y = oj.at("velocity").at(1).get<double>();
        }
        if (oj.contains("amplitude")) {
            o.amp_x = oj.at("amplitude").at(0).get<double>();
            o.amp_y = oj.at("amplitude").at(1).get<double>();
        }
        if (oj.contains("period")) o.period = oj.at("period").get<double>();
        if (oj.contains("keypoints")) o.keypoints = oj.at("keypoints").get<std::vector<double>>();
        if (oj.contains("vocab_id")) o.vocab_id = oj.at("vocab_id").get<long long>();
        sc.objects.push_back(o);
    }
    sc.validate();
    return sc;
}

} // namespace dintr
