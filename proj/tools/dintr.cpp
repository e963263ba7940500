// dintr: synthesize scenes, track targets across frame pairs, score tracklet
// streams, benchmark the two processes, run the invariant suite, and draw
// predictions back onto frames. Exit codes: 0 success, 2 configuration
// error, 3 runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dintr/bench.hpp"
#include "dintr/codec.hpp"
#include "dintr/config.hpp"
#include "dintr/errors.hpp"
#include "dintr/evalrun.hpp"
#include "dintr/overlay.hpp"
#include "dintr/synthvid.hpp"
#include "dintr/tracker.hpp"
#include "dintr/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<dintr::frame> load_frames(const std::string& dir) {
    std::vector<fs::path> paths;
    if (!fs::is_directory(dir)) throw dintr::io_error("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.size() < 2) throw dintr::io_error("need at least two .ppm frames in " + dir);
    std::vector<dintr::frame> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(dintr::load_ppm(p));
    return frames;
}

std::vector<dintr::indicator> load_indicators(const std::string& path, std::size_t H,
                                              std::size_t W) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(dintr::read_file(path));
    } catch (const dintr::error&) {
        throw;
    } catch (const std::exception& e) {
        throw dintr::config_error("invalid indicator JSON in " + path + ": " + e.what());
    }
    nlohmann::json arr;
    if (j.is_array())
        arr = j;
    else if (j.is_object() && j.contains("targets"))
        arr = j.at("targets");
    else if (j.is_object())
        arr = nlohmann::json::array({j});
    else
        throw dintr::config_error("indicator file must hold an object or array: " + path);
    std::vector<dintr::indicator> out;
    for (const auto& e : arr) out.push_back(dintr::indicator_from_json(e, H, W));
    if (out.empty()) throw dintr::config_error("indicator file lists no targets: " + path);
    return out;
}

std::string frame_name(std::size_t idx) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05zu.ppm", idx);
    return buf;
}

dintr::scene_spec resolve_scene(const std::string& name) {
    if (name == "default") return dintr::default_scene();
    if (name == "two_object") return dintr::two_object_scene();
    if (fs::exists(name)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(dintr::read_file(name));
        } catch (const std::exception& e) {
            throw dintr::config_error("invalid scene JSON in " + name + ": " + e.what());
        }
        return dintr::scene_from_json(j);
    }
    throw dintr::config_error("unknown scene (not a preset, not a file): " + name);
}

int cmd_synth(const std::string& scene_name, const std::string& out_dir) {
    dintr::scene_spec sc = resolve_scene(scene_name);
    dintr::rendered_scene rs = dintr::render_scene(sc);
    fs::create_directories(out_dir);
    for (std::size_t t = 0; t < rs.frames.size(); ++t)
        dintr::save_ppm(fs::path(out_dir) / frame_name(t), rs.frames[t]);
    dintr::write_file(fs::path(out_dir) / "gt.jsonl", dintr::gt_to_jsonl(rs));
    nlohmann::json manifest;
    manifest["width"] = sc.width;
    manifest["height"] = sc.height;
    manifest["frames"] = sc.frames;
    manifest["scene"] = dintr::scene_to_json(sc);
    dintr::write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
    std::cout << out_dir << ": " << rs.frames.size() << " frames, " << sc.objects.size()
              << " objects\n";
    return 0;
}

int cmd_track(const std::string& config_path, std::string seq, std::string ind_path,
              std::string out_path, bool seed_set, std::uint64_t seed,
              const std::string& emit_config) {
    dintr::run_config cfg =
        config_path.empty() ? dintr::run_config{} : dintr::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (seq.empty()) seq = cfg.seq_path;
    if (ind_path.empty()) ind_path = cfg.indicator_path;
    if (out_path.empty()) out_path = cfg.out_path;
    if (seq.empty()) throw dintr::config_error("missing paths.seq (or --seq)");
    if (ind_path.empty()) throw dintr::config_error("missing paths.indicator (or --indicator)");
    if (out_path.empty()) throw dintr::config_error("missing paths.out (or --out)");

    std::vector<dintr::frame> frames = load_frames(seq);
    std::vector<dintr::indicator> inds = load_indicators(ind_path, frames[0].h, frames[0].w);
    dintr::track_run run = dintr::track_sequence(frames, inds, cfg, seq);
    dintr::write_file(out_path, dintr::tracklets_to_jsonl(run.tracklets));
    if (!emit_config.empty())
        dintr::write_file(emit_config, dintr::config_to_json(cfg).dump(2) + "\n");
    std::cerr << "tracked " << run.pairs << " pairs, " << run.net_evals << " net evals ("
              << run.expected_evals_per_pair << "/pair), " << run.wall_seconds << " s total, "
              << run.finetune_seconds << " s finetuning\n";
    return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path,
             const std::string& metric_list, const std::string& out_path) {
    dintr::gt_data gt = dintr::gt_from_jsonl(dintr::read_file(gt_path));
    std::vector<dintr::tracklet> pred =
        dintr::tracklets_from_jsonl(dintr::read_file(pred_path), gt.h, gt.w);
    dintr::eval_request req;
    if (!metric_list.empty()) {
        std::vector<std::string> names;
        std::string cur;
        for (char c : metric_list + ",") {
            if (c == ',') {
                if (!cur.empty()) names.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        req = dintr::eval_request::from_names(names);
    }
    nlohmann::json rep = dintr::evaluate(pred, gt, req);
    std::string text = rep.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        dintr::write_file(out_path, text);
    return 0;
}

int cmd_bench(const std::string& out_dir, std::vector<std::size_t> Ts, std::size_t repeats,
              std::uint64_t seed, std::size_t budget, double lr) {
    dintr::bench_settings bs;
    if (!Ts.empty()) bs.Ts = std::move(Ts);
    bs.repeats = repeats;
    bs.seed = seed;
    bs.budget_steps = budget;
    bs.lr = lr;
    dintr::bench_result res = dintr::run_bench(bs);
    fs::create_directories(out_dir);
    dintr::write_file(fs::path(out_dir) / "bench.csv", res.csv());
    dintr::write_file(fs::path(out_dir) / "bench.json", res.to_json().dump(2) + "\n");
    dintr::write_file(fs::path(out_dir) / "bench.svg", res.svg());
    std::cout << res.csv();
    return 0;
}

int cmd_verify(std::uint64_t seed, const std::string& out_path) {
    dintr::verify_report rep = dintr::run_verification(seed);
    std::string text = rep.to_json().dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        dintr::write_file(out_path, text);
    for (const auto& c : rep.checks)
        std::cerr << (c.pass ? "PASS " : "FAIL ") << c.name << " (measured " << c.measured
                  << ", tolerance " << c.tolerance << ")\n";
    return rep.all_pass() ? 0 : 3;
}

int cmd_overlay(const std::string& seq, const std::string& pred_path, const std::string& out_dir) {
    std::vector<dintr::frame> frames = load_frames(seq);
    std::vector<dintr::tracklet> pred =
        dintr::tracklets_from_jsonl(dintr::read_file(pred_path), frames[0].h, frames[0].w);
    std::vector<dintr::frame> drawn = dintr::overlay_sequence(frames, pred);
    fs::create_directories(out_dir);
    for (std::size_t t = 0; t < drawn.size(); ++t)
        dintr::save_ppm(fs::path(out_dir) / frame_name(t), drawn[t]);
    std::cout << out_dir << ": " << drawn.size() << " annotated frames\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-interpolation tracker toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "render a synthetic scene to PPM frames + truth");
    std::string synth_scene = "default", synth_out;
    synth->add_option("--scene", synth_scene, "preset name (default, two_object) or scene JSON");
    synth->add_option("--out", synth_out, "output directory")->required();

    auto* track = app.add_subcommand("track", "track targets across a frame directory");
    std::string tr_config, tr_seq, tr_ind, tr_out, tr_emit;
    std::uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    track->add_option("--config", tr_config, "run config JSON");
    track->add_option("--seq", tr_seq, "frame directory (*.ppm)");
    track->add_option("--indicator", tr_ind, "initial target indicators JSON");
    track->add_option("--out", tr_out, "output tracklet JSONL");
    track->add_option("--emit-config", tr_emit, "write the effective config JSON here");
    track->add_option("--seed", tr_seed, "override config seed")
        ->each([&](const std::string&) { tr_seed_set = true; });

    auto* eval = app.add_subcommand("eval", "score a tracklet stream against ground truth");
    std::string ev_gt, ev_pred, ev_metrics, ev_out;
    eval->add_option("--gt", ev_gt, "ground-truth JSONL")->required();
    eval->add_option("--pred", ev_pred, "predicted tracklet JSONL")->required();
    eval->add_option("--metrics", ev_metrics, "comma list: point,pose,box,mask,jf,id");
    eval->add_option("--out", ev_out, "write the report here instead of stdout");

    auto* bench = app.add_subcommand("bench", "time both processes across step counts");
    const dintr::bench_settings bn_defaults;
    std::string bn_out = ".";
    std::vector<std::size_t> bn_T;
    std::size_t bn_repeats = bn_defaults.repeats, bn_budget = bn_defaults.budget_steps;
    std::uint64_t bn_seed = bn_defaults.seed;
    double bn_lr = bn_defaults.lr;
    bench->add_option("--out", bn_out, "output directory for csv/json/svg");
    bench->add_option("--T", bn_T, "step counts (default 50 100 150 200 250)");
    bench->add_option("--repeats", bn_repeats, "timing repeats per cell");
    bench->add_option("--seed", bn_seed, "fixture seed");
    bench->add_option("--budget", bn_budget, "finetuning steps per cell");
    bench->add_option("--lr", bn_lr, "finetuning learning rate");

    auto* verify = app.add_subcommand("verify", "run the invariant suite");
    std::uint64_t vf_seed = 7;
    std::string vf_out;
    verify->add_option("--seed", vf_seed, "probe seed");
    verify->add_option("--out", vf_out, "write the JSON report here instead of stdout");

    auto* overlay = app.add_subcommand("overlay", "draw a tracklet stream onto frames");
    std::string ov_seq, ov_pred, ov_out;
    overlay->add_option("--seq", ov_seq, "frame directory (*.ppm)")->required();
    overlay->add_option("--pred", ov_pred, "tracklet JSONL")->required();
    overlay->add_option("--out", ov_out, "output directory")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_scene, synth_out);
        if (track->parsed())
            return cmd_track(tr_config, tr_seq, tr_ind, tr_out, tr_seed_set, tr_seed, tr_emit);
        if (eval->parsed()) return cmd_eval(ev_gt, ev_pred, ev_metrics, ev_out);
        if (bench->parsed()) return cmd_bench(bn_out, bn_T, bn_repeats, bn_seed, bn_budget, bn_lr);
        if (verify->parsed()) return cmd_verify(vf_seed, vf_out);
        if (overlay->parsed()) return cmd_overlay(ov_seq, ov_pred, ov_out);
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const dintr::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
