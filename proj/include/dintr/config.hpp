#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"

#include "dintr/denoiser.hpp"
#include "dintr/engine.hpp"
#include "dintr/errors.hpp"
#include "dintr/extraction.hpp"
#include "dintr/schedule.hpp"

namespace dintr {

// Whole-run configuration with strict parsing: unknown keys anywhere are
// config errors that name the offending path, and every field has a default so
// an empty JSON object is a valid config.
struct run_config {
    std::uint64_t seed = 1;

    // schedule
    std::size_t T = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // engine
    process_kind process = process_kind::interpolate;
    op_kind op = op_kind::offset_noisy;
    std::size_t finetune_steps = 50;
    double lr = 3e-5;
    bool full_unroll = true;
    bool closed_form_inversion = false;
    std::uint64_t engine_seed = 0; // 0 = derive from the run seed
    bool engine_seed_set = false;

    // denoiser
    denoiser_config model;

    // codec
    std::size_t patch = 4;

    // conditioning
    double sigma = 1.5;       // point-heatmap width in latent cells
    std::size_t vocab_size = 16;

    // extraction
    extraction_config extraction;

    // tracker
    bool context_token = true;        // add a whole-frame pseudo-target to tau
    bool warm_start = false;          // keep finetuned params across pairs
    bool rebuild_from_initial = false;// condition on frame-0 indicators forever
    std::size_t bootstrap_targets = 1;

    // paths (all optional; CLI flags take precedence)
    std::string seq_path, indicator_path, out_path;

    noise_schedule make_schedule() const { return make_linear_schedule(T, beta_start, beta_end); }

    std::uint64_t noise_seed() const { return engine_seed_set ? engine_seed : mix_seed(seed, "noise"); }

    finetune_config make_finetune(process_kind proc) const {
        finetune_config fc;
        fc.process = proc;
        fc.op = op;
        fc.steps = finetune_steps;
        fc.adam.lr = lr;
        fc.full_unroll = full_unroll;
        fc.seed = mix_seed(noise_seed(), "finetune");
        return fc;
    }

    void validate() const {
        model.validate();
        extraction.validate();
        if (patch == 0) throw config_error("codec.patch must be positive");
        if (!(sigma > 0.0)) throw config_error("conditioning.sigma must be > 0");
        if (vocab_size == 0) throw config_error("conditioning.vocab_size must be positive");
        if (bootstrap_targets == 0) throw config_error("tracker.bootstrap_targets must be >= 1");
        make_schedule(); // validates T / beta range
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
    if (!j.is_object()) throw config_error(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw config_error("unknown key " + where + "." + it.key());
}

} // namespace detail

inline run_config config_from_json(const nlohmann::json& j) {
    run_config c;
    detail::reject_unknown(j,
                           {"seed", "schedule", "engine", "denoiser", "codec", "conditioning",
                            "extraction", "tracker", "paths"},
                           "config");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();

    bool schedule_T_set = false, engine_T_set = false;
    std::size_t schedule_T = 0, engine_T = 0;
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::reject_unknown(s, {"T", "beta_start", "beta_end"}, "schedule");
        if (s.contains("T")) {
            schedule_T = s.at("T").get<std::size_t>();
            schedule_T_set = true;
        }
        if (s.contains("beta_start")) c.beta_start = s.at("beta_start").get<double>();
        if (s.contains("beta_end")) c.beta_end = s.at("beta_end").get<double>();
    }
    if (j.contains("engine")) {
        const auto& e = j.at("engine");
        detail::reject_unknown(e,
                               {"process", "operator", "T", "finetune_steps", "lr", "full_unroll",
                                "closed_form_inversion", "seed"},
                               "engine");
        if (e.contains("process")) c.process = process_from_name(e.at("process").get<std::string>());
        if (e.contains("operator")) c.op = op_from_name(e.at("operator").get<std::string>());
        if (e.contains("T")) {
            engine_T = e.at("T").get<std::size_t>();
            engine_T_set = true;
        }
        if (e.contains("finetune_steps")) c.finetune_steps = e.at("finetune_steps").get<std::size_t>();
        if (e.contains("lr")) c.lr = e.at("lr").get<double>();
        if (e.contains("full_unroll")) c.full_unroll = e.at("full_unroll").get<bool>();
        if (e.contains("closed_form_inversion"))
            c.closed_form_inversion = e.at("closed_form_inversion").get<bool>();
        if (e.contains("seed")) {
            c.engine_seed = e.at("seed").get<std::uint64_t>();
            c.engine_seed_set = true;
        }
    }
    // both sections may name T, but they must agree
    if (schedule_T_set && engine_T_set && schedule_T != engine_T)
        throw config_error("schedule.T and engine.T disagree");
    if (schedule_T_set) c.T = schedule_T;
    else if (engine_T_set) c.T = engine_T;

    if (j.contains("denoiser")) {
        const auto& d = j.at("denoiser");
        detail::reject_unknown(d, {"layers", "embed_dim", "pos_scale"}, "denoiser");
        if (d.contains("layers")) c.model.layers = d.at("layers").get<std::size_t>();
        if (d.contains("embed_dim")) c.model.embed_dim = d.at("embed_dim").get<std::size_t>();
        if (d.contains("pos_scale")) c.model.pos_scale = d.at("pos_scale").get<double>();
    }
    if (j.contains("codec")) {
        const auto& cd = j.at("codec");
        detail::reject_unknown(cd, {"patch"}, "codec");
        if (cd.contains("patch")) c.patch = cd.at("patch").get<std::size_t>();
    }
    if (j.contains("conditioning")) {
        const auto& cn = j.at("conditioning");
        detail::reject_unknown(cn, {"sigma", "vocab_size"}, "conditioning");
        if (cn.contains("sigma")) c.sigma = cn.at("sigma").get<double>();
        if (cn.contains("vocab_size")) c.vocab_size = cn.at("vocab_size").get<std::size_t>();
    }
    if (j.contains("extraction")) {
        const auto& x = j.at("extraction");
        detail::reject_unknown(x, {"mode", "beta", "window_fraction", "seg_threshold"}, "extraction");
        if (x.contains("mode")) c.extraction.mode = x.at("mode").get<std::string>();
        if (x.contains("beta")) c.extraction.beta = x.at("beta").get<std::size_t>();
        if (x.contains("window_fraction"))
            c.extraction.window_fraction = x.at("window_fraction").get<double>();
        if (x.contains("seg_threshold")) c.extraction.seg_threshold = x.at("seg_threshold").get<double>();
    }
    if (j.contains("tracker")) {
        const auto& t = j.at("tracker");
        detail::reject_unknown(
            t, {"context_token", "warm_start", "rebuild_from_initial", "bootstrap_targets"},
            "tracker");
        if (t.contains("context_token")) c.context_token = t.at("context_token").get<bool>();
        if (t.contains("warm_start")) c.warm_start = t.at("warm_start").get<bool>();
        if (t.contains("rebuild_from_initial"))
            c.rebuild_from_initial = t.at("rebuild_from_initial").get<bool>();
        if (t.contains("bootstrap_targets"))
            c.bootstrap_targets = t.at("bootstrap_targets").get<std::size_t>();
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        detail::reject_unknown(p, {"seq", "indicator", "out"}, "paths");
        if (p.contains("seq")) c.seq_path = p.at("seq").get<std::string>();
        if (p.contains("indicator")) c.indicator_path = p.at("indicator").get<std::string>();
        if (p.contains("out")) c.out_path = p.at("out").get<std::string>();
    }
    c.validate();
    return c;
}

// Effective config as JSON; feeding it back through config_from_json yields
// the same run.
inline nlohmann::json config_to_json(const run_config& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["schedule"] = {{"T", c.T}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
    j["engine"] = {{"process", process_name(c.process)},
                   {"operator", op_name(c.op)},
                   {"finetune_steps", c.finetune_steps},
                   {"lr", c.lr},
                   {"full_unroll", c.full_unroll},
                   {"closed_form_inversion", c.closed_form_inversion}};
    if (c.engine_seed_set) j["engine"]["seed"] = c.engine_seed;
    j["denoiser"] = {{"layers", c.model.layers},
                     {"embed_dim", c.model.embed_dim},
                     {"pos_scale", c.model.pos_scale}};
    j["codec"] = {{"patch", c.patch}};
    j["conditioning"] = {{"sigma", c.sigma}, {"vocab_size", c.vocab_size}};
    j["extraction"] = {{"mode", c.extraction.mode},
                       {"beta", c.extraction.beta},
                       {"window_fraction", c.extraction.window_fraction},
                       {"seg_threshold", c.extraction.seg_threshold}};
    j["tracker"] = {{"context_token", c.context_token},
                    {"warm_start", c.warm_start},
                    {"rebuild_from_initial", c.rebuild_from_initial},
                    {"bootstrap_targets", c.bootstrap_targets}};
    return j;
}

inline run_config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw config_error("invalid JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace dintr
