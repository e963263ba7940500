#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dintr/conditioning.hpp"
#include "dintr/config.hpp"
#include "dintr/denoiser.hpp"
#include "dintr/engine.hpp"
#include "dintr/extraction.hpp"
#include "dintr/synthvid.hpp"
#include "dintr/tracker.hpp"

namespace dintr {

// Self-verification: a battery of named invariants, each reporting a measured
// value against its tolerance. The interpolation checks accept a pluggable
// operator implementation so a deliberately broken operator is detectable
// (mutation sanity).

struct check_result {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct verify_report {
    std::vector<check_result> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["all_pass"] = all_pass();
        j["checks"] = nlohmann::json::array();
        for (const auto& c : checks)
            j["checks"].push_back({{"name", c.name},
                                   {"pass", c.pass},
                                   {"measured", c.measured},
                                   {"tolerance", c.tolerance},
                                   {"detail", c.detail}});
        return j;
    }
};

using operator_fn =
    std::function<tensor(op_kind, const tensor&, const tensor&, const tensor&,
                         const noise_schedule&, std::size_t, const noise_context*)>;

inline operator_fn stock_operator() {
    return [](op_kind kind, const tensor& z_k, const tensor& z0, const tensor& z1,
              const noise_schedule& s, std::size_t k, const noise_context* noise) {
        return operator_step(kind, z_k, z0, z1, s, k, noise);
    };
}

// Interpolation loop with a swappable operator (used only by verification).
inline std::vector<tensor> interpolate_with(const denoiser& model, const tensor& z0,
                                            const tensor& z1, const tensor& tau,
                                            const noise_schedule& s, op_kind kind,
                                            const noise_context& noise, const operator_fn& op) {
    std::vector<tensor> states(s.T + 1);
    states[s.T] = z0;
    tensor cur = z0;
    for (std::size_t k = s.T; k >= 1; --k) {
        cur = model.forward(cur, k, tau);
        op_kind use = boundary_step(kind, s, k) ? op_kind::blend : kind;
        cur = op(use, cur, z0, z1, s, k, &noise);
        states[k - 1] = cur;
    }
    return states;
}

// ----- finite-difference gradient checking -----

struct gradcheck_report {
    double max_rel_err = 0.0;
    std::size_t probes = 0;
};

// Central finite differences on selected elements of `param` against the tape
// gradient of make_loss(). Relative error uses max(|fd|, |grad|, floor) so
// near-zero pairs compare absolutely.
template <typename MakeLoss>
inline gradcheck_report gradcheck_param(MakeLoss make_loss, tensor& param,
                                        const std::vector<std::size_t>& idx, double h = 1e-5,
                                        double floor = 1e-4) {
    gradcheck_report rep;
    std::vector<double> analytic;
    {
        tape tp;
        tape::scope scope(tp);
        tensor loss = make_loss();
        tp.backward(loss);
        analytic = param.grad();
    }
    std::vector<double> base = param.values();
    for (std::size_t i : idx) {
        std::vector<double> v = base;
        v[i] = base[i] + h;
        param = tensor(param.shape(), std::move(v), true);
        double lp = make_loss().item();
        v = base;
        v[i] = base[i] - h;
        param = tensor(param.shape(), std::move(v), true);
        double lm = make_loss().item();
        double fd = (lp - lm) / (2.0 * h);
        double g = analytic[i];
        double rel = std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), floor});
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.probes;
    }
    param = tensor(param.shape(), std::vector<double>(base), true);
    return rep;
}

inline std::vector<std::size_t> probe_indices(std::size_t count, std::size_t size, rng& r) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < count && i < size; ++i)
        idx.push_back(size <= count ? i : static_cast<std::size_t>(r.next_u64() % size));
    return idx;
}

// ----- the verification battery -----

namespace detail {

inline denoiser tiny_model(std::size_t C, std::size_t gh, std::size_t gw, std::uint64_t seed,
                           std::size_t layers = 1, std::size_t d = 8) {
    denoiser_config dc;
    dc.layers = layers;
    dc.embed_dim = d;
    return denoiser::init(dc, C, gh, gw, seed);
}

} // namespace detail

inline verify_report run_verification(std::uint64_t seed = 7,
                                      const operator_fn& op = stock_operator()) {
    verify_report rep;
    auto push = [&](const std::string& name, double measured, double tol, bool pass,
                    const std::string& detail) {
        rep.checks.push_back({name, pass, measured, tol, detail});
    };

    // 1. operator equivalence: all four clean forms follow the blend path under
    //    an identity-at-init network
    {
        noise_schedule s = make_linear_schedule(50);
        denoiser model = detail::tiny_model(12, 3, 3, mix_seed(seed, "equiv"));
        tensor tau = tensor::seeded_normal({1, 8}, seed, "tau", 1.0);
        noise_context nc{0};
        double worst = 0.0;
        for (int pair = 0; pair < 10; ++pair) {
            tensor z0 = tensor::seeded_normal({12, 3, 3}, mix_seed(seed, pair * 2 + 1), "z0", 1.0);
            tensor z1 = tensor::seeded_normal({12, 3, 3}, mix_seed(seed, pair * 2 + 2), "z1", 1.0);
            auto base = interpolate_with(model, z0, z1, tau, s, op_kind::blend, nc, op);
            for (op_kind k :
                 {op_kind::from_next, op_kind::from_current, op_kind::offset_clean}) {
                auto other = interpolate_with(model, z0, z1, tau, s, k, nc, op);
                for (std::size_t i = 0; i <= s.T; ++i) {
                    const auto& a = base[i].values();
                    const auto& b = other[i].values();
                    for (std::size_t j = 0; j < a.size(); ++j)
                        worst = std::max(worst, std::fabs(a[j] - b[j]));
                }
            }
        }
        push("operator_equivalence", worst, 1e-9, worst <= 1e-9,
             "max abs gap of from_next/from_current/offset_clean traces vs blend, 10 pairs, T=50");
    }

    // 2. telescoping: offset steps sum exactly to the next-frame latent
    {
        double worst = 0.0;
        for (std::size_t T : {std::size_t{1}, std::size_t{5}, std::size_t{50}, std::size_t{250}}) {
            noise_schedule s = make_linear_schedule(T);
            denoiser model = detail::tiny_model(12, 3, 3, mix_seed(seed, "tele"));
            tensor tau = tensor::seeded_normal({1, 8}, seed, "tau", 1.0);
            noise_context nc{0};
            tensor z0 = tensor::seeded_normal({12, 3, 3}, mix_seed(seed, T), "a", 1.0);
            tensor z1 = tensor::seeded_normal({12, 3, 3}, mix_seed(seed, T + 1), "b", 1.0);
            auto states = interpolate_with(model, z0, z1, tau, s, op_kind::offset_clean, nc, op);
            const auto& r = states[0].values();
            const auto& t = z1.values();
            for (std::size_t j = 0; j < r.size(); ++j)
                worst = std::max(worst, std::fabs(r[j] - t[j]));
        }
        push("telescoping", worst, 1e-9, worst <= 1e-9,
             "max abs gap between offset_clean final state and the target, T in {1,5,50,250}");
    }

    // 3/4. stability: blend/offset bounded by 1; from_next cumulative matches
    //      its closed form
    {
        noise_schedule s = make_linear_schedule(50);
        double worst = 0.0;
        for (op_kind k : {op_kind::blend, op_kind::offset_clean, op_kind::offset_noisy}) {
            auto r = stability_probe(k, s);
            for (double f : r.per_step) worst = std::max(worst, f);
        }
        push("stability_bounded", worst, 1.0 + 1e-12, worst <= 1.0 + 1e-12,
             "largest per-step perturbation gain of blend/offset operators, T=50");
        auto fn = stability_probe(op_kind::from_next, s);
        double gap = std::fabs(fn.cumulative - fn.analytic_cumulative);
        double k2 = fn.per_step[s.T - 2]; // probe at k=2 (per_step[0] is k=T)
        bool pass = gap <= 1e-12 && std::fabs(k2 - 0.5) <= 1e-12;
        push("stability_from_next", gap, 1e-12, pass,
             "cumulative gain vs closed form (and the k=2 half-gain spot check)");
    }

    // 5. reconstruction round trip is the identity at init
    {
        noise_schedule s = make_linear_schedule(50);
        denoiser model = detail::tiny_model(12, 3, 3, mix_seed(seed, "roundtrip"));
        tensor tau = tensor::seeded_normal({1, 8}, seed, "tau", 1.0);
        tensor z0 = tensor::seeded_normal({12, 3, 3}, seed, "z", 1.0);
        process_trace tr = reconstruct(model, z0, tau, s);
        double worst = 0.0;
        const auto& r = tr.result().values();
        const auto& t = z0.values();
        for (std::size_t j = 0; j < r.size(); ++j)
            worst = std::max(worst, std::fabs(r[j] - t[j]));
        push("reconstruction_roundtrip", worst, 1e-9, worst <= 1e-9,
             "max abs gap after invert-then-denoise of one latent, T=50");
    }

    // 6. structural eval counts
    {
        noise_schedule s = make_linear_schedule(7);
        denoiser model = detail::tiny_model(12, 3, 3, mix_seed(seed, "count"));
        tensor tau = tensor::seeded_normal({1, 8}, seed, "tau", 1.0);
        noise_context nc{3};
        tensor z0 = tensor::seeded_normal({12, 3, 3}, seed, "c0", 1.0);
        tensor z1 = tensor::seeded_normal({12, 3, 3}, seed, "c1", 1.0);
        auto ti = interpolate(model, z0, z1, tau, s, op_kind::offset_clean, nc);
        auto tr = reconstruct(model, z0, tau, s);
        bool pass = ti.net_evals == s.T && tr.net_evals == 2 * s.T;
        push("eval_counts", static_cast<double>(ti.net_evals + tr.net_evals), 3.0 * s.T, pass,
             "interpolate makes T network calls and reconstruct 2T");
    }

    // 7. attention maps are row-stochastic
    {
        denoiser model = detail::tiny_model(12, 3, 3, mix_seed(seed, "rows"), 2);
        tensor tau = tensor::seeded_normal({3, 8}, seed, "tau", 1.0);
        tensor z = tensor::seeded_normal({12, 3, 3}, seed, "zr", 1.0);
        std::vector<attention_record> recs;
        model.forward(z, 1, tau, true, &recs);
        double worst = 1.0;
        for (const auto& r : recs) {
            for (const tensor* m : {&r.self_map, &r.cross_map}) {
                std::size_t rows = m->dim(0), cols = m->dim(1);
                const double* a = m->data();
                for (std::size_t i = 0; i < rows; ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        if (a[i * cols + j] < 0.0) worst = 1e9;
                        sum += a[i * cols + j];
                    }
                    worst = std::max(worst, std::fabs(sum - 1.0) + 1.0);
                }
            }
        }
        push("attention_row_stochastic", worst - 1.0, 1e-9, worst - 1.0 <= 1e-9,
             "row sums of captured self/cross maps vs 1, nonnegativity included");
    }

    // 8. accumulation window covers exactly ceil(0.8 T) steps per layer
    {
        noise_schedule s = make_linear_schedule(10);
        denoiser model = detail::tiny_model(12, 3, 3, mix_seed(seed, "win"), 2);
        tensor tau = tensor::seeded_normal({1, 8}, seed, "tau", 1.0);
        noise_context nc{5};
        tensor z0 = tensor::seeded_normal({12, 3, 3}, seed, "w0", 1.0);
        tensor z1 = tensor::seeded_normal({12, 3, 3}, seed, "w1", 1.0);
        auto tr = interpolate(model, z0, z1, tau, s, op_kind::offset_clean, nc, true);
        attn_means m = accumulate(tr.records, s, 0.8);
        std::size_t expect = 2 * window_steps(s.T, 0.8);
        push("window_coverage", static_cast<double>(m.contributing),
             static_cast<double>(expect), m.contributing == expect,
             "contributing records == layers x ceil(0.8 T) at T=10, N=2");
    }

    // 9-11. saliency mapping properties on random maps
    {
        rng r(mix_seed(seed, "maps"));
        double worst = 0.0;
        bool nest_ok = true, box_ok = true, range_ok = true;
        for (int trial = 0; trial < 200; ++trial) {
            std::size_t gh = 2 + r.next_u64() % 3, gw = 2 + r.next_u64() % 3;
            std::size_t hw = gh * gw;
            std::vector<double> a(hw * hw);
            for (auto& x : a) x = r.uniform01() + 1e-3;
            for (std::size_t i = 0; i < hw; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < hw; ++j) sum += a[i * hw + j];
                for (std::size_t j = 0; j < hw; ++j) a[i * hw + j] /= sum;
            }
            attn_means means;
            means.self_mean = tensor({hw, hw}, std::move(a));
            std::vector<double> v(hw);
            for (auto& x : v) x = r.uniform01();
            extraction_config xc;
            xc.beta = 1 + r.next_u64() % 4;
            fused_saliency sal = fuse(means, tensor({hw}, std::move(v)), xc, gh, gw, 2);
            double mx = 0.0;
            for (double x : sal.map) {
                if (x < 0.0 || x > 1.0) range_ok = false;
                mx = std::max(mx, x);
            }
            if (mx > 0.0) worst = std::max(worst, std::fabs(mx - 1.0));
            double th_hi = 0.6, th_lo = 0.3;
            if (mx > 0.0) {
                auto hi = saliency_segment(sal, th_hi);
                auto lo = saliency_segment(sal, th_lo);
                for (std::size_t i = 0; i < hi.size(); ++i)
                    if (hi[i] && !lo[i]) nest_ok = false;
                box_ind b = saliency_box(sal, th_lo);
                std::size_t x0 = sal.w, y0 = sal.h, x1 = 0, y1 = 0;
                for (std::size_t y = 0; y < sal.h; ++y)
                    for (std::size_t x = 0; x < sal.w; ++x)
                        if (lo[y * sal.w + x]) {
                            x0 = std::min(x0, x);
                            y0 = std::min(y0, y);
                            x1 = std::max(x1, x);
                            y1 = std::max(y1, y);
                        }
                if (b.x0 != x0 || b.y0 != y0 || b.x1 != x1 || b.y1 != y1) box_ok = false;
            }
        }
        push("fused_saliency_range", worst, 1e-12, range_ok && worst <= 1e-12,
             "fused maps stay in [0,1] with max exactly 1 when nonzero, 200 random maps");
        push("segment_nesting", nest_ok ? 0.0 : 1.0, 0.0, nest_ok,
             "higher thresholds select subsets of lower thresholds, 200 random maps");
        push("box_minimality", box_ok ? 0.0 : 1.0, 0.0, box_ok,
             "box equals the exhaustive tight rectangle of the segment, 200 random maps");
    }

    // 12. per-target attention split conserves row mass
    {
        rng r(mix_seed(seed, "split"));
        std::size_t hw = 9, m = 5;
        std::vector<double> a(hw * m);
        for (auto& x : a) x = r.uniform01() + 1e-3;
        for (std::size_t i = 0; i < hw; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < m; ++j) sum += a[i * m + j];
            for (std::size_t j = 0; j < m; ++j) a[i * m + j] /= sum;
        }
        tensor cross({hw, m}, std::move(a));
        std::vector<std::pair<std::size_t, std::size_t>> ranges{{0, 2}, {2, 1}, {3, 2}};
        auto split = split_attention(cross, ranges);
        double worst = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            double mass = 0.0;
            for (std::size_t t = 0; t < ranges.size(); ++t)
                mass += split[t].values()[i] * static_cast<double>(ranges[t].second);
            worst = std::max(worst, std::fabs(mass - 1.0));
        }
        push("split_conservation", worst, 1e-12, worst <= 1e-12,
             "sum of per-target means weighted by range width recovers each row's unit mass");
    }

    // 13. sharpening never spreads mass on a diagonally dominant stochastic map
    {
        std::size_t hw = 16;
        std::vector<double> a(hw * hw, 0.02);
        for (std::size_t i = 0; i < hw; ++i) a[i * hw + i] = 1.0;
        for (std::size_t i = 0; i < hw; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < hw; ++j) sum += a[i * hw + j];
            for (std::size_t j = 0; j < hw; ++j) a[i * hw + j] /= sum;
        }
        attn_means means;
        means.self_mean = tensor({hw, hw}, std::move(a));
        rng r(mix_seed(seed, "entropy"));
        std::vector<double> v(hw);
        for (auto& x : v) x = r.uniform01();
        double prev = -1.0, worst = 0.0;
        bool mono = true;
        for (std::size_t beta = 1; beta <= 4; ++beta) {
            extraction_config xc;
            xc.beta = beta;
            fused_saliency sal = fuse(means, tensor({hw}, std::vector<double>(v)), xc, 4, 4, 1);
            double ent = spatial_entropy(sal.map);
            if (prev >= 0.0 && ent > prev + 1e-12) {
                mono = false;
                worst = std::max(worst, ent - prev);
            }
            prev = ent;
        }
        push("propagate_entropy_monotone", worst, 1e-12, mono,
             "spatial entropy non-increasing in beta on a diagonally dominant map");
    }

    // 14. gradient spot check through matmul/softmax/gelu/mse
    {
        double worst = 0.0;
        for (std::uint64_t sd = 1; sd <= 3; ++sd) {
            tensor w = tensor::seeded_normal({4, 4}, mix_seed(seed, sd), "w", 0.5, true);
            tensor x = tensor::seeded_normal({3, 4}, mix_seed(seed, sd), "x", 1.0);
            tensor y = tensor::seeded_normal({3, 4}, mix_seed(seed, sd), "y", 1.0);
            auto loss_fn = [&]() {
                tensor h = gelu(matmul(x, w));
                tensor p = softmax_rows(h, 1.0);
                return mse(p, y);
            };
            rng r(mix_seed(seed, sd + 100));
            auto idx = probe_indices(6, w.size(), r);
            auto g = gradcheck_param(loss_fn, w, idx);
            worst = std::max(worst, g.max_rel_err);
        }
        push("gradcheck_core", worst, 1e-4, worst <= 1e-4,
             "central differences vs tape gradients through matmul+gelu+softmax+mse");
    }

    // 15. end-to-end tracking is bit-deterministic
    {
        scene_spec sc = default_scene();
        sc.width = 16;
        sc.height = 16;
        sc.frames = 3;
        sc.objects[0].size = 3.0;
        sc.objects[0].start_x = 5.0;
        sc.objects[0].start_y = 8.0;
        sc.objects[0].vel_x = 1.0;
        sc.objects[0].vel_y = 0.0;
        rendered_scene rs = render_scene(sc);
        run_config cfg;
        cfg.T = 4;
        cfg.finetune_steps = 2;
        cfg.full_unroll = false;
        cfg.model.layers = 1;
        cfg.model.embed_dim = 8;
        cfg.seed = seed;
        std::vector<indicator> init{point_ind{5.5, 8.5}};
        auto run1 = track_sequence(rs.frames, init, cfg);
        auto run2 = track_sequence(rs.frames, init, cfg);
        std::string a = tracklets_to_jsonl(run1.tracklets);
        std::string b = tracklets_to_jsonl(run2.tracklets);
        push("determinism_track", a == b ? 0.0 : 1.0, 0.0, a == b,
             "two identical tiny tracking runs serialize to identical bytes");
    }

    return rep;
}

} // namespace dintr
