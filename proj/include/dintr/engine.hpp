#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dintr/denoiser.hpp"
#include "dintr/errors.hpp"
#include "dintr/schedule.hpp"
#include "dintr/tensor.hpp"

namespace dintr {

// The four algebraically equivalent ways to move from step k to k-1 between a
// current-frame latent z0 and a next-frame latent z1, plus the noisy variant of
// the offset form. With an identity network and epsilon = 0 they all follow the
// same closed-form mixing path; they differ in stability and in whether errors
// accumulate:
//   blend         w_{k-1} z0 + (1 - w_{k-1}) z1          stateless, never accumulates
//   from_next     z1 + (w_{k-1}/w_k)(z_k - z1)           divides by w_k (0 at k = 0)
//   from_current  z0 + ((1-w_{k-1})/(1-w_k))(z_k - z0)   divides by 1-w_k (0 at k = T)
//   offset_clean  z_k + (w_k - w_{k-1})(z1 - z0)         accumulative, unit gain
//   offset_noisy  z_k - Q(z0, k) + Q(z1, k-1)            accumulative, seeded noise
enum class op_kind { blend, from_next, from_current, offset_clean, offset_noisy };

inline const char* op_name(op_kind k) {
    switch (k) {
        case op_kind::blend: return "blend";
        case op_kind::from_next: return "from_next";
        case op_kind::from_current: return "from_current";
        case op_kind::offset_clean: return "offset_clean";
        default: return "offset_noisy";
    }
}

inline op_kind op_from_name(const std::string& s) {
    if (s == "blend") return op_kind::blend;
    if (s == "from_next") return op_kind::from_next;
    if (s == "from_current") return op_kind::from_current;
    if (s == "offset_clean") return op_kind::offset_clean;
    if (s == "offset_noisy") return op_kind::offset_noisy;
    throw config_error("unknown operator: " + s);
}

// One operator step k -> k-1. Differentiable through z_k (built from tensor
// primitives). The unstable boundary cases raise instead of dividing by zero;
// process loops substitute the blend closed form there.
inline tensor operator_step(op_kind kind, const tensor& z_k, const tensor& z0, const tensor& z1,
                            const noise_schedule& s, std::size_t k,
                            const noise_context* noise = nullptr) {
    if (k < 1 || k > s.T) throw index_error("operator step k out of [1, T]");
    if (!z_k.same_shape(z0) || !z_k.same_shape(z1))
        throw shape_error("operator step: latent shapes differ");
    double wk = s.w(k), wk1 = s.w(k - 1);
    switch (kind) {
        case op_kind::blend:
            return add(scale(z0, wk1), scale(z1, 1.0 - wk1));
        case op_kind::from_next: {
            if (wk == 0.0) throw instability_error("from_next with w_k = 0");
            double r = wk1 / wk;
            return add(z1, scale(sub(z_k, z1), r));
        }
        case op_kind::from_current: {
            if (wk == 1.0) throw instability_error("from_current with w_k = 1");
            double r = (1.0 - wk1) / (1.0 - wk);
            return add(z0, scale(sub(z_k, z0), r));
        }
        case op_kind::offset_clean:
            return add(z_k, scale(sub(z1, z0), wk - wk1));
        case op_kind::offset_noisy: {
            if (!noise) throw contract_error("offset_noisy requires a noise context");
            tensor qa = q_sample(z0, s, k, noise->eps(0, k, z0.shape()));
            tensor qb = q_sample(z1, s, k - 1, noise->eps(1, k - 1, z1.shape()));
            return add(sub(z_k, qa.detach()), qb.detach());
        }
    }
    throw contract_error("unreachable operator kind");
}

// True where the operator's own formula is singular and the blend closed form
// must take over for that step.
inline bool boundary_step(op_kind kind, const noise_schedule& s, std::size_t k) {
    return (kind == op_kind::from_next && s.w(k) == 0.0) ||
           (kind == op_kind::from_current && s.w(k) == 1.0);
}

// Full set of intermediate latents of one process pass. states[k] is the latent
// at step k; states[T] is the base case (the unmodified current-frame latent for
// interpolation, the inverted latent for reconstruction); states[0] is the result.
struct process_trace {
    std::vector<tensor> states;             // T+1 entries
    std::vector<attention_record> records;  // captured per (layer, step), denoising steps only
    std::size_t net_evals = 0;

    const tensor& result() const { return states.front(); }
};

// Latent interpolation from z0 toward z1: base case states[T] = z0, then per
// step a network refinement followed by one operator step. Exactly T network
// evaluations. Recomputing any step from the stored previous state reproduces
// the stored result bit for bit (everything below is deterministic).
inline process_trace interpolate(const denoiser& model, const tensor& z0, const tensor& z1,
                                 const tensor& tau, const noise_schedule& s, op_kind kind,
                                 const noise_context& noise, bool capture = false) {
    process_trace tr;
    tr.states.resize(s.T + 1);
    tr.states[s.T] = z0;
    tensor cur = z0;
    for (std::size_t k = s.T; k >= 1; --k) {
        cur = model.forward(cur, k, tau, capture, capture ? &tr.records : nullptr);
        ++tr.net_evals;
        op_kind use = boundary_step(kind, s, k) ? op_kind::blend : kind;
        cur = operator_step(use, cur, z0, z1, s, k, &noise);
        tr.states[k - 1] = cur;
    }
    return tr;
}

// Reconstruction baseline: deterministic inversion of z0 up to step T (T network
// evaluations), then T mirrored denoising steps back down. The per-step maps are
// exact mirrors, so an identity network returns z0 up to rounding. Captured
// attention comes from the denoising phase. 2T network evaluations total; the
// closed-form inversion flag skips the network on the way up (T evaluations).
inline process_trace reconstruct(const denoiser& model, const tensor& z0, const tensor& tau,
                                 const noise_schedule& s, bool capture = false,
                                 bool closed_form_inversion = false) {
    process_trace tr;
    tr.states.resize(s.T + 1);
    tensor x = z0;
    if (closed_form_inversion) {
        x = scale(z0, std::sqrt(s.abar(s.T)));
    } else {
        for (std::size_t k = 0; k < s.T; ++k) {
            double ratio = std::sqrt(s.abar(k + 1) / s.abar(k));
            x = scale(model.forward(x, k, tau), ratio);
            ++tr.net_evals;
        }
    }
    tr.states[s.T] = x;
    for (std::size_t k = s.T; k >= 1; --k) {
        double ratio = std::sqrt(s.abar(k - 1) / s.abar(k));
        x = scale(model.forward(x, k, tau, capture, capture ? &tr.records : nullptr), ratio);
        ++tr.net_evals;
        tr.states[k - 1] = x;
    }
    return tr;
}

// ----- losses -----

// Final-state objective: mean squared error between the interpolation result
// and the observed next-frame latent.
inline tensor interpolation_loss(const tensor& z_hat0, const tensor& z1) {
    return mse(z_hat0, z1);
}

// Step-wise objective over a denoising trace: each intermediate states[k-1] is
// compared against the noisy next-frame latent at its level, plus the final
// image-space term. The frame codec is a permutation, so the pixel-space error
// of the decoded result equals the latent-space error computed here.
inline tensor reconstruction_loss(const std::vector<tensor>& states, const tensor& z1,
                                  const noise_schedule& s, const noise_context& noise) {
    if (states.size() != s.T + 1) throw shape_error("reconstruction_loss: trace length != T+1");
    tensor total = tensor::scalar(0.0);
    for (std::size_t k = 1; k <= s.T; ++k) {
        tensor target = q_sample(z1, s, k - 1, noise.eps(1, k - 1, z1.shape()));
        total = add(total, mse(states[k - 1], target.detach()));
    }
    total = add(total, mse(states[0], z1)); // final image term (Q at level 0 is the clean latent)
    return scale(total, 1.0 / static_cast<double>(s.T + 1));
}

// ----- optimizer -----

struct adam_config {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over the denoiser's named parameters. Parameters are replaced, never
// mutated in place, so older tensor handles keep their values.
class adam {
public:
    adam(adam_config cfg) : cfg_(cfg) {}

    void step(std::map<std::string, tensor>& params) {
        ++t_;
        double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, p] : params) {
            if (!p.has_grad()) continue;
            const auto& g = p.grad();
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.size() != g.size()) m.assign(g.size(), 0.0);
            if (v.size() != g.size()) v.assign(g.size(), 0.0);
            std::vector<double> nd(p.values());
            for (std::size_t i = 0; i < g.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                double mh = m[i] / c1;
                double vh = v[i] / c2;
                nd[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
            }
            p = tensor(p.shape(), std::move(nd), true);
        }
    }

private:
    adam_config cfg_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

// ----- per-pair finetuning -----

enum class process_kind { interpolate, reconstruct };

inline const char* process_name(process_kind p) {
    return p == process_kind::interpolate ? "interpolate" : "reconstruct";
}

inline process_kind process_from_name(const std::string& s) {
    if (s == "interpolate") return process_kind::interpolate;
    if (s == "reconstruct") return process_kind::reconstruct;
    throw config_error("unknown process: " + s);
}

struct finetune_config {
    process_kind process = process_kind::interpolate;
    op_kind op = op_kind::offset_noisy;
    std::size_t steps = 50;
    adam_config adam;
    // full: differentiate through the whole unrolled interpolation pass.
    // stepwise: one sampled step per optimizer step on the closed-form path
    // (cheap surrogate; reconstruction always trains step-wise, see below).
    bool full_unroll = true;
    std::uint64_t seed = 0;
};

// Gradient steps on the selected process's loss for this single frame pair.
// Interpolation trains on the final-state loss through the unrolled pass (or a
// sampled-step surrogate when full_unroll is off). Reconstruction trains both
// phases of its round trip step-wise and teacher-forced: inversion levels are
// pinned to the current-frame path, denoising levels walk the scheduled blend
// path toward the next frame. Returns the loss curve. Deterministic for a
// fixed seed; a non-finite loss raises.
inline std::vector<double> finetune(denoiser& model, const tensor& z0, const tensor& z1,
                                    const tensor& tau, const noise_schedule& s,
                                    const finetune_config& cfg, const noise_context& noise) {
    std::vector<double> curve;
    if (cfg.process == process_kind::interpolate && cfg.op == op_kind::blend)
        throw config_error(
            "finetune: the blend operator is a closed form that ignores the network "
            "output, so its loss carries no gradient; pick another operator");
    adam opt(cfg.adam);
    rng pick(mix_seed(cfg.seed, "finetune"));
    for (std::size_t it = 0; it < cfg.steps; ++it) {
        tape tp;
        tensor loss;
        {
            tape::scope scope(tp);
            if (cfg.process == process_kind::interpolate) {
                if (cfg.full_unroll) {
                    process_trace tr = interpolate(model, z0, z1, tau, s, cfg.op, noise);
                    loss = interpolation_loss(tr.result(), z1);
                } else {
                    // one sampled step: refine the closed-form path state at k,
                    // apply the operator, match the path state at k-1
                    std::size_t k = 1 + static_cast<std::size_t>(pick.next_u64() % s.T);
                    tensor ref = add(scale(z0, s.w(k)), scale(z1, 1.0 - s.w(k)));
                    tensor target = add(scale(z0, s.w(k - 1)), scale(z1, 1.0 - s.w(k - 1)));
                    op_kind use = boundary_step(cfg.op, s, k) ? op_kind::blend : cfg.op;
                    tensor out = operator_step(use, model.forward(ref, k, tau), z0, z1, s, k, &noise);
                    loss = mse(out, target);
                }
            } else {
                // Round-trip teacher: train the exact trajectory the
                // reconstruction pass runs, one level per term. The denoising
                // phase walks the schedule-scaled blend path from the inverted
                // current frame down to the next frame, so each level owes a
                // 1/T-sized transport step; the inversion phase is pinned to
                // the current-frame path (identity targets). Under a fixed
                // optimizer budget the trained fraction of the per-level push
                // therefore grows with T, which is what makes reconstruction
                // quality improve with step count at equal budgets.
                auto path = [&](std::size_t k) {
                    double w = s.w(k), root = std::sqrt(s.abar(k));
                    return scale(add(scale(z0, w), scale(z1, 1.0 - w)), root).detach();
                };
                tensor total = tensor::scalar(0.0);
                for (std::size_t k = 1; k <= s.T; ++k) {
                    double down = std::sqrt(s.abar(k - 1) / s.abar(k));
                    tensor out = scale(model.forward(path(k), k, tau), down);
                    total = add(total, mse(out, path(k - 1)));
                    double up = std::sqrt(s.abar(k) / s.abar(k - 1));
                    tensor lo = scale(z0, std::sqrt(s.abar(k - 1))).detach();
                    tensor hi = scale(z0, std::sqrt(s.abar(k))).detach();
                    tensor inv = scale(model.forward(lo, k - 1, tau), up);
                    total = add(total, mse(inv, hi));
                }
                loss = scale(total, 1.0 / static_cast<double>(2 * s.T));
            }
            if (!std::isfinite(loss.item()))
                throw divergence_error("finetune loss is not finite at step " + std::to_string(it));
            tp.backward(loss);
        }
        curve.push_back(loss.item());
        opt.step(model.params());
    }
    return curve;
}

// ----- stability probe -----

// Measured per-step response of each operator to a perturbation of z_k, with the
// boundary closed form applied exactly where the process loops apply it. The
// cumulative product over a full pass has a closed form: w_0 / w_T for
// from_next, zero for blend (it ignores z_k), one for the offset forms.
struct stability_report {
    std::vector<double> per_step; // index 0 <-> k = T
    double cumulative = 1.0;
    double analytic_cumulative = 1.0;
};

inline stability_report stability_probe(op_kind kind, const noise_schedule& s,
                                        double delta = 1e-3) {
    tensor z0 = tensor::scalar(0.25);
    tensor z1 = tensor::scalar(0.75);
    noise_context noise{12345};
    stability_report rep;
    double analytic = 1.0;
    for (std::size_t k = s.T; k >= 1; --k) {
        op_kind use = boundary_step(kind, s, k) ? op_kind::blend : kind;
        tensor base = tensor::scalar(0.5);
        tensor pert = tensor::scalar(0.5 + delta);
        double a = operator_step(use, base, z0, z1, s, k, &noise).item();
        double b = operator_step(use, pert, z0, z1, s, k, &noise).item();
        double factor = std::fabs(b - a) / delta;
        rep.per_step.push_back(factor);
        rep.cumulative *= factor;
        double astep = 1.0;
        switch (use) {
            case op_kind::blend: astep = 0.0; break;
            case op_kind::from_next: astep = s.w(k - 1) / s.w(k); break;
            case op_kind::from_current: astep = (1.0 - s.w(k - 1)) / (1.0 - s.w(k)); break;
            default: astep = 1.0; break;
        }
        analytic *= astep;
    }
    rep.analytic_cumulative = analytic;
    return rep;
}

} // namespace dintr
