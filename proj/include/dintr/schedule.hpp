#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dintr/errors.hpp"
#include "dintr/rng.hpp"
#include "dintr/tensor.hpp"

namespace dintr {

// Diffusion noise schedule plus the separate per-step interpolation weights.
// Two distinct sequences live here on purpose:
//   alpha_bar[k]      cumulative signal retention, prod_{j<k}(1 - beta[j]), in (0,1], decreasing
//   interp_weight[k]  linear mixing weight k/T used by the interpolation operators
// Conflating them breaks every closed-form identity downstream, so both are stored
// explicitly and tested separately.
struct noise_schedule {
    std::size_t T = 0;
    std::vector<double> beta;          // size T, strictly in (0,1)
    std::vector<double> alpha_bar;     // size T+1, alpha_bar[0] == 1
    std::vector<double> interp_weight; // size T+1, interp_weight[k] == k/T

    double w(std::size_t k) const {
        if (k > T) throw index_error("interp weight index out of range");
        return interp_weight[k];
    }

    double abar(std::size_t k) const {
        if (k > T) throw index_error("alpha_bar index out of range");
        return alpha_bar[k];
    }
};

inline noise_schedule make_linear_schedule(std::size_t T, double beta_start = 1e-4,
                                           double beta_end = 0.02) {
    if (T < 1) throw contract_error("schedule needs T >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw contract_error("betas must satisfy 0 < beta_start <= beta_end < 1");
    noise_schedule s;
    s.T = T;
    s.beta.resize(T);
    for (std::size_t j = 0; j < T; ++j)
        s.beta[j] = (T == 1) ? beta_start
                             : beta_start + (beta_end - beta_start) *
                                                (static_cast<double>(j) / static_cast<double>(T - 1));
    s.alpha_bar.resize(T + 1);
    s.alpha_bar[0] = 1.0;
    for (std::size_t k = 1; k <= T; ++k) s.alpha_bar[k] = s.alpha_bar[k - 1] * (1.0 - s.beta[k - 1]);
    s.interp_weight.resize(T + 1);
    for (std::size_t k = 0; k <= T; ++k)
        s.interp_weight[k] = static_cast<double>(k) / static_cast<double>(T);
    return s;
}

// Standard normal noise, deterministic per (seed, step). Frame identity and any
// other stream distinctions are the caller's job via mix_seed.
inline tensor seeded_noise(const std::vector<std::size_t>& shape, std::uint64_t seed,
                           std::size_t k) {
    rng g(mix_seed(mix_seed(seed, "noise"), static_cast<std::uint64_t>(k)));
    std::size_t n = tensor::count(shape);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = g.normal();
    return tensor(shape, std::move(d));
}

// Forward noising: sqrt(abar_k) z0 + sqrt(1 - abar_k) eps. k = 0 returns z0
// exactly (the coefficients are exactly 1 and 0).
inline tensor q_sample(const tensor& z0, const noise_schedule& s, std::size_t k,
                       const tensor& eps) {
    if (k > s.T) throw index_error("q_sample step out of range");
    if (!z0.same_shape(eps)) throw shape_error("q_sample: noise shape differs from z0");
    double a = std::sqrt(s.abar(k));
    double b = std::sqrt(1.0 - s.abar(k));
    return add(scale(z0, a), scale(eps, b));
}

// One noise draw per (frame, k), fixed by the base seed; repeated queries for
// the same step return the identical tensor.
struct noise_context {
    std::uint64_t seed = 0;

    tensor eps(std::size_t frame, std::size_t k, const std::vector<std::size_t>& shape) const {
        return seeded_noise(shape, mix_seed(seed, static_cast<std::uint64_t>(frame)), k);
    }
};

} // namespace dintr
