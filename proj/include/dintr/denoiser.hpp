#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dintr/errors.hpp"
#include "dintr/io.hpp"
#include "dintr/tensor.hpp"
#include "json.hpp"

namespace dintr {

// Conditional latent refiner: a small transformer over the flattened latent
// grid (one token per latent cell). Each layer applies residual self-attention,
// residual cross-attention against the condition tokens, and a residual MLP.
// The output projection starts at zero, so a freshly initialized model is an
// exact identity map; training only ever adds a learned correction.

struct denoiser_config {
    std::size_t layers = 2;
    std::size_t embed_dim = 32;
    // Amplitude of the fixed positional codes. Small by design: the random
    // projections of positional codes onto condition tokens set the cross-
    // attention noise floor, and content contrast must clear it for
    // localization to work.
    double pos_scale = 0.25;

    void validate() const {
        if (layers < 1) throw config_error("denoiser.layers must be >= 1");
        if (embed_dim < 4 || embed_dim % 4 != 0)
            throw config_error("denoiser.embed_dim must be a positive multiple of 4");
        if (!(pos_scale >= 0.0)) throw config_error("denoiser.pos_scale must be >= 0");
    }
};

// Attention snapshot for one (layer, step): both maps are row-stochastic,
// detached copies (capturing them never touches the autodiff graph).
struct attention_record {
    std::size_t layer = 0;
    std::size_t step = 0;
    tensor self_map;  // {hw, hw}
    tensor cross_map; // {hw, m}
};

// Sinusoidal embedding of the step index k (no learned parameters).
inline std::vector<double> time_embedding(std::size_t k, std::size_t d) {
    std::vector<double> e(d);
    for (std::size_t i = 0; i < d / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        double v = static_cast<double>(k) * freq;
        e[2 * i] = std::sin(v);
        e[2 * i + 1] = std::cos(v);
    }
    return e;
}

// Fixed 2-D positional codes with per-seed random phases. The inner product of
// two codes is sum_a cos(w_a * dx) + sum_a cos(w_a * dy): a shift-invariant
// kernel peaked at zero offset, independent of the phases. First half of the
// dims encodes x, second half y.
inline tensor positional_codes(std::size_t h, std::size_t w, std::size_t d, std::uint64_t seed,
                               double amplitude) {
    if (d % 4 != 0) throw contract_error("positional codes need embed_dim divisible by 4");
    std::size_t nfreq = d / 4; // sin/cos pairs per axis
    rng g(mix_seed(seed, "pos_phases"));
    std::vector<double> phase_x(nfreq), phase_y(nfreq), omega_x(nfreq), omega_y(nfreq);
    double span = static_cast<double>(std::max(h, w));
    for (std::size_t a = 0; a < nfreq; ++a) {
        // wavelengths geometric between 2 cells and the grid span; capping at
        // the span keeps the code kernel contrastive across the whole grid
        double frac = nfreq == 1 ? 0.0 : static_cast<double>(a) / static_cast<double>(nfreq - 1);
        double wavelength = 2.0 * std::pow(std::max(span / 2.0, 1.0), frac);
        omega_x[a] = 2.0 * std::numbers::pi / wavelength;
        omega_y[a] = omega_x[a];
        phase_x[a] = g.uniform01() * 2.0 * std::numbers::pi;
        phase_y[a] = g.uniform01() * 2.0 * std::numbers::pi;
    }
    std::vector<double> out(h * w * d);
    for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
            double* row = out.data() + (iy * w + ix) * d;
            for (std::size_t a = 0; a < nfreq; ++a) {
                double vx = omega_x[a] * static_cast<double>(ix) + phase_x[a];
                double vy = omega_y[a] * static_cast<double>(iy) + phase_y[a];
                row[2 * a] = amplitude * std::sin(vx);
                row[2 * a + 1] = amplitude * std::cos(vx);
                row[2 * nfreq + 2 * a] = amplitude * std::sin(vy);
                row[2 * nfreq + 2 * a + 1] = amplitude * std::cos(vy);
            }
        }
    return tensor({h * w, d}, std::move(out));
}

class denoiser {
public:
    denoiser() = default;

    static denoiser init(const denoiser_config& cfg, std::size_t channels, std::size_t h,
                         std::size_t w, std::uint64_t seed) {
        cfg.validate();
        denoiser m;
        m.cfg_ = cfg;
        m.C_ = channels;
        m.h_ = h;
        m.w_ = w;
        m.seed_ = seed;
        std::size_t d = cfg.embed_dim;
        double in_scale = 1.0 / std::sqrt(static_cast<double>(channels));
        double d_scale = 1.0 / std::sqrt(static_cast<double>(d));
        double mlp_scale = 1.0 / std::sqrt(static_cast<double>(2 * d));
        m.params_["w_in"] = tensor::seeded_uniform({channels, d}, seed, "w_in", in_scale, true);
        m.params_["w_out"] = tensor::zeros({d, channels}, true);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            // Q and K share their init so Q.K^T starts near a similarity kernel;
            // they remain independent parameters from the first gradient step on.
            tensor qk_self = tensor::seeded_uniform({d, d}, seed, p + "self_qk", d_scale, true);
            m.params_[p + "self_q"] = tensor(qk_self.shape(), qk_self.values(), true);
            m.params_[p + "self_k"] = tensor(qk_self.shape(), qk_self.values(), true);
            m.params_[p + "self_v"] = tensor::seeded_uniform({d, d}, seed, p + "self_v", d_scale, true);
            tensor qk_cross = tensor::seeded_uniform({d, d}, seed, p + "cross_qk", d_scale, true);
            m.params_[p + "cross_q"] = tensor(qk_cross.shape(), qk_cross.values(), true);
            m.params_[p + "cross_k"] = tensor(qk_cross.shape(), qk_cross.values(), true);
            m.params_[p + "cross_v"] =
                tensor::seeded_uniform({d, d}, seed, p + "cross_v", d_scale, true);
            m.params_[p + "mlp_w1"] =
                tensor::seeded_uniform({d, 2 * d}, seed, p + "mlp_w1", d_scale, true);
            m.params_[p + "mlp_w2"] =
                tensor::seeded_uniform({2 * d, d}, seed, p + "mlp_w2", mlp_scale, true);
        }
        m.pos_ = positional_codes(h, w, d, seed, cfg.pos_scale);
        m.center_ = centering_matrix(h * w);
        return m;
    }

    // I - J/n: subtracts the per-channel spatial mean. Centering the content
    // stream gives attention logits sign contrast (background cells
    // anti-correlate with object tokens); as a plain matmul it stays inside
    // the autodiff graph.
    static tensor centering_matrix(std::size_t n) {
        std::vector<double> c(n * n, -1.0 / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) c[i * n + i] += 1.0;
        return tensor({n, n}, std::move(c));
    }

    const denoiser_config& config() const { return cfg_; }
    std::size_t channels() const { return C_; }
    std::size_t grid_h() const { return h_; }
    std::size_t grid_w() const { return w_; }
    std::uint64_t seed() const { return seed_; }
    const tensor& positional() const { return pos_; }

    std::map<std::string, tensor>& params() { return params_; }
    const std::map<std::string, tensor>& params() const { return params_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    std::uint64_t eval_count() const { return evals_; }
    void reset_eval_count() { evals_ = 0; }

    // One refinement step. z: {C, h, w}; tau: {m, d} condition tokens, m >= 1.
    // Returns the refined latent; appends one record per layer when capturing.
    tensor forward(const tensor& z, std::size_t k, const tensor& tau, bool capture = false,
                   std::vector<attention_record>* records = nullptr) const {
        if (z.rank() != 3 || z.dim(0) != C_ || z.dim(1) != h_ || z.dim(2) != w_)
            throw shape_error("denoiser: latent shape mismatch");
        if (tau.rank() != 2 || tau.dim(1) != cfg_.embed_dim || tau.dim(0) < 1)
            throw shape_error("denoiser: condition tokens must be {m>=1, embed_dim}");
        ++evals_;
        std::size_t hw = h_ * w_;
        std::size_t d = cfg_.embed_dim;
        double att_scale = 1.0 / std::sqrt(static_cast<double>(d));

        tensor tokens = transpose(reshape(z, {C_, hw})); // {hw, C}
        tensor x = matmul(matmul(center_, tokens), params_.at("w_in")); // {hw, d}

        // entry offsets: positional codes + broadcast step embedding
        std::vector<double> entry(hw * d);
        std::vector<double> te = time_embedding(k, d);
        const double* pc = pos_.data();
        for (std::size_t i = 0; i < hw; ++i)
            for (std::size_t j = 0; j < d; ++j) entry[i * d + j] = pc[i * d + j] + te[j];
        x = add(x, tensor({hw, d}, std::move(entry)));

        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            tensor q = matmul(x, params_.at(p + "self_q"));
            tensor kk = matmul(x, params_.at(p + "self_k"));
            tensor v = matmul(x, params_.at(p + "self_v"));
            tensor a_self = softmax_rows(matmul(q, transpose(kk)), att_scale);
            x = add(x, matmul(a_self, v));

            tensor qx = matmul(x, params_.at(p + "cross_q"));
            tensor kx = matmul(tau, params_.at(p + "cross_k"));
            tensor vx = matmul(tau, params_.at(p + "cross_v"));
            tensor a_cross = softmax_rows(matmul(qx, transpose(kx)), att_scale);
            x = add(x, matmul(a_cross, vx));

            x = add(x, matmul(gelu(matmul(x, params_.at(p + "mlp_w1"))), params_.at(p + "mlp_w2")));

            if (capture && records)
                records->push_back({l, k, a_self.detach(), a_cross.detach()});
        }

        tensor out_tokens = add(tokens, matmul(x, params_.at("w_out")));
        return reshape(transpose(out_tokens), {C_, h_, w_});
    }

    // ----- serialization: directory of DTNR tensors plus a JSON manifest -----

    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        nlohmann::json manifest;
        manifest["format"] = "dintr-denoiser";
        manifest["version"] = 1;
        manifest["config"] = {{"layers", cfg_.layers},
                              {"embed_dim", cfg_.embed_dim},
                              {"pos_scale", cfg_.pos_scale}};
        manifest["channels"] = C_;
        manifest["grid"] = {h_, w_};
        manifest["seed"] = seed_;
        std::vector<std::string> names;
        for (const auto& [name, t] : params_) names.push_back(name);
        manifest["params"] = names;
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        for (const auto& [name, t] : params_) save_tensor(dir / (name + ".dtnr"), t);
    }

    static denoiser load(const std::filesystem::path& dir) {
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
        } catch (const nlohmann::json::exception& e) {
            throw io_error("bad denoiser manifest: " + std::string(e.what()));
        }
        if (manifest.value("format", "") != "dintr-denoiser")
            throw io_error("not a denoiser directory: " + dir.string());
        denoiser_config cfg;
        cfg.layers = manifest.at("config").at("layers").get<std::size_t>();
        cfg.embed_dim = manifest.at("config").at("embed_dim").get<std::size_t>();
        cfg.pos_scale = manifest.at("config").at("pos_scale").get<double>();
        std::size_t C = manifest.at("channels").get<std::size_t>();
        std::size_t h = manifest.at("grid").at(0).get<std::size_t>();
        std::size_t w = manifest.at("grid").at(1).get<std::size_t>();
        std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();
        denoiser ref = init(cfg, C, h, w, seed); // reference shapes
        denoiser m;
        m.cfg_ = cfg;
        m.C_ = C;
        m.h_ = h;
        m.w_ = w;
        m.seed_ = seed;
        m.pos_ = positional_codes(h, w, cfg.embed_dim, seed, cfg.pos_scale);
        m.center_ = centering_matrix(h * w);
        for (const auto& name : manifest.at("params").get<std::vector<std::string>>()) {
            tensor t = load_tensor(dir / (name + ".dtnr"));
            auto it = ref.params_.find(name);
            if (it == ref.params_.end()) throw io_error("unknown parameter in manifest: " + name);
            if (t.shape() != it->second.shape())
                throw io_error("parameter shape mismatch for " + name);
            m.params_[name] = tensor(t.shape(), t.values(), true);
        }
        if (m.params_.size() != ref.params_.size())
            throw io_error("denoiser manifest is missing parameters");
        return m;
    }

private:
    denoiser_config cfg_;
    std::size_t C_ = 0, h_ = 0, w_ = 0;
    std::uint64_t seed_ = 0;
    std::map<std::string, tensor> params_;
    tensor pos_;
    tensor center_;
    mutable std::uint64_t evals_ = 0;
};

} // namespace dintr
