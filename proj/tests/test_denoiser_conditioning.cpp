#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "dintr/codec.hpp"
#include "dintr/conditioning.hpp"
#include "dintr/denoiser.hpp"
#include "dintr/rng.hpp"

using namespace dintr;

namespace {

denoiser small_model(std::size_t C = 12, std::size_t gh = 3, std::size_t gw = 3,
                     std::size_t layers = 2, std::size_t d = 8, std::uint64_t seed = 5) {
    denoiser_config cfg;
    cfg.layers = layers;
    cfg.embed_dim = d;
    return denoiser::init(cfg, C, gh, gw, seed);
}

} // namespace

TEST_CASE("denoiser config validation") {
    denoiser_config cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.layers = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg.layers = 1;
    cfg.embed_dim = 6; // not a multiple of 4
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg.embed_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg.embed_dim = 8;
    cfg.pos_scale = -0.1;
    CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("default model parameter budget adds up") {
    // w_in C*d + w_out d*C + per layer (6 d*d attention mats + d*2d + 2d*d MLP)
    denoiser_config cfg; // layers 2, embed 32
    std::size_t C = 48;
    denoiser m = denoiser::init(cfg, C, 16, 16, 1);
    std::size_t d = cfg.embed_dim;
    std::size_t expect = C * d + d * C + cfg.layers * (6 * d * d + d * 2 * d + 2 * d * d);
    CHECK(expect == 23552);
    CHECK(m.param_count() == expect);
}

TEST_CASE("freshly initialized model is the identity map") {
    denoiser m = small_model();
    tensor z = tensor::seeded_normal({12, 3, 3}, 9, "z", 1.0);
    tensor tau = tensor::seeded_normal({2, 8}, 9, "tau", 1.0);
    tensor out = m.forward(z, 3, tau);
    // w_out starts at zero, so the residual stream contributes nothing
    CHECK(out.values() == z.values());
    CHECK(out.shape() == z.shape());
}

TEST_CASE("forward guards its input shapes and counts evaluations") {
    denoiser m = small_model();
    tensor z = tensor::seeded_normal({12, 3, 3}, 9, "z", 1.0);
    tensor tau = tensor::seeded_normal({2, 8}, 9, "tau", 1.0);
    CHECK(m.eval_count() == 0);
    m.forward(z, 1, tau);
    m.forward(z, 2, tau);
    CHECK(m.eval_count() == 2);
    m.reset_eval_count();
    CHECK(m.eval_count() == 0);

    CHECK_THROWS_AS(m.forward(tensor::zeros({12, 3, 4}), 1, tau), shape_error);
    CHECK_THROWS_AS(m.forward(tensor::zeros({11, 3, 3}), 1, tau), shape_error);
    CHECK_THROWS_AS(m.forward(z, 1, tensor::zeros({2, 4})), shape_error);     // wrong d
    CHECK_THROWS_AS(m.forward(z, 1, tensor::zeros({3, 2, 8})), shape_error);  // wrong rank
}

TEST_CASE("captured attention maps are row-stochastic, correctly shaped, detached") {
    denoiser m = small_model(12, 3, 3, 3, 8);
    tensor z = tensor::seeded_normal({12, 3, 3}, 2, "z", 1.0);
    tensor tau = tensor::seeded_normal({4, 8}, 2, "tau", 1.0);
    std::vector<attention_record> recs;
    m.forward(z, 5, tau, true, &recs);
    REQUIRE(recs.size() == 3); // one per layer
    for (std::size_t l = 0; l < recs.size(); ++l) {
        CHECK(recs[l].layer == l);
        CHECK(recs[l].step == 5);
        CHECK(recs[l].self_map.shape() == std::vector<std::size_t>{9, 9});
        CHECK(recs[l].cross_map.shape() == std::vector<std::size_t>{9, 4});
        CHECK(!recs[l].self_map.requires_grad());
        CHECK(!recs[l].cross_map.requires_grad());
        for (const tensor* map : {&recs[l].self_map, &recs[l].cross_map}) {
            std::size_t rows = map->dim(0), cols = map->dim(1);
            for (std::size_t i = 0; i < rows; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    double v = map->data()[i * cols + j];
                    CHECK(v >= 0.0);
                    sum += v;
                }
                CHECK(std::fabs(sum - 1.0) <= 1e-12);
            }
        }
    }
    // capture off appends nothing
    std::vector<attention_record> empty;
    m.forward(z, 5, tau, false, &empty);
    CHECK(empty.empty());
}

TEST_CASE("time embedding interleaves sin/cos at geometric frequencies") {
    std::size_t d = 8;
    auto e = time_embedding(3, d);
    REQUIRE(e.size() == d);
    for (std::size_t i = 0; i < d / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        CHECK(e[2 * i] == doctest::Approx(std::sin(3.0 * freq)).epsilon(1e-15));
        CHECK(e[2 * i + 1] == doctest::Approx(std::cos(3.0 * freq)).epsilon(1e-15));
    }
    auto e0 = time_embedding(0, d);
    for (std::size_t i = 0; i < d / 2; ++i) {
        CHECK(e0[2 * i] == 0.0);
        CHECK(e0[2 * i + 1] == 1.0);
    }
}

TEST_CASE("positional codes: shape, amplitude bound, determinism, shift kernel") {
    CHECK_THROWS_AS(positional_codes(2, 2, 6, 1, 0.5), contract_error); // d % 4 != 0
    std::size_t h = 4, w = 5, d = 8;
    tensor p = positional_codes(h, w, d, 7, 0.5);
    CHECK(p.shape() == std::vector<std::size_t>{h * w, d});
    for (double v : p.values()) CHECK(std::fabs(v) <= 0.5 + 1e-12);
    tensor q = positional_codes(h, w, d, 7, 0.5);
    CHECK(p.values() == q.values());
    tensor r = positional_codes(h, w, d, 8, 0.5);
    CHECK(p.values() != r.values());

    // the code inner product depends only on the cell offset, not the phases:
    // <c(u), c(v)> = amp^2 * (sum_a cos(w_a dx) + sum_a cos(w_a dy))
    auto dot = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += p.at({a, j}) * p.at({b, j});
        return s;
    };
    // same offset (1,0) between two different pairs gives the same dot
    CHECK(dot(0, 1) == doctest::Approx(dot(6, 7)).epsilon(1e-12));
    // zero offset maximizes it
    CHECK(dot(0, 0) > dot(0, 1));
    CHECK(dot(0, 0) > dot(0, w)); // vertical neighbor
}

TEST_CASE("centering matrix removes the mean and stays in the graph") {
    tensor c = denoiser::centering_matrix(4);
    // rows sum to zero -> constant vectors map to zero
    tensor ones({4, 1}, {1, 1, 1, 1});
    for (double v : matmul(c, ones).values()) CHECK(std::fabs(v) <= 1e-15);
    tensor x({4, 1}, {1, 2, 3, 4});
    auto y = matmul(c, x).values();
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(y[i] == doctest::Approx((i + 1.0) - 2.5).epsilon(1e-14));
}

TEST_CASE("model save/load round-trips parameters and behavior") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "dintr_model_test";
    fs::remove_all(dir);
    denoiser m = small_model();
    // perturb one parameter so the file is not just the init state
    auto& params = m.params();
    tensor w = params.at("w_out");
    std::vector<double> vals = w.values();
    vals[3] = 0.125;
    params.at("w_out") = tensor(w.shape(), std::move(vals), true);

    m.save(dir);
    denoiser back = denoiser::load(dir);
    CHECK(back.param_count() == m.param_count());
    CHECK(back.config().layers == m.config().layers);
    CHECK(back.config().embed_dim == m.config().embed_dim);
    for (const auto& [name, p] : m.params()) {
        REQUIRE(back.params().count(name) == 1);
        CHECK(back.params().at(name).values() == p.values());
    }
    tensor z = tensor::seeded_normal({12, 3, 3}, 3, "z", 1.0);
    tensor tau = tensor::seeded_normal({1, 8}, 3, "tau", 1.0);
    CHECK(back.forward(z, 2, tau).values() == m.forward(z, 2, tau).values());

    CHECK_THROWS_AS(denoiser::load(dir / "missing"), io_error);
    fs::remove_all(dir);
}

// ----- conditioning -----

TEST_CASE("indicator validation catches bad geometry") {
    std::size_t H = 16, W = 16;
    CHECK_NOTHROW(validate_indicator(point_ind{0.0, 0.0}, H, W));
    CHECK_NOTHROW(validate_indicator(point_ind{15.9, 15.9}, H, W));
    CHECK_THROWS_AS(validate_indicator(point_ind{-0.1, 5.0}, H, W), bounds_error);
    CHECK_THROWS_AS(validate_indicator(point_ind{5.0, 16.1}, H, W), bounds_error);

    CHECK_THROWS_AS(validate_indicator(pose_ind{}, H, W), degenerate_indicator_error);
    pose_ind pose;
    pose.points = {{2, 2}, {3, 3}};
    CHECK_NOTHROW(validate_indicator(pose, H, W));
    pose.points.push_back({2, 99});
    CHECK_THROWS_AS(validate_indicator(pose, H, W), bounds_error);

    CHECK_NOTHROW(validate_indicator(box_ind{1, 1, 5, 5}, H, W));
    CHECK_THROWS_AS(validate_indicator(box_ind{5, 1, 1, 5}, H, W), degenerate_indicator_error);
    CHECK_THROWS_AS(validate_indicator(box_ind{1, 1, 55, 5}, H, W), bounds_error);

    segment_ind seg;
    seg.h = H;
    seg.w = W;
    seg.mask.assign(H * W, 0);
    CHECK_THROWS_AS(validate_indicator(seg, H, W), degenerate_indicator_error);
    seg.mask[5] = 1;
    CHECK_NOTHROW(validate_indicator(seg, H, W));
    seg.h = 8;
    CHECK_THROWS_AS(validate_indicator(seg, H, W), shape_error);

    CHECK_THROWS_AS(validate_indicator(text_ind{}, H, W), degenerate_indicator_error);
    CHECK_NOTHROW(validate_indicator(text_ind{{1, 2}}, H, W));

    CHECK(std::string(indicator_kind(point_ind{1, 1})) == "point");
    CHECK(std::string(indicator_kind(pose)) == "pose");
    CHECK(std::string(indicator_kind(box_ind{1, 1, 2, 2})) == "box");
    CHECK(std::string(indicator_kind(seg)) == "segment");
    CHECK(std::string(indicator_kind(text_ind{{1}})) == "text");
}

TEST_CASE("point heatmap is peak-normalized Gaussian on cell centers") {
    // 2x2 grid, patch 4: cell centers at latent coords (0.5,0.5) .. (1.5,1.5)
    point_ind p{2.0, 2.0}; // latent coords (0.5, 0.5): exactly the first cell center
    auto heat = point_heatmap(p, 2, 2, 4, 1.0);
    REQUIRE(heat.size() == 4);
    CHECK(heat[0] == 1.0); // peak normalized at the covered cell
    // neighbors at distance 1: exp(-0.5); diagonal at sqrt(2): exp(-1)
    CHECK(heat[1] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(heat[2] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(heat[3] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(point_heatmap(p, 2, 2, 4, 0.0), contract_error);
}

TEST_CASE("point tokens are the heat-weighted average of cell codes") {
    condition_maps maps = condition_maps::build(3, 2, 2, 12, 8, 4, 0.25, 16);
    point_ind p{5.0, 3.0};
    double sigma = 1.5;
    tensor tok = point_tokens(p, maps, sigma, 8, 8);
    REQUIRE(tok.shape() == std::vector<std::size_t>{1, 8});
    auto heat = point_heatmap(p, 2, 2, 4, sigma);
    double total = 0.0;
    for (double v : heat) total += v;
    for (std::size_t j = 0; j < 8; ++j) {
        double want = 0.0;
        for (std::size_t u = 0; u < 4; ++u) want += heat[u] * maps.point_proj.at({u, j});
        CHECK(tok.at({0, j}) == doctest::Approx(want / total).epsilon(1e-13));
    }
    CHECK_THROWS_AS(point_tokens(point_ind{-1.0, 0.0}, maps, sigma, 8, 8), bounds_error);
}

TEST_CASE("pose tokens concatenate one token per keypoint") {
    condition_maps maps = condition_maps::build(3, 2, 2, 12, 8, 4, 0.25, 16);
    pose_ind pose;
    pose.points = {{1.0, 1.0}, {6.0, 6.0}, {3.0, 4.0}};
    tensor tok = pose_tokens(pose, maps, 1.5, 8, 8);
    REQUIRE(tok.shape() == std::vector<std::size_t>{3, 8});
    tensor single = point_tokens(pose.points[1], maps, 1.5, 8, 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(tok.at({1, j}) == single.at({0, j}));
}

TEST_CASE("box and mask cell rasterization uses cell centers") {
    // patch 4, 2x2 grid over an 8x8 frame: cell centers at pixels (2,2), (6,2), ...
    // (cells_in_box keeps cells whose center pixel falls inside the box)
    CHECK(cells_in_box(box_ind{0, 0, 7, 7}, 2, 2, 4) ==
          std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(cells_in_box(box_ind{0, 0, 3, 3}, 2, 2, 4) == std::vector<std::size_t>{0});
    CHECK(cells_in_box(box_ind{0, 0, 1, 1}, 2, 2, 4).empty()); // covers no center
    CHECK(cells_in_box(box_ind{4, 0, 7, 7}, 2, 2, 4) == std::vector<std::size_t>{1, 3});

    segment_ind seg;
    seg.h = 8;
    seg.w = 8;
    seg.mask.assign(64, 0);
    seg.mask[2 * 8 + 2] = 1; // center of cell 0
    CHECK(cells_touching_mask(seg, 2, 2, 4) == std::vector<std::size_t>{0});
    seg.mask[6 * 8 + 6] = 1; // center of cell 3
    CHECK(cells_touching_mask(seg, 2, 2, 4) == std::vector<std::size_t>{0, 3});
}

TEST_CASE("region tokens pool the latent over the covered cells") {
    // patch 4 on an 8x8 frame: 48 latent channels over a 2x2 grid
    condition_maps maps = condition_maps::build(3, 2, 2, 48, 8, 4, 0.25, 16);
    frame f(8, 8, 0.0);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t c = 0; c < 3; ++c) f.at(y, x, c) = 0.5; // light up cell 0
    tensor latent = encode_frame(f, 4);
    tensor tok = region_tokens({0}, latent, maps);
    REQUIRE(tok.shape() == std::vector<std::size_t>{1, 8});
    // mean latent over cell 0 is 0.5 in every channel -> token = 0.5 * column sums
    for (std::size_t j = 0; j < 8; ++j) {
        double want = 0.0;
        for (std::size_t c = 0; c < 48; ++c) want += 0.5 * maps.region_proj.at({c, j});
        CHECK(tok.at({0, j}) == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK_THROWS_AS(region_tokens({}, latent, maps), degenerate_indicator_error);

    // box/segment wrappers agree with the raw cell list
    tensor via_box = box_tokens(box_ind{0, 0, 3, 3}, latent, maps, 8, 8);
    CHECK(via_box.values() == tok.values());
    segment_ind seg;
    seg.h = 8;
    seg.w = 8;
    seg.mask.assign(64, 0);
    seg.mask[2 * 8 + 2] = 1;
    CHECK(segment_tokens(seg, latent, maps, 8, 8).values() == tok.values());
}

TEST_CASE("text tokens index the vocabulary and reject overflow") {
    condition_maps maps = condition_maps::build(3, 2, 2, 12, 8, 4, 0.25, 16);
    text_ind t{{0, 5, 15}};
    tensor tok = text_tokens(t, maps);
    REQUIRE(tok.shape() == std::vector<std::size_t>{3, 8});
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(tok.at({0, j}) == maps.vocab.at({0, j}));
        CHECK(tok.at({1, j}) == maps.vocab.at({5, j}));
        CHECK(tok.at({2, j}) == maps.vocab.at({15, j}));
    }
    CHECK_THROWS_AS(text_tokens(text_ind{{16}}, maps), vocab_error);
}

TEST_CASE("pack_targets assigns contiguous ranges") {
    tensor a = tensor::seeded_normal({2, 8}, 1, "a", 1.0);
    tensor b = tensor::seeded_normal({1, 8}, 1, "b", 1.0);
    tensor c = tensor::seeded_normal({3, 8}, 1, "c", 1.0);
    condition_tokens packed = pack_targets({a, b, c});
    CHECK(packed.total() == 6);
    REQUIRE(packed.ranges.size() == 3);
    CHECK(packed.ranges[0] == std::pair<std::size_t, std::size_t>{0, 2});
    CHECK(packed.ranges[1] == std::pair<std::size_t, std::size_t>{2, 1});
    CHECK(packed.ranges[2] == std::pair<std::size_t, std::size_t>{3, 3});
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(packed.tokens.at({0, j}) == a.at({0, j}));
        CHECK(packed.tokens.at({2, j}) == b.at({0, j}));
        CHECK(packed.tokens.at({5, j}) == c.at({2, j}));
    }
    CHECK_THROWS_AS(pack_targets({}), contract_error);
    CHECK_THROWS_AS(pack_targets({tensor::zeros({4})}), shape_error);
}

TEST_CASE("split_attention means columns per range and conserves row mass") {
    // hand map: 2 rows, 3 columns, ranges {0,2} and {2,1}
    tensor cross({2, 3}, {0.2, 0.3, 0.5, 0.1, 0.6, 0.3});
    std::vector<std::pair<std::size_t, std::size_t>> ranges{{0, 2}, {2, 1}};
    auto parts = split_attention(cross, ranges);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].values()[0] == doctest::Approx(0.25).epsilon(1e-15)); // (0.2+0.3)/2
    CHECK(parts[0].values()[1] == doctest::Approx(0.35).epsilon(1e-15));
    CHECK(parts[1].values()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(parts[1].values()[1] == doctest::Approx(0.3).epsilon(1e-15));
    for (std::size_t i = 0; i < 2; ++i) {
        double mass = parts[0].values()[i] * 2 + parts[1].values()[i] * 1;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK_THROWS_AS(split_attention(cross, {{0, 2}}), contract_error);        // not covering
    CHECK_THROWS_AS(split_attention(cross, {{0, 2}, {2, 0}}), contract_error); // empty range
    CHECK_THROWS_AS(split_attention(cross, {{1, 2}, {0, 1}}), contract_error); // unordered
}

TEST_CASE("indicator JSON round-trips every kind") {
    std::size_t H = 8, W = 8;
    std::vector<indicator> inds;
    inds.push_back(point_ind{3.25, 4.5});
    pose_ind pose;
    pose.points = {{1, 2}, {3, 4}};
    inds.push_back(pose);
    inds.push_back(box_ind{1, 2, 5, 6});
    segment_ind seg;
    seg.h = H;
    seg.w = W;
    seg.mask.assign(H * W, 0);
    seg.mask[10] = seg.mask[11] = seg.mask[12] = 1;
    seg.mask[63] = 1;
    inds.push_back(seg);
    inds.push_back(text_ind{{2, 7}});

    for (const indicator& ind : inds) {
        nlohmann::json j = indicator_to_json(ind);
        indicator back = indicator_from_json(j, H, W);
        CHECK(std::string(indicator_kind(back)) == std::string(indicator_kind(ind)));
        CHECK(indicator_to_json(back) == j);
    }
}

TEST_CASE("segment RLE is exact and validates its run lengths") {
    segment_ind seg;
    seg.h = 2;
    seg.w = 4;
    seg.mask = {0, 0, 1, 1, 1, 0, 0, 1};
    nlohmann::json j = indicator_to_json(seg);
    segment_ind back = std::get<segment_ind>(indicator_from_json(j, 2, 4));
    CHECK(back.mask == seg.mask);
    CHECK(back.h == 2);
    CHECK(back.w == 4);

    // leading-foreground masks must start with a 0-length background run
    segment_ind lead;
    lead.h = 1;
    lead.w = 3;
    lead.mask = {1, 1, 0};
    segment_ind lb = std::get<segment_ind>(indicator_from_json(indicator_to_json(lead), 1, 3));
    CHECK(lb.mask == lead.mask);

    CHECK_THROWS_AS(segment_from_rle("9", 2, 2), io_error);     // overruns
    CHECK_THROWS_AS(segment_from_rle("1 1", 2, 2), io_error);   // does not cover
    CHECK_NOTHROW(segment_from_rle("1 2 1", 2, 2));
}

TEST_CASE("random segment RLE round-trip") {
    rng r(31);
    for (int trial = 0; trial < 50; ++trial) {
        segment_ind seg;
        seg.h = 1 + r.next_u64() % 6;
        seg.w = 1 + r.next_u64() % 6;
        seg.mask.resize(seg.h * seg.w);
        for (auto& m : seg.mask) m = (r.next_u64() & 1) ? 1 : 0;
        nlohmann::json j = indicator_to_json(seg);
        segment_ind back = std::get<segment_ind>(indicator_from_json(j, seg.h, seg.w));
        CHECK(back.mask == seg.mask);
    }
}
