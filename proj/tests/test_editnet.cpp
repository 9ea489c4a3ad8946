#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gf/editnet/editnet.hpp"
#include "gf/nn/modules.hpp"

using namespace gf;
using namespace gf::editnet;

namespace {

template <class T>
EditorConfig tiny_config() {
    EditorConfig cfg;
    cfg.patch = 2;
    cfg.dim = 16;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.latent_c = 2;
    cfg.latent_h = 4;
    cfg.latent_w = 4;
    cfg.seed = 7;
    return cfg;
}

template <class T>
Tensor<T> randn_like(Rng& rng, std::vector<int64_t> shape) {
    Tensor<T> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal());
    return t;
}

template <class T>
EditorBatch<T> make_batch(const EditorConfig& cfg, int64_t B, uint64_t seed) {
    Rng rng(seed);
    EditorBatch<T> b;
    std::vector<int64_t> s{B, cfg.latent_c, cfg.latent_h, cfg.latent_w};
    b.z_t = randn_like<T>(rng, s);
    b.z_ref = randn_like<T>(rng, s);
    b.z_glyph = randn_like<T>(rng, s);
    for (int64_t i = 0; i < B; ++i) {
        b.t.push_back(static_cast<T>(rng.uniform()));
        b.drop_ref.push_back(0);
        b.drop_glyph.push_back(0);
    }
    return b;
}

template <class T>
int find_param(const nn::ParamStore<T>& ps, const std::string& name) {
    for (size_t i = 0; i < ps.size(); ++i)
        if (ps[static_cast<int>(i)].name == name) return static_cast<int>(i);
    return -1;
}

}  // namespace

TEST_CASE("sequence arithmetic: three streams of patch tokens") {
    EditorConfig cfg;  // defaults: 16x16 latent, patch 2
    CHECK(cfg.tokens_per_stream() == 64);
    CHECK(cfg.seq_len() == 192);
    CHECK(cfg.patch_dim() == 16);

    EditorConfig t = tiny_config<float>();
    CHECK(t.tokens_per_stream() == 4);
    CHECK(t.seq_len() == 12);
    CHECK(t.patch_dim() == 8);

    EditorConfig bad = t;
    bad.latent_h = 5;  // not divisible by patch
    CHECK_THROWS_AS(Editor{bad}, std::invalid_argument);
    bad = t;
    bad.heads = 3;  // dim 16 not divisible
    CHECK_THROWS_AS(Editor{bad}, std::invalid_argument);
}

TEST_CASE("stream tags and shared grid positions") {
    Editor model{tiny_config<float>()};
    int64_t L = model.config().tokens_per_stream();
    CHECK(model.stream_tag(0) == Stream::Noisy);
    CHECK(model.stream_tag(L) == Stream::Reference);
    CHECK(model.stream_tag(2 * L) == Stream::Glyph);
    // same grid cell for the s-th token of every stream
    for (int64_t s = 0; s < L; ++s) {
        CHECK(model.token_position(s) == model.token_position(s + L));
        CHECK(model.token_position(s) == model.token_position(s + 2 * L));
    }
    CHECK(model.token_position(0) == std::pair<int64_t, int64_t>{0, 0});
    CHECK(model.token_position(3) == std::pair<int64_t, int64_t>{1, 1});
}

TEST_CASE("flow interpolation endpoints and target velocity") {
    Rng rng(11);
    TensorF x0 = randn_like<float>(rng, {2, 3, 3});
    TensorF x1 = randn_like<float>(rng, {2, 3, 3});
    TensorF z, v;
    flow_interpolate(x0, x1, 0.f, z, v);
    CHECK(z == x0);
    flow_interpolate(x0, x1, 1.f, z, v);
    CHECK(z == x1);
    for (int64_t i = 0; i < v.numel(); ++i)
        CHECK(v[i] == doctest::Approx(x1[i] - x0[i]));
    flow_interpolate(x0, x1, 0.25f, z, v);
    for (int64_t i = 0; i < z.numel(); ++i)
        CHECK(z[i] == doctest::Approx(0.75f * x0[i] + 0.25f * x1[i]));

    CHECK_THROWS_AS(flow_interpolate(x0, x1, 1.5f, z, v), std::invalid_argument);
    TensorF other({2, 2, 2});
    CHECK_THROWS_AS(flow_interpolate(x0, other, 0.5f, z, v), nn::ShapeMismatch);
}

TEST_CASE("region-weighted loss against hand-computed values") {
    TensorF pred({1, 2, 2, 2}), target({1, 2, 2, 2}), mask({1, 2, 2});
    pred.fill(1.f);
    target.fill(0.f);  // squared error 1 everywhere

    mask.fill(0.f);
    CHECK(weighted_loss(pred, target, mask, 5.f) == doctest::Approx(1.0));  // plain MSE
    mask.fill(1.f);
    CHECK(weighted_loss(pred, target, mask, 5.f) == doctest::Approx(6.0));  // 1 + lambda
    CHECK(weighted_loss(pred, target, mask, 0.f) == doctest::Approx(1.0));

    // half the spatial cells masked: mean(1 + 5M) = (1 + 6) / 2
    mask.fill(0.f);
    mask[0] = 1.f;
    mask[1] = 1.f;
    CHECK(weighted_loss(pred, target, mask, 5.f) == doctest::Approx(3.5));

    // linear in lambda at fixed error field
    double l2 = weighted_loss(pred, target, mask, 2.f);
    double l4 = weighted_loss(pred, target, mask, 4.f);
    CHECK(l4 - l2 == doctest::Approx(l2 - weighted_loss(pred, target, mask, 0.f)));

    CHECK_THROWS_AS(weighted_loss(pred, target, mask, -1.f), std::invalid_argument);
    TensorF bad({1, 3, 3});
    CHECK_THROWS_AS(weighted_loss(pred, target, bad, 5.f), nn::ShapeMismatch);
}

TEST_CASE("freshly initialized editor predicts exactly zero velocity") {
    Editor model{tiny_config<float>()};
    auto batch = make_batch<float>(model.config(), 2, 3);
    TensorF v = model.predict(batch);
    CHECK(v.shape() == std::vector<int64_t>{2, 2, 4, 4});
    for (int64_t i = 0; i < v.numel(); ++i) CHECK(v[i] == 0.0f);
}

TEST_CASE("dropped condition streams become the learned null embedding exactly") {
    Editor model{tiny_config<float>()};
    const auto& cfg = model.config();
    int64_t L = cfg.tokens_per_stream(), S = cfg.seq_len(), d = cfg.dim;

    auto batch = make_batch<float>(cfg, 2, 5);
    batch.drop_ref[0] = 1;
    batch.drop_glyph[1] = 1;

    int ni = find_param(model.params(), "nulls");
    REQUIRE(ni >= 0);
    const TensorF& nulls = model.params()[ni].value;

    nn::Tape<float> t;
    TensorF x = t.val(model.assemble(t, batch));
    REQUIRE(x.shape() == std::vector<int64_t>{2 * S, d});
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t s = 0; s < S; ++s) {
            Stream st = model.stream_tag(s);
            bool drop = (b == 0 && st == Stream::Reference) || (b == 1 && st == Stream::Glyph);
            if (!drop) continue;
            int64_t null_row = st == Stream::Reference ? 0 : 1;
            for (int64_t j = 0; j < d; ++j)
                CHECK(x[(b * S + s) * d + j] == nulls[null_row * d + j]);  // bit-exact
        }
    // non-dropped rows keep their content: batch 1's reference differs per token
    bool varied = false;
    for (int64_t s = L; s < 2 * L && !varied; ++s)
        varied = x[(S + s) * d] != x[(S + L) * d];
    CHECK(varied);
}

TEST_CASE("velocity depends on every stream, including the glyph map") {
    Editor model{tiny_config<float>()};
    // give the zero-initialized head real weights so the output is live
    Rng rng(21);
    int hi = find_param(model.params(), "head.w");
    REQUIRE(hi >= 0);
    auto& hw = model.params()[hi].value;
    for (int64_t i = 0; i < hw.numel(); ++i) hw[i] = static_cast<float>(0.1 * rng.normal());

    auto batch = make_batch<float>(model.config(), 1, 9);
    TensorF base = model.predict(batch);

    auto mutate = [&](TensorF EditorBatch<float>::* field) {
        auto b2 = batch;
        (b2.*field)[0] += 0.5f;
        TensorF out = model.predict(b2);
        double diff = 0;
        for (int64_t i = 0; i < out.numel(); ++i)
            diff += std::abs(static_cast<double>(out[i]) - base[i]);
        return diff;
    };
    CHECK(mutate(&EditorBatch<float>::z_t) > 0.0);
    CHECK(mutate(&EditorBatch<float>::z_ref) > 0.0);
    CHECK(mutate(&EditorBatch<float>::z_glyph) > 0.0);

    // time input matters too
    auto b3 = batch;
    b3.t[0] = batch.t[0] < 0.5f ? 0.9f : 0.1f;
    TensorF out_t = model.predict(b3);
    double dt = 0;
    for (int64_t i = 0; i < out_t.numel(); ++i)
        dt += std::abs(static_cast<double>(out_t[i]) - base[i]);
    CHECK(dt > 0.0);
}

TEST_CASE("batch order does not change per-sample outputs") {
    Editor model{tiny_config<float>()};
    Rng rng(33);
    int hi = find_param(model.params(), "head.w");
    auto& hw = model.params()[hi].value;
    for (int64_t i = 0; i < hw.numel(); ++i) hw[i] = static_cast<float>(0.1 * rng.normal());

    auto batch = make_batch<float>(model.config(), 2, 17);
    batch.drop_ref[1] = 1;
    TensorF out = model.predict(batch);

    // swap the two samples
    EditorBatch<float> sw = batch;
    int64_t chw = out.numel() / 2;
    for (int64_t i = 0; i < chw; ++i) {
        std::swap(sw.z_t[i], sw.z_t[chw + i]);
        std::swap(sw.z_ref[i], sw.z_ref[chw + i]);
        std::swap(sw.z_glyph[i], sw.z_glyph[chw + i]);
    }
    std::swap(sw.t[0], sw.t[1]);
    std::swap(sw.drop_ref[0], sw.drop_ref[1]);
    std::swap(sw.drop_glyph[0], sw.drop_glyph[1]);
    TensorF out_sw = model.predict(sw);
    for (int64_t i = 0; i < chw; ++i) {
        CHECK(out_sw[i] == out[chw + i]);
        CHECK(out_sw[chw + i] == out[i]);
    }
}

TEST_CASE("batch validation rejects malformed inputs") {
    Editor model{tiny_config<float>()};
    auto good = make_batch<float>(model.config(), 1, 2);
    auto b = good;
    b.z_ref = TensorF({1, 2, 4, 2});
    CHECK_THROWS_AS(model.predict(b), nn::ShapeMismatch);
    b = good;
    b.t[0] = 1.5f;
    CHECK_THROWS_AS(model.predict(b), std::invalid_argument);
    b = good;
    b.drop_ref.clear();
    CHECK_THROWS_AS(model.predict(b), nn::ShapeMismatch);
}

TEST_CASE("analytic gradients match finite differences in double precision") {
    EditorConfig cfg = tiny_config<double>();
    EditorT<double> model{cfg};
    // randomize the head so its gradient path is exercised
    Rng hr(41);
    int hi = find_param(model.params(), "head.w");
    auto& hw = model.params()[hi].value;
    for (int64_t i = 0; i < hw.numel(); ++i) hw[i] = 0.05 * hr.normal();

    auto batch = make_batch<double>(cfg, 2, 13);
    batch.drop_ref[1] = 1;  // exercise the null-embedding path too

    Rng tr(14);
    Tensor<double> v_star = randn_like<double>(tr, batch.z_t.shape());
    Tensor<double> weight(batch.z_t.shape());
    for (int64_t i = 0; i < weight.numel(); ++i) weight[i] = 1.0 + 5.0 * tr.uniform();

    auto loss_value = [&]() {
        nn::Tape<double> t;
        auto v = model.forward(t, batch);
        auto err = t.sub(v, t.constant(v_star));
        auto l = t.mean_all(t.mul(t.mul(err, err), t.constant(weight)));
        return t.val(l)[0];
    };

    model.params().zero_grad();
    {
        nn::Tape<double> t;
        auto v = model.forward(t, batch);
        auto err = t.sub(v, t.constant(v_star));
        auto l = t.mean_all(t.mul(t.mul(err, err), t.constant(weight)));
        t.backward(l);
    }

    Rng pick(99);
    const double eps = 1e-5;
    for (auto& e : model.params().entries()) {
        for (int rep = 0; rep < 3; ++rep) {
            int64_t i = pick.uniform_int(0, e.value.numel() - 1);
            double keep = e.value[i];
            e.value[i] = keep + eps;
            double lp = loss_value();
            e.value[i] = keep - eps;
            double lm = loss_value();
            e.value[i] = keep;
            double fd = (lp - lm) / (2 * eps);
            double an = e.grad[i];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            double rel = std::abs(fd - an) / denom;
            if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;  // noise floor
            INFO(e.name, "[", i, "] fd=", fd, " an=", an);
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("training step is deterministic and reduces loss on a fixed batch") {
    EditorConfig cfg = tiny_config<float>();
    cfg.cond_dropout = 0.1;

    auto run = [&](uint64_t seed) {
        Editor model{cfg};
        nn::AdamW<float> opt({.lr = 1e-3f});
        Rng data(seed);
        TensorF z1 = randn_like<float>(data, {4, 2, 4, 4});
        TensorF zr = randn_like<float>(data, {4, 2, 4, 4});
        TensorF zg = randn_like<float>(data, {4, 2, 4, 4});
        TensorF m({4, 4, 4});
        for (int64_t i = 0; i < m.numel(); ++i) m[i] = (i % 3 == 0) ? 1.f : 0.f;
        std::vector<double> losses;
        for (int step = 0; step < 30; ++step) {
            Rng r(derive_seed(123, static_cast<uint64_t>(step)));
            losses.push_back(train_step(model, opt, z1, zr, zg, m, r).loss);
        }
        return losses;
    };
    auto a = run(7), b = run(7);
    CHECK(a == b);  // bit-identical across runs

    // loss trends down over the run (averaged to smooth per-step t/noise draws)
    double early = 0, late = 0;
    for (int i = 0; i < 10; ++i) early += a[static_cast<size_t>(i)];
    for (int i = 20; i < 30; ++i) late += a[static_cast<size_t>(i)];
    CHECK(late < early);
    for (double l : a) CHECK(std::isfinite(l));
}
