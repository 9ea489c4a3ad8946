#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "gf/nn/modules.hpp"
#include "gf/nn/tape.hpp"

using namespace gf;
using namespace gf::nn;
using TapeD = Tape<double>;
using Id = TapeD::Id;

namespace {

// Analytic grads vs central differences over every parameter entry.
double max_rel_grad_error(ParamStore<double>& ps,
                          const std::function<double(Tape<double>&, bool)>& loss_fn,
                          double h = 1e-6) {
    ps.zero_grad();
    {
        Tape<double> t;
        loss_fn(t, true);
    }
    double worst = 0;
    for (auto& e : ps.entries()) {
        for (int64_t i = 0; i < e.value.numel(); ++i) {
            double saved = e.value[i];
            e.value[i] = saved + h;
            Tape<double> tp;
            double lp = loss_fn(tp, false);
            e.value[i] = saved - h;
            Tape<double> tm;
            double lm = loss_fn(tm, false);
            e.value[i] = saved;
            double fd = (lp - lm) / (2 * h);
            double an = e.grad[i];
            double diff = std::fabs(fd - an);
            if (diff < 1e-9) continue;  // below central-difference noise floor
            double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
            worst = std::max(worst, diff / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("linear + gelu + layernorm gradients") {
    Rng rng(11);
    ParamStore<double> ps;
    Linear<double> fc1, fc2;
    LayerNorm<double> ln;
    fc1.init(ps, "fc1", 5, 7, rng);
    ln.init(ps, "ln", 7);
    fc2.init(ps, "fc2", 7, 3, rng);
    Tensor<double> x = randn<double>(rng, {4, 5}, 1.0);

    auto loss_fn = [&](Tape<double>& t, bool back) {
        auto xi = t.constant(x);
        auto h = fc1(t, ps, xi);
        h = t.gelu(h);
        h = ln(t, ps, h);
        h = fc2(t, ps, h);
        auto sq = t.mul(h, h);
        auto l = t.mean_all(sq);
        if (back) t.backward(l);
        return t.val(l)[0];
    };
    CHECK(max_rel_grad_error(ps, loss_fn) < 1e-6);
}

TEST_CASE("conv2d + relu + upsample gradients") {
    Rng rng(12);
    ParamStore<double> ps;
    Conv2d<double> c1, c2;
    c1.init(ps, "c1", 2, 3, 3, 2, 1, rng);
    c2.init(ps, "c2", 3, 2, 3, 1, 1, rng);
    Tensor<double> x = randn<double>(rng, {2, 2, 6, 6}, 1.0);

    auto loss_fn = [&](Tape<double>& t, bool back) {
        auto xi = t.constant(x);
        auto h = c1(t, ps, xi);
        h = t.relu(h);
        h = t.upsample2x(h);
        h = c2(t, ps, h);
        h = t.sigmoid(h);
        auto l = t.mean_all(t.mul(h, h));
        if (back) t.backward(l);
        return t.val(l)[0];
    };
    CHECK(max_rel_grad_error(ps, loss_fn) < 1e-6);
}

TEST_CASE("attention-shaped graph gradients") {
    Rng rng(13);
    ParamStore<double> ps;
    const int64_t S = 6, d = 8, heads = 2, dh = d / heads;
    Linear<double> q, k, v, o;
    q.init(ps, "q", d, d, rng);
    k.init(ps, "k", d, d, rng);
    v.init(ps, "v", d, d, rng);
    o.init(ps, "o", d, d, rng);
    Tensor<double> x = randn<double>(rng, {S, d}, 1.0);

    // (S, d) -> (heads, S, dh) permutation map
    auto split = std::make_shared<std::vector<int64_t>>(heads * S * dh);
    auto merge = std::make_shared<std::vector<int64_t>>(S * d);
    for (int64_t hh = 0; hh < heads; ++hh)
        for (int64_t s = 0; s < S; ++s)
            for (int64_t c = 0; c < dh; ++c) {
                (*split)[(hh * S + s) * dh + c] = s * d + hh * dh + c;
                (*merge)[s * d + hh * dh + c] = (hh * S + s) * dh + c;
            }

    auto loss_fn = [&](Tape<double>& t, bool back) {
        auto xi = t.constant(x);
        auto qh = t.gather(q(t, ps, xi), split, {heads, S, dh});
        auto kh = t.gather(k(t, ps, xi), split, {heads, S, dh});
        auto vh = t.gather(v(t, ps, xi), split, {heads, S, dh});
        auto att = t.softmax_last(t.scale(t.bmm_nt(qh, kh), 1.0 / std::sqrt(double(dh))));
        auto ctx = t.bmm_nn(att, vh);
        auto mergedv = t.gather(ctx, merge, {S, d});
        auto y = o(t, ps, mergedv);
        auto l = t.mean_all(t.mul(y, y));
        if (back) t.backward(l);
        return t.val(l)[0];
    };
    CHECK(max_rel_grad_error(ps, loss_fn) < 1e-6);
}

TEST_CASE("softmax_xent and bce_logits gradients") {
    Rng rng(14);
    ParamStore<double> ps;
    Linear<double> fc;
    fc.init(ps, "fc", 4, 6, rng);
    Tensor<double> x = randn<double>(rng, {3, 4}, 1.0);
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{1, 5, 0});

    auto loss_fn = [&](Tape<double>& t, bool back) {
        auto l = t.softmax_xent(fc(t, ps, t.constant(x)), labels);
        if (back) t.backward(l);
        return t.val(l)[0];
    };
    CHECK(max_rel_grad_error(ps, loss_fn) < 1e-6);

    auto targets = std::make_shared<Tensor<double>>(std::vector<int64_t>{3, 6});
    Rng rng2(15);
    for (int64_t i = 0; i < targets->numel(); ++i) (*targets)[i] = rng2.uniform();
    auto loss_fn2 = [&](Tape<double>& t, bool back) {
        auto l = t.bce_logits(fc(t, ps, t.constant(x)), targets);
        if (back) t.backward(l);
        return t.val(l)[0];
    };
    CHECK(max_rel_grad_error(ps, loss_fn2) < 1e-6);
}

TEST_CASE("concat and slice routing") {
    Rng rng(16);
    ParamStore<double> ps;
    Linear<double> fc;
    fc.init(ps, "fc", 3, 3, rng);
    Tensor<double> a = randn<double>(rng, {2, 3}, 1.0);
    Tensor<double> b = randn<double>(rng, {4, 3}, 1.0);

    auto loss_fn = [&](Tape<double>& t, bool back) {
        auto ai = fc(t, ps, t.constant(a));
        auto bi = fc(t, ps, t.constant(b));
        auto cat = t.concat0({ai, bi});
        auto top = t.slice0(cat, 1, 5);
        auto l = t.mean_all(t.mul(top, top));
        if (back) t.backward(l);
        return t.val(l)[0];
    };
    CHECK(max_rel_grad_error(ps, loss_fn) < 1e-6);
}

TEST_CASE("adamw determinism") {
    auto run = [] {
        Rng rng(21);
        ParamStore<float> ps;
        Linear<float> fc;
        fc.init(ps, "fc", 4, 4, rng);
        AdamW<float> opt({.lr = 1e-2});
        Tensor<float> x = randn<float>(rng, {8, 4}, 1.0);
        float last = 0;
        for (int i = 0; i < 5; ++i) {
            ps.zero_grad();
            Tape<float> t;
            auto y = fc(t, ps, t.constant(x));
            auto l = t.mean_all(t.mul(y, y));
            t.backward(l);
            opt.step(ps);
            last = t.val(l)[0];
        }
        return last;
    };
    CHECK(run() == run());
}
