#pragma once

#include <cmath>
#include <string>

#include "gf/nn/tape.hpp"
#include "gf/rng.hpp"

namespace gf::nn {

template <class T>
Tensor<T> randn(Rng& rng, std::vector<int64_t> shape, double stddev) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
    return t;
}

// y = x W^T + b, weights stored (out, in) and fed to matmul as x (R,in) * W^T.
template <class T>
struct Linear {
    int w = -1, b = -1;
    int64_t in = 0, out = 0;

    void init(ParamStore<T>& ps, const std::string& name, int64_t in_dim, int64_t out_dim,
              Rng& rng, double gain = 1.0) {
        in = in_dim;
        out = out_dim;
        double std = gain / std::sqrt(static_cast<double>(in_dim));
        w = ps.add(name + ".w", randn<T>(rng, {out_dim, in_dim}, std));
        b = ps.add(name + ".b", Tensor<T>({out_dim}), false);
    }

    void init_zero(ParamStore<T>& ps, const std::string& name, int64_t in_dim, int64_t out_dim) {
        in = in_dim;
        out = out_dim;
        w = ps.add(name + ".w", Tensor<T>({out_dim, in_dim}));
        b = ps.add(name + ".b", Tensor<T>({out_dim}), false);
    }

    // x: (..., in) -> (..., out)
    typename Tape<T>::Id operator()(Tape<T>& t, ParamStore<T>& ps, typename Tape<T>::Id x) const {
        auto xs = t.val(x).shape();
        int64_t rows = t.val(x).numel() / in;
        auto x2 = t.reshape(x, {rows, in});
        auto wt = t.param(ps, w);
        // (rows,in) x (out,in)^T : use bmm-free path via matmul with transposed weight
        auto y = matmul_nt(t, x2, wt);
        y = t.add_bias(y, t.param(ps, b));
        xs.back() = out;
        return t.reshape(y, xs);
    }

private:
    // (R,K) x (N,K)^T -> (R,N) expressed with gather-free transpose handling
    static typename Tape<T>::Id matmul_nt(Tape<T>& t, typename Tape<T>::Id a,
                                          typename Tape<T>::Id w) {
        // reuse bmm_nt with batch 1
        auto as = t.val(a).shape();
        auto ws = t.val(w).shape();
        auto a3 = t.reshape(a, {1, as[0], as[1]});
        auto w3 = t.reshape(w, {1, ws[0], ws[1]});
        auto y = t.bmm_nt(a3, w3);
        return t.reshape(y, {as[0], ws[0]});
    }
};

template <class T>
struct Conv2d {
    int w = -1, b = -1;
    int stride = 1, pad = 1;

    void init(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout, int64_t k,
              int stride_, int pad_, Rng& rng) {
        stride = stride_;
        pad = pad_;
        double std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
        w = ps.add(name + ".w", randn<T>(rng, {cout, cin, k, k}, std));
        b = ps.add(name + ".b", Tensor<T>({cout}), false);
    }

    typename Tape<T>::Id operator()(Tape<T>& t, ParamStore<T>& ps, typename Tape<T>::Id x) const {
        return t.conv2d(x, t.param(ps, w), t.param(ps, b), stride, pad);
    }
};

template <class T>
struct LayerNorm {
    int gamma = -1, beta = -1;

    void init(ParamStore<T>& ps, const std::string& name, int64_t d) {
        Tensor<T> g({d});
        g.fill(T(1));
        gamma = ps.add(name + ".g", std::move(g), false);
        beta = ps.add(name + ".b", Tensor<T>({d}), false);
    }

    typename Tape<T>::Id operator()(Tape<T>& t, ParamStore<T>& ps, typename Tape<T>::Id x) const {
        return t.layernorm(x, t.param(ps, gamma), t.param(ps, beta));
    }
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }

    // One update from the accumulated grads; grads are not cleared here.
    void step(ParamStore<T>& ps) {
        ++step_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& e : ps.entries()) {
            int64_t n = e.value.numel();
            T* v = e.value.data();
            const T* g = e.grad.data();
            T* m = e.adam_m.data();
            T* s = e.adam_v.data();
            for (int64_t i = 0; i < n; ++i) {
                double gi = static_cast<double>(g[i]);
                double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1 - cfg_.beta1) * gi;
                double si = cfg_.beta2 * static_cast<double>(s[i]) + (1 - cfg_.beta2) * gi * gi;
                m[i] = static_cast<T>(mi);
                s[i] = static_cast<T>(si);
                double mh = mi / bc1, sh = si / bc2;
                double wd = e.decay ? cfg_.weight_decay : 0.0;
                double upd = mh / (std::sqrt(sh) + cfg_.eps) + wd * static_cast<double>(v[i]);
                v[i] = static_cast<T>(static_cast<double>(v[i]) - cfg_.lr * upd);
            }
        }
    }

    double grad_norm(const ParamStore<T>& ps) const {
        double s = 0;
        for (const auto& e : ps.entries())
            for (int64_t i = 0; i < e.grad.numel(); ++i) {
                double g = static_cast<double>(e.grad[i]);
                s += g * g;
            }
        return std::sqrt(s);
    }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
};

}  // namespace gf::nn
