#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/kernels.hpp"
#include "gf/rng.hpp"
#include "gf/tensor.hpp"

// Reverse-mode autodiff over a per-step tape. Templated on the scalar type:
// float for training throughput, double for the finite-difference checks.
namespace gf::nn {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& m) : std::runtime_error("ShapeMismatch: " + m) {}
};

struct NonFinite : std::runtime_error {
    explicit NonFinite(const std::string& m) : std::runtime_error("NonFinite: " + m) {}
};

// Named parameter storage shared by modules, the optimizer, and checkpoints.
template <class T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
        Tensor<T> adam_m;
        Tensor<T> adam_v;
        bool decay = true;  // weight decay applies; off for biases/norms/embeddings
    };

    int add(std::string name, Tensor<T> value, bool decay = true) {
        Entry e;
        e.name = std::move(name);
        e.decay = decay;
        e.grad = Tensor<T>(value.shape());
        e.adam_m = Tensor<T>(value.shape());
        e.adam_v = Tensor<T>(value.shape());
        e.value = std::move(value);
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }

    Entry& operator[](int i) { return entries_[static_cast<size_t>(i)]; }
    const Entry& operator[](int i) const { return entries_[static_cast<size_t>(i)]; }
    size_t size() const { return entries_.size(); }
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(T(0));
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

private:
    std::vector<Entry> entries_;
};

template <class T>
class Tape {
public:
    using Id = int32_t;

    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void(Tape&)> back;
        bool needs_grad = false;
    };

    Tensor<T>& val(Id i) { return nodes_[static_cast<size_t>(i)].val; }
    const Tensor<T>& val(Id i) const { return nodes_[static_cast<size_t>(i)].val; }
    Tensor<T>& grad(Id i) { return nodes_[static_cast<size_t>(i)].grad; }
    bool needs_grad(Id i) const { return nodes_[static_cast<size_t>(i)].needs_grad; }

    Id constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

    Id param(ParamStore<T>& store, int idx) {
        Id id = push(store[idx].value, true, nullptr);
        typename ParamStore<T>::Entry* e = &store[idx];
        nodes_[static_cast<size_t>(id)].back = [id, e](Tape& t) {
            const Tensor<T>& g = t.grad(id);
            kern::axpy(g.numel(), T(1), g.data(), e->grad.data());
        };
        return id;
    }

    // ---- arithmetic ----

    Id add(Id a, Id b) {
        require_same(a, b, "add");
        Tensor<T> out(val(a).shape());
        kern::add(out.numel(), val(a).data(), val(b).data(), out.data());
        return binary(std::move(out), a, b, [](Tape& t, Id y, Id a2, Id b2) {
            const Tensor<T>& g = t.grad(y);
            if (t.needs_grad(a2)) kern::axpy(g.numel(), T(1), g.data(), t.grad(a2).data());
            if (t.needs_grad(b2)) kern::axpy(g.numel(), T(1), g.data(), t.grad(b2).data());
        });
    }

    Id sub(Id a, Id b) {
        require_same(a, b, "sub");
        Tensor<T> out(val(a).shape());
        const T* x = val(a).data();
        const T* y = val(b).data();
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] - y[i];
        return binary(std::move(out), a, b, [](Tape& t, Id y2, Id a2, Id b2) {
            const Tensor<T>& g = t.grad(y2);
            if (t.needs_grad(a2)) kern::axpy(g.numel(), T(1), g.data(), t.grad(a2).data());
            if (t.needs_grad(b2)) kern::axpy(g.numel(), T(-1), g.data(), t.grad(b2).data());
        });
    }

    Id mul(Id a, Id b) {
        require_same(a, b, "mul");
        Tensor<T> out(val(a).shape());
        kern::mul(out.numel(), val(a).data(), val(b).data(), out.data());
        return binary(std::move(out), a, b, [](Tape& t, Id y, Id a2, Id b2) {
            const Tensor<T>& g = t.grad(y);
            int64_t n = g.numel();
            if (t.needs_grad(a2)) {
                const T* bv = t.val(b2).data();
                T* ga = t.grad(a2).data();
                const T* gv = g.data();
                for (int64_t i = 0; i < n; ++i) ga[i] += gv[i] * bv[i];
            }
            if (t.needs_grad(b2)) {
                const T* av = t.val(a2).data();
                T* gb = t.grad(b2).data();
                const T* gv = g.data();
                for (int64_t i = 0; i < n; ++i) gb[i] += gv[i] * av[i];
            }
        });
    }

    Id scale(Id a, T s) {
        Tensor<T> out = val(a);
        kern::scale(out.numel(), s, out.data());
        return unary(std::move(out), a, [s](Tape& t, Id y, Id a2) {
            kern::axpy(t.grad(y).numel(), s, t.grad(y).data(), t.grad(a2).data());
        });
    }

    // x: (..., d) + bias (d), broadcast over leading dims
    Id add_bias(Id x, Id b) {
        const auto& xs = val(x).shape();
        int64_t d = val(b).numel();
        if (xs.empty() || xs.back() != d) throw ShapeMismatch("add_bias");
        Tensor<T> out = val(x);
        int64_t rows = out.numel() / d;
        for (int64_t r = 0; r < rows; ++r)
            kern::axpy(d, T(1), val(b).data(), out.data() + r * d);
        return binary(std::move(out), x, b, [d](Tape& t, Id y, Id x2, Id b2) {
            const Tensor<T>& g = t.grad(y);
            if (t.needs_grad(x2)) kern::axpy(g.numel(), T(1), g.data(), t.grad(x2).data());
            if (t.needs_grad(b2)) {
                int64_t rows = g.numel() / d;
                T* gb = t.grad(b2).data();
                for (int64_t r = 0; r < rows; ++r)
                    kern::axpy(d, T(1), g.data() + r * d, gb);
            }
        });
    }

    // v: (d) -> (rows, d)
    Id broadcast_row(Id v, int64_t rows) {
        int64_t d = val(v).numel();
        Tensor<T> out({rows, d});
        for (int64_t r = 0; r < rows; ++r)
            std::copy(val(v).data(), val(v).data() + d, out.data() + r * d);
        return unary(std::move(out), v, [rows, d](Tape& t, Id y, Id v2) {
            T* gv = t.grad(v2).data();
            const T* g = t.grad(y).data();
            for (int64_t r = 0; r < rows; ++r) kern::axpy(d, T(1), g + r * d, gv);
        });
    }

    // ---- matmul ----

    Id matmul(Id a, Id b) {
        const auto& as = val(a).shape();
        const auto& bs = val(b).shape();
        if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
            throw ShapeMismatch("matmul " + val(a).shape_str() + " x " + val(b).shape_str());
        int64_t M = as[0], K = as[1], N = bs[1];
        Tensor<T> out({M, N});
        kern::gemm_nn(M, N, K, val(a).data(), val(b).data(), out.data(), false);
        return binary(std::move(out), a, b, [M, N, K](Tape& t, Id y, Id a2, Id b2) {
            const T* g = t.grad(y).data();
            if (t.needs_grad(a2))  // dA += dC * B^T
                kern::gemm_nt(M, K, N, g, t.val(b2).data(), t.grad(a2).data(), true);
            if (t.needs_grad(b2))  // dB += A^T * dC
                kern::gemm_tn(K, N, M, t.val(a2).data(), g, t.grad(b2).data(), true);
        });
    }

    // a: (B,M,K), b: (B,K,N) -> (B,M,N)
    Id bmm_nn(Id a, Id b) {
        const auto& as = val(a).shape();
        const auto& bs = val(b).shape();
        if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
            throw ShapeMismatch("bmm_nn");
        int64_t B = as[0], M = as[1], K = as[2], N = bs[2];
        Tensor<T> out({B, M, N});
        for (int64_t i = 0; i < B; ++i)
            kern::gemm_nn(M, N, K, val(a).data() + i * M * K, val(b).data() + i * K * N,
                          out.data() + i * M * N, false);
        return binary(std::move(out), a, b, [B, M, N, K](Tape& t, Id y, Id a2, Id b2) {
            for (int64_t i = 0; i < B; ++i) {
                const T* g = t.grad(y).data() + i * M * N;
                if (t.needs_grad(a2))
                    kern::gemm_nt(M, K, N, g, t.val(b2).data() + i * K * N,
                                  t.grad(a2).data() + i * M * K, true);
                if (t.needs_grad(b2))
                    kern::gemm_tn(K, N, M, t.val(a2).data() + i * M * K, g,
                                  t.grad(b2).data() + i * K * N, true);
            }
        });
    }

    // a: (B,M,K), b: (B,N,K) -> (B,M,N) = a * b^T
    Id bmm_nt(Id a, Id b) {
        const auto& as = val(a).shape();
        const auto& bs = val(b).shape();
        if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[2])
            throw ShapeMismatch("bmm_nt");
        int64_t B = as[0], M = as[1], K = as[2], N = bs[1];
        Tensor<T> out({B, M, N});
        for (int64_t i = 0; i < B; ++i)
            kern::gemm_nt(M, N, K, val(a).data() + i * M * K, val(b).data() + i * N * K,
                          out.data() + i * M * N, false);
        return binary(std::move(out), a, b, [B, M, N, K](Tape& t, Id y, Id a2, Id b2) {
            for (int64_t i = 0; i < B; ++i) {
                const T* g = t.grad(y).data() + i * M * N;
                // dA += dC * B ; dB += dC^T * A
                if (t.needs_grad(a2))
                    kern::gemm_nn(M, K, N, g, t.val(b2).data() + i * N * K,
                                  t.grad(a2).data() + i * M * K, true);
                if (t.needs_grad(b2))
                    kern::gemm_tn(N, K, M, g, t.val(a2).data() + i * M * K,
                                  t.grad(b2).data() + i * N * K, true);
            }
        });
    }

    // ---- nonlinearities ----

    Id relu(Id x) {
        Tensor<T> out(val(x).shape());
        kern::relu(out.numel(), val(x).data(), out.data());
        return unary(std::move(out), x, [](Tape& t, Id y, Id x2) {
            const T* xv = t.val(x2).data();
            const T* g = t.grad(y).data();
            T* gx = t.grad(x2).data();
            for (int64_t i = 0; i < t.grad(y).numel(); ++i)
                if (xv[i] > T(0)) gx[i] += g[i];
        });
    }

    Id gelu(Id x) {
        // tanh approximation with matching analytic derivative
        Tensor<T> out(val(x).shape());
        const T* xv = val(x).data();
        const T c0 = T(0.7978845608028654);  // sqrt(2/pi)
        const T c1 = T(0.044715);
        for (int64_t i = 0; i < out.numel(); ++i) {
            T u = c0 * (xv[i] + c1 * xv[i] * xv[i] * xv[i]);
            out[i] = T(0.5) * xv[i] * (T(1) + std::tanh(u));
        }
        return unary(std::move(out), x, [c0, c1](Tape& t, Id y, Id x2) {
            const T* xv = t.val(x2).data();
            const T* g = t.grad(y).data();
            T* gx = t.grad(x2).data();
            for (int64_t i = 0; i < t.grad(y).numel(); ++i) {
                T xi = xv[i];
                T u = c0 * (xi + c1 * xi * xi * xi);
                T th = std::tanh(u);
                T sech2 = T(1) - th * th;
                T du = c0 * (T(1) + T(3) * c1 * xi * xi);
                T d = T(0.5) * (T(1) + th) + T(0.5) * xi * sech2 * du;
                gx[i] += g[i] * d;
            }
        });
    }

    Id sigmoid(Id x) {
        Tensor<T> out(val(x).shape());
        const T* xv = val(x).data();
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
        return unary(std::move(out), x, [](Tape& t, Id y, Id x2) {
            const T* yv = t.val(y).data();
            const T* g = t.grad(y).data();
            T* gx = t.grad(x2).data();
            for (int64_t i = 0; i < t.grad(y).numel(); ++i)
                gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
        });
    }

    // ---- normalization / softmax ----

    Id layernorm(Id x, Id gamma, Id beta, T eps = T(1e-5)) {
        const auto& xs = val(x).shape();
        int64_t d = xs.back();
        if (val(gamma).numel() != d || val(beta).numel() != d) throw ShapeMismatch("layernorm");
        int64_t rows = val(x).numel() / d;
        Tensor<T> out(xs);
        auto xhat = std::make_shared<Tensor<T>>(xs);
        auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
        const T* xv = val(x).data();
        const T* gm = val(gamma).data();
        const T* bt = val(beta).data();
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = xv + r * d;
            T mu = kern::sum(d, xr) / T(d);
            T var = 0;
            for (int64_t i = 0; i < d; ++i) {
                T c = xr[i] - mu;
                var += c * c;
            }
            var /= T(d);
            T rs = T(1) / std::sqrt(var + eps);
            (*rstd)[static_cast<size_t>(r)] = rs;
            T* hr = xhat->data() + r * d;
            T* yr = out.data() + r * d;
            for (int64_t i = 0; i < d; ++i) {
                hr[i] = (xr[i] - mu) * rs;
                yr[i] = hr[i] * gm[i] + bt[i];
            }
        }
        Id y = push(std::move(out), true, nullptr);
        nodes_[static_cast<size_t>(y)].back = [y, x, gamma, beta, d, rows, xhat, rstd](Tape& t) {
            const T* g = t.grad(y).data();
            const T* gm = t.val(gamma).data();
            int64_t n = rows * d;
            if (t.needs_grad(gamma)) {
                T* gg = t.grad(gamma).data();
                const T* h = xhat->data();
                for (int64_t i = 0; i < n; ++i) gg[i % d] += g[i] * h[i];
            }
            if (t.needs_grad(beta)) {
                T* gb = t.grad(beta).data();
                for (int64_t i = 0; i < n; ++i) gb[i % d] += g[i];
            }
            if (t.needs_grad(x)) {
                T* gx = t.grad(x).data();
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gr = g + r * d;
                    const T* hr = xhat->data() + r * d;
                    T rs = (*rstd)[static_cast<size_t>(r)];
                    T sum_gy = 0, sum_gyh = 0;
                    for (int64_t i = 0; i < d; ++i) {
                        T gy = gr[i] * gm[i];
                        sum_gy += gy;
                        sum_gyh += gy * hr[i];
                    }
                    T inv_d = T(1) / T(d);
                    T* gxr = gx + r * d;
                    for (int64_t i = 0; i < d; ++i) {
                        T gy = gr[i] * gm[i];
                        gxr[i] += rs * (gy - inv_d * sum_gy - hr[i] * inv_d * sum_gyh);
                    }
                }
            }
        };
        return y;
    }

    Id softmax_last(Id x) {
        const auto& xs = val(x).shape();
        int64_t d = xs.back();
        int64_t rows = val(x).numel() / d;
        Tensor<T> out(xs);
        const T* xv = val(x).data();
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = xv + r * d;
            T* yr = out.data() + r * d;
            T mx = xr[0];
            for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
            T s = 0;
            for (int64_t i = 0; i < d; ++i) {
                yr[i] = std::exp(xr[i] - mx);
                s += yr[i];
            }
            T inv = T(1) / s;
            for (int64_t i = 0; i < d; ++i) yr[i] *= inv;
        }
        return unary(std::move(out), x, [d, rows](Tape& t, Id y, Id x2) {
            const T* p = t.val(y).data();
            const T* g = t.grad(y).data();
            T* gx = t.grad(x2).data();
            for (int64_t r = 0; r < rows; ++r) {
                const T* pr = p + r * d;
                const T* gr = g + r * d;
                T dotv = kern::dot(d, pr, gr);
                T* gxr = gx + r * d;
                for (int64_t i = 0; i < d; ++i) gxr[i] += pr[i] * (gr[i] - dotv);
            }
        });
    }

    // ---- reshaping / routing ----

    Id reshape(Id x, std::vector<int64_t> shape) {
        Tensor<T> out = val(x).reshaped(std::move(shape));
        return unary(std::move(out), x, [](Tape& t, Id y, Id x2) {
            kern::axpy(t.grad(y).numel(), T(1), t.grad(y).data(), t.grad(x2).data());
        });
    }

    // out[i] = map[i] >= 0 ? x[map[i]] : 0. Backward scatter-adds.
    Id gather(Id x, std::shared_ptr<const std::vector<int64_t>> map, std::vector<int64_t> out_shape) {
        Tensor<T> out(out_shape);
        if (static_cast<int64_t>(map->size()) != out.numel())
            throw ShapeMismatch("gather map size");
        const T* xv = val(x).data();
        for (int64_t i = 0; i < out.numel(); ++i) {
            int64_t s = (*map)[static_cast<size_t>(i)];
            out[i] = s >= 0 ? xv[s] : T(0);
        }
        return unary(std::move(out), x, [map](Tape& t, Id y, Id x2) {
            const T* g = t.grad(y).data();
            T* gx = t.grad(x2).data();
            int64_t n = t.grad(y).numel();
            for (int64_t i = 0; i < n; ++i) {
                int64_t s = (*map)[static_cast<size_t>(i)];
                if (s >= 0) gx[s] += g[i];
            }
        });
    }

    // Concatenate along dim 0; all inputs share trailing dims.
    Id concat0(const std::vector<Id>& parts) {
        if (parts.empty()) throw ShapeMismatch("concat0 empty");
        auto shape = val(parts[0]).shape();
        int64_t rows = 0;
        int64_t inner = val(parts[0]).numel() / shape[0];
        for (Id p : parts) {
            const auto& s = val(p).shape();
            if (s.size() != shape.size() || val(p).numel() / s[0] != inner)
                throw ShapeMismatch("concat0 trailing dims");
            rows += s[0];
        }
        shape[0] = rows;
        Tensor<T> out(shape);
        int64_t off = 0;
        for (Id p : parts) {
            std::copy(val(p).data(), val(p).data() + val(p).numel(), out.data() + off);
            off += val(p).numel();
        }
        std::vector<Id> srcs = parts;
        Id y = push(std::move(out), true, nullptr);
        nodes_[static_cast<size_t>(y)].back = [y, srcs](Tape& t) {
            const T* g = t.grad(y).data();
            int64_t off2 = 0;
            for (Id p : srcs) {
                int64_t n = t.val(p).numel();
                if (t.needs_grad(p)) kern::axpy(n, T(1), g + off2, t.grad(p).data());
                off2 += n;
            }
        };
        return y;
    }

    // Rows [r0, r1) along dim 0.
    Id slice0(Id x, int64_t r0, int64_t r1) {
        auto shape = val(x).shape();
        if (r0 < 0 || r1 > shape[0] || r0 >= r1) throw ShapeMismatch("slice0 range");
        int64_t inner = val(x).numel() / shape[0];
        shape[0] = r1 - r0;
        Tensor<T> out(shape);
        std::copy(val(x).data() + r0 * inner, val(x).data() + r1 * inner, out.data());
        return unary(std::move(out), x, [r0, inner](Tape& t, Id y, Id x2) {
            kern::axpy(t.grad(y).numel(), T(1), t.grad(y).data(),
                       t.grad(x2).data() + r0 * inner);
        });
    }

    // ---- conv ----

    // x: (N,C,H,W), w: (Co,C,kh,kw), b: (Co) or -1. Zero padding.
    Id conv2d(Id x, Id w, Id b, int stride, int pad) {
        const auto& xs = val(x).shape();
        const auto& ws = val(w).shape();
        if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1]) throw ShapeMismatch("conv2d");
        int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
        int64_t Co = ws[0], kh = ws[2], kw = ws[3];
        int64_t Ho = (H + 2 * pad - kh) / stride + 1;
        int64_t Wo = (W + 2 * pad - kw) / stride + 1;
        int64_t ck = C * kh * kw, hw = Ho * Wo;

        // col index map shared between fwd and bwd, one sample's worth
        auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(ck * hw));
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < kh; ++i)
                for (int64_t j = 0; j < kw; ++j) {
                    int64_t row = (c * kh + i) * kw + j;
                    for (int64_t oy = 0; oy < Ho; ++oy)
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            int64_t iy = oy * stride - pad + i;
                            int64_t ix = ox * stride - pad + j;
                            int64_t v = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                            ? (c * H + iy) * W + ix
                                            : -1;
                            (*map)[static_cast<size_t>(row * hw + oy * Wo + ox)] = v;
                        }
                }

        auto cols = std::make_shared<Tensor<T>>(std::vector<int64_t>{N, ck, hw});
        Tensor<T> out({N, Co, Ho, Wo});
        for (int64_t n = 0; n < N; ++n) {
            const T* xn = val(x).data() + n * C * H * W;
            T* coln = cols->data() + n * ck * hw;
            for (int64_t i = 0; i < ck * hw; ++i) {
                int64_t s = (*map)[static_cast<size_t>(i)];
                coln[i] = s >= 0 ? xn[s] : T(0);
            }
            kern::gemm_nn(Co, hw, ck, val(w).data(), coln, out.data() + n * Co * hw, false);
        }
        if (b >= 0) {
            T* o = out.data();
            const T* bv = val(b).data();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < Co; ++c) {
                    T bb = bv[c];
                    T* oc = o + (n * Co + c) * hw;
                    for (int64_t i = 0; i < hw; ++i) oc[i] += bb;
                }
        }
        Id y = push(std::move(out), true, nullptr);
        nodes_[static_cast<size_t>(y)].back = [=](Tape& t) {
            const T* g = t.grad(y).data();
            int64_t chw = C * H * W;
            std::vector<T> dcol(static_cast<size_t>(ck * hw));
            for (int64_t n = 0; n < N; ++n) {
                const T* gn = g + n * Co * hw;
                const T* coln = cols->data() + n * ck * hw;
                if (t.needs_grad(w))  // dW += dY * col^T
                    kern::gemm_nt(Co, ck, hw, gn, coln, t.grad(w).data(), true);
                if (t.needs_grad(x)) {  // dcol = W^T * dY, then scatter
                    kern::gemm_tn(ck, hw, Co, t.val(w).data(), gn, dcol.data(), false);
                    T* gx = t.grad(x).data() + n * chw;
                    for (int64_t i = 0; i < ck * hw; ++i) {
                        int64_t s = (*map)[static_cast<size_t>(i)];
                        if (s >= 0) gx[s] += dcol[static_cast<size_t>(i)];
                    }
                }
            }
            if (b >= 0 && t.needs_grad(b)) {
                T* gb = t.grad(b).data();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < Co; ++c)
                        gb[c] += kern::sum(hw, g + (n * Co + c) * hw);
            }
        };
        return y;
    }

    Id upsample2x(Id x) {
        const auto& xs = val(x).shape();
        if (xs.size() != 4) throw ShapeMismatch("upsample2x");
        int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
        Tensor<T> out({N, C, H * 2, W * 2});
        const T* xv = val(x).data();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* xp = xv + nc * H * W;
            T* op = out.data() + nc * 4 * H * W;
            for (int64_t y = 0; y < 2 * H; ++y)
                for (int64_t z = 0; z < 2 * W; ++z)
                    op[y * 2 * W + z] = xp[(y / 2) * W + z / 2];
        }
        return unary(std::move(out), x, [N, C, H, W](Tape& t, Id y, Id x2) {
            const T* g = t.grad(y).data();
            T* gx = t.grad(x2).data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const T* gp = g + nc * 4 * H * W;
                T* gxp = gx + nc * H * W;
                for (int64_t yy = 0; yy < 2 * H; ++yy)
                    for (int64_t z = 0; z < 2 * W; ++z)
                        gxp[(yy / 2) * W + z / 2] += gp[yy * 2 * W + z];
            }
        });
    }

    // ---- reductions / losses ----

    Id mean_all(Id x) {
        int64_t n = val(x).numel();
        Tensor<T> out(std::vector<int64_t>{});
        out[0] = kern::sum(n, val(x).data()) / T(n);
        return unary(std::move(out), x, [n](Tape& t, Id y, Id x2) {
            T g = t.grad(y)[0] / T(n);
            T* gx = t.grad(x2).data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }

    Id sum_all(Id x) {
        int64_t n = val(x).numel();
        Tensor<T> out(std::vector<int64_t>{});
        out[0] = kern::sum(n, val(x).data());
        return unary(std::move(out), x, [n](Tape& t, Id y, Id x2) {
            T g = t.grad(y)[0];
            T* gx = t.grad(x2).data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }

    // logits (R,C), labels per row; returns mean cross-entropy. Fused backward.
    Id softmax_xent(Id logits, std::shared_ptr<const std::vector<int>> labels) {
        const auto& ls = val(logits).shape();
        int64_t C = ls.back();
        int64_t R = val(logits).numel() / C;
        if (static_cast<int64_t>(labels->size()) != R) throw ShapeMismatch("softmax_xent labels");
        auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{R, C});
        const T* xv = val(logits).data();
        double loss = 0;
        for (int64_t r = 0; r < R; ++r) {
            const T* xr = xv + r * C;
            T* pr = probs->data() + r * C;
            T mx = xr[0];
            for (int64_t i = 1; i < C; ++i) mx = std::max(mx, xr[i]);
            T s = 0;
            for (int64_t i = 0; i < C; ++i) {
                pr[i] = std::exp(xr[i] - mx);
                s += pr[i];
            }
            T inv = T(1) / s;
            for (int64_t i = 0; i < C; ++i) pr[i] *= inv;
            int lab = (*labels)[static_cast<size_t>(r)];
            loss -= std::log(std::max(static_cast<double>(pr[lab]), 1e-30));
        }
        Tensor<T> out(std::vector<int64_t>{});
        out[0] = static_cast<T>(loss / static_cast<double>(R));
        return unary(std::move(out), logits, [probs, labels, R, C](Tape& t, Id y, Id x2) {
            T g = t.grad(y)[0] / T(R);
            T* gx = t.grad(x2).data();
            const T* p = probs->data();
            for (int64_t r = 0; r < R; ++r) {
                int lab = (*labels)[static_cast<size_t>(r)];
                for (int64_t i = 0; i < C; ++i)
                    gx[r * C + i] += g * (p[r * C + i] - (i == lab ? T(1) : T(0)));
            }
        });
    }

    // logits x vs targets in [0,1]; mean binary cross-entropy, fused backward.
    Id bce_logits(Id x, std::shared_ptr<const Tensor<T>> targets) {
        if (!targets->same_shape(val(x))) throw ShapeMismatch("bce_logits");
        int64_t n = val(x).numel();
        const T* xv = val(x).data();
        const T* tv = targets->data();
        double loss = 0;
        for (int64_t i = 0; i < n; ++i) {
            double z = static_cast<double>(xv[i]);
            // log(1+exp(z)) stable
            double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            loss += sp - static_cast<double>(tv[i]) * z;
        }
        Tensor<T> out(std::vector<int64_t>{});
        out[0] = static_cast<T>(loss / static_cast<double>(n));
        return unary(std::move(out), x, [targets, n](Tape& t, Id y, Id x2) {
            T g = t.grad(y)[0] / T(n);
            T* gx = t.grad(x2).data();
            const T* xv = t.val(x2).data();
            const T* tv = targets->data();
            for (int64_t i = 0; i < n; ++i) {
                T s = T(1) / (T(1) + std::exp(-xv[i]));
                gx[i] += g * (s - tv[i]);
            }
        });
    }

    // ---- engine ----

    void backward(Id loss) {
        if (val(loss).numel() != 1) throw ShapeMismatch("backward: loss must be scalar");
        grad(loss)[0] = T(1);
        for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.needs_grad && n.back) n.back(*this);
        }
    }

    void check_finite(Id x, const std::string& where) const {
        const Tensor<T>& v = val(x);
        for (int64_t i = 0; i < v.numel(); ++i)
            if (!std::isfinite(static_cast<double>(v[i]))) throw NonFinite(where);
    }

    size_t num_nodes() const { return nodes_.size(); }

private:
    Id push(Tensor<T> v, bool needs, std::function<void(Tape&)> back) {
        Node n;
        n.grad = Tensor<T>(v.shape());
        n.val = std::move(v);
        n.needs_grad = needs;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    template <class Fn>
    Id unary(Tensor<T> out, Id x, Fn fn) {
        bool needs = needs_grad(x);
        Id y = push(std::move(out), needs, nullptr);
        if (needs)
            nodes_[static_cast<size_t>(y)].back = [y, x, fn](Tape& t) {
                if (t.needs_grad(x)) fn(t, y, x);
            };
        return y;
    }

    template <class Fn>
    Id binary(Tensor<T> out, Id a, Id b, Fn fn) {
        bool needs = needs_grad(a) || needs_grad(b);
        Id y = push(std::move(out), needs, nullptr);
        if (needs)
            nodes_[static_cast<size_t>(y)].back = [y, a, b, fn](Tape& t) { fn(t, y, a, b); };
        return y;
    }

    void require_same(Id a, Id b, const char* op) {
        if (!val(a).same_shape(val(b)))
            throw ShapeMismatch(std::string(op) + ": " + val(a).shape_str() + " vs " +
                                val(b).shape_str());
    }

    std::vector<Node> nodes_;
};

}  // namespace gf::nn
