#pragma once

#include "pansharp/tensor.hpp"

// Differentiable tensor ops. Layout conventions are explicit per op:
// token sequences are [B,N,C] (channel-last), 1-D conv operands [B,P,N]
// (time-last), images [B,C,H,W]. Every parallel loop writes disjoint
// outputs and keeps a fixed inner reduction order, so results are
// bit-identical for any thread count.

namespace pansharp {

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (g && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        g->record([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const int64_t m = oc.numel();
            if (ac.requires_grad()) {
                T* da = ac.grad();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < m; ++i) da[i] += dy[i];
            }
            if (bc.requires_grad()) {
                T* db = bc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < m; ++i) db[i] += dy[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (g && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        g->record([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const int64_t m = oc.numel();
            if (ac.requires_grad()) {
                T* da = ac.grad();
                const T* vb = bc.data();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < m; ++i) da[i] += dy[i] * vb[i];
            }
            if (bc.requires_grad()) {
                T* db = bc.grad();
                const T* va = ac.data();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < m; ++i) db[i] += dy[i] * va[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Graph<T>* g, const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
    if (grad_wanted(g, a)) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, oc = out;
        g->record([ac, oc, c]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            T* da = ac.grad();
            const int64_t m = oc.numel();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) da[i] += dy[i] * c;
        });
    }
    return out;
}

template <typename T>
inline T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

// silu(x) = x * sigmoid(x)
template <typename T>
Tensor<T> silu(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] * sigmoid_scalar(px[i]);
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const T* px2 = xc.data();
            T* dx = xc.grad();
            const int64_t m = oc.numel();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) {
                T s = sigmoid_scalar(px2[i]);
                dx[i] += dy[i] * s * (T(1) + px2[i] * (T(1) - s));
            }
        });
    }
    return out;
}

// softplus(x) = log(1 + exp(x)), evaluated as max(x,0) + log1p(exp(-|x|))
// which is exact and overflow-safe on both tails.
template <typename T>
inline T softplus_scalar(T x) {
    T ax = std::abs(x);
    return std::max(x, T(0)) + std::log1p(std::exp(-ax));
}

template <typename T>
Tensor<T> softplus(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = softplus_scalar(px[i]);
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const T* px2 = xc.data();
            T* dx = xc.grad();
            const int64_t m = oc.numel();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) dx[i] += dy[i] * sigmoid_scalar(px2[i]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> exp_op(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = std::exp(px[i]);
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const T* py = oc.data();
            T* dx = xc.grad();
            const int64_t m = oc.numel();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) dx[i] += dy[i] * py[i];
        });
    }
    return out;
}

// Scalar total with a fixed blocked summation order.
template <typename T>
Tensor<T> sum_all(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::scalar(det_sum(x.data(), x.numel()));
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T dy = oc.grad()[0];
            T* dx = xc.grad();
            const int64_t m = xc.numel();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) dx[i] += dy;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear: [B,N,Ci] x [Ci,Co] (+ [Co]) -> [B,N,Co]

template <typename T>
Tensor<T> linear(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>* bias = nullptr) {
    if (x.rank() != 3) throw DimensionError("linear: input must be [B,N,Cin], got " + shape_str(x.shape()));
    if (W.rank() != 2) throw DimensionError("linear: weight must be [Cin,Cout], got " + shape_str(W.shape()));
    const int64_t B = x.dim(0), N = x.dim(1), Ci = x.dim(2), Co = W.dim(1);
    if (W.dim(0) != Ci)
        throw DimensionError("linear: inner dims disagree " + shape_str(x.shape()) + " vs " + shape_str(W.shape()));
    if (bias && (bias->rank() != 1 || bias->dim(0) != Co))
        throw DimensionError("linear: bias must be [Cout]");

    Tensor<T> out({B, N, Co});
    const T* px = x.data();
    const T* pw = W.data();
    const T* pb = bias ? bias->data() : nullptr;
    T* po = out.data();
    const int64_t BN = B * N;
#pragma omp parallel for schedule(static)
    for (int64_t bn = 0; bn < BN; ++bn) {
        const T* xr = px + bn * Ci;
        T* yr = po + bn * Co;
        for (int64_t j = 0; j < Co; ++j) yr[j] = pb ? pb[j] : T(0);
        for (int64_t i = 0; i < Ci; ++i) {
            const T xv = xr[i];
            const T* wr = pw + i * Co;
            for (int64_t j = 0; j < Co; ++j) yr[j] += xv * wr[j];
        }
    }

    bool need = g && (x.requires_grad() || W.requires_grad() || (bias && bias->requires_grad()));
    if (need) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, Wc = W, oc = out;
        Tensor<T> bc = bias ? *bias : Tensor<T>();
        g->record([xc, Wc, bc, oc, B, N, Ci, Co]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const int64_t BN2 = B * N;
            if (xc.requires_grad()) {
                T* dx = xc.grad();
                const T* pw2 = Wc.data();
#pragma omp parallel for schedule(static)
                for (int64_t bn = 0; bn < BN2; ++bn) {
                    const T* dyr = dy + bn * Co;
                    T* dxr = dx + bn * Ci;
                    for (int64_t i = 0; i < Ci; ++i) {
                        const T* wr = pw2 + i * Co;
                        T acc = T(0);
                        for (int64_t j = 0; j < Co; ++j) acc += dyr[j] * wr[j];
                        dxr[i] += acc;
                    }
                }
            }
            if (Wc.requires_grad()) {
                T* dW = Wc.grad();
                const T* px2 = xc.data();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < Ci; ++i) {
                    for (int64_t j = 0; j < Co; ++j) {
                        T acc = T(0);
                        for (int64_t bn = 0; bn < BN2; ++bn) acc += px2[bn * Ci + i] * dy[bn * Co + j];
                        dW[i * Co + j] += acc;
                    }
                }
            }
            if (bc.defined() && bc.requires_grad()) {
                T* db = bc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t j = 0; j < Co; ++j) {
                    T acc = T(0);
                    for (int64_t bn = 0; bn < BN2; ++bn) acc += dy[bn * Co + j];
                    db[j] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// causal depthwise 1-D convolution: [B,P,N] with [P,k], [P] -> [B,P,N].
// y[b,p,t] = b[p] + sum_j w[p,j] * x[b,p,t-k+1+j], x == 0 left of t=0.

template <typename T>
Tensor<T> conv1d_depthwise(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    if (x.rank() != 3) throw DimensionError("conv1d_depthwise: input must be [B,P,N]");
    if (w.rank() != 2) throw DimensionError("conv1d_depthwise: weight must be [P,k]");
    const int64_t B = x.dim(0), P = x.dim(1), N = x.dim(2), k = w.dim(1);
    if (k < 1) throw DimensionError("conv1d_depthwise: kernel must have k >= 1");
    if (w.dim(0) != P || bias.rank() != 1 || bias.dim(0) != P)
        throw DimensionError("conv1d_depthwise: channel counts disagree");

    Tensor<T> out({B, P, N});
    const T* px = x.data();
    const T* pw = w.data();
    const T* pb = bias.data();
    T* po = out.data();
    const int64_t BP = B * P;
#pragma omp parallel for schedule(static)
    for (int64_t bp = 0; bp < BP; ++bp) {
        const int64_t p = bp % P;
        const T* xr = px + bp * N;
        const T* wr = pw + p * k;
        T* yr = po + bp * N;
        for (int64_t t = 0; t < N; ++t) {
            T acc = pb[p];
            for (int64_t j = 0; j < k; ++j) {
                const int64_t s = t - k + 1 + j;
                if (s >= 0) acc += wr[j] * xr[s];
            }
            yr[t] = acc;
        }
    }

    bool need = g && (x.requires_grad() || w.requires_grad() || bias.requires_grad());
    if (need) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, wc = w, bc = bias, oc = out;
        g->record([xc, wc, bc, oc, B, P, N, k]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const int64_t BP2 = B * P;
            if (xc.requires_grad()) {
                T* dx = xc.grad();
                const T* pw2 = wc.data();
#pragma omp parallel for schedule(static)
                for (int64_t bp = 0; bp < BP2; ++bp) {
                    const int64_t p = bp % P;
                    const T* wr = pw2 + p * k;
                    const T* dyr = dy + bp * N;
                    T* dxr = dx + bp * N;
                    for (int64_t s = 0; s < N; ++s) {
                        T acc = T(0);
                        for (int64_t j = 0; j < k; ++j) {
                            const int64_t t = s + k - 1 - j;
                            if (t < N) acc += wr[j] * dyr[t];
                        }
                        dxr[s] += acc;
                    }
                }
            }
            if (wc.requires_grad()) {
                T* dw = wc.grad();
                const T* px2 = xc.data();
#pragma omp parallel for schedule(static)
                for (int64_t p = 0; p < P; ++p) {
                    for (int64_t j = 0; j < k; ++j) {
                        T acc = T(0);
                        for (int64_t b = 0; b < B; ++b) {
                            const T* xr = px2 + (b * P + p) * N;
                            const T* dyr = dy + (b * P + p) * N;
                            for (int64_t t = 0; t < N; ++t) {
                                const int64_t s = t - k + 1 + j;
                                if (s >= 0) acc += dyr[t] * xr[s];
                            }
                        }
                        dw[p * k + j] += acc;
                    }
                }
            }
            if (bc.requires_grad()) {
                T* db = bc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t p = 0; p < P; ++p) {
                    T acc = T(0);
                    for (int64_t b = 0; b < B; ++b) {
                        const T* dyr = dy + (b * P + p) * N;
                        for (int64_t t = 0; t < N; ++t) acc += dyr[t];
                    }
                    db[p] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation), odd kernel, zero padding (k-1)/2 so
// the spatial size is preserved: [B,Ci,H,W] x [Co,Ci,k,k] (+[Co]).

template <typename T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    if (x.rank() != 4) throw DimensionError("conv2d: input must be [B,Cin,H,W]");
    if (w.rank() != 4) throw DimensionError("conv2d: weight must be [Cout,Cin,k,k]");
    const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), k = w.dim(2);
    if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (w.dim(1) != Ci || w.dim(3) != k) throw DimensionError("conv2d: weight shape inconsistent");
    if (bias.rank() != 1 || bias.dim(0) != Co) throw DimensionError("conv2d: bias must be [Cout]");
    const int64_t pad = (k - 1) / 2;

    Tensor<T> out({B, Co, H, W});
    const T* px = x.data();
    const T* pw = w.data();
    const T* pb = bias.data();
    T* po = out.data();
    const int64_t BCo = B * Co;
#pragma omp parallel for schedule(static)
    for (int64_t bco = 0; bco < BCo; ++bco) {
        const int64_t b = bco / Co, co = bco % Co;
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t wx = 0; wx < W; ++wx) {
                T acc = pb[co];
                for (int64_t ci = 0; ci < Ci; ++ci) {
                    const T* xr = px + ((b * Ci + ci) * H) * W;
                    const T* wr = pw + ((co * Ci + ci) * k) * k;
                    for (int64_t u = 0; u < k; ++u) {
                        const int64_t hh = h + u - pad;
                        if (hh < 0 || hh >= H) continue;
                        for (int64_t v = 0; v < k; ++v) {
                            const int64_t ww = wx + v - pad;
                            if (ww < 0 || ww >= W) continue;
                            acc += wr[u * k + v] * xr[hh * W + ww];
                        }
                    }
                }
                po[(bco * H + h) * W + wx] = acc;
            }
        }
    }

    bool need = g && (x.requires_grad() || w.requires_grad() || bias.requires_grad());
    if (need) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, wc = w, bc = bias, oc = out;
        g->record([xc, wc, bc, oc, B, Ci, H, W, Co, k, pad]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            if (xc.requires_grad()) {
                T* dx = xc.grad();
                const T* pw2 = wc.data();
                const int64_t BCi = B * Ci;
#pragma omp parallel for schedule(static)
                for (int64_t bci = 0; bci < BCi; ++bci) {
                    const int64_t b = bci / Ci, ci = bci % Ci;
                    for (int64_t h = 0; h < H; ++h) {
                        for (int64_t wx = 0; wx < W; ++wx) {
                            T acc = T(0);
                            for (int64_t co = 0; co < Co; ++co) {
                                const T* dyr = dy + ((b * Co + co) * H) * W;
                                const T* wr = pw2 + ((co * Ci + ci) * k) * k;
                                for (int64_t u = 0; u < k; ++u) {
                                    const int64_t ho = h - (u - pad);
                                    if (ho < 0 || ho >= H) continue;
                                    for (int64_t v = 0; v < k; ++v) {
                                        const int64_t wo = wx - (v - pad);
                                        if (wo < 0 || wo >= W) continue;
                                        acc += wr[u * k + v] * dyr[ho * W + wo];
                                    }
                                }
                            }
                            dx[(bci * H + h) * W + wx] += acc;
                        }
                    }
                }
            }
            if (wc.requires_grad()) {
                T* dw = wc.grad();
                const T* px2 = xc.data();
                const int64_t CoCi = Co * Ci;
#pragma omp parallel for schedule(static)
                for (int64_t coci = 0; coci < CoCi; ++coci) {
                    const int64_t co = coci / Ci, ci = coci % Ci;
                    for (int64_t u = 0; u < k; ++u) {
                        for (int64_t v = 0; v < k; ++v) {
                            T acc = T(0);
                            for (int64_t b = 0; b < B; ++b) {
                                const T* dyr = dy + ((b * Co + co) * H) * W;
                                const T* xr = px2 + ((b * Ci + ci) * H) * W;
                                for (int64_t h = 0; h < H; ++h) {
                                    const int64_t hh = h + u - pad;
                                    if (hh < 0 || hh >= H) continue;
                                    for (int64_t wx = 0; wx < W; ++wx) {
                                        const int64_t ww = wx + v - pad;
                                        if (ww < 0 || ww >= W) continue;
                                        acc += dyr[h * W + wx] * xr[hh * W + ww];
                                    }
                                }
                            }
                            dw[(coci * k + u) * k + v] += acc;
                        }
                    }
                }
            }
            if (bc.requires_grad()) {
                T* db = bc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t co = 0; co < Co; ++co) {
                    T acc = T(0);
                    for (int64_t b = 0; b < B; ++b) {
                        const T* dyr = dy + ((b * Co + co) * H) * W;
                        for (int64_t i = 0; i < H * W; ++i) acc += dyr[i];
                    }
                    db[co] += acc;
                }
            }
        });
    }
    return out;
}

// Depthwise 3x3-style 2-D convolution: [B,C,H,W] x [C,k,k] (+[C]).
template <typename T>
Tensor<T> conv2d_depthwise(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    if (x.rank() != 4) throw DimensionError("conv2d_depthwise: input must be [B,C,H,W]");
    if (w.rank() != 3) throw DimensionError("conv2d_depthwise: weight must be [C,k,k]");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), k = w.dim(1);
    if (k % 2 == 0) throw ConfigError("conv2d_depthwise: kernel size must be odd");
    if (w.dim(0) != C || w.dim(2) != k || bias.rank() != 1 || bias.dim(0) != C)
        throw DimensionError("conv2d_depthwise: channel counts disagree");
    const int64_t pad = (k - 1) / 2;

    Tensor<T> out({B, C, H, W});
    const T* px = x.data();
    const T* pw = w.data();
    const T* pb = bias.data();
    T* po = out.data();
    const int64_t BC = B * C;
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < BC; ++bc) {
        const int64_t c = bc % C;
        const T* xr = px + bc * H * W;
        const T* wr = pw + c * k * k;
        T* yr = po + bc * H * W;
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t wx = 0; wx < W; ++wx) {
                T acc = pb[c];
                for (int64_t u = 0; u < k; ++u) {
                    const int64_t hh = h + u - pad;
                    if (hh < 0 || hh >= H) continue;
                    for (int64_t v = 0; v < k; ++v) {
                        const int64_t ww = wx + v - pad;
                        if (ww < 0 || ww >= W) continue;
                        acc += wr[u * k + v] * xr[hh * W + ww];
                    }
                }
                yr[h * W + wx] = acc;
            }
        }
    }

    bool need = g && (x.requires_grad() || w.requires_grad() || bias.requires_grad());
    if (need) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, wc = w, bc2 = bias, oc = out;
        g->record([xc, wc, bc2, oc, B, C, H, W, k, pad]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const int64_t BC2 = B * C;
            if (xc.requires_grad()) {
                T* dx = xc.grad();
                const T* pw2 = wc.data();
#pragma omp parallel for schedule(static)
                for (int64_t bc = 0; bc < BC2; ++bc) {
                    const int64_t c = bc % C;
                    const T* wr = pw2 + c * k * k;
                    const T* dyr = dy + bc * H * W;
                    T* dxr = dx + bc * H * W;
                    for (int64_t h = 0; h < H; ++h) {
                        for (int64_t wx = 0; wx < W; ++wx) {
                            T acc = T(0);
                            for (int64_t u = 0; u < k; ++u) {
                                const int64_t ho = h - (u - pad);
                                if (ho < 0 || ho >= H) continue;
                                for (int64_t v = 0; v < k; ++v) {
                                    const int64_t wo = wx - (v - pad);
                                    if (wo < 0 || wo >= W) continue;
                                    acc += wr[u * k + v] * dyr[ho * W + wo];
                                }
                            }
                            dxr[h * W + wx] += acc;
                        }
                    }
                }
            }
            if (wc.requires_grad()) {
                T* dw = wc.grad();
                const T* px2 = xc.data();
#pragma omp parallel for schedule(static)
                for (int64_t c = 0; c < C; ++c) {
                    for (int64_t u = 0; u < k; ++u) {
                        for (int64_t v = 0; v < k; ++v) {
                            T acc = T(0);
                            for (int64_t b = 0; b < B; ++b) {
                                const T* dyr = dy + (b * C + c) * H * W;
                                const T* xr = px2 + (b * C + c) * H * W;
                                for (int64_t h = 0; h < H; ++h) {
                                    const int64_t hh = h + u - pad;
                                    if (hh < 0 || hh >= H) continue;
                                    for (int64_t wx = 0; wx < W; ++wx) {
                                        const int64_t ww = wx + v - pad;
                                        if (ww < 0 || ww >= W) continue;
                                        acc += dyr[h * W + wx] * xr[hh * W + ww];
                                    }
                                }
                            }
                            dw[(c * k + u) * k + v] += acc;
                        }
                    }
                }
            }
            if (bc2.requires_grad()) {
                T* db = bc2.grad();
#pragma omp parallel for schedule(static)
                for (int64_t c = 0; c < C; ++c) {
                    T acc = T(0);
                    for (int64_t b = 0; b < B; ++b) {
                        const T* dyr = dy + (b * C + c) * H * W;
                        for (int64_t i = 0; i < H * W; ++i) acc += dyr[i];
                    }
                    db[c] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// layer norm over the channel axis of [B,N,C]

template <typename T>
Tensor<T> layer_norm(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    if (x.rank() != 3) throw DimensionError("layer_norm: input must be [B,N,C]");
    const int64_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
    if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
        throw DimensionError("layer_norm: gamma/beta must be [C]");
    if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");

    Tensor<T> out({B, N, C});
    const T* px = x.data();
    const T* pg = gamma.data();
    const T* pbt = beta.data();
    T* po = out.data();
    const int64_t BN = B * N;
#pragma omp parallel for schedule(static)
    for (int64_t bn = 0; bn < BN; ++bn) {
        const T* xr = px + bn * C;
        T* yr = po + bn * C;
        T mean = T(0);
        for (int64_t c = 0; c < C; ++c) mean += xr[c];
        mean /= T(C);
        T var = T(0);
        for (int64_t c = 0; c < C; ++c) {
            const T d = xr[c] - mean;
            var += d * d;
        }
        var /= T(C);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int64_t c = 0; c < C; ++c) yr[c] = (xr[c] - mean) * inv * pg[c] + pbt[c];
    }

    bool need = g && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    if (need) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
        g->record([xc, gc, bc, oc, B, N, C, eps]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            const T* px2 = xc.data();
            const T* pg2 = gc.data();
            const int64_t BN2 = B * N;
            if (xc.requires_grad()) {
                T* dx = xc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t bn = 0; bn < BN2; ++bn) {
                    const T* xr = px2 + bn * C;
                    const T* dyr = dy + bn * C;
                    T* dxr = dx + bn * C;
                    T mean = T(0);
                    for (int64_t c = 0; c < C; ++c) mean += xr[c];
                    mean /= T(C);
                    T var = T(0);
                    for (int64_t c = 0; c < C; ++c) {
                        const T d = xr[c] - mean;
                        var += d * d;
                    }
                    var /= T(C);
                    const T inv = T(1) / std::sqrt(var + eps);
                    T sum_gdy = T(0), sum_gdyxh = T(0);
                    for (int64_t c = 0; c < C; ++c) {
                        const T xh = (xr[c] - mean) * inv;
                        sum_gdy += pg2[c] * dyr[c];
                        sum_gdyxh += pg2[c] * dyr[c] * xh;
                    }
                    const T m1 = sum_gdy / T(C);
                    const T m2 = sum_gdyxh / T(C);
                    for (int64_t c = 0; c < C; ++c) {
                        const T xh = (xr[c] - mean) * inv;
                        dxr[c] += inv * (pg2[c] * dyr[c] - m1 - xh * m2);
                    }
                }
            }
            if (gc.requires_grad() || bc.requires_grad()) {
                T* dg = gc.requires_grad() ? gc.grad() : nullptr;
                T* db2 = bc.requires_grad() ? bc.grad() : nullptr;
#pragma omp parallel for schedule(static)
                for (int64_t c = 0; c < C; ++c) {
                    T accg = T(0), accb = T(0);
                    for (int64_t bn = 0; bn < BN2; ++bn) {
                        const T* xr = px2 + bn * C;
                        T mean = T(0);
                        for (int64_t c2 = 0; c2 < C; ++c2) mean += xr[c2];
                        mean /= T(C);
                        T var = T(0);
                        for (int64_t c2 = 0; c2 < C; ++c2) {
                            const T d = xr[c2] - mean;
                            var += d * d;
                        }
                        var /= T(C);
                        const T inv = T(1) / std::sqrt(var + eps);
                        const T xh = (xr[c] - mean) * inv;
                        accg += dy[bn * C + c] * xh;
                        accb += dy[bn * C + c];
                    }
                    if (dg) dg[c] += accg;
                    if (db2) db2[c] += accb;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// layout permutations

// [B,N,P] <-> [B,P,N]
template <typename T>
Tensor<T> swap_last2(Graph<T>* g, const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("swap_last2: input must be rank-3");
    const int64_t B = x.dim(0), N = x.dim(1), P = x.dim(2);
    Tensor<T> out({B, P, N});
    const T* px = x.data();
    T* po = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        const T* xb = px + b * N * P;
        T* ob = po + b * N * P;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t p = 0; p < P; ++p) ob[p * N + n] = xb[n * P + p];
    }
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc, B, N, P]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            T* dx = xc.grad();
#pragma omp parallel for schedule(static)
            for (int64_t b = 0; b < B; ++b) {
                const T* dyb = dy + b * N * P;
                T* dxb = dx + b * N * P;
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t p = 0; p < P; ++p) dxb[n * P + p] += dyb[p * N + n];
            }
        });
    }
    return out;
}

// [B,C,H,W] -> [B,H*W,C], token n = h*W + w (row-major spatial flatten)
template <typename T>
Tensor<T> image_to_tokens(Graph<T>* g, const Tensor<T>& x) {
    if (x.rank() != 4) throw DimensionError("image_to_tokens: input must be [B,C,H,W]");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), N = H * W;
    Tensor<T> out({B, N, C});
    const T* px = x.data();
    T* po = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        const T* xb = px + b * C * N;
        T* ob = po + b * N * C;
        for (int64_t c = 0; c < C; ++c)
            for (int64_t n = 0; n < N; ++n) ob[n * C + c] = xb[c * N + n];
    }
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc, B, C, N]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            T* dx = xc.grad();
#pragma omp parallel for schedule(static)
            for (int64_t b = 0; b < B; ++b) {
                const T* dyb = dy + b * N * C;
                T* dxb = dx + b * C * N;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t n = 0; n < N; ++n) dxb[c * N + n] += dyb[n * C + c];
            }
        });
    }
    return out;
}

// [B,N,C] -> [B,C,H,W], inverse of image_to_tokens
template <typename T>
Tensor<T> tokens_to_image(Graph<T>* g, const Tensor<T>& x, int64_t H, int64_t W) {
    if (x.rank() != 3) throw DimensionError("tokens_to_image: input must be [B,N,C]");
    const int64_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
    if (N != H * W)
        throw DimensionError("tokens_to_image: token count " + std::to_string(N) + " != H*W = " +
                             std::to_string(H * W));
    Tensor<T> out({B, C, H, W});
    const T* px = x.data();
    T* po = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        const T* xb = px + b * N * C;
        T* ob = po + b * C * N;
        for (int64_t c = 0; c < C; ++c)
            for (int64_t n = 0; n < N; ++n) ob[c * N + n] = xb[n * C + c];
    }
    if (grad_wanted(g, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        g->record([xc, oc, B, C, N]() mutable {
            if (!oc.has_grad()) return;
            const T* dy = oc.grad();
            T* dx = xc.grad();
#pragma omp parallel for schedule(static)
            for (int64_t b = 0; b < B; ++b) {
                const T* dyb = dy + b * C * N;
                T* dxb = dx + b * N * C;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t n = 0; n < N; ++n) dxb[n * C + c] += dyb[c * N + n];
            }
        });
    }
    return out;
}

}  // namespace pansharp
