#pragma once

// Independent double-precision reference implementations used as oracles.
// Straight loops over the definitions, no calls into the library kernels.

#include <cmath>
#include <vector>

#include "pansharp/blocks.hpp"

namespace oracles {

using pansharp::Tensor;

inline double silu_ref(double x) { return x / (1.0 + std::exp(-x)); }
inline double softplus_ref(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// y[b,n,j] = sum_i x[b,n,i] W[i,j] + bias[j]
inline std::vector<double> linear_ref(const std::vector<double>& x, const std::vector<double>& W,
                                      const std::vector<double>* bias, int64_t BN, int64_t Ci, int64_t Co) {
    std::vector<double> y(static_cast<size_t>(BN * Co), 0.0);
    for (int64_t bn = 0; bn < BN; ++bn)
        for (int64_t j = 0; j < Co; ++j) {
            double acc = bias ? (*bias)[static_cast<size_t>(j)] : 0.0;
            for (int64_t i = 0; i < Ci; ++i)
                acc += x[static_cast<size_t>(bn * Ci + i)] * W[static_cast<size_t>(i * Co + j)];
            y[static_cast<size_t>(bn * Co + j)] = acc;
        }
    return y;
}

// causal depthwise conv over [B,P,N]
inline std::vector<double> conv1d_ref(const std::vector<double>& x, const std::vector<double>& w,
                                      const std::vector<double>& b, int64_t B, int64_t P, int64_t N, int64_t k) {
    std::vector<double> y(static_cast<size_t>(B * P * N), 0.0);
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t p = 0; p < P; ++p)
            for (int64_t t = 0; t < N; ++t) {
                double acc = b[static_cast<size_t>(p)];
                for (int64_t j = 0; j < k; ++j) {
                    const int64_t s = t - k + 1 + j;
                    if (s >= 0) acc += w[static_cast<size_t>(p * k + j)] * x[static_cast<size_t>((bi * P + p) * N + s)];
                }
                y[static_cast<size_t>((bi * P + p) * N + t)] = acc;
            }
    return y;
}

// same-padded cross-correlation over [B,Ci,H,W]
inline std::vector<double> conv2d_ref(const std::vector<double>& x, const std::vector<double>& w,
                                      const std::vector<double>& b, int64_t B, int64_t Ci, int64_t H, int64_t W,
                                      int64_t Co, int64_t k) {
    const int64_t pad = (k - 1) / 2;
    std::vector<double> y(static_cast<size_t>(B * Co * H * W), 0.0);
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t wx = 0; wx < W; ++wx) {
                    double acc = b[static_cast<size_t>(co)];
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t u = 0; u < k; ++u)
                            for (int64_t v = 0; v < k; ++v) {
                                const int64_t hh = h + u - pad, ww = wx + v - pad;
                                if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
                                acc += w[static_cast<size_t>(((co * Ci + ci) * k + u) * k + v)] *
                                       x[static_cast<size_t>(((bi * Ci + ci) * H + hh) * W + ww)];
                            }
                    y[static_cast<size_t>(((bi * Co + co) * H + h) * W + wx)] = acc;
                }
    return y;
}

inline std::vector<double> layer_norm_ref(const std::vector<double>& x, const std::vector<double>& gamma,
                                          const std::vector<double>& beta, int64_t BN, int64_t C,
                                          double eps = 1e-5) {
    std::vector<double> y(x.size());
    for (int64_t bn = 0; bn < BN; ++bn) {
        double mean = 0, var = 0;
        for (int64_t c = 0; c < C; ++c) mean += x[static_cast<size_t>(bn * C + c)];
        mean /= static_cast<double>(C);
        for (int64_t c = 0; c < C; ++c) {
            const double d = x[static_cast<size_t>(bn * C + c)] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        for (int64_t c = 0; c < C; ++c)
            y[static_cast<size_t>(bn * C + c)] = (x[static_cast<size_t>(bn * C + c)] - mean) /
                                                     std::sqrt(var + eps) * gamma[static_cast<size_t>(c)] +
                                                 beta[static_cast<size_t>(c)];
    }
    return y;
}

// h_t = A ⊙ h + B·x, y_t = sum_k C h; optionally records the hidden states
inline std::vector<double> scan_ref(const std::vector<double>& A_bar, const std::vector<double>& B_bar,
                                    const std::vector<double>& C, const std::vector<double>& x, int64_t B,
                                    int64_t N, int64_t P, int64_t K,
                                    std::vector<double>* hidden_out = nullptr) {
    std::vector<double> y(static_cast<size_t>(B * N * P), 0.0);
    if (hidden_out) hidden_out->assign(static_cast<size_t>(B * N * P * K), 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t p = 0; p < P; ++p) {
            std::vector<double> h(static_cast<size_t>(K), 0.0);
            for (int64_t t = 0; t < N; ++t) {
                const int64_t base = ((b * N + t) * P + p) * K;
                double acc = 0;
                for (int64_t k = 0; k < K; ++k) {
                    h[static_cast<size_t>(k)] = A_bar[static_cast<size_t>(base + k)] * h[static_cast<size_t>(k)] +
                                                B_bar[static_cast<size_t>(base + k)] *
                                                    x[static_cast<size_t>((b * N + t) * P + p)];
                    acc += C[static_cast<size_t>((b * N + t) * K + k)] * h[static_cast<size_t>(k)];
                    if (hidden_out) (*hidden_out)[static_cast<size_t>(base + k)] = h[static_cast<size_t>(k)];
                }
                y[static_cast<size_t>((b * N + t) * P + p)] = acc;
            }
        }
    return y;
}

template <typename T>
std::vector<double> as_doubles(const Tensor<T>& t) {
    std::vector<double> v(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) v[static_cast<size_t>(i)] = static_cast<double>(t.data()[i]);
    return v;
}

// Line-by-line transcription of the Mamba block body (no residual).
template <typename T>
std::vector<double> mamba_core_ref(const Tensor<T>& tokens, const pansharp::MambaBlockParams<T>& p) {
    const int64_t B = tokens.dim(0), N = tokens.dim(1), C = tokens.dim(2);
    const int64_t P = p.W_x.dim(1), K = p.ssm.A_log.dim(1), k = p.conv_w.dim(1);
    const auto tok = as_doubles(tokens);

    const auto tn = layer_norm_ref(tok, as_doubles(p.norm_gamma), as_doubles(p.norm_beta), B * N, C);
    const auto bx = as_doubles(p.b_x);
    const auto bz = as_doubles(p.b_z);
    const auto x = linear_ref(tn, as_doubles(p.W_x), &bx, B * N, C, P);
    const auto z = linear_ref(tn, as_doubles(p.W_z), &bz, B * N, C, P);

    // [B,N,P] -> [B,P,N], conv, silu, back
    std::vector<double> xt(static_cast<size_t>(B * P * N));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t n = 0; n < N; ++n)
            for (int64_t pp = 0; pp < P; ++pp)
                xt[static_cast<size_t>((b * P + pp) * N + n)] = x[static_cast<size_t>((b * N + n) * P + pp)];
    auto xc = conv1d_ref(xt, as_doubles(p.conv_w), as_doubles(p.conv_b), B, P, N, k);
    std::vector<double> xp(static_cast<size_t>(B * N * P));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t n = 0; n < N; ++n)
            for (int64_t pp = 0; pp < P; ++pp)
                xp[static_cast<size_t>((b * N + n) * P + pp)] =
                    silu_ref(xc[static_cast<size_t>((b * P + pp) * N + n)]);

    // parameter generation
    const auto Bproj = linear_ref(xp, as_doubles(p.ssm.W_B), nullptr, B * N, P, K);
    const auto Cproj = linear_ref(xp, as_doubles(p.ssm.W_C), nullptr, B * N, P, K);
    const auto bd = as_doubles(p.ssm.bias_delta);
    auto delta = linear_ref(xp, as_doubles(p.ssm.W_delta), &bd, B * N, P, P);
    for (double& d : delta) d = softplus_ref(d);
    const auto alog = as_doubles(p.ssm.A_log);
    std::vector<double> A_bar(static_cast<size_t>(B * N * P * K)), B_bar(A_bar.size());
    for (int64_t bn = 0; bn < B * N; ++bn)
        for (int64_t pp = 0; pp < P; ++pp)
            for (int64_t kk = 0; kk < K; ++kk) {
                const double a = -std::exp(alog[static_cast<size_t>(pp * K + kk)]);
                const double d = delta[static_cast<size_t>(bn * P + pp)];
                A_bar[static_cast<size_t>((bn * P + pp) * K + kk)] = std::exp(d * a);
                B_bar[static_cast<size_t>((bn * P + pp) * K + kk)] = d * Bproj[static_cast<size_t>(bn * K + kk)];
            }
    const auto y = scan_ref(A_bar, B_bar, Cproj, xp, B, N, P, K);

    std::vector<double> gated(y.size());
    for (size_t i = 0; i < y.size(); ++i) gated[i] = y[i] * silu_ref(z[i]);
    const auto bt = as_doubles(p.b_T);
    return linear_ref(gated, as_doubles(p.W_T), &bt, B * N, P, C);
}

// Line-by-line transcription of the cross-modal block.
template <typename T>
std::vector<double> cross_modal_ref(const Tensor<T>& t_ms, const Tensor<T>& t_pan,
                                    const pansharp::CrossModalParams<T>& p, int64_t H, int64_t W) {
    const int64_t B = t_ms.dim(0), N = t_ms.dim(1), C = t_ms.dim(2);
    const int64_t P = p.ms.W_x.dim(1), K = p.ms.ssm.A_log.dim(1), k = p.ms.conv_w.dim(1);

    auto run_branch = [&](const Tensor<T>& tokens, const pansharp::CrossModalBranch<T>& br,
                          std::vector<double>* norm_out) {
        const auto tok = as_doubles(tokens);
        auto tn = layer_norm_ref(tok, as_doubles(br.norm_gamma), as_doubles(br.norm_beta), B * N, C);
        if (norm_out) *norm_out = tn;
        const auto bx = as_doubles(br.b_x);
        const auto x = linear_ref(tn, as_doubles(br.W_x), &bx, B * N, C, P);
        std::vector<double> xt(static_cast<size_t>(B * P * N));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t n = 0; n < N; ++n)
                for (int64_t pp = 0; pp < P; ++pp)
                    xt[static_cast<size_t>((b * P + pp) * N + n)] = x[static_cast<size_t>((b * N + n) * P + pp)];
        auto xc = conv1d_ref(xt, as_doubles(br.conv_w), as_doubles(br.conv_b), B, P, N, k);
        std::vector<double> xp(static_cast<size_t>(B * N * P));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t n = 0; n < N; ++n)
                for (int64_t pp = 0; pp < P; ++pp)
                    xp[static_cast<size_t>((b * N + n) * P + pp)] =
                        silu_ref(xc[static_cast<size_t>((b * P + pp) * N + n)]);
        const auto Bproj = linear_ref(xp, as_doubles(br.ssm.W_B), nullptr, B * N, P, K);
        const auto Cproj = linear_ref(xp, as_doubles(br.ssm.W_C), nullptr, B * N, P, K);
        const auto bd = as_doubles(br.ssm.bias_delta);
        auto delta = linear_ref(xp, as_doubles(br.ssm.W_delta), &bd, B * N, P, P);
        for (double& d : delta) d = softplus_ref(d);
        const auto alog = as_doubles(br.ssm.A_log);
        std::vector<double> A_bar(static_cast<size_t>(B * N * P * K)), B_bar(A_bar.size());
        for (int64_t bn = 0; bn < B * N; ++bn)
            for (int64_t pp = 0; pp < P; ++pp)
                for (int64_t kk = 0; kk < K; ++kk) {
                    const double a = -std::exp(alog[static_cast<size_t>(pp * K + kk)]);
                    const double d = delta[static_cast<size_t>(bn * P + pp)];
                    A_bar[static_cast<size_t>((bn * P + pp) * K + kk)] = std::exp(d * a);
                    B_bar[static_cast<size_t>((bn * P + pp) * K + kk)] =
                        d * Bproj[static_cast<size_t>(bn * K + kk)];
                }
        return scan_ref(A_bar, B_bar, Cproj, xp, B, N, P, K);
    };

    std::vector<double> norm_ms;
    const auto y_ms = run_branch(t_ms, p.ms, &norm_ms);
    const auto y_pan = run_branch(t_pan, p.pan, nullptr);

    const auto bz = as_doubles(p.b_z);
    auto z = linear_ref(norm_ms, as_doubles(p.W_z), &bz, B * N, C, P);
    std::vector<double> fused(y_ms.size());
    for (size_t i = 0; i < fused.size(); ++i)
        fused[i] = y_ms[i] * silu_ref(z[i]) + y_pan[i] * silu_ref(z[i]);
    const auto bt = as_doubles(p.b_T);
    auto tokens = linear_ref(fused, as_doubles(p.W_T), &bt, B * N, P, C);
    const auto ms = as_doubles(t_ms);
    for (size_t i = 0; i < tokens.size(); ++i) tokens[i] += ms[i];

    // reshape to [B,C,H,W], depthwise conv + residual, flatten back
    std::vector<double> img(static_cast<size_t>(B * C * H * W));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                img[static_cast<size_t>((b * C + c) * N + n)] = tokens[static_cast<size_t>((b * N + n) * C + c)];
    const auto dw = as_doubles(p.dw_w);
    const auto db = as_doubles(p.dw_b);
    std::vector<double> ref(img.size());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t wx = 0; wx < W; ++wx) {
                    double acc = db[static_cast<size_t>(c)];
                    for (int64_t u = 0; u < 3; ++u)
                        for (int64_t v = 0; v < 3; ++v) {
                            const int64_t hh = h + u - 1, ww = wx + v - 1;
                            if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
                            acc += dw[static_cast<size_t>((c * 3 + u) * 3 + v)] *
                                   img[static_cast<size_t>(((b * C + c) * H + hh) * W + ww)];
                        }
                    ref[static_cast<size_t>(((b * C + c) * H + h) * W + wx)] =
                        acc + img[static_cast<size_t>(((b * C + c) * H + h) * W + wx)];
                }
    std::vector<double> out(static_cast<size_t>(B * N * C));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                out[static_cast<size_t>((b * N + n) * C + c)] = ref[static_cast<size_t>((b * C + c) * N + n)];
    return out;
}

// Gaussian blur + r-fold decimation by direct 2-D convolution with the
// same kernel and mirrored boundary as the pipeline documents.
template <typename T>
std::vector<double> blur_decimate_ref(const Tensor<T>& img, int64_t r) {
    const int64_t S = img.dim(0), H = img.dim(1), W = img.dim(2);
    const double sigma = static_cast<double>(r) / 2.0;
    const int64_t radius = static_cast<int64_t>(std::ceil(2.0 * sigma));
    std::vector<double> k1(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (int64_t i = -radius; i <= radius; ++i) {
        k1[static_cast<size_t>(i + radius)] = std::exp(-static_cast<double>(i * i) / (2 * sigma * sigma));
        sum += k1[static_cast<size_t>(i + radius)];
    }
    for (double& v : k1) v /= sum;
    auto mirror = [](int64_t i, int64_t n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
        }
        return i;
    };
    const int64_t Ho = H / r, Wo = W / r;
    std::vector<double> out(static_cast<size_t>(S * Ho * Wo));
    for (int64_t s = 0; s < S; ++s)
        for (int64_t ho = 0; ho < Ho; ++ho)
            for (int64_t wo = 0; wo < Wo; ++wo) {
                double acc = 0;
                for (int64_t u = -radius; u <= radius; ++u)
                    for (int64_t v = -radius; v <= radius; ++v)
                        acc += k1[static_cast<size_t>(u + radius)] * k1[static_cast<size_t>(v + radius)] *
                               static_cast<double>(
                                   img.data()[(s * H + mirror(ho * r + u, H)) * W + mirror(wo * r + v, W)]);
                out[static_cast<size_t>((s * Ho + ho) * Wo + wo)] = acc;
            }
    return out;
}

// Wang-Bovik Q on a whole block from raw moment sums.
inline double q_index_ref(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double mx = sx / n, my = sy / n;
    const double vx = (sxx - n * mx * mx) / (n - 1);
    const double vy = (syy - n * my * my) / (n - 1);
    const double cxy = (sxy - n * mx * my) / (n - 1);
    return 4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my));
}

}  // namespace oracles
