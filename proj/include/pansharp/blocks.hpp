#pragma once

#include "pansharp/ssm.hpp"

// The three architectural blocks. mamba_core is the shared body
//   norm -> x/z projections -> causal conv1d + SiLU -> SSM -> gate -> out
// used with its own residual (mamba_block), with swapped inputs and a
// residual onto the unswapped stream (channel_swap_block), and twice in
// parallel with a shared gate (cross_modal_block).

namespace pansharp {

template <typename T>
struct MambaBlockParams {
    Tensor<T> norm_gamma, norm_beta;  // [C]
    Tensor<T> W_x, b_x;               // [C,P], [P]
    Tensor<T> W_z, b_z;               // [C,P], [P]
    Tensor<T> conv_w, conv_b;         // [P,k], [P]
    SsmParams<T> ssm;
    Tensor<T> W_T, b_T;  // [P,C], [C]
};

template <typename T>
struct CrossModalBranch {
    Tensor<T> norm_gamma, norm_beta;  // [C]
    Tensor<T> W_x, b_x;               // [C,P], [P]
    Tensor<T> conv_w, conv_b;         // [P,k], [P]
    SsmParams<T> ssm;
};

template <typename T>
struct CrossModalParams {
    CrossModalBranch<T> ms, pan;
    Tensor<T> W_z, b_z;    // [C,P], [P], gate from the normalized ms stream
    Tensor<T> W_T, b_T;    // [P,C], [C]
    Tensor<T> dw_w, dw_b;  // [C,3,3], [C]
};

namespace detail {

// Tokens beyond which the no-grad path evaluates the SSM in chunks with a
// carried state instead of materialising [B,N,P,K] discrete parameters.
constexpr int64_t kStreamTokens = 8192;

// x' [B,N,P] (already conv'd and activated) -> scan output [B,N,P]
template <typename T>
Tensor<T> ssm_branch(Graph<T>* g, const Tensor<T>& xp, const SsmParams<T>& ssm, bool exact_zoh) {
    const int64_t B = xp.dim(0), N = xp.dim(1), P = xp.dim(2);
    if (g != nullptr || N <= kStreamTokens) {
        DiscreteParams<T> dp = parameters_function(g, xp, ssm, exact_zoh);
        return selective_scan(g, dp.A_bar, dp.B_bar, dp.C, xp);
    }
    const int64_t K = ssm.A_log.dim(1);
    Tensor<T> y({B, N, P});
    Tensor<T> carry({B, P, K});
    const T* src = xp.data();
    T* dst = y.data();
    for (int64_t t0 = 0; t0 < N; t0 += kStreamTokens) {
        const int64_t t1 = std::min(N, t0 + kStreamTokens);
        const int64_t n = t1 - t0;
        Tensor<T> chunk({B, n, P});
        for (int64_t b = 0; b < B; ++b)
            std::memcpy(chunk.data() + b * n * P, src + (b * N + t0) * P, sizeof(T) * n * P);
        DiscreteParams<T> dp = parameters_function<T>(nullptr, chunk, ssm, exact_zoh);
        Tensor<T> yc = selective_scan<T>(nullptr, dp.A_bar, dp.B_bar, dp.C, chunk, &carry);
        for (int64_t b = 0; b < B; ++b)
            std::memcpy(dst + (b * N + t0) * P, yc.data() + b * n * P, sizeof(T) * n * P);
    }
    return y;
}

}  // namespace detail

// Algorithm body without the residual; the callers decide what to add.
template <typename T>
Tensor<T> mamba_core(Graph<T>* g, const Tensor<T>& tokens, const MambaBlockParams<T>& p, bool exact_zoh = false) {
    if (tokens.rank() != 3) throw DimensionError("mamba_core: input must be [B,N,C]");
    Tensor<T> tn = layer_norm(g, tokens, p.norm_gamma, p.norm_beta);
    Tensor<T> x = linear(g, tn, p.W_x, &p.b_x);
    Tensor<T> z = linear(g, tn, p.W_z, &p.b_z);
    Tensor<T> xt = swap_last2(g, x);  // [B,P,N]
    Tensor<T> xc = silu(g, conv1d_depthwise(g, xt, p.conv_w, p.conv_b));
    Tensor<T> xp = swap_last2(g, xc);  // [B,N,P]
    Tensor<T> y = detail::ssm_branch(g, xp, p.ssm, exact_zoh);
    Tensor<T> gated = mul(g, y, silu(g, z));
    return linear(g, gated, p.W_T, &p.b_T);
}

template <typename T>
Tensor<T> mamba_block(Graph<T>* g, const Tensor<T>& tokens, const MambaBlockParams<T>& p, bool exact_zoh = false) {
    return add(g, mamba_core(g, tokens, p, exact_zoh), tokens);
}

// First half of one stream's channels joined with the second half of the
// other's. An involution: applying it twice restores the inputs.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_swap(Graph<T>* g, const Tensor<T>& t_ms, const Tensor<T>& t_pan) {
    check_same_shape(t_ms.shape(), t_pan.shape(), "channel_swap");
    if (t_ms.rank() != 3) throw DimensionError("channel_swap: inputs must be [B,N,C]");
    const int64_t BN = t_ms.dim(0) * t_ms.dim(1), C = t_ms.dim(2);
    if (C % 2 != 0) throw ConfigError("channel_swap: channel count must be even, got " + std::to_string(C));
    const int64_t Ch = C / 2;

    Tensor<T> s_ms(t_ms.shape()), s_pan(t_ms.shape());
    const T* pm = t_ms.data();
    const T* pp = t_pan.data();
    T* om = s_ms.data();
    T* op = s_pan.data();
#pragma omp parallel for schedule(static)
    for (int64_t bn = 0; bn < BN; ++bn) {
        const int64_t o = bn * C;
        for (int64_t c = 0; c < Ch; ++c) {
            om[o + c] = pm[o + c];
            om[o + Ch + c] = pp[o + Ch + c];
            op[o + c] = pp[o + c];
            op[o + Ch + c] = pm[o + Ch + c];
        }
    }
    if (g && (t_ms.requires_grad() || t_pan.requires_grad())) {
        s_ms.set_requires_grad(t_ms.requires_grad() || t_pan.requires_grad());
        s_pan.set_requires_grad(s_ms.requires_grad());
        Tensor<T> mc = t_ms, pc = t_pan, smc = s_ms, spc = s_pan;
        g->record([mc, pc, smc, spc, BN, C, Ch]() mutable {
            const T* dm = smc.grad_or_null();
            const T* dp = spc.grad_or_null();
            if (!dm && !dp) return;
            T* gm = mc.requires_grad() ? mc.grad() : nullptr;
            T* gp = pc.requires_grad() ? pc.grad() : nullptr;
#pragma omp parallel for schedule(static)
            for (int64_t bn = 0; bn < BN; ++bn) {
                const int64_t o = bn * C;
                for (int64_t c = 0; c < Ch; ++c) {
                    if (gm) {
                        if (dm) gm[o + c] += dm[o + c];
                        if (dp) gm[o + Ch + c] += dp[o + Ch + c];
                    }
                    if (gp) {
                        if (dp) gp[o + c] += dp[o + c];
                        if (dm) gp[o + Ch + c] += dm[o + Ch + c];
                    }
                }
            }
        });
    }
    return {s_ms, s_pan};
}

// Swapped sequences through their own Mamba cores, residuals added to the
// unswapped inputs.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_swap_block(Graph<T>* g, const Tensor<T>& t_ms, const Tensor<T>& t_pan,
                                                   const MambaBlockParams<T>& p_ms,
                                                   const MambaBlockParams<T>& p_pan, bool exact_zoh = false) {
    auto [s_ms, s_pan] = channel_swap(g, t_ms, t_pan);
    Tensor<T> out_ms = add(g, mamba_core(g, s_ms, p_ms, exact_zoh), t_ms);
    Tensor<T> out_pan = add(g, mamba_core(g, s_pan, p_pan, exact_zoh), t_pan);
    return {out_ms, out_pan};
}

// Parallel SSM branches over both modalities, gated by a projection of the
// normalized ms stream, fused by addition, residual onto the ms stream,
// then a depthwise 3x3 refinement in image space.
template <typename T>
Tensor<T> cross_modal_block(Graph<T>* g, const Tensor<T>& t_ms, const Tensor<T>& t_pan,
                            const CrossModalParams<T>& p, int64_t H, int64_t W, bool exact_zoh = false) {
    check_same_shape(t_ms.shape(), t_pan.shape(), "cross_modal_block");
    if (t_ms.dim(1) != H * W)
        throw DimensionError("cross_modal_block: token count " + std::to_string(t_ms.dim(1)) +
                             " != H*W = " + std::to_string(H * W));

    Tensor<T> norm_ms = layer_norm(g, t_ms, p.ms.norm_gamma, p.ms.norm_beta);
    Tensor<T> norm_pan = layer_norm(g, t_pan, p.pan.norm_gamma, p.pan.norm_beta);

    auto branch = [&](const Tensor<T>& tn, const CrossModalBranch<T>& br) {
        Tensor<T> x = linear(g, tn, br.W_x, &br.b_x);
        Tensor<T> xc = silu(g, conv1d_depthwise(g, swap_last2(g, x), br.conv_w, br.conv_b));
        Tensor<T> xp = swap_last2(g, xc);
        return detail::ssm_branch(g, xp, br.ssm, exact_zoh);
    };
    Tensor<T> y_ms = branch(norm_ms, p.ms);
    Tensor<T> y_pan = branch(norm_pan, p.pan);

    Tensor<T> gate = silu(g, linear(g, norm_ms, p.W_z, &p.b_z));
    Tensor<T> fused = add(g, mul(g, y_ms, gate), mul(g, y_pan, gate));
    Tensor<T> tokens = add(g, linear(g, fused, p.W_T, &p.b_T), t_ms);
    Tensor<T> f = tokens_to_image(g, tokens, H, W);
    Tensor<T> refined = add(g, conv2d_depthwise(g, f, p.dw_w, p.dw_b), f);
    return image_to_tokens(g, refined);
}

}  // namespace pansharp
