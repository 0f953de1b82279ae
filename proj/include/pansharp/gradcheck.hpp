#pragma once

#include "pansharp/trainer.hpp"

// Central finite-difference verification of reverse-mode gradients. Every
// learnable tensor of a block (or the whole network) is perturbed scalar
// by scalar and the analytic gradient compared against
// (L(x+h) - L(x-h)) / 2h on a scalar probe loss sum(out * R) with fixed
// random R. Uses a reduced-width configuration so the full-network sweep
// stays cheap; the block structure is the production one.

namespace pansharp {

struct GradCheckReport {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

namespace detail {

// denominator floor turns near-zero gradients into an absolute comparison
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

template <typename T>
Tensor<T> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    T* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

}  // namespace detail

// params: every tensor the loss depends on that should be checked.
// make_loss: rebuilds the forward pass from current parameter values.
template <typename T>
GradCheckReport check_gradients(const std::string& name, std::vector<Tensor<T>> params,
                                const std::function<Tensor<T>(Graph<T>*)>& make_loss, double h) {
    for (auto& t : params) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Graph<T> g;
    Tensor<T> loss = make_loss(&g);
    g.backward(loss);

    std::vector<std::vector<T>> grads;
    for (auto& t : params)
        grads.emplace_back(t.grad(), t.grad() + t.numel());

    GradCheckReport rep;
    rep.name = name;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& t = params[pi];
        T* p = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) {
            const T saved = p[i];
            p[i] = saved + static_cast<T>(h);
            const double lp = static_cast<double>(make_loss(nullptr).item());
            p[i] = saved - static_cast<T>(h);
            const double lm = static_cast<double>(make_loss(nullptr).item());
            p[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = static_cast<double>(grads[pi][static_cast<size_t>(i)]);
            rep.max_rel_err = std::max(rep.max_rel_err, detail::rel_err(an, fd));
            ++rep.checked;
        }
    }
    return rep;
}

namespace detail {

inline NetworkConfig gradcheck_config() {
    NetworkConfig cfg;
    cfg.channels = 4;
    cfg.state = 2;
    cfg.expansion = 2;
    cfg.conv1d_kernel = 4;
    cfg.depth_extract = 1;
    cfg.depth_swap = 1;
    cfg.depth_cross = 1;
    cfg.scale = 4;
    cfg.ms_bands = 2;
    return cfg;
}

template <typename T>
std::vector<Tensor<T>> mamba_param_list(const MambaBlockParams<T>& p) {
    return {p.norm_gamma, p.norm_beta, p.W_x, p.b_x,      p.W_z,         p.b_z,
            p.conv_w,     p.conv_b,    p.ssm.A_log, p.ssm.W_B, p.ssm.W_C, p.ssm.W_delta,
            p.ssm.bias_delta, p.W_T,   p.b_T};
}

template <typename T>
std::vector<Tensor<T>> cross_param_list(const CrossModalParams<T>& p) {
    std::vector<Tensor<T>> v;
    for (const auto* br : {&p.ms, &p.pan}) {
        v.insert(v.end(), {br->norm_gamma, br->norm_beta, br->W_x, br->b_x, br->conv_w, br->conv_b,
                           br->ssm.A_log, br->ssm.W_B, br->ssm.W_C, br->ssm.W_delta, br->ssm.bias_delta});
    }
    v.insert(v.end(), {p.W_z, p.b_z, p.W_T, p.b_T, p.dw_w, p.dw_b});
    return v;
}

}  // namespace detail

// The suite behind `grad-check` and the gradient acceptance criterion.
// include_input also perturbs the block inputs (scan adjoint wrt x').
template <typename T>
std::vector<GradCheckReport> run_gradient_suite(double h, uint64_t seed = 7) {
    std::vector<GradCheckReport> out;
    const NetworkConfig cfg = detail::gradcheck_config();
    Rng rng(seed);
    const int64_t B = 1, H = 2, W = 4, N = H * W, C = cfg.channels;

    {
        PanMambaModel<T> m = init_model<T>(cfg, seed);
        Tensor<T> input = detail::random_tensor<T>({B, N, C}, rng);
        Tensor<T> probe = detail::random_tensor<T>({B, N, C}, rng);
        auto params = detail::mamba_param_list(m.extract_ms[0]);
        params.push_back(input);
        out.push_back(check_gradients<T>(
            "mamba_block", params,
            [&](Graph<T>* g) { return sum_all(g, mul(g, mamba_block(g, input, m.extract_ms[0]), probe)); }, h));
    }
    {
        PanMambaModel<T> m = init_model<T>(cfg, seed + 1);
        Tensor<T> t_ms = detail::random_tensor<T>({B, N, C}, rng);
        Tensor<T> t_pan = detail::random_tensor<T>({B, N, C}, rng);
        Tensor<T> probe = detail::random_tensor<T>({B, N, C}, rng);
        auto params = detail::mamba_param_list(m.swap_stages[0].ms);
        auto more = detail::mamba_param_list(m.swap_stages[0].pan);
        params.insert(params.end(), more.begin(), more.end());
        params.push_back(t_ms);
        params.push_back(t_pan);
        out.push_back(check_gradients<T>(
            "channel_swap_block", params,
            [&](Graph<T>* g) {
                auto [oms, opan] = channel_swap_block(g, t_ms, t_pan, m.swap_stages[0].ms, m.swap_stages[0].pan);
                return sum_all(g, add(g, mul(g, oms, probe), mul(g, opan, probe)));
            },
            h));
    }
    {
        PanMambaModel<T> m = init_model<T>(cfg, seed + 2);
        // nonzero depthwise weights so their gradients are exercised
        detail::fill_uniform(m.cross_blocks[0].dw_w, rng, 0.5);
        detail::fill_uniform(m.cross_blocks[0].dw_b, rng, 0.5);
        Tensor<T> t_ms = detail::random_tensor<T>({B, N, C}, rng);
        Tensor<T> t_pan = detail::random_tensor<T>({B, N, C}, rng);
        Tensor<T> probe = detail::random_tensor<T>({B, N, C}, rng);
        auto params = detail::cross_param_list(m.cross_blocks[0]);
        params.push_back(t_ms);
        params.push_back(t_pan);
        out.push_back(check_gradients<T>(
            "cross_modal_block", params,
            [&](Graph<T>* g) {
                return sum_all(g, mul(g, cross_modal_block(g, t_ms, t_pan, m.cross_blocks[0], H, W), probe));
            },
            h));
    }
    {
        PanMambaModel<T> m = init_model<T>(cfg, seed + 3);
        // nonzero output head, otherwise most of its gradients vanish trivially
        detail::fill_uniform(m.conv_out_w, rng, 0.2);
        detail::fill_uniform(m.conv_out_b, rng, 0.2);
        detail::fill_uniform(m.cross_blocks[0].dw_w, rng, 0.5);
        const int64_t ph = 8, pw = 8;
        Tensor<T> pan = detail::random_tensor<T>({1, 1, ph, pw}, rng, 0.0, 1.0);
        Tensor<T> lrms = detail::random_tensor<T>({1, cfg.ms_bands, ph / cfg.scale, pw / cfg.scale}, rng, 0.0, 1.0);
        Tensor<T> probe = detail::random_tensor<T>({1, cfg.ms_bands, ph, pw}, rng);
        std::vector<Tensor<T>> params;
        for (auto& [name, t] : named_params(m)) {
            (void)name;
            params.push_back(t);
        }
        out.push_back(check_gradients<T>(
            "full_network", params,
            [&](Graph<T>* g) { return sum_all(g, mul(g, forward(m, pan, lrms, g), probe)); }, h));
    }
    return out;
}

}  // namespace pansharp
