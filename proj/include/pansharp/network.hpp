#pragma once

#include "pansharp/blocks.hpp"
#include "pansharp/config.hpp"
#include "pansharp/config_io.hpp"
#include "pansharp/data.hpp"

// Full pan-sharpening network:
//   pan/upsampled-ms  -> 3x3 conv projections -> token streams
//   per-branch Mamba extraction blocks
//   channel-swap stages (optional)
//   cross-modal blocks updating the ms stream against a fixed pan stream
//   3x3 conv head + bicubic residual
// plus parameter/MAC counting and the versioned checkpoint format.

namespace pansharp {

template <typename T>
struct SwapStage {
    MambaBlockParams<T> ms, pan;
};

template <typename T>
struct PanMambaModel {
    NetworkConfig cfg;
    Tensor<T> conv_in_pan_w, conv_in_pan_b;  // [C,1,3,3], [C]
    Tensor<T> conv_in_ms_w, conv_in_ms_b;    // [C,S,3,3], [C]
    std::vector<MambaBlockParams<T>> extract_ms, extract_pan;
    std::vector<SwapStage<T>> swap_stages;
    std::vector<CrossModalParams<T>> cross_blocks;
    Tensor<T> conv_out_w, conv_out_b;  // [S,C,3,3], [S]
};

// ---------------------------------------------------------------------------
// construction

namespace detail {

template <typename T>
MambaBlockParams<T> build_mamba_params(const NetworkConfig& cfg) {
    const int64_t C = cfg.channels, P = cfg.inner_width(), K = cfg.state, k = cfg.conv1d_kernel;
    MambaBlockParams<T> p;
    p.norm_gamma = Tensor<T>({C});
    p.norm_beta = Tensor<T>({C});
    p.W_x = Tensor<T>({C, P});
    p.b_x = Tensor<T>({P});
    p.W_z = Tensor<T>({C, P});
    p.b_z = Tensor<T>({P});
    p.conv_w = Tensor<T>({P, k});
    p.conv_b = Tensor<T>({P});
    p.ssm.A_log = Tensor<T>({P, K});
    p.ssm.W_B = Tensor<T>({P, K});
    p.ssm.W_C = Tensor<T>({P, K});
    p.ssm.W_delta = Tensor<T>({P, P});
    p.ssm.bias_delta = Tensor<T>({P});
    p.W_T = Tensor<T>({P, C});
    p.b_T = Tensor<T>({C});
    return p;
}

template <typename T>
CrossModalBranch<T> build_cross_branch(const NetworkConfig& cfg) {
    const int64_t C = cfg.channels, P = cfg.inner_width(), K = cfg.state, k = cfg.conv1d_kernel;
    CrossModalBranch<T> b;
    b.norm_gamma = Tensor<T>({C});
    b.norm_beta = Tensor<T>({C});
    b.W_x = Tensor<T>({C, P});
    b.b_x = Tensor<T>({P});
    b.conv_w = Tensor<T>({P, k});
    b.conv_b = Tensor<T>({P});
    b.ssm.A_log = Tensor<T>({P, K});
    b.ssm.W_B = Tensor<T>({P, K});
    b.ssm.W_C = Tensor<T>({P, K});
    b.ssm.W_delta = Tensor<T>({P, P});
    b.ssm.bias_delta = Tensor<T>({P});
    return b;
}

}  // namespace detail

// All-zero model with the right shapes; init_model fills it in.
template <typename T>
PanMambaModel<T> build_model(const NetworkConfig& cfg) {
    cfg.validate();
    const int64_t C = cfg.channels, S = cfg.ms_bands;
    PanMambaModel<T> m;
    m.cfg = cfg;
    m.conv_in_pan_w = Tensor<T>({C, 1, 3, 3});
    m.conv_in_pan_b = Tensor<T>({C});
    m.conv_in_ms_w = Tensor<T>({C, S, 3, 3});
    m.conv_in_ms_b = Tensor<T>({C});
    for (int64_t i = 0; i < cfg.depth_extract; ++i) {
        m.extract_ms.push_back(detail::build_mamba_params<T>(cfg));
        m.extract_pan.push_back(detail::build_mamba_params<T>(cfg));
    }
    if (cfg.enable_swap)
        for (int64_t i = 0; i < cfg.depth_swap; ++i)
            m.swap_stages.push_back({detail::build_mamba_params<T>(cfg), detail::build_mamba_params<T>(cfg)});
    if (cfg.enable_cross) {
        for (int64_t i = 0; i < cfg.depth_cross; ++i) {
            CrossModalParams<T> cp;
            cp.ms = detail::build_cross_branch<T>(cfg);
            cp.pan = detail::build_cross_branch<T>(cfg);
            cp.W_z = Tensor<T>({C, cfg.inner_width()});
            cp.b_z = Tensor<T>({cfg.inner_width()});
            cp.W_T = Tensor<T>({cfg.inner_width(), C});
            cp.b_T = Tensor<T>({C});
            cp.dw_w = Tensor<T>({C, 3, 3});
            cp.dw_b = Tensor<T>({C});
            m.cross_blocks.push_back(std::move(cp));
        }
    }
    m.conv_out_w = Tensor<T>({S, C, 3, 3});
    m.conv_out_b = Tensor<T>({S});
    return m;
}

// Deterministic registry of learnable tensors; iteration order fixes the
// optimizer walk, checkpoint layout and parameter counting.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_params(const PanMambaModel<T>& m) {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto put = [&out](const std::string& name, const Tensor<T>& t) { out.emplace_back(name, t); };
    auto put_ssm = [&](const std::string& pre, const SsmParams<T>& s) {
        put(pre + ".A_log", s.A_log);
        put(pre + ".W_B", s.W_B);
        put(pre + ".W_C", s.W_C);
        put(pre + ".W_delta", s.W_delta);
        put(pre + ".bias_delta", s.bias_delta);
    };
    auto put_block = [&](const std::string& pre, const MambaBlockParams<T>& b) {
        put(pre + ".norm.gamma", b.norm_gamma);
        put(pre + ".norm.beta", b.norm_beta);
        put(pre + ".W_x", b.W_x);
        put(pre + ".b_x", b.b_x);
        put(pre + ".W_z", b.W_z);
        put(pre + ".b_z", b.b_z);
        put(pre + ".conv1d.w", b.conv_w);
        put(pre + ".conv1d.b", b.conv_b);
        put_ssm(pre + ".ssm", b.ssm);
        put(pre + ".W_T", b.W_T);
        put(pre + ".b_T", b.b_T);
    };
    auto put_branch = [&](const std::string& pre, const CrossModalBranch<T>& b) {
        put(pre + ".norm.gamma", b.norm_gamma);
        put(pre + ".norm.beta", b.norm_beta);
        put(pre + ".W_x", b.W_x);
        put(pre + ".b_x", b.b_x);
        put(pre + ".conv1d.w", b.conv_w);
        put(pre + ".conv1d.b", b.conv_b);
        put_ssm(pre + ".ssm", b.ssm);
    };

    put("conv_in_pan.w", m.conv_in_pan_w);
    put("conv_in_pan.b", m.conv_in_pan_b);
    put("conv_in_ms.w", m.conv_in_ms_w);
    put("conv_in_ms.b", m.conv_in_ms_b);
    for (size_t i = 0; i < m.extract_ms.size(); ++i) put_block("extract.ms." + std::to_string(i), m.extract_ms[i]);
    for (size_t i = 0; i < m.extract_pan.size(); ++i)
        put_block("extract.pan." + std::to_string(i), m.extract_pan[i]);
    for (size_t i = 0; i < m.swap_stages.size(); ++i) {
        put_block("swap." + std::to_string(i) + ".ms", m.swap_stages[i].ms);
        put_block("swap." + std::to_string(i) + ".pan", m.swap_stages[i].pan);
    }
    for (size_t i = 0; i < m.cross_blocks.size(); ++i) {
        const std::string pre = "cross." + std::to_string(i);
        put_branch(pre + ".ms", m.cross_blocks[i].ms);
        put_branch(pre + ".pan", m.cross_blocks[i].pan);
        put(pre + ".W_z", m.cross_blocks[i].W_z);
        put(pre + ".b_z", m.cross_blocks[i].b_z);
        put(pre + ".W_T", m.cross_blocks[i].W_T);
        put(pre + ".b_T", m.cross_blocks[i].b_T);
        put(pre + ".dwconv.w", m.cross_blocks[i].dw_w);
        put(pre + ".dwconv.b", m.cross_blocks[i].dw_b);
    }
    put("conv_out.w", m.conv_out_w);
    put("conv_out.b", m.conv_out_b);
    return out;
}

// ---------------------------------------------------------------------------
// initialization

namespace detail {

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double bound) {
    T* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_ssm(SsmParams<T>& s, Rng& rng, int64_t P, int64_t K) {
    T* a = s.A_log.data();
    for (int64_t p = 0; p < P; ++p)
        for (int64_t k = 0; k < K; ++k) a[p * K + k] = static_cast<T>(std::log(static_cast<double>(k + 1)));
    const double sp = 1.0 / std::sqrt(static_cast<double>(P));
    fill_uniform(s.W_B, rng, sp);
    fill_uniform(s.W_C, rng, sp);
    fill_uniform(s.W_delta, rng, sp);
    // bias chosen so softplus(bias) lands in [1e-3, 0.1], log-uniform
    T* bd = s.bias_delta.data();
    for (int64_t p = 0; p < P; ++p) {
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
        bd[p] = static_cast<T>(std::log(std::expm1(dt)));
    }
}

template <typename T>
void init_mamba(MambaBlockParams<T>& b, Rng& rng, const NetworkConfig& cfg) {
    const int64_t C = cfg.channels, P = cfg.inner_width(), K = cfg.state, k = cfg.conv1d_kernel;
    T* gm = b.norm_gamma.data();
    for (int64_t c = 0; c < C; ++c) gm[c] = T(1);
    const double sc = 1.0 / std::sqrt(static_cast<double>(C));
    const double sk = 1.0 / std::sqrt(static_cast<double>(k));
    const double sp = 1.0 / std::sqrt(static_cast<double>(P));
    fill_uniform(b.W_x, rng, sc);
    fill_uniform(b.b_x, rng, sc);
    fill_uniform(b.W_z, rng, sc);
    fill_uniform(b.b_z, rng, sc);
    fill_uniform(b.conv_w, rng, sk);
    fill_uniform(b.conv_b, rng, sk);
    init_ssm(b.ssm, rng, P, K);
    fill_uniform(b.W_T, rng, sp);
    fill_uniform(b.b_T, rng, sp);
}

template <typename T>
void init_cross_branch(CrossModalBranch<T>& b, Rng& rng, const NetworkConfig& cfg) {
    const int64_t C = cfg.channels, P = cfg.inner_width(), K = cfg.state, k = cfg.conv1d_kernel;
    T* gm = b.norm_gamma.data();
    for (int64_t c = 0; c < C; ++c) gm[c] = T(1);
    const double sc = 1.0 / std::sqrt(static_cast<double>(C));
    const double sk = 1.0 / std::sqrt(static_cast<double>(k));
    fill_uniform(b.W_x, rng, sc);
    fill_uniform(b.b_x, rng, sc);
    fill_uniform(b.conv_w, rng, sk);
    fill_uniform(b.conv_b, rng, sk);
    init_ssm(b.ssm, rng, P, K);
}

}  // namespace detail

// Seeded construction. conv_out and the cross-block depthwise convs start
// at zero so the untrained network is the bicubic upsample plus nothing.
template <typename T>
PanMambaModel<T> init_model(const NetworkConfig& cfg, uint64_t seed) {
    PanMambaModel<T> m = build_model<T>(cfg);
    Rng rng(seed);
    detail::fill_uniform(m.conv_in_pan_w, rng, 1.0 / 3.0);  // fan_in = 1*3*3
    detail::fill_uniform(m.conv_in_pan_b, rng, 1.0 / 3.0);
    const double sin_ms = 1.0 / std::sqrt(static_cast<double>(cfg.ms_bands) * 9.0);
    detail::fill_uniform(m.conv_in_ms_w, rng, sin_ms);
    detail::fill_uniform(m.conv_in_ms_b, rng, sin_ms);
    for (auto& b : m.extract_ms) detail::init_mamba(b, rng, cfg);
    for (auto& b : m.extract_pan) detail::init_mamba(b, rng, cfg);
    for (auto& st : m.swap_stages) {
        detail::init_mamba(st.ms, rng, cfg);
        detail::init_mamba(st.pan, rng, cfg);
    }
    for (auto& cbk : m.cross_blocks) {
        detail::init_cross_branch(cbk.ms, rng, cfg);
        detail::init_cross_branch(cbk.pan, rng, cfg);
        const double sc = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
        const double sp = 1.0 / std::sqrt(static_cast<double>(cfg.inner_width()));
        detail::fill_uniform(cbk.W_z, rng, sc);
        detail::fill_uniform(cbk.b_z, rng, sc);
        detail::fill_uniform(cbk.W_T, rng, sp);
        detail::fill_uniform(cbk.b_T, rng, sp);
        // dw_w, dw_b stay zero
    }
    // conv_out stays zero
    set_requires_grad(m, true);
    return m;
}

template <typename T>
void set_requires_grad(PanMambaModel<T>& m, bool b) {
    for (auto& [name, t] : named_params(m)) {
        (void)name;
        t.set_requires_grad(b);
    }
}

template <typename T>
void zero_grads(PanMambaModel<T>& m) {
    for (auto& [name, t] : named_params(m)) {
        (void)name;
        t.zero_grad();
    }
}

// ---------------------------------------------------------------------------
// forward

// pan [B,1,H,W], lrms [B,S,H/r,W/r] -> [B,S,H,W]
template <typename T>
Tensor<T> forward(const PanMambaModel<T>& m, const Tensor<T>& pan, const Tensor<T>& lrms, Graph<T>* g = nullptr) {
    const NetworkConfig& cfg = m.cfg;
    if (pan.rank() != 4 || pan.dim(1) != 1) throw DimensionError("forward: pan must be [B,1,H,W]");
    if (lrms.rank() != 4) throw DimensionError("forward: lrms must be [B,S,H/r,W/r]");
    const int64_t B = pan.dim(0), H = pan.dim(2), W = pan.dim(3), r = cfg.scale;
    if (lrms.dim(0) != B) throw DimensionError("forward: batch sizes disagree");
    if (lrms.dim(1) != cfg.ms_bands)
        throw DimensionError("forward: lrms has " + std::to_string(lrms.dim(1)) + " bands, config expects " +
                             std::to_string(cfg.ms_bands));
    if (H % r != 0 || W % r != 0 || lrms.dim(2) * r != H || lrms.dim(3) * r != W)
        throw DimensionError("forward: pan " + shape_str(pan.shape()) + " and lrms " + shape_str(lrms.shape()) +
                             " violate the x" + std::to_string(r) + " ratio");

    // bicubic residual base; constant input, no gradient path
    Tensor<T> m_up({B, cfg.ms_bands, H, W});
    for (int64_t b = 0; b < B; ++b) {
        Tensor<T> one({cfg.ms_bands, H / r, W / r});
        std::memcpy(one.data(), lrms.data() + b * lrms.numel() / B, sizeof(T) * one.numel());
        Tensor<T> up = bicubic_upsample(one, r);
        std::memcpy(m_up.data() + b * m_up.numel() / B, up.data(), sizeof(T) * up.numel());
    }

    Tensor<T> t_pan = image_to_tokens(g, conv2d(g, pan, m.conv_in_pan_w, m.conv_in_pan_b));
    Tensor<T> t_ms = image_to_tokens(g, conv2d(g, m_up, m.conv_in_ms_w, m.conv_in_ms_b));

    for (size_t i = 0; i < m.extract_ms.size(); ++i) {
        t_ms = mamba_block(g, t_ms, m.extract_ms[i], cfg.exact_zoh);
        t_pan = mamba_block(g, t_pan, m.extract_pan[i], cfg.exact_zoh);
    }
    if (cfg.enable_swap) {
        for (const auto& st : m.swap_stages) {
            auto [nms, npan] = channel_swap_block(g, t_ms, t_pan, st.ms, st.pan, cfg.exact_zoh);
            t_ms = nms;
            t_pan = npan;
        }
    }
    if (cfg.enable_cross) {
        for (const auto& cbk : m.cross_blocks)
            t_ms = cross_modal_block(g, t_ms, t_pan, cbk, H, W, cfg.exact_zoh);
    }
    Tensor<T> out_img = conv2d(g, tokens_to_image(g, t_ms, H, W), m.conv_out_w, m.conv_out_b);
    return add(g, out_img, m_up);
}

// ---------------------------------------------------------------------------
// analytic counting

template <typename T>
int64_t count_params(const PanMambaModel<T>& m) {
    int64_t n = 0;
    for (const auto& [name, t] : named_params(m)) {
        (void)name;
        n += t.numel();
    }
    return n;
}

struct FlopBreakdown {
    int64_t token_path = 0;  // everything operating on the flattened sequence
    int64_t conv_path = 0;   // image-space 3x3 projections
    int64_t total() const { return token_path + conv_path; }
};

// Multiply-accumulate count of the compute-bearing kernels for one forward
// pass at batch 1 (thops convention): linears/convs at fan_in MACs per
// output, discretization 2*N*P*K, scan 2*N*P*K (state update + output
// reduction). Cheap elementwise work (norms, SiLU, gates, residuals) is
// excluded.
inline FlopBreakdown count_flops_breakdown(const NetworkConfig& cfg, int64_t H, int64_t W) {
    const int64_t N = H * W;
    const int64_t C = cfg.channels, P = cfg.inner_width(), K = cfg.state, k = cfg.conv1d_kernel;
    const int64_t S = cfg.ms_bands;
    const int64_t disc = cfg.exact_zoh ? 3 : 2;

    const int64_t per_mamba = N * (3 * C * P + P * k + (2 + disc + 2) * P * K + P * P);
    const int64_t per_cross_branch = N * (C * P + P * k + (2 + disc + 2) * P * K + P * P);
    const int64_t per_cross = 2 * per_cross_branch + N * (2 * C * P) + N * C * 9;

    FlopBreakdown fb;
    int64_t mamba_blocks = 2 * cfg.depth_extract + (cfg.enable_swap ? 2 * cfg.depth_swap : 0);
    fb.token_path = mamba_blocks * per_mamba + (cfg.enable_cross ? cfg.depth_cross * per_cross : 0);
    fb.conv_path = N * C * 1 * 9 + N * C * S * 9 + N * S * C * 9;
    return fb;
}

template <typename T>
int64_t count_flops(const PanMambaModel<T>& m, int64_t H, int64_t W) {
    return count_flops_breakdown(m.cfg, H, W).total();
}

// Rough peak-resident-bytes estimate for one no-grad forward at batch 1.
inline int64_t estimate_forward_bytes(const NetworkConfig& cfg, int64_t H, int64_t W, int64_t scalar_bytes) {
    const int64_t N = H * W;
    const int64_t P = cfg.inner_width(), C = cfg.channels, K = cfg.state;
    const int64_t ssm_chunk = std::min<int64_t>(N, 8192);
    int64_t activ = 8 * N * P + 6 * N * C + ssm_chunk * P * K * 2;
    int64_t images = (2 * cfg.ms_bands + 1 + 2 * C) * N;
    int64_t params = 0;
    {
        // parameter bytes from the analytic structure, no model needed
        const int64_t per_block = 2 * C + 2 * (C * P + P) + (P * cfg.conv1d_kernel + P) + 3 * P * K +
                                  (P * P + P) + (P * C + C);
        const int64_t per_branch = 2 * C + (C * P + P) + (P * cfg.conv1d_kernel + P) + 3 * P * K + (P * P + P);
        const int64_t blocks = 2 * cfg.depth_extract + (cfg.enable_swap ? 2 * cfg.depth_swap : 0);
        params = blocks * per_block +
                 (cfg.enable_cross
                      ? cfg.depth_cross * (2 * per_branch + (C * P + P) + (P * C + C) + (C * 9 + C))
                      : 0) +
                 (C * 9 + C) + (C * cfg.ms_bands * 9 + C) + (cfg.ms_bands * C * 9 + cfg.ms_bands);
    }
    return (activ + images + params) * scalar_bytes;
}

// ---------------------------------------------------------------------------
// checkpoints: "PMCK", u32 version, config block, named f32 tensors

inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const PanMambaModel<T>& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("save_checkpoint: cannot open '" + path + "'");
    os.write("PMCK", 4);
    detail::write_u32(os, kCheckpointVersion);
    const std::string cfg_text = serialize_network_config(m.cfg);
    detail::write_u32(os, static_cast<uint32_t>(cfg_text.size()));
    os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    auto params = named_params(m);
    detail::write_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        detail::write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(os, static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) detail::write_u32(os, static_cast<uint32_t>(t.dim(i)));
        const T* p = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) detail::write_f32(os, static_cast<float>(p[i]));
    }
    if (!os) throw FormatError("save_checkpoint: write failed for '" + path + "'");
}

template <typename T>
PanMambaModel<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("load_checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PMCK", 4) != 0)
        throw FormatError("load_checkpoint: '" + path + "' is not a checkpoint (bad magic)");
    const uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw FormatError("load_checkpoint: unsupported format version " + std::to_string(version));
    const uint32_t cfg_len = detail::read_u32(is);
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), cfg_len);
    if (!is) throw FormatError("load_checkpoint: truncated config block");
    NetworkConfig cfg = network_config_from_kv(parse_kv_text(cfg_text));

    PanMambaModel<T> m = build_model<T>(cfg);
    auto params = named_params(m);
    std::map<std::string, Tensor<T>> by_name;
    for (auto& [name, t] : params) by_name.emplace(name, t);

    const uint32_t n_tensors = detail::read_u32(is);
    if (n_tensors != params.size())
        throw FormatError("load_checkpoint: tensor count " + std::to_string(n_tensors) +
                          " does not match the configured architecture (" + std::to_string(params.size()) + ")");
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = detail::read_u32(is);
        if (name_len > 4096) throw FormatError("load_checkpoint: implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw FormatError("load_checkpoint: truncated tensor name");
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("load_checkpoint: unknown tensor '" + name + "'");
        const uint32_t ndim = detail::read_u32(is);
        std::vector<int64_t> dims(ndim);
        for (uint32_t d = 0; d < ndim; ++d) dims[d] = static_cast<int64_t>(detail::read_u32(is));
        if (dims != it->second.shape())
            throw FormatError("load_checkpoint: tensor '" + name + "' has shape " + shape_str(dims) +
                              ", expected " + shape_str(it->second.shape()));
        T* p = it->second.data();
        for (int64_t j = 0; j < it->second.numel(); ++j) {
            float v = detail::read_f32(is);
            if (!std::isfinite(v)) throw FormatError("load_checkpoint: non-finite weight in '" + name + "'");
            p[j] = static_cast<T>(v);
        }
    }
    for (auto& [name, t] : named_params(m)) {
        (void)name;
        t.set_requires_grad(true);
    }
    return m;
}

}  // namespace pansharp
