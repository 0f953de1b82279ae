#pragma once

#include <cstdint>
#include <string>

#include "pansharp/common.hpp"

namespace pansharp {

enum class Precision { kFloat32, kFloat64 };

// Network hyperparameters. Defaults are the calibrated desk-scale
// configuration; see count_params / count_flops for what they imply.
struct NetworkConfig {
    int64_t channels = 32;      // token width C (must be even for channel swap)
    int64_t state = 16;         // SSM state size K
    int64_t expansion = 2;      // inner width P = expansion * channels
    int64_t conv1d_kernel = 4;  // causal depthwise conv taps
    int64_t depth_extract = 4;  // Mamba blocks per extraction branch
    int64_t depth_swap = 1;     // channel-swap stages (each holds two blocks)
    int64_t depth_cross = 1;    // cross-modal blocks
    int64_t scale = 4;          // pan/lrms resolution ratio r
    int64_t ms_bands = 4;       // spectral bands S
    bool enable_swap = true;
    bool enable_cross = true;
    bool exact_zoh = false;  // exact ZOH input discretization instead of Euler
    Precision precision = Precision::kFloat32;

    int64_t inner_width() const { return expansion * channels; }

    void validate() const {
        if (channels <= 0 || channels % 2 != 0)
            throw ConfigError("config: channels must be positive and even, got " + std::to_string(channels));
        if (state < 1) throw ConfigError("config: state must be >= 1");
        if (expansion < 1) throw ConfigError("config: expansion must be >= 1");
        if (conv1d_kernel < 1) throw ConfigError("config: conv1d_kernel must be >= 1");
        if (depth_extract < 0 || depth_swap < 0 || depth_cross < 0)
            throw ConfigError("config: depths must be >= 0");
        if (scale < 1) throw ConfigError("config: scale must be >= 1");
        if (ms_bands < 1) throw ConfigError("config: ms_bands must be >= 1");
    }
};

// Optimization settings; the defaults follow the training recipe the
// network ships with (cosine decay 5e-4 -> 5e-8, Adam, clip 4).
struct TrainConfig {
    double lr_init = 5e-4;
    double lr_final = 5e-8;
    int64_t epochs = 500;
    double clip_norm = 4.0;
    int64_t batch_size = 4;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int64_t eval_every = 50;  // epochs between metric evaluations; 0 = never

    void validate() const {
        if (lr_final > lr_init) throw ConfigError("config: lr_final must be <= lr_init");
        if (!(clip_norm > 0)) throw ConfigError("config: clip_norm must be positive");
        if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    }
};

}  // namespace pansharp
