#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pansharp/tensor.hpp"

// Dataset synthesis and image I/O. Images are rank-3 tensors [bands,H,W]
// with values in [0,1]. The reduced-resolution protocol degrades a
// co-registered source pair so the original multispectral image serves as
// ground truth:
//   gt   = ms                       [S,H,W]
//   lrms = blur+decimate(ms, r)     [S,H/r,W/r]
//   pan  = blur+decimate(pan0, r)   [1,H,W]   (pan0 is [1,rH,rW])
// Blur is a normalized Gaussian with sigma = r/2, radius ceil(2*sigma),
// mirrored at the borders; decimation keeps every r-th sample starting at
// index 0. Both choices are fixed so oracles can reproduce them exactly.

namespace pansharp {

template <typename T>
struct ImageTriple {
    Tensor<T> pan;   // [1,H,W]
    Tensor<T> lrms;  // [S,H/r,W/r]
    Tensor<T> gt;    // optional [S,H,W]
    bool has_gt() const { return gt.defined(); }
};

inline std::vector<double> gaussian_kernel(double sigma) {
    const int64_t radius = static_cast<int64_t>(std::ceil(2.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int64_t i = -radius; i <= radius; ++i) {
        double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        k[static_cast<size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

inline int64_t mirror_index(int64_t i, int64_t n) {
    // reflect without repeating the border sample: -1 -> 1, n -> n-2
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// Separable Gaussian blur followed by r-fold decimation, per band.
template <typename T>
Tensor<T> blur_decimate(const Tensor<T>& img, int64_t r) {
    if (img.rank() != 3) throw DimensionError("blur_decimate: image must be [S,H,W]");
    const int64_t S = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (H % r != 0 || W % r != 0)
        throw DimensionError("blur_decimate: dims " + shape_str(img.shape()) + " not divisible by " +
                             std::to_string(r));
    if (r == 1) return img.clone();
    const std::vector<double> k = gaussian_kernel(static_cast<double>(r) / 2.0);
    const int64_t radius = (static_cast<int64_t>(k.size()) - 1) / 2;
    const int64_t Ho = H / r, Wo = W / r;
    Tensor<T> out({S, Ho, Wo});
    const T* src = img.data();
    T* dst = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t s = 0; s < S; ++s) {
        // horizontal pass on full resolution
        std::vector<double> tmp(static_cast<size_t>(H * W));
        const T* band = src + s * H * W;
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
                double acc = 0.0;
                for (int64_t j = -radius; j <= radius; ++j)
                    acc += k[static_cast<size_t>(j + radius)] *
                           static_cast<double>(band[h * W + mirror_index(w + j, W)]);
                tmp[static_cast<size_t>(h * W + w)] = acc;
            }
        }
        // vertical pass, sampled only at the decimated grid
        for (int64_t ho = 0; ho < Ho; ++ho) {
            for (int64_t wo = 0; wo < Wo; ++wo) {
                const int64_t h = ho * r, w = wo * r;
                double acc = 0.0;
                for (int64_t j = -radius; j <= radius; ++j)
                    acc += k[static_cast<size_t>(j + radius)] * tmp[static_cast<size_t>(mirror_index(h + j, H) * W + w)];
                dst[(s * Ho + ho) * Wo + wo] = static_cast<T>(acc);
            }
        }
    }
    return out;
}

// Reduced-resolution triple from a co-registered (ms, pan) source pair;
// hrpan must be r times the resolution of hrms.
template <typename T>
ImageTriple<T> wald_degrade(const Tensor<T>& hrms, const Tensor<T>& hrpan, int64_t r) {
    if (hrms.rank() != 3 || hrpan.rank() != 3 || hrpan.dim(0) != 1)
        throw DimensionError("wald_degrade: expected hrms [S,H,W] and hrpan [1,rH,rW]");
    const int64_t H = hrms.dim(1), W = hrms.dim(2);
    if (hrpan.dim(1) != r * H || hrpan.dim(2) != r * W)
        throw DimensionError("wald_degrade: pan " + shape_str(hrpan.shape()) + " must be " +
                             std::to_string(r) + "x the ms resolution " + shape_str(hrms.shape()));
    if (H % r != 0 || W % r != 0)
        throw DimensionError("wald_degrade: ms dims must be divisible by the scale ratio");
    ImageTriple<T> t;
    t.gt = hrms.clone();
    t.lrms = blur_decimate(hrms, r);
    t.pan = blur_decimate(hrpan, r);
    return t;
}

// Separable Catmull-Rom (a = -0.5) upsampling, edge-clamped. Centers are
// aligned: output pixel i samples source coordinate (i + 0.5)/r - 0.5.
namespace detail {

inline void catmull_rom_weights(double t, double w[4]) {
    constexpr double a = -0.5;
    const double t2 = t * t, t3 = t2 * t;
    w[0] = a * t3 - 2.0 * a * t2 + a * t;
    w[1] = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0;
    w[2] = -(a + 2.0) * t3 + (2.0 * a + 3.0) * t2 - a * t;
    w[3] = -a * t3 + a * t2;
}

}  // namespace detail

template <typename T>
Tensor<T> bicubic_upsample(const Tensor<T>& img, int64_t r) {
    if (img.rank() != 3) throw DimensionError("bicubic_upsample: image must be [S,h,w]");
    if (r < 1) throw UsageError("bicubic_upsample: ratio must be >= 1");
    if (r == 1) return img.clone();
    const int64_t S = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int64_t Ho = h * r, Wo = w * r;
    auto clampi = [](int64_t i, int64_t n) { return std::min(std::max(i, int64_t(0)), n - 1); };

    // horizontal pass [S,h,Wo], then vertical [S,Ho,Wo]
    std::vector<double> tmp(static_cast<size_t>(S * h * Wo));
#pragma omp parallel for schedule(static)
    for (int64_t s = 0; s < S; ++s) {
        const T* band = img.data() + s * h * w;
        for (int64_t wo = 0; wo < Wo; ++wo) {
            const double src = (static_cast<double>(wo) + 0.5) / static_cast<double>(r) - 0.5;
            const int64_t i0 = static_cast<int64_t>(std::floor(src));
            double wt[4];
            detail::catmull_rom_weights(src - static_cast<double>(i0), wt);
            for (int64_t y = 0; y < h; ++y) {
                double acc = 0.0;
                for (int64_t j = 0; j < 4; ++j)
                    acc += wt[j] * static_cast<double>(band[y * w + clampi(i0 - 1 + j, w)]);
                tmp[static_cast<size_t>((s * h + y) * Wo + wo)] = acc;
            }
        }
    }
    Tensor<T> out({S, Ho, Wo});
    T* dst = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t s = 0; s < S; ++s) {
        for (int64_t ho = 0; ho < Ho; ++ho) {
            const double src = (static_cast<double>(ho) + 0.5) / static_cast<double>(r) - 0.5;
            const int64_t i0 = static_cast<int64_t>(std::floor(src));
            double wt[4];
            detail::catmull_rom_weights(src - static_cast<double>(i0), wt);
            for (int64_t wo = 0; wo < Wo; ++wo) {
                double acc = 0.0;
                for (int64_t j = 0; j < 4; ++j)
                    acc += wt[j] * tmp[static_cast<size_t>((s * h + clampi(i0 - 1 + j, h)) * Wo + wo)];
                dst[(s * Ho + ho) * Wo + wo] = static_cast<T>(acc);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// raw tensor files: "PMT1", u32 ndim, u32 dims..., f32 payload, little-endian

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("raw tensor: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline float read_f32(std::istream& is) {
    uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

template <typename T>
void save_raw(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("save_raw: cannot open '" + path + "'");
    os.write("PMT1", 4);
    detail::write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) detail::write_u32(os, static_cast<uint32_t>(t.dim(i)));
    const T* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) detail::write_f32(os, static_cast<float>(p[i]));
    if (!os) throw FormatError("save_raw: write failed for '" + path + "'");
}

template <typename T>
Tensor<T> load_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("load_raw: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PMT1", 4) != 0)
        throw FormatError("load_raw: '" + path + "' is not a raw tensor file (bad magic)");
    const uint32_t ndim = detail::read_u32(is);
    if (ndim == 0 || ndim > 8) throw FormatError("load_raw: implausible rank " + std::to_string(ndim));
    std::vector<int64_t> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) {
        shape[i] = static_cast<int64_t>(detail::read_u32(is));
        if (shape[i] <= 0) throw FormatError("load_raw: non-positive dimension");
    }
    const int64_t n = shape_numel(shape);
    Tensor<T> t(shape);
    T* p = t.data();
    for (int64_t i = 0; i < n; ++i) {
        float v = detail::read_f32(is);
        if (!std::isfinite(v)) throw FormatError("load_raw: non-finite value in '" + path + "'");
        p[i] = static_cast<T>(v);
    }
    return t;
}

// Image loader wrapper enforcing the [0,1] range contract.
template <typename T>
Tensor<T> load_image_raw(const std::string& path) {
    Tensor<T> t = load_raw<T>(path);
    const T* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i)
        if (p[i] < T(0) || p[i] > T(1))
            throw FormatError("load_image_raw: value out of [0,1] range in '" + path + "'");
    return t;
}

// ---------------------------------------------------------------------------
// patch extraction

// Aligned crops on the pan grid; origins advance by `stride` which must be
// a multiple of the scale ratio so lrms origins stay integral.
template <typename T>
std::vector<ImageTriple<T>> extract_patches(const ImageTriple<T>& t, int64_t pan_patch, int64_t stride,
                                            int64_t r) {
    const int64_t H = t.pan.dim(1), W = t.pan.dim(2);
    if (pan_patch % r != 0) throw UsageError("extract_patches: patch size must be divisible by the ratio");
    if (stride <= 0 || stride % r != 0)
        throw UsageError("extract_patches: stride must be a positive multiple of the ratio");
    if (pan_patch > H || pan_patch > W)
        throw UsageError("extract_patches: patch " + std::to_string(pan_patch) + " larger than image " +
                         shape_str(t.pan.shape()));
    if (t.lrms.dim(1) * r != H || t.lrms.dim(2) * r != W)
        throw DimensionError("extract_patches: pan/lrms resolutions inconsistent with ratio");
    const int64_t S = t.lrms.dim(0);
    const int64_t lp = pan_patch / r;

    auto crop = [](const Tensor<T>& img, int64_t c, int64_t y0, int64_t x0, int64_t side) {
        Tensor<T> out({c, side, side});
        const int64_t Hs = img.dim(1), Ws = img.dim(2);
        (void)Hs;
        for (int64_t s = 0; s < c; ++s)
            for (int64_t y = 0; y < side; ++y)
                std::memcpy(out.data() + (s * side + y) * side, img.data() + (s * img.dim(1) + y0 + y) * Ws + x0,
                            sizeof(T) * side);
        return out;
    };

    std::vector<ImageTriple<T>> patches;
    for (int64_t y0 = 0; y0 + pan_patch <= H; y0 += stride) {
        for (int64_t x0 = 0; x0 + pan_patch <= W; x0 += stride) {
            ImageTriple<T> p;
            p.pan = crop(t.pan, 1, y0, x0, pan_patch);
            p.lrms = crop(t.lrms, S, y0 / r, x0 / r, lp);
            if (t.has_gt()) p.gt = crop(t.gt, S, y0, x0, pan_patch);
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

}  // namespace pansharp
