#pragma once

#include "pansharp/data.hpp"

// Fusion quality metrics. Reference metrics (PSNR, SSIM, SAM, ERGAS)
// compare a prediction against ground truth; the no-reference protocol
// (D_lambda, D_s, QNR) scores a full-resolution fusion against its inputs.
// All internal arithmetic runs in double regardless of the tensor type.
//
// Conventions, fixed here because the literature varies:
//   PSNR    10*log10(1/MSE) over all bands, capped at 99.0 dB
//   SSIM    11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03 L=1,
//           valid-region windows, band average
//   SAM     mean spectral angle in radians; zero-norm pixels count as 0
//   ERGAS   (100/r) * sqrt(mean_b (RMSE_b / mean_b(gt))^2)
//   Q       Wang-Bovik index on 32x32 non-overlapping blocks (whole image
//           when smaller), sample statistics; D_lambda/D_s exponents p=q=1

namespace pansharp {

struct MetricsReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double sam = 0.0;
    double ergas = 0.0;
    double d_lambda = 0.0;
    double d_s = 0.0;
    double qnr = 0.0;
    bool has_reference = false;
    bool has_no_reference = false;

    std::string to_kv() const {
        std::ostringstream os;
        os.precision(10);
        if (has_reference)
            os << "psnr=" << psnr << "\nssim=" << ssim << "\nsam=" << sam << "\nergas=" << ergas << "\n";
        if (has_no_reference)
            os << "d_lambda=" << d_lambda << "\nd_s=" << d_s << "\nqnr=" << qnr << "\n";
        return os.str();
    }

    static std::string csv_header() { return "psnr,ssim,sam,ergas,d_lambda,d_s,qnr"; }

    std::string to_csv_row() const {
        std::ostringstream os;
        os.precision(10);
        auto cell = [&os](bool present, double v) {
            if (present) os << v;
        };
        cell(has_reference, psnr);
        os << ",";
        cell(has_reference, ssim);
        os << ",";
        cell(has_reference, sam);
        os << ",";
        cell(has_reference, ergas);
        os << ",";
        cell(has_no_reference, d_lambda);
        os << ",";
        cell(has_no_reference, d_s);
        os << ",";
        cell(has_no_reference, qnr);
        return os.str();
    }
};

inline constexpr double kPsnrCap = 99.0;

template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt) {
    check_same_shape(pred.shape(), gt.shape(), "psnr");
    const T* p = pred.data();
    const T* q = gt.data();
    const int64_t n = pred.numel();
    double mse = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> ssim_window() {
    constexpr int kSide = 11;
    constexpr double kSigma = 1.5;
    std::vector<double> w(kSide * kSide);
    double sum = 0.0;
    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            const double dy = y - 5, dx = x - 5;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            w[static_cast<size_t>(y * kSide + x)] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& gt) {
    check_same_shape(pred.shape(), gt.shape(), "ssim");
    if (pred.rank() != 3) throw DimensionError("ssim: images must be [S,H,W]");
    const int64_t S = pred.dim(0), H = pred.dim(1), W = pred.dim(2);
    constexpr int64_t kSide = 11;
    if (H < kSide || W < kSide)
        throw UsageError("ssim: image smaller than the 11x11 window: " + shape_str(pred.shape()));
    constexpr double C1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
    constexpr double C2 = 0.03 * 0.03;
    const std::vector<double> win = detail::ssim_window();

    double band_sum = 0.0;
    for (int64_t s = 0; s < S; ++s) {
        const T* a = pred.data() + s * H * W;
        const T* b = gt.data() + s * H * W;
        double acc = 0.0;
        int64_t count = 0;
        for (int64_t y = 0; y + kSide <= H; ++y) {
            for (int64_t x = 0; x + kSide <= W; ++x) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int64_t v = 0; v < kSide; ++v) {
                    for (int64_t u = 0; u < kSide; ++u) {
                        const double w = win[static_cast<size_t>(v * kSide + u)];
                        const double pa = static_cast<double>(a[(y + v) * W + x + u]);
                        const double pb = static_cast<double>(b[(y + v) * W + x + u]);
                        mx += w * pa;
                        my += w * pb;
                        mxx += w * pa * pa;
                        myy += w * pb * pb;
                        mxy += w * pa * pb;
                    }
                }
                const double vx = mxx - mx * mx;
                const double vy = myy - my * my;
                const double cxy = mxy - mx * my;
                acc += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                ++count;
            }
        }
        band_sum += acc / static_cast<double>(count);
    }
    return band_sum / static_cast<double>(S);
}

template <typename T>
double sam(const Tensor<T>& pred, const Tensor<T>& gt) {
    check_same_shape(pred.shape(), gt.shape(), "sam");
    if (pred.rank() != 3) throw DimensionError("sam: images must be [S,H,W]");
    const int64_t S = pred.dim(0), HW = pred.dim(1) * pred.dim(2);
    const T* p = pred.data();
    const T* q = gt.data();
    double acc = 0.0;
    for (int64_t i = 0; i < HW; ++i) {
        double dot = 0, np = 0, ng = 0;
        for (int64_t s = 0; s < S; ++s) {
            const double a = static_cast<double>(p[s * HW + i]);
            const double b = static_cast<double>(q[s * HW + i]);
            dot += a * b;
            np += a * a;
            ng += b * b;
        }
        if (np == 0.0 || ng == 0.0) continue;  // zero-vector pixels: angle 0
        double c = dot / (std::sqrt(np) * std::sqrt(ng));
        c = std::min(1.0, std::max(-1.0, c));
        acc += std::acos(c);
    }
    return acc / static_cast<double>(HW);
}

template <typename T>
double ergas(const Tensor<T>& pred, const Tensor<T>& gt, int64_t r) {
    check_same_shape(pred.shape(), gt.shape(), "ergas");
    if (pred.rank() != 3) throw DimensionError("ergas: images must be [S,H,W]");
    const int64_t S = pred.dim(0), HW = pred.dim(1) * pred.dim(2);
    double acc = 0.0;
    for (int64_t s = 0; s < S; ++s) {
        const T* p = pred.data() + s * HW;
        const T* q = gt.data() + s * HW;
        double mse = 0.0, mean = 0.0;
        for (int64_t i = 0; i < HW; ++i) {
            const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
            mse += d * d;
            mean += static_cast<double>(q[i]);
        }
        mse /= static_cast<double>(HW);
        mean /= static_cast<double>(HW);
        if (mean == 0.0) throw NumericError("ergas: band " + std::to_string(s) + " of gt has zero mean");
        acc += mse / (mean * mean);
    }
    return (100.0 / static_cast<double>(r)) * std::sqrt(acc / static_cast<double>(S));
}

// ---------------------------------------------------------------------------
// no-reference protocol

namespace detail {

// Wang-Bovik Q over one block, sample (n-1) statistics.
inline double q_index_block(const double* x, const double* y, int64_t n) {
    double mx = 0, my = 0;
    for (int64_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cxy = 0;
    for (int64_t i = 0; i < n; ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cxy += (x[i] - mx) * (y[i] - my);
    }
    vx /= static_cast<double>(n - 1);
    vy /= static_cast<double>(n - 1);
    cxy /= static_cast<double>(n - 1);
    const double num = 4.0 * cxy * mx * my;
    const double den = (vx + vy) * (mx * mx + my * my);
    if (den == 0.0) return num == 0.0 ? 1.0 : 0.0;
    return num / den;
}

// Mean Q over 32x32 non-overlapping blocks, one whole-image block when the
// image is smaller; ragged right/bottom remainders are skipped.
inline double q_index(const double* x, const double* y, int64_t H, int64_t W) {
    constexpr int64_t kBlock = 32;
    if (H < kBlock || W < kBlock) {
        std::vector<double> bx(static_cast<size_t>(H * W)), by(static_cast<size_t>(H * W));
        std::copy(x, x + H * W, bx.begin());
        std::copy(y, y + H * W, by.begin());
        return q_index_block(bx.data(), by.data(), H * W);
    }
    double acc = 0.0;
    int64_t count = 0;
    std::vector<double> bx(kBlock * kBlock), by(kBlock * kBlock);
    for (int64_t y0 = 0; y0 + kBlock <= H; y0 += kBlock) {
        for (int64_t x0 = 0; x0 + kBlock <= W; x0 += kBlock) {
            for (int64_t v = 0; v < kBlock; ++v) {
                for (int64_t u = 0; u < kBlock; ++u) {
                    bx[static_cast<size_t>(v * kBlock + u)] = x[(y0 + v) * W + x0 + u];
                    by[static_cast<size_t>(v * kBlock + u)] = y[(y0 + v) * W + x0 + u];
                }
            }
            acc += q_index_block(bx.data(), by.data(), kBlock * kBlock);
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

template <typename T>
std::vector<double> band_as_double(const Tensor<T>& img, int64_t band) {
    const int64_t HW = img.dim(1) * img.dim(2);
    std::vector<double> out(static_cast<size_t>(HW));
    const T* p = img.data() + band * HW;
    for (int64_t i = 0; i < HW; ++i) out[static_cast<size_t>(i)] = static_cast<double>(p[i]);
    return out;
}

}  // namespace detail

struct QnrResult {
    double d_lambda = 0.0;
    double d_s = 0.0;
    double qnr = 0.0;
};

// fused [S,H,W], lrms [S,h,w], pan [1,H,W] with H = r*h, W = r*w.
template <typename T>
QnrResult qnr(const Tensor<T>& fused, const Tensor<T>& lrms, const Tensor<T>& pan, int64_t r) {
    if (fused.rank() != 3 || lrms.rank() != 3 || pan.rank() != 3 || pan.dim(0) != 1)
        throw DimensionError("qnr: expected fused [S,H,W], lrms [S,h,w], pan [1,H,W]");
    const int64_t S = fused.dim(0), H = fused.dim(1), W = fused.dim(2);
    const int64_t h = lrms.dim(1), w = lrms.dim(2);
    if (lrms.dim(0) != S || h * r != H || w * r != W || pan.dim(1) != H || pan.dim(2) != W)
        throw DimensionError("qnr: shapes inconsistent with ratio " + std::to_string(r));

    std::vector<std::vector<double>> fb(static_cast<size_t>(S)), lb(static_cast<size_t>(S));
    for (int64_t s = 0; s < S; ++s) {
        fb[static_cast<size_t>(s)] = detail::band_as_double(fused, s);
        lb[static_cast<size_t>(s)] = detail::band_as_double(lrms, s);
    }

    // spectral distortion: inter-band Q drift between scales (p = 1)
    double dl = 0.0;
    int64_t pairs = 0;
    for (int64_t i = 0; i < S; ++i) {
        for (int64_t j = i + 1; j < S; ++j) {
            const double qf =
                detail::q_index(fb[static_cast<size_t>(i)].data(), fb[static_cast<size_t>(j)].data(), H, W);
            const double ql =
                detail::q_index(lb[static_cast<size_t>(i)].data(), lb[static_cast<size_t>(j)].data(), h, w);
            dl += std::abs(qf - ql);
            ++pairs;
        }
    }
    if (pairs > 0) dl /= static_cast<double>(pairs);

    // spatial distortion: per-band Q against pan at each scale (q = 1)
    Tensor<T> pan_deg = blur_decimate(pan, r);
    const std::vector<double> pb = detail::band_as_double(pan, 0);
    const std::vector<double> pdb = detail::band_as_double(pan_deg, 0);
    double ds = 0.0;
    for (int64_t s = 0; s < S; ++s) {
        const double qf = detail::q_index(fb[static_cast<size_t>(s)].data(), pb.data(), H, W);
        const double ql = detail::q_index(lb[static_cast<size_t>(s)].data(), pdb.data(), h, w);
        ds += std::abs(qf - ql);
    }
    ds /= static_cast<double>(S);

    QnrResult out;
    out.d_lambda = dl;
    out.d_s = ds;
    out.qnr = (1.0 - dl) * (1.0 - ds);
    return out;
}

template <typename T>
MetricsReport reference_metrics(const Tensor<T>& pred, const Tensor<T>& gt, int64_t r) {
    MetricsReport rep;
    rep.has_reference = true;
    rep.psnr = psnr(pred, gt);
    rep.ssim = ssim(pred, gt);
    rep.sam = sam(pred, gt);
    rep.ergas = ergas(pred, gt, r);
    return rep;
}

}  // namespace pansharp
