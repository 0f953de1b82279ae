#pragma once

#include "pansharp/metrics.hpp"
#include "pansharp/network.hpp"

// Deterministic optimization loop: seeded shuffling, L1 loss, global-norm
// gradient clipping, bias-corrected Adam, cosine learning-rate decay per
// epoch. With a fixed seed two runs produce bit-identical parameter
// trajectories on the same machine.

namespace pansharp {

// Mean absolute error with the sign subgradient (0 at ties).
template <typename T>
Tensor<T> l1_loss(Graph<T>* g, const Tensor<T>& pred, const Tensor<T>& gt) {
    check_same_shape(pred.shape(), gt.shape(), "l1_loss");
    const T* p = pred.data();
    const T* q = gt.data();
    const int64_t n = pred.numel();
    std::vector<T> absdiff(static_cast<size_t>(n));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) absdiff[static_cast<size_t>(i)] = std::abs(p[i] - q[i]);
    Tensor<T> out = Tensor<T>::scalar(det_sum(absdiff.data(), n) / static_cast<T>(n));
    if (g && (pred.requires_grad() || gt.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> pc = pred, qc = gt, oc = out;
        g->record([pc, qc, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const T dy = oc.grad()[0] / static_cast<T>(n);
            const T* pp = pc.data();
            const T* qq = qc.data();
            if (pc.requires_grad()) {
                T* dp = pc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < n; ++i) {
                    const T d = pp[i] - qq[i];
                    if (d > T(0))
                        dp[i] += dy;
                    else if (d < T(0))
                        dp[i] -= dy;
                }
            }
            if (qc.requires_grad()) {
                T* dq = qc.grad();
#pragma omp parallel for schedule(static)
                for (int64_t i = 0; i < n; ++i) {
                    const T d = pp[i] - qq[i];
                    if (d > T(0))
                        dq[i] -= dy;
                    else if (d < T(0))
                        dq[i] += dy;
                }
            }
        });
    }
    return out;
}

// lr = lr_final + (lr_init - lr_final)/2 * (1 + cos(pi * step/total)).
// The endpoints are returned exactly rather than through the formula.
inline double cosine_lr_at(int64_t step, int64_t total, double lr_init, double lr_final) {
    if (step <= 0) return lr_init;
    if (step >= total) return lr_final;
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(M_PI * t));
}

inline double cosine_lr(int64_t epoch, const TrainConfig& cfg) {
    return cosine_lr_at(epoch, cfg.epochs, cfg.lr_init, cfg.lr_final);
}

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& params, double max_norm) {
    if (!(max_norm > 0)) throw UsageError("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (auto& t : params) {
        if (!t.has_grad()) continue;
        const T* gp = t.grad();
        std::vector<double> local(static_cast<size_t>(t.numel()));
        for (int64_t i = 0; i < t.numel(); ++i)
            local[static_cast<size_t>(i)] = static_cast<double>(gp[i]) * static_cast<double>(gp[i]);
        sq += det_sum(local.data(), t.numel());
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (auto& t : params) {
            if (!t.has_grad()) continue;
            T* gp = t.grad();
            const int64_t n = t.numel();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < n; ++i) gp[i] *= s;
        }
    }
    return norm;
}

template <typename T>
double global_grad_norm(std::vector<Tensor<T>>& params) {
    double sq = 0.0;
    for (auto& t : params) {
        if (!t.has_grad()) continue;
        const T* gp = t.grad();
        std::vector<double> local(static_cast<size_t>(t.numel()));
        for (int64_t i = 0; i < t.numel(); ++i)
            local[static_cast<size_t>(i)] = static_cast<double>(gp[i]) * static_cast<double>(gp[i]);
        sq += det_sum(local.data(), t.numel());
    }
    return std::sqrt(sq);
}

template <typename T>
struct OptimizerState {
    std::vector<std::vector<T>> m, v;  // first/second moments per parameter
    int64_t step = 0;

    static OptimizerState init(const std::vector<Tensor<T>>& params) {
        OptimizerState s;
        for (const auto& t : params) {
            s.m.emplace_back(static_cast<size_t>(t.numel()), T(0));
            s.v.emplace_back(static_cast<size_t>(t.numel()), T(0));
        }
        return s;
    }
};

// Bias-corrected Adam update; parameters without gradients still decay
// their moments.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != params.size())
        throw UsageError("adam_step: optimizer state does not match parameter list");
    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& t = params[pi];
        const int64_t n = t.numel();
        if (static_cast<int64_t>(state.m[pi].size()) != n)
            throw UsageError("adam_step: moment shape mismatch at parameter " + std::to_string(pi));
        const T* gp = t.has_grad() ? t.grad() : nullptr;
        T* mp = state.m[pi].data();
        T* vp = state.v[pi].data();
        T* xp = t.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            const double gv = gp ? static_cast<double>(gp[i]) : 0.0;
            const double mi = b1 * static_cast<double>(mp[i]) + (1.0 - b1) * gv;
            const double vi = b2 * static_cast<double>(vp[i]) + (1.0 - b2) * gv * gv;
            mp[i] = static_cast<T>(mi);
            vp[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            xp[i] = static_cast<T>(static_cast<double>(xp[i]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
    }
}

// ---------------------------------------------------------------------------
// training loop

struct StepRecord {
    int64_t epoch = 0;
    int64_t step = 0;  // global step index
    double lr = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;       // pre-clip global norm
    double post_clip_norm = 0.0;  // recomputed after clipping
};

struct EvalRecord {
    int64_t epoch = 0;
    MetricsReport metrics;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << "epoch,step,lr,loss,grad_norm,post_clip_norm," << MetricsReport::csv_header() << "\n";
        size_t ei = 0;
        for (size_t i = 0; i < steps.size(); ++i) {
            const StepRecord& s = steps[i];
            os << s.epoch << "," << s.step << "," << s.lr << "," << s.loss << "," << s.grad_norm << ","
               << s.post_clip_norm << ",,,,,,,\n";
            const bool epoch_ends = i + 1 == steps.size() || steps[i + 1].epoch != s.epoch;
            while (epoch_ends && ei < evals.size() && evals[ei].epoch <= s.epoch) {
                os << evals[ei].epoch << ",,,,,," << evals[ei].metrics.to_csv_row() << "\n";
                ++ei;
            }
        }
        return os.str();
    }
};

namespace detail {

template <typename T>
void stack_batch(const std::vector<ImageTriple<T>>& data, const std::vector<int64_t>& idx, int64_t lo,
                 int64_t hi, Tensor<T>& pan, Tensor<T>& lrms, Tensor<T>& gt) {
    const int64_t B = hi - lo;
    const auto& first = data[static_cast<size_t>(idx[static_cast<size_t>(lo)])];
    const int64_t S = first.lrms.dim(0);
    pan = Tensor<T>({B, 1, first.pan.dim(1), first.pan.dim(2)});
    lrms = Tensor<T>({B, S, first.lrms.dim(1), first.lrms.dim(2)});
    gt = Tensor<T>({B, S, first.gt.dim(1), first.gt.dim(2)});
    for (int64_t b = 0; b < B; ++b) {
        const auto& t = data[static_cast<size_t>(idx[static_cast<size_t>(lo + b)])];
        std::memcpy(pan.data() + b * t.pan.numel(), t.pan.data(), sizeof(T) * t.pan.numel());
        std::memcpy(lrms.data() + b * t.lrms.numel(), t.lrms.data(), sizeof(T) * t.lrms.numel());
        std::memcpy(gt.data() + b * t.gt.numel(), t.gt.data(), sizeof(T) * t.gt.numel());
    }
}

}  // namespace detail

// Trains in place. Progress callback (may be null) receives each step
// record as it is produced.
template <typename T>
TrainLog train(PanMambaModel<T>& model, const std::vector<ImageTriple<T>>& dataset, const TrainConfig& cfg,
               const std::function<void(const StepRecord&)>& on_step = nullptr) {
    cfg.validate();
    if (dataset.empty()) throw UsageError("train: dataset is empty");
    const NetworkConfig& net = model.cfg;
    const auto& first = dataset.front();
    for (const auto& t : dataset) {
        if (!t.has_gt()) throw UsageError("train: dataset item lacks ground truth");
        if (t.lrms.dim(0) != net.ms_bands)
            throw DimensionError("train: lrms bands " + std::to_string(t.lrms.dim(0)) +
                                 " do not match the model config (" + std::to_string(net.ms_bands) + ")");
        if (t.pan.dim(1) != net.scale * t.lrms.dim(1) || t.pan.dim(2) != net.scale * t.lrms.dim(2))
            throw DimensionError("train: pan/lrms ratio does not match the model scale");
        if (t.gt.shape() != std::vector<int64_t>{net.ms_bands, t.pan.dim(1), t.pan.dim(2)})
            throw DimensionError("train: gt shape inconsistent with pan resolution");
        if (t.pan.shape() != first.pan.shape() || t.lrms.shape() != first.lrms.shape())
            throw DimensionError("train: all dataset items must share one shape");
    }

    auto named = named_params(model);
    std::vector<Tensor<T>> params;
    for (auto& [name, t] : named) {
        (void)name;
        params.push_back(t);
    }
    OptimizerState<T> opt = OptimizerState<T>::init(params);
    Rng rng(cfg.seed);

    // The per-epoch schedule spans [0, epochs-1] so the logged trace starts
    // at lr_init and ends at lr_final exactly.
    const int64_t denom = std::max<int64_t>(1, cfg.epochs - 1);

    TrainLog log;
    std::vector<int64_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

    int64_t gstep = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr_at(epoch, denom, cfg.lr_init, cfg.lr_final);
        rng.shuffle(order);
        for (int64_t lo = 0; lo < static_cast<int64_t>(order.size()); lo += cfg.batch_size) {
            const int64_t hi = std::min<int64_t>(static_cast<int64_t>(order.size()), lo + cfg.batch_size);
            Tensor<T> pan, lrms, gt;
            detail::stack_batch(dataset, order, lo, hi, pan, lrms, gt);

            zero_grads(model);
            Graph<T> g;
            Tensor<T> out = forward(model, pan, lrms, &g);
            Tensor<T> loss = l1_loss(&g, out, gt);
            g.backward(loss);

            StepRecord rec;
            rec.epoch = epoch;
            rec.step = gstep++;
            rec.lr = lr;
            rec.loss = static_cast<double>(loss.item());
            rec.grad_norm = clip_global_norm(params, cfg.clip_norm);
            rec.post_clip_norm = global_grad_norm(params);
            adam_step(params, opt, lr, cfg);
            log.steps.push_back(rec);
            if (on_step) on_step(rec);
        }
        const bool last = epoch == cfg.epochs - 1;
        if (cfg.eval_every > 0 && (epoch % cfg.eval_every == cfg.eval_every - 1 || last)) {
            const auto& t = dataset.front();
            Tensor<T> pan = t.pan.reshaped({1, 1, t.pan.dim(1), t.pan.dim(2)});
            Tensor<T> lrms = t.lrms.reshaped({1, net.ms_bands, t.lrms.dim(1), t.lrms.dim(2)});
            Tensor<T> out = forward(model, pan, lrms);
            Tensor<T> pred = out.reshaped({net.ms_bands, t.pan.dim(1), t.pan.dim(2)});
            EvalRecord ev;
            ev.epoch = epoch;
            ev.metrics = reference_metrics(pred, t.gt, net.scale);
            log.evals.push_back(ev);
        }
    }
    return log;
}

}  // namespace pansharp
