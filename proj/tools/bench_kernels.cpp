// Kernel benchmark: OpenMP production kernels against their serial
// references across problem sizes. Prints one row per (kernel, size) with
// wall time for both paths and the speedup.

#include <chrono>
#include <iostream>

#include "pansharp/blocks.hpp"

using namespace pansharp;

namespace {

double time_once(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) best = std::min(best, time_once(fn));
    return best;
}

Tensor<double> rand_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

int main() {
    apply_thread_env();
    std::cout << "threads: " << max_threads() << "\n";
    std::cout << "kernel            size            serial_s    parallel_s  speedup\n";

    Rng rng(42);
    for (int64_t n : {4096, 16384, 65536}) {
        const int64_t B = 1, P = 64, K = 16;
        Tensor<double> A_bar = rand_tensor({B, n, P, K}, rng);
        for (int64_t i = 0; i < A_bar.numel(); ++i) A_bar.data()[i] = 0.5 + 0.49 * std::abs(A_bar.data()[i]);
        Tensor<double> B_bar = rand_tensor({B, n, P, K}, rng);
        Tensor<double> C = rand_tensor({B, n, K}, rng);
        Tensor<double> x = rand_tensor({B, n, P}, rng);
        const double ts = time_best_of(3, [&] { selective_scan_sequential(A_bar, B_bar, C, x); });
        const double tp = time_best_of(3, [&] { selective_scan<double>(nullptr, A_bar, B_bar, C, x); });
        std::cout << "selective_scan    N=" << n << " P=" << P << " K=" << K << "   " << ts << "   " << tp
                  << "   " << ts / tp << "\n";
    }

    for (int64_t hw : {64, 128, 256}) {
        const int64_t Ci = 4, Co = 32;
        Tensor<double> x = rand_tensor({1, Ci, hw, hw}, rng);
        Tensor<double> w = rand_tensor({Co, Ci, 3, 3}, rng);
        Tensor<double> b = rand_tensor({Co}, rng);
        // serial reference: identical loops, no worker pool
        auto serial = [&] {
            Tensor<double> out({1, Co, hw, hw});
            for (int64_t co = 0; co < Co; ++co)
                for (int64_t h = 0; h < hw; ++h)
                    for (int64_t wx = 0; wx < hw; ++wx) {
                        double acc = b.data()[co];
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            for (int64_t u = 0; u < 3; ++u)
                                for (int64_t v = 0; v < 3; ++v) {
                                    const int64_t hh = h + u - 1, ww = wx + v - 1;
                                    if (hh < 0 || hh >= hw || ww < 0 || ww >= hw) continue;
                                    acc += w.data()[((co * Ci + ci) * 3 + u) * 3 + v] *
                                           x.data()[(ci * hw + hh) * hw + ww];
                                }
                        out.data()[(co * hw + h) * hw + wx] = acc;
                    }
        };
        const double ts = time_best_of(3, serial);
        const double tp = time_best_of(3, [&] { conv2d<double>(nullptr, x, w, b); });
        std::cout << "conv2d 3x3        " << hw << "x" << hw << " " << Ci << "->" << Co << "   " << ts << "   "
                  << tp << "   " << ts / tp << "\n";
    }
    return 0;
}
