// Times the OpenMP kernels against the serial reference path and checks that
// both produce bit-identical results.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "asmr/diffnet.hpp"
#include "asmr/objective.hpp"
#include "asmr/rng.hpp"

using namespace asmr;

namespace {

double time_ms(const std::function<void()>& fn, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

bool bytes_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms,
                identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
    Rng rng(7);

    {
        Matrix A(128, 2048), B(512, 2048);
        for (double& v : A.data) v = rng.normal();
        for (double& v : B.data) v = rng.normal();
        Matrix C_serial(128, 512), C_parallel(128, 512);
        set_parallel_kernels(false);
        const double ts = time_ms([&] { gemm_nt(A, B, C_serial); });
        set_parallel_kernels(true);
        const double tp = time_ms([&] { gemm_nt(A, B, C_parallel); });
        report("gemm_nt 128x2048 * 2048x512", ts, tp, bytes_equal(C_serial, C_parallel));
    }

    {
        Rng init_rng(11);
        EncoderNet net = make_encoder({2048, 512, 128, 128}, true, init_rng);
        Matrix X(128, 2048);
        for (double& v : X.data) v = rng.normal();
        Matrix up(128, 128);
        for (double& v : up.data) v = rng.normal();

        ForwardCache cache_s, cache_p;
        NetGrads grads_s = NetGrads::like(net), grads_p = NetGrads::like(net);
        set_parallel_kernels(false);
        const double ts = time_ms([&] {
            cache_s = ForwardCache{};
            grads_s.zero();
            forward_batch(net, X, cache_s);
            backward_batch(net, cache_s, up, grads_s);
        });
        set_parallel_kernels(true);
        const double tp = time_ms([&] {
            cache_p = ForwardCache{};
            grads_p.zero();
            forward_batch(net, X, cache_p);
            backward_batch(net, cache_p, up, grads_p);
        });
        bool same = bytes_equal(cache_s.output, cache_p.output);
        for (std::size_t l = 0; l < grads_s.layers.size(); ++l)
            same = same && bytes_equal(grads_s.layers[l].d_weight, grads_p.layers[l].d_weight);
        report("encoder fwd+bwd, batch 128", ts, tp, same);
    }

    {
        // unit-norm prototypes for the pair regularizer and the alignment loss
        const std::size_t n = 300, d = 128, m = 128;
        Matrix G(n, d);
        for (double& v : G.data) v = rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) sq += G(i, j) * G(i, j);
            const double nrm = std::sqrt(sq);
            for (std::size_t j = 0; j < d; ++j) G(i, j) /= nrm;
        }
        Matrix F(m, d);
        for (double& v : F.data) v = rng.normal();
        for (std::size_t i = 0; i < m; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) sq += F(i, j) * F(i, j);
            const double nrm = std::sqrt(sq);
            for (std::size_t j = 0; j < d; ++j) F(i, j) /= nrm;
        }
        std::vector<std::size_t> assign(m);
        for (std::size_t i = 0; i < m; ++i) assign[i] = rng.below(n);

        MaResult r_serial, r_parallel;
        set_parallel_kernels(false);
        const double ts = time_ms([&] { r_serial = ma_loss(F, assign, G, 16.0, 0.1); });
        set_parallel_kernels(true);
        const double tp = time_ms([&] { r_parallel = ma_loss(F, assign, G, 16.0, 0.1); });
        const bool same = r_serial.value == r_parallel.value &&
                          bytes_equal(r_serial.d_images, r_parallel.d_images) &&
                          bytes_equal(r_serial.d_prototypes, r_parallel.d_prototypes);
        report("ma_loss m=128 |G|=300", ts, tp, same);
    }

    set_parallel_kernels(true);
    return 0;
}
