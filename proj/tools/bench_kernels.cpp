// Times the OpenMP kernels against the serial reference implementations on
// the shapes the two models actually run.

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "sdd/audio.hpp"
#include "sdd/kernels.hpp"
#include "sdd/reference.hpp"
#include "sdd/rng.hpp"

using sdd::i64;

namespace {

std::vector<double> random_vec(i64 n, sdd::Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    return v;
}

double time_best_of(const std::function<void()>& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best;
}

void report(const std::string& name, double serial_s, double omp_s, double gflop) {
    std::printf("%-34s %9.2f ms %9.2f ms %7.2fx %8.2f GF/s\n", name.c_str(), serial_s * 1e3,
                omp_s * 1e3, serial_s / omp_s, gflop / omp_s);
}

}  // namespace

int main() {
    sdd::Rng rng(42);
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-34s %12s %12s %8s %13s\n", "kernel", "serial", "openmp", "speedup", "throughput");

    {
        // vowel CNN block 2: conv (3,1) on (64,63,28), batch 16
        const i64 N = 16, Cin = 64, H = 63, W = 28, Cout = 64, kH = 3, kW = 1;
        const auto x = random_vec(N * Cin * H * W, rng);
        const auto w = random_vec(Cout * Cin * kH * kW, rng);
        const auto b = random_vec(Cout, rng);
        const i64 Ho = H - kH + 1;
        std::vector<double> y(static_cast<std::size_t>(N * Cout * Ho * W));
        const double gflop = 2.0 * N * Cout * Ho * W * Cin * kH * kW / 1e9;
        const double ts = time_best_of([&] {
            sdd::ref::conv2d_fwd(x.data(), w.data(), b.data(), y.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 3);
        const double tp = time_best_of([&] {
            sdd::kernels::conv2d_fwd(x.data(), w.data(), b.data(), y.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 5);
        report("conv2d fwd 16x(64,63,28) k(3,1)", ts, tp, gflop);

        std::vector<double> gy = random_vec(N * Cout * Ho * W, rng);
        std::vector<double> gx(x.size());
        const double ts2 = time_best_of([&] {
            sdd::ref::conv2d_bwd_input(gy.data(), w.data(), gx.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 3);
        const double tp2 = time_best_of([&] {
            sdd::kernels::conv2d_bwd_input(gy.data(), w.data(), gx.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 5);
        report("conv2d bwd-input same shape", ts2, tp2, gflop);

        std::vector<double> gw(w.size());
        const double ts3 = time_best_of([&] {
            sdd::ref::conv2d_bwd_weight(gy.data(), x.data(), gw.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 3);
        const double tp3 = time_best_of([&] {
            sdd::kernels::conv2d_bwd_weight(gy.data(), x.data(), gw.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 5);
        report("conv2d bwd-weight same shape", ts3, tp3, gflop);
    }

    {
        // depression CNN conv1: kernel 7 over 42 utterances, batch 16
        const i64 N = 16, Cin = 128, H = 1, W = 42, Cout = 32, kH = 1, kW = 7;
        const auto x = random_vec(N * Cin * W, rng);
        const auto w = random_vec(Cout * Cin * kW, rng);
        const i64 Wo = W - kW + 1;
        std::vector<double> y(static_cast<std::size_t>(N * Cout * Wo));
        const double gflop = 2.0 * N * Cout * Wo * Cin * kW / 1e9;
        const double ts = time_best_of([&] {
            sdd::ref::conv2d_fwd(x.data(), w.data(), nullptr, y.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 5);
        const double tp = time_best_of([&] {
            sdd::kernels::conv2d_fwd(x.data(), w.data(), nullptr, y.data(), N, Cin, H, W, Cout, kH, kW, 0, 0);
        }, 9);
        report("conv1d fwd 16x(128,42) k7", ts, tp, gflop);
    }

    {
        // vowel CNN fc1: 1344 -> 128, batch 64
        const i64 N = 64, Din = 1344, Dout = 128;
        const auto x = random_vec(N * Din, rng);
        const auto w = random_vec(Dout * Din, rng);
        const auto b = random_vec(Dout, rng);
        std::vector<double> y(static_cast<std::size_t>(N * Dout));
        const double gflop = 2.0 * N * Din * Dout / 1e9;
        const double ts = time_best_of([&] {
            sdd::ref::dense_fwd(x.data(), w.data(), b.data(), y.data(), N, Din, Dout);
        }, 5);
        const double tp = time_best_of([&] {
            sdd::kernels::dense_fwd(x.data(), w.data(), b.data(), y.data(), N, Din, Dout);
        }, 9);
        report("dense fwd 64x1344->128", ts, tp, gflop);
    }

    {
        // SPP and max pool on a block-3 map
        const i64 N = 64, C = 64, H = 28, W = 28;
        const auto x = random_vec(N * C * H * W, rng);
        std::vector<double> y(static_cast<std::size_t>(N * C * 21));
        std::vector<i64> arg(y.size());
        const double ts = time_best_of([&] {
            sdd::ref::spp_fwd(x.data(), y.data(), N, C, H, W, {1, 2, 4});
        }, 5);
        const double tp = time_best_of([&] {
            sdd::kernels::spp_fwd(x.data(), y.data(), arg.data(), N, C, H, W, {1, 2, 4});
        }, 9);
        report("spp fwd 64x(64,28,28) {1,2,4}", ts, tp, N * C * H * W * 2.0 / 1e9);

        std::vector<double> yp(static_cast<std::size_t>(N * C * (H / 2) * W));
        std::vector<i64> argp(yp.size());
        const double ts2 = time_best_of([&] {
            sdd::ref::maxpool2d_fwd(x.data(), yp.data(), N, C, H, W, 2, 1);
        }, 5);
        const double tp2 = time_best_of([&] {
            sdd::kernels::maxpool2d_fwd(x.data(), yp.data(), argp.data(), N, C, H, W, 2, 1);
        }, 9);
        report("max_pool (2,1) same shape", ts2, tp2, N * C * H * W / 1e9);
    }

    {
        // log-Mel of a 450 ms utterance vs the naive-DFT reference
        const i64 sr = 16000;
        const i64 n = sr * 45 / 100;
        auto wav = random_vec(n, rng);
        sdd::LogMelExtractor ex({}, static_cast<int>(sr));
        const auto cfg = ex.config();
        const i64 frames = 1 + (n - cfg.n_fft) / cfg.hop;
        const double ts = time_best_of([&] {
            std::vector<double> win(static_cast<std::size_t>(cfg.n_fft));
            std::vector<double> power(static_cast<std::size_t>(cfg.n_fft / 2 + 1));
            for (i64 t = 0; t < frames; ++t) {
                for (i64 i = 0; i < cfg.n_fft; ++i) {
                    win[static_cast<std::size_t>(i)] = wav[static_cast<std::size_t>(t * cfg.hop + i)];
                }
                sdd::ref::dft_power(win.data(), cfg.n_fft, power.data());
            }
        }, 2);
        const double tp = time_best_of([&] { ex.compute(wav.data(), n); }, 5);
        report("log-mel 450 ms (vs naive DFT)", ts, tp, 0.0);
    }

    return 0;
}
