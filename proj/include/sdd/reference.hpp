#pragma once

#include <cstdint>
#include <vector>

// Plain serial implementations of the hot kernels, written as direct loop
// transcriptions of the definitions. Kept as the oracle the OpenMP kernels
// are tested against, and as the baseline for the bench tool.
namespace sdd::ref {

using i64 = std::int64_t;

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y,
                i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                i64 padH, i64 padW);

void conv2d_bwd_input(const double* gy, const double* w, double* gx,
                      i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                      i64 padH, i64 padW);

void conv2d_bwd_weight(const double* gy, const double* x, double* gw,
                       i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                       i64 padH, i64 padW);

void maxpool2d_fwd(const double* x, double* y,
                   i64 N, i64 C, i64 H, i64 W, i64 ph, i64 pw);

void spp_fwd(const double* x, double* y,
             i64 N, i64 C, i64 H, i64 W, const std::vector<i64>& levels);

void dense_fwd(const double* x, const double* w, const double* b, double* y,
               i64 N, i64 Din, i64 Dout);

void bn2d_stats(const double* x, i64 N, i64 C, i64 HW, double* mean, double* var);

// Naive O(n^2) DFT; power spectrum of one windowed frame (bins 0..nfft/2).
void dft_power(const double* frame, i64 nfft, double* power);

}  // namespace sdd::ref
