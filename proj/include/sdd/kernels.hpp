#pragma once

#include <cstdint>
#include <vector>

// OpenMP-parallel compute kernels. Every parallel loop assigns each output
// element to exactly one iteration and keeps the inner accumulation order
// fixed, so results are bitwise identical for any thread count. Tensors are
// dense row-major; conv semantics are cross-correlation with stride 1.
namespace sdd::kernels {

using i64 = std::int64_t;

// y[N,Cout,Ho,Wo], Ho = H + 2*padH - kH + 1, Wo = W + 2*padW - kW + 1.
// bias may be null.
void conv2d_fwd(const double* x, const double* w, const double* bias, double* y,
                i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                i64 padH, i64 padW);

void conv2d_bwd_input(const double* gy, const double* w, double* gx,
                      i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                      i64 padH, i64 padW);

void conv2d_bwd_weight(const double* gy, const double* x, double* gw,
                       i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                       i64 padH, i64 padW);

void conv2d_bwd_bias(const double* gy, double* gb, i64 N, i64 Cout, i64 Ho, i64 Wo);

// Non-overlapping max pool, floor division; records flat argmax per output cell.
void maxpool2d_fwd(const double* x, double* y, i64* argmax,
                   i64 N, i64 C, i64 H, i64 W, i64 ph, i64 pw);

void maxpool2d_bwd(const double* gy, const i64* argmax, double* gx,
                   i64 n_out, i64 n_in);

// Adaptive max pool to a g x g grid per level; bins are
// [floor(i*H/g), ceil((i+1)*H/g)) x [floor(j*W/g), ceil((j+1)*W/g)).
// Output per sample: channel-major, levels in order, row-major grid cells.
void spp_fwd(const double* x, double* y, i64* argmax,
             i64 N, i64 C, i64 H, i64 W, const std::vector<i64>& levels);

// NC = N*C channel slices, T = bins per channel.
void spp_bwd(const double* gy, const i64* argmax, double* gx, i64 NC, i64 T, i64 n_in);

// y[N,Dout] = x[N,Din] * w[Dout,Din]^T + b
void dense_fwd(const double* x, const double* w, const double* b, double* y,
               i64 N, i64 Din, i64 Dout);
void dense_bwd_input(const double* gy, const double* w, double* gx, i64 N, i64 Din, i64 Dout);
void dense_bwd_weight(const double* gy, const double* x, double* gw, i64 N, i64 Din, i64 Dout);
void dense_bwd_bias(const double* gy, double* gb, i64 N, i64 Dout);

void relu_fwd(const double* x, double* y, i64 n);
void relu_bwd(const double* x, const double* gy, double* gx, i64 n);

// Per-channel mean and biased variance over (N, H, W).
void bn2d_stats(const double* x, i64 N, i64 C, i64 HW, double* mean, double* var);
// y = (x - mean) * invstd * gamma + beta
void bn2d_fwd(const double* x, const double* mean, const double* invstd,
              const double* gamma, const double* beta, double* y,
              i64 N, i64 C, i64 HW);
// xhat is recomputed from x, mean and invstd
void bn2d_bwd(const double* gy, const double* x, const double* mean,
              const double* gamma, const double* invstd, double* gx,
              double* ggamma, double* gbeta, i64 N, i64 C, i64 HW, bool batch_stats);

}  // namespace sdd::kernels
