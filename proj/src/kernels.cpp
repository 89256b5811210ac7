#include "sdd/kernels.hpp"

#include <algorithm>
#include <cmath>

// Parallelization rule used throughout: the loop that is split across threads
// owns a disjoint slice of the output, and every accumulation into that slice
// runs in a fixed serial order. Results are therefore bitwise reproducible
// for any OMP_NUM_THREADS.

namespace sdd::kernels {

namespace {
inline i64 conv_out(i64 in, i64 k, i64 pad) { return in + 2 * pad - k + 1; }
}  // namespace

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y,
                i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                i64 padH, i64 padW) {
    const i64 Ho = conv_out(H, kH, padH);
    const i64 Wo = conv_out(W, kW, padW);
    // one sample per thread keeps x[n] and y[n] cache-resident; per-element
    // accumulation order is fixed at (ci, kh, kw)
#pragma omp parallel for schedule(static)
    for (i64 n = 0; n < N; ++n) {
        double* yn = y + n * Cout * Ho * Wo;
        if (bias) {
            for (i64 co = 0; co < Cout; ++co) {
                std::fill(yn + co * Ho * Wo, yn + (co + 1) * Ho * Wo, bias[co]);
            }
        } else {
            std::fill(yn, yn + Cout * Ho * Wo, 0.0);
        }
        for (i64 ci = 0; ci < Cin; ++ci) {
            const double* xc = x + (n * Cin + ci) * H * W;
            for (i64 co = 0; co < Cout; ++co) {
                double* yp = yn + co * Ho * Wo;
                const double* wc = w + (co * Cin + ci) * kH * kW;
                for (i64 kh = 0; kh < kH; ++kh) {
                    const i64 ho_lo = std::max<i64>(0, padH - kh);
                    const i64 ho_hi = std::min<i64>(Ho, H - kh + padH);
                    for (i64 kw = 0; kw < kW; ++kw) {
                        const double coef = wc[kh * kW + kw];
                        const i64 wo_lo = std::max<i64>(0, padW - kw);
                        const i64 wo_hi = std::min<i64>(Wo, W - kw + padW);
                        const i64 len = wo_hi - wo_lo;
                        if (len <= 0) {
                            continue;
                        }
                        for (i64 ho = ho_lo; ho < ho_hi; ++ho) {
                            const double* xrow = xc + (ho + kh - padH) * W + (wo_lo + kw - padW);
                            double* yrow = yp + ho * Wo + wo_lo;
                            for (i64 t = 0; t < len; ++t) {
                                yrow[t] += coef * xrow[t];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_bwd_input(const double* gy, const double* w, double* gx,
                      i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                      i64 padH, i64 padW) {
    const i64 Ho = conv_out(H, kH, padH);
    const i64 Wo = conv_out(W, kW, padW);
#pragma omp parallel for schedule(static)
    for (i64 n = 0; n < N; ++n) {
        double* gxn = gx + n * Cin * H * W;
        std::fill(gxn, gxn + Cin * H * W, 0.0);
        for (i64 co = 0; co < Cout; ++co) {
            const double* gyc = gy + (n * Cout + co) * Ho * Wo;
            for (i64 ci = 0; ci < Cin; ++ci) {
                double* gxp = gxn + ci * H * W;
                const double* wc = w + (co * Cin + ci) * kH * kW;
                for (i64 kh = 0; kh < kH; ++kh) {
                    const i64 ho_lo = std::max<i64>(0, padH - kh);
                    const i64 ho_hi = std::min<i64>(Ho, H - kh + padH);
                    for (i64 kw = 0; kw < kW; ++kw) {
                        const double coef = wc[kh * kW + kw];
                        const i64 wo_lo = std::max<i64>(0, padW - kw);
                        const i64 wo_hi = std::min<i64>(Wo, W - kw + padW);
                        const i64 len = wo_hi - wo_lo;
                        if (len <= 0) {
                            continue;
                        }
                        for (i64 ho = ho_lo; ho < ho_hi; ++ho) {
                            double* gxrow = gxp + (ho + kh - padH) * W + (wo_lo + kw - padW);
                            const double* gyrow = gyc + ho * Wo + wo_lo;
                            for (i64 t = 0; t < len; ++t) {
                                gxrow[t] += coef * gyrow[t];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_bwd_weight(const double* gy, const double* x, double* gw,
                       i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                       i64 padH, i64 padW) {
    const i64 Ho = conv_out(H, kH, padH);
    const i64 Wo = conv_out(W, kW, padW);
    std::fill(gw, gw + Cout * Cin * kH * kW, 0.0);
    // n stays the outer loop so every thread reads the same sample's x slab;
    // each gw[co] accumulates in n order on one thread (static schedule)
    for (i64 n = 0; n < N; ++n) {
        const double* xn = x + n * Cin * H * W;
#pragma omp parallel for schedule(static)
        for (i64 co = 0; co < Cout; ++co) {
            const double* gyc = gy + (n * Cout + co) * Ho * Wo;
            for (i64 ci = 0; ci < Cin; ++ci) {
                const double* xc = xn + ci * H * W;
                double* gwp = gw + (co * Cin + ci) * kH * kW;
                for (i64 kh = 0; kh < kH; ++kh) {
                    const i64 ho_lo = std::max<i64>(0, padH - kh);
                    const i64 ho_hi = std::min<i64>(Ho, H - kh + padH);
                    for (i64 kw = 0; kw < kW; ++kw) {
                        const i64 wo_lo = std::max<i64>(0, padW - kw);
                        const i64 wo_hi = std::min<i64>(Wo, W - kw + padW);
                        const i64 len = wo_hi - wo_lo;
                        if (len <= 0) {
                            continue;
                        }
                        double acc = 0.0;
                        if (len == Wo && len == W) {
                            const double* gyp = gyc + ho_lo * Wo;
                            const double* xp = xc + (ho_lo + kh - padH) * W;
                            const i64 flat = (ho_hi - ho_lo) * len;
#pragma omp simd reduction(+ : acc)
                            for (i64 t = 0; t < flat; ++t) {
                                acc += gyp[t] * xp[t];
                            }
                        } else {
                            for (i64 ho = ho_lo; ho < ho_hi; ++ho) {
                                const double* gyrow = gyc + ho * Wo + wo_lo;
                                const double* xrow = xc + (ho + kh - padH) * W + (wo_lo + kw - padW);
#pragma omp simd reduction(+ : acc)
                                for (i64 t = 0; t < len; ++t) {
                                    acc += gyrow[t] * xrow[t];
                                }
                            }
                        }
                        gwp[kh * kW + kw] += acc;
                    }
                }
            }
        }
    }
}

void conv2d_bwd_bias(const double* gy, double* gb, i64 N, i64 Cout, i64 Ho, i64 Wo) {
#pragma omp parallel for schedule(static)
    for (i64 co = 0; co < Cout; ++co) {
        double acc = 0.0;
        for (i64 n = 0; n < N; ++n) {
            const double* gyc = gy + (n * Cout + co) * Ho * Wo;
            const i64 hw = Ho * Wo;
#pragma omp simd reduction(+ : acc)
            for (i64 t = 0; t < hw; ++t) {
                acc += gyc[t];
            }
        }
        gb[co] = acc;
    }
}

void maxpool2d_fwd(const double* x, double* y, i64* argmax,
                   i64 N, i64 C, i64 H, i64 W, i64 ph, i64 pw) {
    const i64 Ho = H / ph;
    const i64 Wo = W / pw;
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 n = 0; n < N; ++n) {
        for (i64 c = 0; c < C; ++c) {
            const double* xc = x + (n * C + c) * H * W;
            const i64 base = (n * C + c) * H * W;
            double* yc = y + (n * C + c) * Ho * Wo;
            i64* ac = argmax + (n * C + c) * Ho * Wo;
            for (i64 ho = 0; ho < Ho; ++ho) {
                for (i64 wo = 0; wo < Wo; ++wo) {
                    // first occurrence wins ties
                    i64 best = ho * ph * W + wo * pw;
                    double best_v = xc[best];
                    for (i64 kh = 0; kh < ph; ++kh) {
                        for (i64 kw = 0; kw < pw; ++kw) {
                            const i64 idx = (ho * ph + kh) * W + (wo * pw + kw);
                            if (xc[idx] > best_v) {
                                best_v = xc[idx];
                                best = idx;
                            }
                        }
                    }
                    yc[ho * Wo + wo] = best_v;
                    ac[ho * Wo + wo] = base + best;
                }
            }
        }
    }
}

void maxpool2d_bwd(const double* gy, const i64* argmax, double* gx,
                   i64 n_out, i64 n_in) {
    std::fill(gx, gx + n_in, 0.0);
    // windows are disjoint, so argmax targets are unique
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n_out; ++i) {
        gx[argmax[i]] += gy[i];
    }
}

void spp_fwd(const double* x, double* y, i64* argmax,
             i64 N, i64 C, i64 H, i64 W, const std::vector<i64>& levels) {
    i64 T = 0;
    for (i64 g : levels) {
        T += g * g;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 n = 0; n < N; ++n) {
        for (i64 c = 0; c < C; ++c) {
            const double* xc = x + (n * C + c) * H * W;
            const i64 base = (n * C + c) * H * W;
            double* yc = y + (n * C + c) * T;
            i64* ac = argmax + (n * C + c) * T;
            i64 off = 0;
            for (i64 g : levels) {
                for (i64 i = 0; i < g; ++i) {
                    const i64 h0 = (i * H) / g;
                    const i64 h1 = ((i + 1) * H + g - 1) / g;
                    for (i64 j = 0; j < g; ++j) {
                        const i64 w0 = (j * W) / g;
                        const i64 w1 = ((j + 1) * W + g - 1) / g;
                        i64 best = h0 * W + w0;
                        double best_v = xc[best];
                        for (i64 h = h0; h < h1; ++h) {
                            for (i64 ww = w0; ww < w1; ++ww) {
                                const i64 idx = h * W + ww;
                                if (xc[idx] > best_v) {
                                    best_v = xc[idx];
                                    best = idx;
                                }
                            }
                        }
                        yc[off + i * g + j] = best_v;
                        ac[off + i * g + j] = base + best;
                    }
                }
                off += g * g;
            }
        }
    }
}

void spp_bwd(const double* gy, const i64* argmax, double* gx, i64 NC, i64 T, i64 n_in) {
    std::fill(gx, gx + n_in, 0.0);
    // pyramid cells overlap within a channel; keep each channel on one thread
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < NC; ++nc) {
        for (i64 t = 0; t < T; ++t) {
            gx[argmax[nc * T + t]] += gy[nc * T + t];
        }
    }
}

void dense_fwd(const double* x, const double* w, const double* b, double* y,
               i64 N, i64 Din, i64 Dout) {
#pragma omp parallel for schedule(static)
    for (i64 n = 0; n < N; ++n) {
        const double* xr = x + n * Din;
        double* yr = y + n * Dout;
        for (i64 o = 0; o < Dout; ++o) {
            const double* wr = w + o * Din;
            double acc = b ? b[o] : 0.0;
#pragma omp simd reduction(+ : acc)
            for (i64 i = 0; i < Din; ++i) {
                acc += wr[i] * xr[i];
            }
            yr[o] = acc;
        }
    }
}

void dense_bwd_input(const double* gy, const double* w, double* gx, i64 N, i64 Din, i64 Dout) {
#pragma omp parallel for schedule(static)
    for (i64 n = 0; n < N; ++n) {
        const double* gyr = gy + n * Dout;
        double* gxr = gx + n * Din;
        std::fill(gxr, gxr + Din, 0.0);
        for (i64 o = 0; o < Dout; ++o) {
            const double coef = gyr[o];
            const double* wr = w + o * Din;
            for (i64 i = 0; i < Din; ++i) {
                gxr[i] += coef * wr[i];
            }
        }
    }
}

void dense_bwd_weight(const double* gy, const double* x, double* gw, i64 N, i64 Din, i64 Dout) {
#pragma omp parallel for schedule(static)
    for (i64 o = 0; o < Dout; ++o) {
        double* gwr = gw + o * Din;
        std::fill(gwr, gwr + Din, 0.0);
        for (i64 n = 0; n < N; ++n) {
            const double coef = gy[n * Dout + o];
            const double* xr = x + n * Din;
            for (i64 i = 0; i < Din; ++i) {
                gwr[i] += coef * xr[i];
            }
        }
    }
}

void dense_bwd_bias(const double* gy, double* gb, i64 N, i64 Dout) {
#pragma omp parallel for schedule(static)
    for (i64 o = 0; o < Dout; ++o) {
        double acc = 0.0;
        for (i64 n = 0; n < N; ++n) {
            acc += gy[n * Dout + o];
        }
        gb[o] = acc;
    }
}

void relu_fwd(const double* x, double* y, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) {
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
}

void relu_bwd(const double* x, const double* gy, double* gx, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) {
        gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
    }
}

void bn2d_stats(const double* x, i64 N, i64 C, i64 HW, double* mean, double* var) {
    const double inv_m = 1.0 / static_cast<double>(N * HW);
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        double s = 0.0;
        for (i64 n = 0; n < N; ++n) {
            const double* xr = x + (n * C + c) * HW;
#pragma omp simd reduction(+ : s)
            for (i64 t = 0; t < HW; ++t) {
                s += xr[t];
            }
        }
        const double mu = s * inv_m;
        double v = 0.0;
        for (i64 n = 0; n < N; ++n) {
            const double* xr = x + (n * C + c) * HW;
#pragma omp simd reduction(+ : v)
            for (i64 t = 0; t < HW; ++t) {
                const double d = xr[t] - mu;
                v += d * d;
            }
        }
        mean[c] = mu;
        var[c] = v * inv_m;
    }
}

void bn2d_fwd(const double* x, const double* mean, const double* invstd,
              const double* gamma, const double* beta, double* y,
              i64 N, i64 C, i64 HW) {
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 n = 0; n < N; ++n) {
        for (i64 c = 0; c < C; ++c) {
            const double* xr = x + (n * C + c) * HW;
            double* yr = y + (n * C + c) * HW;
            const double mu = mean[c];
            const double is = invstd[c];
            const double g = gamma[c];
            const double b = beta[c];
            for (i64 t = 0; t < HW; ++t) {
                yr[t] = (xr[t] - mu) * is * g + b;
            }
        }
    }
}

void bn2d_bwd(const double* gy, const double* x, const double* mean,
              const double* gamma, const double* invstd, double* gx,
              double* ggamma, double* gbeta, i64 N, i64 C, i64 HW, bool batch_stats) {
    const double m = static_cast<double>(N * HW);
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        const double mu = mean[c];
        const double is = invstd[c];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (i64 n = 0; n < N; ++n) {
            const i64 off = (n * C + c) * HW;
#pragma omp simd reduction(+ : sum_dy, sum_dy_xhat)
            for (i64 t = 0; t < HW; ++t) {
                sum_dy += gy[off + t];
                sum_dy_xhat += gy[off + t] * (x[off + t] - mu) * is;
            }
        }
        gbeta[c] = sum_dy;
        ggamma[c] = sum_dy_xhat;
        const double g = gamma[c];
        for (i64 n = 0; n < N; ++n) {
            const i64 off = (n * C + c) * HW;
            if (batch_stats) {
                for (i64 t = 0; t < HW; ++t) {
                    const double xh = (x[off + t] - mu) * is;
                    gx[off + t] = (g * is / m) * (m * gy[off + t] - sum_dy - xh * sum_dy_xhat);
                }
            } else {
                for (i64 t = 0; t < HW; ++t) {
                    gx[off + t] = g * is * gy[off + t];
                }
            }
        }
    }
}

}  // namespace sdd::kernels
