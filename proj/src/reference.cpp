#include "sdd/reference.hpp"

#include <algorithm>
#include <cmath>

namespace sdd::ref {

namespace {
// zero-padded lookup
inline double at_pad(const double* xc, i64 H, i64 W, i64 h, i64 w) {
    if (h < 0 || h >= H || w < 0 || w >= W) {
        return 0.0;
    }
    return xc[h * W + w];
}
}  // namespace

void conv2d_fwd(const double* x, const double* w, const double* bias, double* y,
                i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                i64 padH, i64 padW) {
    const i64 Ho = H + 2 * padH - kH + 1;
    const i64 Wo = W + 2 * padW - kW + 1;
    for (i64 n = 0; n < N; ++n) {
        for (i64 co = 0; co < Cout; ++co) {
            for (i64 ho = 0; ho < Ho; ++ho) {
                for (i64 wo = 0; wo < Wo; ++wo) {
                    double acc = bias ? bias[co] : 0.0;
                    for (i64 ci = 0; ci < Cin; ++ci) {
                        const double* xc = x + (n * Cin + ci) * H * W;
                        for (i64 kh = 0; kh < kH; ++kh) {
                            for (i64 kw = 0; kw < kW; ++kw) {
                                acc += w[((co * Cin + ci) * kH + kh) * kW + kw] *
                                       at_pad(xc, H, W, ho + kh - padH, wo + kw - padW);
                            }
                        }
                    }
                    y[((n * Cout + co) * Ho + ho) * Wo + wo] = acc;
                }
            }
        }
    }
}

void conv2d_bwd_input(const double* gy, const double* w, double* gx,
                      i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                      i64 padH, i64 padW) {
    const i64 Ho = H + 2 * padH - kH + 1;
    const i64 Wo = W + 2 * padW - kW + 1;
    std::fill(gx, gx + N * Cin * H * W, 0.0);
    for (i64 n = 0; n < N; ++n) {
        for (i64 ci = 0; ci < Cin; ++ci) {
            for (i64 h = 0; h < H; ++h) {
                for (i64 ww = 0; ww < W; ++ww) {
                    double acc = 0.0;
                    for (i64 co = 0; co < Cout; ++co) {
                        for (i64 kh = 0; kh < kH; ++kh) {
                            for (i64 kw = 0; kw < kW; ++kw) {
                                const i64 ho = h - kh + padH;
                                const i64 wo = ww - kw + padW;
                                if (ho < 0 || ho >= Ho || wo < 0 || wo >= Wo) {
                                    continue;
                                }
                                acc += w[((co * Cin + ci) * kH + kh) * kW + kw] *
                                       gy[((n * Cout + co) * Ho + ho) * Wo + wo];
                            }
                        }
                    }
                    gx[(n * Cin + ci) * H * W + h * W + ww] = acc;
                }
            }
        }
    }
}

void conv2d_bwd_weight(const double* gy, const double* x, double* gw,
                       i64 N, i64 Cin, i64 H, i64 W, i64 Cout, i64 kH, i64 kW,
                       i64 padH, i64 padW) {
    const i64 Ho = H + 2 * padH - kH + 1;
    const i64 Wo = W + 2 * padW - kW + 1;
    for (i64 co = 0; co < Cout; ++co) {
        for (i64 ci = 0; ci < Cin; ++ci) {
            for (i64 kh = 0; kh < kH; ++kh) {
                for (i64 kw = 0; kw < kW; ++kw) {
                    double acc = 0.0;
                    for (i64 n = 0; n < N; ++n) {
                        const double* xc = x + (n * Cin + ci) * H * W;
                        for (i64 ho = 0; ho < Ho; ++ho) {
                            for (i64 wo = 0; wo < Wo; ++wo) {
                                acc += gy[((n * Cout + co) * Ho + ho) * Wo + wo] *
                                       at_pad(xc, H, W, ho + kh - padH, wo + kw - padW);
                            }
                        }
                    }
                    gw[((co * Cin + ci) * kH + kh) * kW + kw] = acc;
                }
            }
        }
    }
}

void maxpool2d_fwd(const double* x, double* y,
                   i64 N, i64 C, i64 H, i64 W, i64 ph, i64 pw) {
    const i64 Ho = H / ph;
    const i64 Wo = W / pw;
    for (i64 nc = 0; nc < N * C; ++nc) {
        const double* xc = x + nc * H * W;
        double* yc = y + nc * Ho * Wo;
        for (i64 ho = 0; ho < Ho; ++ho) {
            for (i64 wo = 0; wo < Wo; ++wo) {
                double best = xc[ho * ph * W + wo * pw];
                for (i64 kh = 0; kh < ph; ++kh) {
                    for (i64 kw = 0; kw < pw; ++kw) {
                        best = std::max(best, xc[(ho * ph + kh) * W + wo * pw + kw]);
                    }
                }
                yc[ho * Wo + wo] = best;
            }
        }
    }
}

void spp_fwd(const double* x, double* y,
             i64 N, i64 C, i64 H, i64 W, const std::vector<i64>& levels) {
    i64 T = 0;
    for (i64 g : levels) {
        T += g * g;
    }
    for (i64 nc = 0; nc < N * C; ++nc) {
        const double* xc = x + nc * H * W;
        double* yc = y + nc * T;
        i64 off = 0;
        for (i64 g : levels) {
            for (i64 i = 0; i < g; ++i) {
                const i64 h0 = static_cast<i64>(std::floor(static_cast<double>(i) * H / g));
                const i64 h1 = static_cast<i64>(std::ceil(static_cast<double>(i + 1) * H / g));
                for (i64 j = 0; j < g; ++j) {
                    const i64 w0 = static_cast<i64>(std::floor(static_cast<double>(j) * W / g));
                    const i64 w1 = static_cast<i64>(std::ceil(static_cast<double>(j + 1) * W / g));
                    double best = xc[h0 * W + w0];
                    for (i64 h = h0; h < h1; ++h) {
                        for (i64 ww = w0; ww < w1; ++ww) {
                            best = std::max(best, xc[h * W + ww]);
                        }
                    }
                    yc[off + i * g + j] = best;
                }
            }
            off += g * g;
        }
    }
}

void dense_fwd(const double* x, const double* w, const double* b, double* y,
               i64 N, i64 Din, i64 Dout) {
    for (i64 n = 0; n < N; ++n) {
        for (i64 o = 0; o < Dout; ++o) {
            double acc = b ? b[o] : 0.0;
            for (i64 i = 0; i < Din; ++i) {
                acc += w[o * Din + i] * x[n * Din + i];
            }
            y[n * Dout + o] = acc;
        }
    }
}

void bn2d_stats(const double* x, i64 N, i64 C, i64 HW, double* mean, double* var) {
    for (i64 c = 0; c < C; ++c) {
        double s = 0.0;
        double s2 = 0.0;
        for (i64 n = 0; n < N; ++n) {
            for (i64 t = 0; t < HW; ++t) {
                const double v = x[(n * C + c) * HW + t];
                s += v;
                s2 += v * v;
            }
        }
        const double m = static_cast<double>(N * HW);
        mean[c] = s / m;
        var[c] = s2 / m - (s / m) * (s / m);
    }
}

void dft_power(const double* frame, i64 nfft, double* power) {
    const double two_pi = 6.283185307179586476925286766559;
    for (i64 k = 0; k <= nfft / 2; ++k) {
        double re = 0.0;
        double im = 0.0;
        for (i64 t = 0; t < nfft; ++t) {
            const double ang = two_pi * static_cast<double>(k) * static_cast<double>(t) /
                               static_cast<double>(nfft);
            re += frame[t] * std::cos(ang);
            im -= frame[t] * std::sin(ang);
        }
        power[k] = re * re + im * im;
    }
}

}  // namespace sdd::ref
