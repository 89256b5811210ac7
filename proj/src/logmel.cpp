#include <algorithm>
#include <cmath>

#include "sdd/audio.hpp"
#include "sdd/error.hpp"

namespace sdd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// iterative radix-2 FFT, in-place on interleaved complex data
void fft_radix2(double* re, double* im, i64 n) {
    // bit reversal
    for (i64 i = 1, j = 0; i < n; ++i) {
        i64 bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (i64 len = 2; len <= n; len <<= 1) {
        const double ang = -kTwoPi / static_cast<double>(len);
        const double wr = std::cos(ang);
        const double wi = std::sin(ang);
        for (i64 i = 0; i < n; i += len) {
            double cr = 1.0;
            double ci = 0.0;
            for (i64 k = 0; k < len / 2; ++k) {
                const i64 a = i + k;
                const i64 b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

}  // namespace

double LogMelExtractor::hz_to_mel(double hz) {
    // Slaney scale: linear below 1 kHz, log above
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    constexpr double min_log_mel = 1000.0 / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (hz < min_log_hz) {
        return hz / f_sp;
    }
    return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double LogMelExtractor::mel_to_hz(double mel) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    constexpr double min_log_mel = 1000.0 / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (mel < min_log_mel) {
        return mel * f_sp;
    }
    return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

LogMelExtractor::LogMelExtractor(LogMelConfig cfg, int sample_rate)
    : cfg_(cfg), sample_rate_(sample_rate) {
    if ((cfg_.n_fft & (cfg_.n_fft - 1)) != 0 || cfg_.n_fft < 2) {
        throw config_error("n_fft must be a power of two");
    }
    // periodic Hann
    window_.resize(static_cast<std::size_t>(cfg_.n_fft));
    for (i64 i = 0; i < cfg_.n_fft; ++i) {
        window_[static_cast<std::size_t>(i)] =
            0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(cfg_.n_fft));
    }

    const i64 n_bins = cfg_.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg_.fmin);
    const double mel_hi = hz_to_mel(cfg_.fmax);
    std::vector<double> edges(static_cast<std::size_t>(cfg_.n_mels + 2));
    for (i64 m = 0; m < cfg_.n_mels + 2; ++m) {
        edges[static_cast<std::size_t>(m)] =
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                               static_cast<double>(cfg_.n_mels + 1));
    }

    filters_.resize(static_cast<std::size_t>(cfg_.n_mels));
    for (i64 m = 0; m < cfg_.n_mels; ++m) {
        const double f0 = edges[static_cast<std::size_t>(m)];
        const double f1 = edges[static_cast<std::size_t>(m + 1)];
        const double f2 = edges[static_cast<std::size_t>(m + 2)];
        const double norm = 2.0 / (f2 - f0);  // area normalization
        Filter filt;
        filt.first_bin = -1;
        for (i64 k = 0; k < n_bins; ++k) {
            const double fk = static_cast<double>(k) * sample_rate_ / static_cast<double>(cfg_.n_fft);
            double wgt = 0.0;
            if (fk > f0 && fk < f2) {
                wgt = fk <= f1 ? (fk - f0) / (f1 - f0) : (f2 - fk) / (f2 - f1);
            }
            if (wgt > 0.0) {
                if (filt.first_bin < 0) {
                    filt.first_bin = k;
                }
                filt.weights.push_back(wgt * norm);
            } else if (filt.first_bin >= 0) {
                break;
            }
        }
        if (filt.first_bin < 0) {
            filt.first_bin = 0;  // degenerate filter between bins; contributes the floor only
        }
        filters_[static_cast<std::size_t>(m)] = std::move(filt);
    }
}

std::vector<double> LogMelExtractor::filterbank_dense() const {
    const i64 n_bins = cfg_.n_fft / 2 + 1;
    std::vector<double> fb(static_cast<std::size_t>(cfg_.n_mels * n_bins), 0.0);
    for (i64 m = 0; m < cfg_.n_mels; ++m) {
        const auto& f = filters_[static_cast<std::size_t>(m)];
        for (std::size_t i = 0; i < f.weights.size(); ++i) {
            fb[static_cast<std::size_t>(m * n_bins) + static_cast<std::size_t>(f.first_bin) + i] =
                f.weights[i];
        }
    }
    return fb;
}

LogMel LogMelExtractor::compute(const double* samples, i64 n) const {
    if (n < cfg_.n_fft) {
        throw dim_error("log_mel: need at least " + std::to_string(cfg_.n_fft) +
                        " samples, got " + std::to_string(n));
    }
    const i64 n_frames = 1 + (n - cfg_.n_fft) / cfg_.hop;
    LogMel out;
    out.n_mels = cfg_.n_mels;
    out.n_frames = n_frames;
    out.values.resize(static_cast<std::size_t>(cfg_.n_mels * n_frames));

#pragma omp parallel for schedule(static)
    for (i64 t = 0; t < n_frames; ++t) {
        std::vector<double> re(static_cast<std::size_t>(cfg_.n_fft));
        std::vector<double> im(static_cast<std::size_t>(cfg_.n_fft), 0.0);
        const double* src = samples + t * cfg_.hop;
        for (i64 i = 0; i < cfg_.n_fft; ++i) {
            re[static_cast<std::size_t>(i)] = src[i] * window_[static_cast<std::size_t>(i)];
        }
        fft_radix2(re.data(), im.data(), cfg_.n_fft);
        for (i64 m = 0; m < cfg_.n_mels; ++m) {
            const auto& f = filters_[static_cast<std::size_t>(m)];
            double acc = 0.0;
            for (std::size_t i = 0; i < f.weights.size(); ++i) {
                const i64 k = f.first_bin + static_cast<i64>(i);
                const double pw = re[static_cast<std::size_t>(k)] * re[static_cast<std::size_t>(k)] +
                                  im[static_cast<std::size_t>(k)] * im[static_cast<std::size_t>(k)];
                acc += f.weights[i] * pw;
            }
            out.values[static_cast<std::size_t>(m * n_frames + t)] = std::log(acc + cfg_.floor_eps);
        }
    }
    return out;
}

TensorPtr logmel_to_tensor(const LogMel& m, bool requires_grad) {
    return make_tensor({1, m.n_mels, m.n_frames}, m.values, requires_grad);
}

}  // namespace sdd
