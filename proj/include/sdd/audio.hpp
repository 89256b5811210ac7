#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdd/tensor.hpp"

namespace sdd {

struct Waveform {
    std::vector<double> samples;  // [-1, 1]
    int sample_rate = 16000;

    double duration_ms() const {
        return 1000.0 * static_cast<double>(samples.size()) / sample_rate;
    }
};

struct WavInfo {
    int sample_rate = 0;
    i64 n_samples = 0;  // per channel
    int channels = 0;
};

WavInfo wav_info(const std::string& path);

// PCM16 or IEEE float32; channels averaged to mono; resampled to target_rate
// by linear interpolation when needed.
Waveform read_wav(const std::string& path, int target_rate = 16000);

void write_wav16(const std::string& path, const Waveform& w);

// ------------------------------------------------------------------ log-Mel

struct LogMelConfig {
    i64 n_fft = 512;
    i64 hop = 128;
    i64 n_mels = 128;
    double fmin = 0.0;
    double fmax = 8000.0;
    double floor_eps = 1e-10;
};

// [n_mels x n_frames], row-major by Mel band
struct LogMel {
    std::vector<double> values;
    i64 n_mels = 0;
    i64 n_frames = 0;

    double at(i64 m, i64 t) const { return values[static_cast<std::size_t>(m * n_frames + t)]; }
};

// Hann-windowed power STFT, no center padding, Slaney-scale area-normalized
// triangular filterbank, natural log with an additive floor.
// frames = 1 + floor((N - n_fft) / hop).
class LogMelExtractor {
public:
    explicit LogMelExtractor(LogMelConfig cfg = {}, int sample_rate = 16000);

    LogMel compute(const double* samples, i64 n) const;
    LogMel compute(const Waveform& w) const { return compute(w.samples.data(), static_cast<i64>(w.samples.size())); }

    const LogMelConfig& config() const { return cfg_; }
    // dense [n_mels x (n_fft/2+1)] filter matrix, for tests
    std::vector<double> filterbank_dense() const;

    static double hz_to_mel(double hz);
    static double mel_to_hz(double mel);

private:
    LogMelConfig cfg_;
    int sample_rate_;
    std::vector<double> window_;
    // sparse triangular filters
    struct Filter {
        i64 first_bin;
        std::vector<double> weights;
    };
    std::vector<Filter> filters_;
};

TensorPtr logmel_to_tensor(const LogMel& m, bool requires_grad = false);

// ------------------------------------------------------------- pitch / voice

struct F0Track {
    std::vector<double> f0_hz;        // 0 where unvoiced
    std::vector<std::uint8_t> voiced;
    double frame_ms = 25.0;
    double hop_ms = 10.0;

    i64 frames() const { return static_cast<i64>(f0_hz.size()); }
};

// YIN-style cumulative-mean-normalized difference search in 50..500 Hz,
// periodicity threshold 0.15. Silence yields all-unvoiced.
F0Track estimate_f0_track(const Waveform& w);

struct AcousticDescriptors {
    double speech_percent = 0.0;  // voiced frame fraction
    double mean_f0 = 0.0;         // Hz, over voiced frames
    double std_f0 = 0.0;
    double jitter = 0.0;          // mean |T_i - T_{i-1}| / mean T over cycles
    double shimmer = 0.0;         // same on per-cycle peak amplitudes
    double loudness = 0.0;        // waveform RMS
    bool no_voicing = false;
};

AcousticDescriptors compute_descriptors(const Waveform& w);

}  // namespace sdd
