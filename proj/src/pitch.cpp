#include <algorithm>
#include <cmath>

#include "sdd/audio.hpp"
#include "sdd/error.hpp"

namespace sdd {

namespace {

constexpr double kYinThreshold = 0.15;
constexpr double kF0Min = 50.0;
constexpr double kF0Max = 500.0;

// quadratic peak interpolation; returns offset in [-1, 1] and refined value
std::pair<double, double> parabolic(double ym1, double y0, double yp1) {
    const double denom = ym1 - 2.0 * y0 + yp1;
    if (denom == 0.0) {
        return {0.0, y0};
    }
    const double d = 0.5 * (ym1 - yp1) / denom;
    return {d, y0 - 0.25 * (ym1 - yp1) * d};
}

}  // namespace

F0Track estimate_f0_track(const Waveform& w) {
    F0Track track;
    if (w.sample_rate < 8000) {
        throw config_error("estimate_f0_track: sample rate must be >= 8000 Hz");
    }
    const i64 sr = w.sample_rate;
    const i64 frame = sr * 25 / 1000;
    const i64 hop = sr * 10 / 1000;
    const i64 tau_min = static_cast<i64>(static_cast<double>(sr) / kF0Max);
    const i64 tau_max = static_cast<i64>(static_cast<double>(sr) / kF0Min);
    const i64 need = frame + tau_max;
    const i64 n = static_cast<i64>(w.samples.size());
    if (n < need) {
        return track;  // too short to analyze: no frames, all-unvoiced by construction
    }
    const i64 n_frames = (n - need) / hop + 1;
    track.f0_hz.assign(static_cast<std::size_t>(n_frames), 0.0);
    track.voiced.assign(static_cast<std::size_t>(n_frames), 0);

    const double* x = w.samples.data();
#pragma omp parallel for schedule(static)
    for (i64 fi = 0; fi < n_frames; ++fi) {
        const double* s = x + fi * hop;
        std::vector<double> diff(static_cast<std::size_t>(tau_max + 1), 0.0);
        for (i64 tau = 1; tau <= tau_max; ++tau) {
            double acc = 0.0;
            for (i64 i = 0; i < frame; ++i) {
                const double d = s[i] - s[i + tau];
                acc += d * d;
            }
            diff[static_cast<std::size_t>(tau)] = acc;
        }
        // cumulative mean normalized difference
        std::vector<double> cmnd(static_cast<std::size_t>(tau_max + 1), 1.0);
        double running = 0.0;
        for (i64 tau = 1; tau <= tau_max; ++tau) {
            running += diff[static_cast<std::size_t>(tau)];
            cmnd[static_cast<std::size_t>(tau)] =
                running > 0.0 ? diff[static_cast<std::size_t>(tau)] * static_cast<double>(tau) / running
                              : 1.0;
        }
        // first dip below threshold, then descend to its local minimum
        i64 tau = -1;
        for (i64 t = tau_min; t <= tau_max; ++t) {
            if (cmnd[static_cast<std::size_t>(t)] < kYinThreshold) {
                tau = t;
                while (tau + 1 <= tau_max &&
                       cmnd[static_cast<std::size_t>(tau + 1)] < cmnd[static_cast<std::size_t>(tau)]) {
                    ++tau;
                }
                break;
            }
        }
        if (tau < 0) {
            continue;
        }
        double period = static_cast<double>(tau);
        if (tau > 1 && tau < tau_max) {
            period += parabolic(cmnd[static_cast<std::size_t>(tau - 1)],
                                cmnd[static_cast<std::size_t>(tau)],
                                cmnd[static_cast<std::size_t>(tau + 1)])
                          .first;
        }
        track.voiced[static_cast<std::size_t>(fi)] = 1;
        track.f0_hz[static_cast<std::size_t>(fi)] = static_cast<double>(sr) / period;
    }
    return track;
}

namespace {

struct CycleStats {
    std::vector<double> periods;     // samples, per region
    std::vector<double> amplitudes;  // per-cycle |peak|
    std::vector<std::size_t> region_breaks;  // index into periods where a new region starts
};

// Walks voiced regions cycle by cycle via peak picking around the expected
// period from the F0 track.
CycleStats extract_cycles(const Waveform& w, const F0Track& track) {
    CycleStats cs;
    const i64 sr = w.sample_rate;
    const i64 hop = sr * 10 / 1000;
    const i64 n = static_cast<i64>(w.samples.size());
    const double* x = w.samples.data();
    const i64 n_frames = track.frames();

    i64 fi = 0;
    while (fi < n_frames) {
        if (!track.voiced[static_cast<std::size_t>(fi)]) {
            ++fi;
            continue;
        }
        i64 region_end = fi;
        while (region_end < n_frames && track.voiced[static_cast<std::size_t>(region_end)]) {
            ++region_end;
        }
        const i64 start_sample = fi * hop;
        const i64 end_sample = std::min<i64>(n, region_end * hop + sr * 25 / 1000);
        double period = static_cast<double>(sr) / track.f0_hz[static_cast<std::size_t>(fi)];

        // first peak within one expected period
        i64 search_end = std::min<i64>(end_sample, start_sample + static_cast<i64>(period) + 1);
        i64 peak = start_sample;
        for (i64 i = start_sample; i < search_end; ++i) {
            if (x[i] > x[peak]) {
                peak = i;
            }
        }
        double prev_pos = static_cast<double>(peak);
        cs.region_breaks.push_back(cs.periods.size());
        bool first_cycle = true;
        while (true) {
            const i64 lo = static_cast<i64>(prev_pos + 0.7 * period);
            const i64 hi = std::min<i64>(end_sample, static_cast<i64>(prev_pos + 1.3 * period) + 1);
            if (lo + 1 >= hi || hi > n) {
                break;
            }
            i64 p = lo;
            for (i64 i = lo; i < hi; ++i) {
                if (x[i] > x[p]) {
                    p = i;
                }
            }
            // sub-sample refinement
            double pos = static_cast<double>(p);
            double amp = x[p];
            if (p > 0 && p + 1 < n) {
                auto [d, v] = parabolic(x[p - 1], x[p], x[p + 1]);
                pos += d;
                amp = v;
            }
            const double t = pos - prev_pos;
            cs.periods.push_back(t);
            cs.amplitudes.push_back(std::fabs(amp));
            prev_pos = pos;
            if (first_cycle) {
                first_cycle = false;
            }
            period = t;  // track drifting periods
        }
        fi = region_end;
    }
    return cs;
}

// mean absolute consecutive difference over mean value, skipping region breaks
double relative_perturbation(const std::vector<double>& v, const std::vector<std::size_t>& breaks) {
    if (v.size() < 2) {
        return 0.0;
    }
    double mean = 0.0;
    for (double t : v) {
        mean += t;
    }
    mean /= static_cast<double>(v.size());
    if (mean == 0.0) {
        return 0.0;
    }
    double acc = 0.0;
    std::size_t count = 0;
    std::size_t bidx = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        while (bidx < breaks.size() && breaks[bidx] < i) {
            ++bidx;
        }
        if (bidx < breaks.size() && breaks[bidx] == i) {
            continue;  // first cycle of a new region has no predecessor
        }
        acc += std::fabs(v[i] - v[i - 1]);
        ++count;
    }
    if (count == 0) {
        return 0.0;
    }
    return acc / static_cast<double>(count) / mean;
}

}  // namespace

AcousticDescriptors compute_descriptors(const Waveform& w) {
    if (w.samples.empty()) {
        throw dim_error("descriptors: empty waveform");
    }
    AcousticDescriptors d;

    double energy = 0.0;
    for (double s : w.samples) {
        energy += s * s;
    }
    d.loudness = std::sqrt(energy / static_cast<double>(w.samples.size()));

    const F0Track track = estimate_f0_track(w);
    const i64 n_frames = track.frames();
    i64 n_voiced = 0;
    double sum = 0.0;
    double sum2 = 0.0;
    for (i64 i = 0; i < n_frames; ++i) {
        if (track.voiced[static_cast<std::size_t>(i)]) {
            ++n_voiced;
            sum += track.f0_hz[static_cast<std::size_t>(i)];
            sum2 += track.f0_hz[static_cast<std::size_t>(i)] * track.f0_hz[static_cast<std::size_t>(i)];
        }
    }
    d.speech_percent = n_frames > 0 ? static_cast<double>(n_voiced) / static_cast<double>(n_frames) : 0.0;
    if (n_voiced == 0) {
        d.no_voicing = true;
        return d;  // F0, jitter, shimmer stay 0
    }
    d.mean_f0 = sum / static_cast<double>(n_voiced);
    const double var = sum2 / static_cast<double>(n_voiced) - d.mean_f0 * d.mean_f0;
    d.std_f0 = var > 0.0 ? std::sqrt(var) : 0.0;

    const CycleStats cs = extract_cycles(w, track);
    d.jitter = relative_perturbation(cs.periods, cs.region_breaks);
    d.shimmer = relative_perturbation(cs.amplitudes, cs.region_breaks);
    return d;
}

}  // namespace sdd
