#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sdd/corpus.hpp"
#include "sdd/error.hpp"
#include "sdd/rng.hpp"

namespace fs = std::filesystem;

namespace sdd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct SpeakerProfile {
    bool depressed = false;
    int phq8 = 0;
    double base_f0 = 0.0;
    double f0_std_rel = 0.0;  // relative per-utterance F0 spread
    double loudness = 0.0;    // target vowel RMS
    double jitter = 0.0;      // relative per-cycle period spread
};

// two-pole resonator, unity gain at the resonance
struct Resonator {
    double b0, a1, a2;
    double z1 = 0.0, z2 = 0.0;

    Resonator(double freq, double bw, double sr) {
        const double r = std::exp(-3.14159265358979323846 * bw / sr);
        a1 = 2.0 * r * std::cos(kTwoPi * freq / sr);
        a2 = -r * r;
        b0 = 1.0 - r;  // keeps the impulse response bounded
    }
    double step(double x) {
        const double y = b0 * x + a1 * z1 + a2 * z2;
        z2 = z1;
        z1 = y;
        return y;
    }
};

const std::vector<VowelFormants> kFormants = {
    {VowelLabel::A, 730.0, 1090.0, 2440.0},
    {VowelLabel::E, 530.0, 1840.0, 2480.0},
    {VowelLabel::I, 270.0, 2290.0, 3010.0},
    {VowelLabel::O, 570.0, 840.0, 2410.0},
    {VowelLabel::U, 300.0, 870.0, 2240.0},
};

const VowelFormants& formants_for(VowelLabel v) {
    for (const auto& f : kFormants) {
        if (f.vowel == v) {
            return f;
        }
    }
    throw config_error("no formants for label");
}

// impulse train with per-cycle jitter through a three-formant cascade
void synth_vowel(std::vector<double>& buf, i64 start, i64 len, VowelLabel vowel, double f0_start,
                 double f0_end, double jitter, double target_rms, int sr, Rng& rng) {
    const auto& fm = formants_for(vowel);
    std::vector<double> excite(static_cast<std::size_t>(len), 0.0);
    double pos = 0.0;
    while (pos < static_cast<double>(len)) {
        const double where = pos / static_cast<double>(len);
        const double f0 = f0_start + (f0_end - f0_start) * where;
        // fractional-delay impulse split over two samples
        const auto at = static_cast<i64>(pos);
        const double frac = pos - static_cast<double>(at);
        const double amp = 1.0 + 0.03 * rng.normal();
        excite[static_cast<std::size_t>(at)] += amp * (1.0 - frac);
        if (at + 1 < len) {
            excite[static_cast<std::size_t>(at + 1)] += amp * frac;
        }
        const double period = static_cast<double>(sr) / f0;
        pos += period * (1.0 + jitter * rng.normal());
    }
    Resonator r1(fm.f1, 90.0, sr), r2(fm.f2, 110.0, sr), r3(fm.f3, 170.0, sr);
    std::vector<double> seg(static_cast<std::size_t>(len));
    for (i64 i = 0; i < len; ++i) {
        double s = r1.step(excite[static_cast<std::size_t>(i)]);
        s += 0.6 * r2.step(excite[static_cast<std::size_t>(i)]);
        s += 0.25 * r3.step(excite[static_cast<std::size_t>(i)]);
        seg[static_cast<std::size_t>(i)] = s;
    }
    // edge fades against clicks
    const i64 fade = std::min<i64>(len / 8, sr * 8 / 1000);
    for (i64 i = 0; i < fade; ++i) {
        const double g = static_cast<double>(i + 1) / static_cast<double>(fade + 1);
        seg[static_cast<std::size_t>(i)] *= g;
        seg[static_cast<std::size_t>(len - 1 - i)] *= g;
    }
    double rms = 0.0;
    for (double s : seg) {
        rms += s * s;
    }
    rms = std::sqrt(rms / static_cast<double>(len));
    const double scale = rms > 0.0 ? target_rms / rms : 0.0;
    for (i64 i = 0; i < len; ++i) {
        buf[static_cast<std::size_t>(start + i)] = seg[static_cast<std::size_t>(i)] * scale;
    }
}

void synth_noise(std::vector<double>& buf, i64 start, i64 len, double target_rms, Rng& rng) {
    for (i64 i = 0; i < len; ++i) {
        buf[static_cast<std::size_t>(start + i)] = rng.uniform(-1.0, 1.0);
    }
    const i64 fade = std::min<i64>(len / 8, 128);
    for (i64 i = 0; i < fade; ++i) {
        const double g = static_cast<double>(i + 1) / static_cast<double>(fade + 1);
        buf[static_cast<std::size_t>(start + i)] *= g;
        buf[static_cast<std::size_t>(start + len - 1 - i)] *= g;
    }
    // uniform noise has rms 1/sqrt(3)
    const double scale = target_rms * 1.7320508075688772;
    for (i64 i = 0; i < len; ++i) {
        buf[static_cast<std::size_t>(start + i)] *= scale;
    }
}

struct PhoneChoice {
    bool is_vowel;
    VowelLabel vowel;
};

PhoneChoice draw_phone(Rng& rng) {
    // skewed on purpose: frequent /a/, rare /o/ and /u/
    const double u = rng.uniform();
    if (u < 0.30) return {true, VowelLabel::A};
    if (u < 0.46) return {true, VowelLabel::E};
    if (u < 0.62) return {true, VowelLabel::I};
    if (u < 0.70) return {true, VowelLabel::O};
    if (u < 0.76) return {true, VowelLabel::U};
    return {false, VowelLabel::None};
}

void generate_speaker(const SynthConfig& cfg, std::uint64_t seed, const std::string& spk_id,
                      const SpeakerProfile& prof, const fs::path& out_dir) {
    for (i64 u = 0; u < cfg.utterances_per_speaker; ++u) {
        std::ostringstream tag;
        tag << "synth/" << spk_id << "/" << u;
        Rng rng(derive_seed(seed, tag.str()));

        const i64 dur_ms = cfg.utterance_ms_min +
                           rng.uniform_int(cfg.utterance_ms_max - cfg.utterance_ms_min + 1);
        const i64 n = dur_ms * cfg.sample_rate / 1000;
        std::vector<double> buf(static_cast<std::size_t>(n), 0.0);

        double f0_utt = prof.base_f0 * (1.0 + prof.f0_std_rel * rng.normal());
        f0_utt = std::clamp(f0_utt, 70.0, 320.0);
        const double drift = 1.0 + 0.02 * rng.normal();

        struct AliLine {
            i64 start_ms, end_ms;
            std::string phone;
        };
        std::vector<AliLine> ali;

        i64 pos_ms = 20 + rng.uniform_int(41);
        while (true) {
            const PhoneChoice pc = draw_phone(rng);
            const i64 phone_ms = pc.is_vowel ? 80 + rng.uniform_int(121) : 50 + rng.uniform_int(71);
            if (pos_ms + phone_ms + 10 > dur_ms) {
                break;
            }
            const i64 start = pos_ms * cfg.sample_rate / 1000;
            const i64 len = phone_ms * cfg.sample_rate / 1000;
            if (pc.is_vowel) {
                const double rms = prof.loudness * (1.0 + 0.05 * rng.normal());
                synth_vowel(buf, start, len, pc.vowel, f0_utt, f0_utt * drift, prof.jitter,
                            std::max(rms, 0.01), cfg.sample_rate, rng);
                ali.push_back({pos_ms, pos_ms + phone_ms, vowel_name(pc.vowel)});
            } else {
                synth_noise(buf, start, len, prof.loudness * 0.35, rng);
                ali.push_back({pos_ms, pos_ms + phone_ms, "n"});
            }
            pos_ms += phone_ms + rng.uniform_int(41);
        }

        std::ostringstream wav_name;
        wav_name << spk_id << "_" << std::setw(3) << std::setfill('0') << u;
        Waveform w;
        w.sample_rate = cfg.sample_rate;
        w.samples = std::move(buf);
        write_wav16((out_dir / "wav" / (wav_name.str() + ".wav")).string(), w);

        std::ofstream af(out_dir / "ali" / (wav_name.str() + ".ali"));
        if (!af) {
            throw io_error("cannot write alignment for " + wav_name.str());
        }
        for (const auto& l : ali) {
            af << l.start_ms << "\t" << l.end_ms << "\t" << l.phone << "\n";
        }
    }
}

}  // namespace

const std::vector<VowelFormants>& synth_formant_table() { return kFormants; }

std::string generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                      const std::string& out_dir) {
    if (cfg.n_speakers < 2) {
        throw config_error("synthetic corpus needs at least 2 speakers");
    }
    if (cfg.utterances_per_speaker < 1) {
        throw config_error("utterances_per_speaker must be >= 1");
    }
    if (cfg.depressed_fraction < 0.0 || cfg.depressed_fraction > 1.0) {
        throw config_error("depressed_fraction must lie in [0,1]");
    }
    if (cfg.utterance_ms_min < 250 || cfg.utterance_ms_max < cfg.utterance_ms_min) {
        throw config_error("utterance duration range must be >= 250 ms and ordered");
    }

    const fs::path root(out_dir);
    fs::create_directories(root / "wav");
    fs::create_directories(root / "ali");

    std::vector<std::string> ids;
    for (i64 s = 0; s < cfg.n_speakers; ++s) {
        std::ostringstream id;
        id << "s" << std::setw(4) << std::setfill('0') << s;
        ids.push_back(id.str());
    }

    // which speakers carry the depression markers
    std::vector<i64> order(static_cast<std::size_t>(cfg.n_speakers));
    for (i64 i = 0; i < cfg.n_speakers; ++i) {
        order[static_cast<std::size_t>(i)] = i;
    }
    Rng corpus_rng(derive_seed(seed, "synth/labels"));
    corpus_rng.shuffle(order);
    const i64 n_dep = static_cast<i64>(std::llround(cfg.depressed_fraction * cfg.n_speakers));
    std::vector<bool> depressed(static_cast<std::size_t>(cfg.n_speakers), false);
    for (i64 i = 0; i < n_dep; ++i) {
        depressed[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    }

    std::vector<SpeakerProfile> profiles(static_cast<std::size_t>(cfg.n_speakers));
    for (i64 s = 0; s < cfg.n_speakers; ++s) {
        Rng rng(derive_seed(seed, "synth/" + ids[static_cast<std::size_t>(s)]));
        SpeakerProfile p;
        p.depressed = depressed[static_cast<std::size_t>(s)];
        p.base_f0 = rng.uniform(100.0, 220.0);
        p.f0_std_rel = rng.uniform(0.10, 0.14);
        p.loudness = rng.uniform(0.10, 0.14);
        p.jitter = rng.uniform(0.006, 0.010);
        p.phq8 = p.depressed ? 10 + static_cast<int>(rng.uniform_int(15))
                             : static_cast<int>(rng.uniform_int(10));
        if (p.depressed) {
            p.f0_std_rel *= cfg.f0_std_scale_depressed;
            p.loudness *= cfg.loudness_scale_depressed;
            p.jitter *= cfg.jitter_scale_depressed;
        }
        profiles[static_cast<std::size_t>(s)] = p;
    }

    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
    for (i64 s = 0; s < cfg.n_speakers; ++s) {
        try {
            generate_speaker(cfg, seed, ids[static_cast<std::size_t>(s)],
                             profiles[static_cast<std::size_t>(s)], root);
        } catch (...) {
#pragma omp critical
            if (!first_error) {
                first_error = std::current_exception();
            }
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }

    const std::string manifest_path = (root / "manifest.jsonl").string();
    std::ofstream mf(manifest_path, std::ios::binary);
    if (!mf) {
        throw io_error("cannot write " + manifest_path);
    }
    for (i64 s = 0; s < cfg.n_speakers; ++s) {
        nlohmann::ordered_json j;
        j["speaker_id"] = ids[static_cast<std::size_t>(s)];
        nlohmann::ordered_json audio = nlohmann::ordered_json::array();
        nlohmann::ordered_json alis = nlohmann::ordered_json::array();
        for (i64 u = 0; u < cfg.utterances_per_speaker; ++u) {
            std::ostringstream base;
            base << ids[static_cast<std::size_t>(s)] << "_" << std::setw(3) << std::setfill('0') << u;
            audio.push_back("wav/" + base.str() + ".wav");
            alis.push_back("ali/" + base.str() + ".ali");
        }
        j["audio"] = std::move(audio);
        j["alignments"] = std::move(alis);
        j["phq8"] = profiles[static_cast<std::size_t>(s)].phq8;
        mf << j.dump() << "\n";
    }
    return manifest_path;
}

}  // namespace sdd
