#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdd/audio.hpp"

namespace sdd {

enum class VowelLabel : int { A = 0, E = 1, I = 2, O = 3, U = 4, None = 5 };
constexpr i64 kNumVowelClasses = 6;

VowelLabel map_phone(const std::string& phone);
const char* vowel_name(VowelLabel v);

struct PhoneInterval {
    i64 start_us = 0;
    i64 end_us = 0;
    std::string phone;
};

// sorted by start, non-overlapping, non-negative
struct PhonemeAlignment {
    std::vector<PhoneInterval> intervals;
};

// Lines "start_ms<TAB>end_ms<TAB>phone"; fractional milliseconds allowed.
PhonemeAlignment parse_alignment(const std::string& path);

struct Utterance {
    std::string speaker_id;
    std::string audio_path;  // resolved against the manifest directory
    PhonemeAlignment alignment;
    i64 duration_us = 0;
};

struct SpeakerRecord {
    std::string speaker_id;
    std::vector<Utterance> utterances;
    int phq8 = 0;
    int label = 0;  // 1 iff phq8 >= 10   (PHQ-8 cutoff)
};

// JSON-lines manifest, one speaker per line:
//   {"speaker_id": ..., "audio": [...], "alignments": [...], "phq8": N}
// Validates referenced files, alignment geometry and label/score consistency;
// records come back sorted by speaker_id.
std::vector<SpeakerRecord> load_corpus(const std::string& manifest_path);

// ------------------------------------------------------- synthetic corpus

struct SynthConfig {
    i64 n_speakers = 40;
    i64 utterances_per_speaker = 60;
    double depressed_fraction = 0.3;
    i64 utterance_ms_min = 300;
    i64 utterance_ms_max = 450;
    int sample_rate = 16000;
    // depression markers, applied multiplicatively to the speaker's baseline
    double f0_std_scale_depressed = 0.4;
    double loudness_scale_depressed = 0.6;
    double jitter_scale_depressed = 2.0;
};

// Source-filter vowel sequences with exact alignments; byte-deterministic for
// a given seed. Writes wav/, ali/ and manifest.jsonl under out_dir; returns
// the manifest path.
std::string generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                      const std::string& out_dir);

// F1/F2/F3 targets used by the generator, exposed for test oracles.
struct VowelFormants {
    VowelLabel vowel;
    double f1, f2, f3;
};
const std::vector<VowelFormants>& synth_formant_table();

}  // namespace sdd
