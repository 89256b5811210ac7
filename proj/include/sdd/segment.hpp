#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdd/audio.hpp"
#include "sdd/corpus.hpp"

namespace sdd {

// Label-dependent shift ratios: the next segment starts at
// current_start + segment_length * ratio(current label). Small ratios sample
// rare vowels densely. Time is tracked in integer microseconds so the shifts
// (7.5 ms for /o/, 5 ms for /u/, ...) stay exact.
struct OverlapPolicy {
    std::array<double, kNumVowelClasses> ratios{0.3, 0.08, 0.1, 0.03, 0.02, 0.5};
    i64 segment_us = 250000;

    double ratio(VowelLabel v) const { return ratios[static_cast<std::size_t>(v)]; }
    i64 shift_us(VowelLabel v) const;
    void validate() const;  // ratios in (0, 1]
};

struct SegmentSpan {
    i64 start_us = 0;
    i64 end_us = 0;
    VowelLabel label = VowelLabel::None;
};

// Maximal-overlap vowel assignment: every vowel interval overlapping the span
// counts with its overlap duration; ties go to the earliest interval onset;
// spans touching no vowel are not-a-vowel.
VowelLabel assign_label(i64 start_us, i64 end_us, const PhonemeAlignment& ali);

// Spans for one utterance: first at 0, each followed at the label's shift,
// emitted while end <= duration. Utterances shorter than one segment yield
// an empty vector.
std::vector<SegmentSpan> segment_utterance(i64 duration_us, const PhonemeAlignment& ali,
                                           const OverlapPolicy& policy);

struct VowelDatasetEntry {
    std::string speaker_id;
    i64 utterance_index = 0;
    i64 start_us = 0;
    VowelLabel label = VowelLabel::None;
};

struct VowelDataset {
    std::vector<VowelDatasetEntry> entries;  // ordered by (speaker, utterance, start)
    std::array<i64, kNumVowelClasses> class_counts{};
};

// Pools spans across the given speakers, deterministic order.
VowelDataset build_vowel_training_set(const std::vector<SpeakerRecord>& speakers,
                                      const OverlapPolicy& policy);

}  // namespace sdd
