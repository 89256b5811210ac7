#include "sdd/segment.hpp"

#include <algorithm>
#include <cmath>

#include "sdd/error.hpp"

namespace sdd {

i64 OverlapPolicy::shift_us(VowelLabel v) const {
    return static_cast<i64>(std::llround(static_cast<double>(segment_us) * ratio(v)));
}

void OverlapPolicy::validate() const {
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        if (!(ratios[i] > 0.0 && ratios[i] <= 1.0)) {
            throw config_error("overlap ratio for class '" +
                               std::string(vowel_name(static_cast<VowelLabel>(i))) +
                               "' must lie in (0,1], got " + std::to_string(ratios[i]));
        }
    }
    if (segment_us <= 0) {
        throw config_error("segment length must be positive");
    }
}

VowelLabel assign_label(i64 start_us, i64 end_us, const PhonemeAlignment& ali) {
    std::array<i64, kNumVowelClasses> overlap{};
    std::array<i64, kNumVowelClasses> first_onset{};
    first_onset.fill(-1);
    for (const auto& iv : ali.intervals) {
        const VowelLabel v = map_phone(iv.phone);
        if (v == VowelLabel::None) {
            continue;
        }
        const i64 lo = std::max(start_us, iv.start_us);
        const i64 hi = std::min(end_us, iv.end_us);
        if (hi <= lo) {
            continue;
        }
        const auto k = static_cast<std::size_t>(v);
        overlap[k] += hi - lo;
        if (first_onset[k] < 0) {
            first_onset[k] = iv.start_us;  // intervals are sorted by start
        }
    }
    VowelLabel best = VowelLabel::None;
    for (std::size_t k = 0; k < 5; ++k) {
        if (overlap[k] == 0) {
            continue;
        }
        if (best == VowelLabel::None) {
            best = static_cast<VowelLabel>(k);
            continue;
        }
        const auto b = static_cast<std::size_t>(best);
        if (overlap[k] > overlap[b] ||
            (overlap[k] == overlap[b] && first_onset[k] < first_onset[b])) {
            best = static_cast<VowelLabel>(k);
        }
    }
    return best;
}

std::vector<SegmentSpan> segment_utterance(i64 duration_us, const PhonemeAlignment& ali,
                                           const OverlapPolicy& policy) {
    std::vector<SegmentSpan> spans;
    i64 start = 0;
    while (start + policy.segment_us <= duration_us) {
        SegmentSpan s;
        s.start_us = start;
        s.end_us = start + policy.segment_us;
        s.label = assign_label(s.start_us, s.end_us, ali);
        spans.push_back(s);
        start += policy.shift_us(s.label);
    }
    return spans;
}

VowelDataset build_vowel_training_set(const std::vector<SpeakerRecord>& speakers,
                                      const OverlapPolicy& policy) {
    policy.validate();
    VowelDataset ds;
    for (const auto& spk : speakers) {
        for (std::size_t u = 0; u < spk.utterances.size(); ++u) {
            const auto& utt = spk.utterances[u];
            for (const auto& span : segment_utterance(utt.duration_us, utt.alignment, policy)) {
                VowelDatasetEntry e;
                e.speaker_id = spk.speaker_id;
                e.utterance_index = static_cast<i64>(u);
                e.start_us = span.start_us;
                e.label = span.label;
                ds.class_counts[static_cast<std::size_t>(span.label)]++;
                ds.entries.push_back(std::move(e));
            }
        }
    }
    return ds;
}

}  // namespace sdd
