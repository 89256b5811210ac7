#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdd/tensor.hpp"

namespace sdd {

struct AugmentConfig {
    i64 n = 42;       // window size in utterances
    i64 pos = 8;      // samples per depressed speaker
    i64 neg = 4;      // samples per non-depressed speaker
    i64 p = 6;        // utterances perturbed per sample
    i64 r = 21;       // top-saliency utterances protected
    double c = 0.001; // perturbation constant, fills the whole row
    i64 emb_dim = 128;

    // published parameter sets: n=42 -> (8,4,6), n=21 -> (16,8,2),
    // n=10 -> (32,16,1); r scales as n/2
    static AugmentConfig for_window(i64 n);
    void validate() const;  // collects every violated constraint
};

struct AugmentedSample {
    std::vector<double> values;  // n x emb_dim, utterance-major rows
    i64 label = 0;
    std::string speaker_id;
    i64 window_start = 0;
    std::vector<i64> perturbed;  // row indices replaced by the constant
    bool padded = false;         // speaker had fewer than n utterances
};

// Saliency ranking of the given scores: descending, ties to the lower index.
std::vector<i64> saliency_ranking(const std::vector<double>& saliency);

// Algorithm: draw pos/neg windows uniformly (with replacement across draws),
// rank saliency inside the window, draw p rows uniformly without replacement
// from outside the top r, replace each with the constant vector. Speakers
// shorter than n get one all-utterance window right-padded with constant
// rows; padded rows join neither the ranking nor the perturbation pool.
std::vector<AugmentedSample> augment_speaker(const std::vector<std::vector<double>>& embeddings,
                                             const std::vector<double>& saliency, i64 label,
                                             const AugmentConfig& cfg, std::uint64_t stream_seed);

struct SpeakerEmbeddings {
    std::string speaker_id;
    const std::vector<std::vector<double>>* embeddings = nullptr;
    const std::vector<double>* saliency = nullptr;
    i64 label = 0;
};

// Union of per-speaker sets; each speaker draws from a stream derived from
// (seed, speaker_id), so the result is independent of iteration order.
std::vector<AugmentedSample> build_depression_training_set(
    const std::vector<SpeakerEmbeddings>& speakers, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace sdd
