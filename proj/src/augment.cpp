#include "sdd/augment.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "sdd/error.hpp"
#include "sdd/rng.hpp"

namespace sdd {

AugmentConfig AugmentConfig::for_window(i64 n) {
    AugmentConfig cfg;
    cfg.n = n;
    if (n == 42) {
        cfg.pos = 8;
        cfg.neg = 4;
        cfg.p = 6;
        cfg.r = 21;
    } else if (n == 21) {
        cfg.pos = 16;
        cfg.neg = 8;
        cfg.p = 2;
        cfg.r = 10;
    } else if (n == 10) {
        cfg.pos = 32;
        cfg.neg = 16;
        cfg.p = 1;
        cfg.r = 5;
    } else {
        cfg.r = n / 2;
        cfg.p = std::min<i64>(cfg.p, n - cfg.r);
    }
    return cfg;
}

void AugmentConfig::validate() const {
    std::vector<std::string> problems;
    if (n < 1) {
        problems.push_back("n must be >= 1");
    }
    if (pos < 0 || neg < 0) {
        problems.push_back("pos and neg must be >= 0");
    }
    if (p < 0) {
        problems.push_back("p must be >= 0");
    }
    if (r < 0) {
        problems.push_back("r must be >= 0");
    }
    if (p + r > n) {
        problems.push_back("p + r must not exceed n (got p=" + std::to_string(p) + ", r=" +
                           std::to_string(r) + ", n=" + std::to_string(n) + ")");
    }
    if (emb_dim < 1) {
        problems.push_back("emb_dim must be >= 1");
    }
    if (!problems.empty()) {
        std::ostringstream os;
        os << "invalid augmentation config:";
        for (const auto& p_ : problems) {
            os << "\n  - " << p_;
        }
        throw config_error(os.str());
    }
}

std::vector<i64> saliency_ranking(const std::vector<double>& saliency) {
    std::vector<i64> rank(saliency.size());
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](i64 a, i64 b) {
        return saliency[static_cast<std::size_t>(a)] > saliency[static_cast<std::size_t>(b)];
    });
    return rank;
}

std::vector<AugmentedSample> augment_speaker(const std::vector<std::vector<double>>& embeddings,
                                             const std::vector<double>& saliency, i64 label,
                                             const AugmentConfig& cfg, std::uint64_t stream_seed) {
    cfg.validate();
    const i64 U = static_cast<i64>(embeddings.size());
    if (U < 1) {
        throw config_error("augment_speaker: speaker has no utterances");
    }
    if (saliency.size() != embeddings.size()) {
        throw config_error("augment_speaker: saliency scores must cover every utterance");
    }
    for (const auto& e : embeddings) {
        if (static_cast<i64>(e.size()) != cfg.emb_dim) {
            throw dim_error("augment_speaker: embedding rows must have length " +
                            std::to_string(cfg.emb_dim));
        }
    }

    Rng rng(stream_seed);
    const i64 count = label == 1 ? cfg.pos : cfg.neg;
    const bool padded = U < cfg.n;

    std::vector<AugmentedSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (i64 s = 0; s < count; ++s) {
        AugmentedSample sample;
        sample.label = label;
        sample.padded = padded;
        sample.values.assign(static_cast<std::size_t>(cfg.n * cfg.emb_dim), cfg.c);

        const i64 start = padded ? 0 : rng.uniform_int(U - cfg.n + 1);
        sample.window_start = start;
        const i64 rows = padded ? U : cfg.n;
        for (i64 t = 0; t < rows; ++t) {
            std::copy(embeddings[static_cast<std::size_t>(start + t)].begin(),
                      embeddings[static_cast<std::size_t>(start + t)].end(),
                      sample.values.begin() + t * cfg.emb_dim);
        }

        // rank the real rows of this window by saliency
        std::vector<double> window_saliency(static_cast<std::size_t>(rows));
        for (i64 t = 0; t < rows; ++t) {
            window_saliency[static_cast<std::size_t>(t)] = saliency[static_cast<std::size_t>(start + t)];
        }
        const auto ranking = saliency_ranking(window_saliency);
        const i64 protected_count = std::min<i64>(cfg.r, rows);
        std::vector<i64> eligible(ranking.begin() + protected_count, ranking.end());
        if (static_cast<i64>(eligible.size()) < cfg.p) {
            throw config_error("augment_speaker: window has only " +
                               std::to_string(eligible.size()) + " perturbable rows, needs p=" +
                               std::to_string(cfg.p));
        }
        // partial Fisher-Yates: first p entries are a uniform draw w/o replacement
        for (i64 i = 0; i < cfg.p; ++i) {
            const i64 j = i + rng.uniform_int(static_cast<i64>(eligible.size()) - i);
            std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(j)]);
        }
        sample.perturbed.assign(eligible.begin(), eligible.begin() + cfg.p);
        std::sort(sample.perturbed.begin(), sample.perturbed.end());
        for (i64 row : sample.perturbed) {
            std::fill(sample.values.begin() + row * cfg.emb_dim,
                      sample.values.begin() + (row + 1) * cfg.emb_dim, cfg.c);
        }
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<AugmentedSample> build_depression_training_set(
    const std::vector<SpeakerEmbeddings>& speakers, const AugmentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (speakers.empty()) {
        throw config_error("build_depression_training_set: empty corpus");
    }
    std::vector<AugmentedSample> all;
    for (const auto& spk : speakers) {
        auto z = augment_speaker(*spk.embeddings, *spk.saliency, spk.label, cfg,
                                 derive_seed(seed, "augment/" + spk.speaker_id));
        for (auto& sample : z) {
            sample.speaker_id = spk.speaker_id;
            all.push_back(std::move(sample));
        }
    }
    return all;
}

}  // namespace sdd
