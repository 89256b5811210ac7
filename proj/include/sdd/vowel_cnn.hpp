#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdd/audio.hpp"
#include "sdd/checkpoint.hpp"
#include "sdd/corpus.hpp"
#include "sdd/optim.hpp"

namespace sdd {

struct VowelCnnConfig {
    i64 n_mels = 128;
    i64 filters = 64;      // per conv block
    i64 fc_dim = 128;      // embedding width
    i64 n_classes = 6;
    std::vector<i64> spp_levels{1, 2, 4};
    double lr = 0.001;
    double l2 = 0.001;
    i64 batch = 64;
    i64 max_epochs = 100;
    i64 patience = 10;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    i64 spp_out() const {
        i64 t = 0;
        for (i64 g : spp_levels) {
            t += g * g;
        }
        return filters * t;
    }
};

enum class SaliencyStrategy { GradNorm, EmbNorm };
const char* saliency_name(SaliencyStrategy s);
SaliencyStrategy saliency_from_name(const std::string& name);

// Three conv blocks (kernel (3,1), ReLU, batch-norm, pool (2,1)), SPP over
// {1,2,4}, FC + ReLU, linear head. Accepts any input width via SPP.
class VowelCnn {
public:
    VowelCnn(VowelCnnConfig cfg, std::uint64_t init_seed);

    const VowelCnnConfig& config() const { return cfg_; }
    ModelParameters& params() { return params_; }
    const ModelParameters& params() const { return params_; }

    struct Graph {
        TensorPtr logits;
        TensorPtr embedding;  // post-ReLU first-FC activation
    };
    Graph forward(const TensorPtr& x, bool training) const;

    // per-layer output shapes for an (1, n_mels, w) probe, eval mode
    std::vector<std::vector<i64>> probe_shapes(i64 h, i64 w) const;

    void freeze() { params_.set_requires_grad(false); }
    void unfreeze() { params_.set_requires_grad(true); }

    struct EmbedResult {
        std::vector<double> embedding;  // fc_dim values
        double saliency = 0.0;
        SaliencyStrategy strategy = SaliencyStrategy::GradNorm;
    };
    // Frozen-model utterance embedding; with want_saliency the requested
    // saliency score is produced from the same forward pass. Safe to call
    // from multiple threads on a frozen model.
    EmbedResult embed(const LogMel& mel, SaliencyStrategy strategy, bool want_saliency) const;

    // value load with name/shape validation
    void load_state(const ModelParameters& raw);

private:
    VowelCnnConfig cfg_;
    ModelParameters params_;
};

struct VowelExample {
    LogMel patch;
    i64 label = 0;
};

struct VowelTrainReport {
    i64 epochs_run = 0;
    i64 best_epoch = 0;
    double best_macro_f1 = 0.0;
    std::vector<double> dev_per_class_f1;
    std::vector<double> epoch_train_loss;
};

// Seeded mini-batch training with early stopping on the dev macro-F1
// (patience in epochs); the model is left holding the best parameters.
VowelTrainReport train_vowel_cnn(VowelCnn& model, const std::vector<VowelExample>& train,
                                 const std::vector<VowelExample>& dev, std::uint64_t seed);

}  // namespace sdd
