#pragma once

#include <string>
#include <vector>

#include "sdd/checkpoint.hpp"
#include "sdd/optim.hpp"

namespace sdd {

struct DepressionCnnConfig {
    i64 window = 42;   // utterances per input
    i64 emb_dim = 128;
    i64 filters = 32;
    i64 kernel = 7;
    i64 conv_pad = 0;  // 0 for window 42; 3 keeps short windows alive
    i64 fc_dim = 64;
    i64 n_classes = 2;
    double lr = 0.001;
    double l2 = 0.01;
    i64 batch = 16;
    i64 max_epochs = 100;
    i64 patience = 10;

    // valid padding at n=42; symmetric zero padding 3 per conv at n in {21,10}
    static DepressionCnnConfig for_window(i64 n);
    // lengths after each conv/pool pair plus the flatten width
    std::vector<i64> length_chain() const;
};

// Two 1D conv blocks (ReLU, pool 2) over the utterance axis with the 128
// embedding components as input channels, FC + ReLU, linear head.
class DepressionCnn {
public:
    DepressionCnn(DepressionCnnConfig cfg, std::uint64_t init_seed);

    const DepressionCnnConfig& config() const { return cfg_; }
    ModelParameters& params() { return params_; }
    const ModelParameters& params() const { return params_; }

    // x is (emb_dim, n) or (N, emb_dim, n)
    TensorPtr forward(const TensorPtr& x, bool training) const;

    // shapes after conv1+pool, conv2+pool, fc, head
    std::vector<std::vector<i64>> probe_shapes() const;
    i64 parameter_count() const;

    void freeze() { params_.set_requires_grad(false); }
    void unfreeze() { params_.set_requires_grad(true); }
    void load_state(const ModelParameters& raw);

    // P(depressed) for one window given as n rows of emb_dim values
    double window_probability(const std::vector<double>& window_rows) const;

private:
    DepressionCnnConfig cfg_;
    ModelParameters params_;
};

struct SpeakerPrediction {
    std::string speaker_id;
    std::vector<double> window_probs;
    double mean_prob = 0.0;
    int label = 0;      // mean >= 0.5
    bool padded = false;  // sole short window right-padded with the constant
};

// Non-overlapping windows [0,n), [n,2n), ...; the trailing partial window is
// dropped unless it is the only one, in which case it is padded with
// pad_value rows.
SpeakerPrediction predict_speaker(const DepressionCnn& model,
                                  const std::vector<std::vector<double>>& embeddings,
                                  double pad_value);

struct DepressionExample {
    std::vector<double> window;  // window*emb_dim, utterance-major rows
    i64 label = 0;
};

struct DevSpeaker {
    std::string speaker_id;
    const std::vector<std::vector<double>>* embeddings = nullptr;
    i64 label = 0;
};

struct DepressionTrainReport {
    i64 epochs_run = 0;
    i64 best_epoch = 0;
    double best_macro_f1 = 0.0;
    std::vector<double> epoch_train_loss;
};

// Early stopping on dev-speaker macro-F1 computed through predict_speaker.
DepressionTrainReport train_depression_cnn(DepressionCnn& model,
                                           const std::vector<DepressionExample>& dataset,
                                           const std::vector<DevSpeaker>& dev,
                                           double pad_value, std::uint64_t seed);

}  // namespace sdd
