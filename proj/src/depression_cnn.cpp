#include "sdd/depression_cnn.hpp"

#include <algorithm>
#include <cmath>

#include "sdd/error.hpp"
#include "sdd/eval.hpp"

namespace sdd {

DepressionCnnConfig DepressionCnnConfig::for_window(i64 n) {
    DepressionCnnConfig cfg;
    cfg.window = n;
    cfg.conv_pad = n == 42 ? 0 : 3;
    return cfg;
}

std::vector<i64> DepressionCnnConfig::length_chain() const {
    std::vector<i64> chain;
    i64 len = window;
    for (int b = 0; b < 2; ++b) {
        len = len + 2 * conv_pad - kernel + 1;
        if (len < 1) {
            throw config_error("depression cnn: window " + std::to_string(window) +
                               " collapses at conv block " + std::to_string(b + 1) +
                               " with padding " + std::to_string(conv_pad));
        }
        len /= 2;
        if (len < 1) {
            throw config_error("depression cnn: window " + std::to_string(window) +
                               " collapses at pool " + std::to_string(b + 1));
        }
        chain.push_back(len);
    }
    chain.push_back(filters * len);  // flatten width
    return chain;
}

DepressionCnn::DepressionCnn(DepressionCnnConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    const auto chain = cfg_.length_chain();  // validates geometry
    Rng rng(init_seed);
    auto w1 = make_tensor({cfg_.filters, cfg_.emb_dim, cfg_.kernel});
    init_uniform_fanin(rng, *w1, cfg_.emb_dim * cfg_.kernel);
    params_.add("conv1/weight", w1);
    auto b1 = make_tensor({cfg_.filters});
    init_uniform_fanin(rng, *b1, cfg_.emb_dim * cfg_.kernel);
    params_.add("conv1/bias", b1);
    auto w2 = make_tensor({cfg_.filters, cfg_.filters, cfg_.kernel});
    init_uniform_fanin(rng, *w2, cfg_.filters * cfg_.kernel);
    params_.add("conv2/weight", w2);
    auto b2 = make_tensor({cfg_.filters});
    init_uniform_fanin(rng, *b2, cfg_.filters * cfg_.kernel);
    params_.add("conv2/bias", b2);
    const i64 flat = chain.back();
    auto fw = make_tensor({cfg_.fc_dim, flat});
    init_uniform_fanin(rng, *fw, flat);
    params_.add("fc/weight", fw);
    auto fb = make_tensor({cfg_.fc_dim});
    init_uniform_fanin(rng, *fb, flat);
    params_.add("fc/bias", fb);
    auto ow = make_tensor({cfg_.n_classes, cfg_.fc_dim});
    init_uniform_fanin(rng, *ow, cfg_.fc_dim);
    params_.add("out/weight", ow);
    auto ob = make_tensor({cfg_.n_classes});
    init_uniform_fanin(rng, *ob, cfg_.fc_dim);
    params_.add("out/bias", ob);
}

TensorPtr DepressionCnn::forward(const TensorPtr& x, bool) const {
    const std::size_t rank = x->shape.size();
    if (rank != 2 && rank != 3) {
        throw dim_error("depression forward: input must be (C,n) or (N,C,n)");
    }
    const i64 len = x->shape[rank - 1];
    if (len != cfg_.window) {
        throw dim_error("depression forward: window length " + std::to_string(len) +
                        " != configured n " + std::to_string(cfg_.window));
    }
    if (x->shape[rank - 2] != cfg_.emb_dim) {
        throw dim_error("depression forward: channel axis " + std::to_string(x->shape[rank - 2]) +
                        " != embedding dim " + std::to_string(cfg_.emb_dim));
    }
    const bool batched = rank == 3;
    const i64 N = batched ? x->shape[0] : 1;
    const auto& P = params_;
    TensorPtr h = x;
    h = conv1d(h, P.get("conv1/weight"), P.get("conv1/bias"), cfg_.conv_pad);
    h = relu_consume(h);
    h = max_pool1d(h, 2);
    h = conv1d(h, P.get("conv2/weight"), P.get("conv2/bias"), cfg_.conv_pad);
    h = relu_consume(h);
    h = max_pool1d(h, 2);
    const i64 flat = cfg_.length_chain().back();
    h = reshape(h, batched ? std::vector<i64>{N, flat} : std::vector<i64>{flat});
    h = relu_consume(dense(h, P.get("fc/weight"), P.get("fc/bias")));
    return dense(h, P.get("out/weight"), P.get("out/bias"));
}

std::vector<std::vector<i64>> DepressionCnn::probe_shapes() const {
    NoGradGuard ng;
    const auto& P = params_;
    std::vector<std::vector<i64>> shapes;
    TensorPtr t = make_tensor({cfg_.emb_dim, cfg_.window});
    t = max_pool1d(relu(conv1d(t, P.get("conv1/weight"), P.get("conv1/bias"), cfg_.conv_pad)), 2);
    shapes.push_back(t->shape);
    t = max_pool1d(relu(conv1d(t, P.get("conv2/weight"), P.get("conv2/bias"), cfg_.conv_pad)), 2);
    shapes.push_back(t->shape);
    t = relu(dense(reshape(t, {cfg_.length_chain().back()}), P.get("fc/weight"), P.get("fc/bias")));
    shapes.push_back(t->shape);
    t = dense(t, P.get("out/weight"), P.get("out/bias"));
    shapes.push_back(t->shape);
    return shapes;
}

i64 DepressionCnn::parameter_count() const { return params_.total_size(); }

void DepressionCnn::load_state(const ModelParameters& raw) {
    for (const auto& name : raw.names()) {
        if (!params_.has(name)) {
            throw schema_error("checkpoint parameter '" + name + "' unknown to the depression model");
        }
    }
    for (const auto& name : params_.names()) {
        if (!raw.has(name)) {
            throw schema_error("checkpoint is missing depression model parameter '" + name + "'");
        }
    }
    params_.copy_values_from(raw);
}

namespace {

// rows (n x emb_dim) -> channel-major (emb_dim x n)
std::vector<double> transpose_window(const double* rows, i64 n, i64 d) {
    std::vector<double> out(static_cast<std::size_t>(n * d));
    for (i64 t = 0; t < n; ++t) {
        for (i64 c = 0; c < d; ++c) {
            out[static_cast<std::size_t>(c * n + t)] = rows[t * d + c];
        }
    }
    return out;
}

}  // namespace

double DepressionCnn::window_probability(const std::vector<double>& window_rows) const {
    const i64 n = cfg_.window;
    const i64 d = cfg_.emb_dim;
    if (static_cast<i64>(window_rows.size()) != n * d) {
        throw dim_error("window_probability: expected " + std::to_string(n * d) + " values");
    }
    NoGradGuard ng;
    auto x = make_tensor({d, n}, transpose_window(window_rows.data(), n, d));
    auto logits = forward(x, false);
    const auto p = softmax_values(logits->data.data(), cfg_.n_classes);
    return p[1];
}

SpeakerPrediction predict_speaker(const DepressionCnn& model,
                                  const std::vector<std::vector<double>>& embeddings,
                                  double pad_value) {
    const i64 n = model.config().window;
    const i64 d = model.config().emb_dim;
    const i64 U = static_cast<i64>(embeddings.size());
    if (U < 1) {
        throw dim_error("predict_speaker: no utterances");
    }
    for (const auto& e : embeddings) {
        if (static_cast<i64>(e.size()) != d) {
            throw dim_error("predict_speaker: embedding rows must have length " + std::to_string(d));
        }
    }
    SpeakerPrediction out;
    const i64 n_windows = U / n;
    std::vector<double> rows(static_cast<std::size_t>(n * d), pad_value);
    if (n_windows == 0) {
        // sole short window, right-padded
        for (i64 t = 0; t < U; ++t) {
            std::copy(embeddings[static_cast<std::size_t>(t)].begin(),
                      embeddings[static_cast<std::size_t>(t)].end(),
                      rows.begin() + t * d);
        }
        out.window_probs.push_back(model.window_probability(rows));
        out.padded = true;
    } else {
        for (i64 w = 0; w < n_windows; ++w) {
            for (i64 t = 0; t < n; ++t) {
                std::copy(embeddings[static_cast<std::size_t>(w * n + t)].begin(),
                          embeddings[static_cast<std::size_t>(w * n + t)].end(),
                          rows.begin() + t * d);
            }
            out.window_probs.push_back(model.window_probability(rows));
        }
    }
    double s = 0.0;
    for (double p : out.window_probs) {
        s += p;
    }
    out.mean_prob = s / static_cast<double>(out.window_probs.size());
    out.label = out.mean_prob >= 0.5 ? 1 : 0;
    return out;
}

DepressionTrainReport train_depression_cnn(DepressionCnn& model,
                                           const std::vector<DepressionExample>& dataset,
                                           const std::vector<DevSpeaker>& dev,
                                           double pad_value, std::uint64_t seed) {
    const auto& cfg = model.config();
    if (dataset.empty()) {
        throw config_error("train_depression_cnn: empty dataset");
    }
    bool has0 = false;
    bool has1 = false;
    for (const auto& ex : dataset) {
        (ex.label == 0 ? has0 : has1) = true;
    }
    if (!has0 || !has1) {
        throw config_error("train_depression_cnn: dataset holds a single class");
    }
    if (dev.empty()) {
        throw config_error("train_depression_cnn: empty dev speaker set");
    }

    model.unfreeze();
    Rng rng(derive_seed(seed, "train-depression"));
    std::vector<i64> idx(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        idx[i] = static_cast<i64>(i);
    }
    std::vector<i64> dev_labels;
    dev_labels.reserve(dev.size());
    for (const auto& s : dev) {
        dev_labels.push_back(s.label);
    }

    const i64 n = cfg.window;
    const i64 d = cfg.emb_dim;
    DepressionTrainReport rep;
    double best = -1.0;
    std::vector<std::pair<std::string, std::vector<double>>> best_state;
    i64 since_best = 0;
    for (i64 epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(idx);
        double loss_sum = 0.0;
        i64 batches = 0;
        for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(cfg.batch));
            const i64 B = static_cast<i64>(end - at);
            std::vector<double> buf(static_cast<std::size_t>(B * d * n));
            std::vector<i64> targets;
            targets.reserve(static_cast<std::size_t>(B));
            for (std::size_t i = at; i < end; ++i) {
                const auto& ex = dataset[static_cast<std::size_t>(idx[i])];
                auto tr = transpose_window(ex.window.data(), n, d);
                std::copy(tr.begin(), tr.end(), buf.begin() + static_cast<i64>(i - at) * d * n);
                targets.push_back(ex.label);
            }
            auto x = make_tensor({B, d, n}, std::move(buf));
            model.params().zero_grad();
            auto logits = model.forward(x, true);
            auto loss = softmax_cross_entropy(logits, targets);
            loss_sum += loss->item();
            ++batches;
            loss->backward();
            adam_step(model.params(), cfg.lr, cfg.l2);
        }
        rep.epoch_train_loss.push_back(loss_sum / static_cast<double>(batches));

        std::vector<i64> pred;
        pred.reserve(dev.size());
        for (const auto& s : dev) {
            pred.push_back(predict_speaker(model, *s.embeddings, pad_value).label);
        }
        const auto report = classification_report(pred, dev_labels, cfg.n_classes);
        rep.epochs_run = epoch;
        if (report.macro_f1 > best) {
            best = report.macro_f1;
            rep.best_epoch = epoch;
            best_state.clear();
            for (const auto& name : model.params().names()) {
                best_state.emplace_back(name, model.params().get(name)->data);
            }
            since_best = 0;
        } else {
            ++since_best;
        }
        if (best >= 1.0 || since_best >= cfg.patience) {
            break;
        }
    }
    for (const auto& [name, values] : best_state) {
        model.params().get(name)->data = values;
    }
    rep.best_macro_f1 = best;
    model.freeze();
    return rep;
}

}  // namespace sdd
