#include "sdd/vowel_cnn.hpp"

#include <algorithm>
#include <cmath>

#include "sdd/error.hpp"
#include "sdd/eval.hpp"

namespace sdd {

const char* saliency_name(SaliencyStrategy s) {
    return s == SaliencyStrategy::GradNorm ? "grad" : "emb";
}

SaliencyStrategy saliency_from_name(const std::string& name) {
    if (name == "grad") {
        return SaliencyStrategy::GradNorm;
    }
    if (name == "emb") {
        return SaliencyStrategy::EmbNorm;
    }
    throw config_error("unknown saliency strategy '" + name + "' (want grad or emb)");
}

VowelCnn::VowelCnn(VowelCnnConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    Rng rng(init_seed);
    const i64 F = cfg_.filters;
    i64 cin = 1;
    for (int b = 1; b <= 3; ++b) {
        const std::string pre = "block" + std::to_string(b) + "/";
        auto w = make_tensor({F, cin, 3, 1});
        init_uniform_fanin(rng, *w, cin * 3);
        params_.add(pre + "conv/weight", w);
        auto bias = make_tensor({F});
        init_uniform_fanin(rng, *bias, cin * 3);
        params_.add(pre + "conv/bias", bias);
        params_.add(pre + "bn/gamma", full_like_shape({F}, 1.0));
        params_.add(pre + "bn/beta", make_tensor({F}));
        params_.add(pre + "bn/running_mean", make_tensor({F}), /*trainable=*/false);
        params_.add(pre + "bn/running_var", full_like_shape({F}, 1.0), /*trainable=*/false);
        cin = F;
    }
    const i64 spp_dim = cfg_.spp_out();
    auto fc_w = make_tensor({cfg_.fc_dim, spp_dim});
    init_uniform_fanin(rng, *fc_w, spp_dim);
    params_.add("fc1/weight", fc_w);
    auto fc_b = make_tensor({cfg_.fc_dim});
    init_uniform_fanin(rng, *fc_b, spp_dim);
    params_.add("fc1/bias", fc_b);
    auto out_w = make_tensor({cfg_.n_classes, cfg_.fc_dim});
    init_uniform_fanin(rng, *out_w, cfg_.fc_dim);
    params_.add("out/weight", out_w);
    auto out_b = make_tensor({cfg_.n_classes});
    init_uniform_fanin(rng, *out_b, cfg_.fc_dim);
    params_.add("out/bias", out_b);
}

VowelCnn::Graph VowelCnn::forward(const TensorPtr& x, bool training) const {
    const std::size_t rank = x->shape.size();
    if (rank != 3 && rank != 4) {
        throw dim_error("vowel forward: input must be (1,H,W) or (N,1,H,W)");
    }
    const i64 mel_axis = x->shape[rank - 2];
    if (mel_axis != cfg_.n_mels) {
        throw dim_error("vowel forward: Mel axis is " + std::to_string(mel_axis) + ", expected " +
                        std::to_string(cfg_.n_mels));
    }
    const auto& P = params_;
    TensorPtr h = x;
    for (int b = 1; b <= 3; ++b) {
        const std::string pre = "block" + std::to_string(b) + "/";
        h = conv2d(h, P.get(pre + "conv/weight"), P.get(pre + "conv/bias"), 0, 0);
        h = relu_consume(h);  // conv backward never reads its own output
        h = batch_norm2d(h, P.get(pre + "bn/gamma"), P.get(pre + "bn/beta"),
                         P.get(pre + "bn/running_mean"), P.get(pre + "bn/running_var"),
                         cfg_.bn_momentum, cfg_.bn_eps, training);
        h = max_pool2d(h, 2, 1);
    }
    h = spp(h, cfg_.spp_levels);
    h = dense(h, P.get("fc1/weight"), P.get("fc1/bias"));
    TensorPtr embedding = relu_consume(h);
    TensorPtr logits = dense(embedding, P.get("out/weight"), P.get("out/bias"));
    return {logits, embedding};
}

std::vector<std::vector<i64>> VowelCnn::probe_shapes(i64 h, i64 w) const {
    NoGradGuard ng;
    std::vector<std::vector<i64>> shapes;
    const auto& P = params_;
    TensorPtr t = make_tensor({1, h, w});
    for (int b = 1; b <= 3; ++b) {
        const std::string pre = "block" + std::to_string(b) + "/";
        t = conv2d(t, P.get(pre + "conv/weight"), P.get(pre + "conv/bias"), 0, 0);
        t = relu(t);
        t = batch_norm2d(t, P.get(pre + "bn/gamma"), P.get(pre + "bn/beta"),
                         P.get(pre + "bn/running_mean"), P.get(pre + "bn/running_var"),
                         cfg_.bn_momentum, cfg_.bn_eps, false);
        t = max_pool2d(t, 2, 1);
        shapes.push_back(t->shape);
    }
    t = spp(t, cfg_.spp_levels);
    shapes.push_back(t->shape);
    t = dense(t, P.get("fc1/weight"), P.get("fc1/bias"));
    shapes.push_back(t->shape);
    t = dense(relu(t), P.get("out/weight"), P.get("out/bias"));
    shapes.push_back(t->shape);
    return shapes;
}

VowelCnn::EmbedResult VowelCnn::embed(const LogMel& mel, SaliencyStrategy strategy,
                                      bool want_saliency) const {
    EmbedResult res;
    res.strategy = strategy;
    const bool need_grad = want_saliency && strategy == SaliencyStrategy::GradNorm;
    if (!need_grad) {
        NoGradGuard ng;
        auto g = forward(logmel_to_tensor(mel), false);
        res.embedding = g.embedding->data;
        if (want_saliency) {
            double s = 0.0;
            for (double v : res.embedding) {
                s += v * v;
            }
            res.saliency = std::sqrt(s);
        }
        return res;
    }
    auto input = logmel_to_tensor(mel, /*requires_grad=*/true);
    auto g = forward(input, false);
    res.embedding = g.embedding->data;  // copy before backward releases the graph
    // gradient of the winning logit w.r.t. the input cells
    i64 arg = 0;
    for (i64 k = 1; k < g.logits->size(); ++k) {
        if (g.logits->at(k) > g.logits->at(arg)) {
            arg = k;
        }
    }
    auto picked = pick_sum(reshape(g.logits, {1, g.logits->size()}), {arg});
    picked->backward();
    double s = 0.0;
    for (double v : input->grad) {
        s += v * v;
    }
    res.saliency = std::sqrt(s);
    return res;
}

void VowelCnn::load_state(const ModelParameters& raw) {
    for (const auto& name : raw.names()) {
        if (!params_.has(name)) {
            throw schema_error("checkpoint parameter '" + name + "' unknown to the vowel model");
        }
    }
    for (const auto& name : params_.names()) {
        if (!raw.has(name)) {
            throw schema_error("checkpoint is missing vowel model parameter '" + name + "'");
        }
    }
    params_.copy_values_from(raw);
}

namespace {

TensorPtr stack_patches(const std::vector<VowelExample>& data, const std::vector<i64>& idx,
                        std::size_t begin, std::size_t end, std::vector<i64>& targets) {
    const i64 B = static_cast<i64>(end - begin);
    const auto& first = data[static_cast<std::size_t>(idx[begin])].patch;
    const i64 H = first.n_mels;
    const i64 W = first.n_frames;
    std::vector<double> buf(static_cast<std::size_t>(B * H * W));
    targets.clear();
    for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = data[static_cast<std::size_t>(idx[i])];
        if (ex.patch.n_mels != H || ex.patch.n_frames != W) {
            throw dim_error("training patches must share one shape");
        }
        std::copy(ex.patch.values.begin(), ex.patch.values.end(),
                  buf.begin() + static_cast<i64>(i - begin) * H * W);
        targets.push_back(ex.label);
    }
    return make_tensor({B, 1, H, W}, std::move(buf));
}

std::vector<i64> predict_batched(const VowelCnn& model, const std::vector<VowelExample>& data) {
    NoGradGuard ng;
    std::vector<i64> pred;
    pred.reserve(data.size());
    const std::size_t chunk = 256;
    std::vector<i64> idx(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        idx[i] = static_cast<i64>(i);
    }
    std::vector<i64> dummy;
    for (std::size_t at = 0; at < data.size(); at += chunk) {
        const std::size_t end = std::min(data.size(), at + chunk);
        auto x = stack_patches(data, idx, at, end, dummy);
        auto g = model.forward(x, false);
        const i64 B = static_cast<i64>(end - at);
        const i64 K = model.config().n_classes;
        for (i64 n = 0; n < B; ++n) {
            i64 arg = 0;
            for (i64 k = 1; k < K; ++k) {
                if (g.logits->at(n * K + k) > g.logits->at(n * K + arg)) {
                    arg = k;
                }
            }
            pred.push_back(arg);
        }
    }
    return pred;
}

}  // namespace

VowelTrainReport train_vowel_cnn(VowelCnn& model, const std::vector<VowelExample>& train,
                                 const std::vector<VowelExample>& dev, std::uint64_t seed) {
    const auto& cfg = model.config();
    if (train.empty() || dev.empty()) {
        throw config_error("train_vowel_cnn: empty training or dev split");
    }
    std::array<bool, 16> present{};
    std::size_t distinct = 0;
    for (const auto& ex : train) {
        if (!present[static_cast<std::size_t>(ex.label)]) {
            present[static_cast<std::size_t>(ex.label)] = true;
            ++distinct;
        }
    }
    if (distinct < 2) {
        throw config_error("train_vowel_cnn: training data holds a single class");
    }

    model.unfreeze();
    Rng rng(derive_seed(seed, "train-vowel"));
    std::vector<i64> idx(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        idx[i] = static_cast<i64>(i);
    }
    std::vector<i64> labels_dev;
    labels_dev.reserve(dev.size());
    for (const auto& ex : dev) {
        labels_dev.push_back(ex.label);
    }

    VowelTrainReport rep;
    double best = -1.0;
    std::vector<std::pair<std::string, std::vector<double>>> best_state;
    i64 since_best = 0;
    for (i64 epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(idx);
        double loss_sum = 0.0;
        i64 batches = 0;
        for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(cfg.batch));
            std::vector<i64> targets;
            auto x = stack_patches(train, idx, at, end, targets);
            model.params().zero_grad();
            auto g = model.forward(x, true);
            auto loss = softmax_cross_entropy(g.logits, targets);
            loss_sum += loss->item();
            ++batches;
            loss->backward();
            adam_step(model.params(), cfg.lr, cfg.l2);
        }
        rep.epoch_train_loss.push_back(loss_sum / static_cast<double>(batches));

        const auto pred = predict_batched(model, dev);
        const auto report = classification_report(pred, labels_dev, cfg.n_classes);
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
    const auto pred = predict_batched(model, dev);
    const auto report = classification_report(pred, labels_dev, cfg.n_classes);
    for (const auto& m : report.per_class) {
        rep.dev_per_class_f1.push_back(m.f1);
    }
    model.freeze();
    return rep;
}

}  // namespace sdd
