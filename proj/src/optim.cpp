#include "sdd/optim.hpp"

#include <cmath>

#include "sdd/error.hpp"

namespace sdd {

TensorPtr ModelParameters::add(const std::string& name, TensorPtr value, bool trainable) {
    if (entries_.count(name)) {
        throw schema_error("parameter '" + name + "' already registered");
    }
    order_.push_back(name);
    entries_[name] = ParamEntry{value, {}, {}, trainable};
    return value;
}

bool ModelParameters::has(const std::string& name) const { return entries_.count(name) != 0; }

const TensorPtr& ModelParameters::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw schema_error("unknown parameter '" + name + "'");
    }
    return it->second.value;
}

ParamEntry& ModelParameters::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw schema_error("unknown parameter '" + name + "'");
    }
    return it->second;
}

const ParamEntry& ModelParameters::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw schema_error("unknown parameter '" + name + "'");
    }
    return it->second;
}

void ModelParameters::zero_grad() {
    for (const auto& name : order_) {
        entries_[name].value->zero_grad();
    }
}

void ModelParameters::set_requires_grad(bool on) {
    for (const auto& name : order_) {
        auto& e = entries_[name];
        e.value->requires_grad = on && e.trainable;
        if (!on) {
            e.value->grad.clear();
        }
    }
}

i64 ModelParameters::total_size() const {
    i64 n = 0;
    for (const auto& name : order_) {
        n += entries_.at(name).value->size();
    }
    return n;
}

void ModelParameters::copy_values_from(const ModelParameters& other) {
    for (const auto& name : order_) {
        const auto& src = other.get(name);
        auto& dst = entries_[name].value;
        if (src->shape != dst->shape) {
            throw dim_error("parameter '" + name + "' shape mismatch: " + shape_str(dst->shape) +
                            " vs " + shape_str(src->shape));
        }
        dst->data = src->data;
    }
}

void adam_step(ModelParameters& params, double lr, double l2) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    const i64 t = params.step_ + 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));

    for (const auto& name : params.order_) {
        auto& e = params.entries_[name];
        if (!e.trainable) {
            continue;
        }
        Tensor& w = *e.value;
        if (w.grad.size() != w.data.size()) {
            continue;  // parameter not touched by this backward pass
        }
        const i64 n = w.size();
        for (i64 i = 0; i < n; ++i) {
            if (std::isnan(w.grad[static_cast<std::size_t>(i)])) {
                throw numeric_error("NaN gradient in parameter '" + name + "'");
            }
        }
        if (e.m.empty()) {
            e.m.assign(w.data.size(), 0.0);
            e.v.assign(w.data.size(), 0.0);
        }
        double* m = e.m.data();
        double* v = e.v.data();
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < n; ++i) {
            const double g = w.grad[static_cast<std::size_t>(i)] + l2 * w.data[static_cast<std::size_t>(i)];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w.data[static_cast<std::size_t>(i)] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    params.step_ = t;
}

void init_uniform_fanin(Rng& rng, Tensor& t, i64 fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) {
        v = static_cast<double>(static_cast<float>(rng.uniform(-bound, bound)));
    }
}

}  // namespace sdd
