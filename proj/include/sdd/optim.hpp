#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdd/rng.hpp"
#include "sdd/tensor.hpp"

namespace sdd {

struct ParamEntry {
    TensorPtr value;
    std::vector<double> m;  // first moment, sized on first step
    std::vector<double> v;  // second moment
    bool trainable = true;
};

// Named parameter set plus shared Adam state. Name order is insertion order
// and doubles as the checkpoint blob order.
class ModelParameters {
public:
    TensorPtr add(const std::string& name, TensorPtr value, bool trainable = true);
    bool has(const std::string& name) const;
    const TensorPtr& get(const std::string& name) const;  // schema_error when absent
    ParamEntry& entry(const std::string& name);
    const ParamEntry& entry(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }

    i64 step_count() const { return step_; }
    void set_step_count(i64 s) { step_ = s; }

    void zero_grad();
    void set_requires_grad(bool on);  // train vs frozen
    i64 total_size() const;

    // value copy (shapes must agree); optimizer state untouched
    void copy_values_from(const ModelParameters& other);

private:
    friend void adam_step(ModelParameters&, double, double);
    std::vector<std::string> order_;
    std::map<std::string, ParamEntry> entries_;
    i64 step_ = 0;
};

// One coupled-L2 Adam update: g <- g + l2*w, then bias-corrected moments with
// beta1=0.9, beta2=0.999, eps=1e-8. Increments the shared step counter once.
// Throws numeric_error naming the parameter if a gradient is NaN.
void adam_step(ModelParameters& params, double lr, double l2);

// Fan-in-scaled uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]. Values are
// rounded through float so a fresh model round-trips checkpoints bit-exactly.
void init_uniform_fanin(Rng& rng, Tensor& t, i64 fan_in);

}  // namespace sdd
