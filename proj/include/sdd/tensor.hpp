#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sdd {

using i64 = std::int64_t;

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor participating in a reverse-mode tape. Ops record
// their inputs as parents plus a closure that scatters the output gradient;
// backward() runs the closures in reverse topological order.
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<i64> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // sized lazily on first accumulation

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    Tensor(std::vector<i64> s, std::vector<double> d, bool req);

    // element count from the shape; data may have been moved out of interior
    // nodes whose values are no longer needed
    i64 size() const { return n_; }
    bool is_leaf() const { return parents.empty(); }

    double& at(i64 i) { return data[static_cast<std::size_t>(i)]; }
    double at(i64 i) const { return data[static_cast<std::size_t>(i)]; }
    double item() const;

    void zero_grad();
    void accum_grad(const double* g, i64 n);
    // moves g into an empty grad buffer, accumulates otherwise
    void accum_grad_move(std::vector<double>&& g);

    // Runs the tape rooted here. seed_grad, when null, requires a scalar output
    // and seeds with 1. With release_graph the data and grad buffers of
    // interior nodes are freed as soon as they are no longer needed.
    void backward(const std::vector<double>* seed_grad = nullptr, bool release_graph = true);

    // Detaches from the tape (shares nothing, keeps values).
    TensorPtr detach() const;

    bool all_finite() const;

private:
    i64 n_ = 0;
};

TensorPtr make_tensor(std::vector<i64> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<i64> shape, std::vector<double> data, bool requires_grad = false);
TensorPtr full_like_shape(std::vector<i64> shape, double value, bool requires_grad = false);

namespace detail {
// Thread-local recycling pool for the large activation/grad buffers the tape
// churns through. Buffers come back fully overwritten by their consumers, so
// reuse never leaks values. Contents of a taken buffer are unspecified unless
// zeroed is requested.
std::vector<double> take_buffer(i64 n, bool zeroed);
void give_buffer(std::vector<double>&& v);
}  // namespace detail

i64 shape_product(const std::vector<i64>& shape);
std::string shape_str(const std::vector<i64>& shape);

// Disables tape recording in scope (pure inference).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

// ---- Ops. Stride is fixed at 1 for both convolutions; cross-correlation
// semantics. Inputs may be given unbatched ([C,H,W], [C,L], [D]) or batched
// with a leading N axis; the output keeps the input's rank.

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 i64 pad_h, i64 pad_w);
TensorPtr conv1d(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 i64 pad);
TensorPtr max_pool2d(const TensorPtr& x, i64 win_h, i64 win_w);
TensorPtr max_pool1d(const TensorPtr& x, i64 win);
TensorPtr spp(const TensorPtr& x, const std::vector<i64>& levels = {1, 2, 4});
TensorPtr dense(const TensorPtr& x, const TensorPtr& weights, const TensorPtr& bias);
TensorPtr relu(const TensorPtr& x);
// Consumes the input's value buffer (the input keeps its tape role; its data
// moves into the output). Valid whenever no other op reads the input's values.
TensorPtr relu_consume(const TensorPtr& x);
TensorPtr reshape(const TensorPtr& x, std::vector<i64> new_shape);

// Batch statistics in training mode (running stats updated in place with the
// given momentum); running stats in eval mode. x is [N,C,H,W] or [C,H,W].
TensorPtr batch_norm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                       const TensorPtr& running_mean, const TensorPtr& running_var,
                       double momentum, double eps, bool training);

// Mean of -log softmax(logits)[target] over the batch; logits [K] or [N,K].
TensorPtr softmax_cross_entropy(const TensorPtr& logits, const std::vector<i64>& targets);

// Sum over rows of logits[row, index[row]]; used to take d(max logit)/d(input).
TensorPtr pick_sum(const TensorPtr& x, const std::vector<i64>& indices);

// Value-only helpers (no tape).
std::vector<double> softmax_values(const double* logits, i64 k);

}  // namespace sdd
