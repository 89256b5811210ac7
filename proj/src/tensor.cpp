#include "sdd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "sdd/error.hpp"
#include "sdd/kernels.hpp"

namespace sdd {

namespace {
thread_local bool g_grad_enabled = true;
}

namespace detail {

namespace {
constexpr std::size_t kPoolByteCap = 1u << 30;  // per thread
thread_local std::unordered_map<std::size_t, std::vector<std::vector<double>>> g_pool;
thread_local std::size_t g_pool_bytes = 0;
constexpr std::size_t kMinPooled = 1u << 14;  // small buffers go to malloc
}  // namespace

std::vector<double> take_buffer(i64 n, bool zeroed) {
    const auto un = static_cast<std::size_t>(n);
    if (un >= kMinPooled) {
        auto it = g_pool.find(un);
        if (it != g_pool.end() && !it->second.empty()) {
            std::vector<double> v = std::move(it->second.back());
            it->second.pop_back();
            g_pool_bytes -= un * sizeof(double);
            if (zeroed) {
                std::fill(v.begin(), v.end(), 0.0);
            }
            return v;
        }
    }
    return std::vector<double>(un, 0.0);
}

void give_buffer(std::vector<double>&& v) {
    const std::size_t un = v.size();
    if (un < kMinPooled || g_pool_bytes + un * sizeof(double) > kPoolByteCap) {
        return;  // let it free
    }
    g_pool_bytes += un * sizeof(double);
    g_pool[un].push_back(std::move(v));
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

i64 shape_product(const std::vector<i64>& shape) {
    i64 p = 1;
    for (i64 e : shape) {
        p *= e;
    }
    return p;
}

std::string shape_str(const std::vector<i64>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<i64> s, std::vector<double> d, bool req)
    : shape(std::move(s)), data(std::move(d)), requires_grad(req) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] <= 0) {
            throw dim_error("tensor: axis " + std::to_string(i) + " has non-positive extent " +
                            std::to_string(shape[i]));
        }
    }
    n_ = shape_product(shape);
    if (n_ != static_cast<i64>(data.size())) {
        throw dim_error("tensor: shape " + shape_str(shape) + " does not match data length " +
                        std::to_string(data.size()));
    }
}

double Tensor::item() const {
    if (size() != 1) {
        throw dim_error("item(): tensor has " + std::to_string(size()) + " elements");
    }
    return data[0];
}

void Tensor::zero_grad() {
    if (requires_grad) {
        grad.assign(static_cast<std::size_t>(size()), 0.0);
    }
}

void Tensor::accum_grad(const double* g, i64 n) {
    if (!requires_grad) {
        return;
    }
    if (n != size()) {
        throw dim_error("gradient length " + std::to_string(n) + " != tensor size " +
                        std::to_string(size()));
    }
    if (grad.size() != static_cast<std::size_t>(size())) {
        grad = detail::take_buffer(size(), /*zeroed=*/true);
    }
    for (i64 i = 0; i < n; ++i) {
        grad[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
    }
}

void Tensor::accum_grad_move(std::vector<double>&& g) {
    if (!requires_grad) {
        return;
    }
    if (static_cast<i64>(g.size()) != size()) {
        throw dim_error("gradient length " + std::to_string(g.size()) + " != tensor size " +
                        std::to_string(size()));
    }
    if (grad.empty()) {
        grad = std::move(g);
        return;
    }
    accum_grad(g.data(), static_cast<i64>(g.size()));
}

void Tensor::backward(const std::vector<double>* seed_grad, bool release_graph) {
    if (!requires_grad) {
        throw config_error("backward() called on a tensor outside the tape");
    }
    std::vector<double> seed;
    if (seed_grad == nullptr) {
        if (size() != 1) {
            throw dim_error("backward() without a seed requires a scalar output");
        }
        seed = {1.0};
    } else {
        if (static_cast<i64>(seed_grad->size()) != size()) {
            throw dim_error("backward() seed length mismatch");
        }
        seed = *seed_grad;
    }

    // iterative post-order DFS
    std::vector<TensorPtr> order;
    std::unordered_set<const Tensor*> visited;
    struct Frame {
        TensorPtr node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({shared_from_this(), 0});
    visited.insert(this);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorPtr p = f.node->parents[f.next_parent++];
            if (p && visited.insert(p.get()).second) {
                stack.push_back({std::move(p), 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    accum_grad(seed.data(), static_cast<i64>(seed.size()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = it->get();
        if (node->backward_fn) {
            node->backward_fn();
        }
        if (release_graph && !node->is_leaf()) {
            node->backward_fn = nullptr;
            detail::give_buffer(std::move(node->grad));
            node->grad = std::vector<double>();
            if (node != this) {
                detail::give_buffer(std::move(node->data));
                node->data = std::vector<double>();
            }
            node->parents.clear();
        }
    }
}

TensorPtr Tensor::detach() const {
    return std::make_shared<Tensor>(shape, data, false);
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

TensorPtr make_tensor(std::vector<i64> shape, bool requires_grad) {
    const i64 n = shape_product(shape);
    return std::make_shared<Tensor>(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                                    requires_grad);
}

TensorPtr make_tensor(std::vector<i64> shape, std::vector<double> data, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad);
}

TensorPtr full_like_shape(std::vector<i64> shape, double value, bool requires_grad) {
    const i64 n = shape_product(shape);
    return std::make_shared<Tensor>(std::move(shape),
                                    std::vector<double>(static_cast<std::size_t>(n), value),
                                    requires_grad);
}

namespace {

bool wants_grad(const TensorPtr& t) { return t && t->requires_grad; }

std::weak_ptr<Tensor> weak(const TensorPtr& t) { return t; }

}  // namespace

// ---------------------------------------------------------------- conv2d

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 i64 pad_h, i64 pad_w) {
    const std::size_t rank = x->shape.size();
    if (rank != 3 && rank != 4) {
        throw dim_error("conv2d: input must be (C,H,W) or (N,C,H,W), got " + shape_str(x->shape));
    }
    if (kernel->shape.size() != 4) {
        throw dim_error("conv2d: kernel must be (C_out,C_in,kH,kW), got " + shape_str(kernel->shape));
    }
    if (pad_h < 0 || pad_w < 0) {
        throw dim_error("conv2d: negative padding");
    }
    const bool batched = rank == 4;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 Cin = x->shape[batched ? 1 : 0];
    const i64 H = x->shape[batched ? 2 : 1];
    const i64 W = x->shape[batched ? 3 : 2];
    const i64 Cout = kernel->shape[0];
    const i64 kH = kernel->shape[2];
    const i64 kW = kernel->shape[3];
    if (kernel->shape[1] != Cin) {
        throw dim_error("conv2d: channel axis mismatch, input C=" + std::to_string(Cin) +
                        " vs kernel C_in=" + std::to_string(kernel->shape[1]));
    }
    if (H + 2 * pad_h < kH) {
        throw dim_error("conv2d: height axis too small, H=" + std::to_string(H) + " pad=" +
                        std::to_string(pad_h) + " kH=" + std::to_string(kH));
    }
    if (W + 2 * pad_w < kW) {
        throw dim_error("conv2d: width axis too small, W=" + std::to_string(W) + " pad=" +
                        std::to_string(pad_w) + " kW=" + std::to_string(kW));
    }
    if (bias && bias->shape != std::vector<i64>{Cout}) {
        throw dim_error("conv2d: bias must be (C_out,), got " + shape_str(bias->shape));
    }
    const i64 Ho = H + 2 * pad_h - kH + 1;
    const i64 Wo = W + 2 * pad_w - kW + 1;

    auto y = detail::take_buffer(N * Cout * Ho * Wo, false);
    kernels::conv2d_fwd(x->data.data(), kernel->data.data(), bias ? bias->data.data() : nullptr,
                        y.data(), N, Cin, H, W, Cout, kH, kW, pad_h, pad_w);

    std::vector<i64> out_shape = batched ? std::vector<i64>{N, Cout, Ho, Wo}
                                         : std::vector<i64>{Cout, Ho, Wo};
    const bool track = grad_enabled() && (wants_grad(x) || wants_grad(kernel) || wants_grad(bias));
    auto out = make_tensor(std::move(out_shape), std::move(y), track);
    if (!track) {
        return out;
    }
    out->parents = {x, kernel};
    if (bias) {
        out->parents.push_back(bias);
    }
    auto out_w = weak(out);
    out->backward_fn = [x, kernel, bias, out_w, N, Cin, H, W, Cout, kH, kW, pad_h, pad_w, Ho, Wo]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        const double* gy = out_sp->grad.data();
        if (x->requires_grad) {
            auto gx = detail::take_buffer(N * Cin * H * W, false);
            kernels::conv2d_bwd_input(gy, kernel->data.data(), gx.data(),
                                      N, Cin, H, W, Cout, kH, kW, pad_h, pad_w);
            x->accum_grad_move(std::move(gx));
        }
        if (kernel->requires_grad) {
            std::vector<double> gw(static_cast<std::size_t>(Cout * Cin * kH * kW));
            kernels::conv2d_bwd_weight(gy, x->data.data(), gw.data(),
                                       N, Cin, H, W, Cout, kH, kW, pad_h, pad_w);
            kernel->accum_grad(gw.data(), static_cast<i64>(gw.size()));
        }
        if (bias && bias->requires_grad) {
            std::vector<double> gb(static_cast<std::size_t>(Cout));
            kernels::conv2d_bwd_bias(gy, gb.data(), N, Cout, Ho, Wo);
            bias->accum_grad(gb.data(), Cout);
        }
    };
    return out;
}

// conv1d is conv2d over a height-1 plane
TensorPtr conv1d(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias, i64 pad) {
    const std::size_t rank = x->shape.size();
    if (rank != 2 && rank != 3) {
        throw dim_error("conv1d: input must be (C,L) or (N,C,L), got " + shape_str(x->shape));
    }
    if (kernel->shape.size() != 3) {
        throw dim_error("conv1d: kernel must be (C_out,C_in,k), got " + shape_str(kernel->shape));
    }
    if (pad < 0) {
        throw dim_error("conv1d: negative padding");
    }
    const bool batched = rank == 3;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 Cin = x->shape[batched ? 1 : 0];
    const i64 L = x->shape[batched ? 2 : 1];
    const i64 Cout = kernel->shape[0];
    const i64 k = kernel->shape[2];
    if (kernel->shape[1] != Cin) {
        throw dim_error("conv1d: channel axis mismatch, input C=" + std::to_string(Cin) +
                        " vs kernel C_in=" + std::to_string(kernel->shape[1]));
    }
    if (L + 2 * pad < k) {
        throw dim_error("conv1d: length axis too small, L=" + std::to_string(L) + " pad=" +
                        std::to_string(pad) + " k=" + std::to_string(k));
    }
    if (bias && bias->shape != std::vector<i64>{Cout}) {
        throw dim_error("conv1d: bias must be (C_out,), got " + shape_str(bias->shape));
    }
    const i64 Lo = L + 2 * pad - k + 1;

    auto y = detail::take_buffer(N * Cout * Lo, false);
    kernels::conv2d_fwd(x->data.data(), kernel->data.data(), bias ? bias->data.data() : nullptr,
                        y.data(), N, Cin, 1, L, Cout, 1, k, 0, pad);

    std::vector<i64> out_shape = batched ? std::vector<i64>{N, Cout, Lo} : std::vector<i64>{Cout, Lo};
    const bool track = grad_enabled() && (wants_grad(x) || wants_grad(kernel) || wants_grad(bias));
    auto out = make_tensor(std::move(out_shape), std::move(y), track);
    if (!track) {
        return out;
    }
    out->parents = {x, kernel};
    if (bias) {
        out->parents.push_back(bias);
    }
    auto out_w = weak(out);
    out->backward_fn = [x, kernel, bias, out_w, N, Cin, L, Cout, k, pad, Lo]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        const double* gy = out_sp->grad.data();
        if (x->requires_grad) {
            auto gx = detail::take_buffer(N * Cin * L, false);
            kernels::conv2d_bwd_input(gy, kernel->data.data(), gx.data(),
                                      N, Cin, 1, L, Cout, 1, k, 0, pad);
            x->accum_grad_move(std::move(gx));
        }
        if (kernel->requires_grad) {
            std::vector<double> gw(static_cast<std::size_t>(Cout * Cin * k));
            kernels::conv2d_bwd_weight(gy, x->data.data(), gw.data(),
                                       N, Cin, 1, L, Cout, 1, k, 0, pad);
            kernel->accum_grad(gw.data(), static_cast<i64>(gw.size()));
        }
        if (bias && bias->requires_grad) {
            std::vector<double> gb(static_cast<std::size_t>(Cout));
            kernels::conv2d_bwd_bias(gy, gb.data(), N, Cout, 1, Lo);
            bias->accum_grad(gb.data(), Cout);
        }
    };
    return out;
}

// ---------------------------------------------------------------- pooling

TensorPtr max_pool2d(const TensorPtr& x, i64 win_h, i64 win_w) {
    const std::size_t rank = x->shape.size();
    if (rank != 3 && rank != 4) {
        throw dim_error("max_pool: input must be (C,H,W) or (N,C,H,W), got " + shape_str(x->shape));
    }
    if (win_h < 1 || win_w < 1) {
        throw dim_error("max_pool: window extents must be >= 1");
    }
    const bool batched = rank == 4;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 C = x->shape[batched ? 1 : 0];
    const i64 H = x->shape[batched ? 2 : 1];
    const i64 W = x->shape[batched ? 3 : 2];
    if (win_h > H) {
        throw dim_error("max_pool: window " + std::to_string(win_h) + " larger than height axis " +
                        std::to_string(H));
    }
    if (win_w > W) {
        throw dim_error("max_pool: window " + std::to_string(win_w) + " larger than width axis " +
                        std::to_string(W));
    }
    const i64 Ho = H / win_h;
    const i64 Wo = W / win_w;
    auto y = detail::take_buffer(N * C * Ho * Wo, false);
    auto argmax = std::make_shared<std::vector<i64>>(y.size());
    kernels::maxpool2d_fwd(x->data.data(), y.data(), argmax->data(), N, C, H, W, win_h, win_w);

    std::vector<i64> out_shape = batched ? std::vector<i64>{N, C, Ho, Wo}
                                         : std::vector<i64>{C, Ho, Wo};
    const bool track = grad_enabled() && wants_grad(x);
    auto out = make_tensor(std::move(out_shape), std::move(y), track);
    if (!track) {
        return out;
    }
    const i64 n_in = x->size();
    out->parents = {x};
    auto out_w = weak(out);
    out->backward_fn = [x, out_w, argmax, n_in]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        auto gx = detail::take_buffer(n_in, false);
        kernels::maxpool2d_bwd(out_sp->grad.data(), argmax->data(), gx.data(),
                               out_sp->size(), n_in);
        x->accum_grad_move(std::move(gx));
    };
    return out;
}

TensorPtr max_pool1d(const TensorPtr& x, i64 win) {
    const std::size_t rank = x->shape.size();
    if (rank != 2 && rank != 3) {
        throw dim_error("max_pool1d: input must be (C,L) or (N,C,L), got " + shape_str(x->shape));
    }
    if (win < 1) {
        throw dim_error("max_pool1d: window must be >= 1");
    }
    const bool batched = rank == 3;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 C = x->shape[batched ? 1 : 0];
    const i64 L = x->shape[batched ? 2 : 1];
    if (win > L) {
        throw dim_error("max_pool1d: window " + std::to_string(win) + " larger than length axis " +
                        std::to_string(L));
    }
    const i64 Lo = L / win;
    auto y = detail::take_buffer(N * C * Lo, false);
    auto argmax = std::make_shared<std::vector<i64>>(y.size());
    kernels::maxpool2d_fwd(x->data.data(), y.data(), argmax->data(), N, C, 1, L, 1, win);

    std::vector<i64> out_shape = batched ? std::vector<i64>{N, C, Lo} : std::vector<i64>{C, Lo};
    const bool track = grad_enabled() && wants_grad(x);
    auto out = make_tensor(std::move(out_shape), std::move(y), track);
    if (!track) {
        return out;
    }
    const i64 n_in = x->size();
    out->parents = {x};
    auto out_w = weak(out);
    out->backward_fn = [x, out_w, argmax, n_in]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        auto gx = detail::take_buffer(n_in, false);
        kernels::maxpool2d_bwd(out_sp->grad.data(), argmax->data(), gx.data(),
                               out_sp->size(), n_in);
        x->accum_grad_move(std::move(gx));
    };
    return out;
}

// ---------------------------------------------------------------- spp

TensorPtr spp(const TensorPtr& x, const std::vector<i64>& levels) {
    const std::size_t rank = x->shape.size();
    if (rank != 3 && rank != 4) {
        throw dim_error("spp: input must be (C,H,W) or (N,C,H,W), got " + shape_str(x->shape));
    }
    if (levels.empty()) {
        throw dim_error("spp: empty level set");
    }
    const bool batched = rank == 4;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 C = x->shape[batched ? 1 : 0];
    const i64 H = x->shape[batched ? 2 : 1];
    const i64 W = x->shape[batched ? 3 : 2];
    i64 T = 0;
    for (i64 g : levels) {
        if (g < 1) {
            throw dim_error("spp: grid size must be >= 1");
        }
        T += g * g;
    }
    auto y = detail::take_buffer(N * C * T, false);
    auto argmax = std::make_shared<std::vector<i64>>(y.size());
    kernels::spp_fwd(x->data.data(), y.data(), argmax->data(), N, C, H, W, levels);

    std::vector<i64> out_shape = batched ? std::vector<i64>{N, C * T} : std::vector<i64>{C * T};
    const bool track = grad_enabled() && wants_grad(x);
    auto out = make_tensor(std::move(out_shape), std::move(y), track);
    if (!track) {
        return out;
    }
    const i64 n_in = x->size();
    out->parents = {x};
    auto out_w = weak(out);
    out->backward_fn = [x, out_w, argmax, n_in, N, C, T]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        auto gx = detail::take_buffer(n_in, false);
        kernels::spp_bwd(out_sp->grad.data(), argmax->data(), gx.data(), N * C, T, n_in);
        x->accum_grad_move(std::move(gx));
    };
    return out;
}

// ---------------------------------------------------------------- dense

TensorPtr dense(const TensorPtr& x, const TensorPtr& weights, const TensorPtr& bias) {
    const std::size_t rank = x->shape.size();
    if (rank != 1 && rank != 2) {
        throw dim_error("dense: input must be (D,) or (N,D), got " + shape_str(x->shape));
    }
    if (weights->shape.size() != 2) {
        throw dim_error("dense: weights must be (D_out,D_in), got " + shape_str(weights->shape));
    }
    const bool batched = rank == 2;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 Din = x->shape[batched ? 1 : 0];
    const i64 Dout = weights->shape[0];
    if (weights->shape[1] != Din) {
        throw dim_error("dense: input axis D_in=" + std::to_string(Din) +
                        " != weight axis D_in=" + std::to_string(weights->shape[1]));
    }
    if (bias && bias->shape != std::vector<i64>{Dout}) {
        throw dim_error("dense: bias must be (D_out,), got " + shape_str(bias->shape));
    }
    auto y = detail::take_buffer(N * Dout, false);
    kernels::dense_fwd(x->data.data(), weights->data.data(), bias ? bias->data.data() : nullptr,
                       y.data(), N, Din, Dout);
    std::vector<i64> out_shape = batched ? std::vector<i64>{N, Dout} : std::vector<i64>{Dout};
    const bool track = grad_enabled() && (wants_grad(x) || wants_grad(weights) || wants_grad(bias));
    auto out = make_tensor(std::move(out_shape), std::move(y), track);
    if (!track) {
        return out;
    }
    out->parents = {x, weights};
    if (bias) {
        out->parents.push_back(bias);
    }
    auto out_w = weak(out);
    out->backward_fn = [x, weights, bias, out_w, N, Din, Dout]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        const double* gy = out_sp->grad.data();
        if (x->requires_grad) {
            auto gx = detail::take_buffer(N * Din, false);
            kernels::dense_bwd_input(gy, weights->data.data(), gx.data(), N, Din, Dout);
            x->accum_grad_move(std::move(gx));
        }
        if (weights->requires_grad) {
            std::vector<double> gw(static_cast<std::size_t>(Dout * Din));
            kernels::dense_bwd_weight(gy, x->data.data(), gw.data(), N, Din, Dout);
            weights->accum_grad(gw.data(), static_cast<i64>(gw.size()));
        }
        if (bias && bias->requires_grad) {
            std::vector<double> gb(static_cast<std::size_t>(Dout));
            kernels::dense_bwd_bias(gy, gb.data(), N, Dout);
            bias->accum_grad(gb.data(), Dout);
        }
    };
    return out;
}

// ---------------------------------------------------------------- relu / reshape

namespace {

// shared wiring: the mask comes from the output values (y > 0 iff x > 0)
TensorPtr relu_node(const TensorPtr& x, std::vector<double>&& y) {
    const bool track = grad_enabled() && wants_grad(x);
    auto out = make_tensor(x->shape, std::move(y), track);
    if (!track) {
        return out;
    }
    out->parents = {x};
    auto out_w = weak(out);
    out->backward_fn = [x, out_w]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        const i64 n = out_sp->size();
        auto gx = detail::take_buffer(n, false);
        kernels::relu_bwd(out_sp->data.data(), out_sp->grad.data(), gx.data(), n);
        x->accum_grad_move(std::move(gx));
    };
    return out;
}

}  // namespace

TensorPtr relu(const TensorPtr& x) {
    auto y = detail::take_buffer(x->size(), false);
    kernels::relu_fwd(x->data.data(), y.data(), x->size());
    return relu_node(x, std::move(y));
}

TensorPtr relu_consume(const TensorPtr& x) {
    if (x->data.empty()) {
        throw dim_error("relu_consume: input values already moved out");
    }
    std::vector<double> y = std::move(x->data);
    kernels::relu_fwd(y.data(), y.data(), static_cast<i64>(y.size()));
    return relu_node(x, std::move(y));
}

TensorPtr reshape(const TensorPtr& x, std::vector<i64> new_shape) {
    if (shape_product(new_shape) != x->size()) {
        throw dim_error("reshape: " + shape_str(x->shape) + " -> " + shape_str(new_shape) +
                        " changes element count");
    }
    const bool track = grad_enabled() && wants_grad(x);
    auto out = make_tensor(std::move(new_shape), x->data, track);
    if (!track) {
        return out;
    }
    out->parents = {x};
    auto out_w = weak(out);
    out->backward_fn = [x, out_w]() {
        auto out_sp = out_w.lock();
        if (out_sp) {
            x->accum_grad(out_sp->grad.data(), out_sp->size());
        }
    };
    return out;
}

// ---------------------------------------------------------------- batch norm

TensorPtr batch_norm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                       const TensorPtr& running_mean, const TensorPtr& running_var,
                       double momentum, double eps, bool training) {
    const std::size_t rank = x->shape.size();
    if (rank != 3 && rank != 4) {
        throw dim_error("batch_norm: input must be (C,H,W) or (N,C,H,W), got " + shape_str(x->shape));
    }
    const bool batched = rank == 4;
    const i64 N = batched ? x->shape[0] : 1;
    const i64 C = x->shape[batched ? 1 : 0];
    const i64 HW = x->shape[batched ? 2 : 1] * x->shape[batched ? 3 : 2];
    for (const auto& [t, name] : {std::pair{gamma, "gamma"}, {beta, "beta"},
                                  {running_mean, "running_mean"}, {running_var, "running_var"}}) {
        if (t->shape != std::vector<i64>{C}) {
            throw dim_error(std::string("batch_norm: ") + name + " must be (C,), got " +
                            shape_str(t->shape));
        }
    }

    std::vector<double> mean(static_cast<std::size_t>(C));
    std::vector<double> var(static_cast<std::size_t>(C));
    if (training) {
        kernels::bn2d_stats(x->data.data(), N, C, HW, mean.data(), var.data());
        const double m = static_cast<double>(N * HW);
        const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
        for (i64 c = 0; c < C; ++c) {
            running_mean->at(c) = (1.0 - momentum) * running_mean->at(c) + momentum * mean[c];
            running_var->at(c) = (1.0 - momentum) * running_var->at(c) + momentum * var[c] * unbias;
        }
    } else {
        mean = running_mean->data;
        var = running_var->data;
    }
    auto stats = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>();
    stats->first = std::move(mean);
    stats->second.resize(static_cast<std::size_t>(C));
    for (i64 c = 0; c < C; ++c) {
        stats->second[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[c] + eps);
    }

    auto y = detail::take_buffer(x->size(), false);
    kernels::bn2d_fwd(x->data.data(), stats->first.data(), stats->second.data(),
                      gamma->data.data(), beta->data.data(), y.data(), N, C, HW);

    const bool track = grad_enabled() && (wants_grad(x) || wants_grad(gamma) || wants_grad(beta));
    auto out = make_tensor(x->shape, std::move(y), track);
    if (!track) {
        return out;
    }
    out->parents = {x, gamma, beta};
    auto out_w = weak(out);
    out->backward_fn = [x, gamma, beta, out_w, stats, N, C, HW, training]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        auto gx = detail::take_buffer(x->size(), false);
        std::vector<double> ggamma(static_cast<std::size_t>(C));
        std::vector<double> gbeta(static_cast<std::size_t>(C));
        kernels::bn2d_bwd(out_sp->grad.data(), x->data.data(), stats->first.data(),
                          gamma->data.data(), stats->second.data(), gx.data(), ggamma.data(),
                          gbeta.data(), N, C, HW, training);
        if (x->requires_grad) {
            x->accum_grad_move(std::move(gx));
        }
        if (gamma->requires_grad) {
            gamma->accum_grad(ggamma.data(), C);
        }
        if (beta->requires_grad) {
            beta->accum_grad(gbeta.data(), C);
        }
    };
    return out;
}

// ---------------------------------------------------------------- losses

std::vector<double> softmax_values(const double* logits, i64 k) {
    double mx = logits[0];
    for (i64 i = 1; i < k; ++i) {
        mx = std::max(mx, logits[i]);
    }
    std::vector<double> p(static_cast<std::size_t>(k));
    double z = 0.0;
    for (i64 i = 0; i < k; ++i) {
        p[static_cast<std::size_t>(i)] = std::exp(logits[i] - mx);
        z += p[static_cast<std::size_t>(i)];
    }
    for (auto& v : p) {
        v /= z;
    }
    return p;
}

TensorPtr softmax_cross_entropy(const TensorPtr& logits, const std::vector<i64>& targets) {
    const std::size_t rank = logits->shape.size();
    if (rank != 1 && rank != 2) {
        throw dim_error("softmax_cross_entropy: logits must be (K,) or (N,K)");
    }
    const bool batched = rank == 2;
    const i64 N = batched ? logits->shape[0] : 1;
    const i64 K = logits->shape[batched ? 1 : 0];
    if (static_cast<i64>(targets.size()) != N) {
        throw dim_error("softmax_cross_entropy: " + std::to_string(targets.size()) +
                        " targets for batch of " + std::to_string(N));
    }
    for (i64 t : targets) {
        if (t < 0 || t >= K) {
            throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(t) +
                                    " out of range [0," + std::to_string(K) + ")");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(logits->data.size());
    double loss = 0.0;
    for (i64 n = 0; n < N; ++n) {
        const double* row = logits->data.data() + n * K;
        auto p = softmax_values(row, K);
        double mx = row[0];
        for (i64 i = 1; i < K; ++i) {
            mx = std::max(mx, row[i]);
        }
        double lse = 0.0;
        for (i64 i = 0; i < K; ++i) {
            lse += std::exp(row[i] - mx);
        }
        lse = std::log(lse) + mx;
        loss += lse - row[targets[static_cast<std::size_t>(n)]];
        std::copy(p.begin(), p.end(), probs->begin() + n * K);
    }
    loss /= static_cast<double>(N);

    const bool track = grad_enabled() && wants_grad(logits);
    auto out = make_tensor({1}, {loss}, track);
    if (!track) {
        return out;
    }
    out->parents = {logits};
    auto out_w = weak(out);
    out->backward_fn = [logits, out_w, probs, targets, N, K]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        const double gy = out_sp->grad[0] / static_cast<double>(N);
        std::vector<double> g(logits->data.size());
        for (i64 n = 0; n < N; ++n) {
            for (i64 kk = 0; kk < K; ++kk) {
                double v = (*probs)[static_cast<std::size_t>(n * K + kk)];
                if (kk == targets[static_cast<std::size_t>(n)]) {
                    v -= 1.0;
                }
                g[static_cast<std::size_t>(n * K + kk)] = v * gy;
            }
        }
        logits->accum_grad(g.data(), logits->size());
    };
    return out;
}

TensorPtr pick_sum(const TensorPtr& x, const std::vector<i64>& indices) {
    if (x->shape.size() != 2) {
        throw dim_error("pick_sum: input must be (N,K)");
    }
    const i64 N = x->shape[0];
    const i64 K = x->shape[1];
    if (static_cast<i64>(indices.size()) != N) {
        throw dim_error("pick_sum: index count mismatch");
    }
    double s = 0.0;
    for (i64 n = 0; n < N; ++n) {
        const i64 idx = indices[static_cast<std::size_t>(n)];
        if (idx < 0 || idx >= K) {
            throw std::out_of_range("pick_sum: index out of range");
        }
        s += x->at(n * K + idx);
    }
    const bool track = grad_enabled() && wants_grad(x);
    auto out = make_tensor({1}, {s}, track);
    if (!track) {
        return out;
    }
    out->parents = {x};
    auto out_w = weak(out);
    out->backward_fn = [x, out_w, indices, N, K]() {
        auto out_sp = out_w.lock();
        if (!out_sp) {
            return;
        }
        std::vector<double> g(x->data.size(), 0.0);
        for (i64 n = 0; n < N; ++n) {
            g[static_cast<std::size_t>(n * K + indices[static_cast<std::size_t>(n)])] = out_sp->grad[0];
        }
        x->accum_grad(g.data(), x->size());
    };
    return out;
}

}  // namespace sdd
