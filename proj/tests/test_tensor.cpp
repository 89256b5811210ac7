#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fd_check.hpp"
#include "sdd/checkpoint.hpp"
#include "sdd/error.hpp"
#include "sdd/optim.hpp"
#include "sdd/tensor.hpp"

using namespace sdd;
namespace fs = std::filesystem;

namespace {

TensorPtr randt(std::vector<i64> shape, Rng& rng, bool grad = false) {
    auto t = make_tensor(std::move(shape), grad);
    for (auto& v : t->data) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

}  // namespace

TEST_CASE("conv2d shape chain and identity kernel") {
    Rng rng(1);
    // (1,128,28) with 64 kernels (3,1) -> (64,126,28)
    auto x = randt({1, 128, 28}, rng);
    auto k = randt({64, 1, 3, 1}, rng);
    auto y = conv2d(x, k, nullptr, 0, 0);
    CHECK(y->shape == std::vector<i64>{64, 126, 28});

    // center-weight identity kernel copies rows 1..H-2
    auto ident = make_tensor({1, 1, 3, 1});
    ident->at(1) = 1.0;
    auto xi = randt({1, 6, 4}, rng);
    auto yi = conv2d(xi, ident, nullptr, 0, 0);
    CHECK(yi->shape == std::vector<i64>{1, 4, 4});
    for (i64 h = 0; h < 4; ++h) {
        for (i64 w = 0; w < 4; ++w) {
            CHECK(yi->at(h * 4 + w) == doctest::Approx(xi->at((h + 1) * 4 + w)).epsilon(1e-12));
        }
    }

    // all-zero input -> all-zero output
    auto zero = make_tensor({2, 5, 4});
    auto kz = randt({3, 2, 2, 2}, rng);
    auto yz = conv2d(zero, kz, nullptr, 1, 1);
    for (double v : yz->data) {
        CHECK(v == 0.0);
    }

    CHECK_THROWS_AS(conv2d(randt({2, 5, 5}, rng), randt({4, 3, 3, 3}, rng), nullptr, 0, 0), dim_error);
    CHECK_THROWS_AS(conv2d(randt({2, 2, 5}, rng), randt({4, 2, 3, 3}, rng), nullptr, 0, 0), dim_error);
}

TEST_CASE("conv1d shapes, channel copy, padded length") {
    Rng rng(2);
    auto x = randt({128, 42}, rng);
    auto k = randt({32, 128, 7}, rng);
    CHECK(conv1d(x, k, nullptr, 0)->shape == std::vector<i64>{32, 36});

    // k=1 kernel selecting channel 1 copies it
    auto xs = randt({3, 9}, rng);
    auto ks = make_tensor({1, 3, 1});
    ks->at(1) = 1.0;
    auto ys = conv1d(xs, ks, nullptr, 0);
    CHECK(ys->shape == std::vector<i64>{1, 9});
    for (i64 t = 0; t < 9; ++t) {
        CHECK(ys->at(t) == doctest::Approx(xs->at(9 + t)).epsilon(1e-12));
    }

    // padded: (128,21), k=7, pad 3 -> 21
    auto xp = randt({128, 21}, rng);
    CHECK(conv1d(xp, k, nullptr, 3)->shape == std::vector<i64>{32, 21});

    CHECK_THROWS_AS(conv1d(randt({4, 3}, rng), randt({2, 4, 7}, rng), nullptr, 0), dim_error);
}

TEST_CASE("max_pool windows, floor semantics, constants") {
    Rng rng(3);
    auto a = randt({64, 126, 28}, rng);
    CHECK(max_pool2d(a, 2, 1)->shape == std::vector<i64>{64, 63, 28});
    auto b = randt({64, 61, 28}, rng);
    CHECK(max_pool2d(b, 2, 1)->shape == std::vector<i64>{64, 30, 28});

    auto c = full_like_shape({2, 6, 6}, 3.25);
    auto yc = max_pool2d(c, 2, 3);
    CHECK(yc->shape == std::vector<i64>{2, 3, 2});
    for (double v : yc->data) {
        CHECK(v == 3.25);
    }

    CHECK_THROWS_AS(max_pool2d(randt({2, 3, 3}, rng), 4, 1), dim_error);
    CHECK_THROWS_AS(max_pool1d(randt({2, 3}, rng), 5), dim_error);
}

TEST_CASE("spp fixed-length output and constant propagation") {
    Rng rng(4);
    CHECK(spp(randt({64, 14, 28}, rng))->shape == std::vector<i64>{1344});
    CHECK(spp(randt({64, 5, 7}, rng))->shape == std::vector<i64>{1344});
    CHECK(spp(randt({2, 64, 5, 7}, rng))->shape == std::vector<i64>{2, 1344});

    auto c = full_like_shape({3, 4, 9}, -1.5);
    auto y = spp(c);
    CHECK(y->shape == std::vector<i64>{3 * 21});
    for (double v : y->data) {
        CHECK(v == -1.5);
    }

    // assorted sizes: length is always C*21
    for (i64 h : {1, 2, 3, 17, 64, 256}) {
        for (i64 w : {1, 5, 31, 256}) {
            auto t = make_tensor({1, h, w});
            t->at((h / 2) * w) = 1.0;
            CHECK(spp(t)->shape == std::vector<i64>{21});
        }
    }
    CHECK_THROWS_AS(spp(randt({4, 4}, rng)), dim_error);
}

TEST_CASE("batch_norm train/eval behavior") {
    Rng rng(5);
    const i64 N = 8, C = 3, H = 4, W = 5;
    auto gamma = full_like_shape({C}, 1.0);
    auto beta = make_tensor({C});
    auto rm = make_tensor({C});
    auto rv = full_like_shape({C}, 1.0);

    // standardized batch stays ~identical under gamma=1, beta=0
    auto x = make_tensor({N, C, H, W});
    for (i64 c = 0; c < C; ++c) {
        double s = 0.0, s2 = 0.0;
        std::vector<double> vals(N * H * W);
        for (auto& v : vals) {
            v = rng.uniform(-2.0, 2.0);
            s += v;
        }
        s /= static_cast<double>(vals.size());
        for (auto& v : vals) {
            v -= s;
            s2 += v * v;
        }
        s2 = std::sqrt(s2 / static_cast<double>(vals.size()));
        i64 at = 0;
        for (i64 n = 0; n < N; ++n) {
            for (i64 t = 0; t < H * W; ++t) {
                x->at((n * C + c) * H * W + t) = vals[static_cast<std::size_t>(at++)] / s2;
            }
        }
    }
    auto y = batch_norm2d(x, gamma, beta, rm, rv, 0.1, 1e-5, true);
    for (i64 i = 0; i < y->size(); ++i) {
        CHECK(y->at(i) == doctest::Approx(x->at(i)).epsilon(1e-4));
    }

    // gamma = 0 -> output equals beta
    auto g0 = make_tensor({C});
    auto b7 = full_like_shape({C}, 0.7);
    auto y0 = batch_norm2d(randt({N, C, H, W}, rng), g0, b7, rm, rv, 0.1, 1e-5, true);
    for (double v : y0->data) {
        CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
    }

    // eval mode: deterministic, batch-size independent
    auto rm2 = randt({C}, rng);
    auto rv2 = full_like_shape({C}, 2.0);
    auto one = randt({1, C, H, W}, rng);
    auto big = make_tensor({4, C, H, W});
    std::copy(one->data.begin(), one->data.end(), big->data.begin());
    auto ye1 = batch_norm2d(one, gamma, b7, rm2, rv2, 0.1, 1e-5, false);
    auto ye4 = batch_norm2d(big, gamma, b7, rm2, rv2, 0.1, 1e-5, false);
    for (i64 i = 0; i < ye1->size(); ++i) {
        CHECK(ye1->at(i) == ye4->at(i));
    }
}

TEST_CASE("dense contract") {
    Rng rng(6);
    auto x = randt({1344}, rng);
    auto w = randt({128, 1344}, rng);
    auto b = randt({128}, rng);
    CHECK(dense(x, w, b)->shape == std::vector<i64>{128});

    // identity weights, zero bias
    auto eye = make_tensor({4, 4});
    for (i64 i = 0; i < 4; ++i) {
        eye->at(i * 4 + i) = 1.0;
    }
    auto xi = randt({4}, rng);
    auto yi = dense(xi, eye, make_tensor({4}));
    for (i64 i = 0; i < 4; ++i) {
        CHECK(yi->at(i) == xi->at(i));
    }

    // zero input -> bias
    auto bias = randt({3}, rng);
    auto yb = dense(make_tensor({4}), randt({3, 4}, rng), bias);
    for (i64 i = 0; i < 3; ++i) {
        CHECK(yb->at(i) == bias->at(i));
    }

    CHECK_THROWS_AS(dense(randt({5}, rng), randt({3, 4}, rng), nullptr), dim_error);
}

TEST_CASE("softmax cross entropy values and invariants") {
    // uniform logits, K=6 -> ln 6
    auto l6 = make_tensor({6});
    CHECK(softmax_cross_entropy(l6, {3})->item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));

    // saturated correct logit -> ~0
    auto big = make_tensor({4});
    big->at(2) = 1000.0;
    CHECK(softmax_cross_entropy(big, {2})->item() == doctest::Approx(0.0).epsilon(1e-9));

    // K=2, logits (0,0), target 1 -> ln 2
    auto l2 = make_tensor({2});
    CHECK(softmax_cross_entropy(l2, {1})->item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(softmax_cross_entropy(l2, {2}), std::out_of_range);

    // softmax sums to 1 within 1e-9
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> logits(static_cast<std::size_t>(2 + rng.uniform_int(9)));
        for (auto& v : logits) {
            v = rng.uniform(-30.0, 30.0);
        }
        auto p = softmax_values(logits.data(), static_cast<i64>(logits.size()));
        double s = 0.0;
        for (double v : p) {
            s += v;
        }
        CHECK(std::fabs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(8);
    const double tol = 1e-4;
    auto run = [&](const char* name, const sdd::testing::OpBuilder& op,
                   std::vector<std::vector<i64>> shapes) {
        auto res = sdd::testing::check_gradients(op, shapes, rng);
        INFO(name << ": " << res.worst);
        CHECK(res.max_rel_err < tol);
    };

    for (int trial = 0; trial < 3; ++trial) {
        run("conv2d",
            [](const std::vector<TensorPtr>& in) { return conv2d(in[0], in[1], in[2], 1, 0); },
            {{2, 2, 5, 4}, {3, 2, 3, 2}, {3}});
        run("conv1d",
            [](const std::vector<TensorPtr>& in) { return conv1d(in[0], in[1], in[2], 2); },
            {{2, 3, 8}, {2, 3, 5}, {2}});
        run("max_pool2d",
            [](const std::vector<TensorPtr>& in) { return max_pool2d(in[0], 2, 2); },
            {{2, 2, 5, 6}});
        run("spp",
            [](const std::vector<TensorPtr>& in) { return spp(in[0]); },
            {{1, 2, 5, 6}});
        run("dense",
            [](const std::vector<TensorPtr>& in) { return dense(in[0], in[1], in[2]); },
            {{3, 6}, {4, 6}, {4}});
        run("relu",
            [](const std::vector<TensorPtr>& in) { return relu(in[0]); },
            {{37}});
        run("batch_norm train",
            [](const std::vector<TensorPtr>& in) {
                auto rm = make_tensor({2});
                auto rv = full_like_shape({2}, 1.0);
                return batch_norm2d(in[0], in[1], in[2], rm, rv, 0.1, 1e-5, true);
            },
            {{3, 2, 2, 3}, {2}, {2}});
        run("softmax_cross_entropy",
            [](const std::vector<TensorPtr>& in) { return softmax_cross_entropy(in[0], {1, 0, 3}); },
            {{3, 4}});
        run("pick_sum",
            [](const std::vector<TensorPtr>& in) { return pick_sum(in[0], {2, 0}); },
            {{2, 3}});
    }
}

TEST_CASE("adam closed-form first steps and determinism") {
    // w=1, g=1, lr=0.001, l2=0 -> w ~ 0.999
    {
        ModelParameters p;
        auto w = full_like_shape({1}, 1.0, true);
        p.add("w", w);
        w->grad = {1.0};
        adam_step(p, 0.001, 0.0);
        CHECK(w->at(0) == doctest::Approx(1.0 - 0.001 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
        CHECK(p.step_count() == 1);
    }
    // zero gradient, l2=0 -> unchanged
    {
        ModelParameters p;
        auto w = full_like_shape({3}, 0.5, true);
        p.add("w", w);
        w->grad = {0.0, 0.0, 0.0};
        adam_step(p, 0.001, 0.0);
        for (double v : w->data) {
            CHECK(v == 0.5);
        }
    }
    // w=1, g=0, l2=0.001 -> effective gradient 0.001, w decreases by ~lr
    {
        ModelParameters p;
        auto w = full_like_shape({1}, 1.0, true);
        p.add("w", w);
        w->grad = {0.0};
        adam_step(p, 0.001, 0.001);
        const double g = 0.001;
        const double expect = 1.0 - 0.001 * g / (g + 1e-8);
        CHECK(w->at(0) == doctest::Approx(expect).epsilon(1e-9));
        CHECK(w->at(0) < 1.0);
    }
    // NaN gradient -> numeric_error naming the parameter
    {
        ModelParameters p;
        auto w = full_like_shape({2}, 1.0, true);
        p.add("w/problem", w);
        w->grad = {0.0, std::nan("")};
        CHECK_THROWS_WITH_AS(adam_step(p, 0.001, 0.0),
                             doctest::Contains("w/problem"), numeric_error);
    }
    // bit-identical across two identical runs
    {
        auto play = [] {
            ModelParameters p;
            Rng rng(99);
            auto w = make_tensor({64}, true);
            init_uniform_fanin(rng, *w, 8);
            p.add("w", w);
            for (int step = 0; step < 17; ++step) {
                Rng grng(static_cast<std::uint64_t>(step));
                w->zero_grad();
                for (auto& g : w->grad) {
                    g = grng.uniform(-1.0, 1.0);
                }
                adam_step(p, 0.01, 0.001);
            }
            return w->data;
        };
        CHECK(play() == play());
    }
}

TEST_CASE("checkpoint round trip and load errors") {
    const fs::path dir = fs::temp_directory_path() / "sdd_ckpt_test";
    fs::create_directories(dir);
    const std::string prefix = (dir / "model").string();

    ModelParameters p;
    Rng rng(123);
    auto a = make_tensor({3, 4}, true);
    init_uniform_fanin(rng, *a, 4);
    auto b = make_tensor({7});
    init_uniform_fanin(rng, *b, 7);
    p.add("layer/weight", a);
    p.add("layer/bias", b, false);

    CheckpointMeta meta;
    meta.model = "demo";
    meta.seed = 42;
    meta.hyperparameters = {{"lr", 0.001}};
    save_checkpoint(p, meta, prefix);

    CheckpointMeta got;
    auto loaded = load_checkpoint(prefix, &got);
    CHECK(got.model == "demo");
    CHECK(got.seed == 42);
    CHECK(loaded.names() == std::vector<std::string>{"layer/weight", "layer/bias"});
    CHECK(loaded.get("layer/weight")->data == a->data);  // bit-exact
    CHECK(loaded.get("layer/weight")->shape == a->shape);
    CHECK(loaded.get("layer/bias")->data == b->data);

    // truncated blob -> size error
    {
        std::ifstream in(prefix + ".weights.bin", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(prefix + ".weights.bin", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(load_checkpoint(prefix), size_error);

    // corrupt manifest -> schema error
    {
        std::ofstream mf(prefix + ".manifest.json", std::ios::binary);
        mf << "{ not json";
    }
    CHECK_THROWS_AS(load_checkpoint(prefix), schema_error);

    // unreadable -> io error
    CHECK_THROWS_AS(load_checkpoint((dir / "absent").string()), io_error);

    fs::remove_all(dir);
}

TEST_CASE("backward releases interior buffers but keeps leaf grads") {
    Rng rng(11);
    auto x = randt({2, 3, 6, 5}, rng, true);
    auto k = randt({2, 3, 3, 3}, rng, true);
    auto y = relu(conv2d(x, k, nullptr, 0, 0));
    auto s = spp(y, {1, 2});
    std::vector<double> seed(s->data.size(), 1.0);
    s->backward(&seed);
    CHECK(x->grad.size() == x->data.size());
    CHECK(k->grad.size() == k->data.size());
    CHECK(y->data.empty());  // interior freed
}
