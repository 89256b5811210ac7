// Acceptance suite: one line per criterion, [PASS]/[FAIL], non-zero exit on
// any failure. Oracles here are deliberately independent re-derivations of
// what the library computes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <omp.h>

#include "fd_check.hpp"
#include "sdd/augment.hpp"
#include "sdd/depression_cnn.hpp"
#include "sdd/eval.hpp"
#include "sdd/pipeline.hpp"
#include "sdd/segment.hpp"
#include "sdd/vowel_cnn.hpp"

using namespace sdd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        pass = false;
        if (!detail.empty()) {
            detail += "; ";
        }
        detail += why;
    }
    void note(const std::string& text) {
        if (detail.empty()) {
            detail = text;
        }
    }
    void expect(bool ok, const std::string& why) {
        if (!ok) {
            fail(why);
        }
    }
};

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "sdd_acceptance";
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------- 1

Outcome criterion_architecture() {
    Outcome o;
    VowelCnn vowel(VowelCnnConfig{}, 7);
    const auto vs = vowel.probe_shapes(128, 28);
    const std::vector<std::vector<i64>> want_v = {{64, 63, 28}, {64, 30, 28}, {64, 14, 28},
                                                  {1344},       {128},        {6}};
    o.expect(vs == want_v, "vowel CNN dimension chain deviates from (64,63,28)->(64,30,28)->(64,14,28)->1344->128->6");

    DepressionCnn dep(DepressionCnnConfig::for_window(42), 7);
    const auto ds = dep.probe_shapes();
    const std::vector<std::vector<i64>> want_d = {{32, 18}, {32, 6}, {64}, {2}};
    o.expect(ds == want_d, "depression CNN dimension chain deviates from (32,18)->(32,6)->64->2");
    o.note("both dimension chains exact");
    return o;
}

// ---------------------------------------------------------------- 2

Outcome criterion_spp() {
    Outcome o;
    Rng rng(2);
    i64 checked = 0;
    for (i64 h = 1; h <= 128; h += 7) {
        for (i64 w = 1; w <= 64; w += 7) {
            auto x = make_tensor({64, h, w});
            for (auto& v : x->data) {
                v = rng.uniform(-1.0, 1.0);
            }
            const auto y = spp(x);
            if (y->shape != std::vector<i64>{1344}) {
                o.fail("spp output is " + shape_str(y->shape) + " for H=" + std::to_string(h) +
                       " W=" + std::to_string(w));
                return o;
            }
            auto c = full_like_shape({64, h, w}, 0.37);
            const auto yc = spp(c);
            for (double v : yc->data) {
                if (v != 0.37) {
                    o.fail("constant input not mapped to constant output at H=" + std::to_string(h) +
                           " W=" + std::to_string(w));
                    return o;
                }
            }
            ++checked;
        }
    }
    o.note(std::to_string(checked) + " (H,W) grid points, output always 64*21 = 1344");
    return o;
}

// ---------------------------------------------------------------- 3

Outcome criterion_gradients() {
    Outcome o;
    Rng rng(3);
    const double tol = 1e-4;
    struct OpSpec {
        const char* name;
        std::function<sdd::testing::FdResult(Rng&)> run;
    };
    auto vary = [](Rng& r, i64 lo, i64 hi) { return lo + r.uniform_int(hi - lo + 1); };
    const std::vector<OpSpec> ops = {
        {"conv2d", [&](Rng& r) {
             const i64 cin = vary(r, 1, 3), cout = vary(r, 1, 3);
             const i64 kh = vary(r, 1, 3), kw = vary(r, 1, 2);
             const i64 hh = vary(r, kh + 1, kh + 5), ww = vary(r, kw, kw + 4);
             const i64 ph = vary(r, 0, 1), pw = vary(r, 0, 1);
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return conv2d(in[0], in[1], in[2], ph, pw); },
                 {{vary(r, 1, 2), cin, hh, ww}, {cout, cin, kh, kw}, {cout}}, r);
         }},
        {"conv1d", [&](Rng& r) {
             const i64 cin = vary(r, 1, 4), cout = vary(r, 1, 3), k = vary(r, 1, 4);
             const i64 L = vary(r, k, k + 7), pad = vary(r, 0, 2);
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return conv1d(in[0], in[1], in[2], pad); },
                 {{vary(r, 1, 2), cin, L}, {cout, cin, k}, {cout}}, r);
         }},
        {"max_pool2d", [&](Rng& r) {
             const i64 ph = vary(r, 1, 3), pw = vary(r, 1, 2);
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return max_pool2d(in[0], ph, pw); },
                 {{vary(r, 1, 2), vary(r, 1, 3), vary(r, ph, ph * 3), vary(r, pw, pw * 4)}}, r);
         }},
        {"max_pool1d", [&](Rng& r) {
             const i64 p = vary(r, 1, 3);
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return max_pool1d(in[0], p); },
                 {{vary(r, 1, 3), vary(r, p, p * 5)}}, r);
         }},
        {"spp", [&](Rng& r) {
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return spp(in[0]); },
                 {{vary(r, 1, 2), vary(r, 1, 3), vary(r, 1, 7), vary(r, 1, 7)}}, r);
         }},
        {"dense", [&](Rng& r) {
             const i64 din = vary(r, 2, 8), dout = vary(r, 1, 5);
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return dense(in[0], in[1], in[2]); },
                 {{vary(r, 1, 4), din}, {dout, din}, {dout}}, r);
         }},
        {"relu", [&](Rng& r) {
             return sdd::testing::check_gradients(
                 [&](const std::vector<TensorPtr>& in) { return relu(in[0]); },
                 {{vary(r, 5, 60)}}, r);
         }},
        {"batch_norm(train)", [&](Rng& r) {
             const i64 c = vary(r, 1, 3);
             return sdd::testing::check_gradients(
                 [&, c](const std::vector<TensorPtr>& in) {
                     auto rm = make_tensor({c});
                     auto rv = full_like_shape({c}, 1.0);
                     return batch_norm2d(in[0], in[1], in[2], rm, rv, 0.1, 1e-5, true);
                 },
                 {{vary(r, 2, 4), c, vary(r, 1, 3), vary(r, 2, 4)}, {c}, {c}}, r);
         }},
        {"batch_norm(eval)", [&](Rng& r) {
             const i64 c = vary(r, 1, 3);
             auto rm = make_tensor({c});
             auto rv = full_like_shape({c}, 1.0);
             for (auto& v : rm->data) {
                 v = r.uniform(-0.5, 0.5);
             }
             for (auto& v : rv->data) {
                 v = r.uniform(0.5, 2.0);
             }
             return sdd::testing::check_gradients(
                 [&, rm, rv](const std::vector<TensorPtr>& in) {
                     return batch_norm2d(in[0], in[1], in[2], rm, rv, 0.1, 1e-5, false);
                 },
                 {{vary(r, 1, 3), c, vary(r, 1, 3), vary(r, 2, 4)}, {c}, {c}}, r);
         }},
        {"softmax_cross_entropy", [&](Rng& r) {
             const i64 n = vary(r, 1, 4), k = vary(r, 2, 6);
             std::vector<i64> targets;
             for (i64 i = 0; i < n; ++i) {
                 targets.push_back(r.uniform_int(k));
             }
             return sdd::testing::check_gradients(
                 [&, targets](const std::vector<TensorPtr>& in) {
                     return softmax_cross_entropy(in[0], targets);
                 },
                 {{n, k}}, r);
         }},
        {"pick_sum", [&](Rng& r) {
             const i64 n = vary(r, 1, 4), k = vary(r, 2, 6);
             std::vector<i64> idx;
             for (i64 i = 0; i < n; ++i) {
                 idx.push_back(r.uniform_int(k));
             }
             return sdd::testing::check_gradients(
                 [&, idx](const std::vector<TensorPtr>& in) { return pick_sum(in[0], idx); },
                 {{n, k}}, r);
         }},
    };
    double worst = 0.0;
    std::string worst_op;
    for (const auto& op : ops) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto res = op.run(rng);
            if (res.max_rel_err > worst) {
                worst = res.max_rel_err;
                worst_op = std::string(op.name) + " trial " + std::to_string(trial);
            }
            if (res.max_rel_err >= tol) {
                o.fail(std::string(op.name) + ": rel err " + std::to_string(res.max_rel_err) +
                       " at " + res.worst);
                return o;
            }
        }
    }
    o.note("11 ops x 20 trials, worst rel err " + std::to_string(worst) + " (" + worst_op + ")");
    return o;
}

// ---------------------------------------------------------------- 4

Outcome criterion_segmentation() {
    Outcome o;
    OverlapPolicy policy;
    // the published worked row
    {
        auto a = PhonemeAlignment{{{0, 400000, "a"}}};
        auto spans = segment_utterance(1000000, a, policy);
        o.expect(spans.size() >= 2 && spans[1].start_us == 75000 && spans[1].end_us == 325000,
                 "label /a/ must step to 75-325 ms");
    }
    {
        auto spans = segment_utterance(1000000, PhonemeAlignment{}, policy);
        o.expect(spans.size() >= 2 && spans[1].start_us == 125000 && spans[1].end_us == 375000,
                 "not-a-vowel must step to 125-375 ms");
    }
    {
        auto a = PhonemeAlignment{{{0, 400000, "u"}}};
        auto spans = segment_utterance(1000000, a, policy);
        o.expect(spans.size() >= 2 && spans[1].start_us == 5000 && spans[1].end_us == 255000,
                 "label /u/ must step to 5-255 ms");
    }

    // 10 s utterance vs an independent step-by-step simulation
    PhonemeAlignment a;
    i64 at = 40000;
    const char* phones[] = {"a", "n", "e", "u", "i", "o", "a", "n", "u", "e", "o", "i"};
    for (int k = 0; at + 400000 < 10000000; ++k) {
        const i64 len = 70000 + (k * 41000) % 240000;
        a.intervals.push_back({at, at + len, phones[k % 12]});
        at += len + 15000 + (k * 23000) % 110000;
    }
    const auto got = segment_utterance(10000000, a, policy);

    // oracle: explicit walk, labels re-derived from scratch
    std::vector<SegmentSpan> want;
    i64 start = 0;
    while (start + 250000 <= 10000000) {
        i64 best_ov = 0;
        i64 best_on = 0;
        VowelLabel label = VowelLabel::None;
        for (i64 v = 0; v < 5; ++v) {
            i64 total = 0;
            i64 onset = -1;
            for (const auto& iv : a.intervals) {
                if (map_phone(iv.phone) != static_cast<VowelLabel>(v)) {
                    continue;
                }
                const i64 lo = std::max(start, iv.start_us);
                const i64 hi = std::min(start + 250000, iv.end_us);
                if (hi > lo) {
                    total += hi - lo;
                    if (onset < 0) {
                        onset = iv.start_us;
                    }
                }
            }
            if (total > best_ov || (total > 0 && total == best_ov && onset < best_on)) {
                best_ov = total;
                best_on = onset;
                label = static_cast<VowelLabel>(v);
            }
        }
        want.push_back({start, start + 250000, label});
        const double ratio = policy.ratio(label);
        start += static_cast<i64>(std::llround(250000.0 * ratio));
    }

    if (got.size() != want.size()) {
        o.fail("sequence length " + std::to_string(got.size()) + " vs oracle " +
               std::to_string(want.size()));
        return o;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].start_us != want[i].start_us || got[i].label != want[i].label) {
            o.fail("divergence at span " + std::to_string(i));
            return o;
        }
    }
    o.note("worked rows exact; 10 s sequence of " + std::to_string(got.size()) +
           " spans matches the simulation");
    return o;
}

// ---------------------------------------------------------------- 5

Outcome criterion_algorithm1() {
    Outcome o;
    Rng rng(5);
    std::vector<std::vector<double>> embeddings;
    std::vector<double> saliency;
    for (i64 u = 0; u < 60; ++u) {
        std::vector<double> row(128);
        for (auto& v : row) {
            v = rng.uniform(0.05, 2.0);
        }
        embeddings.push_back(std::move(row));
        saliency.push_back(rng.uniform(0.0, 20.0));
    }
    AugmentConfig cfg;  // (n,pos,neg,p,r,c) = (42,8,4,6,21,0.001)

    const auto z_pos = augment_speaker(embeddings, saliency, 1, cfg, 101);
    const auto z_neg = augment_speaker(embeddings, saliency, 0, cfg, 102);
    o.expect(z_pos.size() == 8, "|Z| for a depressed speaker must be 8");
    o.expect(z_neg.size() == 4, "|Z| for a non-depressed speaker must be 4");

    for (const auto& s : z_pos) {
        i64 const_rows = 0;
        for (i64 t = 0; t < 42; ++t) {
            bool all_c = true;
            for (i64 k = 0; k < 128; ++k) {
                if (s.values[static_cast<std::size_t>(t * 128 + k)] != 0.001) {
                    all_c = false;
                    break;
                }
            }
            const_rows += all_c;
        }
        o.expect(const_rows == 6, "sample must hold exactly p=6 constant rows, found " +
                                      std::to_string(const_rows));

        // independent ranking of window saliency
        std::vector<std::pair<double, i64>> rank;
        for (i64 t = 0; t < 42; ++t) {
            rank.emplace_back(saliency[static_cast<std::size_t>(s.window_start + t)], t);
        }
        std::stable_sort(rank.begin(), rank.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) {
                return x.first > y.first;
            }
            return x.second < y.second;
        });
        std::set<i64> top;
        for (i64 k = 0; k < 21; ++k) {
            top.insert(rank[static_cast<std::size_t>(k)].second);
        }
        for (i64 idx : s.perturbed) {
            o.expect(top.count(idx) == 0,
                     "perturbed row " + std::to_string(idx) + " sits in the top-21 saliency set");
        }
    }

    AugmentConfig ablation = cfg;
    ablation.p = 0;  // the --no-perturb setting
    for (const auto& s : augment_speaker(embeddings, saliency, 1, ablation, 103)) {
        for (i64 t = 0; t < 42; ++t) {
            bool all_c = true;
            for (i64 k = 0; k < 128; ++k) {
                if (s.values[static_cast<std::size_t>(t * 128 + k)] != 0.001) {
                    all_c = false;
                    break;
                }
            }
            o.expect(!all_c, "p=0 sample must hold no constant rows");
        }
    }
    o.note("counts 8/4, exact p=6 constant rows outside top-21, p=0 clean");
    return o;
}

// ---------------------------------------------------------------- 6 / 9

struct SeedResult {
    double macro_aug = 0.0;
    double macro_abl = 0.0;
};

SeedResult run_seed(std::uint64_t seed, const fs::path& out) {
    PipelineConfig cfg = default_pipeline_config();
    cfg.seed = seed;
    cfg.out_dir = out.string();
    run_pipeline(cfg);
    SeedResult r;
    r.macro_aug = read_evaluation(cfg.out_dir).macro_f1;

    // ablation reuses every stage up to the embeddings, then rebuilds the
    // augmented set and the depression model with p = 0 on the same tree
    PipelineConfig ablation = cfg;
    ablation.augment.p = 0;
    stage_augment(ablation);
    stage_train_depression(ablation);
    stage_evaluate(ablation);
    r.macro_abl = read_evaluation(cfg.out_dir).macro_f1;
    return r;
}

Outcome criterion_end_to_end(double* runtime_s) {
    Outcome o;
    const double t0 = omp_get_wtime();
    const std::vector<std::uint64_t> seeds = {11, 22, 33, 44, 55};
    double sum_aug = 0.0;
    double sum_abl = 0.0;
    std::string per_seed;
    for (auto seed : seeds) {
        const fs::path out = work_dir() / ("e2e_seed" + std::to_string(seed));
        fs::remove_all(out);
        const auto r = run_seed(seed, out);
        sum_aug += r.macro_aug;
        sum_abl += r.macro_abl;
        char buf[96];
        std::snprintf(buf, sizeof(buf), " seed %llu: %.3f/%.3f",
                      static_cast<unsigned long long>(seed), r.macro_aug, r.macro_abl);
        per_seed += buf;
        fs::remove_all(out);
    }
    const double mean_aug = sum_aug / static_cast<double>(seeds.size());
    const double mean_abl = sum_abl / static_cast<double>(seeds.size());
    *runtime_s = omp_get_wtime() - t0;

    o.expect(mean_aug >= 0.90, "mean held-out macro-F1 " + std::to_string(mean_aug) + " < 0.90");
    o.expect(mean_aug >= mean_abl, "p=6 macro-F1 " + std::to_string(mean_aug) +
                                       " below the p=0 ablation " + std::to_string(mean_abl));
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mean macro-F1 %.3f (p=6) vs %.3f (p=0); aug/abl:%s",
                  mean_aug, mean_abl, per_seed.c_str());
    o.note(buf);
    return o;
}

// ---------------------------------------------------------------- 7

double pearson_two_pass_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

double t_pdf(double x, double dof) {
    return std::exp(std::lgamma((dof + 1.0) / 2.0) - std::lgamma(dof / 2.0) -
                    0.5 * std::log(dof * 3.14159265358979323846) -
                    (dof + 1.0) / 2.0 * std::log1p(x * x / dof));
}

double simpson(double a, double b, double dof, int depth, double fa, double fm, double fb) {
    const double m = (a + b) / 2.0;
    const double flm = t_pdf((a + m) / 2.0, dof);
    const double frm = t_pdf((m + b) / 2.0, dof);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth > 28 || std::fabs(left + right - whole) < 1e-14) {
        return left + right;
    }
    return simpson(a, m, dof, depth + 1, fa, flm, fm) + simpson(m, b, dof, depth + 1, fm, frm, fb);
}

Outcome criterion_statistics() {
    Outcome o;
    Rng rng(7);
    // Pearson vs two-pass covariance oracle on 1000 random vectors
    double worst_r = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform_int(64));
        std::vector<double> x(n);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-10.0, 10.0);
            y[i] = rng.uniform(-1.0, 1.0) + 0.2 * x[i];
        }
        const double diff = std::fabs(pearson_r(x, y) - pearson_two_pass_oracle(x, y));
        worst_r = std::max(worst_r, diff);
        if (diff >= 1e-9) {
            o.fail("pearson r deviates by " + std::to_string(diff));
            return o;
        }
    }
    // exact McNemar == binomial-tail enumeration for all b+c <= 20
    for (i64 n = 0; n <= 20; ++n) {
        for (i64 b = 0; b <= n; ++b) {
            const i64 c = n - b;
            long double tail = 0.0L;
            for (i64 i = 0; i <= std::min(b, c); ++i) {
                long double coef = 1.0L;
                for (i64 j = 0; j < i; ++j) {
                    coef = coef * static_cast<long double>(n - j) / static_cast<long double>(j + 1);
                }
                tail += coef;
            }
            const double want = n == 0 ? 1.0
                                       : static_cast<double>(std::min<long double>(
                                             1.0L, 2.0L * tail / std::pow(2.0L, static_cast<long double>(n))));
            if (std::fabs(mcnemar_exact_p(b, c) - want) > 1e-12) {
                o.fail("exact McNemar p mismatch at b=" + std::to_string(b) + " c=" + std::to_string(c));
                return o;
            }
        }
    }
    // t-distribution p-values vs adaptive Simpson at 50 (r, N) points
    double worst_t = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const i64 n = 4 + rng.uniform_int(400);
        const double r = rng.uniform(-0.97, 0.97);
        const double dof = static_cast<double>(n - 2);
        const double t = r * std::sqrt(dof / (1.0 - r * r));
        const double a = std::fabs(t);
        const double integral = simpson(0.0, a, dof, 0, t_pdf(0.0, dof), t_pdf(a / 2.0, dof), t_pdf(a, dof));
        const double want = std::max(0.0, 1.0 - 2.0 * integral);
        const double diff = std::fabs(pearson_p_two_sided(r, n) - want);
        worst_t = std::max(worst_t, diff);
        if (diff >= 1e-6) {
            o.fail("t-distribution p deviates by " + std::to_string(diff) + " at r=" +
                   std::to_string(r) + " N=" + std::to_string(n));
            return o;
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "pearson worst |dr| %.2e; McNemar exact on 231 cells; t-p worst |dp| %.2e",
                  worst_r, worst_t);
    o.note(buf);
    return o;
}

// ---------------------------------------------------------------- 8

Outcome criterion_descriptors() {
    Outcome o;
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    // 100 Hz tone: mean F0 within +-1 Hz
    {
        Waveform w;
        w.sample_rate = 16000;
        w.samples.resize(16000);
        for (i64 i = 0; i < 16000; ++i) {
            w.samples[static_cast<std::size_t>(i)] = 0.5 * std::sin(kTwoPi * 100.0 * i / 16000.0);
        }
        const auto d = compute_descriptors(w);
        o.expect(std::fabs(d.mean_f0 - 100.0) <= 1.0,
                 "mean F0 " + std::to_string(d.mean_f0) + " off a 100 Hz tone");
    }
    // 2% alternating period perturbation: jitter in [0.015, 0.025]
    {
        Waveform w;
        w.sample_rate = 16000;
        w.samples.assign(32000, 0.0);
        const i64 width = 48;
        double pos = 0.0;
        int parity = 0;
        while (pos + width + 1 < 32000.0) {
            const i64 at = static_cast<i64>(pos);
            for (i64 i = at; i < at + width + 1; ++i) {
                const double x = (static_cast<double>(i) - pos) / static_cast<double>(width);
                if (x >= 0.0 && x < 1.0) {
                    w.samples[static_cast<std::size_t>(i)] += 0.25 * (1.0 - std::cos(kTwoPi * x));
                }
            }
            pos += 160.0 * (1.0 + (parity ? -0.01 : 0.01));
            parity ^= 1;
        }
        const auto d = compute_descriptors(w);
        o.expect(d.jitter > 0.015 && d.jitter < 0.025,
                 "jitter " + std::to_string(d.jitter) + " outside [0.015, 0.025]");
    }
    // silence
    {
        Waveform w;
        w.sample_rate = 16000;
        w.samples.assign(16000, 0.0);
        const auto d = compute_descriptors(w);
        o.expect(d.speech_percent == 0.0, "silence must have speech_percent 0");
    }
    o.note("tone F0, perturbed-tone jitter, silence all in range");
    return o;
}

// ---------------------------------------------------------------- 9

Outcome criterion_determinism(double e2e_runtime) {
    Outcome o;
    const double t0 = omp_get_wtime();
    const fs::path out_a = work_dir() / "det_a";
    const fs::path out_b = work_dir() / "det_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);
    for (const auto& out : {out_a, out_b}) {
        PipelineConfig cfg = default_pipeline_config();
        cfg.seed = 7;
        cfg.out_dir = out.string();
        run_pipeline(cfg);
    }

    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(out_a)) {
        if (e.is_regular_file()) {
            rel.push_back(fs::relative(e.path(), out_a));
        }
    }
    std::sort(rel.begin(), rel.end());
    i64 compared = 0;
    for (const auto& r : rel) {
        std::ifstream fa(out_a / r, std::ios::binary);
        std::ifstream fb(out_b / r, std::ios::binary);
        if (!fb) {
            o.fail("second run lacks " + r.string());
            break;
        }
        const std::string a((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        const std::string b((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        if (a != b) {
            o.fail("byte difference in " + r.string());
            break;
        }
        ++compared;
    }
    i64 count_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(out_b)) {
        if (e.is_regular_file()) {
            ++count_b;
        }
    }
    o.expect(count_b == static_cast<i64>(rel.size()), "run trees differ in file count");

    const double took = omp_get_wtime() - t0;
    if (e2e_runtime > 0.0) {
        o.expect(took < 2.0 * e2e_runtime, "re-run pair exceeded twice the end-to-end runtime");
    }
    fs::remove_all(out_a);
    fs::remove_all(out_b);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%lld files byte-identical across two runs (%.0f s)",
                  static_cast<long long>(compared), took);
    o.note(buf);
    return o;
}

}  // namespace

int main() {
    struct Row {
        int id;
        const char* name;
        Outcome outcome;
        double seconds;
    };
    std::vector<Row> rows;
    double e2e_runtime = 0.0;

    auto run = [&rows](int id, const char* name, const std::function<Outcome()>& fn) {
        const double t0 = omp_get_wtime();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        rows.push_back({id, name, std::move(o), omp_get_wtime() - t0});
    };

    run(1, "architecture fidelity", criterion_architecture);
    run(2, "spp contract", criterion_spp);
    run(3, "gradient correctness", criterion_gradients);
    run(4, "segmentation fidelity", criterion_segmentation);
    run(5, "algorithm-1 contract", criterion_algorithm1);
    run(6, "end-to-end synthetic reproduction",
        [&e2e_runtime] { return criterion_end_to_end(&e2e_runtime); });
    run(7, "statistics oracles", criterion_statistics);
    run(8, "descriptor sanity", criterion_descriptors);
    run(9, "determinism", [e2e_runtime] { return criterion_determinism(e2e_runtime); });

    bool all = true;
    for (const auto& r : rows) {
        std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n", r.outcome.pass ? "PASS" : "FAIL", r.id,
                    r.name, r.seconds, r.outcome.detail.empty() ? "" : " - ",
                    r.outcome.detail.c_str());
        all = all && r.outcome.pass;
    }
    std::printf("%s\n", all ? "ACCEPTANCE: ALL CRITERIA PASSED" : "ACCEPTANCE: FAILURES PRESENT");
    return all ? 0 : 1;
}
