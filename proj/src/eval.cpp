#include "sdd/eval.hpp"

#include <algorithm>
#include <cmath>

#include "sdd/error.hpp"

namespace sdd {

ClassificationReport classification_report(const std::vector<i64>& predictions,
                                           const std::vector<i64>& labels, i64 n_classes) {
    if (predictions.size() != labels.size()) {
        throw dim_error("classification_report: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) {
        throw dim_error("classification_report: empty input");
    }
    ClassificationReport rep;
    rep.n_classes = n_classes;
    rep.total = static_cast<i64>(labels.size());
    rep.confusion.assign(static_cast<std::size_t>(n_classes * n_classes), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const i64 t = labels[i];
        const i64 p = predictions[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
            throw dim_error("classification_report: class id out of range");
        }
        rep.confusion[static_cast<std::size_t>(t * n_classes + p)]++;
        if (t == p) {
            rep.correct++;
        }
    }
    rep.per_class.resize(static_cast<std::size_t>(n_classes));
    double f1_sum = 0.0;
    for (i64 k = 0; k < n_classes; ++k) {
        i64 tp = rep.confusion[static_cast<std::size_t>(k * n_classes + k)];
        i64 pred_k = 0;
        i64 true_k = 0;
        for (i64 j = 0; j < n_classes; ++j) {
            pred_k += rep.confusion[static_cast<std::size_t>(j * n_classes + k)];
            true_k += rep.confusion[static_cast<std::size_t>(k * n_classes + j)];
        }
        auto& m = rep.per_class[static_cast<std::size_t>(k)];
        m.support = true_k;
        m.precision = pred_k > 0 ? static_cast<double>(tp) / pred_k : 0.0;
        m.recall = true_k > 0 ? static_cast<double>(tp) / true_k : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        f1_sum += m.f1;
    }
    rep.macro_f1 = f1_sum / static_cast<double>(n_classes);
    return rep;
}

double mcnemar_exact_p(i64 b, i64 c) {
    const i64 n = b + c;
    if (n == 0) {
        return 1.0;
    }
    const i64 k = std::min(b, c);
    // 2 * P(X <= k), X ~ Binomial(n, 1/2), capped at 1
    double term = std::pow(0.5, static_cast<double>(n));  // C(n,0)/2^n
    double tail = term;
    for (i64 i = 1; i <= k; ++i) {
        term *= static_cast<double>(n - i + 1) / static_cast<double>(i);
        tail += term;
    }
    return std::min(1.0, 2.0 * tail);
}

double chi_square_1df_sf(double x) {
    return std::erfc(std::sqrt(x / 2.0));
}

McNemarResult mcnemar(const std::vector<i64>& pred_a, const std::vector<i64>& pred_b,
                      const std::vector<i64>& labels) {
    if (pred_a.size() != labels.size() || pred_b.size() != labels.size()) {
        throw dim_error("mcnemar: prediction vectors must align with labels");
    }
    McNemarResult r;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool a_ok = pred_a[i] == labels[i];
        const bool b_ok = pred_b[i] == labels[i];
        if (a_ok && !b_ok) {
            r.b++;
        } else if (!a_ok && b_ok) {
            r.c++;
        }
    }
    const i64 n = r.b + r.c;
    if (n == 0) {
        r.degenerate = true;
        r.p_value = 1.0;
        r.exact = true;
        return r;
    }
    if (n < 25) {
        r.exact = true;
        r.p_value = mcnemar_exact_p(r.b, r.c);
    } else {
        r.exact = false;
        const double d = std::fabs(static_cast<double>(r.b - r.c)) - 1.0;
        r.statistic = d * d / static_cast<double>(n);
        r.p_value = chi_square_1df_sf(r.statistic);
    }
    return r;
}

namespace {

// continued fraction for the incomplete beta (Lentz)
double betacf(double a, double b, double x) {
    constexpr double eps = 1e-12;
    constexpr double fpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) {
        d = fpmin;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) {
            d = fpmin;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) {
            c = fpmin;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) {
            d = fpmin;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) {
            c = fpmin;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) {
            break;
        }
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw dim_error("pearson_r: need two equal-length vectors of length >= 2");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw numeric_error("pearson_r: zero-variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

double pearson_p_two_sided(double r, i64 n) {
    if (n < 3) {
        throw config_error("pearson_p_two_sided: need n >= 3");
    }
    const double dof = static_cast<double>(n - 2);
    const double r2 = r * r;
    if (r2 >= 1.0) {
        return 0.0;
    }
    const double t2 = r2 * dof / (1.0 - r2);
    // two-sided: P(|T| > t) = I_{dof/(dof+t^2)}(dof/2, 1/2)
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2));
}

std::vector<CorrelationRow> correlate_columns(const std::vector<std::string>& names,
                                              const std::vector<std::vector<double>>& columns,
                                              const std::vector<double>& probs) {
    if (names.size() != columns.size()) {
        throw dim_error("correlate_columns: names/columns mismatch");
    }
    if (probs.size() < 3) {
        throw config_error("correlate_columns: need at least 3 aligned samples");
    }
    std::vector<CorrelationRow> rows;
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto& col = columns[k];
        if (col.size() != probs.size()) {
            throw dim_error("correlate_columns: column '" + names[k] + "' length mismatch");
        }
        CorrelationRow row;
        row.descriptor = names[k];
        row.n = static_cast<i64>(col.size());
        try {
            row.r = pearson_r(col, probs);
            row.p = pearson_p_two_sided(row.r, row.n);
            row.significant = row.p < 0.05;
        } catch (const numeric_error&) {
            row.undefined = true;
            row.r = 0.0;
            row.p = 1.0;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

AcousticDescriptors window_descriptors(const std::vector<const Waveform*>& utterances) {
    if (utterances.empty()) {
        throw dim_error("window_descriptors: empty window");
    }
    Waveform all;
    all.sample_rate = utterances.front()->sample_rate;
    std::size_t total = 0;
    for (const auto* u : utterances) {
        total += u->samples.size();
    }
    all.samples.reserve(total);
    for (const auto* u : utterances) {
        if (u->sample_rate != all.sample_rate) {
            throw config_error("window_descriptors: mixed sample rates");
        }
        all.samples.insert(all.samples.end(), u->samples.begin(), u->samples.end());
    }
    return compute_descriptors(all);
}

}  // namespace sdd
