#pragma once

#include <string>
#include <vector>

#include "sdd/audio.hpp"

namespace sdd {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    i64 support = 0;
};

struct ClassificationReport {
    std::vector<ClassMetrics> per_class;
    double macro_f1 = 0.0;
    std::vector<i64> confusion;  // [n_classes * n_classes], row = truth
    i64 n_classes = 0;
    i64 total = 0;
    i64 correct = 0;

    double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
};

// Zero-denominator metrics report as 0.
ClassificationReport classification_report(const std::vector<i64>& predictions,
                                           const std::vector<i64>& labels, i64 n_classes);

struct McNemarResult {
    i64 b = 0;  // A right, B wrong
    i64 c = 0;  // A wrong, B right
    double statistic = 0.0;  // chi-square value on the asymptotic path
    double p_value = 1.0;
    bool exact = true;
    bool degenerate = false;  // b + c == 0
};

// Exact two-sided binomial test when b + c < 25, otherwise the
// continuity-corrected chi-square (|b-c|-1)^2/(b+c) with 1 df.
McNemarResult mcnemar(const std::vector<i64>& pred_a, const std::vector<i64>& pred_b,
                      const std::vector<i64>& labels);
double mcnemar_exact_p(i64 b, i64 c);
double chi_square_1df_sf(double x);

// Lentz continued-fraction evaluation, |error| <= 1e-12 relative.
double regularized_incomplete_beta(double a, double b, double x);

double pearson_r(const std::vector<double>& x, const std::vector<double>& y);
// two-sided p for H0: rho = 0 via t = r*sqrt((n-2)/(1-r^2)), n-2 df
double pearson_p_two_sided(double r, i64 n);

struct CorrelationRow {
    std::string descriptor;
    double r = 0.0;
    double p = 1.0;
    i64 n = 0;
    bool significant = false;  // p < 0.05
    bool undefined = false;    // zero-variance descriptor
};

// One row per named column, correlated against probs. Needs n >= 3.
std::vector<CorrelationRow> correlate_columns(const std::vector<std::string>& names,
                                              const std::vector<std::vector<double>>& columns,
                                              const std::vector<double>& probs);

// Descriptors over a window's utterances played back to back.
AcousticDescriptors window_descriptors(const std::vector<const Waveform*>& utterances);

}  // namespace sdd
