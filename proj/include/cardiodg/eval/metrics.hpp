#pragma once

#include <cardiodg/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace cardiodg::eval {

/// Row = true class, column = predicted class.
using Confusion = std::vector<std::vector<std::size_t>>;

inline Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes)
{
    if (y_true.size() != y_pred.size())
        throw Error("metrics: y_true and y_pred differ in length (" + std::to_string(y_true.size()) + " vs " +
                    std::to_string(y_pred.size()) + ")");
    Confusion m(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || p < 0 || std::size_t(t) >= n_classes || std::size_t(p) >= n_classes)
            throw Error("metrics: label out of range at index " + std::to_string(i));
        ++m[std::size_t(t)][std::size_t(p)];
    }
    return m;
}

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t support = 0; ///< true count
};

struct Metrics {
    Confusion confusion;
    std::vector<ClassMetrics> per_class;
    double accuracy = 0;
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f1 = 0;
    std::size_t n = 0;
    std::size_t classes_with_support = 0;
};

inline double safe_div(double a, double b) { return b == 0 ? 0.0 : a / b; }

/// Per-class and macro metrics. 0/0 ratios count as 0; macro averages run over
/// the classes that occur in y_true.
inline Metrics compute_metrics(const Confusion &cm)
{
    Metrics m;
    m.confusion = cm;
    const std::size_t k = cm.size();
    m.per_class.resize(k);
    std::size_t correct = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t tp = cm[c][c], row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm[c][j];
            col += cm[j][c];
        }
        m.n += row;
        correct += tp;
        ClassMetrics &pc = m.per_class[c];
        pc.support = row;
        pc.precision = safe_div(double(tp), double(col));
        pc.recall = safe_div(double(tp), double(row));
        pc.f1 = safe_div(2.0 * pc.precision * pc.recall, pc.precision + pc.recall);
        if (row > 0) {
            ++m.classes_with_support;
            m.macro_precision += pc.precision;
            m.macro_recall += pc.recall;
            m.macro_f1 += pc.f1;
        }
    }
    m.accuracy = safe_div(double(correct), double(m.n));
    const double present = double(m.classes_with_support);
    m.macro_precision = safe_div(m.macro_precision, present);
    m.macro_recall = safe_div(m.macro_recall, present);
    m.macro_f1 = safe_div(m.macro_f1, present);
    return m;
}

inline Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes)
{
    return compute_metrics(confusion_matrix(y_true, y_pred, n_classes));
}

inline double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes)
{
    return compute_metrics(y_true, y_pred, n_classes).macro_f1;
}

/// One-vs-rest AUROC from the Mann-Whitney statistic with average ranks, so tied
/// scores count one half. Returns NaN when either group is empty.
inline double auroc_binary(std::span<const int> positive, std::span<const double> scores)
{
    const std::size_t n = scores.size();
    if (positive.size() != n)
        throw Error("auroc: label and score lengths differ");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]])
            ++j;
        const double avg_rank = 0.5 * double(i + 1 + j); // ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) {
                rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        return std::nan("");
    return (rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

struct AurocResult {
    double macro = std::nan("");
    std::vector<double> per_class; ///< NaN where the class is excluded
};

/// `scores` is row-major [n x n_classes]. Classes lacking positives or negatives
/// are excluded from the macro average.
inline AurocResult auroc_macro(std::span<const int> y_true, std::span<const double> scores, std::size_t n_classes)
{
    const std::size_t n = y_true.size();
    if (scores.size() != n * n_classes)
        throw Error("auroc: score matrix must be n x n_classes");
    for (double s : scores)
        if (!std::isfinite(s))
            throw Error("auroc: scores must be finite");
    AurocResult r;
    r.per_class.assign(n_classes, std::nan(""));
    std::vector<int> pos(n);
    std::vector<double> col(n);
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            pos[i] = y_true[i] == int(c);
            col[i] = scores[i * n_classes + c];
        }
        const double a = auroc_binary(pos, col);
        r.per_class[c] = a;
        if (!std::isnan(a)) {
            sum += a;
            ++used;
        }
    }
    if (used > 0)
        r.macro = sum / double(used);
    return r;
}

} // namespace cardiodg::eval
