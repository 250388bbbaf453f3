#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/dsp.hpp>
#include <cardiodg/eval/metrics.hpp>
#include <cardiodg/eval/split.hpp>
#include <cardiodg/eval/stats.hpp>
#include <cardiodg/eval/stress.hpp>
#include <cardiodg/train.hpp>

#include <json.hpp>

#include <sstream>
#include <string>
#include <vector>

namespace cardiodg::eval {

/// Macro-F1 trailing accuracy by more than this flags majority-class collapse.
inline constexpr double kParadoxGap = 0.3;

struct EvalReport {
    std::string protocol;
    std::string variant;
    std::string stress = "none";
    std::size_t n_test = 0;
    Metrics metrics;
    AurocResult auroc;
    Interval ci;
    bool accuracy_paradox = false;
    std::uint64_t seed = 42; ///< training seed of the evaluated checkpoint
    std::vector<std::string> record_ids;
    std::vector<int> y_true, y_pred;
    nlohmann::json provenance = nlohmann::json::object();
};

struct EvalOptions {
    StressSpec stress;
    std::size_t n_resamples = 1000;
    std::uint64_t bootstrap_seed = 42;
    dsp::BandpassSpec bandpass;
};

/// Loads the test records, applying raw-signal noise before conditioning and
/// lead dropping after it.
inline Dataset load_eval_set(const DatasetManifest &m, const std::vector<std::string> &ids, const EvalOptions &opt)
{
    if (opt.stress.mode == StressMode::None)
        return load_dataset(m, ids, opt.bandpass);
    opt.stress.validate();
    Dataset d;
    d.ids = ids;
    d.domains.resize(ids.size());
    d.signals.resize(ids.size());
    d.labels.resize(ids.size());
    std::vector<std::string> errors(ids.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ids.size()); ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            const ManifestEntry *e = m.find(ids[k]);
            if (!e)
                throw DataError("record " + ids[k] + " not in manifest");
            EcgRecord r = load_record(m, *e);
            std::mt19937_64 rng(derive_seed(opt.stress.seed, "stress/" + r.id));
            if (opt.stress.mode == StressMode::GaussianNoise)
                add_noise_snr(r.leads, opt.stress.snr_db, rng);
            SignalMatrix c = dsp::condition(r, opt.bandpass);
            if (opt.stress.mode == StressMode::LeadDrop)
                drop_leads(c, opt.stress.leads, rng);
            d.domains[k] = r.domain;
            d.labels[k] = static_cast<int>(r.label);
            d.signals[k] = std::move(c);
        } catch (const std::exception &ex) {
            errors[k] = ex.what();
        }
    }
    for (const auto &e : errors)
        if (!e.empty())
            throw DataError(e);
    return d;
}

/// Report from precomputed logits.
inline EvalReport make_report(const std::vector<std::string> &ids, const std::vector<int> &y_true,
                              const std::vector<double> &logits, std::size_t n_classes, const EvalOptions &opt = {})
{
    EvalReport r;
    r.n_test = y_true.size();
    r.record_ids = ids;
    r.y_true = y_true;
    r.y_pred = argmax_rows(logits, n_classes);
    r.metrics = compute_metrics(r.y_true, r.y_pred, n_classes);
    const auto probs = softmax_rows(logits, n_classes);
    r.auroc = auroc_macro(r.y_true, probs, n_classes);
    r.ci = bootstrap_ci(r.y_true, r.y_pred, n_classes, opt.n_resamples, 0.95, opt.bootstrap_seed);
    r.accuracy_paradox = r.metrics.accuracy - r.metrics.macro_f1 > kParadoxGap;
    r.stress = opt.stress.str();
    return r;
}

/// Deterministic eval-mode inference plus the full metric suite.
template <typename Real>
EvalReport evaluate(Model<Real> &model, const Dataset &test, const EvalOptions &opt = {})
{
    if (test.empty())
        throw Error("evaluate: empty test set");
    const auto logits = predict_logits(model, test);
    EvalReport r = make_report(test.ids, test.labels, logits, model.config().n_classes, opt);
    r.variant = to_string(model.config().variant);
    return r;
}

namespace detail {
inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
} // namespace detail

inline nlohmann::json to_json_report(const EvalReport &r)
{
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < r.metrics.per_class.size(); ++c) {
        const auto &pc = r.metrics.per_class[c];
        per_class.push_back({{"class", c < kNumClasses ? class_name(int(c)) : std::to_string(c)},
                             {"precision", pc.precision},
                             {"recall", pc.recall},
                             {"f1", pc.f1},
                             {"support", pc.support},
                             {"auroc", detail::num(c < r.auroc.per_class.size() ? r.auroc.per_class[c] : NAN)}});
    }
    nlohmann::json preds = nlohmann::json::array();
    for (std::size_t i = 0; i < r.record_ids.size(); ++i)
        preds.push_back({{"id", r.record_ids[i]}, {"true", r.y_true[i]}, {"pred", r.y_pred[i]}});
    return {{"protocol", r.protocol},
            {"variant", r.variant},
            {"stress", r.stress},
            {"seed", r.seed},
            {"n_test", r.n_test},
            {"confusion_matrix", r.metrics.confusion},
            {"per_class", per_class},
            {"accuracy", r.metrics.accuracy},
            {"macro_precision", r.metrics.macro_precision},
            {"macro_recall", r.metrics.macro_recall},
            {"macro_f1", r.metrics.macro_f1},
            {"macro_auroc", detail::num(r.auroc.macro)},
            {"bootstrap_ci",
             {{"metric", "macro_f1"}, {"lo", r.ci.lo}, {"hi", r.ci.hi}, {"level", r.ci.level}, {"n_resamples", r.ci.n_resamples}}},
            {"accuracy_paradox", r.accuracy_paradox},
            {"predictions", preds},
            {"provenance", r.provenance}};
}

inline std::string confusion_csv(const Confusion &cm)
{
    std::ostringstream os;
    os << "true\\pred";
    for (std::size_t c = 0; c < cm.size(); ++c)
        os << ',' << (c < kNumClasses ? class_name(int(c)) : std::to_string(c));
    os << '\n';
    for (std::size_t r = 0; r < cm.size(); ++r) {
        os << (r < kNumClasses ? class_name(int(r)) : std::to_string(r));
        for (std::size_t c = 0; c < cm.size(); ++c)
            os << ',' << cm[r][c];
        os << '\n';
    }
    return os.str();
}

/// Mean and sample SD of macro-F1 across reports of independently seeded runs.
inline nlohmann::json aggregate_seeds(const std::vector<EvalReport> &reports)
{
    std::vector<double> f1, acc;
    std::vector<std::uint64_t> seeds;
    for (const auto &r : reports) {
        f1.push_back(r.metrics.macro_f1);
        acc.push_back(r.metrics.accuracy);
        seeds.push_back(r.seed);
    }
    const MeanSd mf = mean_sd(f1), ma = mean_sd(acc);
    return {{"n_runs", reports.size()},
            {"seeds", seeds},
            {"macro_f1", {{"mean", mf.mean}, {"sd", mf.sd}, {"values", f1}}},
            {"accuracy", {{"mean", ma.mean}, {"sd", ma.sd}, {"values", acc}}}};
}

struct Comparison {
    WilcoxonResult test;
    std::size_t n_pairs = 0;
    double mean_difference = 0; ///< mean of (a - b) over the pairs
    double alpha = 0.05;
    bool significant = false;
};

/// Pairs per-class F1 of run i in `a` with run i in `b`, over classes present
/// in both test sets, and runs the signed-rank test.
inline Comparison compare_reports(const std::vector<EvalReport> &a, const std::vector<EvalReport> &b, double alpha = 0.05)
{
    if (a.size() != b.size() || a.empty())
        throw Error("comparison needs the same non-zero number of runs on each side");
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto &pa = a[i].metrics.per_class, &pb = b[i].metrics.per_class;
        if (pa.size() != pb.size())
            throw Error("comparison: reports disagree on class count");
        for (std::size_t c = 0; c < pa.size(); ++c)
            if (pa[c].support > 0 && pb[c].support > 0) {
                xa.push_back(pa[c].f1);
                xb.push_back(pb[c].f1);
            }
    }
    Comparison cmp;
    cmp.n_pairs = xa.size();
    cmp.alpha = alpha;
    double diff = 0;
    for (std::size_t i = 0; i < xa.size(); ++i)
        diff += xa[i] - xb[i];
    cmp.mean_difference = xa.empty() ? 0.0 : diff / double(xa.size());
    cmp.test = wilcoxon_signed_rank(xa, xb);
    cmp.significant = cmp.test.p_value < alpha;
    return cmp;
}

inline nlohmann::json to_json_comparison(const Comparison &c)
{
    return {{"pairing", "per-class F1 across classes and seeds"},
            {"n_pairs", c.n_pairs},
            {"n_nonzero", c.test.n_used},
            {"W", c.test.statistic},
            {"w_plus", c.test.w_plus},
            {"w_minus", c.test.w_minus},
            {"p_value", c.test.p_value},
            {"exact", c.test.exact},
            {"mean_difference", c.mean_difference},
            {"alpha", c.alpha},
            {"verdict", c.significant ? "significant" : "not significant"}};
}

/// Drop from in-distribution to out-of-distribution macro-F1.
inline double generalization_gap(const EvalReport &matched, const EvalReport &shifted)
{
    return matched.metrics.macro_f1 - shifted.metrics.macro_f1;
}

} // namespace cardiodg::eval
