#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/dsp.hpp>
#include <cardiodg/eval/metrics.hpp>
#include <cardiodg/model.hpp>

#include <json.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cardiodg {

struct TrainConfig {
    double lr0 = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch = 64;
    double label_smoothing = 0.05;
    double scheduler_factor = 0.5;
    std::size_t scheduler_patience = 5;
    double lr_floor = 1e-6;
    std::size_t early_stop_patience = 15;
    std::size_t max_epochs = 50;
    std::uint64_t seed = 42;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool loss_tie_break = false; ///< equal val F1 at lower val loss replaces the best checkpoint

    void validate() const
    {
        if (label_smoothing < 0 || label_smoothing >= 1)
            throw Error("train config: label smoothing must lie in [0, 1)");
        if (early_stop_patience < 1 || scheduler_patience < 1)
            throw Error("train config: patience values must be >= 1");
        if (batch < 2)
            throw Error("train config: batch must be >= 2");
        if (max_epochs < 1 || !(lr0 > 0) || weight_decay < 0)
            throw Error("train config: need max_epochs >= 1, lr0 > 0, weight_decay >= 0");
        if (!(scheduler_factor > 0 && scheduler_factor < 1))
            throw Error("train config: scheduler factor must lie in (0, 1)");
    }

    /// Label smoothing per ablation rung:
    /// the plain baseline trains with hard targets.
    static TrainConfig for_variant(Variant v)
    {
        TrainConfig t;
        if (v == Variant::Baseline)
            t.label_smoothing = 0.0;
        return t;
    }

    /// Desk-scale schedule for a few hundred records on one core: small batches
    /// give enough optimizer steps per epoch, and the tie-break keeps checkpoint
    /// selection meaningful once the small validation split saturates.
    static TrainConfig desk(Variant v)
    {
        TrainConfig t = for_variant(v);
        t.batch = 16;
        t.max_epochs = 30;
        t.loss_tie_break = true;
        return t;
    }
};

inline void to_json(nlohmann::json &j, const TrainConfig &t)
{
    j = nlohmann::json{{"lr0", t.lr0},
                       {"weight_decay", t.weight_decay},
                       {"batch", t.batch},
                       {"label_smoothing", t.label_smoothing},
                       {"scheduler_factor", t.scheduler_factor},
                       {"scheduler_patience", t.scheduler_patience},
                       {"lr_floor", t.lr_floor},
                       {"early_stop_patience", t.early_stop_patience},
                       {"max_epochs", t.max_epochs},
                       {"seed", t.seed},
                       {"beta1", t.beta1},
                       {"beta2", t.beta2},
                       {"adam_eps", t.adam_eps},
                       {"loss_tie_break", t.loss_tie_break}};
}

inline void from_json(const nlohmann::json &j, TrainConfig &t)
{
    auto take = [&](const char *key, auto &field) {
        if (j.contains(key))
            j.at(key).get_to(field);
    };
    take("lr0", t.lr0);
    take("weight_decay", t.weight_decay);
    take("batch", t.batch);
    take("label_smoothing", t.label_smoothing);
    take("scheduler_factor", t.scheduler_factor);
    take("scheduler_patience", t.scheduler_patience);
    take("lr_floor", t.lr_floor);
    take("early_stop_patience", t.early_stop_patience);
    take("max_epochs", t.max_epochs);
    take("seed", t.seed);
    take("beta1", t.beta1);
    take("beta2", t.beta2);
    take("adam_eps", t.adam_eps);
    take("loss_tie_break", t.loss_tie_break);
}

/// Adam with decoupled weight decay. Parameters flagged `decay = false` (biases,
/// normalization affines) skip the decay term.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    std::size_t steps() const noexcept { return t_; }

    template <typename Real>
    void step(nn::ParamStore<Real> &store, double lr, double weight_decay)
    {
        for (const auto &p : store.params())
            if (!p.grad.all_finite())
                throw NumericError("gradient explosion: non-finite gradient in " + p.name + " at step " +
                                   std::to_string(t_ + 1));
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        const Real b1 = Real(beta1_), b2 = Real(beta2_);
        const Real step_size = Real(lr / bc1);
        const Real inv_sqrt_bc2 = Real(1.0 / std::sqrt(bc2));
        const Real eps = Real(eps_);
        for (auto &p : store.params()) {
            const Real shrink = Real(1.0 - lr * (p.decay ? weight_decay : 0.0));
            Real *theta = p.value.data();
            const Real *g = p.grad.data();
            Real *m = p.first_moment.data();
            Real *v = p.second_moment.data();
            for (std::size_t i = 0, n = p.value.size(); i < n; ++i) {
                theta[i] *= shrink;
                m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
                v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
                theta[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
            }
        }
    }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

/// Halves (by `factor`) the learning rate once `patience` consecutive values
/// fail to strictly exceed the best seen, then restarts the count.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor = 0.5, std::size_t patience = 5, double floor = 1e-6)
        : lr_(lr), factor_(factor), patience_(patience), floor_(floor)
    {
    }

    double step(double value)
    {
        if (value > best_) {
            best_ = value;
            bad_ = 0;
        } else if (++bad_ >= patience_) {
            lr_ = std::max(lr_ * factor_, floor_);
            bad_ = 0;
        }
        return lr_;
    }

    double lr() const noexcept { return lr_; }

private:
    double lr_, factor_;
    std::size_t patience_;
    double floor_;
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t bad_ = 0;
};

/// Strict-improvement early stopping. Only a strictly higher score resets
/// patience. With `loss_tie_break`, an equal score at lower loss also moves the
/// best checkpoint: a saturated validation score would otherwise pin the first
/// epoch that reached it.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience, bool loss_tie_break = false)
        : patience_(patience), tie_break_(loss_tie_break)
    {
    }

    /// Returns true when the checkpoint for `epoch` should replace the best.
    bool update(double value, std::size_t epoch, double loss = std::numeric_limits<double>::infinity())
    {
        if (value > best_) {
            best_ = value;
            best_loss_ = loss;
            best_epoch_ = epoch;
            bad_ = 0;
            return true;
        }
        ++bad_;
        if (tie_break_ && value == best_ && loss < best_loss_) {
            best_loss_ = loss;
            best_epoch_ = epoch;
            return true;
        }
        return false;
    }

    bool should_stop() const noexcept { return bad_ >= patience_; }
    double best() const noexcept { return best_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }

private:
    std::size_t patience_;
    bool tie_break_;
    double best_ = -std::numeric_limits<double>::infinity();
    double best_loss_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t bad_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0; ///< 1-based
    double train_loss = 0;
    double val_loss = 0;
    double val_acc = 0;
    double val_macro_f1 = 0;
    double lr = 0; ///< rate used during this epoch
    bool operator==(const EpochLog &) const = default;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    bool operator==(const TrainLog &) const = default;

    std::string to_csv() const
    {
        std::ostringstream os;
        os.precision(9);
        os << "epoch,train_loss,val_loss,val_acc,val_macro_f1,lr\n";
        for (const auto &e : epochs)
            os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_acc << ',' << e.val_macro_f1 << ','
               << e.lr << '\n';
        return os.str();
    }
};

inline void to_json(nlohmann::json &j, const EpochLog &e)
{
    j = nlohmann::json{{"epoch", e.epoch},     {"train_loss", e.train_loss},     {"val_loss", e.val_loss},
                       {"val_acc", e.val_acc}, {"val_macro_f1", e.val_macro_f1}, {"lr", e.lr}};
}

inline void from_json(const nlohmann::json &j, EpochLog &e)
{
    e.epoch = j.at("epoch");
    e.train_loss = j.at("train_loss");
    e.val_loss = j.at("val_loss");
    e.val_acc = j.at("val_acc");
    e.val_macro_f1 = j.at("val_macro_f1");
    e.lr = j.at("lr");
}

inline void to_json(nlohmann::json &j, const TrainLog &l) { j = {{"epochs", l.epochs}, {"best_epoch", l.best_epoch}}; }

inline void from_json(const nlohmann::json &j, TrainLog &l)
{
    l.epochs = j.at("epochs").get<std::vector<EpochLog>>();
    l.best_epoch = j.at("best_epoch");
}

/// Records already filtered and z-scored; cropping happens per batch.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<std::string> domains;
    std::vector<SignalMatrix> signals;
    std::vector<int> labels;

    std::size_t size() const noexcept { return ids.size(); }
    bool empty() const noexcept { return ids.empty(); }

    void push(const EcgRecord &r, SignalMatrix conditioned)
    {
        ids.push_back(r.id);
        domains.push_back(r.domain);
        signals.push_back(std::move(conditioned));
        labels.push_back(static_cast<int>(r.label));
    }
};

/// Loads and conditions (filter + z-score) the given manifest records.
inline Dataset load_dataset(const DatasetManifest &m, const std::vector<std::string> &ids,
                            const dsp::BandpassSpec &bp = {})
{
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
            const EcgRecord r = load_record(m, *e);
            d.domains[k] = r.domain;
            d.labels[k] = static_cast<int>(r.label);
            d.signals[k] = dsp::condition(r, bp);
        } catch (const std::exception &ex) {
            errors[k] = ex.what();
        }
    }
    for (const auto &e : errors)
        if (!e.empty())
            throw DataError(e);
    return d;
}

/// Stacks windows of the selected records into one [B, leads, L] tensor.
template <typename Real, typename Rng>
nn::Tensor<Real> make_batch(const Dataset &d, std::span<const std::size_t> idx, const dsp::WindowSpec &win, Rng &rng)
{
    const std::size_t leads = d.signals.at(idx[0]).n_leads;
    nn::Tensor<Real> x(nn::Shape{idx.size(), leads, win.length});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const SignalMatrix w = dsp::window(d.signals[idx[b]], win, rng);
        if (w.n_leads != leads)
            throw ShapeError("batch records disagree on lead count");
        for (std::size_t l = 0; l < leads; ++l) {
            auto src = w.lead(l);
            auto dst = x.row(b, l);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    return x;
}

/// Eval-mode logits for every record (center crop), row-major [n x K].
template <typename Real>
std::vector<double> predict_logits(Model<Real> &model, const Dataset &d, std::size_t chunk = 64)
{
    const dsp::WindowSpec win{model.config().window, dsp::WindowMode::EvalCenter};
    const std::size_t k = model.config().n_classes;
    std::vector<double> out(d.size() * k);
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 unused(0);
    for (std::size_t start = 0; start < d.size(); start += chunk) {
        const std::size_t count = std::min(chunk, d.size() - start);
        const auto x = make_batch<Real>(d, std::span<const std::size_t>(idx).subspan(start, count), win, unused);
        const auto logits = model.predict_logits(x);
        for (std::size_t i = 0; i < count * k; ++i)
            out[start * k + i] = double(logits[i]);
    }
    return out;
}

inline std::vector<int> argmax_rows(std::span<const double> scores, std::size_t k)
{
    std::vector<int> pred(scores.size() / k);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto row = scores.subspan(i * k, k);
        pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return pred;
}

inline std::vector<double> softmax_rows(std::span<const double> logits, std::size_t k)
{
    std::vector<double> p(logits.begin(), logits.end());
    for (std::size_t i = 0; i < p.size(); i += k) {
        const double mx = *std::max_element(p.begin() + std::ptrdiff_t(i), p.begin() + std::ptrdiff_t(i + k));
        double s = 0;
        for (std::size_t c = 0; c < k; ++c)
            s += (p[i + c] = std::exp(p[i + c] - mx));
        for (std::size_t c = 0; c < k; ++c)
            p[i + c] /= s;
    }
    return p;
}

/// Mean smoothed cross-entropy of precomputed logits.
inline double mean_smoothed_ce(std::span<const double> logits, std::span<const int> labels, std::size_t k, double eps)
{
    double total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = logits.subspan(i * k, k);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0;
        for (double z : row)
            s += std::exp(z - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < k; ++c) {
            const double q = (int(c) == labels[i] ? 1.0 - eps : 0.0) + eps / double(k);
            total -= q * (row[c] - lse);
        }
    }
    return labels.empty() ? 0.0 : total / double(labels.size());
}

struct FitResult {
    Checkpoint best;
    TrainLog log;
};

struct FitOptions {
    std::function<void(const EpochLog &)> on_epoch;
    TrainingMetadata meta; ///< protocol, domains, manifest hash; ids and epochs are filled in
};

/// Mini-batch training with per-epoch validation. Returns the parameters of the
/// epoch with the highest validation macro-F1 (first one on ties unless the
/// config enables the loss tie-break).
template <typename Real>
FitResult fit(const Dataset &train, const Dataset &val, Model<Real> &model, const TrainConfig &cfg,
              FitOptions opts = {})
{
    cfg.validate();
    if (train.empty() || val.empty())
        throw Error("fit: training and validation sets must be non-empty");
    {
        std::set<std::string> seen(train.ids.begin(), train.ids.end());
        if (seen.size() != train.ids.size())
            throw Error("fit: duplicate record id in training set");
        for (const auto &id : val.ids)
            if (seen.count(id))
                throw Error("fit: record " + id + " appears in both training and validation sets");
    }

    const ModelConfig &mc = model.config();
    const std::size_t k = mc.n_classes;
    const dsp::WindowSpec train_win{mc.window, dsp::WindowMode::TrainRandomOffset};
    std::mt19937_64 rng(cfg.seed);
    AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps);
    PlateauScheduler sched(cfg.lr0, cfg.scheduler_factor, cfg.scheduler_patience, cfg.lr_floor);
    EarlyStopping stopper(cfg.early_stop_patience, cfg.loss_tie_break);
    model.params().zero_grad();

    FitResult res;
    res.best.config = mc;
    res.best.params = model.params().template flatten<float>();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = sched.lr();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, order.size() - start);
            const auto idx = std::span<const std::size_t>(order).subspan(start, count);
            nn::Graph<Real> g;
            nn::Var x = g.input(make_batch<Real>(train, idx, train_win, rng));
            auto out = model.forward(g, x, true, rng);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i)
                labels[i] = train.labels[idx[i]];
            nn::Var loss = nn::smoothed_cross_entropy(g, out.logits, labels, Real(cfg.label_smoothing));
            const double lv = double(g.value(loss)[0]);
            if (!std::isfinite(lv))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                   std::to_string(start));
            g.backward(loss);
            opt.step(model.params(), lr, cfg.weight_decay);
            model.params().zero_grad();
            loss_sum += lv * double(count);
        }

        const auto logits = predict_logits(model, val);
        const auto pred = argmax_rows(logits, k);
        const auto m = eval::compute_metrics(val.labels, pred, k);
        EpochLog e;
        e.epoch = epoch;
        e.train_loss = loss_sum / double(train.size());
        e.val_loss = mean_smoothed_ce(logits, val.labels, k, cfg.label_smoothing);
        e.val_acc = m.accuracy;
        e.val_macro_f1 = m.macro_f1;
        e.lr = lr;
        res.log.epochs.push_back(e);
        if (stopper.update(e.val_macro_f1, epoch, e.val_loss)) {
            res.best.params = model.params().template flatten<float>();
            res.log.best_epoch = epoch;
        }
        sched.step(e.val_macro_f1);
        if (opts.on_epoch)
            opts.on_epoch(e);
        if (stopper.should_stop())
            break;
    }

    res.best.meta = std::move(opts.meta);
    res.best.meta.epochs_run = res.log.epochs.size();
    res.best.meta.best_epoch = res.log.best_epoch;
    res.best.meta.best_val_macro_f1 = stopper.best();
    res.best.meta.seed = cfg.seed;
    res.best.meta.train_ids = train.ids;
    res.best.meta.val_ids = val.ids;
    res.best.meta.train_config = cfg;
    return res;
}

} // namespace cardiodg
