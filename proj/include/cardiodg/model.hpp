#pragma once

#include <cardiodg/nn/ops.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cardiodg {

/// Ablation ladder: Baseline is a plain ResNet1D with a final-stage pooled head;
/// Intermediate adds the multi-layer concentration pipeline; Full adds SE
/// gating and MixStyle on top.
enum class Variant { Baseline, Intermediate, Full };

inline std::string to_string(Variant v)
{
    switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Intermediate: return "intermediate";
    case Variant::Full: return "full";
    }
    return "full";
}

inline Variant parse_variant(const std::string &s)
{
    if (s == "baseline")
        return Variant::Baseline;
    if (s == "intermediate")
        return Variant::Intermediate;
    if (s == "full")
        return Variant::Full;
    throw Error("unknown variant '" + s + "' (expected baseline|intermediate|full)");
}

struct MixStyleConfig {
    double p = 0.3;
    double alpha = 0.1;
    std::vector<std::size_t> stages{1, 2}; ///< 1-based stage indices followed by MixStyle
};

struct ModelConfig {
    Variant variant = Variant::Full;
    std::vector<std::size_t> stage_widths{64, 128, 256, 256};
    std::size_t blocks_per_stage = 1;
    std::size_t stem_kernel = 7;
    std::size_t stem_stride = 1;
    std::size_t block_kernel = 3;
    std::size_t se_reduction = 8;
    std::size_t concentration_width = 64;
    MixStyleConfig mixstyle;
    std::size_t head_hidden = 256;
    double head_dropout = 0.5;
    double concentration_dropout = 0.1;
    std::size_t n_classes = 7;
    std::size_t input_leads = 12;
    std::size_t window = 5000;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    bool use_se() const { return variant == Variant::Full; }
    bool use_concentration() const { return variant != Variant::Baseline; }
    bool use_mixstyle() const { return variant == Variant::Full; }

    /// Width of the vector fed to the MLP head.
    std::size_t fused_width() const
    {
        return use_concentration() ? concentration_width * stage_widths.size() : stage_widths.back();
    }

    /// Reduced-width, shorter-window configuration used for CPU-scale runs. Keeps
    /// the head (256 hidden, 4 x 64 concentration) and all regularizers intact.
    static ModelConfig desk(Variant v = Variant::Full)
    {
        ModelConfig c;
        c.variant = v;
        c.stage_widths = {16, 32, 48, 64};
        c.stem_stride = 4;
        c.window = 2500;
        // Ratio 8 would leave 2..8-wide excitation bottlenecks at these widths.
        c.se_reduction = 2;
        return c;
    }

    void validate() const
    {
        if (stage_widths.empty())
            throw Error("model config: at least one stage required");
        if (blocks_per_stage < 1 || stem_kernel < 1 || block_kernel < 1 || stem_stride < 1)
            throw Error("model config: kernel sizes, strides and block counts must be >= 1");
        if (block_kernel % 2 == 0 || stem_kernel % 2 == 0)
            throw Error("model config: kernel sizes must be odd for same-length padding");
        const std::size_t min_width = *std::min_element(stage_widths.begin(), stage_widths.end());
        if (use_se() && (se_reduction == 0 || min_width % se_reduction != 0))
            throw Error("model config: SE reduction ratio must divide every stage width");
        if (mixstyle.p < 0 || mixstyle.p > 1 || mixstyle.alpha <= 0)
            throw Error("model config: mixstyle needs 0 <= p <= 1 and alpha > 0");
        for (std::size_t s : mixstyle.stages)
            if (s < 1 || s > stage_widths.size())
                throw Error("model config: mixstyle stage index out of range");
        if (head_dropout < 0 || head_dropout >= 1 || concentration_dropout < 0 || concentration_dropout >= 1)
            throw Error("model config: dropout rates must lie in [0, 1)");
        if (n_classes < 2 || input_leads < 1 || window < 1 || head_hidden < 1 || concentration_width < 1)
            throw Error("model config: class count, lead count, window and widths must be positive");
    }
};

inline void to_json(nlohmann::json &j, const ModelConfig &c)
{
    j = nlohmann::json{{"variant", to_string(c.variant)},
                       {"stage_widths", c.stage_widths},
                       {"blocks_per_stage", c.blocks_per_stage},
                       {"stem_kernel", c.stem_kernel},
                       {"stem_stride", c.stem_stride},
                       {"block_kernel", c.block_kernel},
                       {"se_reduction", c.se_reduction},
                       {"concentration_width", c.concentration_width},
                       {"mixstyle", {{"p", c.mixstyle.p}, {"alpha", c.mixstyle.alpha}, {"stages", c.mixstyle.stages}}},
                       {"head_hidden", c.head_hidden},
                       {"head_dropout", c.head_dropout},
                       {"concentration_dropout", c.concentration_dropout},
                       {"n_classes", c.n_classes},
                       {"input_leads", c.input_leads},
                       {"window", c.window},
                       {"bn_momentum", c.bn_momentum},
                       {"bn_eps", c.bn_eps}};
}

/// Missing keys keep their current values, so a partial JSON object acts as an
/// override on top of an existing config.
inline void from_json(const nlohmann::json &j, ModelConfig &c)
{
    if (j.contains("variant"))
        c.variant = parse_variant(j.at("variant").get<std::string>());
    auto take = [&](const char *key, auto &field) {
        if (j.contains(key))
            j.at(key).get_to(field);
    };
    take("stage_widths", c.stage_widths);
    take("blocks_per_stage", c.blocks_per_stage);
    take("stem_kernel", c.stem_kernel);
    take("stem_stride", c.stem_stride);
    take("block_kernel", c.block_kernel);
    take("se_reduction", c.se_reduction);
    take("concentration_width", c.concentration_width);
    if (j.contains("mixstyle")) {
        const auto &m = j.at("mixstyle");
        if (m.contains("p"))
            m.at("p").get_to(c.mixstyle.p);
        if (m.contains("alpha"))
            m.at("alpha").get_to(c.mixstyle.alpha);
        if (m.contains("stages"))
            m.at("stages").get_to(c.mixstyle.stages);
    }
    take("head_hidden", c.head_hidden);
    take("head_dropout", c.head_dropout);
    take("concentration_dropout", c.concentration_dropout);
    take("n_classes", c.n_classes);
    take("input_leads", c.input_leads);
    take("window", c.window);
    take("bn_momentum", c.bn_momentum);
    take("bn_eps", c.bn_eps);
}

/// Test hook for MixStyle: forces the mixing coefficient and/or partner map and
/// records what was used on the last firing.
struct MixStyleProbe {
    std::optional<double> force_lambda;
    std::optional<std::vector<std::size_t>> force_partner;
    bool force_apply = false;
    // filled in by the layer
    std::size_t fired = 0;
    double last_lambda = 0;
    std::vector<std::size_t> last_partner;
};

/// Samples lambda ~ Beta(alpha, alpha) as X / (X + Y) with X, Y ~ Gamma(alpha, 1).
template <typename Rng>
double sample_beta(double alpha, Rng &rng)
{
    std::gamma_distribution<double> gamma(alpha, 1.0);
    for (;;) {
        const double x = gamma(rng), y = gamma(rng);
        if (x + y > 0)
            return x / (x + y);
    }
}

/// Training-time feature-statistics mixing. Identity in eval mode, for batches
/// of one, and with probability 1 - p per call.
template <typename Real, typename Rng>
nn::Var mixstyle(nn::Graph<Real> &g, nn::Var x, const MixStyleConfig &cfg, Rng &rng, bool training,
                 MixStyleProbe *probe = nullptr)
{
    const std::size_t batch = g.value(x).shape().batch;
    if (!training || batch < 2)
        return x;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool apply = unit(rng) < cfg.p || (probe && probe->force_apply);
    if (!apply)
        return x;
    double lam = sample_beta(cfg.alpha, rng);
    std::vector<std::size_t> partner(batch);
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    std::shuffle(partner.begin(), partner.end(), rng);
    if (probe) {
        if (probe->force_lambda)
            lam = *probe->force_lambda;
        if (probe->force_partner)
            partner = *probe->force_partner;
        ++probe->fired;
        probe->last_lambda = lam;
        probe->last_partner = partner;
    }
    return nn::mix_style(g, x, Real(lam), partner);
}

/// Hook invoked on the output of every named convolution. Returning a different
/// variable splices it into the network (used for Grad-CAM capture and
/// perturbation checks).
template <typename Real>
using ConvHook = std::function<nn::Var(nn::Graph<Real> &, const std::string &, nn::Var)>;

template <typename Real>
struct ForwardResult {
    nn::Var logits;
    std::vector<nn::Var> stage_features; ///< F_1..F_N, the concentration taps
    nn::Var fused;                       ///< input of the MLP head
};

struct Efficiency {
    std::size_t params = 0;  ///< trainable parameters
    std::size_t buffers = 0; ///< checkpointed non-trainable state
    double flops = 0;        ///< 2 x multiply-accumulates per single-record forward
    double latency_ms = 0;   ///< median single-record eval forward
    std::size_t runs = 0;
};

/// The SE-ResNet1D network with concentration fusion and an MLP head.
template <typename Real>
class Model {
public:
    struct Conv {
        std::string name;
        nn::Parameter<Real> *weight = nullptr;
        nn::Parameter<Real> *bias = nullptr;
        std::size_t stride = 1;
        std::size_t pad = 0;
    };
    struct BatchNorm {
        nn::Parameter<Real> *gamma = nullptr;
        nn::Parameter<Real> *beta = nullptr;
        nn::Buffer<Real> *mean = nullptr;
        nn::Buffer<Real> *var = nullptr;
    };
    struct SqueezeExcite {
        nn::Parameter<Real> *w1 = nullptr, *b1 = nullptr, *w2 = nullptr, *b2 = nullptr;
    };
    struct ResBlock {
        Conv conv1, conv2;
        BatchNorm bn1, bn2;
        std::optional<SqueezeExcite> se;
        std::optional<Conv> shortcut;
    };
    struct Linear {
        nn::Parameter<Real> *weight = nullptr;
        nn::Parameter<Real> *bias = nullptr;
    };

    explicit Model(ModelConfig config, std::uint64_t init_seed = 42) : config_(std::move(config))
    {
        config_.validate();
        build();
        initialize(init_seed);
    }

    Model(const Model &) = delete;
    Model &operator=(const Model &) = delete;

    const ModelConfig &config() const noexcept { return config_; }
    nn::ParamStore<Real> &params() noexcept { return store_; }
    const nn::ParamStore<Real> &params() const noexcept { return store_; }

    std::vector<std::string> conv_layer_names() const
    {
        std::vector<std::string> names{stem_.name};
        for (const auto &stage : stages_)
            for (const auto &blk : stage) {
                names.push_back(blk.conv1.name);
                names.push_back(blk.conv2.name);
                if (blk.shortcut)
                    names.push_back(blk.shortcut->name);
            }
        for (const auto &c : concentration_)
            names.push_back(c.name);
        return names;
    }

    /// Deepest backbone convolution; the default Grad-CAM target.
    std::string default_cam_layer() const { return stages_.back().back().conv2.name; }

    /// x is [B, leads, window]. In eval mode the forward pass is a pure function
    /// of x and the parameters.
    template <typename Rng>
    ForwardResult<Real> forward(nn::Graph<Real> &g, nn::Var x, bool training, Rng &rng,
                                const ConvHook<Real> &hook = {}, MixStyleProbe *probe = nullptr)
    {
        const nn::Shape xs = g.value(x).shape();
        if (xs.channels != config_.input_leads)
            throw ShapeError("model expects " + std::to_string(config_.input_leads) + " leads, got " +
                             std::to_string(xs.channels));
        if (xs.time != config_.window)
            throw ShapeError("model expects window length " + std::to_string(config_.window) + ", got " +
                             std::to_string(xs.time));

        auto conv = [&](const Conv &c, nn::Var in) {
            std::optional<nn::Var> b;
            if (c.bias)
                b = g.param(*c.bias);
            nn::Var out = nn::conv1d(g, in, g.param(*c.weight), b, c.stride, c.pad);
            return hook ? hook(g, c.name, out) : out;
        };
        auto bn = [&](const BatchNorm &b, nn::Var in) {
            nn::BatchNormState<Real> st{&b.mean->value, &b.var->value, Real(config_.bn_momentum),
                                        Real(config_.bn_eps)};
            return nn::batch_norm(g, in, g.param(*b.gamma), g.param(*b.beta), st, training);
        };

        ForwardResult<Real> res;
        nn::Var h = nn::relu(g, bn(stem_bn_, conv(stem_, x)));
        for (std::size_t s = 0; s < stages_.size(); ++s) {
            for (const auto &blk : stages_[s]) {
                nn::Var r = nn::relu(g, bn(blk.bn1, conv(blk.conv1, h)));
                r = bn(blk.bn2, conv(blk.conv2, r));
                if (blk.se)
                    r = squeeze_excite(g, *blk.se, r);
                nn::Var shortcut = blk.shortcut ? conv(*blk.shortcut, h) : h;
                h = nn::relu(g, nn::add(g, shortcut, r));
            }
            if (config_.use_mixstyle() &&
                std::find(config_.mixstyle.stages.begin(), config_.mixstyle.stages.end(), s + 1) !=
                    config_.mixstyle.stages.end())
                h = mixstyle(g, h, config_.mixstyle, rng, training, probe);
            res.stage_features.push_back(h);
        }

        if (config_.use_concentration()) {
            std::vector<nn::Var> pooled;
            for (std::size_t s = 0; s < stages_.size(); ++s)
                pooled.push_back(concentrate(g, s, res.stage_features[s], training, rng, hook));
            res.fused = nn::concat_channels(g, pooled);
        } else {
            res.fused = nn::global_avg_pool(g, res.stage_features.back());
        }

        nn::Var z = nn::linear(g, res.fused, g.param(*head1_.weight), g.param(*head1_.bias));
        z = nn::relu(g, z);
        z = nn::dropout(g, z, Real(config_.head_dropout), training, rng);
        res.logits = nn::linear(g, z, g.param(*head2_.weight), g.param(*head2_.bias));
        return res;
    }

    /// h_l = GAP(dropout(relu(conv1x1(F_l)))).
    template <typename Rng>
    nn::Var concentrate(nn::Graph<Real> &g, std::size_t stage, nn::Var features, bool training, Rng &rng,
                        const ConvHook<Real> &hook = {})
    {
        const Conv &c = concentration_.at(stage);
        nn::Var y = nn::conv1d(g, features, g.param(*c.weight), g.param(*c.bias), 1, 0);
        if (hook)
            y = hook(g, c.name, y);
        y = nn::relu(g, y);
        y = nn::dropout(g, y, Real(config_.concentration_dropout), training, rng);
        return nn::global_avg_pool(g, y);
    }

    /// s = sigmoid(W2 relu(W1 GAP(x))); returns x scaled per channel by s.
    nn::Var squeeze_excite(nn::Graph<Real> &g, const SqueezeExcite &se, nn::Var x)
    {
        nn::Var s = nn::global_avg_pool(g, x);
        s = nn::relu(g, nn::linear(g, s, g.param(*se.w1), g.param(*se.b1)));
        s = nn::sigmoid(g, nn::linear(g, s, g.param(*se.w2), g.param(*se.b2)));
        return nn::scale_channels(g, x, s);
    }

    /// Convenience eval-mode inference returning [B, K] logits as a flat vector.
    std::vector<Real> predict_logits(const nn::Tensor<Real> &x)
    {
        nn::Graph<Real> g;
        std::mt19937_64 unused(0);
        auto res = forward(g, g.input(x), false, unused);
        return g.value(res.logits).storage();
    }

    const std::vector<std::vector<ResBlock>> &stages() const noexcept { return stages_; }
    std::vector<std::vector<ResBlock>> &stages() noexcept { return stages_; }
    const Conv &stem() const noexcept { return stem_; }
    const std::vector<Conv> &concentration() const noexcept { return concentration_; }
    const Linear &head_hidden() const noexcept { return head1_; }
    const Linear &head_output() const noexcept { return head2_; }

    /// Analytic multiply-accumulate count x 2 for one record.
    double flops() const
    {
        double macs = 0;
        auto conv_macs = [&macs](const Conv &c, std::size_t in_len) {
            const nn::Shape w = c.weight->value.shape();
            const std::size_t out_len = nn::conv_out_len(in_len, w.time, c.stride, c.pad);
            macs += double(w.batch) * double(w.channels) * double(w.time) * double(out_len);
            return out_len;
        };
        std::size_t len = conv_macs(stem_, config_.window);
        for (const auto &stage : stages_) {
            for (const auto &blk : stage) {
                const std::size_t in_len = len;
                len = conv_macs(blk.conv1, in_len);
                len = conv_macs(blk.conv2, len);
                if (blk.se)
                    macs += double(blk.se->w1->value.size() + blk.se->w2->value.size());
                if (blk.shortcut)
                    conv_macs(*blk.shortcut, in_len);
            }
        }
        if (config_.use_concentration()) {
            len = config_.window;
            len = nn::conv_out_len(len, stem_.weight->value.shape().time, stem_.stride, stem_.pad);
            for (std::size_t s = 0; s < stages_.size(); ++s) {
                for (const auto &blk : stages_[s]) {
                    len = nn::conv_out_len(len, blk.conv1.weight->value.shape().time, blk.conv1.stride, blk.conv1.pad);
                }
                conv_macs(concentration_[s], len);
            }
        }
        macs += double(head1_.weight->value.size() + head2_.weight->value.size());
        return 2.0 * macs;
    }

    /// Parameter count, FLOP estimate, and median single-record latency over
    /// `runs` eval-mode forwards on a zero input.
    Efficiency efficiency(std::size_t runs = 100)
    {
        Efficiency e;
        e.params = store_.trainable_count();
        e.buffers = store_.buffer_count();
        e.flops = flops();
        e.runs = runs;
        if (runs == 0)
            return e;
        nn::Tensor<Real> x(nn::Shape{1, config_.input_leads, config_.window});
        std::vector<double> ms;
        ms.reserve(runs);
        for (std::size_t i = 0; i < runs; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            (void)predict_logits(x);
            const auto t1 = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(ms.begin(), ms.end());
        e.latency_ms = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
        return e;
    }

private:
    Conv make_conv(const std::string &name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                   bool bias)
    {
        Conv c;
        c.name = name;
        c.weight = &store_.add(name + ".weight", nn::Shape{cout, cin, k}, true);
        if (bias)
            c.bias = &store_.add(name + ".bias", nn::Shape{cout, 1, 1}, false);
        c.stride = stride;
        c.pad = k / 2;
        return c;
    }

    BatchNorm make_bn(const std::string &name, std::size_t channels)
    {
        BatchNorm b;
        b.gamma = &store_.add(name + ".gamma", nn::Shape{channels, 1, 1}, false);
        b.beta = &store_.add(name + ".beta", nn::Shape{channels, 1, 1}, false);
        return b;
    }

    Linear make_linear(const std::string &name, std::size_t in, std::size_t out)
    {
        Linear l;
        l.weight = &store_.add(name + ".weight", nn::Shape{out, in, 1}, true);
        l.bias = &store_.add(name + ".bias", nn::Shape{out, 1, 1}, false);
        return l;
    }

    void build()
    {
        const auto &w = config_.stage_widths;
        stem_ = make_conv("stem.conv", config_.input_leads, w[0], config_.stem_kernel, config_.stem_stride, false);
        stem_bn_ = make_bn("stem.bn", w[0]);
        std::size_t cin = w[0];
        stages_.resize(w.size());
        for (std::size_t s = 0; s < w.size(); ++s) {
            stages_[s].resize(config_.blocks_per_stage);
            for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
                const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
                const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
                const std::size_t cout = w[s];
                ResBlock &blk = stages_[s][b];
                blk.conv1 = make_conv(prefix + ".conv1", cin, cout, config_.block_kernel, stride, false);
                blk.bn1 = make_bn(prefix + ".bn1", cout);
                blk.conv2 = make_conv(prefix + ".conv2", cout, cout, config_.block_kernel, 1, false);
                blk.bn2 = make_bn(prefix + ".bn2", cout);
                if (config_.use_se()) {
                    const std::size_t r = cout / config_.se_reduction;
                    SqueezeExcite se;
                    se.w1 = &store_.add(prefix + ".se.fc1.weight", nn::Shape{r, cout, 1}, true);
                    se.b1 = &store_.add(prefix + ".se.fc1.bias", nn::Shape{r, 1, 1}, false);
                    se.w2 = &store_.add(prefix + ".se.fc2.weight", nn::Shape{cout, r, 1}, true);
                    se.b2 = &store_.add(prefix + ".se.fc2.bias", nn::Shape{cout, 1, 1}, false);
                    blk.se = se;
                }
                if (stride != 1 || cin != cout)
                    blk.shortcut = make_conv(prefix + ".shortcut", cin, cout, 1, stride, true);
                cin = cout;
            }
        }
        if (config_.use_concentration())
            for (std::size_t s = 0; s < w.size(); ++s)
                concentration_.push_back(make_conv("concentration" + std::to_string(s + 1) + ".conv", w[s],
                                                   config_.concentration_width, 1, 1, true));
        head1_ = make_linear("head.fc1", config_.fused_width(), config_.head_hidden);
        head2_ = make_linear("head.fc2", config_.head_hidden, config_.n_classes);

        // Buffers go after all parameters in the flat layout; bind them now
        // that every BatchNorm struct has reached its final address.
        bind_buffers(stem_bn_, "stem.bn");
        for (std::size_t s = 0; s < stages_.size(); ++s)
            for (std::size_t b = 0; b < stages_[s].size(); ++b) {
                const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
                bind_buffers(stages_[s][b].bn1, prefix + ".bn1");
                bind_buffers(stages_[s][b].bn2, prefix + ".bn2");
            }
    }

    void bind_buffers(BatchNorm &b, const std::string &name)
    {
        const std::size_t channels = b.gamma->value.size();
        b.mean = &store_.add_buffer(name + ".running_mean", nn::Shape{channels, 1, 1}, Real(0));
        b.var = &store_.add_buffer(name + ".running_var", nn::Shape{channels, 1, 1}, Real(1));
    }

    void initialize(std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        for (auto &p : store_.params()) {
            const nn::Shape s = p.value.shape();
            const bool is_bn = p.name.ends_with(".gamma") || p.name.ends_with(".beta");
            if (is_bn) {
                p.value.fill(p.name.ends_with(".gamma") ? Real(1) : Real(0));
                continue;
            }
            if (p.decay) {
                const double fan_in = double(s.channels * s.time);
                if (p.name.find(".conv") != std::string::npos || p.name.find("shortcut") != std::string::npos) {
                    // He-normal for convolutions feeding ReLUs.
                    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
                    for (Real &v : p.value.values())
                        v = Real(d(rng));
                } else {
                    std::uniform_real_distribution<double> d(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
                    for (Real &v : p.value.values())
                        v = Real(d(rng));
                }
            } else {
                p.value.fill(Real(0));
            }
        }
    }

    ModelConfig config_;
    nn::ParamStore<Real> store_;
    Conv stem_;
    BatchNorm stem_bn_;
    std::vector<std::vector<ResBlock>> stages_;
    std::vector<Conv> concentration_;
    Linear head1_, head2_;
};

/// Closed-form trainable parameter count for a configuration, independent of the
/// Model construction path.
inline std::size_t count_params(const ModelConfig &c)
{
    std::size_t n = 0;
    const auto &w = c.stage_widths;
    n += c.input_leads * w[0] * c.stem_kernel + 2 * w[0];
    std::size_t cin = w[0];
    for (std::size_t s = 0; s < w.size(); ++s)
        for (std::size_t b = 0; b < c.blocks_per_stage; ++b) {
            const std::size_t cout = w[s];
            const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
            n += cin * cout * c.block_kernel + 2 * cout;  // conv1 + bn1
            n += cout * cout * c.block_kernel + 2 * cout; // conv2 + bn2
            if (c.use_se()) {
                const std::size_t r = cout / c.se_reduction;
                n += 2 * cout * r + r + cout;
            }
            if (stride != 1 || cin != cout)
                n += cin * cout + cout;
            cin = cout;
        }
    if (c.use_concentration())
        for (std::size_t s = 0; s < w.size(); ++s)
            n += w[s] * c.concentration_width + c.concentration_width;
    n += c.fused_width() * c.head_hidden + c.head_hidden;
    n += c.head_hidden * c.n_classes + c.n_classes;
    return n;
}

} // namespace cardiodg
