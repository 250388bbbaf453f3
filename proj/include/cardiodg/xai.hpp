#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/model.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cardiodg::xai {

struct SaliencyMap {
    std::string record_id;
    int target_class = 0;
    std::string layer;
    std::vector<double> importance;      ///< input-length, in [0, 1]
    std::vector<double> channel_weights; ///< time-averaged gradients, one per channel
    std::vector<double> coarse;          ///< rectified map at layer resolution, before scaling
    double target_score = 0;             ///< the logit that was differentiated
    bool no_positive_attribution = false;
};

inline void to_json(nlohmann::json &j, const SaliencyMap &m)
{
    j = nlohmann::json{{"record_id", m.record_id},
                       {"target_class", m.target_class},
                       {"target_class_name", m.target_class >= 0 && m.target_class < int(kNumClasses)
                                                 ? class_name(m.target_class)
                                                 : std::to_string(m.target_class)},
                       {"layer", m.layer},
                       {"target_score", m.target_score},
                       {"no_positive_attribution", m.no_positive_attribution},
                       {"channel_weights", m.channel_weights},
                       {"importance", m.importance}};
}

/// Linear resampling with half-pixel centers (sample i of the output sits at
/// (i + 0.5) * n_in / n_out - 0.5 in input coordinates, clamped to the ends).
inline std::vector<double> interpolate_linear(const std::vector<double> &in, std::size_t n_out)
{
    std::vector<double> out(n_out, 0.0);
    if (in.empty() || n_out == 0)
        return out;
    const double scale = double(in.size()) / double(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double src = std::clamp((double(i) + 0.5) * scale - 0.5, 0.0, double(in.size() - 1));
        const auto lo = static_cast<std::size_t>(std::floor(src));
        const std::size_t hi = std::min(lo + 1, in.size() - 1);
        const double f = src - double(lo);
        out[i] = in[lo] * (1.0 - f) + in[hi] * f;
    }
    return out;
}

/// Core Grad-CAM arithmetic on one sample: activations A and gradients G are
/// [channels x time] row-major. Produces the channel weights, the rectified
/// coarse map, and the max-normalized map resampled to `out_len`.
inline SaliencyMap cam_from(std::span<const double> activations, std::span<const double> gradients,
                            std::size_t channels, std::size_t time, std::size_t out_len)
{
    if (activations.size() != channels * time || gradients.size() != channels * time)
        throw ShapeError("grad-cam: activation/gradient size does not match channels x time");
    SaliencyMap m;
    m.channel_weights.assign(channels, 0.0);
    for (std::size_t k = 0; k < channels; ++k) {
        double s = 0;
        for (std::size_t t = 0; t < time; ++t)
            s += gradients[k * time + t];
        m.channel_weights[k] = s / double(time);
    }
    m.coarse.assign(time, 0.0);
    for (std::size_t t = 0; t < time; ++t) {
        double v = 0;
        for (std::size_t k = 0; k < channels; ++k)
            v += m.channel_weights[k] * activations[k * time + t];
        m.coarse[t] = std::max(0.0, v);
    }
    m.importance = interpolate_linear(m.coarse, out_len);
    const double peak = m.importance.empty() ? 0.0 : *std::max_element(m.importance.begin(), m.importance.end());
    if (!(peak > 0) || !std::isfinite(peak)) {
        std::fill(m.importance.begin(), m.importance.end(), 0.0);
        m.no_positive_attribution = true;
    } else {
        for (double &v : m.importance)
            v = std::min(1.0, v / peak);
    }
    return m;
}

/// Network-agnostic Grad-CAM. `forward` must build the eval-mode graph for
/// the [1, C, L] input and route every named convolution output through the
/// supplied hook; it returns the [1, K, 1] logits.
template <typename Real>
using ForwardFn = std::function<nn::Var(nn::Graph<Real> &, nn::Var, const ConvHook<Real> &)>;

template <typename Real>
SaliencyMap grad_cam(const ForwardFn<Real> &forward, const nn::Tensor<Real> &input, int target_class,
                     const std::string &layer)
{
    if (input.shape().batch != 1)
        throw ShapeError("grad-cam explains one record at a time");
    nn::Graph<Real> g;
    nn::Var x = g.input(input);
    std::optional<nn::Var> captured;
    const ConvHook<Real> hook = [&](nn::Graph<Real> &, const std::string &name, nn::Var v) {
        if (name == layer)
            captured = v;
        return v;
    };
    nn::Var logits = forward(g, x, hook);
    if (!captured)
        throw Error("layer '" + layer + "' is not a convolution of this network");
    const nn::Shape ls = g.value(logits).shape();
    if (target_class < 0 || std::size_t(target_class) >= ls.channels)
        throw Error("target class " + std::to_string(target_class) + " out of range");
    nn::Tensor<Real> seed(ls);
    seed.at(0, std::size_t(target_class), 0) = Real(1);
    g.backward(logits, seed);

    const nn::Tensor<Real> &a = g.value(*captured);
    const nn::Tensor<Real> &gr = g.grad(captured->id);
    std::vector<double> av(a.values().begin(), a.values().end()), gv(gr.values().begin(), gr.values().end());
    SaliencyMap m = cam_from(av, gv, a.shape().channels, a.shape().time, input.shape().time);
    m.layer = layer;
    m.target_class = target_class;
    m.target_score = double(g.value(logits).at(0, std::size_t(target_class), 0));
    return m;
}

/// Grad-CAM on the full model. `target_class` defaults to the predicted class
/// and `layer` to the deepest backbone convolution.
template <typename Real>
SaliencyMap grad_cam(Model<Real> &model, const nn::Tensor<Real> &input, std::optional<int> target_class = {},
                     std::optional<std::string> layer = {}, std::string record_id = {})
{
    const std::string name = layer.value_or(model.default_cam_layer());
    const auto names = model.conv_layer_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw Error("unknown convolution layer '" + name + "'");
    int cls;
    if (target_class) {
        cls = *target_class;
    } else {
        const auto logits = model.predict_logits(input);
        cls = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    std::mt19937_64 unused(0);
    const ForwardFn<Real> fwd = [&](nn::Graph<Real> &g, nn::Var x, const ConvHook<Real> &hook) {
        return model.forward(g, x, false, unused, hook).logits;
    };
    SaliencyMap m = grad_cam<Real>(fwd, input, cls, name);
    m.record_id = std::move(record_id);
    return m;
}

/// CSV overlay: one row per timestep with the selected leads and importance.
inline std::string export_overlay(const SaliencyMap &map, const SignalMatrix &signal,
                                  const std::vector<std::size_t> &leads, double fs = 500.0)
{
    if (map.importance.size() != signal.n_samples)
        throw ShapeError("overlay: saliency length " + std::to_string(map.importance.size()) +
                         " does not match signal length " + std::to_string(signal.n_samples));
    static const std::array<const char *, 12> names{"I",  "II", "III", "aVR", "aVL", "aVF",
                                                    "V1", "V2", "V3",  "V4",  "V5",  "V6"};
    for (std::size_t l : leads)
        if (l >= signal.n_leads)
            throw ShapeError("overlay: lead index " + std::to_string(l) + " out of range");
    std::ostringstream os;
    os.precision(7);
    os << "t,time_s";
    for (std::size_t l : leads)
        os << ',' << (signal.n_leads == 12 ? std::string(names[l]) : "lead" + std::to_string(l));
    os << ",importance\n";
    for (std::size_t t = 0; t < signal.n_samples; ++t) {
        os << t << ',' << double(t) / fs;
        for (std::size_t l : leads)
            os << ',' << signal.lead(l)[t];
        os << ',' << map.importance[t] << '\n';
    }
    return os.str();
}

} // namespace cardiodg::xai
