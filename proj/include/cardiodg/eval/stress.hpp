#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace cardiodg::eval {

enum class StressMode { None, LeadDrop, GaussianNoise };

struct StressSpec {
    StressMode mode = StressMode::None;
    std::size_t leads = 0; ///< LeadDrop: 1..3
    double snr_db = 20;    ///< GaussianNoise: 5..20
    std::uint64_t seed = 42;

    void validate() const
    {
        if (mode == StressMode::LeadDrop && (leads < 1 || leads > 3))
            throw Error("lead-drop count must be 1, 2 or 3");
        if (mode == StressMode::GaussianNoise && (snr_db < 5 || snr_db > 20))
            throw Error("noise SNR must lie in [5, 20] dB");
    }

    /// "lead-drop:K" or "noise:SNR_DB"; "none" or "" for no stress.
    static StressSpec parse(const std::string &s, std::uint64_t seed = 42)
    {
        StressSpec spec;
        spec.seed = seed;
        if (s.empty() || s == "none")
            return spec;
        const auto colon = s.find(':');
        const std::string kind = s.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
        try {
            if (kind == "lead-drop") {
                spec.mode = StressMode::LeadDrop;
                spec.leads = std::stoul(arg);
            } else if (kind == "noise") {
                spec.mode = StressMode::GaussianNoise;
                spec.snr_db = std::stod(arg);
            } else {
                throw Error("");
            }
        } catch (const std::exception &) {
            throw Error("stress must be lead-drop:K or noise:SNR_DB, got '" + s + "'");
        }
        spec.validate();
        return spec;
    }

    std::string str() const
    {
        switch (mode) {
        case StressMode::LeadDrop: return "lead-drop:" + std::to_string(leads);
        case StressMode::GaussianNoise: {
            std::string v = std::to_string(snr_db);
            v.erase(v.find_last_not_of('0') + 1);
            if (v.back() == '.')
                v.pop_back();
            return "noise:" + v;
        }
        case StressMode::None: break;
        }
        return "none";
    }
};

/// Zeroes `k` distinct leads; returns their indices in ascending order.
template <typename Rng>
std::vector<std::size_t> drop_leads(SignalMatrix &m, std::size_t k, Rng &rng)
{
    if (k > m.n_leads)
        throw Error("cannot drop more leads than the record has");
    std::vector<std::size_t> idx(m.n_leads);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    for (std::size_t l : idx) {
        auto lead = m.lead(l);
        std::fill(lead.begin(), lead.end(), 0.0f);
    }
    return idx;
}

inline double mean_square(const SignalMatrix &m)
{
    double s = 0;
    for (float v : m.data)
        s += double(v) * double(v);
    return m.data.empty() ? 0.0 : s / double(m.data.size());
}

/// Adds white Gaussian noise rescaled so the realized noise power is exactly
/// P_signal / 10^(snr/10), with powers taken as the mean square over all leads.
template <typename Rng>
void add_noise_snr(SignalMatrix &m, double snr_db, Rng &rng)
{
    if (m.data.empty())
        return;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(m.data.size());
    double p_noise = 0;
    for (double &v : noise) {
        v = gauss(rng);
        p_noise += v * v;
    }
    p_noise /= double(noise.size());
    const double target = mean_square(m) / std::pow(10.0, snr_db / 10.0);
    const double scale = p_noise > 0 ? std::sqrt(target / p_noise) : 0.0;
    for (std::size_t i = 0; i < noise.size(); ++i)
        m.data[i] = static_cast<float>(double(m.data[i]) + scale * noise[i]);
}

/// Applies the stress to one signal. Noise belongs on the raw recording;
/// lead dropping is meant for the preprocessed one (zeroed leads stay zero).
template <typename Rng>
void stress_apply(SignalMatrix &m, const StressSpec &spec, Rng &rng)
{
    spec.validate();
    switch (spec.mode) {
    case StressMode::LeadDrop: drop_leads(m, spec.leads, rng); break;
    case StressMode::GaussianNoise: add_noise_snr(m, spec.snr_db, rng); break;
    case StressMode::None: break;
    }
}

/// Record-level convenience with the per-record stream derived from the id.
inline EcgRecord stress_apply(EcgRecord r, const StressSpec &spec)
{
    std::mt19937_64 rng(derive_seed(spec.seed, "stress/" + r.id));
    stress_apply(r.leads, spec, rng);
    return r;
}

} // namespace cardiodg::eval
