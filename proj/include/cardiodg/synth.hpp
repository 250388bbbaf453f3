#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cardiodg::synth {

inline constexpr std::size_t kLeads = 12;
/// Lead order: I, II, III, aVR, aVL, aVF, V1..V6.
inline constexpr std::array<const char *, kLeads> kLeadNames{"I",  "II", "III", "aVR", "aVL", "aVF",
                                                             "V1", "V2", "V3",  "V4",  "V5",  "V6"};
inline constexpr std::size_t kLeadV1 = 6;
inline constexpr std::size_t kLeadV6 = 11;

/// Heart-vector direction: x to the patient's left, y inferior, z anterior.
struct Dipole {
    double x = 0, y = 0, z = 0;
};

/// Unit lead axes of the 12-lead system in the same frame.
inline const std::array<Dipole, kLeads> &lead_axes()
{
    static const std::array<Dipole, kLeads> axes = [] {
        std::array<Dipole, kLeads> a{};
        const double deg = std::numbers::pi / 180.0;
        const std::array<double, 6> frontal{0, 60, 120, -150, -30, 90};
        for (std::size_t i = 0; i < 6; ++i)
            a[i] = {std::cos(frontal[i] * deg), std::sin(frontal[i] * deg), 0.0};
        const std::array<double, 6> horizontal{120, 95, 75, 55, 30, 0};
        for (std::size_t i = 0; i < 6; ++i)
            a[6 + i] = {std::cos(horizontal[i] * deg), 0.15, std::sin(horizontal[i] * deg)};
        return a;
    }();
    return axes;
}

/// Projection of a heart vector onto each lead, optionally after rotating the
/// frontal-plane axis by `axis_deg`.
inline std::array<double, kLeads> project(const Dipole &d, double axis_deg = 0.0)
{
    const double r = axis_deg * std::numbers::pi / 180.0;
    const Dipole rot{d.x * std::cos(r) - d.y * std::sin(r), d.x * std::sin(r) + d.y * std::cos(r), d.z};
    std::array<double, kLeads> p{};
    for (std::size_t i = 0; i < kLeads; ++i) {
        const Dipole &a = lead_axes()[i];
        p[i] = a.x * rot.x + a.y * rot.y + a.z * rot.z;
    }
    return p;
}

/// One Gaussian bump of a beat, timed relative to the R peak.
struct Wave {
    double offset = 0; ///< seconds from the R peak
    double width = 0;  ///< Gaussian sigma, seconds
    double amp = 0;    ///< mV along `dir`
    Dipole dir;
};

/// Five-bump beat (P, Q, R, S, T) plus an optional late terminal deflection
/// used for right-bundle conduction.
struct BeatTemplate {
    Wave p, q, r, s, t;
    std::optional<Wave> terminal;

    void validate() const
    {
        for (const Wave *w : {&p, &q, &r, &s, &t})
            if (!(w->width > 0))
                throw Error("beat template: wave widths must be positive");
        if (terminal && !(terminal->width > 0))
            throw Error("beat template: wave widths must be positive");
        if (!(r.amp > 0))
            throw Error("beat template: R amplitude must be positive");
    }

    /// Nominal QRS duration: Q onset to S offset at +-2 sigma.
    double qrs_width() const
    {
        const double end = terminal ? std::max(s.offset + 2 * s.width, terminal->offset + 2 * terminal->width)
                                    : s.offset + 2 * s.width;
        return end - (q.offset - 2 * q.width);
    }
};

enum class EctopicKind { None, Atrial, Ventricular };

struct ClassRule {
    ArrhythmiaClass cls = ArrhythmiaClass::N;
    double rr_mean = 0.8;            ///< seconds
    double rr_cov = 0.04;            ///< coefficient of variation of RR intervals
    bool p_present = true;
    double pr_interval = 0.16;       ///< R peak minus P peak, seconds
    double qrs_width_mult = 1.0;     ///< applied to Q/R/S widths and offsets
    double ectopic_rate = 0.0;       ///< probability a sinus beat is replaced by an early one
    EctopicKind ectopic = EctopicKind::None;
    double coupling = 0.62;          ///< early-beat RR as a fraction of the sinus RR
    std::size_t max_sinus_run = 3;   ///< sinus beats allowed between ectopics
    BeatTemplate beat;
    std::optional<BeatTemplate> ectopic_beat;

    void validate() const
    {
        if (!(rr_mean > 0.3))
            throw Error("class rule: RR mean must exceed 0.3 s");
        if (!(rr_cov >= 0))
            throw Error("class rule: RR CoV must be >= 0");
        if (!(qrs_width_mult > 0) || ectopic_rate < 0 || ectopic_rate > 1)
            throw Error("class rule: invalid QRS multiplier or ectopic rate");
        beat.validate();
        if (ectopic != EctopicKind::None) {
            if (!ectopic_beat)
                throw Error("class rule: ectopic kind set without an ectopic template");
            ectopic_beat->validate();
        }
    }
};

struct DomainProfile {
    std::string name = "default";
    double wander_mv = 0.1;
    double wander_hz = 0.2;
    double noise_mv = 0.02;
    double gain = 1.0;
    double lead_jitter = 0.05;
    // Further acquisition differences between sites.
    double powerline_mv = 0.0;
    double powerline_hz = 50.0;
    double axis_deg = 0.0;       ///< mean frontal-axis rotation of the population
    double axis_spread_deg = 8.0;
    double rate_scale = 1.0;     ///< multiplies every class's mean RR
    double t_scale = 1.0;        ///< T-wave amplitude multiplier
    double lowpass_hz = 0.0;     ///< one-pole device bandwidth; 0 disables

    void validate() const
    {
        if (!(gain > 0))
            throw Error("domain profile " + name + ": gain must be positive");
        if (!(noise_mv >= 0) || !(wander_mv >= 0) || !(powerline_mv >= 0) || !(lead_jitter >= 0))
            throw Error("domain profile " + name + ": noise, wander and jitter must be >= 0");
        if (!(rate_scale > 0) || !(t_scale >= 0) || !(lowpass_hz >= 0))
            throw Error("domain profile " + name + ": invalid rate, T or bandwidth setting");
    }
};

inline void to_json(nlohmann::json &j, const DomainProfile &p)
{
    j = nlohmann::json{{"name", p.name},           {"wander_mv", p.wander_mv},
                       {"wander_hz", p.wander_hz}, {"noise_mv", p.noise_mv},
                       {"gain", p.gain},           {"lead_jitter", p.lead_jitter},
                       {"powerline_mv", p.powerline_mv}, {"powerline_hz", p.powerline_hz},
                       {"axis_deg", p.axis_deg},   {"axis_spread_deg", p.axis_spread_deg},
                       {"rate_scale", p.rate_scale}, {"t_scale", p.t_scale},
                       {"lowpass_hz", p.lowpass_hz}};
}

inline void from_json(const nlohmann::json &j, DomainProfile &p)
{
    DomainProfile d;
    d.name = j.at("name").get<std::string>();
    auto take = [&](const char *key, double &field) {
        if (j.contains(key))
            j.at(key).get_to(field);
    };
    take("wander_mv", d.wander_mv);
    take("wander_hz", d.wander_hz);
    take("noise_mv", d.noise_mv);
    take("gain", d.gain);
    take("lead_jitter", d.lead_jitter);
    take("powerline_mv", d.powerline_mv);
    take("powerline_hz", d.powerline_hz);
    take("axis_deg", d.axis_deg);
    take("axis_spread_deg", d.axis_spread_deg);
    take("rate_scale", d.rate_scale);
    take("t_scale", d.t_scale);
    take("lowpass_hz", d.lowpass_hz);
    p = d;
}

/// Normal sinus beat.
inline BeatTemplate sinus_beat()
{
    BeatTemplate b;
    b.p = {-0.16, 0.022, 0.2, {0.55, 0.80, 0.15}};
    b.q = {-0.022, 0.008, 0.12, {-0.35, 0.05, 0.45}};
    b.r = {0.0, 0.010, 1.20, {0.60, 0.70, -0.40}};
    b.s = {0.024, 0.010, 0.40, {-0.35, -0.30, -0.70}};
    b.t = {0.30, 0.045, 0.30, {0.50, 0.60, 0.35}};
    return b;
}

/// Stretches the QRS (offsets and widths) by `mult` around the R peak.
inline BeatTemplate widen_qrs(BeatTemplate b, double mult)
{
    for (Wave *w : {&b.q, &b.r, &b.s}) {
        w->offset *= mult;
        w->width *= mult;
    }
    if (b.terminal) {
        b.terminal->offset *= mult;
        b.terminal->width *= mult;
    }
    return b;
}

/// Built-in rule for each class.
inline ClassRule default_rule(ArrhythmiaClass c)
{
    ClassRule r;
    r.cls = c;
    r.beat = sinus_beat();
    switch (c) {
    case ArrhythmiaClass::N:
        break;
    case ArrhythmiaClass::AF:
        r.rr_mean = 0.72;
        r.rr_cov = 0.28;
        r.p_present = false;
        break;
    case ArrhythmiaClass::PAC: {
        r.ectopic = EctopicKind::Atrial;
        r.ectopic_rate = 0.3;
        r.coupling = 0.64;
        BeatTemplate e = sinus_beat();
        e.p = {-0.12, 0.018, 0.13, {0.40, -0.75, 0.30}}; // retrograde-looking P
        r.ectopic_beat = e;
        break;
    }
    case ArrhythmiaClass::PVC: {
        r.ectopic = EctopicKind::Ventricular;
        r.ectopic_rate = 0.3;
        r.coupling = 0.60;
        BeatTemplate e;
        e.p = {-0.16, 0.022, 0.0, {0.55, 0.80, 0.15}};
        e.q = {-0.05, 0.018, 0.15, {0.50, -0.20, -0.40}};
        e.r = {0.0, 0.024, 1.60, {-0.35, 0.55, 0.75}};
        e.s = {0.055, 0.022, 0.50, {0.40, -0.40, -0.40}};
        e.t = {0.34, 0.060, 0.45, {0.30, -0.50, -0.60}};
        r.ectopic_beat = e;
        break;
    }
    case ArrhythmiaClass::LBBB: {
        r.qrs_width_mult = 1.8;
        BeatTemplate b = sinus_beat();
        b.q.amp = 0.02; // septal q lost
        b.r = {0.0, 0.010, 1.30, {0.85, 0.35, -0.75}};
        b.s = {0.024, 0.010, 0.20, {-0.20, -0.10, -0.40}};
        b.t = {0.32, 0.050, 0.30, {-0.45, -0.25, 0.45}}; // discordant
        r.beat = b;
        break;
    }
    case ArrhythmiaClass::RBBB: {
        r.qrs_width_mult = 1.6;
        BeatTemplate b = sinus_beat();
        b.terminal = Wave{0.045, 0.012, 0.85, {-0.65, 0.05, 0.85}};
        b.t = {0.31, 0.050, 0.25, {0.55, 0.55, -0.30}};
        r.beat = b;
        break;
    }
    case ArrhythmiaClass::IAVB:
        r.pr_interval = 0.30;
        break;
    }
    return r;
}

/// What was rendered for one beat; the ground truth behind the waveform.
struct BeatAnnotation {
    double r_time = 0;       ///< seconds
    bool ectopic = false;
    double p_amp = 0;        ///< mV along the P direction (0 when absent)
    double pr_interval = 0;  ///< 0 when no P wave
    double qrs_width = 0;    ///< seconds
    double v1_sign = 0;      ///< sign of the dominant late QRS deflection in V1
    double v6_sign = 0;      ///< same for V6
};

struct SyntheticRecord {
    EcgRecord record;
    std::vector<BeatAnnotation> beats;
    double axis_deg = 0;
};

namespace detail {

inline void add_wave(std::vector<double> &lead, double fs, double center, const Wave &w, double amp, double proj)
{
    const double a = amp * proj;
    if (a == 0)
        return;
    const double half = 4.0 * w.width;
    const auto n = static_cast<std::ptrdiff_t>(lead.size());
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil((center - half) * fs)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor((center + half) * fs)));
    const double inv = 1.0 / w.width;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
        const double u = (double(i) / fs - center) * inv;
        lead[static_cast<std::size_t>(i)] += a * std::exp(-0.5 * u * u);
    }
}

/// Dominant sign of the QRS (and terminal) projection within the last half of
/// the complex on lead `l`.
inline double late_qrs_sign(const BeatTemplate &b, double axis, std::size_t l)
{
    const Wave &late = b.terminal ? *b.terminal : b.r;
    double v = late.amp * project(late.dir, axis)[l];
    if (!b.terminal)
        v += 0.5 * b.s.amp * project(b.s.dir, axis)[l];
    return v >= 0 ? 1.0 : -1.0;
}

inline double coefficient_of_variation(const std::vector<double> &x)
{
    if (x.size() < 2)
        return 0;
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
    double v = 0;
    for (double e : x)
        v += (e - m) * (e - m);
    return std::sqrt(v / double(x.size())) / m;
}

} // namespace detail

inline double rr_cov(const std::vector<BeatAnnotation> &beats)
{
    std::vector<double> rr;
    for (std::size_t i = 1; i < beats.size(); ++i)
        rr.push_back(beats[i].r_time - beats[i - 1].r_time);
    return detail::coefficient_of_variation(rr);
}

/// Renders one record. Deterministic given the rng state.
template <typename Rng>
SyntheticRecord generate_annotated(const ClassRule &rule, const DomainProfile &profile, double duration_s, double fs,
                                   Rng &rng, std::string id = "synthetic")
{
    rule.validate();
    profile.validate();
    if (!(fs > 0))
        throw Error("synth: sampling rate must be positive");
    const double rr_base = rule.rr_mean * profile.rate_scale;
    if (!(duration_s >= 2 * rr_base))
        throw Error("synth: duration must cover at least two mean RR intervals");

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * fs));

    // Per-record physiology.
    const double rr_mean = rr_base * std::exp(0.10 * gauss(rng));
    const double pr = rule.pr_interval + 0.012 * gauss(rng);
    const double axis = profile.axis_deg + profile.axis_spread_deg * gauss(rng);
    const double amp_scale = std::exp(0.12 * gauss(rng));
    const BeatTemplate sinus = widen_qrs(rule.beat, rule.qrs_width_mult);

    // Beat schedule: start one interval before t=0 so tails of earlier beats
    // enter the record, stop one interval after the end.
    struct Planned {
        double t;
        bool ectopic;
    };
    std::vector<Planned> plan;
    std::vector<double> rr_values;
    for (int attempt = 0;; ++attempt) {
        plan.clear();
        double t = -rr_mean * unit(rng);
        std::size_t run = 0;
        bool last_ectopic = true;
        while (t < duration_s + rr_mean) {
            double rr;
            if (rule.cls == ArrhythmiaClass::AF) {
                const double s = rule.rr_cov;
                rr = rr_mean * std::exp(s * gauss(rng) - 0.5 * s * s);
                rr = std::clamp(rr, 0.32, 2.2 * rr_mean);
            } else {
                rr = rr_mean * (1.0 + rule.rr_cov * gauss(rng));
                rr = std::clamp(rr, 0.85 * rr_mean, 1.15 * rr_mean);
            }
            bool ectopic = false;
            if (rule.ectopic != EctopicKind::None && !last_ectopic && !plan.empty())
                ectopic = run >= rule.max_sinus_run || unit(rng) < rule.ectopic_rate;
            if (ectopic) {
                const double early = rule.coupling * rr * (1.0 + 0.04 * gauss(rng));
                const double te = plan.back().t + early;
                plan.push_back({te, true});
                // Atrial ectopy resets the sinus node; ventricular ectopy leaves
                // it undisturbed (compensatory pause).
                t = rule.ectopic == EctopicKind::Atrial ? te + rr : plan[plan.size() - 2].t + 2 * rr;
                run = 0;
                last_ectopic = true;
                continue;
            }
            plan.push_back({t, false});
            t += rr;
            ++run;
            last_ectopic = false;
        }
        rr_values.clear();
        std::vector<double> inside;
        for (const auto &b : plan)
            if (b.t >= 0 && b.t < duration_s)
                inside.push_back(b.t);
        for (std::size_t i = 1; i < inside.size(); ++i)
            rr_values.push_back(inside[i] - inside[i - 1]);
        const bool ok = rule.cls != ArrhythmiaClass::AF ||
                        detail::coefficient_of_variation(rr_values) >= 0.15 || attempt > 200;
        if (ok)
            break;
    }

    std::vector<std::vector<double>> leads(kLeads, std::vector<double>(n, 0.0));
    SyntheticRecord out;
    out.axis_deg = axis;

    auto render = [&](const BeatTemplate &b, double t_r, double p_amp, double pr_s, double t_scale) {
        const auto pp = project(b.p.dir, axis), pq = project(b.q.dir, axis), prr = project(b.r.dir, axis),
                   ps = project(b.s.dir, axis), pt = project(b.t.dir, axis);
        const double jitter = 1.0 + 0.04 * gauss(rng);
        for (std::size_t l = 0; l < kLeads; ++l) {
            if (p_amp > 0)
                detail::add_wave(leads[l], fs, t_r - pr_s, b.p, p_amp * amp_scale, pp[l]);
            detail::add_wave(leads[l], fs, t_r + b.q.offset, b.q, b.q.amp * amp_scale * jitter, pq[l]);
            detail::add_wave(leads[l], fs, t_r + b.r.offset, b.r, b.r.amp * amp_scale * jitter, prr[l]);
            detail::add_wave(leads[l], fs, t_r + b.s.offset, b.s, b.s.amp * amp_scale * jitter, ps[l]);
            detail::add_wave(leads[l], fs, t_r + b.t.offset, b.t, b.t.amp * amp_scale * t_scale, pt[l]);
        }
        if (b.terminal) {
            const auto pterm = project(b.terminal->dir, axis);
            for (std::size_t l = 0; l < kLeads; ++l)
                detail::add_wave(leads[l], fs, t_r + b.terminal->offset, *b.terminal,
                                 b.terminal->amp * amp_scale * jitter, pterm[l]);
        }
    };

    for (const auto &pb : plan) {
        const bool ventricular = pb.ectopic && rule.ectopic == EctopicKind::Ventricular;
        const BeatTemplate &b = pb.ectopic ? *rule.ectopic_beat : sinus;
        double p_amp = 0, pr_s = 0;
        if (!ventricular && rule.p_present) {
            p_amp = b.p.amp;
            pr_s = pb.ectopic ? -b.p.offset : pr;
        }
        render(b, pb.t, p_amp, pr_s, profile.t_scale);
        if (pb.t >= 0 && pb.t < duration_s)
            out.beats.push_back({pb.t, pb.ectopic, p_amp, pr_s, b.qrs_width(),
                                 detail::late_qrs_sign(b, axis, kLeadV1), detail::late_qrs_sign(b, axis, kLeadV6)});
    }

    // Fibrillatory baseline replaces organized atrial activity.
    if (rule.cls == ArrhythmiaClass::AF) {
        const auto pf = project({0.2, 0.45, 0.75});
        const double f = 4.5 + 2.5 * unit(rng);
        const double phase = 2 * std::numbers::pi * unit(rng);
        const double amp = 0.04 + 0.03 * unit(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const double ts = double(i) / fs;
            const double v = amp * (1.0 + 0.4 * std::sin(2 * std::numbers::pi * 0.3 * ts)) *
                             std::sin(2 * std::numbers::pi * f * ts + phase + 0.8 * std::sin(2 * std::numbers::pi * 0.7 * ts));
            for (std::size_t l = 0; l < kLeads; ++l)
                leads[l][i] += v * pf[l];
        }
    }

    // Acquisition chain: device bandwidth, per-lead gain, wander, mains, noise,
    // then the amplifier gain on everything.
    if (profile.lowpass_hz > 0) {
        const double alpha = 1.0 - std::exp(-2 * std::numbers::pi * profile.lowpass_hz / fs);
        for (auto &lead : leads) {
            double y = lead.empty() ? 0.0 : lead[0];
            for (double &v : lead) {
                y += alpha * (v - y);
                v = y;
            }
        }
    }
    const double wander_phase = 2 * std::numbers::pi * unit(rng);
    const double mains_phase = 2 * std::numbers::pi * unit(rng);
    EcgRecord &rec = out.record;
    rec.id = std::move(id);
    rec.domain = profile.name;
    rec.fs = fs;
    rec.label = rule.cls;
    rec.leads = SignalMatrix(kLeads, n);
    for (std::size_t l = 0; l < kLeads; ++l) {
        const double lead_gain = std::max(0.2, 1.0 + profile.lead_jitter * gauss(rng));
        const double lead_wander = profile.wander_mv * (0.5 + unit(rng));
        auto dst = rec.leads.lead(l);
        for (std::size_t i = 0; i < n; ++i) {
            const double ts = double(i) / fs;
            double v = leads[l][i] * lead_gain;
            v += lead_wander * std::sin(2 * std::numbers::pi * profile.wander_hz * ts + wander_phase + 0.3 * double(l));
            if (profile.powerline_mv > 0)
                v += profile.powerline_mv * std::sin(2 * std::numbers::pi * profile.powerline_hz * ts + mains_phase);
            if (profile.noise_mv > 0)
                v += profile.noise_mv * gauss(rng);
            dst[i] = static_cast<float>(profile.gain * v);
        }
    }
    return out;
}

template <typename Rng>
EcgRecord generate_record(const ClassRule &rule, const DomainProfile &profile, double duration_s, double fs, Rng &rng,
                          std::string id = "synthetic")
{
    return generate_annotated(rule, profile, duration_s, fs, rng, std::move(id)).record;
}

/// Class proportions in ordinal order.
using ClassMix = std::array<double, kNumClasses>;

/// Aggregate class counts of the four public cohorts the engine targets
/// (N, AF, PAC, PVC, LBBB, RBBB, IAVB), normalized.
inline ClassMix reference_class_mix()
{
    const std::array<double, kNumClasses> counts{29070, 5010, 984, 2131, 1223, 2506, 1631};
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    ClassMix m{};
    for (std::size_t i = 0; i < kNumClasses; ++i)
        m[i] = counts[i] / total;
    return m;
}

/// Majority-N mix with every minority class equally present; keeps each class
/// learnable from a few hundred records.
inline ClassMix balanced_class_mix() { return {0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}; }

/// Integer counts summing to n: floors of n*p, remaining units to the largest
/// remainders (ties to the lower class index).
inline std::array<std::size_t, kNumClasses> largest_remainder(const ClassMix &mix, std::size_t n)
{
    const double sum = std::accumulate(mix.begin(), mix.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error("class proportions must sum to 1 (got " + std::to_string(sum) + ")");
    std::array<std::size_t, kNumClasses> counts{};
    std::array<double, kNumClasses> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (mix[i] < 0)
            throw Error("class proportions must be non-negative");
        const double exact = mix[i] * double(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - double(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, kNumClasses> order{};
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned)
        ++counts[order[k % kNumClasses]];
    return counts;
}

/// Four acquisition sites with distinct devices and populations. The last one
/// is the most shifted and serves as the default held-out domain.
inline std::vector<DomainProfile> default_domains()
{
    DomainProfile a;
    a.name = "cpsc-like";
    a.noise_mv = 0.02;
    a.wander_mv = 0.10;
    a.wander_hz = 0.15;

    DomainProfile b;
    b.name = "ptbxl-like";
    b.gain = 0.8;
    b.noise_mv = 0.03;
    b.wander_mv = 0.20;
    b.wander_hz = 0.30;
    b.powerline_mv = 0.02;
    b.powerline_hz = 50;
    b.axis_deg = -8;
    b.rate_scale = 1.05;
    b.lowpass_hz = 40;

    DomainProfile c;
    c.name = "georgia-like";
    c.gain = 1.25;
    c.noise_mv = 0.10;
    c.wander_mv = 0.30;
    c.wander_hz = 0.20;
    c.powerline_mv = 0.08;
    c.powerline_hz = 60;
    c.axis_deg = 8;
    c.lead_jitter = 0.10;
    c.t_scale = 1.2;

    DomainProfile d;
    d.name = "chapman-like";
    d.gain = 1.6;
    d.noise_mv = 0.14;
    d.wander_mv = 0.40;
    d.wander_hz = 0.25;
    d.powerline_mv = 0.12;
    d.powerline_hz = 60;
    d.axis_deg = 12;
    d.lead_jitter = 0.20;
    d.rate_scale = 0.95;
    d.t_scale = 1.3;
    d.lowpass_hz = 35;
    return {a, b, c, d};
}

struct DatasetSpec {
    std::vector<DomainProfile> domains = default_domains();
    ClassMix class_mix = reference_class_mix();
    std::size_t n_per_domain = 200;
    double fs = 500;
    double duration_s = 10;
    std::uint64_t seed = 42;
};

/// Writes `<out_dir>/<domain>/<id>.ecg` for every record plus
/// `<out_dir>/manifest.json`, and returns the manifest.
inline DatasetManifest generate_dataset(const DatasetSpec &spec, const fs::path &out_dir)
{
    if (spec.domains.empty())
        throw Error("synth: at least one domain required");
    for (const auto &d : spec.domains)
        d.validate();
    const auto counts = largest_remainder(spec.class_mix, spec.n_per_domain);

    DatasetManifest manifest;
    manifest.base_dir = out_dir;
    std::vector<std::pair<ManifestEntry, const DomainProfile *>> jobs;
    for (const auto &dom : spec.domains) {
        std::vector<ArrhythmiaClass> labels;
        for (std::size_t c = 0; c < kNumClasses; ++c)
            labels.insert(labels.end(), counts[c], static_cast<ArrhythmiaClass>(c));
        std::mt19937_64 order_rng(derive_seed(spec.seed, "order/" + dom.name));
        std::shuffle(labels.begin(), labels.end(), order_rng);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            char idx[24];
            std::snprintf(idx, sizeof idx, "%04zu", i);
            ManifestEntry e;
            e.id = dom.name + "-" + idx;
            e.path = dom.name + "/" + e.id + ".ecg";
            e.domain = dom.name;
            e.label = labels[i];
            e.fs = spec.fs;
            e.n_leads = kLeads;
            e.n_samples = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));
            jobs.emplace_back(e, &dom);
        }
    }

    std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(jobs.size()); ++i) {
        const auto &[e, dom] = jobs[static_cast<std::size_t>(i)];
        try {
            std::mt19937_64 rng(derive_seed(spec.seed, e.id));
            const EcgRecord r = generate_record(default_rule(e.label), *dom, spec.duration_s, spec.fs, rng, e.id);
            write_signal(out_dir / e.path, r.leads, static_cast<std::uint32_t>(std::llround(spec.fs)));
        } catch (const std::exception &ex) {
            errors[static_cast<std::size_t>(i)] = e.id + ": " + ex.what();
        }
    }
    for (const auto &err : errors)
        if (!err.empty())
            throw DataError("synth: " + err);
    for (auto &j : jobs)
        manifest.records.push_back(j.first);
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

} // namespace cardiodg::synth
