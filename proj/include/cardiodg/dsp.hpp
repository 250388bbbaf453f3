#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace cardiodg::dsp {

struct BandpassSpec {
    double low_hz = 0.5;
    double high_hz = 45.0;
    int order = 2;
    double fs = 500.0;

    void validate() const
    {
        if (!(fs > 0))
            throw Error("bandpass: sampling rate must be positive");
        if (high_hz >= fs / 2 || low_hz >= fs / 2)
            throw Error("bandpass: cutoff above Nyquist (" + std::to_string(fs / 2) + " Hz)");
        if (!(low_hz > 0) || !(low_hz < high_hz))
            throw Error("bandpass: need 0 < low_hz < high_hz");
        if (order < 1)
            throw Error("bandpass: order must be >= 1");
    }
};

/// One second-order section, a0 normalized to 1:
/// H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;
};

using Sos = std::vector<Biquad>;

/// Complex response of the cascade at frequency f (Hz).
inline std::complex<double> response(const Sos &sos, double f, double fs)
{
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs); // z^-1
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto &s : sos)
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
}

inline double gain_db(const Sos &sos, double f, double fs) { return 20.0 * std::log10(std::abs(response(sos, f, fs))); }

/// Digital Butterworth bandpass of the given order (2*order poles, `order`
/// biquads) from the analog prototype via the lowpass-to-bandpass transform
/// and a prewarped bilinear map. Gain is 1 at the geometric center.
inline Sos design_bandpass(const BandpassSpec &spec)
{
    spec.validate();
    using cd = std::complex<double>;
    const double fs2 = 2.0 * spec.fs;
    const double w1 = fs2 * std::tan(std::numbers::pi * spec.low_hz / spec.fs);
    const double w2 = fs2 * std::tan(std::numbers::pi * spec.high_hz / spec.fs);
    const double bw = w2 - w1;
    const double w0 = std::sqrt(w1 * w2);
    const int n = spec.order;

    std::vector<cd> zpoles;
    for (int k = 0; k < n; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
        const cd half = p * bw / 2.0;
        const cd root = std::sqrt(half * half - w0 * w0);
        for (const cd s : {half + root, half - root})
            zpoles.push_back((fs2 + s) / (fs2 - s));
    }

    // Pair conjugates; leftover real poles pair with each other.
    std::vector<cd> upper, real;
    for (const cd &z : zpoles) {
        if (std::abs(z.imag()) < 1e-12 * std::max(1.0, std::abs(z)))
            real.push_back(z.real());
        else if (z.imag() > 0)
            upper.push_back(z);
    }
    std::sort(real.begin(), real.end(), [](cd a, cd b) { return a.real() < b.real(); });
    Sos sos;
    for (const cd &z : upper)
        sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    for (std::size_t i = 0; i + 1 < real.size(); i += 2)
        sos.push_back({1.0, 0.0, -1.0, -(real[i].real() + real[i + 1].real()), real[i].real() * real[i + 1].real()});
    if (sos.size() != static_cast<std::size_t>(n))
        throw NumericError("bandpass design produced an unexpected pole layout");

    const double f0 = spec.fs / std::numbers::pi * std::atan(w0 / fs2);
    const double g = std::abs(response(sos, f0, spec.fs));
    sos.front().b0 /= g;
    sos.front().b1 /= g;
    sos.front().b2 /= g;
    return sos;
}

namespace detail {

/// Steady-state DF2T state of each section for a unit step input, scaled by
/// the DC gain of the sections before it.
inline std::vector<std::array<double, 2>> step_state(const Sos &sos)
{
    std::vector<std::array<double, 2>> zi(sos.size());
    double scale = 1.0;
    for (std::size_t i = 0; i < sos.size(); ++i) {
        const Biquad &s = sos[i];
        // [[1 + a1, -1], [a2, 1]] z = [b1 - a1 b0, b2 - a2 b0]
        const double r0 = s.b1 - s.a1 * s.b0, r1 = s.b2 - s.a2 * s.b0;
        const double det = (1.0 + s.a1) + s.a2;
        const double z0 = (r0 + r1) / det;
        const double z1 = r1 - s.a2 * z0;
        zi[i] = {scale * z0, scale * z1};
        scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    }
    return zi;
}

inline void run_cascade(const Sos &sos, std::vector<double> &x, double initial)
{
    auto zi = step_state(sos);
    for (std::size_t i = 0; i < sos.size(); ++i) {
        const Biquad &s = sos[i];
        double z0 = zi[i][0] * initial, z1 = zi[i][1] * initial;
        for (double &v : x) {
            const double in = v;
            const double y = s.b0 * in + z0;
            z0 = s.b1 * in - s.a1 * y + z1;
            z1 = s.b2 * in - s.a2 * y;
            v = y;
        }
    }
}

} // namespace detail

/// Default edge extension: three times the cascade's coefficient length.
inline std::size_t default_padding(const Sos &sos) { return 3 * (2 * sos.size() + 1); }

/// Zero-phase forward-backward filtering. The signal is extended at both ends
/// by odd reflection and each pass starts from the steady state matching its
/// first sample, so a constant input passes through the DC-blocking cascade as
/// exact zeros.
inline std::vector<double> apply_bandpass(std::span<const double> x, const Sos &sos,
                                          std::optional<std::size_t> padding = std::nullopt)
{
    const std::size_t n = x.size();
    if (n == 0)
        return {};
    const std::size_t pad = std::min(padding.value_or(default_padding(sos)), n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i)
        ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i)
        ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    detail::run_cascade(sos, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    detail::run_cascade(sos, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline std::vector<double> apply_bandpass(std::span<const float> x, const Sos &sos)
{
    std::vector<double> d(x.begin(), x.end());
    return apply_bandpass(std::span<const double>(d), sos);
}

inline constexpr double kSigmaFloor = 1e-8;

/// (x - mean) / max(std, 1e-8) with the population standard deviation.
inline void zscore(std::span<double> x)
{
    if (x.empty())
        return;
    double mean = 0;
    for (double v : x)
        mean += v;
    mean /= double(x.size());
    double var = 0;
    for (double v : x)
        var += (v - mean) * (v - mean);
    const double sd = std::max(std::sqrt(var / double(x.size())), kSigmaFloor);
    for (double &v : x)
        v = (v - mean) / sd;
}

/// Per-lead z-score of a signal matrix.
inline SignalMatrix zscore_per_lead(const SignalMatrix &m)
{
    SignalMatrix out(m.n_leads, m.n_samples);
    std::vector<double> buf(m.n_samples);
    for (std::size_t l = 0; l < m.n_leads; ++l) {
        const auto src = m.lead(l);
        std::copy(src.begin(), src.end(), buf.begin());
        zscore(buf);
        std::transform(buf.begin(), buf.end(), out.lead(l).begin(), [](double v) { return static_cast<float>(v); });
    }
    return out;
}

enum class WindowMode { TrainRandomOffset, EvalCenter };

struct WindowSpec {
    std::size_t length = 5000;
    WindowMode mode = WindowMode::EvalCenter;
};

/// Start index of the crop for a record of length `total`; 0 when the record is
/// not longer than the window.
template <typename Rng>
std::size_t window_start(std::size_t total, const WindowSpec &spec, Rng &rng)
{
    if (total <= spec.length)
        return 0;
    const std::size_t slack = total - spec.length;
    if (spec.mode == WindowMode::EvalCenter)
        return slack / 2;
    return std::uniform_int_distribution<std::size_t>(0, slack)(rng);
}

/// Crops to exactly `spec.length` samples, zero-padding short records at the end.
template <typename Rng>
SignalMatrix window(const SignalMatrix &m, const WindowSpec &spec, Rng &rng)
{
    if (spec.length < 1)
        throw Error("window length must be >= 1");
    const std::size_t start = window_start(m.n_samples, spec, rng);
    const std::size_t copy = std::min(spec.length, m.n_samples - std::min(start, m.n_samples));
    SignalMatrix out(m.n_leads, spec.length);
    for (std::size_t l = 0; l < m.n_leads; ++l)
        std::copy_n(m.lead(l).begin() + static_cast<std::ptrdiff_t>(start), copy, out.lead(l).begin());
    return out;
}

/// Filter then z-score every lead of a record: the expensive, crop-independent
/// part of preprocessing, cached once per record during training.
inline SignalMatrix condition(const EcgRecord &r, const BandpassSpec &bp)
{
    if (std::abs(r.fs - bp.fs) > 1e-9)
        throw DataError("record " + r.id + ": sampling rate " + std::to_string(r.fs) + " Hz is not supported (expected " +
                        std::to_string(bp.fs) + " Hz; resample before ingestion)");
    const Sos sos = design_bandpass(bp);
    SignalMatrix out(r.leads.n_leads, r.leads.n_samples);
    for (std::size_t l = 0; l < r.leads.n_leads; ++l) {
        std::vector<double> y = apply_bandpass(r.leads.lead(l), sos);
        zscore(y);
        std::transform(y.begin(), y.end(), out.lead(l).begin(), [](double v) { return static_cast<float>(v); });
    }
    return out;
}

/// filter -> z-score -> window.
template <typename Rng>
SignalMatrix preprocess(const EcgRecord &r, const BandpassSpec &bp, const WindowSpec &win, Rng &rng)
{
    return window(condition(r, bp), win, rng);
}

} // namespace cardiodg::dsp
