#pragma once

#include <cardiodg/nn/graph.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace cardiodg::nn {

namespace detail {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using RowMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstRowMap = Eigen::Map<const RowMatrix<Real>>;

inline void expect(bool ok, const char *op, const std::string &what)
{
    if (!ok)
        throw ShapeError(std::string(op) + ": " + what);
}

/// Range [lo, hi) of output positions t whose source index t*stride + k - pad
/// falls inside [0, len).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t len, std::size_t out_len, std::size_t k,
                                                       std::size_t stride, std::size_t pad)
{
    std::size_t lo = 0;
    if (pad > k)
        lo = (pad - k + stride - 1) / stride;
    if (len + pad <= k)
        return {0, 0};
    std::size_t hi = (len - 1 + pad - k) / stride + 1;
    hi = std::min(hi, out_len);
    lo = std::min(lo, hi);
    return {lo, hi};
}

/// Unrolls x [B, Cin, T] into columns [Cin*K, B*To] (row-major) so that a
/// convolution becomes one GEMM with the [Cout, Cin*K] weight matrix.
template <typename Real>
void im2col(const Tensor<Real> &x, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t out_len,
            RowMatrix<Real> &cols)
{
    const auto [batch, cin, len] = x.shape();
    const std::size_t width = batch * out_len;
    cols.resize(static_cast<Eigen::Index>(cin * kernel), static_cast<Eigen::Index>(width));
    for (std::size_t k = 0; k < kernel; ++k) {
        const auto [lo, hi] = valid_range(len, out_len, k, stride, pad);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            Real *dst = cols.data() + (ci * kernel + k) * width;
            for (std::size_t b = 0; b < batch; ++b) {
                Real *out = dst + b * out_len;
                std::fill(out, out + lo, Real(0));
                std::fill(out + hi, out + out_len, Real(0));
                if (lo == hi)
                    continue;
                // first valid source sample; non-negative by construction of lo
                const Real *src = x.data() + (b * cin + ci) * len + (lo * stride + k - pad);
                if (stride == 1) {
                    std::copy(src, src + (hi - lo), out + lo);
                } else {
                    for (std::size_t t = lo; t < hi; ++t)
                        out[t] = src[(t - lo) * stride];
                }
            }
        }
    }
}

template <typename Real>
void col2im_add(const RowMatrix<Real> &cols, std::size_t kernel, std::size_t stride, std::size_t pad,
                std::size_t out_len, Tensor<Real> &dx)
{
    const auto [batch, cin, len] = dx.shape();
    const std::size_t width = batch * out_len;
    for (std::size_t k = 0; k < kernel; ++k) {
        const auto [lo, hi] = valid_range(len, out_len, k, stride, pad);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const Real *src = cols.data() + (ci * kernel + k) * width;
            for (std::size_t b = 0; b < batch; ++b) {
                if (lo == hi)
                    continue;
                Real *dst = dx.data() + (b * cin + ci) * len + (lo * stride + k - pad);
                const Real *in = src + b * out_len;
                if (stride == 1) {
                    for (std::size_t t = lo; t < hi; ++t)
                        dst[t - lo] += in[t];
                } else {
                    for (std::size_t t = lo; t < hi; ++t)
                        dst[(t - lo) * stride] += in[t];
                }
            }
        }
    }
}

} // namespace detail

/// Output length of a 1D convolution with zero padding.
constexpr std::size_t conv_out_len(std::size_t len, std::size_t kernel, std::size_t stride, std::size_t pad)
{
    return (len + 2 * pad - kernel) / stride + 1;
}

/// Cross-correlation y[b,o,t] = bias[o] + sum_{i,k} w[o,i,k] * x[b,i,t*stride+k-pad].
/// Weight shape is [Cout, Cin, K]; bias (optional) is [Cout, 1, 1].
template <typename Real>
Var conv1d(Graph<Real> &g, Var x, Var w, std::optional<Var> bias, std::size_t stride, std::size_t pad)
{
    using namespace detail;
    const Shape xs = g.value(x).shape();
    const Shape ws = g.value(w).shape();
    expect(stride >= 1, "conv1d", "stride must be >= 1");
    expect(ws.channels == xs.channels,
           "conv1d", "weight " + to_string(ws) + " does not match input channels of " + to_string(xs));
    expect(ws.time >= 1 && ws.time <= xs.time + 2 * pad, "conv1d", "kernel longer than padded input");
    if (bias)
        expect(g.value(*bias).size() == ws.batch, "conv1d", "bias length must equal output channels");

    const std::size_t cout = ws.batch, cin = ws.channels, kernel = ws.time;
    const std::size_t out_len = conv_out_len(xs.time, kernel, stride, pad);
    const std::size_t width = xs.batch * out_len;

    RowMatrix<Real> cols;
    im2col(g.value(x), kernel, stride, pad, out_len, cols);
    ConstRowMap<Real> wm(g.value(w).data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * kernel));
    RowMatrix<Real> ym = wm * cols;

    Tensor<Real> y(Shape{xs.batch, cout, out_len});
    const Real *bv = bias ? g.value(*bias).data() : nullptr;
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
            const Real *src = ym.data() + o * width + b * out_len;
            Real *dst = y.data() + (b * cout + o) * out_len;
            const Real add = bv ? bv[o] : Real(0);
            for (std::size_t t = 0; t < out_len; ++t)
                dst[t] = src[t] + add;
        }

    std::vector<Var> parents{x, w};
    if (bias)
        parents.push_back(*bias);
    return g.record(std::move(y), parents, [=](Graph<Real> &gr, std::size_t self) {
        const Tensor<Real> &gy = gr.grad(self);
        RowMatrix<Real> dy(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(width));
        for (std::size_t b = 0; b < xs.batch; ++b)
            for (std::size_t o = 0; o < cout; ++o) {
                const Real *src = gy.data() + (b * cout + o) * out_len;
                std::copy(src, src + out_len, dy.data() + o * width + b * out_len);
            }
        const auto &par = gr.parents(self);
        const std::size_t xid = par[0], wid = par[1];
        if (par.size() > 2 && gr.requires_grad(par[2])) {
            Tensor<Real> &gb = gr.grad(par[2]);
            for (std::size_t o = 0; o < cout; ++o)
                gb[o] += dy.row(static_cast<Eigen::Index>(o)).sum();
        }
        const bool need_w = gr.requires_grad(wid), need_x = gr.requires_grad(xid);
        if (!need_w && !need_x)
            return;
        RowMatrix<Real> xcols;
        if (need_w) {
            im2col(gr.value(xid), kernel, stride, pad, out_len, xcols);
            RowMap<Real> gw(gr.grad(wid).data(), static_cast<Eigen::Index>(cout),
                            static_cast<Eigen::Index>(cin * kernel));
            gw.noalias() += dy * xcols.transpose();
        }
        if (need_x) {
            ConstRowMap<Real> wmat(gr.value(wid).data(), static_cast<Eigen::Index>(cout),
                                   static_cast<Eigen::Index>(cin * kernel));
            xcols.noalias() = wmat.transpose() * dy;
            col2im_add(xcols, kernel, stride, pad, out_len, gr.grad(xid));
        }
    });
}

/// Running statistics of a batch-norm layer (views into model buffers).
template <typename Real>
struct BatchNormState {
    Tensor<Real> *running_mean = nullptr;
    Tensor<Real> *running_var = nullptr;
    Real momentum = Real(0.1);
    Real eps = Real(1e-5);
};

/// Per-channel normalization over (batch, time). Training mode uses batch
/// statistics and updates the running estimates (unbiased variance); eval mode
/// uses the running estimates.
template <typename Real>
Var batch_norm(Graph<Real> &g, Var x, Var gamma, Var beta, BatchNormState<Real> state, bool training)
{
    const Shape xs = g.value(x).shape();
    const std::size_t C = xs.channels, T = xs.time, B = xs.batch;
    detail::expect(g.value(gamma).size() == C && g.value(beta).size() == C, "batch_norm",
                   "affine parameters must have one entry per channel");
    detail::expect(B * T >= 1, "batch_norm", "empty input");
    const Tensor<Real> &xv = g.value(x);
    const Real *gv = g.value(gamma).data();
    const Real *bv = g.value(beta).data();
    const std::size_t n = B * T;

    std::vector<Real> mean(C), inv_std(C);
    if (training) {
        detail::expect(n >= 2, "batch_norm", "training mode needs more than one value per channel");
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0;
            for (std::size_t b = 0; b < B; ++b)
                for (Real v : xv.row(b, c))
                    s += v;
            const double mu = s / double(n);
            double ss = 0;
            for (std::size_t b = 0; b < B; ++b)
                for (Real v : xv.row(b, c))
                    ss += (v - mu) * (v - mu);
            const double var = ss / double(n);
            mean[c] = Real(mu);
            inv_std[c] = Real(1.0 / std::sqrt(var + double(state.eps)));
            if (state.running_mean && state.running_var) {
                Real &rm = (*state.running_mean)[c];
                Real &rv = (*state.running_var)[c];
                rm = (Real(1) - state.momentum) * rm + state.momentum * Real(mu);
                rv = (Real(1) - state.momentum) * rv + state.momentum * Real(var * double(n) / double(n - 1));
            }
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = state.running_mean ? (*state.running_mean)[c] : Real(0);
            const Real var = state.running_var ? (*state.running_var)[c] : Real(1);
            inv_std[c] = Real(1) / std::sqrt(var + state.eps);
        }
    }

    Tensor<Real> xhat(xs), y(xs);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            auto xr = xv.row(b, c);
            auto hr = xhat.row(b, c);
            auto yr = y.row(b, c);
            for (std::size_t t = 0; t < T; ++t) {
                hr[t] = (xr[t] - mean[c]) * inv_std[c];
                yr[t] = gv[c] * hr[t] + bv[c];
            }
        }

    return g.record(std::move(y), {x, gamma, beta},
                    [xhat = std::move(xhat), inv_std, training, B, C, T](Graph<Real> &gr, std::size_t self) {
                        const Tensor<Real> &gy = gr.grad(self);
                        const auto &par = gr.parents(self);
                        const Real *gam = gr.value(par[1]).data();
                        std::vector<Real> dgamma(C, Real(0)), dbeta(C, Real(0));
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t c = 0; c < C; ++c) {
                                auto gr_row = gy.row(b, c);
                                auto hr = xhat.row(b, c);
                                for (std::size_t t = 0; t < T; ++t) {
                                    dbeta[c] += gr_row[t];
                                    dgamma[c] += gr_row[t] * hr[t];
                                }
                            }
                        if (gr.requires_grad(par[1])) {
                            Tensor<Real> &gg = gr.grad(par[1]);
                            for (std::size_t c = 0; c < C; ++c)
                                gg[c] += dgamma[c];
                        }
                        if (gr.requires_grad(par[2])) {
                            Tensor<Real> &gb = gr.grad(par[2]);
                            for (std::size_t c = 0; c < C; ++c)
                                gb[c] += dbeta[c];
                        }
                        if (!gr.requires_grad(par[0]))
                            return;
                        Tensor<Real> &gx = gr.grad(par[0]);
                        const Real n = Real(B * T);
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t c = 0; c < C; ++c) {
                                auto gr_row = gy.row(b, c);
                                auto hr = xhat.row(b, c);
                                auto xr = gx.row(b, c);
                                const Real k = gam[c] * inv_std[c];
                                if (training) {
                                    for (std::size_t t = 0; t < T; ++t)
                                        xr[t] += k / n * (n * gr_row[t] - dbeta[c] - hr[t] * dgamma[c]);
                                } else {
                                    for (std::size_t t = 0; t < T; ++t)
                                        xr[t] += k * gr_row[t];
                                }
                            }
                    });
}

template <typename Real>
Var relu(Graph<Real> &g, Var x)
{
    Tensor<Real> y = g.value(x);
    for (Real &v : y.values())
        v = v > Real(0) ? v : Real(0);
    return g.record(std::move(y), {x}, [](Graph<Real> &gr, std::size_t self) {
        const std::size_t xid = gr.parents(self)[0];
        const Tensor<Real> &yv = gr.value(self);
        const Tensor<Real> &gy = gr.grad(self);
        Tensor<Real> &gx = gr.grad(xid);
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += yv[i] > Real(0) ? gy[i] : Real(0);
    });
}

template <typename Real>
Real sigmoid_scalar(Real v)
{
    // Both branches avoid exp overflow.
    if (v >= Real(0))
        return Real(1) / (Real(1) + std::exp(-v));
    const Real e = std::exp(v);
    return e / (Real(1) + e);
}

template <typename Real>
Var sigmoid(Graph<Real> &g, Var x)
{
    Tensor<Real> y = g.value(x);
    for (Real &v : y.values())
        v = sigmoid_scalar(v);
    return g.record(std::move(y), {x}, [](Graph<Real> &gr, std::size_t self) {
        const std::size_t xid = gr.parents(self)[0];
        const Tensor<Real> &yv = gr.value(self);
        const Tensor<Real> &gy = gr.grad(self);
        Tensor<Real> &gx = gr.grad(xid);
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += gy[i] * yv[i] * (Real(1) - yv[i]);
    });
}

/// Softmax over the channel axis (the class axis of [B, K, 1] logits), applied
/// independently at every (b, t).
template <typename Real>
Var softmax(Graph<Real> &g, Var x)
{
    const Shape s = g.value(x).shape();
    Tensor<Real> y = g.value(x);
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t t = 0; t < s.time; ++t) {
            Real mx = -std::numeric_limits<Real>::infinity();
            for (std::size_t c = 0; c < s.channels; ++c)
                mx = std::max(mx, y.at(b, c, t));
            Real sum = 0;
            for (std::size_t c = 0; c < s.channels; ++c) {
                y.at(b, c, t) = std::exp(y.at(b, c, t) - mx);
                sum += y.at(b, c, t);
            }
            for (std::size_t c = 0; c < s.channels; ++c)
                y.at(b, c, t) /= sum;
        }
    return g.record(std::move(y), {x}, [s](Graph<Real> &gr, std::size_t self) {
        const std::size_t xid = gr.parents(self)[0];
        const Tensor<Real> &yv = gr.value(self);
        const Tensor<Real> &gy = gr.grad(self);
        Tensor<Real> &gx = gr.grad(xid);
        for (std::size_t b = 0; b < s.batch; ++b)
            for (std::size_t t = 0; t < s.time; ++t) {
                Real dot = 0;
                for (std::size_t c = 0; c < s.channels; ++c)
                    dot += gy.at(b, c, t) * yv.at(b, c, t);
                for (std::size_t c = 0; c < s.channels; ++c)
                    gx.at(b, c, t) += yv.at(b, c, t) * (gy.at(b, c, t) - dot);
            }
    });
}

/// Mean over time: [B, C, T] -> [B, C, 1].
template <typename Real>
Var global_avg_pool(Graph<Real> &g, Var x)
{
    const Shape s = g.value(x).shape();
    detail::expect(s.time >= 1, "global_avg_pool", "time axis is empty");
    const Tensor<Real> &xv = g.value(x);
    Tensor<Real> y(Shape{s.batch, s.channels, 1});
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t c = 0; c < s.channels; ++c) {
            Real sum = 0;
            for (Real v : xv.row(b, c))
                sum += v;
            y.at(b, c, 0) = sum / Real(s.time);
        }
    return g.record(std::move(y), {x}, [s](Graph<Real> &gr, std::size_t self) {
        const Tensor<Real> &gy = gr.grad(self);
        Tensor<Real> &gx = gr.grad(gr.parents(self)[0]);
        for (std::size_t b = 0; b < s.batch; ++b)
            for (std::size_t c = 0; c < s.channels; ++c) {
                const Real d = gy.at(b, c, 0) / Real(s.time);
                for (Real &v : gx.row(b, c))
                    v += d;
            }
    });
}

/// Dense layer on [B, F, 1] features with weight [O, F, 1] and bias [O, 1, 1].
template <typename Real>
Var linear(Graph<Real> &g, Var x, Var w, std::optional<Var> bias)
{
    const Shape xs = g.value(x).shape();
    const Shape ws = g.value(w).shape();
    detail::expect(xs.time == 1, "linear", "input must be [B, F, 1], got " + to_string(xs));
    detail::expect(ws.channels == xs.channels && ws.time == 1, "linear",
                   "weight " + to_string(ws) + " does not match input " + to_string(xs));
    return conv1d(g, x, w, bias, 1, 0);
}

/// Inverted dropout: survivors are scaled by 1/(1-p). Eval mode and p == 0 return
/// the input variable unchanged.
template <typename Real, typename Rng>
Var dropout(Graph<Real> &g, Var x, Real p, bool training, Rng &rng)
{
    static_assert(Rng::max() - Rng::min() == std::numeric_limits<std::uint64_t>::max(),
                  "dropout mask draws need a full-range 64-bit engine");
    detail::expect(p >= Real(0) && p < Real(1), "dropout", "p must lie in [0, 1)");
    if (!training || p == Real(0))
        return x;
    const Tensor<Real> &xv = g.value(x);
    Tensor<Real> mask(xv.shape());
    const Real scale = Real(1) / (Real(1) - p);
    // An element is dropped when a 32-bit uniform draw falls below p * 2^32;
    // each 64-bit engine output feeds two elements.
    const auto threshold = static_cast<std::uint64_t>(std::llround(double(p) * 4294967296.0));
    auto &m = mask.storage();
    for (std::size_t i = 0; i < m.size(); i += 2) {
        const std::uint64_t bits = static_cast<std::uint64_t>(rng());
        m[i] = (bits & 0xffffffffu) < threshold ? Real(0) : scale;
        if (i + 1 < m.size())
            m[i + 1] = (bits >> 32) < threshold ? Real(0) : scale;
    }
    Tensor<Real> y = xv;
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] *= mask[i];
    return g.record(std::move(y), {x}, [mask = std::move(mask)](Graph<Real> &gr, std::size_t self) {
        const Tensor<Real> &gy = gr.grad(self);
        Tensor<Real> &gx = gr.grad(gr.parents(self)[0]);
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += gy[i] * mask[i];
    });
}

/// Concatenates along the channel axis, preserving argument order.
template <typename Real>
Var concat_channels(Graph<Real> &g, const std::vector<Var> &xs)
{
    detail::expect(!xs.empty(), "concat_channels", "no inputs");
    const Shape first = g.value(xs.front()).shape();
    std::size_t channels = 0;
    for (Var v : xs) {
        const Shape s = g.value(v).shape();
        detail::expect(s.batch == first.batch && s.time == first.time, "concat_channels",
                       "batch/time extents differ: " + to_string(s) + " vs " + to_string(first));
        channels += s.channels;
    }
    Tensor<Real> y(Shape{first.batch, channels, first.time});
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (Var v : xs) {
        const Tensor<Real> &xv = g.value(v);
        offsets.push_back(off);
        for (std::size_t b = 0; b < first.batch; ++b)
            for (std::size_t c = 0; c < xv.shape().channels; ++c) {
                auto src = xv.row(b, c);
                std::copy(src.begin(), src.end(), y.row(b, off + c).begin());
            }
        off += xv.shape().channels;
    }
    return g.record(std::move(y), xs, [offsets](Graph<Real> &gr, std::size_t self) {
        const Tensor<Real> &gy = gr.grad(self);
        const auto &par = gr.parents(self);
        for (std::size_t i = 0; i < par.size(); ++i) {
            if (!gr.requires_grad(par[i]))
                continue;
            Tensor<Real> &gx = gr.grad(par[i]);
            const Shape s = gx.shape();
            for (std::size_t b = 0; b < s.batch; ++b)
                for (std::size_t c = 0; c < s.channels; ++c) {
                    auto src = gy.row(b, offsets[i] + c);
                    auto dst = gx.row(b, c);
                    for (std::size_t t = 0; t < s.time; ++t)
                        dst[t] += src[t];
                }
        }
    });
}

/// y[b,c,t] = x[b,c,t] * s[b,c,0]; the channel gate of a squeeze-excitation block.
template <typename Real>
Var scale_channels(Graph<Real> &g, Var x, Var s)
{
    const Shape xs = g.value(x).shape();
    const Shape ss = g.value(s).shape();
    detail::expect(ss == (Shape{xs.batch, xs.channels, 1}), "scale_channels",
                   "scale " + to_string(ss) + " does not match input " + to_string(xs));
    Tensor<Real> y = g.value(x);
    const Tensor<Real> &sv = g.value(s);
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t c = 0; c < xs.channels; ++c) {
            const Real k = sv.at(b, c, 0);
            for (Real &v : y.row(b, c))
                v *= k;
        }
    return g.record(std::move(y), {x, s}, [xs](Graph<Real> &gr, std::size_t self) {
        const auto &par = gr.parents(self);
        const Tensor<Real> &gy = gr.grad(self);
        const Tensor<Real> &xv = gr.value(par[0]);
        const Tensor<Real> &sv = gr.value(par[1]);
        const bool need_x = gr.requires_grad(par[0]), need_s = gr.requires_grad(par[1]);
        for (std::size_t b = 0; b < xs.batch; ++b)
            for (std::size_t c = 0; c < xs.channels; ++c) {
                auto gyr = gy.row(b, c);
                if (need_x) {
                    auto gxr = gr.grad(par[0]).row(b, c);
                    const Real k = sv.at(b, c, 0);
                    for (std::size_t t = 0; t < xs.time; ++t)
                        gxr[t] += gyr[t] * k;
                }
                if (need_s) {
                    auto xr = xv.row(b, c);
                    Real acc = 0;
                    for (std::size_t t = 0; t < xs.time; ++t)
                        acc += gyr[t] * xr[t];
                    gr.grad(par[1]).at(b, c, 0) += acc;
                }
            }
    });
}

template <typename Real>
Var add(Graph<Real> &g, Var a, Var b)
{
    detail::expect(g.value(a).shape() == g.value(b).shape(), "add",
                   to_string(g.value(a).shape()) + " vs " + to_string(g.value(b).shape()));
    Tensor<Real> y = g.value(a);
    const Tensor<Real> &bv = g.value(b);
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += bv[i];
    return g.record(std::move(y), {a, b}, [](Graph<Real> &gr, std::size_t self) {
        const Tensor<Real> &gy = gr.grad(self);
        for (std::size_t p : gr.parents(self)) {
            if (!gr.requires_grad(p))
                continue;
            Tensor<Real> &gx = gr.grad(p);
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += gy[i];
        }
    });
}

/// Sum of all elements, as a [1, 1, 1] scalar.
template <typename Real>
Var sum(Graph<Real> &g, Var x)
{
    Real s = 0;
    for (Real v : g.value(x).values())
        s += v;
    return g.record(Tensor<Real>(Shape{1, 1, 1}, s), {x}, [](Graph<Real> &gr, std::size_t self) {
        const Real d = gr.grad(self)[0];
        for (Real &v : gr.grad(gr.parents(self)[0]).values())
            v += d;
    });
}

/// Scalar sum(x * weights); a random projection used to reduce tensors to a
/// scalar in gradient checks and to pick single logits.
template <typename Real>
Var weighted_sum(Graph<Real> &g, Var x, Tensor<Real> weights)
{
    detail::expect(weights.shape() == g.value(x).shape(), "weighted_sum", "weight shape mismatch");
    const Tensor<Real> &xv = g.value(x);
    Real s = 0;
    for (std::size_t i = 0; i < xv.size(); ++i)
        s += xv[i] * weights[i];
    return g.record(Tensor<Real>(Shape{1, 1, 1}, s), {x},
                    [weights = std::move(weights)](Graph<Real> &gr, std::size_t self) {
                        const Real d = gr.grad(self)[0];
                        Tensor<Real> &gx = gr.grad(gr.parents(self)[0]);
                        for (std::size_t i = 0; i < gx.size(); ++i)
                            gx[i] += d * weights[i];
                    });
}

/// Feature-statistics mixing with an explicit coefficient and partner map.
///
/// For each (instance i, channel c) with time statistics mu_i, sigma_i:
///   y_i = (lam*sigma_i + (1-lam)*sigma_p(i)) * (x_i - mu_i) / sigma_i
///       + lam*mu_i + (1-lam)*mu_p(i)
/// Statistics are population moments over time with sigma clamped below at
/// sigma_floor. Gradients flow through the statistics of both the instance
/// and its partner.
template <typename Real>
Var mix_style(Graph<Real> &g, Var x, Real lam, const std::vector<std::size_t> &partner, Real sigma_floor = Real(1e-6))
{
    const Shape s = g.value(x).shape();
    detail::expect(partner.size() == s.batch, "mix_style", "partner map must have one entry per instance");
    for (std::size_t p : partner)
        detail::expect(p < s.batch, "mix_style", "partner index out of range");
    detail::expect(s.time >= 1, "mix_style", "time axis is empty");
    const std::size_t B = s.batch, C = s.channels, T = s.time;
    const Tensor<Real> &xv = g.value(x);

    std::vector<Real> mu(B * C), sigma(B * C);
    std::vector<char> clamped(B * C, 0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            auto r = xv.row(b, c);
            double m = 0;
            for (Real v : r)
                m += v;
            m /= double(T);
            double var = 0;
            for (Real v : r)
                var += (v - m) * (v - m);
            var /= double(T);
            double sd = std::sqrt(var);
            if (sd < double(sigma_floor)) {
                sd = double(sigma_floor);
                clamped[b * C + c] = 1;
            }
            mu[b * C + c] = Real(m);
            sigma[b * C + c] = Real(sd);
        }

    Tensor<Real> y(s);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = b * C + c, j = partner[b] * C + c;
            const Real gmix = lam * sigma[i] + (Real(1) - lam) * sigma[j];
            const Real bmix = lam * mu[i] + (Real(1) - lam) * mu[j];
            auto xr = xv.row(b, c);
            auto yr = y.row(b, c);
            for (std::size_t t = 0; t < T; ++t)
                yr[t] = gmix * ((xr[t] - mu[i]) / sigma[i]) + bmix;
        }

    return g.record(std::move(y), {x},
                    [=, mu = std::move(mu), sigma = std::move(sigma), clamped = std::move(clamped)](
                        Graph<Real> &gr, std::size_t self) {
                        const std::size_t xid = gr.parents(self)[0];
                        const Tensor<Real> &gy = gr.grad(self);
                        const Tensor<Real> &xin = gr.value(xid);
                        Tensor<Real> &gx = gr.grad(xid);
                        // Upstream gradients w.r.t. each instance's own mu and sigma,
                        // gathered from its own output and from every instance that
                        // borrowed its statistics.
                        std::vector<Real> dmu(B * C, Real(0)), dsigma(B * C, Real(0));
                        std::vector<Real> dn_sum(B * C, Real(0)), dn_n(B * C, Real(0));
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t c = 0; c < C; ++c) {
                                const std::size_t i = b * C + c, j = partner[b] * C + c;
                                const Real gmix = lam * sigma[i] + (Real(1) - lam) * sigma[j];
                                auto gyr = gy.row(b, c);
                                auto xr = xin.row(b, c);
                                Real dg = 0, db = 0, sn = 0, snn = 0;
                                for (std::size_t t = 0; t < T; ++t) {
                                    const Real n = (xr[t] - mu[i]) / sigma[i];
                                    dg += gyr[t] * n;
                                    db += gyr[t];
                                    sn += gyr[t] * gmix;
                                    snn += gyr[t] * gmix * n;
                                }
                                dn_sum[i] = sn;
                                dn_n[i] = snn;
                                dsigma[i] += lam * dg;
                                dsigma[j] += (Real(1) - lam) * dg;
                                dmu[i] += lam * db;
                                dmu[j] += (Real(1) - lam) * db;
                            }
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t c = 0; c < C; ++c) {
                                const std::size_t i = b * C + c, j = partner[b] * C + c;
                                const Real gmix = lam * sigma[i] + (Real(1) - lam) * sigma[j];
                                auto gyr = gy.row(b, c);
                                auto xr = xin.row(b, c);
                                auto gxr = gx.row(b, c);
                                const Real inv = Real(1) / sigma[i];
                                const Real Tn = Real(T);
                                for (std::size_t t = 0; t < T; ++t) {
                                    const Real n = (xr[t] - mu[i]) * inv;
                                    // Through the normalization n = (x - mu)/sigma.
                                    Real d = gyr[t] * gmix * inv - dn_sum[i] * inv / Tn;
                                    if (!clamped[i])
                                        d -= n * dn_n[i] * inv / Tn;
                                    // Through the mixed statistics.
                                    d += dmu[i] / Tn;
                                    if (!clamped[i])
                                        d += dsigma[i] * n / Tn;
                                    gxr[t] += d;
                                }
                            }
                    });
}

/// Mean over the batch of -sum_k q_k log softmax(z)_k with the smoothed target
/// q = (1 - eps) * onehot + eps / K. Logits are [B, K, 1]; returns [1, 1, 1].
template <typename Real>
Var smoothed_cross_entropy(Graph<Real> &g, Var logits, const std::vector<int> &labels, Real eps)
{
    const Shape s = g.value(logits).shape();
    detail::expect(s.time == 1, "smoothed_cross_entropy", "logits must be [B, K, 1]");
    detail::expect(labels.size() == s.batch, "smoothed_cross_entropy", "one label per batch row required");
    detail::expect(eps >= Real(0) && eps < Real(1), "smoothed_cross_entropy", "eps must lie in [0, 1)");
    const std::size_t B = s.batch, K = s.channels;
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= K)
            throw ShapeError("smoothed_cross_entropy: label " + std::to_string(l) + " out of range");
    const Tensor<Real> &z = g.value(logits);
    Tensor<Real> probs(s);
    Real loss = 0;
    for (std::size_t b = 0; b < B; ++b) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t k = 0; k < K; ++k)
            mx = std::max(mx, z.at(b, k, 0));
        Real sum = 0;
        for (std::size_t k = 0; k < K; ++k)
            sum += std::exp(z.at(b, k, 0) - mx);
        const Real lse = mx + std::log(sum);
        for (std::size_t k = 0; k < K; ++k) {
            const Real q = (k == static_cast<std::size_t>(labels[b]) ? Real(1) - eps : Real(0)) + eps / Real(K);
            const Real logp = z.at(b, k, 0) - lse;
            if (q != Real(0))
                loss -= q * logp;
            probs.at(b, k, 0) = std::exp(logp);
        }
    }
    loss /= Real(B);
    return g.record(Tensor<Real>(Shape{1, 1, 1}, loss), {logits},
                    [probs = std::move(probs), labels, eps, B, K](Graph<Real> &gr, std::size_t self) {
                        const Real d = gr.grad(self)[0] / Real(B);
                        Tensor<Real> &gz = gr.grad(gr.parents(self)[0]);
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t k = 0; k < K; ++k) {
                                const Real q =
                                    (k == static_cast<std::size_t>(labels[b]) ? Real(1) - eps : Real(0)) + eps / Real(K);
                                gz.at(b, k, 0) += d * (probs.at(b, k, 0) - q);
                            }
                    });
}

} // namespace cardiodg::nn
