#pragma once

#include <cardiodg/nn/tensor.hpp>

#include <deque>
#include <span>
#include <string>
#include <vector>

namespace cardiodg::nn {

/// A trainable tensor plus its gradient and AdamW moment buffers.
template <typename Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
    Tensor<Real> first_moment;
    Tensor<Real> second_moment;
    bool decay = true; ///< false for biases and normalization affines
};

/// Non-trainable state that still belongs in a checkpoint (batch-norm running
/// statistics).
template <typename Real>
struct Buffer {
    std::string name;
    Tensor<Real> value;
};

/// Named parameters and buffers in a frozen registration order. The flat view
/// is every parameter in registration order followed by every buffer; this is
/// the checkpoint payload layout.
template <typename Real>
class ParamStore {
public:
    Parameter<Real> &add(std::string name, Shape shape, bool decay)
    {
        auto &p = params_.emplace_back();
        p.name = std::move(name);
        p.value = Tensor<Real>(shape);
        p.grad = Tensor<Real>(shape);
        p.first_moment = Tensor<Real>(shape);
        p.second_moment = Tensor<Real>(shape);
        p.decay = decay;
        return p;
    }

    Buffer<Real> &add_buffer(std::string name, Shape shape, Real fill)
    {
        auto &b = buffers_.emplace_back();
        b.name = std::move(name);
        b.value = Tensor<Real>(shape, fill);
        return b;
    }

    std::deque<Parameter<Real>> &params() noexcept { return params_; }
    const std::deque<Parameter<Real>> &params() const noexcept { return params_; }
    std::deque<Buffer<Real>> &buffers() noexcept { return buffers_; }
    const std::deque<Buffer<Real>> &buffers() const noexcept { return buffers_; }

    std::size_t trainable_count() const
    {
        std::size_t n = 0;
        for (const auto &p : params_)
            n += p.value.size();
        return n;
    }

    std::size_t buffer_count() const
    {
        std::size_t n = 0;
        for (const auto &b : buffers_)
            n += b.value.size();
        return n;
    }

    std::size_t flat_count() const { return trainable_count() + buffer_count(); }

    Parameter<Real> *find(const std::string &name)
    {
        for (auto &p : params_)
            if (p.name == name)
                return &p;
        return nullptr;
    }

    void zero_grad()
    {
        for (auto &p : params_)
            p.grad.fill(Real(0));
    }

    void reset_moments()
    {
        for (auto &p : params_) {
            p.first_moment.fill(Real(0));
            p.second_moment.fill(Real(0));
        }
    }

    template <typename Out = float>
    std::vector<Out> flatten() const
    {
        std::vector<Out> flat;
        flat.reserve(flat_count());
        for (const auto &p : params_)
            for (Real v : p.value.values())
                flat.push_back(static_cast<Out>(v));
        for (const auto &b : buffers_)
            for (Real v : b.value.values())
                flat.push_back(static_cast<Out>(v));
        return flat;
    }

    template <typename In>
    void unflatten(std::span<const In> flat)
    {
        if (flat.size() != flat_count())
            throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) + " values, model expects " +
                             std::to_string(flat_count()));
        std::size_t i = 0;
        for (auto &p : params_)
            for (Real &v : p.value.values())
                v = static_cast<Real>(flat[i++]);
        for (auto &b : buffers_)
            for (Real &v : b.value.values())
                v = static_cast<Real>(flat[i++]);
    }

private:
    std::deque<Parameter<Real>> params_;
    std::deque<Buffer<Real>> buffers_;
};

} // namespace cardiodg::nn
