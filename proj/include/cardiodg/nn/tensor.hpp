#pragma once

#include <cardiodg/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cardiodg::nn {

/// Extents of a rank-3 (batch x channels x time) grid. Rank-2 data such as
/// [B, F] features or [B, K] logits is stored with time == 1.
struct Shape {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t time = 0;

    constexpr std::size_t size() const noexcept { return batch * channels * time; }
    constexpr bool operator==(const Shape &) const = default;
};

inline std::string to_string(const Shape &s)
{
    return "[" + std::to_string(s.batch) + "," + std::to_string(s.channels) + "," + std::to_string(s.time) + "]";
}

/// Dense row-major grid: element (b, c, t) lives at (b * C + c) * T + t, so a
/// (b, c) row is contiguous over time.
template <typename Real>
class Tensor {
public:
    using value_type = Real;

    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real(0)) : shape_(shape), data_(shape.size(), fill) {}
    Tensor(Shape shape, std::vector<Real> values) : shape_(shape), data_(std::move(values))
    {
        if (data_.size() != shape_.size())
            throw ShapeError("tensor value count " + std::to_string(data_.size()) + " does not match shape " +
                             to_string(shape_));
    }

    const Shape &shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Real *data() noexcept { return data_.data(); }
    const Real *data() const noexcept { return data_.data(); }
    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }
    std::vector<Real> &storage() noexcept { return data_; }
    const std::vector<Real> &storage() const noexcept { return data_; }

    Real &operator[](std::size_t i) noexcept { return data_[i]; }
    const Real &operator[](std::size_t i) const noexcept { return data_[i]; }

    Real &at(std::size_t b, std::size_t c, std::size_t t) noexcept
    {
        return data_[(b * shape_.channels + c) * shape_.time + t];
    }
    const Real &at(std::size_t b, std::size_t c, std::size_t t) const noexcept
    {
        return data_[(b * shape_.channels + c) * shape_.time + t];
    }

    std::span<Real> row(std::size_t b, std::size_t c) noexcept
    {
        return {data_.data() + (b * shape_.channels + c) * shape_.time, shape_.time};
    }
    std::span<const Real> row(std::size_t b, std::size_t c) const noexcept
    {
        return {data_.data() + (b * shape_.channels + c) * shape_.time, shape_.time};
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same data, new extents with an identical element count.
    Tensor reshaped(Shape s) const
    {
        if (s.size() != shape_.size())
            throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(s));
        return Tensor(s, data_);
    }

    template <typename Other>
    Tensor<Other> cast() const
    {
        return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
    }

private:
    Shape shape_{};
    std::vector<Real> data_;
};

} // namespace cardiodg::nn
