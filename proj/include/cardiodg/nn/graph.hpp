#pragma once

#include <cardiodg/nn/params.hpp>
#include <cardiodg/nn/tensor.hpp>

#include <functional>
#include <vector>

namespace cardiodg::nn {

template <typename Real>
class Graph;

/// Handle to a node recorded on a particular Graph.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    const void *owner = nullptr;

    bool valid() const noexcept { return owner != nullptr; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
/// is already topologically sorted and backward is a single reverse sweep.
///
/// Gradient accumulation contract: leaves (inputs and parameters) accumulate
/// across backward() calls; interior node gradients are reset at the start of
/// every call. Calling backward twice without zeroing therefore doubles every
/// parameter gradient.
template <typename Real>
class Graph {
public:
    using BackwardFn = std::function<void(Graph &, std::size_t)>;

    Graph() = default;
    Graph(const Graph &) = delete;
    Graph &operator=(const Graph &) = delete;

    Var input(Tensor<Real> value, bool requires_grad = false)
    {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.leaf = true;
        return push(std::move(n));
    }

    /// Binds a parameter as a leaf. Its value is read in place and its gradient
    /// accumulates straight into the parameter's grad buffer.
    Var param(Parameter<Real> &p)
    {
        Node n;
        n.param = &p;
        n.requires_grad = true;
        n.leaf = true;
        return push(std::move(n));
    }

    /// Appends an interior node. The backward function receives the node id and
    /// must push the node's gradient into its parents through grad().
    Var record(Tensor<Real> value, std::initializer_list<Var> parents, BackwardFn backward)
    {
        return record(std::move(value), std::vector<Var>(parents), std::move(backward));
    }

    Var record(Tensor<Real> value, const std::vector<Var> &parents, BackwardFn backward)
    {
        Node n;
        n.value = std::move(value);
        for (const Var &p : parents) {
            check(p);
            n.parents.push_back(p.id);
            n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
        }
        if (n.requires_grad)
            n.backward = std::move(backward);
        return push(std::move(n));
    }

    const Tensor<Real> &value(Var v) const
    {
        check(v);
        return value(v.id);
    }
    const Tensor<Real> &value(std::size_t id) const
    {
        const Node &n = nodes_[id];
        return n.param ? n.param->value : n.value;
    }

    bool requires_grad(Var v) const
    {
        check(v);
        return nodes_[v.id].requires_grad;
    }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer of a node, allocated as zeros on first access.
    Tensor<Real> &grad(std::size_t id)
    {
        Node &n = nodes_[id];
        if (n.param)
            return n.param->grad;
        if (n.grad.shape() != n.value.shape())
            n.grad = Tensor<Real>(n.value.shape());
        return n.grad;
    }
    Tensor<Real> &grad(Var v)
    {
        check(v);
        return grad(v.id);
    }

    /// True when a gradient has reached this node during the last backward.
    bool has_grad(Var v) const
    {
        check(v);
        const Node &n = nodes_[v.id];
        return n.param ? true : n.grad.shape() == n.value.shape() && !n.value.empty();
    }

    const std::vector<std::size_t> &parents(std::size_t id) const { return nodes_[id].parents; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Backpropagates from a scalar loss.
    void backward(Var loss)
    {
        check(loss);
        if (value(loss).size() != 1)
            throw ShapeError("backward() needs a scalar loss, got shape " + to_string(value(loss).shape()));
        backward(loss, Tensor<Real>(value(loss).shape(), Real(1)));
    }

    /// Backpropagates from an arbitrary node with an explicit upstream gradient.
    void backward(Var root, const Tensor<Real> &seed)
    {
        check(root);
        if (!nodes_[root.id].requires_grad)
            throw ShapeError("backward() through a node that does not depend on any gradient-tracked leaf");
        if (seed.shape() != value(root).shape())
            throw ShapeError("backward seed shape " + to_string(seed.shape()) + " does not match node shape " +
                             to_string(value(root).shape()));
        for (std::size_t i = 0; i <= root.id; ++i)
            if (!nodes_[i].leaf)
                nodes_[i].grad = Tensor<Real>();
        Tensor<Real> &g = grad(root.id);
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += seed[i];
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node &n = nodes_[i];
            if (n.leaf || !n.backward || n.grad.empty())
                continue;
            n.backward(*this, i);
        }
    }

private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter<Real> *param = nullptr;
        bool requires_grad = false;
        bool leaf = false;
    };

    Var push(Node n)
    {
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1, this};
    }

    void check(Var v) const
    {
        if (v.owner != this || v.id >= nodes_.size())
            throw ShapeError("variable was not recorded on this graph");
    }

    std::vector<Node> nodes_;
};

} // namespace cardiodg::nn
