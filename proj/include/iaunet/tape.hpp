#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iaunet/kernels.hpp"
#include "iaunet/tensor.hpp"

namespace iaunet::nn {

// Trainable tensor plus its persistent gradient accumulator. Gradients are
// additive across uses within a step and cleared explicitly by zero_grad.
template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    std::string name;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : value(std::move(v)), grad(value.shape()), name(std::move(n)) {}

    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
struct Var {
    std::int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

// Execution-ordered record of forward operations. Creation order is a
// topological order, so backward is a single reverse sweep. A tape is
// single-owner: one forward pass, one backward pass, then reset.
template <typename T>
class Tape {
  public:
    Var<T> input(Tensor<T> v, const char* op = "input") {
        require_finite(v, op);
        return push(std::move(v), op, nullptr, nullptr);
    }

    // Leaf bound to a parameter; memoized so repeated uses share one node
    // (gradient still accumulates additively through the shared node).
    Var<T> param(Parameter<T>& p) {
        auto it = param_vars_.find(&p);
        if (it != param_vars_.end()) return Var<T>{it->second};
        Var<T> v = push(p.value, "param", nullptr, &p);
        param_vars_.emplace(&p, v.idx);
        return v;
    }

    Var<T> make(Tensor<T> v, const char* op, std::function<void(Tape&)> bwd) {
        if (finite_checks_) require_finite(v, op);
        return push(std::move(v), op, std::move(bwd), nullptr);
    }

    // Ops attach their reverse rule after creating the output node so the
    // closure can capture the output Var.
    void set_backward(Var<T> v, std::function<void(Tape&)> bwd) {
        nodes_[static_cast<std::size_t>(v.idx)].backward = std::move(bwd);
    }

    const Tensor<T>& value(Var<T> v) const { return nodes_[static_cast<std::size_t>(v.idx)].value; }
    Tensor<T>& value_mut(Var<T> v) { return nodes_[static_cast<std::size_t>(v.idx)].value; }

    bool has_grad(Var<T> v) const { return !nodes_[static_cast<std::size_t>(v.idx)].grad.empty(); }

    // Gradient buffer, zero-allocated on first access.
    Tensor<T>& grad(Var<T> v) {
        Node& n = nodes_[static_cast<std::size_t>(v.idx)];
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    void accumulate_grad(Var<T> v, const Tensor<T>& g) {
        Tensor<T>& dst = grad(v);
        kernels::table<T>().axpy(T(1), g.data(), dst.data(), dst.numel());
    }

    // Reverse sweep from a scalar loss. Populates the bound parameters'
    // gradients. Calling it twice on the same recording is an error.
    void backward(Var<T> loss) {
        if (!loss.valid() || loss.idx >= static_cast<std::int32_t>(nodes_.size()))
            throw UsageError("backward: loss is not a node of this tape");
        if (nodes_[static_cast<std::size_t>(loss.idx)].value.numel() != 1)
            throw UsageError("backward: loss must be scalar, got shape " +
                             nodes_[static_cast<std::size_t>(loss.idx)].value.shape_str());
        if (backward_done_) throw UsageError("backward: tape already consumed; record a new forward pass first");
        backward_done_ = true;
        grad(loss)[0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.empty()) continue;  // nothing flowed into this node
            if (n.backward) n.backward(*this);
            if (n.param) {
                kernels::table<T>().axpy(T(1), n.grad.data(), n.param->grad.data(), n.grad.numel());
                if (finite_checks_) {
                    if (!n.param->grad.all_finite())
                        throw NumericError("non-finite gradient for parameter " + n.param->name);
                }
            }
        }
    }

    void reset() {
        nodes_.clear();
        param_vars_.clear();
        backward_done_ = false;
    }

    std::size_t node_count() const { return nodes_.size(); }
    const char* op_name(Var<T> v) const { return nodes_[static_cast<std::size_t>(v.idx)].op; }
    void set_finite_checks(bool on) { finite_checks_ = on; }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void(Tape&)> backward;
        Parameter<T>* param = nullptr;
        const char* op = "";
    };

    Var<T> push(Tensor<T> v, const char* op, std::function<void(Tape&)> bwd, Parameter<T>* p) {
        if (backward_done_) throw UsageError("tape already consumed by backward; reset() before recording");
        Node n;
        n.value = std::move(v);
        n.backward = std::move(bwd);
        n.param = p;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var<T>{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<T>*, std::int32_t> param_vars_;
    bool backward_done_ = false;
    bool finite_checks_ = true;
};

}  // namespace iaunet::nn
