#pragma once

#include <functional>
#include <vector>

#include "dualdepth/core/tensor.hpp"

namespace dualdepth {

class Tape;
struct GradSink;

/// Handle to one node of a Tape. Cheap to copy; valid as long as the tape lives.
struct Value {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
    const Shape& shape() const;
};

enum class OpKind {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Min2,
    Abs,
    Exp,
    Sqrt,
    Sigmoid,
    Relu,
    Elu,
    Scale,
    AddConst,
    ReduceMean,
    ReduceSum,
    ConcatChannels,
    SliceChannels,
    Conv2d,
    PoolMean3x3,
    ResizeBilinear,
    DiffX,
    DiffY,
    GridSample,
    Project,
    SelfAttention,
};

/// Recorded computation graph. Nodes are appended in topological order (inputs
/// always precede their consumers) and each node owns its forward output.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, GradSink&)>;

    /// Differentiable leaf (parameter or input whose gradient is wanted).
    Value leaf(Tensor t) {
        return push(OpKind::Leaf, {}, std::move(t), nullptr, /*tracked=*/true);
    }

    /// Untracked value; backward never propagates into or through it alone.
    Value constant(Tensor t) {
        return push(OpKind::Constant, {}, std::move(t), nullptr, /*tracked=*/false);
    }

    Value push(OpKind kind, std::vector<int> inputs, Tensor out, BackwardFn fn,
               bool force_tracked = false) {
        Node node;
        node.kind = kind;
        node.inputs = std::move(inputs);
        node.out = std::move(out);
        node.backward = std::move(fn);
        node.tracked = force_tracked;
        for (int in : node.inputs) {
            if (nodes_[static_cast<std::size_t>(in)].tracked) node.tracked = true;
        }
        nodes_.push_back(std::move(node));
        return Value{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].out; }
    bool tracked(int id) const { return nodes_[static_cast<std::size_t>(id)].tracked; }
    OpKind kind(int id) const { return nodes_[static_cast<std::size_t>(id)].kind; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Returns per-node gradients; nodes that
    /// do not reach the loss get a zero gradient (materialized on access).
    std::vector<Tensor> backward(Value loss);

private:
    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        Tensor out;
        BackwardFn backward;
        bool tracked = false;
    };
    std::vector<Node> nodes_;
};

/// Accumulation interface handed to backward functions. `buf(id)` returns a
/// zero-initialized gradient tensor for that node, created on first use.
struct GradSink {
    Tape& tape;
    std::vector<Tensor>& grads;

    bool wants(int id) const { return tape.tracked(id); }

    Tensor& buf(int id) {
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.empty()) g = Tensor(tape.value(id).shape());
        return g;
    }
};

inline const Tensor& Value::val() const { return tape->value(id); }
inline const Shape& Value::shape() const { return tape->value(id).shape(); }

inline std::vector<Tensor> Tape::backward(Value loss) {
    check(loss.valid() && loss.tape == this, "backward: loss is not a node of this tape");
    check(value(loss.id).is_scalar(),
          "backward: loss must be scalar (1,1,1,1), got " + value(loss.id).shape().str());
    std::vector<Tensor> grads(nodes_.size());
    grads[static_cast<std::size_t>(loss.id)] = Tensor::scalar(1.0f);
    GradSink sink{*this, grads};
    for (int id = loss.id; id >= 0; --id) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.tracked || !node.backward) continue;
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.empty()) continue;
        node.backward(*this, g, sink);
    }
    // Tracked leaves that never received a contribution report zeros.
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        if (nodes_[id].tracked && grads[id].empty() && nodes_[id].kind == OpKind::Leaf) {
            grads[id] = Tensor(nodes_[id].out.shape());
        }
    }
    return grads;
}

inline const Tensor& grad_of(const std::vector<Tensor>& grads, Value v) {
    return grads[static_cast<std::size_t>(v.id)];
}

}  // namespace dualdepth
