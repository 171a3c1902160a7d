#include "cola/tape.hpp"

#include <algorithm>

namespace cola {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
const Shape& Var::shape() const { return tape_->shape(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op.kind = "leaf";
    n.shape = value.shape();
    n.value = std::move(value);
    n.leaf = true;
    n.requires_grad = requires_grad;
    n.scope = current_scope();
    n.site = site_prefix_.empty() ? std::string("leaf") : site_prefix_;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
    Node n;
    n.op.kind = "param";
    n.shape = p.value.shape();
    n.param = &p;
    n.leaf = true;
    n.requires_grad = true;
    n.scope = current_scope();
    n.site = p.name;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::record(OpDef op, std::span<const Var> inputs) {
    if (consumed_) throw ContractError("tape already consumed by backward; call reset()");
    std::vector<NodeId> ids;
    std::vector<const Tensor*> ptrs;
    ids.reserve(inputs.size());
    ptrs.reserve(inputs.size());
    bool requires_grad = false;
    for (const Var& v : inputs) {
        if (v.tape() != this) throw ContractError(op.kind + ": operand recorded on a different tape");
        const Node& in = nodes_.at(v.id());
        if (!in.live) throw ContractError(op.kind + ": operand buffer was released");
        ids.push_back(v.id());
        ptrs.push_back(&stored_value(in));
        requires_grad = requires_grad || in.requires_grad;
    }

    Node n;
    n.value = op.forward(ptrs);
    n.shape = n.value.shape();
    n.inputs = std::move(ids);
    n.requires_grad = requires_grad;
    n.scope = current_scope();
    n.site = site_prefix_.empty() ? op.kind : site_prefix_ + "." + op.kind;
    flops_.forward += op.gemm_flops;
    scope_flops_[n.scope].forward += op.gemm_flops;
    n.op = std::move(op);

    nodes_.push_back(std::move(n));
    const auto id = static_cast<NodeId>(nodes_.size() - 1);
    if (nodes_.back().scope != kNoScope) scope_nodes_[nodes_.back().scope].push_back(id);
    return Var(this, id);
}

void Tape::set_policy(RetentionPolicy policy) {
    if (!nodes_.empty()) throw ContractError("retention policy must be set on an empty tape");
    policy_ = policy;
}

void Tape::push_scope(int scope) {
    if (scope < 0) throw ContractError("scope ids must be non-negative");
    if (scope_nodes_.count(scope)) throw ContractError("scope id reused on the same tape");
    scopes_.push_back(scope);
    scope_nodes_[scope];
}

void Tape::pop_scope(std::span<const Var> outputs) {
    if (scopes_.empty()) throw ContractError("pop_scope without matching push_scope");
    const int scope = scopes_.back();
    scopes_.pop_back();
    if (policy_.mode == RecomputeMode::None) return;
    for (NodeId id : scope_nodes_[scope]) {
        Node& n = nodes_[id];
        const bool is_output = std::any_of(outputs.begin(), outputs.end(),
                                           [id](const Var& v) { return v.id() == id; });
        if (is_output || kept_under_policy(id, scope)) continue;
        n.value.release();
        n.live = false;
    }
}

void Tape::label(Var v, std::string site) { nodes_.at(v.id()).site = std::move(site); }

void Tape::tag(Var v, NodeRole role) { nodes_.at(v.id()).role = role; }

bool Tape::kept_under_policy(NodeId id, int consumer_scope) const {
    const Node& n = nodes_[id];
    if (n.leaf) return true;
    if (n.scope != consumer_scope) return true;  // scope input
    if (n.role == NodeRole::Bottleneck && policy_.keep_bottlenecks) return true;
    if (n.role == NodeRole::Boundary && policy_.keep_boundaries) return true;
    return false;
}

const Tensor& Tape::value(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (!n.live) throw ContractError("buffer '" + n.site + "' was released by the checkpoint policy");
    return stored_value(n);
}

const Tensor& Tape::grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.param) return n.param->grad;
    if (!n.leaf) throw ContractError("gradients are retained for leaves only");
    if (!n.requires_grad) throw ContractError("leaf does not require grad");
    if (!n.has_grad) throw ContractError("no gradient yet; run backward first");
    return n.grad;
}

const Shape& Tape::shape(NodeId id) const { return nodes_.at(id).shape; }

FlopCounters Tape::scope_flops(int scope) const {
    auto it = scope_flops_.find(scope);
    return it == scope_flops_.end() ? FlopCounters{} : it->second;
}

std::vector<RetainedBuffer> Tape::retained_buffers() const {
    std::vector<RetainedBuffer> out;
    std::vector<char> counted(nodes_.size(), 0);
    auto add = [&](NodeId id, int scope) {
        if (counted[id]) return;
        counted[id] = 1;
        const Node& n = nodes_[id];
        out.push_back({scope, n.site, n.role, static_cast<std::uint64_t>(shape_numel(n.shape))});
    };
    const bool checkpointing = policy_.mode != RecomputeMode::None;
    for (std::size_t c = 0; c < nodes_.size(); ++c) {
        const Node& consumer = nodes_[c];
        if (consumer.leaf) continue;
        const std::uint32_t flagged = consumer.op.needs | consumer.op.retains;
        const bool scoped = checkpointing && consumer.scope != kNoScope;
        if (!scoped && (flagged & kOutputBit)) add(static_cast<NodeId>(c), consumer.scope);
        for (std::size_t i = 0; i < consumer.inputs.size(); ++i) {
            const NodeId id = consumer.inputs[i];
            if (nodes_[id].leaf) continue;
            if (scoped) {
                if (nodes_[id].scope != consumer.scope) add(id, consumer.scope);
            } else if (flagged & input_bit(i)) {
                add(id, consumer.scope);
            }
        }
        if (scoped) {
            const bool role_kept =
                (consumer.role == NodeRole::Bottleneck && policy_.keep_bottlenecks) ||
                (consumer.role == NodeRole::Boundary && policy_.keep_boundaries);
            if (role_kept) add(static_cast<NodeId>(c), consumer.scope);
        }
    }
    return out;
}

std::uint64_t Tape::saved_scalars() const {
    std::uint64_t total = 0;
    for (const auto& b : retained_buffers()) total += b.scalars;
    return total;
}

void Tape::recompute_node(NodeId id) {
    std::vector<const Tensor*> ptrs;
    {
        const std::vector<NodeId> inputs = nodes_[id].inputs;
        for (NodeId in : inputs) ensure_live(in);
        for (NodeId in : inputs) ptrs.push_back(&stored_value(nodes_[in]));
    }
    Node& n = nodes_[id];
    n.value = n.op.forward(ptrs);
    n.live = true;
    if (n.op.gemm_flops) {
        flops_.recompute += n.op.gemm_flops;
        scope_flops_[n.scope].recompute += n.op.gemm_flops;
        recompute_log_.push_back({n.scope, n.site, n.op.gemm_flops});
    }
}

void Tape::replay_scope(int scope) {
    for (NodeId id : scope_nodes_[scope]) {
        if (!nodes_[id].live) recompute_node(id);
    }
}

void Tape::ensure_live(NodeId id) {
    const Node& n = nodes_[id];
    if (n.live) return;
    if (policy_.mode == RecomputeMode::ReplayScope && n.scope != kNoScope) {
        replay_scope(n.scope);
    } else {
        recompute_node(id);
    }
    if (!nodes_[id].live) throw ContractError("failed to rematerialize '" + n.site + "'");
}

void Tape::release_scope(int scope) {
    for (NodeId id : scope_nodes_[scope]) {
        Node& n = nodes_[id];
        if (n.leaf) continue;
        n.value.release();
        n.live = false;
    }
}

void Tape::backward(Var root) {
    if (consumed_) throw ContractError("backward called twice without reset()");
    if (root.tape() != this) throw ContractError("backward root belongs to a different tape");
    Node& r = nodes_.at(root.id());
    if (shape_numel(r.shape) != 1) {
        throw ContractError("backward root must be a scalar, got " + shape_str(r.shape));
    }
    r.grad = Tensor(r.shape, 1.0);
    r.has_grad = true;

    const bool checkpointing = policy_.mode != RecomputeMode::None;
    int active_scope = kNoScope;
    std::vector<const Tensor*> in_ptrs;
    std::vector<Tensor*> grad_ptrs;

    for (NodeId id = root.id(); id >= 0; --id) {
        if (checkpointing && nodes_[id].scope != active_scope) {
            if (active_scope != kNoScope) release_scope(active_scope);
            active_scope = nodes_[id].scope;
        }
        Node& n = nodes_[id];
        if (!n.has_grad) continue;
        if (n.leaf) {
            if (n.param) {
                auto dst = n.param->grad.data();
                auto src = n.grad.data();
                if (n.param->grad.shape() != n.grad.shape()) n.param->grad = Tensor(n.grad.shape());
                dst = n.param->grad.data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                n.grad.release();
                n.has_grad = false;
            }
            continue;
        }
        const bool any_input_grad = std::any_of(n.inputs.begin(), n.inputs.end(),
                                                [&](NodeId in) { return nodes_[in].requires_grad; });
        if (!any_input_grad) {
            n.grad.release();
            continue;
        }
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            if (n.op.needs & input_bit(i)) ensure_live(n.inputs[i]);
        }
        if (n.op.needs & kOutputBit) ensure_live(id);

        Node& node = nodes_[id];
        in_ptrs.assign(node.inputs.size(), nullptr);
        grad_ptrs.assign(node.inputs.size(), nullptr);
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
            Node& in = nodes_[node.inputs[i]];
            if (node.op.needs & input_bit(i)) in_ptrs[i] = &stored_value(in);
            if (in.requires_grad) {
                if (!in.has_grad) {
                    in.grad = Tensor(in.shape);
                    in.has_grad = true;
                }
                grad_ptrs[i] = &in.grad;
            }
        }
        BackwardArgs args{in_ptrs, (node.op.needs & kOutputBit) ? &stored_value(node) : nullptr,
                          node.grad, grad_ptrs};
        node.op.backward(args);
        flops_.backward += args.flops;
        scope_flops_[node.scope].backward += args.flops;
        node.grad.release();
        node.has_grad = false;
    }
    if (checkpointing && active_scope != kNoScope) release_scope(active_scope);
    for (Node& n : nodes_) {
        if (n.leaf && !n.param && n.requires_grad && !n.has_grad) {
            n.grad = Tensor(n.shape);
            n.has_grad = true;
        }
    }
    consumed_ = true;
}

void Tape::reset() {
    nodes_.clear();
    scopes_.clear();
    scope_nodes_.clear();
    site_prefix_.clear();
    flops_ = {};
    scope_flops_.clear();
    recompute_log_.clear();
    consumed_ = false;
}

}  // namespace cola
