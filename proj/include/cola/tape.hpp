#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cola/tensor.hpp"

namespace cola {

using NodeId = std::int32_t;
inline constexpr int kNoScope = -1;

// Raised when the tape is used out of protocol (non-scalar root, second
// backward without reset, reading a released buffer).
class ContractError : public std::logic_error {
 public:
    using std::logic_error::logic_error;
};

enum class NodeRole : std::uint8_t { Plain, Bottleneck, Boundary };

struct FlopCounters {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;
    std::uint64_t recompute = 0;

    std::uint64_t total() const { return forward + backward + recompute; }
    FlopCounters& operator+=(const FlopCounters& o) {
        forward += o.forward;
        backward += o.backward;
        recompute += o.recompute;
        return *this;
    }
};

enum class RecomputeMode {
    None,         // every buffer stays resident
    ReplayScope,  // scoped buffers dropped; first need replays the whole scope
    OnDemand,     // scoped buffers dropped; rematerialize only what backward reads
};

// Hook the checkpoint module uses to choose which scoped activations survive
// the forward pass. Scope inputs are always kept.
struct RetentionPolicy {
    RecomputeMode mode = RecomputeMode::None;
    bool keep_bottlenecks = false;
    bool keep_boundaries = false;
};

struct BackwardArgs {
    std::span<const Tensor* const> inputs;  // null where the op does not need the value
    const Tensor* output;                   // null unless needed
    const Tensor& grad_output;
    std::span<Tensor* const> grad_inputs;   // null where the input needs no gradient
    std::uint64_t flops = 0;                // GEMM flops spent, filled by the op
};

using ForwardFn = std::function<Tensor(std::span<const Tensor* const>)>;
using BackwardFn = std::function<void(BackwardArgs&)>;

inline constexpr std::uint32_t kOutputBit = 1u << 31;
inline constexpr std::uint32_t input_bit(std::size_t i) { return 1u << i; }

struct OpDef {
    std::string kind;
    ForwardFn forward;
    BackwardFn backward;
    std::uint32_t needs = 0;    // buffers the backward rule reads
    std::uint32_t retains = 0;  // buffers counted as retained without being read
    std::uint64_t gemm_flops = 0;
};

class Tape;

// Handle to a node on a tape.
class Var {
 public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    NodeId id() const { return id_; }
    bool valid() const { return tape_ != nullptr && id_ >= 0; }

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const;
    bool requires_grad() const;

 private:
    Tape* tape_ = nullptr;
    NodeId id_ = -1;
};

struct RetainedBuffer {
    int scope;
    std::string site;
    NodeRole role;
    std::uint64_t scalars;
};

struct RecomputeRecord {
    int scope;
    std::string site;
    std::uint64_t flops;
};

class Tape {
 public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);
    Var parameter(Parameter& p);

    Var record(OpDef op, std::span<const Var> inputs);

    void set_policy(RetentionPolicy policy);
    const RetentionPolicy& policy() const { return policy_; }

    void push_scope(int scope);
    // Closes the innermost scope. Under a recompute policy, buffers of the
    // scope that are neither kept nor listed in `outputs` are released.
    void pop_scope(std::span<const Var> outputs);
    int current_scope() const { return scopes_.empty() ? kNoScope : scopes_.back(); }

    // Site prefix stamped on subsequently recorded nodes.
    void set_site(std::string prefix) { site_prefix_ = std::move(prefix); }
    const std::string& site() const { return site_prefix_; }
    void label(Var v, std::string site);
    void tag(Var v, NodeRole role);

    void backward(Var root);
    void reset();
    bool consumed() const { return consumed_; }

    const FlopCounters& flops() const { return flops_; }
    FlopCounters scope_flops(int scope) const;
    const std::map<int, FlopCounters>& flops_by_scope() const { return scope_flops_; }

    // Buffers retained past the forward pass under the active policy.
    std::vector<RetainedBuffer> retained_buffers() const;
    std::uint64_t saved_scalars() const;
    const std::vector<RecomputeRecord>& recompute_log() const { return recompute_log_; }

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;
    const Shape& shape(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    bool is_live(NodeId id) const { return nodes_.at(id).live; }
    const std::string& site_of(NodeId id) const { return nodes_.at(id).site; }

 private:
    struct Node {
        OpDef op;
        std::vector<NodeId> inputs;
        Tensor value;
        Shape shape;
        Parameter* param = nullptr;
        Tensor grad;
        std::string site;
        int scope = kNoScope;
        NodeRole role = NodeRole::Plain;
        bool leaf = false;
        bool requires_grad = false;
        bool live = true;
        bool has_grad = false;
    };

    const Tensor& stored_value(const Node& n) const { return n.param ? n.param->value : n.value; }
    bool kept_under_policy(NodeId id, int consumer_scope) const;
    void ensure_live(NodeId id);
    void recompute_node(NodeId id);
    void replay_scope(int scope);
    void release_scope(int scope);

    std::vector<Node> nodes_;
    std::vector<int> scopes_;
    std::map<int, std::vector<NodeId>> scope_nodes_;
    std::string site_prefix_;
    RetentionPolicy policy_;
    FlopCounters flops_;
    std::map<int, FlopCounters> scope_flops_;
    std::vector<RecomputeRecord> recompute_log_;
    bool consumed_ = false;
};

}  // namespace cola
