#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cola/model.hpp"

namespace cola {

enum class PolicyKind { None, VanillaGCP, ColaM };

std::string policy_name(PolicyKind k);
PolicyKind policy_from_name(const std::string& s);

struct SiteDecision {
    std::string site;
    bool saved;
    bool recomputed;
};

struct CheckpointPolicy {
    PolicyKind kind = PolicyKind::None;

    RetentionPolicy retention() const;
    // Throws ConfigError when the policy does not apply to the model.
    void check_compatible(const ModelConfig& cfg) const;
    // Save/recompute decision for every site of block 0.
    std::vector<SiteDecision> decision_table(LanguageModel& model, std::size_t n) const;
};

struct LedgerRow {
    int block;  // -1 for embedding and head buffers
    std::string site;
    std::uint64_t saved_scalars = 0;
    std::uint64_t recompute_flops = 0;
};

struct MemoryLedger {
    std::vector<LedgerRow> rows;
    std::map<int, std::uint64_t> saved_by_block;
    std::map<int, std::uint64_t> recompute_by_block;
    std::uint64_t total_saved = 0;      // over blocks
    std::uint64_t total_recompute = 0;  // over blocks
    std::uint64_t outside_saved = 0;    // embedding and head

    std::uint64_t block_saved(int b) const;
    std::uint64_t block_recompute(int b) const;
    std::string to_csv() const;
};

// Built from the tape's retention and recompute instrumentation.
MemoryLedger ledger_from_tape(const Tape& tape);

struct PolicyRun {
    double loss = 0.0;
    std::vector<Tensor> grads;  // parameter order
    MemoryLedger ledger;
    FlopCounters flops;
};

PolicyRun run_with_policy(LanguageModel& model, const Batch& batch, const CheckpointPolicy& policy);

struct FormulaCheck {
    std::string quantity;
    double measured = 0;
    double formula = 0;
    bool exact() const { return measured == formula; }
};

struct LedgerComparison {
    PolicyKind policy = PolicyKind::None;
    std::size_t n = 0;
    ModelConfig config;
    MemoryLedger ledger;
    std::vector<FormulaCheck> checks;
    // Per-site recompute items behind a nonzero recompute residual.
    std::vector<LedgerRow> recompute_items;
    bool uniform_blocks = true;
    bool all_exact() const;
};

// Runs one sequence of n tokens under the policy and compares block 0 of the
// ledger with the closed forms. Requires d_ff = 2.5 d.
LedgerComparison ledger_vs_formula(const ModelConfig& cfg, PolicyKind policy, std::size_t n);

}  // namespace cola
