#include "cola/checkpoint.hpp"

#include <cstdio>
#include <sstream>

#include "cola/costmodel.hpp"

namespace cola {

std::string policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::None: return "none";
        case PolicyKind::VanillaGCP: return "vanilla";
        case PolicyKind::ColaM: return "cola-m";
    }
    return "none";
}

PolicyKind policy_from_name(const std::string& s) {
    for (auto k : {PolicyKind::None, PolicyKind::VanillaGCP, PolicyKind::ColaM})
        if (policy_name(k) == s) return k;
    throw ConfigError("unknown checkpoint policy '" + s + "' (none, vanilla, cola-m)");
}

RetentionPolicy CheckpointPolicy::retention() const {
    switch (kind) {
        case PolicyKind::None: return {RecomputeMode::None, false, false};
        case PolicyKind::VanillaGCP: return {RecomputeMode::ReplayScope, false, false};
        case PolicyKind::ColaM: return {RecomputeMode::OnDemand, true, true};
    }
    return {};
}

void CheckpointPolicy::check_compatible(const ModelConfig& cfg) const {
    if (kind == PolicyKind::ColaM && cfg.variant != Variant::CoLA) {
        throw ConfigError("cola-m checkpointing needs a cola model; this model is full-rank");
    }
}

std::uint64_t MemoryLedger::block_saved(int b) const {
    auto it = saved_by_block.find(b);
    return it == saved_by_block.end() ? 0 : it->second;
}

std::uint64_t MemoryLedger::block_recompute(int b) const {
    auto it = recompute_by_block.find(b);
    return it == recompute_by_block.end() ? 0 : it->second;
}

std::string MemoryLedger::to_csv() const {
    std::ostringstream os;
    os << "block,site,saved_scalars,recompute_flops\n";
    for (const auto& r : rows) {
        os << r.block << ',' << r.site << ',' << r.saved_scalars << ',' << r.recompute_flops << '\n';
    }
    return os.str();
}

MemoryLedger ledger_from_tape(const Tape& tape) {
    MemoryLedger led;
    std::map<std::pair<int, std::string>, std::size_t> where;
    auto row = [&](int block, const std::string& site) -> LedgerRow& {
        auto key = std::make_pair(block, site);
        auto it = where.find(key);
        if (it != where.end()) return led.rows[it->second];
        where[key] = led.rows.size();
        led.rows.push_back({block, site, 0, 0});
        return led.rows.back();
    };
    for (const auto& b : tape.retained_buffers()) row(b.scope, b.site).saved_scalars += b.scalars;
    for (const auto& r : tape.recompute_log()) row(r.scope, r.site).recompute_flops += r.flops;
    for (const auto& r : led.rows) {
        if (r.block == kNoScope) {
            led.outside_saved += r.saved_scalars;
            continue;
        }
        led.saved_by_block[r.block] += r.saved_scalars;
        led.recompute_by_block[r.block] += r.recompute_flops;
        led.total_saved += r.saved_scalars;
        led.total_recompute += r.recompute_flops;
    }
    return led;
}

PolicyRun run_with_policy(LanguageModel& model, const Batch& batch, const CheckpointPolicy& policy) {
    policy.check_compatible(model.config());
    Tape tape;
    tape.set_policy(policy.retention());
    model.zero_grad();
    Var loss = model.loss(tape, batch);
    PolicyRun run;
    run.loss = loss.value().item();
    tape.backward(loss);
    for (const auto& p : model.parameters()) run.grads.push_back(p.grad);
    run.ledger = ledger_from_tape(tape);
    run.flops = tape.flops();
    return run;
}

namespace {

Batch probe_batch(const ModelConfig& cfg, std::size_t n) {
    Batch b;
    b.seq_len = n;
    for (std::size_t t = 0; t < n; ++t) {
        b.tokens.push_back(static_cast<std::int64_t>((5 * t + 1) % cfg.vocab));
    }
    b.targets.assign(n, -1);
    for (std::size_t t = 0; t + 1 < n; ++t) b.targets[t] = b.tokens[t + 1];
    if (n == 1) b.targets[0] = b.tokens[0];
    return b;
}

}  // namespace

std::vector<SiteDecision> CheckpointPolicy::decision_table(LanguageModel& model, std::size_t n) const {
    const PolicyRun run = run_with_policy(model, probe_batch(model.config(), n), *this);
    std::vector<SiteDecision> out;
    for (const auto& r : run.ledger.rows) {
        if (r.block != 0) continue;
        out.push_back({r.site, r.saved_scalars > 0, r.recompute_flops > 0});
    }
    return out;
}

bool LedgerComparison::all_exact() const {
    if (!uniform_blocks) return false;
    for (const auto& c : checks)
        if (!c.exact()) return false;
    return true;
}

LedgerComparison ledger_vs_formula(const ModelConfig& cfg, PolicyKind policy, std::size_t n) {
    ModelConfig c = cfg;
    if (c.max_seq_len < n) c.max_seq_len = n;
    c = c.resolved();
    if (2 * c.d_ff != 5 * c.d) {
        throw ConfigError("memory closed forms assume d_ff = 2.5 d; got d = " + std::to_string(c.d) +
                          ", d_ff = " + std::to_string(c.d_ff));
    }
    LanguageModel model(c);
    CheckpointPolicy pol{policy};
    const PolicyRun run = run_with_policy(model, probe_batch(c, n), pol);

    LedgerComparison cmp;
    cmp.policy = policy;
    cmp.n = n;
    cmp.config = c;
    cmp.ledger = run.ledger;
    for (std::size_t b = 1; b < c.n_layer; ++b) {
        const int bi = static_cast<int>(b);
        if (run.ledger.block_saved(bi) != run.ledger.block_saved(0) ||
            run.ledger.block_recompute(bi) != run.ledger.block_recompute(0)) {
            cmp.uniform_blocks = false;
        }
    }

    const double N = static_cast<double>(n), d = static_cast<double>(c.d), h = static_cast<double>(c.heads),
                 r = static_cast<double>(c.r), f = static_cast<double>(c.d_ff);
    const double m = static_cast<double>(run.ledger.block_saved(0));
    const double rc = static_cast<double>(run.ledger.block_recompute(0));
    const bool cola = c.variant == Variant::CoLA;
    switch (policy) {
        case PolicyKind::None:
            if (cola) cmp.checks.push_back({"M_CoLA", m, cost::act::m_cola(N, d, h, r, c.sigma_placement)});
            else cmp.checks.push_back({"M_full", m, cost::act::m_full(N, d, h)});
            cmp.checks.push_back({"R_none", rc, 0.0});
            break;
        case PolicyKind::VanillaGCP:
            cmp.checks.push_back({"M_vanilla", m, cost::act::m_vanilla(N, d)});
            if (cola) cmp.checks.push_back({"R_vanilla_cola", rc, cost::act::r_vanilla_cola(N, d, f, r)});
            else cmp.checks.push_back({"R_vanilla", rc, cost::act::r_vanilla(N, d)});
            break;
        case PolicyKind::ColaM:
            cmp.checks.push_back({"M_ColaM", m, cost::act::m_colam(N, d, r)});
            cmp.checks.push_back({"R_ColaM", rc, cost::act::r_colam(N, d, r)});
            break;
    }
    for (const auto& row : run.ledger.rows)
        if (row.block == 0 && row.recompute_flops > 0) cmp.recompute_items.push_back(row);
    return cmp;
}

}  // namespace cola
