#include "cola/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace cola {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != value.size() || value[0] == '-') {
        throw ConfigError("model." + key + ": expected a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

const char* kGate = "mlp.gate";

}  // namespace

std::string variant_name(Variant v) { return v == Variant::CoLA ? "cola" : "full"; }

Variant variant_from_name(const std::string& s) {
    if (s == "full" || s == "fullrank") return Variant::FullRank;
    if (s == "cola") return Variant::CoLA;
    throw ConfigError("unknown variant '" + s + "' (expected full or cola)");
}

std::string placement_name(SigmaPlacement p) {
    switch (p) {
        case SigmaPlacement::LowRankOnly: return "lowrank";
        case SigmaPlacement::Both: return "both";
        case SigmaPlacement::FullRankOnly: return "fullrank";
        case SigmaPlacement::LowRankReduced: return "lowrank-reduced";
    }
    return "lowrank";
}

SigmaPlacement placement_from_name(const std::string& s) {
    for (auto p : {SigmaPlacement::LowRankOnly, SigmaPlacement::Both, SigmaPlacement::FullRankOnly,
                   SigmaPlacement::LowRankReduced}) {
        if (placement_name(p) == s) return p;
    }
    throw ConfigError("unknown sigma placement '" + s +
                      "' (expected lowrank, both, fullrank or lowrank-reduced)");
}

ModelConfig ModelConfig::resolved() const {
    ModelConfig c = *this;
    if (c.d_ff == 0) c.d_ff = c.d * 5 / 2;
    if (c.r == 0) c.r = std::max<std::size_t>(1, c.d / 4);
    c.validate();
    return c;
}

void ModelConfig::validate() const {
    if (d == 0) throw ConfigError("model.d must be positive");
    if (d_ff == 0) throw ConfigError("model.d_ff must be positive");
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("model.d = " + std::to_string(d) + " is not divisible by model.heads = " +
                          std::to_string(heads));
    }
    if (n_layer == 0) throw ConfigError("model.n_layer must be at least 1");
    if (vocab < 2) throw ConfigError("model.vocab must be at least 2");
    if (max_seq_len == 0) throw ConfigError("model.max_seq_len must be positive");
    if (variant == Variant::CoLA && (r < 1 || r >= std::min(d, d_ff))) {
        throw ConfigError("model.r = " + std::to_string(r) + " must satisfy 1 <= r < min(d, d_ff) = " +
                          std::to_string(std::min(d, d_ff)));
    }
}

std::string ModelConfig::to_kv() const {
    std::ostringstream os;
    os << "activation=" << activation_name(activation) << '\n'
       << "d=" << d << '\n'
       << "d_ff=" << d_ff << '\n'
       << "heads=" << heads << '\n'
       << "max_seq_len=" << max_seq_len << '\n'
       << "n_layer=" << n_layer << '\n'
       << "r=" << r << '\n'
       << "seed=" << seed << '\n'
       << "sigma_placement=" << placement_name(sigma_placement) << '\n'
       << "variant=" << variant_name(variant) << '\n'
       << "vocab=" << vocab << '\n';
    return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "d") d = parse_size(key, value);
    else if (key == "d_ff") d_ff = parse_size(key, value);
    else if (key == "heads") heads = parse_size(key, value);
    else if (key == "n_layer") n_layer = parse_size(key, value);
    else if (key == "r") r = parse_size(key, value);
    else if (key == "vocab") vocab = parse_size(key, value);
    else if (key == "max_seq_len") max_seq_len = parse_size(key, value);
    else if (key == "seed") seed = parse_size(key, value);
    else if (key == "variant") variant = variant_from_name(value);
    else if (key == "sigma_placement") sigma_placement = placement_from_name(value);
    else if (key == "activation") {
        try {
            activation = activation_from_name(value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("model.activation: ") + e.what());
        }
    } else {
        return false;
    }
    return true;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    for (const auto& [k, v] : kv) {
        if (!c.set(k, v)) throw ConfigError("unknown model key '" + k + "'");
    }
    return c;
}

std::uint64_t block_linear_params(const ModelConfig& cfg) {
    const std::uint64_t d = cfg.d, f = cfg.d_ff, r = cfg.r;
    if (cfg.variant == Variant::CoLA) return r * (2 * d) * 4 + r * (d + f) * 3;
    return 4 * d * d + 3 * d * f;
}

ParamBreakdown parameter_breakdown(const ModelConfig& cfg) {
    ParamBreakdown p;
    p.token_embedding = static_cast<std::uint64_t>(cfg.vocab) * cfg.d;
    p.positional = static_cast<std::uint64_t>(cfg.max_seq_len) * cfg.d;
    p.block_linear = block_linear_params(cfg) * cfg.n_layer;
    p.norms = static_cast<std::uint64_t>(cfg.d) * (2 * cfg.n_layer + 1);
    p.head = static_cast<std::uint64_t>(cfg.vocab) * cfg.d;
    return p;
}

Var cola_forward(Tape& tape, Parameter& a, Parameter& b, std::optional<ActivationKind> sigma, Var x,
                 Var* bottleneck_out) {
    Var ax = ops::matmul(tape.parameter(a), x);
    tape.tag(ax, NodeRole::Bottleneck);
    tape.label(ax, a.name);
    Var mid = sigma ? ops::activation(ax, *sigma) : ax;
    if (bottleneck_out) *bottleneck_out = mid;
    return ops::matmul(tape.parameter(b), mid);
}

Batch make_lm_batch(const std::vector<std::vector<std::int64_t>>& sequences) {
    Batch b;
    if (sequences.empty()) throw std::invalid_argument("make_lm_batch: no sequences");
    b.seq_len = sequences[0].size();
    if (b.seq_len < 2) throw std::invalid_argument("make_lm_batch: sequences need at least 2 tokens");
    for (const auto& s : sequences) {
        if (s.size() != b.seq_len) throw std::invalid_argument("make_lm_batch: ragged sequences");
        for (std::size_t t = 0; t < s.size(); ++t) {
            b.tokens.push_back(s[t]);
            b.targets.push_back(t + 1 < s.size() ? s[t + 1] : -1);
        }
    }
    return b;
}

LanguageModel::LanguageModel(const ModelConfig& cfg) : cfg_(cfg.resolved()) {
    const std::size_t d = cfg_.d, f = cfg_.d_ff, r = cfg_.r;
    std::mt19937_64 rng(cfg_.seed);
    params_.reserve(4 + cfg_.n_layer * 16);

    add_param("tok_emb", Tensor::randn({cfg_.vocab, d}, rng, 0.02), true);
    add_param("pos_emb", Tensor::randn({cfg_.max_seq_len, d}, rng, 0.02), true);
    for (std::size_t i = 0; i < cfg_.n_layer; ++i) {
        const std::string blk = "block" + std::to_string(i);
        add_param(blk + ".attn_norm", Tensor({d, 1}, 1.0), false);
        for (const auto& layer : layer_names(i)) {
            const bool is_mlp = layer.find(".mlp.") != std::string::npos;
            const bool is_down = layer == blk + ".mlp.down";
            if (layer == blk + ".mlp.gate") add_param(blk + ".mlp_norm", Tensor({d, 1}, 1.0), false);
            const std::size_t d_in = is_down ? f : d;
            const std::size_t d_out = is_mlp && !is_down ? f : d;
            if (low_rank()) {
                add_param(layer + ".A", Tensor::randn({r, d_in}, rng, 1.0 / std::sqrt(double(d_in))), true);
                add_param(layer + ".B", Tensor::randn({d_out, r}, rng, 1.0 / std::sqrt(double(r))), true);
            } else {
                add_param(layer + ".W", Tensor::randn({d_out, d_in}, rng, 1.0 / std::sqrt(double(d_in))),
                          true);
            }
        }
    }
    add_param("final_norm", Tensor({d, 1}, 1.0), false);
    add_param("lm_head", Tensor::randn({cfg_.vocab, d}, rng, 0.02), true);
}

std::size_t LanguageModel::add_param(std::string name, Tensor value, bool decay) {
    index_[name] = params_.size();
    params_.emplace_back(std::move(name), std::move(value), decay);
    return params_.size() - 1;
}

Parameter& LanguageModel::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return params_[it->second];
}

const Parameter& LanguageModel::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return params_[it->second];
}

std::uint64_t LanguageModel::parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void LanguageModel::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<std::string> LanguageModel::layer_names(std::size_t block) {
    const std::string b = "block" + std::to_string(block) + ".";
    return {b + "attn.q",   b + "attn.k",  b + "attn.v",   b + "attn.o",
            b + "mlp.gate", b + "mlp.up", b + "mlp.down"};
}

bool LanguageModel::layer_has_mid_sigma(const std::string& layer) const {
    if (!low_rank()) return false;
    switch (cfg_.sigma_placement) {
        case SigmaPlacement::LowRankOnly:
        case SigmaPlacement::Both:
            return true;
        case SigmaPlacement::FullRankOnly:
            return false;
        case SigmaPlacement::LowRankReduced:
            return layer.size() >= 8 && layer.compare(layer.size() - 8, 8, kGate) == 0;
    }
    return true;
}

bool LanguageModel::gate_has_sigma() const {
    if (!low_rank()) return true;
    return cfg_.sigma_placement == SigmaPlacement::Both ||
           cfg_.sigma_placement == SigmaPlacement::FullRankOnly;
}

Var LanguageModel::linear(Tape& tape, const std::string& layer, Var x, Capture* capture) {
    Var out;
    if (low_rank()) {
        Var mid;
        std::optional<ActivationKind> sigma;
        if (layer_has_mid_sigma(layer)) sigma = cfg_.activation;
        out = cola_forward(tape, param(layer + ".A"), param(layer + ".B"), sigma, x, &mid);
        if (sigma) tape.label(mid, layer + ".sigma");
        if (capture) (*capture)[layer + ".bottleneck"] = mid.value();
    } else {
        out = ops::matmul(tape.parameter(param(layer + ".W")), x);
    }
    tape.label(out, layer);
    if (capture) (*capture)[layer] = out.value();
    return out;
}

Var LanguageModel::block_forward(Tape& tape, std::size_t i, Var x, std::size_t seq_len,
                                 Capture* capture) {
    if (i >= cfg_.n_layer) throw std::out_of_range("block index out of range");
    if (x.shape().size() != 2 || x.shape()[0] != cfg_.d) {
        throw ShapeError("block input " + shape_str(x.shape()) + " does not have width " +
                         std::to_string(cfg_.d));
    }
    const std::string b = "block" + std::to_string(i);
    tape.push_scope(static_cast<int>(i));
    tape.set_site(b);

    Var xn = ops::rmsnorm(x, tape.parameter(param(b + ".attn_norm")));
    tape.label(xn, b + ".attn_norm");
    Var q = linear(tape, b + ".attn.q", xn, capture);
    Var k = linear(tape, b + ".attn.k", xn, capture);
    Var v = linear(tape, b + ".attn.v", xn, capture);
    Var s = ops::attention_scores(q, k, cfg_.heads, seq_len);
    tape.label(s, b + ".attn.scores");
    Var p = ops::softmax_rows(s);
    tape.label(p, b + ".attn.probs");
    Var att = ops::attention_mix(p, v, cfg_.heads);
    tape.label(att, b + ".attn.mix");
    Var o = linear(tape, b + ".attn.o", att, capture);
    Var x1 = ops::residual_add(x, o);
    tape.label(x1, b + ".attn.residual");
    tape.tag(x1, NodeRole::Boundary);

    Var xn2 = ops::rmsnorm(x1, tape.parameter(param(b + ".mlp_norm")));
    tape.label(xn2, b + ".mlp_norm");
    Var g = linear(tape, b + ".mlp.gate", xn2, capture);
    if (gate_has_sigma()) {
        g = ops::activation(g, cfg_.activation);
        tape.label(g, b + ".mlp.gate_act");
    }
    Var u = linear(tape, b + ".mlp.up", xn2, capture);
    Var hid = ops::mul(g, u);
    tape.label(hid, b + ".mlp.act");
    if (capture) (*capture)[b + ".mlp.act"] = hid.value();
    Var dn = linear(tape, b + ".mlp.down", hid, capture);
    if (capture) (*capture)[b + ".mlp.out"] = dn.value();
    Var out = ops::residual_add(x1, dn);
    tape.label(out, b + ".out");

    std::vector<Var> outs{out};
    tape.set_site("");
    tape.pop_scope(outs);
    return out;
}

Var LanguageModel::logits(Tape& tape, const Batch& batch, Capture* capture) {
    const std::size_t T = batch.seq_len;
    if (T == 0 || batch.tokens.empty() || batch.tokens.size() % T != 0) {
        throw std::invalid_argument("batch tokens do not split into sequences of length " +
                                    std::to_string(T));
    }
    if (T > cfg_.max_seq_len) {
        throw std::invalid_argument("sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                                    std::to_string(cfg_.max_seq_len));
    }
    std::vector<std::int64_t> positions(batch.tokens.size());
    for (std::size_t j = 0; j < positions.size(); ++j) positions[j] = static_cast<std::int64_t>(j % T);

    tape.set_site("embed");
    Var h = ops::add(ops::embedding(tape.parameter(param("tok_emb")), batch.tokens),
                     ops::embedding(tape.parameter(param("pos_emb")), positions));
    tape.label(h, "embed");
    for (std::size_t i = 0; i < cfg_.n_layer; ++i) h = block_forward(tape, i, h, T, capture);
    tape.set_site("head");
    Var hn = ops::rmsnorm(h, tape.parameter(param("final_norm")));
    tape.label(hn, "final_norm");
    Var out = ops::matmul(tape.parameter(param("lm_head")), hn);
    tape.label(out, "logits");
    tape.set_site("");
    return out;
}

Var LanguageModel::loss(Tape& tape, const Batch& batch, Capture* capture) {
    if (batch.targets.size() != batch.tokens.size()) {
        throw std::invalid_argument("batch targets and tokens differ in length");
    }
    Var l = ops::cross_entropy(logits(tape, batch, capture), batch.targets);
    tape.label(l, "loss");
    return l;
}

std::vector<std::string> LanguageModel::capture_sites() const {
    std::vector<std::string> sites;
    for (std::size_t i = 0; i < cfg_.n_layer; ++i) {
        const std::string b = "block" + std::to_string(i);
        for (const char* s : {".attn.q", ".attn.k", ".attn.v", ".mlp.act", ".mlp.out"}) sites.push_back(b + s);
        if (low_rank()) {
            for (const auto& layer : layer_names(i)) sites.push_back(layer + ".bottleneck");
        }
    }
    return sites;
}

Capture capture_activations(LanguageModel& model, const std::vector<Batch>& data,
                            const std::vector<std::string>& sites) {
    std::size_t tokens = 0;
    for (const auto& b : data) tokens += b.tokens.size();
    if (tokens == 0) throw std::invalid_argument("capture_activations: no evaluation tokens");
    const auto known = model.capture_sites();
    for (const auto& s : sites) {
        if (std::find(known.begin(), known.end(), s) == known.end()) {
            throw std::invalid_argument("capture_activations: unknown site '" + s + "'");
        }
    }
    std::map<std::string, std::vector<Tensor>> parts;
    for (const auto& batch : data) {
        Tape tape;
        Capture cap;
        model.logits(tape, batch, &cap);
        for (const auto& s : sites) parts[s].push_back(std::move(cap.at(s)));
    }
    Capture out;
    for (const auto& s : sites) {
        const auto& ps = parts[s];
        const std::size_t rows = ps[0].rows();
        std::size_t cols = 0;
        for (const auto& p : ps) cols += p.cols();
        Tensor m({rows, cols});
        std::size_t off = 0;
        for (const auto& p : ps) {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < p.cols(); ++j) m(i, off + j) = p(i, j);
            off += p.cols();
        }
        out[s] = std::move(m);
    }
    return out;
}

}  // namespace cola
