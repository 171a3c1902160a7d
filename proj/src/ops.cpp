#include "cola/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cola::ops {

namespace {

std::uint64_t gemm_cost(std::size_t m, std::size_t k, std::size_t n) {
    return 2ull * m * k * n;
}

// B += A^T * C with A: MxK, C: MxN, B: KxN.
void gemm_tn_acc(const double* a, const double* c, double* b, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t p = 0; p < m; ++p) {
        const double* crow = c + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = a[p * k + i];
            double* brow = b + i * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * crow[j];
        }
    }
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_matrix(const char* op, const Var& a) {
    if (a.shape().size() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
    }
}

void accumulate(Tensor* dst, const Tensor& src) {
    if (!dst) return;
    auto d = dst->data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Var emit(Var first, OpDef op, std::initializer_list<Var> inputs) {
    std::vector<Var> in(inputs);
    return first.tape()->record(std::move(op), in);
}

std::uint32_t need_if(bool cond, std::uint32_t bit) { return cond ? bit : 0u; }

}  // namespace

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor gemm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: inner extents disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    Tensor c({a.rows(), b.cols()});
    gemm_acc(a.ptr(), b.ptr(), c.ptr(), a.rows(), a.cols(), b.cols());
    return c;
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
    return t;
}

Var matmul(Var a, Var b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        throw ShapeError("matmul: inner extents disagree: " + shape_str(sa) + " x " +
                         shape_str(sb));
    }
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    const std::uint64_t flops = gemm_cost(m, k, n);
    OpDef op;
    op.kind = "matmul";
    op.gemm_flops = flops;
    op.needs = need_if(b.requires_grad(), input_bit(0)) | need_if(a.requires_grad(), input_bit(1));
    op.forward = [](std::span<const Tensor* const> in) { return gemm(*in[0], *in[1]); };
    op.backward = [m, k, n, flops](BackwardArgs& g) {
        if (Tensor* da = g.grad_inputs[0]) {
            const Tensor bt = transpose(*g.inputs[1]);
            gemm_acc(g.grad_output.ptr(), bt.ptr(), da->ptr(), m, n, k);
            g.flops += flops;
        }
        if (Tensor* db = g.grad_inputs[1]) {
            gemm_tn_acc(g.inputs[0]->ptr(), g.grad_output.ptr(), db->ptr(), m, k, n);
            g.flops += flops;
        }
    };
    return emit(a, std::move(op), {a, b});
}

Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    OpDef op;
    op.kind = "add";
    op.forward = [](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        accumulate(&out, *in[1]);
        return out;
    };
    op.backward = [](BackwardArgs& g) {
        accumulate(g.grad_inputs[0], g.grad_output);
        accumulate(g.grad_inputs[1], g.grad_output);
    };
    return emit(a, std::move(op), {a, b});
}

Var residual_add(Var x, Var branch) {
    require_same_shape("residual_add", x, branch);
    OpDef op;
    op.kind = "residual";
    op.retains = input_bit(0) | input_bit(1);
    op.forward = [](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        accumulate(&out, *in[1]);
        return out;
    };
    op.backward = [](BackwardArgs& g) {
        accumulate(g.grad_inputs[0], g.grad_output);
        accumulate(g.grad_inputs[1], g.grad_output);
    };
    return emit(x, std::move(op), {x, branch});
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    OpDef op;
    op.kind = "sub";
    op.forward = [](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        auto o = out.data();
        auto r = in[1]->data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] -= r[i];
        return out;
    };
    op.backward = [](BackwardArgs& g) {
        accumulate(g.grad_inputs[0], g.grad_output);
        if (Tensor* db = g.grad_inputs[1]) {
            auto d = db->data();
            auto s = g.grad_output.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
        }
    };
    return emit(a, std::move(op), {a, b});
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    OpDef op;
    op.kind = "mul";
    op.needs = need_if(b.requires_grad(), input_bit(0)) | need_if(a.requires_grad(), input_bit(1));
    op.forward = [](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        auto o = out.data();
        auto r = in[1]->data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] *= r[i];
        return out;
    };
    op.backward = [](BackwardArgs& g) {
        auto go = g.grad_output.data();
        if (Tensor* da = g.grad_inputs[0]) {
            auto d = da->data();
            auto other = g.inputs[1]->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i] * other[i];
        }
        if (Tensor* db = g.grad_inputs[1]) {
            auto d = db->data();
            auto other = g.inputs[0]->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i] * other[i];
        }
    };
    return emit(a, std::move(op), {a, b});
}

Var scale(Var a, double s) {
    OpDef op;
    op.kind = "scale";
    op.forward = [s](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        for (double& v : out.data()) v *= s;
        return out;
    };
    op.backward = [s](BackwardArgs& g) {
        auto d = g.grad_inputs[0]->data();
        auto go = g.grad_output.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * go[i];
    };
    return emit(a, std::move(op), {a});
}

Var activation(Var x, ActivationKind kind) {
    OpDef op;
    op.kind = std::string(activation_name(kind));
    op.needs = kind == ActivationKind::Identity ? 0u : input_bit(0);
    op.forward = [kind](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        for (double& v : out.data()) v = activate(kind, v);
        return out;
    };
    op.backward = [kind](BackwardArgs& g) {
        auto d = g.grad_inputs[0]->data();
        auto go = g.grad_output.data();
        if (kind == ActivationKind::Identity) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
            return;
        }
        auto x = g.inputs[0]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i] * activate_grad(kind, x[i]);
    };
    return emit(x, std::move(op), {x});
}

Var rmsnorm(Var x, Var gain, double eps) {
    require_matrix("rmsnorm", x);
    const std::size_t d = x.shape()[0], n = x.shape()[1];
    if (gain.shape() != Shape{d, 1}) {
        throw ShapeError("rmsnorm: gain " + shape_str(gain.shape()) + " does not match input " +
                         shape_str(x.shape()));
    }
    OpDef op;
    op.kind = "rmsnorm";
    op.needs = input_bit(0) | need_if(x.requires_grad(), input_bit(1));
    auto inv_rms = [d, n, eps](const Tensor& in) {
        std::vector<double> s(n, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) s[j] += in(i, j) * in(i, j);
        for (double& v : s) v = 1.0 / std::sqrt(v / static_cast<double>(d) + eps);
        return s;
    };
    op.forward = [d, n, inv_rms](std::span<const Tensor* const> in) {
        const Tensor& xv = *in[0];
        const Tensor& gv = *in[1];
        const auto s = inv_rms(xv);
        Tensor out({d, n});
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) = gv[i] * xv(i, j) * s[j];
        return out;
    };
    op.backward = [d, n, inv_rms](BackwardArgs& g) {
        const Tensor& xv = *g.inputs[0];
        const Tensor& go = g.grad_output;
        const auto s = inv_rms(xv);
        if (Tensor* dg = g.grad_inputs[1]) {
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += go(i, j) * xv(i, j) * s[j];
                (*dg)[i] += acc;
            }
        }
        if (Tensor* dx = g.grad_inputs[0]) {
            const Tensor& gv = *g.inputs[1];
            std::vector<double> dot(n, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < n; ++j) dot[j] += gv[i] * go(i, j) * xv(i, j);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double s3 = s[j] * s[j] * s[j];
                    (*dx)(i, j) += s[j] * gv[i] * go(i, j) -
                                   s3 * xv(i, j) * dot[j] / static_cast<double>(d);
                }
            }
        }
    };
    return emit(x, std::move(op), {x, gain});
}

Var softmax_rows(Var x) {
    if (x.shape().empty()) throw ShapeError("softmax_rows: scalar input");
    const std::size_t width = x.shape().back();
    const std::size_t rows = shape_numel(x.shape()) / width;
    OpDef op;
    op.kind = "softmax";
    op.needs = kOutputBit;
    op.retains = input_bit(0);
    op.forward = [width, rows](std::span<const Tensor* const> in) {
        Tensor out = *in[0];
        double* p = out.ptr();
        for (std::size_t r = 0; r < rows; ++r, p += width) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, p[j]);
            double z = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                p[j] = std::exp(p[j] - mx);
                z += p[j];
            }
            for (std::size_t j = 0; j < width; ++j) p[j] /= z;
        }
        return out;
    };
    op.backward = [width, rows](BackwardArgs& g) {
        const double* p = g.output->ptr();
        const double* go = g.grad_output.ptr();
        double* dx = g.grad_inputs[0]->ptr();
        for (std::size_t r = 0; r < rows; ++r, p += width, go += width, dx += width) {
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j) dot += p[j] * go[j];
            for (std::size_t j = 0; j < width; ++j) dx[j] += p[j] * (go[j] - dot);
        }
    };
    return emit(x, std::move(op), {x});
}

Var attention_scores(Var q, Var k, std::size_t heads, std::size_t seq_len) {
    require_matrix("attention_scores", q);
    require_same_shape("attention_scores", q, k);
    const std::size_t d = q.shape()[0], cols = q.shape()[1];
    if (heads == 0 || d % heads != 0) {
        throw ShapeError("attention_scores: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
    }
    if (seq_len == 0 || cols % seq_len != 0) {
        throw ShapeError("attention_scores: " + std::to_string(cols) +
                         " tokens do not split into sequences of " + std::to_string(seq_len));
    }
    const std::size_t nb = cols / seq_len, dh = d / heads, T = seq_len;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::uint64_t flops = 2ull * nb * T * T * d;
    OpDef op;
    op.kind = "scores";
    op.gemm_flops = flops;
    op.needs = need_if(k.requires_grad(), input_bit(0)) | need_if(q.requires_grad(), input_bit(1));
    op.forward = [=](std::span<const Tensor* const> in) {
        const Tensor& qv = *in[0];
        const Tensor& kv = *in[1];
        Tensor s({nb, heads, T, T});
        double* sp = s.ptr();
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                double* blk = sp + (b * heads + h) * T * T;
                for (std::size_t c = 0; c < dh; ++c) {
                    const double* qr = qv.ptr() + (h * dh + c) * cols + b * T;
                    const double* kr = kv.ptr() + (h * dh + c) * cols + b * T;
                    for (std::size_t i = 0; i < T; ++i) {
                        const double qi = qr[i];
                        double* row = blk + i * T;
                        for (std::size_t j = 0; j <= i; ++j) row[j] += qi * kr[j];
                    }
                }
                for (std::size_t i = 0; i < T; ++i) {
                    double* row = blk + i * T;
                    for (std::size_t j = 0; j <= i; ++j) row[j] *= sc;
                    for (std::size_t j = i + 1; j < T; ++j)
                        row[j] = -std::numeric_limits<double>::infinity();
                }
            }
        }
        return s;
    };
    op.backward = [=](BackwardArgs& g) {
        const double* gs = g.grad_output.ptr();
        Tensor* dq = g.grad_inputs[0];
        Tensor* dk = g.grad_inputs[1];
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const double* blk = gs + (b * heads + h) * T * T;
                for (std::size_t c = 0; c < dh; ++c) {
                    const std::size_t off = (h * dh + c) * cols + b * T;
                    if (dq) {
                        const double* kr = g.inputs[1]->ptr() + off;
                        double* out = dq->ptr() + off;
                        for (std::size_t i = 0; i < T; ++i) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j <= i; ++j) acc += blk[i * T + j] * kr[j];
                            out[i] += sc * acc;
                        }
                    }
                    if (dk) {
                        const double* qr = g.inputs[0]->ptr() + off;
                        double* out = dk->ptr() + off;
                        for (std::size_t i = 0; i < T; ++i) {
                            const double qi = sc * qr[i];
                            for (std::size_t j = 0; j <= i; ++j) out[j] += blk[i * T + j] * qi;
                        }
                    }
                }
            }
        }
        if (dq) g.flops += flops;
        if (dk) g.flops += flops;
    };
    return emit(q, std::move(op), {q, k});
}

Var attention_mix(Var p, Var v, std::size_t heads) {
    require_matrix("attention_mix", v);
    const Shape& sp = p.shape();
    const std::size_t d = v.shape()[0], cols = v.shape()[1];
    if (sp.size() != 4 || sp[1] != heads || sp[2] != sp[3] || sp[0] * sp[2] != cols ||
        heads == 0 || d % heads != 0) {
        throw ShapeError("attention_mix: probabilities " + shape_str(sp) +
                         " do not match values " + shape_str(v.shape()));
    }
    const std::size_t nb = sp[0], T = sp[2], dh = d / heads;
    const std::uint64_t flops = 2ull * nb * T * T * d;
    OpDef op;
    op.kind = "mix";
    op.gemm_flops = flops;
    op.needs = need_if(v.requires_grad(), input_bit(0)) | need_if(p.requires_grad(), input_bit(1));
    op.forward = [=](std::span<const Tensor* const> in) {
        const double* pp = in[0]->ptr();
        const Tensor& vv = *in[1];
        Tensor out({d, cols});
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const double* blk = pp + (b * heads + h) * T * T;
                for (std::size_t c = 0; c < dh; ++c) {
                    const std::size_t off = (h * dh + c) * cols + b * T;
                    const double* vr = vv.ptr() + off;
                    double* o = out.ptr() + off;
                    for (std::size_t i = 0; i < T; ++i) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < T; ++j) acc += blk[i * T + j] * vr[j];
                        o[i] = acc;
                    }
                }
            }
        }
        return out;
    };
    op.backward = [=](BackwardArgs& g) {
        const Tensor& go = g.grad_output;
        Tensor* dp = g.grad_inputs[0];
        Tensor* dv = g.grad_inputs[1];
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t blk_off = (b * heads + h) * T * T;
                for (std::size_t c = 0; c < dh; ++c) {
                    const std::size_t off = (h * dh + c) * cols + b * T;
                    const double* gr = go.ptr() + off;
                    if (dp) {
                        const double* vr = g.inputs[1]->ptr() + off;
                        double* blk = dp->ptr() + blk_off;
                        for (std::size_t i = 0; i < T; ++i) {
                            const double gi = gr[i];
                            for (std::size_t j = 0; j < T; ++j) blk[i * T + j] += gi * vr[j];
                        }
                    }
                    if (dv) {
                        const double* blk = g.inputs[0]->ptr() + blk_off;
                        double* out = dv->ptr() + off;
                        for (std::size_t i = 0; i < T; ++i) {
                            const double gi = gr[i];
                            for (std::size_t j = 0; j < T; ++j) out[j] += blk[i * T + j] * gi;
                        }
                    }
                }
            }
        }
        if (dp) g.flops += flops;
        if (dv) g.flops += flops;
    };
    return emit(p, std::move(op), {p, v});
}

Var embedding(Var table, std::vector<std::int64_t> ids) {
    require_matrix("embedding", table);
    const std::size_t vocab = table.shape()[0], d = table.shape()[1];
    for (std::int64_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw std::out_of_range("embedding: token id " + std::to_string(id) +
                                    " outside vocabulary of " + std::to_string(vocab));
        }
    }
    const std::size_t n = ids.size();
    OpDef op;
    op.kind = "embedding";
    op.forward = [ids, d, n](std::span<const Tensor* const> in) {
        const Tensor& t = *in[0];
        Tensor out({d, n});
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t j = 0; j < n; ++j) out(c, j) = t(static_cast<std::size_t>(ids[j]), c);
        return out;
    };
    op.backward = [ids, d, n](BackwardArgs& g) {
        Tensor& dt = *g.grad_inputs[0];
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < d; ++c)
                dt(static_cast<std::size_t>(ids[j]), c) += g.grad_output(c, j);
    };
    return emit(table, std::move(op), {table});
}

Var cross_entropy(Var logits, std::vector<std::int64_t> targets) {
    require_matrix("cross_entropy", logits);
    const std::size_t vocab = logits.shape()[0], n = logits.shape()[1];
    if (targets.size() != n) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " columns");
    }
    std::size_t count = 0;
    for (std::int64_t t : targets) {
        if (t == -1) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                                    " outside vocabulary of " + std::to_string(vocab));
        }
        ++count;
    }
    if (count == 0) throw std::invalid_argument("cross_entropy: every target is ignored");
    OpDef op;
    op.kind = "cross_entropy";
    op.needs = input_bit(0);
    auto column_lse = [vocab](const Tensor& x, std::size_t j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < vocab; ++i) mx = std::max(mx, x(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < vocab; ++i) z += std::exp(x(i, j) - mx);
        return mx + std::log(z);
    };
    op.forward = [targets, n, count, column_lse](std::span<const Tensor* const> in) {
        const Tensor& x = *in[0];
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (targets[j] < 0) continue;
            total += column_lse(x, j) - x(static_cast<std::size_t>(targets[j]), j);
        }
        return Tensor::scalar(total / static_cast<double>(count));
    };
    op.backward = [targets, vocab, n, count, column_lse](BackwardArgs& g) {
        const Tensor& x = *g.inputs[0];
        Tensor& dx = *g.grad_inputs[0];
        const double w = g.grad_output.item() / static_cast<double>(count);
        for (std::size_t j = 0; j < n; ++j) {
            if (targets[j] < 0) continue;
            const double lse = column_lse(x, j);
            for (std::size_t i = 0; i < vocab; ++i) dx(i, j) += w * std::exp(x(i, j) - lse);
            dx(static_cast<std::size_t>(targets[j]), j) -= w;
        }
    };
    return emit(logits, std::move(op), {logits});
}

Var transpose(Var a) {
    require_matrix("transpose", a);
    OpDef op;
    op.kind = "transpose";
    op.forward = [](std::span<const Tensor* const> in) { return transpose(*in[0]); };
    op.backward = [](BackwardArgs& g) { accumulate(g.grad_inputs[0], transpose(g.grad_output)); };
    return emit(a, std::move(op), {a});
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
    require_matrix("slice", a);
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    const std::size_t extent = axis == 0 ? rows : cols;
    if (axis > 1 || begin >= end || end > extent) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    }
    const std::size_t r0 = axis == 0 ? begin : 0, r1 = axis == 0 ? end : rows;
    const std::size_t c0 = axis == 1 ? begin : 0, c1 = axis == 1 ? end : cols;
    OpDef op;
    op.kind = "slice";
    op.forward = [=](std::span<const Tensor* const> in) {
        Tensor out({r1 - r0, c1 - c0});
        for (std::size_t i = r0; i < r1; ++i)
            for (std::size_t j = c0; j < c1; ++j) out(i - r0, j - c0) = (*in[0])(i, j);
        return out;
    };
    op.backward = [=](BackwardArgs& g) {
        Tensor& da = *g.grad_inputs[0];
        for (std::size_t i = r0; i < r1; ++i)
            for (std::size_t j = c0; j < c1; ++j) da(i, j) += g.grad_output(i - r0, j - c0);
    };
    return emit(a, std::move(op), {a});
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
    std::vector<std::size_t> extents;
    const std::size_t other = parts[0].shape().size() == 2 ? parts[0].shape()[1 - axis] : 0;
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_matrix("concat", p);
        if (p.shape()[1 - axis] != other) {
            throw ShapeError("concat: " + shape_str(p.shape()) + " does not align with " +
                             shape_str(parts[0].shape()));
        }
        extents.push_back(p.shape()[axis]);
        total += p.shape()[axis];
    }
    OpDef op;
    op.kind = "concat";
    op.forward = [=](std::span<const Tensor* const> in) {
        Tensor out(axis == 0 ? Shape{total, other} : Shape{other, total});
        std::size_t off = 0;
        for (std::size_t p = 0; p < in.size(); ++p) {
            const Tensor& t = *in[p];
            for (std::size_t i = 0; i < t.rows(); ++i)
                for (std::size_t j = 0; j < t.cols(); ++j)
                    (axis == 0 ? out(off + i, j) : out(i, off + j)) = t(i, j);
            off += extents[p];
        }
        return out;
    };
    op.backward = [=](BackwardArgs& g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < g.grad_inputs.size(); ++p) {
            if (Tensor* dt = g.grad_inputs[p]) {
                for (std::size_t i = 0; i < dt->rows(); ++i)
                    for (std::size_t j = 0; j < dt->cols(); ++j)
                        (*dt)(i, j) += axis == 0 ? g.grad_output(off + i, j)
                                                 : g.grad_output(i, off + j);
            }
            off += extents[p];
        }
    };
    return parts[0].tape()->record(std::move(op), parts);
}

Var sum(Var a) {
    OpDef op;
    op.kind = "sum";
    op.forward = [](std::span<const Tensor* const> in) {
        double acc = 0.0;
        for (double v : in[0]->data()) acc += v;
        return Tensor::scalar(acc);
    };
    op.backward = [](BackwardArgs& g) {
        const double go = g.grad_output.item();
        for (double& v : g.grad_inputs[0]->data()) v += go;
    };
    return emit(a, std::move(op), {a});
}

}  // namespace cola::ops
