// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loralab/tensor.hpp"

namespace loralab {

// Handle into a Tape. Cheap to copy, only valid for the tape that issued it.
struct Var {
    int idx = -1;
};

// Reverse-mode tape. Each primitive records its output value plus a closure
// that propagates adjoints to its inputs; backward() replays the closures in
// reverse registration order. Parameter leaves accumulate into the owning
// ParamGroup's grad buffer when (and only when) the group is trainable.
//
// Single-threaded by construction: one tape per training step. Independent
// tapes share no state and may run concurrently.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    // ---- leaves ---------------------------------------------------------

    Var leaf(ParamGroup& pg) {
        Node n;
        n.param = &pg;
        if (grad_enabled_) n.grad = Tensor::zeros(pg.value.shape);
        nodes_.push_back(std::move(n));
        const int idx = static_cast<int>(nodes_.size()) - 1;
        if (grad_enabled_ && pg.trainable) {
            ParamGroup* p = &pg;
            nodes_.back().back = [idx, p](Tape& t) {
                const Tensor& g = t.nodes_[static_cast<size_t>(idx)].grad;
                for (size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
            };
        }
        return Var{idx};
    }

    Var constant(Tensor t) {
        Node n;
        n.owned = std::move(t);
        if (grad_enabled_) n.grad = Tensor::zeros(n.owned.shape);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(Var v) const {
        const Node& n = node(v);
        return n.param ? n.param->value : n.owned;
    }

    const Tensor& grad(Var v) const { return node(v).grad; }

    // ---- primitives ------------------------------------------------------

    // a(m,k) * b(k,n) -> (m,n)
    Var matmul(Var av, Var bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        require(a.shape.size() == 2 && b.shape.size() == 2 && a.shape[1] == b.shape[0],
                "matmul: shape mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape));
        const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
        Tensor out = Tensor::zeros({m, n});
        gemm_nn(a.data.data(), b.data.data(), out.data.data(), m, k, n);
        return emit("matmul", std::move(out), [av, bv, m, k, n](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& a = t.value(av);
            const Tensor& b = t.value(bv);
            // dA += gY * B^T ; dB += A^T * gY
            gemm_nt(gy.data.data(), b.data.data(), t.grad_mut(av).data.data(), m, n, k);
            gemm_tn(a.data.data(), gy.data.data(), t.grad_mut(bv).data.data(), k, m, n);
        });
    }

    // a(m,k) * b(n,k)^T -> (m,n). Weights are stored (out, in), so this is
    // the projection workhorse.
    Var matmul_nt(Var av, Var bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        require(a.shape.size() == 2 && b.shape.size() == 2 && a.shape[1] == b.shape[1],
                "matmul_nt: shape mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape) + "^T");
        const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
        Tensor out = Tensor::zeros({m, n});
        gemm_nt(a.data.data(), b.data.data(), out.data.data(), m, k, n);
        return emit("matmul_nt", std::move(out), [av, bv, m, k, n](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& a = t.value(av);
            const Tensor& b = t.value(bv);
            // dA += gY * B ; dB += gY^T * A
            gemm_nn(gy.data.data(), b.data.data(), t.grad_mut(av).data.data(), m, n, k);
            gemm_tn(gy.data.data(), a.data.data(), t.grad_mut(bv).data.data(), n, m, k);
        });
    }

    Var add(Var av, Var bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        require(a.same_shape(b), "add: shape mismatch");
        Tensor out = a;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        return emit("add", std::move(out), [av, bv](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& ga = t.grad_mut(av);
            Tensor& gb = t.grad_mut(bv);
            for (size_t i = 0; i < gy.data.size(); ++i) {
                ga.data[i] += gy.data[i];
                gb.data[i] += gy.data[i];
            }
        });
    }

    Var mul(Var av, Var bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        require(a.same_shape(b), "mul: shape mismatch");
        Tensor out = a;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
        return emit("mul", std::move(out), [av, bv](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& a = t.value(av);
            const Tensor& b = t.value(bv);
            Tensor& ga = t.grad_mut(av);
            Tensor& gb = t.grad_mut(bv);
            for (size_t i = 0; i < gy.data.size(); ++i) {
                ga.data[i] += gy.data[i] * b.data[i];
                gb.data[i] += gy.data[i] * a.data[i];
            }
        });
    }

    Var scale(Var av, double c) {
        Tensor out = value(av);
        for (double& v : out.data) v *= c;
        return emit("scale", std::move(out), [av, c](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& ga = t.grad_mut(av);
            for (size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += c * gy.data[i];
        });
    }

    // m(r,c) + broadcast row vector v(c)
    Var add_rowvec(Var mv, Var vv) {
        const Tensor& m = value(mv);
        const Tensor& v = value(vv);
        require(m.shape.size() == 2 && static_cast<size_t>(m.shape[1]) == v.numel(), "add_rowvec: shape mismatch");
        Tensor out = m;
        const int r = m.shape[0], c = m.shape[1];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(i) * c + j] += v.data[static_cast<size_t>(j)];
        return emit("add_rowvec", std::move(out), [mv, vv, r, c](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& gm = t.grad_mut(mv);
            Tensor& gv = t.grad_mut(vv);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) {
                    const double g = gy.data[static_cast<size_t>(i) * c + j];
                    gm.data[static_cast<size_t>(i) * c + j] += g;
                    gv.data[static_cast<size_t>(j)] += g;
                }
        });
    }

    // Scales row i of m by s[i]; s of length rows, or length 1 (broadcast).
    Var rowscale(Var mv, Var sv) {
        const Tensor& m = value(mv);
        const Tensor& s = value(sv);
        require(m.shape.size() == 2, "rowscale: matrix expected");
        const int r = m.shape[0], c = m.shape[1];
        const bool broadcast = s.numel() == 1;
        require(broadcast || s.numel() == static_cast<size_t>(r), "rowscale: scale length mismatch");
        Tensor out = m;
        for (int i = 0; i < r; ++i) {
            const double f = s.data[broadcast ? 0 : static_cast<size_t>(i)];
            for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(i) * c + j] *= f;
        }
        return emit("rowscale", std::move(out), [mv, sv, r, c, broadcast](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& m = t.value(mv);
            const Tensor& s = t.value(sv);
            Tensor& gm = t.grad_mut(mv);
            Tensor& gs = t.grad_mut(sv);
            for (int i = 0; i < r; ++i) {
                const double f = s.data[broadcast ? 0 : static_cast<size_t>(i)];
                double dot = 0.0;
                for (int j = 0; j < c; ++j) {
                    const size_t at = static_cast<size_t>(i) * c + j;
                    gm.data[at] += gy.data[at] * f;
                    dot += gy.data[at] * m.data[at];
                }
                gs.data[broadcast ? 0 : static_cast<size_t>(i)] += dot;
            }
        });
    }

    // Row-wise softmax; each output row is a probability simplex.
    Var softmax_rows(Var av) {
        const Tensor& a = value(av);
        require(a.shape.size() == 2 || a.shape.size() == 1, "softmax_rows: rank-1 or rank-2 expected");
        const int r = a.rows(), c = a.cols();
        Tensor out = a;
        for (int i = 0; i < r; ++i) softmax_row(out.data.data() + static_cast<size_t>(i) * c, c);
        return emit("softmax_rows", std::move(out), [av, r, c](Tape& t, int self) {
            const Tensor& p = t.node_value(self);
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& ga = t.grad_mut(av);
            for (int i = 0; i < r; ++i) {
                const size_t off = static_cast<size_t>(i) * c;
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += gy.data[off + j] * p.data[off + j];
                for (int j = 0; j < c; ++j) ga.data[off + j] += p.data[off + j] * (gy.data[off + j] - dot);
            }
        });
    }

    // Row-wise layer normalization with learned gain/bias.
    Var layer_norm(Var xv, Var gv, Var bv, double eps = 1e-5) {
        const Tensor& x = value(xv);
        const Tensor& g = value(gv);
        const Tensor& b = value(bv);
        require(x.shape.size() == 2, "layer_norm: matrix expected");
        const int r = x.shape[0], c = x.shape[1];
        require(g.numel() == static_cast<size_t>(c) && b.numel() == static_cast<size_t>(c), "layer_norm: gain/bias length mismatch");
        Tensor out = Tensor::zeros({r, c});
        for (int i = 0; i < r; ++i) {
            const size_t off = static_cast<size_t>(i) * c;
            double mean = 0.0;
            for (int j = 0; j < c; ++j) mean += x.data[off + j];
            mean /= c;
            double var = 0.0;
            for (int j = 0; j < c; ++j) {
                const double d = x.data[off + j] - mean;
                var += d * d;
            }
            var /= c;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int j = 0; j < c; ++j) out.data[off + j] = (x.data[off + j] - mean) * inv * g.data[static_cast<size_t>(j)] + b.data[static_cast<size_t>(j)];
        }
        return emit("layer_norm", std::move(out), [xv, gv, bv, eps, r, c](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& x = t.value(xv);
            const Tensor& g = t.value(gv);
            Tensor& gx = t.grad_mut(xv);
            Tensor& gg = t.grad_mut(gv);
            Tensor& gb = t.grad_mut(bv);
            for (int i = 0; i < r; ++i) {
                const size_t off = static_cast<size_t>(i) * c;
                double mean = 0.0;
                for (int j = 0; j < c; ++j) mean += x.data[off + j];
                mean /= c;
                double var = 0.0;
                for (int j = 0; j < c; ++j) {
                    const double d = x.data[off + j] - mean;
                    var += d * d;
                }
                var /= c;
                const double inv = 1.0 / std::sqrt(var + eps);
                // dxhat, then fold the mean/variance paths
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int j = 0; j < c; ++j) {
                    const double xhat = (x.data[off + j] - mean) * inv;
                    const double dxhat = gy.data[off + j] * g.data[static_cast<size_t>(j)];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    gg.data[static_cast<size_t>(j)] += gy.data[off + j] * xhat;
                    gb.data[static_cast<size_t>(j)] += gy.data[off + j];
                }
                for (int j = 0; j < c; ++j) {
                    const double xhat = (x.data[off + j] - mean) * inv;
                    const double dxhat = gy.data[off + j] * g.data[static_cast<size_t>(j)];
                    gx.data[off + j] += inv * (dxhat - sum_dxhat / c - xhat * sum_dxhat_xhat / c);
                }
            }
        });
    }

    // Smooth GELU (tanh approximation); smoothness keeps finite-difference
    // gradient checks tight.
    Var gelu(Var av) {
        const Tensor& a = value(av);
        Tensor out = a;
        for (double& v : out.data) v = gelu_fwd(v);
        return emit("gelu", std::move(out), [av](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& a = t.value(av);
            Tensor& ga = t.grad_mut(av);
            for (size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] * gelu_bwd(a.data[i]);
        });
    }

    // Row gather: out[t, :] = table[ids[t], :]
    Var embed_rows(Var tablev, std::vector<int> ids) {
        const Tensor& table = value(tablev);
        require(table.shape.size() == 2, "embed_rows: table must be a matrix");
        const int v = table.shape[0], d = table.shape[1];
        for (int id : ids) require(id >= 0 && id < v, "embed_rows: id out of range");
        const int l = static_cast<int>(ids.size());
        Tensor out = Tensor::zeros({l, d});
        for (int t = 0; t < l; ++t)
            for (int j = 0; j < d; ++j) out.data[static_cast<size_t>(t) * d + j] = table.data[static_cast<size_t>(ids[static_cast<size_t>(t)]) * d + j];
        return emit("embed_rows", std::move(out), [tablev, ids = std::move(ids), d](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& gt = t.grad_mut(tablev);
            for (size_t p = 0; p < ids.size(); ++p)
                for (int j = 0; j < d; ++j) gt.data[static_cast<size_t>(ids[p]) * d + j] += gy.data[p * static_cast<size_t>(d) + j];
        });
    }

    Var slice_cols(Var mv, int start, int len) {
        const Tensor& m = value(mv);
        require(m.shape.size() == 2, "slice_cols: matrix expected");
        const int r = m.shape[0], c = m.shape[1];
        require(start >= 0 && len > 0 && start + len <= c, "slice_cols: range out of bounds");
        Tensor out = Tensor::zeros({r, len});
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < len; ++j) out.data[static_cast<size_t>(i) * len + j] = m.data[static_cast<size_t>(i) * c + start + j];
        return emit("slice_cols", std::move(out), [mv, start, len, r, c](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& gm = t.grad_mut(mv);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < len; ++j) gm.data[static_cast<size_t>(i) * c + start + j] += gy.data[static_cast<size_t>(i) * len + j];
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat_cols: no parts");
        const int r = value(parts[0]).shape[0];
        int total = 0;
        for (Var p : parts) {
            const Tensor& t = value(p);
            require(t.shape.size() == 2 && t.shape[0] == r, "concat_cols: row mismatch");
            total += t.shape[1];
        }
        Tensor out = Tensor::zeros({r, total});
        int at = 0;
        std::vector<int> offsets;
        for (Var p : parts) {
            const Tensor& t = value(p);
            const int c = t.shape[1];
            offsets.push_back(at);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(i) * total + at + j] = t.data[static_cast<size_t>(i) * c + j];
            at += c;
        }
        return emit("concat_cols", std::move(out), [parts, offsets = std::move(offsets), r, total](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            for (size_t k = 0; k < parts.size(); ++k) {
                Tensor& gp = t.grad_mut(parts[k]);
                const int c = t.value(parts[k]).shape[1];
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) gp.data[static_cast<size_t>(i) * c + j] += gy.data[static_cast<size_t>(i) * total + offsets[k] + j];
            }
        });
    }

    Var mean_rows(Var mv) {
        const Tensor& m = value(mv);
        require(m.shape.size() == 2, "mean_rows: matrix expected");
        const int r = m.shape[0], c = m.shape[1];
        Tensor out = Tensor::zeros({1, c});
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(j)] += m.data[static_cast<size_t>(i) * c + j] / r;
        return emit("mean_rows", std::move(out), [mv, r, c](Tape& t, int self) {
            const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& gm = t.grad_mut(mv);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) gm.data[static_cast<size_t>(i) * c + j] += gy.data[static_cast<size_t>(j)] / r;
        });
    }

    Var sum(Var av) {
        const Tensor& a = value(av);
        double s = 0.0;
        for (double v : a.data) s += v;
        return emit("sum", Tensor::scalar(s), [av](Tape& t, int self) {
            const double g = t.nodes_[static_cast<size_t>(self)].grad.data[0];
            Tensor& ga = t.grad_mut(av);
            for (double& v : ga.data) v += g;
        });
    }

    // Weighted mean cross-entropy over rows of logits: targets[t] is the
    // gold column for row t, weights[t] >= 0 masks rows out of the loss.
    Var cross_entropy(Var logitsv, const std::vector<int>& targets, const std::vector<double>& weights) {
        const Tensor& logits = value(logitsv);
        require(logits.shape.size() == 2, "cross_entropy: logits must be (rows, classes)");
        const int r = logits.shape[0], c = logits.shape[1];
        require(targets.size() == static_cast<size_t>(r) && weights.size() == static_cast<size_t>(r),
                "cross_entropy: targets/weights length mismatch");
        double wsum = 0.0;
        for (double w : weights) wsum += w;
        require(wsum > 0.0, "cross_entropy: no active rows");
        Tensor probs = logits;
        double loss = 0.0;
        for (int i = 0; i < r; ++i) {
            require(targets[static_cast<size_t>(i)] >= 0 && targets[static_cast<size_t>(i)] < c, "cross_entropy: target out of range");
            double* row = probs.data.data() + static_cast<size_t>(i) * c;
            softmax_row(row, c);
            const double p = row[targets[static_cast<size_t>(i)]];
            loss += weights[static_cast<size_t>(i)] * -std::log(p > 1e-300 ? p : 1e-300);
        }
        loss /= wsum;
        return emit("cross_entropy", Tensor::scalar(loss),
                    [logitsv, targets, weights, probs = std::move(probs), wsum, r, c](Tape& t, int self) {
                        const double g = t.nodes_[static_cast<size_t>(self)].grad.data[0];
                        Tensor& gl = t.grad_mut(logitsv);
                        for (int i = 0; i < r; ++i) {
                            const double w = weights[static_cast<size_t>(i)];
                            if (w == 0.0) continue;
                            const size_t off = static_cast<size_t>(i) * c;
                            const double f = g * w / wsum;
                            for (int j = 0; j < c; ++j) gl.data[off + j] += f * probs.data[off + j];
                            gl.data[off + static_cast<size_t>(targets[static_cast<size_t>(i)])] -= f;
                        }
                    });
    }

    // ---- backward --------------------------------------------------------

    // Accumulates d(loss)/d(param) into every trainable ParamGroup reachable
    // from the loss. loss must be a scalar produced by this tape.
    void backward(Var loss) {
        require(grad_enabled_, "backward: tape was created without gradients");
        require(loss.idx >= 0 && loss.idx < static_cast<int>(nodes_.size()), "backward: unknown node");
        require(value(loss).is_scalar(), "backward: loss is not a scalar");
        nodes_[static_cast<size_t>(loss.idx)].grad.data[0] = 1.0;
        for (int i = loss.idx; i >= 0; --i) {
            auto& fn = nodes_[static_cast<size_t>(i)].back;
            if (fn) fn(*this);
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;                       // value, unless this is a param leaf
        Tensor grad;
        ParamGroup* param = nullptr;
        std::function<void(Tape&)> back;    // adjoint propagation
    };

    static void require(bool cond, const std::string& msg) {
        if (!cond) throw std::runtime_error(msg);
    }

    const Node& node(Var v) const {
        if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size())) throw std::runtime_error("Tape: invalid handle");
        return nodes_[static_cast<size_t>(v.idx)];
    }

    const Tensor& node_value(int i) const {
        const Node& n = nodes_[static_cast<size_t>(i)];
        return n.param ? n.param->value : n.owned;
    }

    Tensor& grad_mut(Var v) { return nodes_[static_cast<size_t>(v.idx)].grad; }

    template <typename Back>
    Var emit(const char* op, Tensor out, Back&& back_with_self) {
        if (!out.all_finite()) throw std::runtime_error(std::string(op) + ": non-finite output");
        Node n;
        n.owned = std::move(out);
        if (grad_enabled_) n.grad = Tensor::zeros(n.owned.shape);
        nodes_.push_back(std::move(n));
        const int self = static_cast<int>(nodes_.size()) - 1;
        if (grad_enabled_) {
            nodes_.back().back = [self, fn = std::forward<Back>(back_with_self)](Tape& t) { fn(t, self); };
        }
        return Var{self};
    }

    static void softmax_row(double* row, int n) {
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
    }

    static double gelu_fwd(double x) {
        const double u = 0.7978845608028653558799 * (x + 0.044715 * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
    }

    static double gelu_bwd(double x) {
        const double c = 0.7978845608028653558799;
        const double u = c * (x + 0.044715 * x * x * x);
        const double th = std::tanh(u);
        const double sech2 = 1.0 - th * th;
        return 0.5 * (1.0 + th) + 0.5 * x * sech2 * c * (1.0 + 3.0 * 0.044715 * x * x);
    }

    // C += A*B and friends; accumulate-only so adjoints can share them.
    static void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            double* crow = c + static_cast<size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                const double av = a[static_cast<size_t>(i) * k + p];
                if (av == 0.0) continue;
                const double* brow = b + static_cast<size_t>(p) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    // C += A * B^T, A(m,k), B(n,k)
    static void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            const double* arow = a + static_cast<size_t>(i) * k;
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double* brow = b + static_cast<size_t>(j) * k;
                double s = 0.0;
                for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
                crow[j] += s;
            }
        }
    }

    // C(m,n) += A^T * B with A(r,m), B(r,n)
    static void gemm_tn(const double* a, const double* b, double* c, int m, int r, int n) {
        for (int p = 0; p < r; ++p) {
            const double* arow = a + static_cast<size_t>(p) * m;
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* crow = c + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

}  // namespace loralab
