// SPDX-License-Identifier: Apache-2.0

#include "dfr/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace dfr::diff {

namespace {
constexpr Real kBceClamp = 1e-7;

Real stable_sigmoid(Real x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    Real e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, const Node&)> fn) {
    Node n;
    n.value = std::move(value);
    n.value.requires_grad = requires_grad;
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_var(Var v, const char* prim) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument(std::string(prim) + ": invalid tape handle");
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_ready) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_ready = true;
    }
    return n.grad;
}

Var Tape::leaf(Tensor t) {
    bool rg = t.requires_grad;
    return push(std::move(t), rg, nullptr);
}

Var Tape::constant(Tensor t) {
    t.requires_grad = false;
    return push(std::move(t), false, nullptr);
}

Var Tape::param(const std::string& name, const Tensor& storage) {
    auto it = param_vars_.find(&storage);
    if (it != param_vars_.end()) return it->second;
    Tensor copy = storage;
    copy.requires_grad = true;
    Var v = push(std::move(copy), true, nullptr);
    param_vars_.emplace(&storage, v);
    param_order_.emplace_back(name, v);
    return v;
}

// ---- elementwise -----------------------------------------------------------

Var Tape::add(Var a, Var b) {
    check_var(a, "add");
    check_var(b, "add");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!va.same_shape(vb)) throw ShapeError("add", va.shape, vb.shape);
    Tensor out = va;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += vb.values[i];
    bool need = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), need, [a = a.id, b = b.id](Tape& t, const Node& self) {
        if (t.nodes_[a].requires_grad) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < ga.values.size(); ++i) ga.values[i] += self.grad.values[i];
        }
        if (t.nodes_[b].requires_grad) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < gb.values.size(); ++i) gb.values[i] += self.grad.values[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    check_var(a, "sub");
    check_var(b, "sub");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!va.same_shape(vb)) throw ShapeError("sub", va.shape, vb.shape);
    Tensor out = va;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= vb.values[i];
    bool need = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), need, [a = a.id, b = b.id](Tape& t, const Node& self) {
        if (t.nodes_[a].requires_grad) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < ga.values.size(); ++i) ga.values[i] += self.grad.values[i];
        }
        if (t.nodes_[b].requires_grad) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < gb.values.size(); ++i) gb.values[i] -= self.grad.values[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    check_var(a, "mul");
    check_var(b, "mul");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!va.same_shape(vb)) throw ShapeError("mul", va.shape, vb.shape);
    Tensor out = va;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= vb.values[i];
    bool need = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), need, [a = a.id, b = b.id](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[a].value;
        const Tensor& vb = t.nodes_[b].value;
        if (t.nodes_[a].requires_grad) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < ga.values.size(); ++i)
                ga.values[i] += self.grad.values[i] * vb.values[i];
        }
        if (t.nodes_[b].requires_grad) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < gb.values.size(); ++i)
                gb.values[i] += self.grad.values[i] * va.values[i];
        }
    });
}

Var Tape::affine(Var a, Real scale, Real shift) {
    check_var(a, "affine");
    Tensor out = node(a).value;
    for (Real& v : out.values) v = scale * v + shift;
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id, scale](Tape& t, const Node& self) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.values.size(); ++i)
            ga.values[i] += scale * self.grad.values[i];
    });
}

Var Tape::add_rowvec(Var m, Var v) {
    check_var(m, "add_rowvec");
    check_var(v, "add_rowvec");
    const Tensor& vm = node(m).value;
    const Tensor& vv = node(v).value;
    if (vm.rank() != 2 || vv.rank() != 1 || vm.shape[1] != vv.shape[0])
        throw ShapeError("add_rowvec", vm.shape, vv.shape);
    Tensor out = vm;
    int rows = vm.shape[0], cols = vm.shape[1];
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) += vv.at(c);
    bool need = node(m).requires_grad || node(v).requires_grad;
    return push(std::move(out), need, [m = m.id, v = v.id, rows, cols](Tape& t, const Node& self) {
        if (t.nodes_[m].requires_grad) {
            Tensor& gm = t.grad_buffer(m);
            for (std::size_t i = 0; i < gm.values.size(); ++i) gm.values[i] += self.grad.values[i];
        }
        if (t.nodes_[v].requires_grad) {
            Tensor& gv = t.grad_buffer(v);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) gv.at(c) += self.grad.at(r, c);
        }
    });
}

// ---- linear algebra --------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    check_var(a, "matmul");
    check_var(b, "matmul");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (va.rank() != 2) throw ShapeError("matmul", va.shape, vb.shape);
    int n = va.shape[0], k = va.shape[1];
    bool vec = vb.rank() == 1;
    if (vec ? vb.shape[0] != k : (vb.rank() != 2 || vb.shape[0] != k))
        throw ShapeError("matmul", va.shape, vb.shape);
    int m = vec ? 1 : vb.shape[1];

    Tensor out = vec ? Tensor::zeros({n}) : Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < k; ++p) {
            Real aip = va.values[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const Real* brow = &vb.values[static_cast<std::size_t>(p) * m];
            Real* orow = &out.values[static_cast<std::size_t>(i) * m];
            for (int j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    bool need = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), need, [a = a.id, b = b.id, n, k, m](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[a].value;
        const Tensor& vb = t.nodes_[b].value;
        const std::vector<Real>& g = self.grad.values;
        if (t.nodes_[a].requires_grad) {
            Tensor& ga = t.grad_buffer(a);
            // dA = dC * B^T
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < k; ++p) {
                    Real acc = 0.0;
                    const Real* grow = &g[static_cast<std::size_t>(i) * m];
                    const Real* brow = &vb.values[static_cast<std::size_t>(p) * m];
                    for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    ga.values[static_cast<std::size_t>(i) * k + p] += acc;
                }
        }
        if (t.nodes_[b].requires_grad) {
            Tensor& gb = t.grad_buffer(b);
            // dB = A^T * dC
            for (int i = 0; i < n; ++i) {
                const Real* grow = &g[static_cast<std::size_t>(i) * m];
                for (int p = 0; p < k; ++p) {
                    Real aip = va.values[static_cast<std::size_t>(i) * k + p];
                    if (aip == 0.0) continue;
                    Real* gbrow = &gb.values[static_cast<std::size_t>(p) * m];
                    for (int j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    check_var(a, "matmul_nt");
    check_var(b, "matmul_nt");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (va.rank() != 2 || vb.rank() != 2 || va.shape[1] != vb.shape[1])
        throw ShapeError("matmul_nt", va.shape, vb.shape);
    int n = va.shape[0], d = va.shape[1], m = vb.shape[0];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            Real acc = 0.0;
            const Real* arow = &va.values[static_cast<std::size_t>(i) * d];
            const Real* brow = &vb.values[static_cast<std::size_t>(j) * d];
            for (int p = 0; p < d; ++p) acc += arow[p] * brow[p];
            out.at(i, j) = acc;
        }
    bool need = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), need, [a = a.id, b = b.id, n, d, m](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[a].value;
        const Tensor& vb = t.nodes_[b].value;
        if (t.nodes_[a].requires_grad) {
            Tensor& ga = t.grad_buffer(a);
            // dA = dC * B
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    Real gij = self.grad.at(i, j);
                    if (gij == 0.0) continue;
                    Real* garow = &ga.values[static_cast<std::size_t>(i) * d];
                    const Real* brow = &vb.values[static_cast<std::size_t>(j) * d];
                    for (int p = 0; p < d; ++p) garow[p] += gij * brow[p];
                }
        }
        if (t.nodes_[b].requires_grad) {
            Tensor& gb = t.grad_buffer(b);
            // dB = dC^T * A
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    Real gij = self.grad.at(i, j);
                    if (gij == 0.0) continue;
                    Real* gbrow = &gb.values[static_cast<std::size_t>(j) * d];
                    const Real* arow = &va.values[static_cast<std::size_t>(i) * d];
                    for (int p = 0; p < d; ++p) gbrow[p] += gij * arow[p];
                }
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int rows = -1, total = 0;
    for (Var p : parts) {
        check_var(p, "concat_cols");
        const Tensor& v = node(p).value;
        if (v.rank() != 2) throw ShapeError("concat_cols", v.shape, {});
        if (rows < 0) rows = v.shape[0];
        if (v.shape[0] != rows) throw ShapeError("concat_cols", {rows, -1}, v.shape);
        total += v.shape[1];
    }
    Tensor out = Tensor::zeros({rows, total});
    int off = 0;
    bool need = false;
    std::vector<int> ids, widths;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        int w = v.shape[1];
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w; ++c) out.at(r, off + c) = v.at(r, c);
        need = need || node(p).requires_grad;
        ids.push_back(p.id);
        widths.push_back(w);
        off += w;
    }
    return push(std::move(out), need,
                [ids, widths, rows, total](Tape& t, const Node& self) {
                    int off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        int w = widths[k];
                        if (t.nodes_[ids[k]].requires_grad) {
                            Tensor& g = t.grad_buffer(ids[k]);
                            for (int r = 0; r < rows; ++r)
                                for (int c = 0; c < w; ++c)
                                    g.at(r, c) += self.grad.values[static_cast<std::size_t>(r) * total + off + c];
                        }
                        off += w;
                    }
                });
}

Var Tape::broadcast_rows(Var v, int n) {
    check_var(v, "broadcast_rows");
    const Tensor& vv = node(v).value;
    if (vv.rank() != 1 || n < 1) throw ShapeError("broadcast_rows", vv.shape, {n});
    int f = vv.shape[0];
    Tensor out = Tensor::zeros({n, f});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < f; ++c) out.at(r, c) = vv.at(c);
    bool need = node(v).requires_grad;
    return push(std::move(out), need, [v = v.id, n, f](Tape& t, const Node& self) {
        Tensor& gv = t.grad_buffer(v);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < f; ++c) gv.at(c) += self.grad.at(r, c);
    });
}

Var Tape::repeat_cols(Var v, int s) {
    check_var(v, "repeat_cols");
    const Tensor& vv = node(v).value;
    if (vv.rank() != 1 || s < 1) throw ShapeError("repeat_cols", vv.shape, {s});
    int n = vv.shape[0];
    Tensor out = Tensor::zeros({n, s});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < s; ++c) out.at(r, c) = vv.at(r);
    bool need = node(v).requires_grad;
    return push(std::move(out), need, [v = v.id, n, s](Tape& t, const Node& self) {
        Tensor& gv = t.grad_buffer(v);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < s; ++c) gv.at(r) += self.grad.at(r, c);
    });
}

// ---- nonlinearities ---------------------------------------------------------

Var Tape::min_elem(Var a, Var b) {
    check_var(a, "min_elem");
    check_var(b, "min_elem");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!va.same_shape(vb)) throw ShapeError("min_elem", va.shape, vb.shape);
    Tensor out = va;
    std::vector<std::uint8_t> pick_a(out.values.size());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        // ties go to the first operand
        pick_a[i] = va.values[i] <= vb.values[i];
        out.values[i] = pick_a[i] ? va.values[i] : vb.values[i];
    }
    bool need = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), need,
                [a = a.id, b = b.id, pick_a = std::move(pick_a)](Tape& t, const Node& self) {
                    if (t.nodes_[a].requires_grad) {
                        Tensor& ga = t.grad_buffer(a);
                        for (std::size_t i = 0; i < ga.values.size(); ++i)
                            if (pick_a[i]) ga.values[i] += self.grad.values[i];
                    }
                    if (t.nodes_[b].requires_grad) {
                        Tensor& gb = t.grad_buffer(b);
                        for (std::size_t i = 0; i < gb.values.size(); ++i)
                            if (!pick_a[i]) gb.values[i] += self.grad.values[i];
                    }
                });
}

Var Tape::relu(Var a) {
    check_var(a, "relu");
    Tensor out = node(a).value;
    for (Real& v : out.values) v = v > 0.0 ? v : 0.0;
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[a].value;
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.values.size(); ++i)
            if (va.values[i] > 0.0) ga.values[i] += self.grad.values[i];
    });
}

Var Tape::leaky_relu(Var a, Real slope) {
    check_var(a, "leaky_relu");
    Tensor out = node(a).value;
    for (Real& v : out.values) v = v > 0.0 ? v : slope * v;
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id, slope](Tape& t, const Node& self) {
        const Tensor& va = t.nodes_[a].value;
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.values.size(); ++i)
            ga.values[i] += self.grad.values[i] * (va.values[i] > 0.0 ? 1.0 : slope);
    });
}

Var Tape::sigmoid(Var a) {
    check_var(a, "sigmoid");
    Tensor out = node(a).value;
    for (Real& v : out.values) v = stable_sigmoid(v);
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id](Tape& t, const Node& self) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.values.size(); ++i) {
            Real y = self.value.values[i];
            ga.values[i] += self.grad.values[i] * y * (1.0 - y);
        }
    });
}

Var Tape::softmax(Var a) {
    check_var(a, "softmax");
    const Tensor& va = node(a).value;
    int rows = va.rank() == 1 ? 1 : va.shape[0];
    int cols = va.rank() == 1 ? va.shape[0] : va.cols();
    if (cols < 1) throw ShapeError("softmax", va.shape, {});
    Tensor out = va;
    for (int r = 0; r < rows; ++r) {
        Real* x = &out.values[static_cast<std::size_t>(r) * cols];
        Real mx = x[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        Real total = 0.0;
        for (int c = 0; c < cols; ++c) {
            x[c] = std::exp(x[c] - mx);
            total += x[c];
        }
        for (int c = 0; c < cols; ++c) x[c] /= total;
    }
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id, rows, cols](Tape& t, const Node& self) {
        Tensor& ga = t.grad_buffer(a);
        for (int r = 0; r < rows; ++r) {
            const Real* s = &self.value.values[static_cast<std::size_t>(r) * cols];
            const Real* g = &self.grad.values[static_cast<std::size_t>(r) * cols];
            Real dot = 0.0;
            for (int c = 0; c < cols; ++c) dot += g[c] * s[c];
            Real* out = &ga.values[static_cast<std::size_t>(r) * cols];
            for (int c = 0; c < cols; ++c) out[c] += s[c] * (g[c] - dot);
        }
    });
}

Var Tape::l2_normalize(Var a, Real target_norm) {
    check_var(a, "l2_normalize");
    const Tensor& va = node(a).value;
    if (va.rank() != 1) throw ShapeError("l2_normalize", va.shape, {});
    Real norm2 = 0.0;
    for (Real v : va.values) norm2 += v * v;
    Real norm = std::max(std::sqrt(norm2), 1e-12);
    Real k = target_norm / norm;
    Tensor out = va;
    for (Real& v : out.values) v *= k;
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id, norm, k](Tape& t, const Node& self) {
        // dy/dx = k (I - x x^T / ||x||^2)
        const Tensor& va = t.nodes_[a].value;
        Tensor& ga = t.grad_buffer(a);
        Real dot = 0.0;
        for (std::size_t i = 0; i < va.values.size(); ++i)
            dot += self.grad.values[i] * va.values[i];
        Real inv_norm2 = 1.0 / (norm * norm);
        for (std::size_t i = 0; i < ga.values.size(); ++i)
            ga.values[i] += k * (self.grad.values[i] - va.values[i] * dot * inv_norm2);
    });
}

// ---- reductions -------------------------------------------------------------

Var Tape::colwise_max(Var m) {
    check_var(m, "colwise_max");
    const Tensor& vm = node(m).value;
    if (vm.rank() != 2 || vm.shape[0] < 1) throw ShapeError("colwise_max", vm.shape, {});
    int rows = vm.shape[0], cols = vm.shape[1];
    Tensor out = Tensor::zeros({cols});
    std::vector<int> arg(static_cast<std::size_t>(cols), 0);
    for (int c = 0; c < cols; ++c) {
        Real best = vm.at(0, c);
        int bi = 0;
        for (int r = 1; r < rows; ++r)
            if (vm.at(r, c) > best) {
                best = vm.at(r, c);
                bi = r;
            }
        out.at(c) = best;
        arg[static_cast<std::size_t>(c)] = bi;
    }
    bool need = node(m).requires_grad;
    return push(std::move(out), need, [m = m.id, arg = std::move(arg), cols](Tape& t, const Node& self) {
        Tensor& gm = t.grad_buffer(m);
        for (int c = 0; c < cols; ++c) gm.at(arg[static_cast<std::size_t>(c)], c) += self.grad.at(c);
    });
}

Var Tape::max_all(Var a) {
    check_var(a, "max_all");
    const Tensor& va = node(a).value;
    if (va.numel() == 0) throw ShapeError("max_all", va.shape, {});
    std::size_t arg = 0;
    Real best = va.values[0];
    for (std::size_t i = 1; i < va.values.size(); ++i)
        if (va.values[i] > best) {
            best = va.values[i];
            arg = i;
        }
    bool need = node(a).requires_grad;
    return push(Tensor::scalar(best), need, [a = a.id, arg](Tape& t, const Node& self) {
        t.grad_buffer(a).values[arg] += self.grad.values[0];
    });
}

Var Tape::sum_all(Var a) {
    check_var(a, "sum_all");
    const Tensor& va = node(a).value;
    Real total = 0.0;
    for (Real v : va.values) total += v;
    bool need = node(a).requires_grad;
    return push(Tensor::scalar(total), need, [a = a.id](Tape& t, const Node& self) {
        Tensor& ga = t.grad_buffer(a);
        for (Real& g : ga.values) g += self.grad.values[0];
    });
}

Var Tape::mean_all(Var a) {
    check_var(a, "mean_all");
    const Tensor& va = node(a).value;
    if (va.numel() == 0) throw ShapeError("mean_all", va.shape, {});
    Real total = 0.0;
    for (Real v : va.values) total += v;
    Real inv = 1.0 / static_cast<Real>(va.numel());
    bool need = node(a).requires_grad;
    return push(Tensor::scalar(total * inv), need, [a = a.id, inv](Tape& t, const Node& self) {
        Tensor& ga = t.grad_buffer(a);
        for (Real& g : ga.values) g += self.grad.values[0] * inv;
    });
}

// ---- losses -----------------------------------------------------------------

Var Tape::mse(Var pred, Var target) {
    check_var(pred, "mse");
    check_var(target, "mse");
    const Tensor& vp = node(pred).value;
    const Tensor& vt = node(target).value;
    if (!vp.same_shape(vt)) throw ShapeError("mse", vp.shape, vt.shape);
    Real total = 0.0;
    for (std::size_t i = 0; i < vp.values.size(); ++i) {
        Real d = vp.values[i] - vt.values[i];
        total += d * d;
    }
    Real inv = 1.0 / static_cast<Real>(vp.numel());
    bool need = node(pred).requires_grad || node(target).requires_grad;
    return push(Tensor::scalar(total * inv), need,
                [p = pred.id, q = target.id, inv](Tape& t, const Node& self) {
                    const Tensor& vp = t.nodes_[p].value;
                    const Tensor& vt = t.nodes_[q].value;
                    Real g = self.grad.values[0];
                    if (t.nodes_[p].requires_grad) {
                        Tensor& gp = t.grad_buffer(p);
                        for (std::size_t i = 0; i < gp.values.size(); ++i)
                            gp.values[i] += g * 2.0 * (vp.values[i] - vt.values[i]) * inv;
                    }
                    if (t.nodes_[q].requires_grad) {
                        Tensor& gt = t.grad_buffer(q);
                        for (std::size_t i = 0; i < gt.values.size(); ++i)
                            gt.values[i] -= g * 2.0 * (vp.values[i] - vt.values[i]) * inv;
                    }
                });
}

Var Tape::bce(Var prob, Var target) {
    check_var(prob, "bce");
    check_var(target, "bce");
    const Tensor& vp = node(prob).value;
    const Tensor& vt = node(target).value;
    if (!vp.same_shape(vt)) throw ShapeError("bce", vp.shape, vt.shape);
    Real total = 0.0;
    for (std::size_t i = 0; i < vp.values.size(); ++i) {
        Real p = std::clamp(vp.values[i], kBceClamp, 1.0 - kBceClamp);
        Real t = vt.values[i];
        total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    Real inv = 1.0 / static_cast<Real>(vp.numel());
    bool need = node(prob).requires_grad;
    return push(Tensor::scalar(total * inv), need,
                [p = prob.id, q = target.id, inv](Tape& t, const Node& self) {
                    const Tensor& vp = t.nodes_[p].value;
                    const Tensor& vt = t.nodes_[q].value;
                    Real g = self.grad.values[0];
                    Tensor& gp = t.grad_buffer(p);
                    for (std::size_t i = 0; i < gp.values.size(); ++i) {
                        Real raw = vp.values[i];
                        if (raw <= kBceClamp || raw >= 1.0 - kBceClamp) continue;  // clamped, flat
                        gp.values[i] += g * inv * (raw - vt.values[i]) / (raw * (1.0 - raw));
                    }
                });
}

Var Tape::cross_entropy_logits(Var logits, int target) {
    check_var(logits, "cross_entropy");
    const Tensor& vl = node(logits).value;
    if (vl.rank() != 1 || target < 0 || target >= vl.shape[0])
        throw ShapeError("cross_entropy", vl.shape, {target});
    int c = vl.shape[0];
    std::vector<Real> soft(static_cast<std::size_t>(c));
    Real mx = vl.values[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, vl.values[i]);
    Real total = 0.0;
    for (int i = 0; i < c; ++i) {
        soft[static_cast<std::size_t>(i)] = std::exp(vl.values[i] - mx);
        total += soft[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < c; ++i) soft[static_cast<std::size_t>(i)] /= total;
    Real loss = -std::log(std::max(soft[static_cast<std::size_t>(target)], kBceClamp));
    bool need = node(logits).requires_grad;
    return push(Tensor::scalar(loss), need,
                [l = logits.id, target, soft = std::move(soft)](Tape& t, const Node& self) {
                    Tensor& gl = t.grad_buffer(l);
                    Real g = self.grad.values[0];
                    for (std::size_t i = 0; i < gl.values.size(); ++i)
                        gl.values[i] += g * (soft[i] - (static_cast<int>(i) == target ? 1.0 : 0.0));
                });
}

// ---- indexing ---------------------------------------------------------------

Var Tape::gather(Var a, std::vector<int> flat_indices) {
    check_var(a, "gather");
    const Tensor& va = node(a).value;
    Tensor out = Tensor::zeros({static_cast<int>(flat_indices.size())});
    for (std::size_t k = 0; k < flat_indices.size(); ++k) {
        int idx = flat_indices[k];
        if (idx < 0 || static_cast<std::size_t>(idx) >= va.numel())
            throw std::out_of_range("gather: index " + std::to_string(idx) + " out of range for " +
                                    shape_str(va.shape));
        out.values[k] = va.values[static_cast<std::size_t>(idx)];
    }
    bool need = node(a).requires_grad;
    return push(std::move(out), need,
                [a = a.id, idx = std::move(flat_indices)](Tape& t, const Node& self) {
                    Tensor& ga = t.grad_buffer(a);
                    for (std::size_t k = 0; k < idx.size(); ++k)
                        ga.values[static_cast<std::size_t>(idx[k])] += self.grad.values[k];
                });
}

Var Tape::select_rows(Var m, std::vector<int> rows) {
    check_var(m, "select_rows");
    const Tensor& vm = node(m).value;
    if (vm.rank() != 2) throw ShapeError("select_rows", vm.shape, {});
    int cols = vm.shape[1];
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), cols});
    for (std::size_t k = 0; k < rows.size(); ++k) {
        int r = rows[k];
        if (r < 0 || r >= vm.shape[0])
            throw std::out_of_range("select_rows: row " + std::to_string(r) + " out of range for " +
                                    shape_str(vm.shape));
        for (int c = 0; c < cols; ++c) out.at(static_cast<int>(k), c) = vm.at(r, c);
    }
    bool need = node(m).requires_grad;
    return push(std::move(out), need,
                [m = m.id, rows = std::move(rows), cols](Tape& t, const Node& self) {
                    Tensor& gm = t.grad_buffer(m);
                    for (std::size_t k = 0; k < rows.size(); ++k)
                        for (int c = 0; c < cols; ++c)
                            gm.at(rows[k], c) += self.grad.at(static_cast<int>(k), c);
                });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    check_var(a, "reshape");
    const Tensor& va = node(a).value;
    Tensor out(shape, va.values);
    if (out.numel() != va.numel()) throw ShapeError("reshape", va.shape, shape);
    bool need = node(a).requires_grad;
    return push(std::move(out), need, [a = a.id](Tape& t, const Node& self) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.values.size(); ++i) ga.values[i] += self.grad.values[i];
    });
}

// ---- backward ---------------------------------------------------------------

void Tape::backward(Var loss) {
    check_var(loss, "backward");
    if (nodes_.empty()) throw std::invalid_argument("backward: empty tape");
    const Tensor& lv = node(loss).value;
    if (!lv.is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(lv.shape));
    grad_buffer(loss.id).values[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad_ready && n.backprop) n.backprop(*this, n);
    }
}

Tensor Tape::grad_of(Var v) const {
    check_var(v, "grad_of");
    const Node& n = node(v);
    if (n.grad_ready) return n.grad;
    return Tensor::zeros(n.value.shape);
}

std::vector<std::pair<std::string, Tensor>> Tape::param_grads() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(param_order_.size());
    for (const auto& [name, var] : param_order_) out.emplace_back(name, grad_of(var));
    return out;
}

Tensor randn(std::vector<int> shape, Rng& rng, Real stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (Real& v : t.values) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace dfr::diff
