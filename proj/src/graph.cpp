#include "adarec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace adarec {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kLayerNormEps = 1e-5;

Var make_node(Tensor value, const char* op, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
    value.ensure_finite(op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    n->requires_grad = req;
    if (req) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace

void Node::accumulate(const Tensor& g) {
    if (!requires_grad) return;
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
    if (!grad.same_shape(g)) shape_mismatch("accumulate", grad, g);
    for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
}

Var constant(Tensor v) {
    v.ensure_finite("constant");
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->op = "const";
    return n;
}

Var param(Tensor v) {
    v.ensure_finite("param");
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->op = "param";
    n->requires_grad = true;
    return n;
}

Var add(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.same_shape(bv)) {
        Tensor out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
        return make_node(std::move(out), "add", {a, b}, [](Node& n) {
            n.parents[0]->accumulate(n.grad);
            n.parents[1]->accumulate(n.grad);
        });
    }
    if (av.rank() == 2 && bv.rank() == 1 && av.dim(1) == bv.dim(0)) {
        Tensor out = av;
        int rows = av.dim(0), cols = av.dim(1);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) out.at(i, j) += bv.at(j);
        return make_node(std::move(out), "add", {a, b}, [rows, cols](Node& n) {
            n.parents[0]->accumulate(n.grad);
            if (n.parents[1]->requires_grad) {
                Tensor gb({cols});
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) gb.at(j) += n.grad.at(i, j);
                n.parents[1]->accumulate(gb);
            }
        });
    }
    shape_mismatch("add", av, bv);
    return nullptr;
}

Var add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("add_n: empty operand list");
    Tensor out = xs[0]->value;
    for (size_t i = 1; i < xs.size(); ++i) {
        if (!xs[i]->value.same_shape(out)) shape_mismatch("add_n", out, xs[i]->value);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += xs[i]->value.data[j];
    }
    return make_node(std::move(out), "add_n", xs, [](Node& n) {
        for (auto& p : n.parents) p->accumulate(n.grad);
    });
}

Var scale(const Var& a, double c) {
    Tensor out = a->value;
    for (auto& v : out.data) v *= c;
    return make_node(std::move(out), "scale", {a}, [c](Node& n) {
        Tensor g = n.grad;
        for (auto& v : g.data) v *= c;
        n.parents[0]->accumulate(g);
    });
}

Var scale_by(const Var& a, const Var& s) {
    if (!s->value.is_scalar()) {
        throw ShapeError("scale_by: multiplier must be scalar, got " +
                         s->value.shape_str());
    }
    double c = s->value.data[0];
    Tensor out = a->value;
    for (auto& v : out.data) v *= c;
    return make_node(std::move(out), "multiply-by-scalar", {a, s}, [c](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor ga = n.grad;
            for (auto& v : ga.data) v *= c;
            n.parents[0]->accumulate(ga);
        }
        if (n.parents[1]->requires_grad) {
            double gs = 0.0;
            const Tensor& av = n.parents[0]->value;
            for (size_t i = 0; i < av.data.size(); ++i) gs += n.grad.data[i] * av.data[i];
            n.parents[1]->accumulate(Tensor::scalar(gs));
        }
    });
}

Var cmul(const Var& a, const Tensor& c) {
    if (!a->value.same_shape(c)) shape_mismatch("cmul", a->value, c);
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= c.data[i];
    return make_node(std::move(out), "cmul", {a}, [c](Node& n) {
        Tensor g = n.grad;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= c.data[i];
        n.parents[0]->accumulate(g);
    });
}

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        shape_mismatch("matrix-multiply", av, bv);
    }
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
            double x = av.at(i, kk);
            if (x == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at(i, j) += x * bv.at(kk, j);
        }
    return make_node(std::move(out), "matrix-multiply", {a, b}, [m, k, n](Node& nd) {
        const Tensor& av2 = nd.parents[0]->value;
        const Tensor& bv2 = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            Tensor ga({m, k});
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double g = nd.grad.at(i, j);
                    if (g == 0.0) continue;
                    for (int kk = 0; kk < k; ++kk) ga.at(i, kk) += g * bv2.at(kk, j);
                }
            nd.parents[0]->accumulate(ga);
        }
        if (nd.parents[1]->requires_grad) {
            Tensor gb({k, n});
            for (int i = 0; i < m; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    double x = av2.at(i, kk);
                    if (x == 0.0) continue;
                    for (int j = 0; j < n; ++j) gb.at(kk, j) += x * nd.grad.at(i, j);
                }
            nd.parents[1]->accumulate(gb);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
        shape_mismatch("matmul_nt", av, bv);
    }
    int m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += av.at(i, kk) * bv.at(j, kk);
            out.at(i, j) = acc;
        }
    return make_node(std::move(out), "matmul_nt", {a, b}, [m, k, n](Node& nd) {
        const Tensor& av2 = nd.parents[0]->value;
        const Tensor& bv2 = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            Tensor ga({m, k});
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double g = nd.grad.at(i, j);
                    if (g == 0.0) continue;
                    for (int kk = 0; kk < k; ++kk) ga.at(i, kk) += g * bv2.at(j, kk);
                }
            nd.parents[0]->accumulate(ga);
        }
        if (nd.parents[1]->requires_grad) {
            Tensor gb({n, k});
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double g = nd.grad.at(i, j);
                    if (g == 0.0) continue;
                    for (int kk = 0; kk < k; ++kk) gb.at(j, kk) += g * av2.at(i, kk);
                }
            nd.parents[1]->accumulate(gb);
        }
    });
}

Var embedding_gather(const Var& table, const std::vector<int>& ids) {
    const Tensor& tv = table->value;
    if (tv.rank() != 2) throw ShapeError("embedding-gather: table must be rank 2");
    int rows = tv.dim(0), d = tv.dim(1);
    int t = static_cast<int>(ids.size());
    if (t == 0) throw ShapeError("embedding-gather: empty id list");
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw ShapeError("embedding-gather: id " + std::to_string(id) +
                             " outside table " + tv.shape_str());
        }
    }
    Tensor out({t, d});
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = tv.at(ids[i], j);
    return make_node(std::move(out), "embedding-gather", {table}, [ids, d](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape);
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j)
                g.at(ids[i], j) += n.grad.at(static_cast<int>(i), j);
        n.parents[0]->accumulate(g);
    });
}

Var conv1d(const Var& x, const Var& kernel, const Var& bias, int dilation,
           int pad_left, int pad_right) {
    const Tensor& xv = x->value;
    const Tensor& kv = kernel->value;
    const Tensor& bv = bias->value;
    if (xv.rank() != 2 || kv.rank() != 3) shape_mismatch("conv1d", xv, kv);
    int t = xv.dim(0), din = xv.dim(1);
    int k = kv.dim(0), dout = kv.dim(2);
    if (kv.dim(1) != din) shape_mismatch("conv1d", xv, kv);
    if (bv.rank() != 1 || bv.dim(0) != dout) shape_mismatch("conv1d bias", bv, kv);
    if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
    if (pad_left + pad_right != (k - 1) * dilation) {
        throw ShapeError("conv1d: padding does not preserve length");
    }
    Tensor out({t, dout});
    for (int i = 0; i < t; ++i) {
        for (int o = 0; o < dout; ++o) out.at(i, o) = bv.at(o);
        for (int tap = 0; tap < k; ++tap) {
            int src = i + tap * dilation - pad_left;
            if (src < 0 || src >= t) continue;
            for (int c = 0; c < din; ++c) {
                double xval = xv.at(src, c);
                if (xval == 0.0) continue;
                for (int o = 0; o < dout; ++o) out.at(i, o) += xval * kv.at(tap, c, o);
            }
        }
    }
    auto back = [t, din, k, dout, dilation, pad_left](Node& n) {
        const Tensor& xv2 = n.parents[0]->value;
        const Tensor& kv2 = n.parents[1]->value;
        Tensor gx({t, din});
        Tensor gk({k, din, dout});
        Tensor gb({dout});
        for (int i = 0; i < t; ++i) {
            for (int o = 0; o < dout; ++o) gb.at(o) += n.grad.at(i, o);
            for (int tap = 0; tap < k; ++tap) {
                int src = i + tap * dilation - pad_left;
                if (src < 0 || src >= t) continue;
                for (int o = 0; o < dout; ++o) {
                    double g = n.grad.at(i, o);
                    if (g == 0.0) continue;
                    for (int c = 0; c < din; ++c) {
                        gk.at(tap, c, o) += xv2.at(src, c) * g;
                        gx.at(src, c) += kv2.at(tap, c, o) * g;
                    }
                }
            }
        }
        n.parents[0]->accumulate(gx);
        n.parents[1]->accumulate(gk);
        n.parents[2]->accumulate(gb);
    };
    return make_node(std::move(out), "conv1d", {x, kernel, bias}, std::move(back));
}

Var causal_dilated_conv1d(const Var& x, const Var& kernel, const Var& bias,
                          int dilation) {
    int k = kernel->value.dim(0);
    return conv1d(x, kernel, bias, dilation, (k - 1) * dilation, 0);
}

Var conv1d_same(const Var& x, const Var& kernel, const Var& bias) {
    int k = kernel->value.dim(0);
    if (k % 2 == 0) throw ShapeError("conv1d_same: kernel size must be odd");
    return conv1d(x, kernel, bias, 1, (k - 1) / 2, (k - 1) / 2);
}

Var relu(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_node(std::move(out), "relu", {x}, [](Node& n) {
        Tensor g = n.grad;
        const Tensor& xv = n.parents[0]->value;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (xv.data[i] <= 0.0) g.data[i] = 0.0;
        n.parents[0]->accumulate(g);
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
    const Tensor& xv = x->value;
    int d = xv.dim(xv.rank() - 1);
    int rows = static_cast<int>(xv.numel() / d);
    const Tensor& gv = gain->value;
    const Tensor& bv = bias->value;
    if (gv.rank() != 1 || gv.dim(0) != d || bv.rank() != 1 || bv.dim(0) != d) {
        shape_mismatch("layer-norm params", xv, gv);
    }
    Tensor out = xv;
    Tensor xhat = xv;      // saved for backward
    Tensor inv_std({rows});
    for (int r = 0; r < rows; ++r) {
        const double* xr = &xv.data[static_cast<size_t>(r) * d];
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std.at(r) = is;
        for (int j = 0; j < d; ++j) {
            double xh = (xr[j] - mu) * is;
            xhat.data[static_cast<size_t>(r) * d + j] = xh;
            out.data[static_cast<size_t>(r) * d + j] = xh * gv.at(j) + bv.at(j);
        }
    }
    auto back = [rows, d, xhat, inv_std](Node& n) {
        const Tensor& gv2 = n.parents[1]->value;
        Tensor gx = Tensor::zeros(n.parents[0]->value.shape);
        Tensor gg({d});
        Tensor gb({d});
        for (int r = 0; r < rows; ++r) {
            const double* go = &n.grad.data[static_cast<size_t>(r) * d];
            const double* xh = &xhat.data[static_cast<size_t>(r) * d];
            double mean_dy = 0.0, mean_dy_xh = 0.0;
            for (int j = 0; j < d; ++j) {
                double dy = go[j] * gv2.at(j);
                mean_dy += dy;
                mean_dy_xh += dy * xh[j];
                gg.at(j) += go[j] * xh[j];
                gb.at(j) += go[j];
            }
            mean_dy /= d;
            mean_dy_xh /= d;
            double is = inv_std.at(r);
            for (int j = 0; j < d; ++j) {
                double dy = go[j] * gv2.at(j);
                gx.data[static_cast<size_t>(r) * d + j] =
                    is * (dy - mean_dy - xh[j] * mean_dy_xh);
            }
        }
        n.parents[0]->accumulate(gx);
        n.parents[1]->accumulate(gg);
        n.parents[2]->accumulate(gb);
    };
    return make_node(std::move(out), "layer-norm", {x, gain, bias}, std::move(back));
}

Var softmax(const Var& x) {
    const Tensor& xv = x->value;
    int d = xv.dim(xv.rank() - 1);
    int rows = static_cast<int>(xv.numel() / d);
    Tensor out = xv;
    for (int r = 0; r < rows; ++r) {
        double* o = &out.data[static_cast<size_t>(r) * d];
        double mx = o[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, o[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            o[j] = std::exp(o[j] - mx);
            z += o[j];
        }
        for (int j = 0; j < d; ++j) o[j] /= z;
    }
    Tensor saved = out;
    return make_node(std::move(out), "softmax", {x}, [rows, d, saved](Node& n) {
        Tensor gx = Tensor::zeros(n.parents[0]->value.shape);
        for (int r = 0; r < rows; ++r) {
            const double* y = &saved.data[static_cast<size_t>(r) * d];
            const double* go = &n.grad.data[static_cast<size_t>(r) * d];
            double dotv = 0.0;
            for (int j = 0; j < d; ++j) dotv += go[j] * y[j];
            for (int j = 0; j < d; ++j)
                gx.data[static_cast<size_t>(r) * d + j] = y[j] * (go[j] - dotv);
        }
        n.parents[0]->accumulate(gx);
    });
}

Var vlog(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::log(v);
    return make_node(std::move(out), "log", {x}, [](Node& n) {
        Tensor g = n.grad;
        const Tensor& xv = n.parents[0]->value;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] /= xv.data[i];
        n.parents[0]->accumulate(g);
    });
}

Var mse(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (!av.same_shape(bv)) shape_mismatch("mean-squared-error", av, bv);
    double n = static_cast<double>(av.numel());
    double acc = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) {
        double dv = av.data[i] - bv.data[i];
        acc += dv * dv;
    }
    return make_node(Tensor::scalar(acc / n), "mean-squared-error", {a, b},
                     [n](Node& nd) {
                         const Tensor& av2 = nd.parents[0]->value;
                         const Tensor& bv2 = nd.parents[1]->value;
                         double g = nd.grad.data[0] * 2.0 / n;
                         if (nd.parents[0]->requires_grad) {
                             Tensor ga = av2;
                             for (size_t i = 0; i < ga.data.size(); ++i)
                                 ga.data[i] = g * (av2.data[i] - bv2.data[i]);
                             nd.parents[0]->accumulate(ga);
                         }
                         if (nd.parents[1]->requires_grad) {
                             Tensor gb = bv2;
                             for (size_t i = 0; i < gb.data.size(); ++i)
                                 gb.data[i] = -g * (av2.data[i] - bv2.data[i]);
                             nd.parents[1]->accumulate(gb);
                         }
                     });
}

Var kl_divergence_rows(const Var& p, const Var& q,
                       const std::vector<double>& row_weights) {
    const Tensor& pv = p->value;
    const Tensor& qv = q->value;
    if (!pv.same_shape(qv)) shape_mismatch("kl-divergence", pv, qv);
    int d = pv.dim(pv.rank() - 1);
    int rows = static_cast<int>(pv.numel() / d);
    if (static_cast<int>(row_weights.size()) != rows) {
        throw ShapeError("kl-divergence: row weight count mismatch");
    }
    for (double v : pv.data)
        if (v < 0.0) throw NumericError("kl-divergence: negative probability in p");
    for (double v : qv.data)
        if (v < 0.0) throw NumericError("kl-divergence: negative probability in q");
    double wsum = 0.0;
    for (double w : row_weights) wsum += w;
    if (wsum <= 0.0) throw NumericError("kl-divergence: zero total row weight");
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) {
        if (row_weights[static_cast<size_t>(r)] == 0.0) continue;
        double row = 0.0;
        for (int j = 0; j < d; ++j) {
            double pj = pv.data[static_cast<size_t>(r) * d + j];
            if (pj <= 0.0) continue;
            double qj = std::max(qv.data[static_cast<size_t>(r) * d + j], kProbFloor);
            row += pj * (std::log(pj) - std::log(qj));
        }
        acc += row_weights[static_cast<size_t>(r)] * row;
    }
    auto back = [rows, d, row_weights, wsum](Node& n) {
        const Tensor& pv2 = n.parents[0]->value;
        const Tensor& qv2 = n.parents[1]->value;
        double g = n.grad.data[0] / wsum;
        if (n.parents[0]->requires_grad) {
            Tensor gp = Tensor::zeros(pv2.shape);
            for (int r = 0; r < rows; ++r) {
                double w = row_weights[static_cast<size_t>(r)];
                if (w == 0.0) continue;
                for (int j = 0; j < d; ++j) {
                    size_t idx = static_cast<size_t>(r) * d + j;
                    double pj = pv2.data[idx];
                    if (pj <= kProbFloor) continue;
                    double qj = std::max(qv2.data[idx], kProbFloor);
                    gp.data[idx] = g * w * (std::log(pj) - std::log(qj) + 1.0);
                }
            }
            n.parents[0]->accumulate(gp);
        }
        if (n.parents[1]->requires_grad) {
            Tensor gq = Tensor::zeros(qv2.shape);
            for (int r = 0; r < rows; ++r) {
                double w = row_weights[static_cast<size_t>(r)];
                if (w == 0.0) continue;
                for (int j = 0; j < d; ++j) {
                    size_t idx = static_cast<size_t>(r) * d + j;
                    double pj = pv2.data[idx];
                    if (pj <= 0.0) continue;
                    double qj = qv2.data[idx];
                    if (qj < kProbFloor) continue;  // clipped region is flat
                    gq.data[idx] = -g * w * pj / qj;
                }
            }
            n.parents[1]->accumulate(gq);
        }
    };
    return make_node(Tensor::scalar(acc / wsum), "kl-divergence", {p, q},
                     std::move(back));
}

Var kl_divergence(const Var& p, const Var& q) {
    int d = p->value.dim(p->value.rank() - 1);
    int rows = static_cast<int>(p->value.numel() / d);
    return kl_divergence_rows(p, q, std::vector<double>(static_cast<size_t>(rows), 1.0));
}

Var dropout(const Var& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw NumericError("dropout: rate must be in [0, 1)");
    }
    if (rate == 0.0) return x;
    Tensor mask = x->value;
    double keep = 1.0 - rate;
    for (auto& v : mask.data) v = (rng.uniform() >= rate) ? 1.0 / keep : 0.0;
    Tensor out = x->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
    return make_node(std::move(out), "dropout", {x}, [mask](Node& n) {
        Tensor g = n.grad;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= mask.data[i];
        n.parents[0]->accumulate(g);
    });
}

Var max_pool1d(const Var& x, int k) {
    const Tensor& xv = x->value;
    if (xv.rank() != 2) throw ShapeError("max-pool1d: input must be rank 2");
    if (k < 1) throw ShapeError("max-pool1d: window must be >= 1");
    int t = xv.dim(0), d = xv.dim(1);
    Tensor out({t, d});
    std::vector<int> argmax(static_cast<size_t>(t) * d);
    for (int i = 0; i < t; ++i) {
        int lo = std::max(0, i - k + 1);
        for (int c = 0; c < d; ++c) {
            double best = xv.at(lo, c);
            int bestj = lo;
            for (int j = lo + 1; j <= i; ++j) {
                if (xv.at(j, c) > best) {
                    best = xv.at(j, c);
                    bestj = j;
                }
            }
            out.at(i, c) = best;
            argmax[static_cast<size_t>(i) * d + c] = bestj;
        }
    }
    return make_node(std::move(out), "max-pool1d", {x}, [t, d, argmax](Node& n) {
        Tensor gx({t, d});
        for (int i = 0; i < t; ++i)
            for (int c = 0; c < d; ++c)
                gx.at(argmax[static_cast<size_t>(i) * d + c], c) += n.grad.at(i, c);
        n.parents[0]->accumulate(gx);
    });
}

Var avg_pool1d(const Var& x, int k) {
    const Tensor& xv = x->value;
    if (xv.rank() != 2) throw ShapeError("avg-pool1d: input must be rank 2");
    if (k < 1) throw ShapeError("avg-pool1d: window must be >= 1");
    int t = xv.dim(0), d = xv.dim(1);
    Tensor out({t, d});
    for (int i = 0; i < t; ++i) {
        int lo = std::max(0, i - k + 1);
        for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int j = lo; j <= i; ++j) acc += xv.at(j, c);
            out.at(i, c) = acc / k;
        }
    }
    return make_node(std::move(out), "avg-pool1d", {x}, [t, d, k](Node& n) {
        Tensor gx({t, d});
        for (int i = 0; i < t; ++i) {
            int lo = std::max(0, i - k + 1);
            for (int c = 0; c < d; ++c) {
                double g = n.grad.at(i, c) / k;
                for (int j = lo; j <= i; ++j) gx.at(j, c) += g;
            }
        }
        n.parents[0]->accumulate(gx);
    });
}

Var attention(const Var& q, const Var& k, const Var& v,
              const std::vector<double>* key_valid) {
    const Tensor& qv = q->value;
    const Tensor& kv = k->value;
    const Tensor& vv = v->value;
    if (qv.rank() != 2 || !qv.same_shape(kv) || !qv.same_shape(vv)) {
        shape_mismatch("attention", qv, kv);
    }
    int t = qv.dim(0), dh = qv.dim(1);
    if (key_valid && static_cast<int>(key_valid->size()) != t) {
        throw ShapeError("attention: key mask length mismatch");
    }
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    // A[i][j] over j <= i with invalid keys excluded; rows with no valid key
    // produce a zero output row.
    Tensor a({t, t});
    for (int i = 0; i < t; ++i) {
        double mx = -1e300;
        bool any = false;
        for (int j = 0; j <= i; ++j) {
            if (key_valid && (*key_valid)[static_cast<size_t>(j)] == 0.0) continue;
            double s = 0.0;
            for (int c = 0; c < dh; ++c) s += qv.at(i, c) * kv.at(j, c);
            s *= inv_scale;
            a.at(i, j) = s;
            mx = std::max(mx, s);
            any = true;
        }
        if (!any) continue;
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
            if (key_valid && (*key_valid)[static_cast<size_t>(j)] == 0.0) {
                a.at(i, j) = 0.0;
                continue;
            }
            a.at(i, j) = std::exp(a.at(i, j) - mx);
            z += a.at(i, j);
        }
        for (int j = 0; j <= i; ++j) a.at(i, j) /= z;
    }
    Tensor out({t, dh});
    for (int i = 0; i < t; ++i)
        for (int j = 0; j <= i; ++j) {
            double w = a.at(i, j);
            if (w == 0.0) continue;
            for (int c = 0; c < dh; ++c) out.at(i, c) += w * vv.at(j, c);
        }
    auto back = [t, dh, a, inv_scale](Node& n) {
        const Tensor& qv2 = n.parents[0]->value;
        const Tensor& kv2 = n.parents[1]->value;
        const Tensor& vv2 = n.parents[2]->value;
        Tensor gq({t, dh});
        Tensor gk({t, dh});
        Tensor gv({t, dh});
        Tensor ds({t, t});
        for (int i = 0; i < t; ++i) {
            // dA then softmax backward within the row
            double dotv = 0.0;
            for (int j = 0; j <= i; ++j) {
                double da = 0.0;
                for (int c = 0; c < dh; ++c) da += n.grad.at(i, c) * vv2.at(j, c);
                ds.at(i, j) = da;
                dotv += da * a.at(i, j);
            }
            for (int j = 0; j <= i; ++j)
                ds.at(i, j) = a.at(i, j) * (ds.at(i, j) - dotv);
            for (int j = 0; j <= i; ++j) {
                double w = a.at(i, j);
                if (w != 0.0)
                    for (int c = 0; c < dh; ++c) gv.at(j, c) += w * n.grad.at(i, c);
                double dsij = ds.at(i, j) * inv_scale;
                if (dsij == 0.0) continue;
                for (int c = 0; c < dh; ++c) {
                    gq.at(i, c) += dsij * kv2.at(j, c);
                    gk.at(j, c) += dsij * qv2.at(i, c);
                }
            }
        }
        n.parents[0]->accumulate(gq);
        n.parents[1]->accumulate(gk);
        n.parents[2]->accumulate(gv);
    };
    return make_node(std::move(out), "attention", {q, k, v}, std::move(back));
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    return make_node(Tensor::scalar(acc), "sum", {x}, [](Node& n) {
        Tensor g = Tensor::full(n.parents[0]->value.shape, n.grad.data[0]);
        n.parents[0]->accumulate(g);
    });
}

Var mean(const Var& x) {
    double nn = static_cast<double>(x->value.numel());
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    return make_node(Tensor::scalar(acc / nn), "mean", {x}, [nn](Node& n) {
        Tensor g = Tensor::full(n.parents[0]->value.shape, n.grad.data[0] / nn);
        n.parents[0]->accumulate(g);
    });
}

Var nll_rows(const Var& probs, const std::vector<int>& targets,
             const std::vector<double>& row_weights) {
    const Tensor& pv = probs->value;
    if (pv.rank() != 2) throw ShapeError("nll: probs must be rank 2");
    int rows = pv.dim(0), d = pv.dim(1);
    if (static_cast<int>(targets.size()) != rows ||
        static_cast<int>(row_weights.size()) != rows) {
        throw ShapeError("nll: target/weight count mismatch");
    }
    double wsum = 0.0;
    for (double w : row_weights) wsum += w;
    if (wsum <= 0.0) throw NumericError("nll: zero total row weight");
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) {
        double w = row_weights[static_cast<size_t>(r)];
        if (w == 0.0) continue;
        int tgt = targets[static_cast<size_t>(r)];
        if (tgt < 0 || tgt >= d) throw ShapeError("nll: target out of range");
        acc -= w * std::log(std::max(pv.at(r, tgt), kProbFloor));
    }
    auto back = [targets, row_weights, wsum](Node& n) {
        const Tensor& pv2 = n.parents[0]->value;
        Tensor gp = Tensor::zeros(pv2.shape);
        double g = n.grad.data[0] / wsum;
        for (size_t r = 0; r < targets.size(); ++r) {
            double w = row_weights[r];
            if (w == 0.0) continue;
            double p = pv2.at(static_cast<int>(r), targets[r]);
            if (p < kProbFloor) continue;
            gp.at(static_cast<int>(r), targets[r]) = -g * w / p;
        }
        n.parents[0]->accumulate(gp);
    };
    return make_node(Tensor::scalar(acc / wsum), "nll", {probs}, std::move(back));
}

Var weighted_sum(const std::vector<Var>& xs, const Var& w) {
    if (xs.empty()) throw ShapeError("weighted_sum: empty operand list");
    const Tensor& wv = w->value;
    if (wv.rank() != 1 || wv.dim(0) != static_cast<int>(xs.size())) {
        throw ShapeError("weighted_sum: weight length " + wv.shape_str() +
                         " vs " + std::to_string(xs.size()) + " operands");
    }
    Tensor out = Tensor::zeros(xs[0]->value.shape);
    for (size_t i = 0; i < xs.size(); ++i) {
        if (!xs[i]->value.same_shape(out)) shape_mismatch("weighted_sum", out, xs[i]->value);
        double wi = wv.at(static_cast<int>(i));
        if (wi == 0.0) continue;  // keeps one-hot forwards bitwise exact
        for (size_t j = 0; j < out.data.size(); ++j)
            out.data[j] += wi * xs[i]->value.data[j];
    }
    std::vector<Var> parents = xs;
    parents.push_back(w);
    int nx = static_cast<int>(xs.size());
    return make_node(std::move(out), "weighted_sum", std::move(parents), [nx](Node& n) {
        const Var& wn = n.parents[static_cast<size_t>(nx)];
        const Tensor& wv2 = wn->value;
        for (int i = 0; i < nx; ++i) {
            const Var& xi = n.parents[static_cast<size_t>(i)];
            if (xi->requires_grad && wv2.at(i) != 0.0) {
                Tensor g = n.grad;
                for (auto& v : g.data) v *= wv2.at(i);
                xi->accumulate(g);
            }
        }
        if (wn->requires_grad) {
            Tensor gw({nx});
            for (int i = 0; i < nx; ++i) {
                const Tensor& xi = n.parents[static_cast<size_t>(i)]->value;
                double acc = 0.0;
                for (size_t j = 0; j < xi.data.size(); ++j)
                    acc += n.grad.data[j] * xi.data[j];
                gw.at(i) = acc;
            }
            wn->accumulate(gw);
        }
    });
}

Var dot(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 1 || !av.same_shape(bv)) shape_mismatch("dot", av, bv);
    double acc = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) acc += av.data[i] * bv.data[i];
    return make_node(Tensor::scalar(acc), "dot", {a, b}, [](Node& n) {
        const Tensor& av2 = n.parents[0]->value;
        const Tensor& bv2 = n.parents[1]->value;
        double g = n.grad.data[0];
        if (n.parents[0]->requires_grad) {
            Tensor ga = bv2;
            for (auto& v : ga.data) v *= g;
            n.parents[0]->accumulate(ga);
        }
        if (n.parents[1]->requires_grad) {
            Tensor gb = av2;
            for (auto& v : gb.data) v *= g;
            n.parents[1]->accumulate(gb);
        }
    });
}

Var straight_through(const Var& y) {
    const Tensor& yv = y->value;
    if (yv.rank() != 1) throw ShapeError("straight_through: input must be rank 1");
    int best = 0;
    for (int i = 1; i < yv.dim(0); ++i)
        if (yv.at(i) > yv.at(best)) best = i;
    Tensor out = Tensor::zeros(yv.shape);
    out.at(best) = 1.0;
    return make_node(std::move(out), "straight_through", {y}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
    });
}

Var slice_cols(const Var& x, int c0, int c1) {
    const Tensor& xv = x->value;
    if (xv.rank() != 2 || c0 < 0 || c1 > xv.dim(1) || c0 >= c1) {
        throw ShapeError("slice_cols: bad range on " + xv.shape_str());
    }
    int t = xv.dim(0), w = c1 - c0;
    Tensor out({t, w});
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < w; ++j) out.at(i, j) = xv.at(i, c0 + j);
    return make_node(std::move(out), "slice_cols", {x}, [t, w, c0](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < w; ++j) g.at(i, c0 + j) = n.grad.at(i, j);
        n.parents[0]->accumulate(g);
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty operand list");
    int t = xs[0]->value.dim(0);
    int total = 0;
    for (const auto& x : xs) {
        if (x->value.rank() != 2 || x->value.dim(0) != t) {
            shape_mismatch("concat_cols", xs[0]->value, x->value);
        }
        total += x->value.dim(1);
    }
    Tensor out({t, total});
    int off = 0;
    for (const auto& x : xs) {
        int w = x->value.dim(1);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < w; ++j) out.at(i, off + j) = x->value.at(i, j);
        off += w;
    }
    return make_node(std::move(out), "concat_cols", xs, [t](Node& n) {
        int off2 = 0;
        for (auto& p : n.parents) {
            int w = p->value.dim(1);
            if (p->requires_grad) {
                Tensor g({t, w});
                for (int i = 0; i < t; ++i)
                    for (int j = 0; j < w; ++j) g.at(i, j) = n.grad.at(i, off2 + j);
                p->accumulate(g);
            }
            off2 += w;
        }
    });
}

Var mask_rows(const Var& x, const std::vector<double>& row_mask) {
    const Tensor& xv = x->value;
    if (xv.rank() != 2 || static_cast<int>(row_mask.size()) != xv.dim(0)) {
        throw ShapeError("mask_rows: mask length mismatch on " + xv.shape_str());
    }
    int t = xv.dim(0), d = xv.dim(1);
    Tensor out = xv;
    for (int i = 0; i < t; ++i) {
        double m = row_mask[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j) out.at(i, j) *= m;
    }
    return make_node(std::move(out), "mask_rows", {x}, [row_mask, t, d](Node& n) {
        Tensor g = n.grad;
        for (int i = 0; i < t; ++i) {
            double m = row_mask[static_cast<size_t>(i)];
            for (int j = 0; j < d; ++j) g.at(i, j) *= m;
        }
        n.parents[0]->accumulate(g);
    });
}

// ---- backward ---------------------------------------------------------------

namespace {

// Iterative post-order DFS over nodes that require grad.
std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    if (!root->requires_grad) return order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

void backward(const Var& root) {
    if (!root->value.is_scalar()) {
        throw ShapeError("backward: root must be scalar, got " +
                         root->value.shape_str());
    }
    if (!root->requires_grad) return;
    auto order = topo_order(root);
    root->accumulate(Tensor::scalar(1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad()) n->backprop(*n);
    }
}

std::vector<Var> parameters(const Var& root) {
    std::vector<Var> out;
    std::unordered_set<Node*> seen;
    std::vector<Var> stack{root};
    seen.insert(root.get());
    while (!stack.empty()) {
        Var v = stack.back();
        stack.pop_back();
        if (v->requires_grad && v->parents.empty() && v->op == std::string("param")) {
            out.push_back(v);
        }
        for (const auto& p : v->parents) {
            if (!seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back(p);
            }
        }
    }
    return out;
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) p->grad = Tensor();
}

double finite_difference_check(const std::function<Var(const Var&)>& fn,
                               const Tensor& point, double eps) {
    if (eps <= 0.0) throw NumericError("finite_difference_check: eps must be > 0");
    Var x = param(point);
    Var loss = fn(x);
    if (!loss->value.is_scalar()) {
        throw ShapeError("finite_difference_check: fn must be scalar-valued");
    }
    backward(loss);
    Tensor analytic = x->has_grad() ? x->grad : Tensor::zeros(point.shape);

    auto eval = [&](const Tensor& p) {
        Var xp = constant(p);
        Var l = fn(xp);
        double v = l->value.data[0];
        if (!std::isfinite(v)) {
            throw NumericError("finite_difference_check: fn non-finite at perturbed point");
        }
        return v;
    };

    double max_rel = 0.0;
    Tensor probe = point;
    for (size_t i = 0; i < probe.data.size(); ++i) {
        double orig = probe.data[i];
        probe.data[i] = orig + eps;
        double fp = eval(probe);
        probe.data[i] = orig - eps;
        double fm = eval(probe);
        probe.data[i] = orig;
        double numeric = (fp - fm) / (2.0 * eps);
        double a = analytic.data[i];
        double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// ---- op library --------------------------------------------------------------

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scl = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = scl * rng.normal();
    return t;
}

// Project op output to a scalar through a fixed random functional so wrong
// cross-terms in the gradient cannot cancel.
Var project(const Var& y, Rng& rng) {
    Tensor w = y->value;
    for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
    return sum(cmul(y, w));
}

std::vector<GradCheckCase> unary_cases(
    Rng& rng, std::vector<int> shape,
    const std::function<Var(const Var&)>& op, double scl = 1.0) {
    Tensor x = random_tensor(rng, std::move(shape), scl);
    uint64_t pseed = rng.next_u64();
    auto build = [op, pseed](const Var& v) {
        Rng prng(pseed);
        return project(op(v), prng);
    };
    return {{"input", x, build}};
}

}  // namespace

const std::vector<OpInfo>& op_library() {
    static const std::vector<OpInfo> ops = [] {
        std::vector<OpInfo> v;

        v.push_back({"add", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            Tensor a = random_tensor(rng, {3, 4});
            Tensor b = random_tensor(rng, {3, 4});
            Tensor bias = random_tensor(rng, {4});
            uint64_t s1 = rng.next_u64(), s2 = rng.next_u64(), s3 = rng.next_u64();
            cases.push_back({"lhs", a, [b, s1](const Var& x) {
                Rng pr(s1);
                return project(add(x, constant(b)), pr);
            }});
            cases.push_back({"rhs", b, [a, s2](const Var& x) {
                Rng pr(s2);
                return project(add(constant(a), x), pr);
            }});
            cases.push_back({"row-broadcast", bias, [a, s3](const Var& x) {
                Rng pr(s3);
                return project(add(constant(a), x), pr);
            }});
            return cases;
        }});

        v.push_back({"multiply-by-scalar", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            Tensor a = random_tensor(rng, {2, 3});
            Tensor s = Tensor::scalar(rng.uniform(-2.0, 2.0));
            uint64_t s1 = rng.next_u64(), s2 = rng.next_u64();
            cases.push_back({"tensor", a, [s, s1](const Var& x) {
                Rng pr(s1);
                return project(scale_by(x, constant(s)), pr);
            }});
            cases.push_back({"scalar", s, [a, s2](const Var& x) {
                Rng pr(s2);
                return project(scale_by(constant(a), x), pr);
            }});
            return cases;
        }});

        v.push_back({"matrix-multiply", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            Tensor a = random_tensor(rng, {3, 4});
            Tensor b = random_tensor(rng, {4, 2});
            uint64_t s1 = rng.next_u64(), s2 = rng.next_u64();
            cases.push_back({"lhs", a, [b, s1](const Var& x) {
                Rng pr(s1);
                return project(matmul(x, constant(b)), pr);
            }});
            cases.push_back({"rhs", b, [a, s2](const Var& x) {
                Rng pr(s2);
                return project(matmul(constant(a), x), pr);
            }});
            return cases;
        }});

        v.push_back({"embedding-gather", [](Rng& rng) {
            Tensor table = random_tensor(rng, {6, 3});
            std::vector<int> ids;
            for (int i = 0; i < 5; ++i) ids.push_back(rng.uniform_int(6));
            uint64_t s1 = rng.next_u64();
            std::vector<GradCheckCase> cases;
            cases.push_back({"table", table, [ids, s1](const Var& x) {
                Rng pr(s1);
                return project(embedding_gather(x, ids), pr);
            }});
            return cases;
        }});

        v.push_back({"causal-dilated-conv1d", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            int dil = 1 + rng.uniform_int(3);
            Tensor x = random_tensor(rng, {7, 3});
            Tensor k = random_tensor(rng, {3, 3, 2}, 0.5);
            Tensor b = random_tensor(rng, {2}, 0.3);
            uint64_t s1 = rng.next_u64(), s2 = rng.next_u64(), s3 = rng.next_u64();
            cases.push_back({"input", x, [k, b, dil, s1](const Var& v) {
                Rng pr(s1);
                return project(causal_dilated_conv1d(v, constant(k), constant(b), dil), pr);
            }});
            cases.push_back({"kernel", k, [x, b, dil, s2](const Var& v) {
                Rng pr(s2);
                return project(causal_dilated_conv1d(constant(x), v, constant(b), dil), pr);
            }});
            cases.push_back({"bias", b, [x, k, dil, s3](const Var& v) {
                Rng pr(s3);
                return project(causal_dilated_conv1d(constant(x), constant(k), v, dil), pr);
            }});
            return cases;
        }});

        v.push_back({"relu", [](Rng& rng) {
            // keep inputs away from the kink
            Tensor x = random_tensor(rng, {3, 5});
            for (auto& d : x.data)
                if (std::abs(d) < 1e-3) d = d < 0 ? d - 1e-3 : d + 1e-3;
            uint64_t s1 = rng.next_u64();
            std::vector<GradCheckCase> cases;
            cases.push_back({"input", x, [s1](const Var& v) {
                Rng pr(s1);
                return project(relu(v), pr);
            }});
            return cases;
        }});

        v.push_back({"layer-norm", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            Tensor x = random_tensor(rng, {4, 6});
            Tensor g = random_tensor(rng, {6}, 0.5);
            for (auto& d : g.data) d += 1.0;
            Tensor b = random_tensor(rng, {6}, 0.3);
            uint64_t s1 = rng.next_u64(), s2 = rng.next_u64(), s3 = rng.next_u64();
            cases.push_back({"input", x, [g, b, s1](const Var& v) {
                Rng pr(s1);
                return project(layer_norm(v, constant(g), constant(b)), pr);
            }});
            cases.push_back({"gain", g, [x, b, s2](const Var& v) {
                Rng pr(s2);
                return project(layer_norm(constant(x), v, constant(b)), pr);
            }});
            cases.push_back({"bias", b, [x, g, s3](const Var& v) {
                Rng pr(s3);
                return project(layer_norm(constant(x), constant(g), v), pr);
            }});
            return cases;
        }});

        v.push_back({"softmax", [](Rng& rng) {
            Tensor x = random_tensor(rng, {3, 5});
            uint64_t s1 = rng.next_u64();
            std::vector<GradCheckCase> cases;
            cases.push_back({"input", x, [s1](const Var& v) {
                Rng pr(s1);
                return project(softmax(v), pr);
            }});
            return cases;
        }});

        v.push_back({"log", [](Rng& rng) {
            Tensor x = random_tensor(rng, {2, 4});
            for (auto& d : x.data) d = 0.5 + std::abs(d);
            uint64_t s1 = rng.next_u64();
            std::vector<GradCheckCase> cases;
            cases.push_back({"input", x, [s1](const Var& v) {
                Rng pr(s1);
                return project(vlog(v), pr);
            }});
            return cases;
        }});

        v.push_back({"mean-squared-error", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            Tensor a = random_tensor(rng, {3, 4});
            Tensor b = random_tensor(rng, {3, 4});
            cases.push_back({"lhs", a, [b](const Var& x) { return mse(x, constant(b)); }});
            cases.push_back({"rhs", b, [a](const Var& x) { return mse(constant(a), x); }});
            return cases;
        }});

        v.push_back({"kl-divergence", [](Rng& rng) {
            // check through softmax so probed points stay on the simplex
            std::vector<GradCheckCase> cases;
            Tensor la = random_tensor(rng, {3, 4});
            Tensor lb = random_tensor(rng, {3, 4});
            cases.push_back({"p-logits", la, [lb](const Var& x) {
                return kl_divergence(softmax(x), softmax(constant(lb)));
            }});
            cases.push_back({"q-logits", lb, [la](const Var& x) {
                return kl_divergence(softmax(constant(la)), softmax(x));
            }});
            return cases;
        }});

        v.push_back({"dropout", [](Rng& rng) {
            Tensor x = random_tensor(rng, {4, 4});
            uint64_t mseed = rng.next_u64();
            uint64_t s1 = rng.next_u64();
            std::vector<GradCheckCase> cases;
            cases.push_back({"input", x, [mseed, s1](const Var& v) {
                Rng mask_rng(mseed);  // same mask on every evaluation
                Rng pr(s1);
                return project(dropout(v, 0.4, mask_rng), pr);
            }});
            return cases;
        }});

        v.push_back({"max-pool1d", [](Rng& rng) {
            return unary_cases(rng, {6, 3}, [](const Var& v) { return max_pool1d(v, 3); });
        }});

        v.push_back({"avg-pool1d", [](Rng& rng) {
            return unary_cases(rng, {6, 3}, [](const Var& v) { return avg_pool1d(v, 3); });
        }});

        v.push_back({"attention", [](Rng& rng) {
            std::vector<GradCheckCase> cases;
            Tensor q = random_tensor(rng, {5, 4}, 0.7);
            Tensor k = random_tensor(rng, {5, 4}, 0.7);
            Tensor vv = random_tensor(rng, {5, 4}, 0.7);
            uint64_t s1 = rng.next_u64(), s2 = rng.next_u64(), s3 = rng.next_u64();
            cases.push_back({"query", q, [k, vv, s1](const Var& x) {
                Rng pr(s1);
                return project(attention(x, constant(k), constant(vv)), pr);
            }});
            cases.push_back({"key", k, [q, vv, s2](const Var& x) {
                Rng pr(s2);
                return project(attention(constant(q), x, constant(vv)), pr);
            }});
            cases.push_back({"value", vv, [q, k, s3](const Var& x) {
                Rng pr(s3);
                return project(attention(constant(q), constant(k), x), pr);
            }});
            return cases;
        }});

        v.push_back({"sum", [](Rng& rng) {
            Tensor x = random_tensor(rng, {2, 3, 2});
            std::vector<GradCheckCase> cases;
            cases.push_back({"input", x, [](const Var& v) { return sum(v); }});
            return cases;
        }});

        v.push_back({"mean", [](Rng& rng) {
            Tensor x = random_tensor(rng, {3, 4});
            std::vector<GradCheckCase> cases;
            cases.push_back({"input", x, [](const Var& v) { return mean(v); }});
            return cases;
        }});

        return v;
    }();
    return ops;
}

}  // namespace adarec
