#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mofs/errors.hpp"
#include "mofs/tensor.hpp"

namespace mofs {
namespace ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the dynamically built computation graph.
struct Node {
    Tensor value;
    Tensor grad;                // allocated lazily in backward()
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop; // scatters this->grad into parents

    explicit Node(Tensor v) : value(std::move(v)) {}

    Tensor& g() {
        if (grad.numel() == 0) grad = Tensor(value.shape());
        return grad;
    }
};

inline Var constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

/// A leaf that accumulates gradients (parameters, or inputs under test).
inline Var leaf(Tensor v) {
    auto n = std::make_shared<Node>(std::move(v));
    n->requires_grad = true;
    return n;
}

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>(std::move(value));
    bool need = false;
    for (const auto& p : parents) need = need || p->requires_grad;
    n->requires_grad = need;
    if (need) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

/// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1.
inline void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw ConfigError("backward: root must be a scalar");
    // Topological order via iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->g()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.numel() > 0) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ConfigError("add: shape mismatch");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ConfigError("sub: shape mismatch");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ConfigError("mul: shape mismatch");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i] * a->value[i];
        }
    });
}

/// Multiply by a compile-time-constant scalar.
inline Var cmul(double c, const Var& x) {
    Tensor out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return make_op(std::move(out), {x}, [x, c](Node& n) {
        Tensor& gx = x->g();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += c * n.grad[i];
    });
}

/// Add a constant scalar elementwise.
inline Var cadd(const Var& x, double c) {
    Tensor out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return make_op(std::move(out), {x}, [x](Node& n) {
        Tensor& gx = x->g();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[i];
    });
}

/// s (shape {1}) times x, broadcast. Used for the learnable step size.
inline Var scalar_mul(const Var& s, const Var& x) {
    if (s->value.numel() != 1) throw ConfigError("scalar_mul: s must be scalar");
    const double sv = s->value[0];
    Tensor out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
    return make_op(std::move(out), {s, x}, [s, x, sv](Node& n) {
        if (s->requires_grad) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) acc += n.grad[i] * x->value[i];
            s->g()[0] += acc;
        }
        if (x->requires_grad) {
            Tensor& gx = x->g();
            for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += sv * n.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Unary maps
// ---------------------------------------------------------------------------

inline Var unary(const Var& x, const std::function<double(double)>& f,
                 const std::function<double(double)>& df) {
    Tensor out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
    return make_op(std::move(out), {x}, [x, df](Node& n) {
        Tensor& gx = x->g();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += df(x->value[i]) * n.grad[i];
    });
}

inline Var square(const Var& x) {
    return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

inline Var sqrt_(const Var& x) {
    return unary(x, [](double v) { return std::sqrt(v); },
                 [](double v) { return 0.5 / std::sqrt(std::max(v, 1e-300)); });
}

inline Var exp_(const Var& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

inline Var log_(const Var& x) {
    return unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

inline Var recip(const Var& x) {
    return unary(x, [](double v) { return 1.0 / v; }, [](double v) { return -1.0 / (v * v); });
}

inline Var sigmoid(const Var& x) {
    return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                 [](double v) {
                     const double s = 1.0 / (1.0 + std::exp(-v));
                     return s * (1.0 - s);
                 });
}

/// Exact GELU, x * Phi(x).
inline Var gelu(const Var& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary(x,
                 [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
                 [](double v) {
                     const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                     const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                     return cdf + v * pdf;
                 });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out(shape, x->value.vec());
    return make_op(std::move(out), {x}, [x](Node& n) {
        Tensor& gx = x->g();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[i];
    });
}

inline Var transpose2(const Var& x) {
    if (x->value.ndim() != 2) throw ConfigError("transpose2: expects 2D");
    const int m = x->value.dim(0), k = x->value.dim(1);
    Tensor out({k, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) out.at(j, i) = x->value.at(i, j);
    return make_op(std::move(out), {x}, [x, m, k](Node& n) {
        Tensor& gx = x->g();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) gx.at(i, j) += n.grad.at(j, i);
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_rows: empty");
    const int d = parts[0]->value.dim(1);
    int n_total = 0;
    for (const auto& p : parts) {
        if (p->value.ndim() != 2 || p->value.dim(1) != d)
            throw ConfigError("concat_rows: width mismatch");
        n_total += p->value.dim(0);
    }
    Tensor out({n_total, d});
    int r = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.numel(),
                  out.data() + static_cast<std::int64_t>(r) * d);
        r += p->value.dim(0);
    }
    return make_op(std::move(out), parts, [parts, d](Node& n) {
        int r0 = 0;
        for (const auto& p : parts) {
            const int rows = p->value.dim(0);
            if (p->requires_grad) {
                Tensor& gp = p->g();
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows) * d; ++i)
                    gp[i] += n.grad[static_cast<std::int64_t>(r0) * d + i];
            }
            r0 += rows;
        }
    });
}

inline Var slice_rows(const Var& x, int r0, int r1) {
    const int d = x->value.dim(1);
    Tensor out({r1 - r0, d});
    std::copy(x->value.data() + static_cast<std::int64_t>(r0) * d,
              x->value.data() + static_cast<std::int64_t>(r1) * d, out.data());
    return make_op(std::move(out), {x}, [x, r0, d](Node& n) {
        Tensor& gx = x->g();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            gx[static_cast<std::int64_t>(r0) * d + i] += n.grad[i];
    });
}

inline Var concat_cols(const Var& a, const Var& b) {
    const int n = a->value.dim(0), da = a->value.dim(1), db = b->value.dim(1);
    if (b->value.dim(0) != n) throw ConfigError("concat_cols: row mismatch");
    Tensor out({n, da + db});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < da; ++j) out.at(i, j) = a->value.at(i, j);
        for (int j = 0; j < db; ++j) out.at(i, da + j) = b->value.at(i, j);
    }
    return make_op(std::move(out), {a, b}, [a, b, n, da, db](Node& nd) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < da; ++j) ga.at(i, j) += nd.grad.at(i, j);
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < db; ++j) gb.at(i, j) += nd.grad.at(i, da + j);
        }
    });
}

// ---------------------------------------------------------------------------
// Matrix products (Eigen-backed)
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
        throw ConfigError("matmul: incompatible shapes " + a->value.shape_str() + " x " +
                          b->value.shape_str());
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor out({m, n});
    ConstMatMap A(a->value.data(), m, k), B(b->value.data(), k, n);
    MatMap(out.data(), m, n).noalias() = A * B;
    return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
        ConstMatMap G(nd.grad.data(), m, n);
        if (a->requires_grad) {
            ConstMatMap B(b->value.data(), k, n);
            MatMap(a->g().data(), m, k).noalias() += G * B.transpose();
        }
        if (b->requires_grad) {
            ConstMatMap A(a->value.data(), m, k);
            MatMap(b->g().data(), k, n).noalias() += A.transpose() * G;
        }
    });
}

/// Per-channel left-multiply by a constant matrix: out_c = M * x_c.
/// x is (C,H,W), M is (P,H), out is (C,P,W).
inline Var channel_lmul(const Mat& M, const Var& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (M.cols() != h) throw ConfigError("channel_lmul: matrix/height mismatch");
    const int p = static_cast<int>(M.rows());
    Tensor out({c, p, w});
    for (int ci = 0; ci < c; ++ci) {
        ConstMatMap X(x->value.data() + static_cast<std::int64_t>(ci) * h * w, h, w);
        MatMap(out.data() + static_cast<std::int64_t>(ci) * p * w, p, w).noalias() = M * X;
    }
    return make_op(std::move(out), {x}, [x, M, c, h, w, p](Node& n) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci) {
            ConstMatMap G(n.grad.data() + static_cast<std::int64_t>(ci) * p * w, p, w);
            MatMap(gx.data() + static_cast<std::int64_t>(ci) * h * w, h, w).noalias() +=
                M.transpose() * G;
        }
    });
}

/// Per-channel right-multiply by a constant matrix transpose: out_c = x_c * M^T.
/// x is (C,H,W), M is (Q,W), out is (C,H,Q).
inline Var channel_rmul_t(const Var& x, const Mat& M) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (M.cols() != w) throw ConfigError("channel_rmul_t: matrix/width mismatch");
    const int q = static_cast<int>(M.rows());
    Tensor out({c, h, q});
    for (int ci = 0; ci < c; ++ci) {
        ConstMatMap X(x->value.data() + static_cast<std::int64_t>(ci) * h * w, h, w);
        MatMap(out.data() + static_cast<std::int64_t>(ci) * h * q, h, q).noalias() =
            X * M.transpose();
    }
    return make_op(std::move(out), {x}, [x, M, c, h, w, q](Node& n) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci) {
            ConstMatMap G(n.grad.data() + static_cast<std::int64_t>(ci) * h * q, h, q);
            MatMap(gx.data() + static_cast<std::int64_t>(ci) * h * w, h, w).noalias() += G * M;
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& x) {
    Tensor out = Tensor::scalar(x->value.sum());
    return make_op(std::move(out), {x}, [x](Node& n) {
        Tensor& gx = x->g();
        const double g = n.grad[0];
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

inline Var mean_all(const Var& x) { return cmul(1.0 / static_cast<double>(x->value.numel()), sum_all(x)); }

/// Column means of an (n,d) matrix -> (1,d). The pooled token vector.
inline Var mean_rows(const Var& x) {
    const int n = x->value.dim(0), d = x->value.dim(1);
    Tensor out({1, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(0, j) += x->value.at(i, j);
    for (int j = 0; j < d; ++j) out.at(0, j) /= n;
    return make_op(std::move(out), {x}, [x, n, d](Node& nd) {
        Tensor& gx = x->g();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) gx.at(i, j) += nd.grad.at(0, j) / n;
    });
}

/// x (n,d) + v (1,d), broadcast over rows.
inline Var add_rowvec(const Var& x, const Var& v) {
    const int n = x->value.dim(0), d = x->value.dim(1);
    if (v->value.numel() != d) throw ConfigError("add_rowvec: width mismatch");
    Tensor out = x->value;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) += v->value[j];
    return make_op(std::move(out), {x, v}, [x, v, n, d](Node& nd) {
        if (x->requires_grad) {
            Tensor& gx = x->g();
            for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += nd.grad[i];
        }
        if (v->requires_grad) {
            Tensor& gv = v->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gv[j] += nd.grad.at(i, j);
        }
    });
}

/// x (n,d) * v (1,d), broadcast over rows.
inline Var mul_rowvec(const Var& x, const Var& v) {
    const int n = x->value.dim(0), d = x->value.dim(1);
    if (v->value.numel() != d) throw ConfigError("mul_rowvec: width mismatch");
    Tensor out = x->value;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) *= v->value[j];
    return make_op(std::move(out), {x, v}, [x, v, n, d](Node& nd) {
        if (x->requires_grad) {
            Tensor& gx = x->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gx.at(i, j) += nd.grad.at(i, j) * v->value[j];
        }
        if (v->requires_grad) {
            Tensor& gv = v->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gv[j] += nd.grad.at(i, j) * x->value.at(i, j);
        }
    });
}

/// x (n,d) scaled per row by s (n,1).
inline Var mul_colvec(const Var& x, const Var& s) {
    const int n = x->value.dim(0), d = x->value.dim(1);
    if (s->value.numel() != n) throw ConfigError("mul_colvec: row mismatch");
    Tensor out = x->value;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) *= s->value[i];
    return make_op(std::move(out), {x, s}, [x, s, n, d](Node& nd) {
        if (x->requires_grad) {
            Tensor& gx = x->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) gx.at(i, j) += nd.grad.at(i, j) * s->value[i];
        }
        if (s->requires_grad) {
            Tensor& gs = s->g();
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = 0; j < d; ++j) acc += nd.grad.at(i, j) * x->value.at(i, j);
                gs[i] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Row-wise softmax and layer norm
// ---------------------------------------------------------------------------

inline Var softmax_rows(const Var& x) {
    const int n = x->value.dim(0), m = x->value.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < m; ++j) mx = std::max(mx, x->value.at(i, j));
        double z = 0.0;
        for (int j = 0; j < m; ++j) {
            out.at(i, j) = std::exp(x->value.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (int j = 0; j < m; ++j) out.at(i, j) /= z;
    }
    auto res = make_op(std::move(out), {x}, nullptr);
    Node* rn = res.get();
    if (res->requires_grad) {
        res->backprop = [x, rn, n, m](Node& nd) {
            Tensor& gx = x->g();
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < m; ++j) dot += nd.grad.at(i, j) * rn->value.at(i, j);
                for (int j = 0; j < m; ++j)
                    gx.at(i, j) += rn->value.at(i, j) * (nd.grad.at(i, j) - dot);
            }
        };
    }
    return res;
}

/// Per-token layer norm over features, no affine parameters.
inline Var layernorm_rows(const Var& x, double eps = 1e-8) {
    const int n = x->value.dim(0), d = x->value.dim(1);
    Tensor out({n, d});
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x->value.at(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = x->value.at(i, j) - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < d; ++j) out.at(i, j) = (x->value.at(i, j) - mu) * is;
    }
    auto res = make_op(std::move(out), {x}, nullptr);
    Node* rn = res.get();
    if (res->requires_grad) {
        res->backprop = [x, rn, n, d, inv_std](Node& nd) {
            Tensor& gx = x->g();
            for (int i = 0; i < n; ++i) {
                double gmean = 0.0, gymean = 0.0;
                for (int j = 0; j < d; ++j) {
                    gmean += nd.grad.at(i, j);
                    gymean += nd.grad.at(i, j) * rn->value.at(i, j);
                }
                gmean /= d;
                gymean /= d;
                const double is = inv_std[static_cast<std::size_t>(i)];
                for (int j = 0; j < d; ++j)
                    gx.at(i, j) +=
                        is * (nd.grad.at(i, j) - gmean - rn->value.at(i, j) * gymean);
            }
        };
    }
    return res;
}

// ---------------------------------------------------------------------------
// Convolution support (im2col) and resampling
// ---------------------------------------------------------------------------

/// 3x3 im2col with zero padding 1: (C,H,W) -> (C*9, H*W).
inline Var im2col3(const Var& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor out({c * 9, h * w});
    for (int ci = 0; ci < c; ++ci)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int row = ci * 9 + (dy + 1) * 3 + (dx + 1);
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        const int sy = y + dy, sx = xx + dx;
                        const double v = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                             ? x->value.at(ci, sy, sx)
                                             : 0.0;
                        out.at(row, y * w + xx) = v;
                    }
            }
    return make_op(std::move(out), {x}, [x, c, h, w](Node& n) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int row = ci * 9 + (dy + 1) * 3 + (dx + 1);
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx) {
                            const int sy = y + dy, sx = xx + dx;
                            if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                gx.at(ci, sy, sx) += n.grad.at(row, y * w + xx);
                        }
                }
    });
}

inline Var avgpool2(const Var& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (h % 2 || w % 2) throw ConfigError("avgpool2: odd spatial dims");
    Tensor out({c, h / 2, w / 2});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h / 2; ++y)
            for (int xx = 0; xx < w / 2; ++xx)
                out.at(ci, y, xx) = 0.25 * (x->value.at(ci, 2 * y, 2 * xx) +
                                            x->value.at(ci, 2 * y, 2 * xx + 1) +
                                            x->value.at(ci, 2 * y + 1, 2 * xx) +
                                            x->value.at(ci, 2 * y + 1, 2 * xx + 1));
    return make_op(std::move(out), {x}, [x, c, h, w](Node& n) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h / 2; ++y)
                for (int xx = 0; xx < w / 2; ++xx) {
                    const double g = 0.25 * n.grad.at(ci, y, xx);
                    gx.at(ci, 2 * y, 2 * xx) += g;
                    gx.at(ci, 2 * y, 2 * xx + 1) += g;
                    gx.at(ci, 2 * y + 1, 2 * xx) += g;
                    gx.at(ci, 2 * y + 1, 2 * xx + 1) += g;
                }
    });
}

inline Var upsample2(const Var& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor out({c, h * 2, w * 2});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out.at(ci, y, xx) = x->value.at(ci, y / 2, xx / 2);
    return make_op(std::move(out), {x}, [x, c, h, w](Node& n) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    gx.at(ci, y / 2, xx / 2) += n.grad.at(ci, y, xx);
    });
}

/// 1D bilinear interpolation matrix from size `src` to size `dst`
/// (align-corners convention).
inline Mat bilinear_matrix(int src, int dst) {
    Mat m = Mat::Zero(dst, src);
    if (src == 1) {
        for (int i = 0; i < dst; ++i) m(i, 0) = 1.0;
        return m;
    }
    for (int i = 0; i < dst; ++i) {
        const double pos = (dst == 1) ? 0.0
                                      : static_cast<double>(i) * (src - 1) / (dst - 1);
        const int lo = std::min(static_cast<int>(pos), src - 2);
        const double t = pos - lo;
        m(i, lo) += 1.0 - t;
        m(i, lo + 1) += t;
    }
    return m;
}

/// Bilinear resize of a (C,H,W) map to (C,H2,W2).
inline Var bilinear_resize(const Var& x, int h2, int w2) {
    const int h = x->value.dim(1), w = x->value.dim(2);
    if (h == h2 && w == w2) return x;
    return channel_rmul_t(channel_lmul(bilinear_matrix(h, h2), x), bilinear_matrix(w, w2));
}

// ---------------------------------------------------------------------------
// Spectral helpers (corner-mode gather / conjugate-symmetric scatter)
// ---------------------------------------------------------------------------

/// Gather the low-frequency corner block: (C,H,W) -> (C, m1*m2).
inline Var gather_corner(const Var& x, int m1, int m2) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (m1 > h || m2 > w) throw ConfigError("gather_corner: modes exceed grid");
    Tensor out({c, m1 * m2});
    for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < m1; ++p)
            for (int q = 0; q < m2; ++q) out.at(ci, p * m2 + q) = x->value.at(ci, p, q);
    return make_op(std::move(out), {x}, [x, c, m1, m2](Node& n) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci)
            for (int p = 0; p < m1; ++p)
                for (int q = 0; q < m2; ++q) gx.at(ci, p, q) += n.grad.at(ci, p * m2 + q);
    });
}

/// Complex mode contraction: y[o,mu] = sum_i w[i,o,mu] * x[i,mu].
/// w is (Cin, Cout, M) flattened, x is (Cin, M), out is (Cout, M).
inline Var mode_contract(const Var& w, const Var& x, int cin, int cout, int modes) {
    if (w->value.numel() != static_cast<std::int64_t>(cin) * cout * modes)
        throw ConfigError("mode_contract: weight size mismatch");
    Tensor out({cout, modes});
    for (int i = 0; i < cin; ++i)
        for (int o = 0; o < cout; ++o) {
            const std::int64_t wbase = (static_cast<std::int64_t>(i) * cout + o) * modes;
            for (int mu = 0; mu < modes; ++mu)
                out.at(o, mu) += w->value[wbase + mu] * x->value.at(i, mu);
        }
    return make_op(std::move(out), {w, x}, [w, x, cin, cout, modes](Node& n) {
        if (w->requires_grad) {
            Tensor& gw = w->g();
            for (int i = 0; i < cin; ++i)
                for (int o = 0; o < cout; ++o) {
                    const std::int64_t wbase = (static_cast<std::int64_t>(i) * cout + o) * modes;
                    for (int mu = 0; mu < modes; ++mu)
                        gw[wbase + mu] += n.grad.at(o, mu) * x->value.at(i, mu);
                }
        }
        if (x->requires_grad) {
            Tensor& gx = x->g();
            for (int i = 0; i < cin; ++i)
                for (int o = 0; o < cout; ++o) {
                    const std::int64_t wbase = (static_cast<std::int64_t>(i) * cout + o) * modes;
                    for (int mu = 0; mu < modes; ++mu)
                        gx.at(i, mu) += w->value[wbase + mu] * n.grad.at(o, mu);
                }
        }
    });
}

/// Scatter corner modes (C, m1*m2) into a full (C,H,W) spectrum with the
/// conjugate-mirror convention. sign=+1 for real parts, -1 for imaginary
/// parts; self-conjugate modes keep only the real part.
inline Var scatter_conj(const Var& o, int m1, int m2, int h, int w, int sign) {
    const int c = o->value.dim(0);
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < m1; ++p)
            for (int q = 0; q < m2; ++q) {
                const int pm = (h - p) % h, qm = (w - q) % w;
                const bool self_conj = (pm == p && qm == q);
                const double v = o->value.at(ci, p * m2 + q);
                if (self_conj) {
                    out.at(ci, p, q) = (sign > 0) ? v : 0.0;
                } else {
                    out.at(ci, p, q) = v;
                    out.at(ci, pm, qm) = sign > 0 ? v : -v;
                }
            }
    return make_op(std::move(out), {o}, [o, c, m1, m2, h, w, sign](Node& n) {
        Tensor& go = o->g();
        for (int ci = 0; ci < c; ++ci)
            for (int p = 0; p < m1; ++p)
                for (int q = 0; q < m2; ++q) {
                    const int pm = (h - p) % h, qm = (w - q) % w;
                    const bool self_conj = (pm == p && qm == q);
                    if (self_conj) {
                        if (sign > 0) go.at(ci, p * m2 + q) += n.grad.at(ci, p, q);
                    } else {
                        go.at(ci, p * m2 + q) +=
                            n.grad.at(ci, p, q) +
                            (sign > 0 ? n.grad.at(ci, pm, qm) : -n.grad.at(ci, pm, qm));
                    }
                }
    });
}

// ---------------------------------------------------------------------------
// Layout conversion between channel maps and token sequences
// ---------------------------------------------------------------------------

/// (C,H,W) map -> (H*W, C) token matrix.
inline Var tokens_from_map(const Var& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int n = h * w;
    Tensor out({n, c});
    for (int ci = 0; ci < c; ++ci)
        for (int t = 0; t < n; ++t) out.at(t, ci) = x->value[static_cast<std::int64_t>(ci) * n + t];
    return make_op(std::move(out), {x}, [x, c, n](Node& nd) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci)
            for (int t = 0; t < n; ++t)
                gx[static_cast<std::int64_t>(ci) * n + t] += nd.grad.at(t, ci);
    });
}

/// (H*W, C) token matrix -> (C,H,W) map.
inline Var map_from_tokens(const Var& x, int h, int w) {
    const int n = x->value.dim(0), c = x->value.dim(1);
    if (n != h * w) throw ConfigError("map_from_tokens: token count mismatch");
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int t = 0; t < n; ++t) out[static_cast<std::int64_t>(ci) * n + t] = x->value.at(t, ci);
    return make_op(std::move(out), {x}, [x, c, n](Node& nd) {
        Tensor& gx = x->g();
        for (int ci = 0; ci < c; ++ci)
            for (int t = 0; t < n; ++t)
                gx.at(t, ci) += nd.grad[static_cast<std::int64_t>(ci) * n + t];
    });
}

// ---------------------------------------------------------------------------
// Scalar-composite helpers
// ---------------------------------------------------------------------------

inline Var dot_all(const Var& a, const Var& b) { return sum_all(mul(a, b)); }

inline Var frobenius(const Var& x) { return sqrt_(sum_all(square(x))); }

/// a/b for scalar Vars.
inline Var scalar_div(const Var& a, const Var& b) {
    if (a->value.numel() != 1 || b->value.numel() != 1)
        throw ConfigError("scalar_div: scalars only");
    Tensor out = Tensor::scalar(a->value[0] / b->value[0]);
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        const double av = a->value[0], bv = b->value[0], g = n.grad[0];
        if (a->requires_grad) a->g()[0] += g / bv;
        if (b->requires_grad) b->g()[0] -= g * av / (bv * bv);
    });
}

} // namespace ad
} // namespace mofs
