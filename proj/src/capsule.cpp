#include "capsnet/capsule.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "capsnet/kernels.hpp"
#include "capsnet/ops.hpp"

namespace capsnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct VoteDims {
    std::size_t n_in, n_out, d_out, d_in;
};

VoteDims vote_dims(const Shape& u, const Shape& W) {
    if (W.size() != 4) throw ShapeError("capsule transforms must be n_in x n_out x d_out x d_in, got " + shape_str(W));
    if (u.size() != 2) throw ShapeError("capsule grid must be n_capsules x dim, got " + shape_str(u));
    if (u[0] != W[0] || u[1] != W[3])
        throw ShapeError("capsule grid " + shape_str(u) + " does not match transforms " + shape_str(W));
    return {W[0], W[1], W[2], W[3]};
}

void check_routing_shapes(const Shape& b, const Shape& votes, const Shape& v) {
    if (votes.size() != 3 || b.size() != 2 || v.size() != 2 || b[0] != votes[0] || b[1] != votes[1] ||
        v[0] != votes[1] || v[1] != votes[2])
        throw ShapeError("routing shapes do not compose: logits " + shape_str(b) + ", votes " + shape_str(votes) +
                         ", outputs " + shape_str(v));
}

template <typename T>
void squash_row(const T* s, T* out, std::size_t d) {
    T sq = 0;
    for (std::size_t k = 0; k < d; ++k) sq += s[k] * s[k];
    if (sq == T(0)) {
        for (std::size_t k = 0; k < d; ++k) out[k] = T(0);
        return;
    }
    const T n = std::sqrt(sq);
    const T f = n / (T(1) + sq);
    for (std::size_t k = 0; k < d; ++k) out[k] = f * s[k];
}

}  // namespace

template <typename T>
Tensor<T> squash(const Tensor<T>& s) {
    if (s.empty()) return s;
    const std::size_t d = s.shape().back();
    Tensor<T> out(s.shape());
    for (std::size_t r = 0; r < s.size() / d; ++r) squash_row(s.ptr() + r * d, out.ptr() + r * d, d);
    return out;
}

template <typename T>
Tensor<T> compute_votes(const Tensor<T>& u, const Tensor<T>& W) {
    const VoteDims d = vote_dims(u.shape(), W.shape());
    Tensor<T> out(Shape{d.n_in, d.n_out, d.d_out});
    const std::size_t rows = d.n_out * d.d_out;
    for (std::size_t i = 0; i < d.n_in; ++i) {
        Eigen::Map<const RowMat<T>> Wi(W.ptr() + i * rows * d.d_in, rows, d.d_in);
        Eigen::Map<const Vec<T>> ui(u.ptr() + i * d.d_in, d.d_in);
        Eigen::Map<Vec<T>> vi(out.ptr() + i * rows, rows);
        vi.noalias() = Wi * ui;
    }
    return out;
}

template <typename T>
Tensor<T> coupling_from_logits(const Tensor<T>& b) {
    if (b.rank() != 2) throw ShapeError("routing logits must be n_in x n_out, got " + shape_str(b.shape()));
    return softmax(b);
}

template <typename T>
Tensor<T> routing_update(const Tensor<T>& b, const Tensor<T>& votes, const Tensor<T>& v) {
    check_routing_shapes(b.shape(), votes.shape(), v.shape());
    const std::size_t n_in = votes.dim(0), n_out = votes.dim(1), d = votes.dim(2);
    Tensor<T> out = b;
    for (std::size_t i = 0; i < n_in; ++i)
        for (std::size_t j = 0; j < n_out; ++j) {
            T dot = 0;
            for (std::size_t k = 0; k < d; ++k) dot += votes(i, j, k) * v(j, k);
            out(i, j) += dot;
        }
    return out;
}

template <typename T>
RoutingState<T> dynamic_routing(const Tensor<T>& votes, int iterations) {
    if (iterations < 1) throw ContractError("dynamic routing needs at least one iteration");
    if (votes.rank() != 3) throw ShapeError("votes must be n_in x n_out x d_out, got " + shape_str(votes.shape()));
    const std::size_t n_in = votes.dim(0), n_out = votes.dim(1), d = votes.dim(2);
    RoutingState<T> st{votes, Tensor<T>(Shape{n_in, n_out}), {}, {}, {}};
    for (int it = 0; it < iterations; ++it) {
        st.couplings = coupling_from_logits(st.logits);
        st.totals = Tensor<T>(Shape{n_out, d});
        for (std::size_t i = 0; i < n_in; ++i)
            for (std::size_t j = 0; j < n_out; ++j) {
                const T c = st.couplings(i, j);
                for (std::size_t k = 0; k < d; ++k) st.totals(j, k) += c * votes(i, j, k);
            }
        st.outputs = squash(st.totals);
        if (it + 1 < iterations) st.logits = routing_update(st.logits, votes, st.outputs);
    }
    return st;
}

template <typename T>
Tensor<T> primary_caps(const Tensor<T>& maps, std::size_t n_types, std::size_t dim) {
    Tape<T> tape(false);
    Var out = ops::primary_caps(tape, tape.constant(maps), n_types, dim);
    return tape.value(out);
}

namespace ops {

template <typename T>
Var squash(Tape<T>& tape, Var s) {
    Tensor<T> out = capsnet::squash(tape.value(s));
    return tape.record(OpKind::squash, std::move(out), {s}, [s](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(s);
        Tensor<T>* dx = t.grad_sink(s);
        const std::size_t d = x.shape().back();
        for (std::size_t r = 0; r < x.size() / d; ++r) {
            const T* sv = x.ptr() + r * d;
            const T* gv = g.ptr() + r * d;
            T* dv = dx->ptr() + r * d;
            T sq = 0, sg = 0;
            for (std::size_t k = 0; k < d; ++k) {
                sq += sv[k] * sv[k];
                sg += sv[k] * gv[k];
            }
            if (sq == T(0)) continue;
            const T n = std::sqrt(sq);
            const T a = n / (T(1) + sq);
            // d/dn [n / (1 + n^2)] / n, applied along s
            const T c = (T(1) - sq) / ((T(1) + sq) * (T(1) + sq) * n);
            for (std::size_t k = 0; k < d; ++k) dv[k] += a * gv[k] + c * sg * sv[k];
        }
    });
}

template <typename T>
Var votes(Tape<T>& tape, Var u, Var W) {
    Tensor<T> out = compute_votes(tape.value(u), tape.value(W));
    return tape.record(OpKind::votes, std::move(out), {u, W}, [u, W](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& uv = t.value(u);
        const Tensor<T>& Wv = t.value(W);
        const VoteDims d = vote_dims(uv.shape(), Wv.shape());
        const std::size_t rows = d.n_out * d.d_out;
        Tensor<T>* dW = t.grad_sink(W);
        Tensor<T>* du = t.grad_sink(u);
        for (std::size_t i = 0; i < d.n_in; ++i) {
            Eigen::Map<const Vec<T>> gi(g.ptr() + i * rows, rows);
            if (dW) {
                Eigen::Map<const Vec<T>> ui(uv.ptr() + i * d.d_in, d.d_in);
                Eigen::Map<RowMat<T>> dWi(dW->ptr() + i * rows * d.d_in, rows, d.d_in);
                dWi.noalias() += gi * ui.transpose();
            }
            if (du) {
                Eigen::Map<const RowMat<T>> Wi(Wv.ptr() + i * rows * d.d_in, rows, d.d_in);
                Eigen::Map<Vec<T>> dui(du->ptr() + i * d.d_in, d.d_in);
                dui.noalias() += Wi.transpose() * gi;
            }
        }
    });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var couplings, Var votes) {
    const Tensor<T>& c = tape.value(couplings);
    const Tensor<T>& u = tape.value(votes);
    if (u.rank() != 3 || c.rank() != 2 || c.dim(0) != u.dim(0) || c.dim(1) != u.dim(1))
        throw ShapeError("couplings " + shape_str(c.shape()) + " do not match votes " + shape_str(u.shape()));
    const std::size_t n_in = u.dim(0), n_out = u.dim(1), d = u.dim(2);
    Tensor<T> s(Shape{n_out, d});
    for (std::size_t i = 0; i < n_in; ++i)
        for (std::size_t j = 0; j < n_out; ++j) {
            const T cij = c(i, j);
            for (std::size_t k = 0; k < d; ++k) s(j, k) += cij * u(i, j, k);
        }
    return tape.record(OpKind::weighted_sum, std::move(s), {couplings, votes},
                       [couplings, votes](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& c = t.value(couplings);
                           const Tensor<T>& u = t.value(votes);
                           const std::size_t n_in = u.dim(0), n_out = u.dim(1), d = u.dim(2);
                           Tensor<T>* dc = t.grad_sink(couplings);
                           Tensor<T>* du = t.grad_sink(votes);
                           for (std::size_t i = 0; i < n_in; ++i)
                               for (std::size_t j = 0; j < n_out; ++j) {
                                   if (dc) {
                                       T dot = 0;
                                       for (std::size_t k = 0; k < d; ++k) dot += g(j, k) * u(i, j, k);
                                       (*dc)(i, j) += dot;
                                   }
                                   if (du) {
                                       const T cij = c(i, j);
                                       for (std::size_t k = 0; k < d; ++k) (*du)(i, j, k) += cij * g(j, k);
                                   }
                               }
                       });
}

template <typename T>
Var agreement(Tape<T>& tape, Var votes, Var v) {
    const Tensor<T>& u = tape.value(votes);
    const Tensor<T>& out = tape.value(v);
    const Shape b_shape{u.rank() == 3 ? u.dim(0) : 0, u.rank() == 3 ? u.dim(1) : 0};
    check_routing_shapes(b_shape, u.shape(), out.shape());
    Tensor<T> a = routing_update(Tensor<T>(b_shape), u, out);
    return tape.record(OpKind::agreement, std::move(a), {votes, v}, [votes, v](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& u = t.value(votes);
        const Tensor<T>& vv = t.value(v);
        const std::size_t n_in = u.dim(0), n_out = u.dim(1), d = u.dim(2);
        Tensor<T>* du = t.grad_sink(votes);
        Tensor<T>* dv = t.grad_sink(v);
        for (std::size_t i = 0; i < n_in; ++i)
            for (std::size_t j = 0; j < n_out; ++j) {
                const T gij = g(i, j);
                for (std::size_t k = 0; k < d; ++k) {
                    if (du) (*du)(i, j, k) += gij * vv(j, k);
                    if (dv) (*dv)(j, k) += gij * u(i, j, k);
                }
            }
    });
}

template <typename T>
Var regroup_capsules(Tape<T>& tape, Var feature_maps, std::size_t n_types, std::size_t dim) {
    const Tensor<T>& x = tape.value(feature_maps);
    if (x.rank() != 3) throw ShapeError("primary capsules need C x H x W maps, got " + shape_str(x.shape()));
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (n_types == 0 || dim == 0 || C != n_types * dim)
        throw ShapeError(std::to_string(C) + " feature maps cannot form " + std::to_string(n_types) +
                         " capsule types of dimension " + std::to_string(dim));
    const std::size_t plane = H * W;
    Tensor<T> out(Shape{n_types * plane, dim});
    for (std::size_t type = 0; type < n_types; ++type)
        for (std::size_t p = 0; p < plane; ++p)
            for (std::size_t k = 0; k < dim; ++k) out((type * plane + p), k) = x[(type * dim + k) * plane + p];
    return tape.record(OpKind::regroup, std::move(out), {feature_maps},
                       [feature_maps, n_types, dim, plane](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>* dx = t.grad_sink(feature_maps);
                           for (std::size_t type = 0; type < n_types; ++type)
                               for (std::size_t p = 0; p < plane; ++p)
                                   for (std::size_t k = 0; k < dim; ++k)
                                       (*dx)[(type * dim + k) * plane + p] += g((type * plane + p), k);
                       });
}

template <typename T>
Var primary_caps(Tape<T>& tape, Var feature_maps, std::size_t n_types, std::size_t dim) {
    return squash(tape, regroup_capsules(tape, feature_maps, n_types, dim));
}

template <typename T>
Var row_norms(Tape<T>& tape, Var v) {
    const Tensor<T>& x = tape.value(v);
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.size() / d;
    Tensor<T> out(Shape{rows});
    for (std::size_t r = 0; r < rows; ++r) {
        T sq = 0;
        for (std::size_t k = 0; k < d; ++k) sq += x[r * d + k] * x[r * d + k];
        out[r] = std::sqrt(sq);
    }
    Tensor<T> norms = out;
    return tape.record(OpKind::row_norms, std::move(out), {v}, [v, norms](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(v);
        Tensor<T>* dx = t.grad_sink(v);
        const std::size_t d = x.shape().back();
        for (std::size_t r = 0; r < norms.size(); ++r) {
            if (norms[r] == T(0)) continue;
            const T f = g[r] / norms[r];
            for (std::size_t k = 0; k < d; ++k) (*dx)[r * d + k] += f * x[r * d + k];
        }
    });
}

template <typename T>
RoutingVars<T> dynamic_routing(Tape<T>& tape, Var votes, int iterations) {
    if (iterations < 1) throw ContractError("dynamic routing needs at least one iteration");
    const Shape& vs = tape.shape(votes);
    if (vs.size() != 3) throw ShapeError("votes must be n_in x n_out x d_out, got " + shape_str(vs));
    RoutingVars<T> r{votes, tape.constant(Tensor<T>(Shape{vs[0], vs[1]})), {}, {}, {}};
    for (int it = 0; it < iterations; ++it) {
        r.couplings = ops::softmax(tape, r.logits);
        r.totals = weighted_sum(tape, r.couplings, votes);
        r.outputs = squash(tape, r.totals);
        if (it + 1 < iterations) r.logits = ops::add(tape, r.logits, agreement(tape, votes, r.outputs));
    }
    return r;
}

}  // namespace ops

#define CAPSNET_INSTANTIATE(T)                                                                 \
    template Tensor<T> squash(const Tensor<T>&);                                               \
    template Tensor<T> compute_votes(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> coupling_from_logits(const Tensor<T>&);                                 \
    template Tensor<T> routing_update(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template RoutingState<T> dynamic_routing(const Tensor<T>&, int);                           \
    template Tensor<T> primary_caps(const Tensor<T>&, std::size_t, std::size_t);               \
    template Var ops::squash(Tape<T>&, Var);                                                   \
    template Var ops::votes(Tape<T>&, Var, Var);                                               \
    template Var ops::weighted_sum(Tape<T>&, Var, Var);                                        \
    template Var ops::agreement(Tape<T>&, Var, Var);                                           \
    template Var ops::regroup_capsules(Tape<T>&, Var, std::size_t, std::size_t);               \
    template Var ops::primary_caps(Tape<T>&, Var, std::size_t, std::size_t);                   \
    template Var ops::row_norms(Tape<T>&, Var);                                                \
    template ops::RoutingVars<T> ops::dynamic_routing(Tape<T>&, Var, int);

CAPSNET_INSTANTIATE(float)
CAPSNET_INSTANTIATE(double)
#undef CAPSNET_INSTANTIATE

}  // namespace capsnet
