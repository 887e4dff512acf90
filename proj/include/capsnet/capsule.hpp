#pragma once

// Capsule computation: squash, vote transform, coupling softmax, logit
// update and iterative routing by agreement, plus the primary-capsule
// regrouping of convolutional feature maps.
//
// Shapes used throughout:
//   capsule grid u         n_in x d_in
//   transforms W           n_in x n_out x d_out x d_in
//   votes u_hat            n_in x n_out x d_out
//   logits b, couplings c  n_in x n_out
//   totals s, outputs v    n_out x d_out

#include <cstddef>

#include "capsnet/tape.hpp"

namespace capsnet {

inline constexpr int kDefaultRoutingIterations = 3;

/// Per-vector squash over the last axis: s * |s| / (1 + |s|^2); zero stays zero.
template <typename T>
Tensor<T> squash(const Tensor<T>& s);

template <typename T>
Tensor<T> compute_votes(const Tensor<T>& u, const Tensor<T>& W);

/// Softmax over output capsules j for every input capsule i.
template <typename T>
Tensor<T> coupling_from_logits(const Tensor<T>& b);

/// b[i][j] + <votes[i][j], v[j]>
template <typename T>
Tensor<T> routing_update(const Tensor<T>& b, const Tensor<T>& votes, const Tensor<T>& v);

template <typename T>
struct RoutingState {
    Tensor<T> votes;
    Tensor<T> logits;
    Tensor<T> couplings;
    Tensor<T> totals;
    Tensor<T> outputs;
};

template <typename T>
RoutingState<T> dynamic_routing(const Tensor<T>& votes, int iterations);

/// Regroups C x H x W maps into (n_types*H*W) x dim capsules, then squashes.
/// Capsule (type, y, x) takes channels [type*dim, (type+1)*dim) at (y, x).
template <typename T>
Tensor<T> primary_caps(const Tensor<T>& feature_maps, std::size_t n_types, std::size_t dim);

namespace ops {

template <typename T>
Var squash(Tape<T>& tape, Var s);

template <typename T>
Var votes(Tape<T>& tape, Var u, Var W);

template <typename T>
Var weighted_sum(Tape<T>& tape, Var couplings, Var votes);

/// <votes[i][j], v[j]> for every (i, j).
template <typename T>
Var agreement(Tape<T>& tape, Var votes, Var v);

template <typename T>
Var regroup_capsules(Tape<T>& tape, Var feature_maps, std::size_t n_types, std::size_t dim);

template <typename T>
Var primary_caps(Tape<T>& tape, Var feature_maps, std::size_t n_types, std::size_t dim);

/// Euclidean norm of every row; the gradient at a zero row is zero.
template <typename T>
Var row_norms(Tape<T>& tape, Var v);

template <typename T>
struct RoutingVars {
    Var votes, logits, couplings, totals, outputs;
};

/// Every iteration, including the logit updates, stays on the tape.
template <typename T>
RoutingVars<T> dynamic_routing(Tape<T>& tape, Var votes, int iterations);

}  // namespace ops

}  // namespace capsnet
