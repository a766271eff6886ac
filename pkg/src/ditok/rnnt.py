"""Transducer loss: negative log marginal over all monotonic alignments.

Pure log-space dynamic programming on the (T, U+1) lattice. The gradient is
returned with respect to the log-probability inputs themselves (transition
occupancies), so the chain through log-softmax stays in numerics.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .errors import CapacityError, DimensionError, ValidationError

NEG_INF = -math.inf


def _lse(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _validate(log_probs: np.ndarray, labels, blank: int):
    if log_probs.ndim != 3:
        raise DimensionError(f"log_probs must be (T, U+1, V), got shape {log_probs.shape}")
    T, U1, V = log_probs.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or U1 != labels.size + 1:
        raise DimensionError(
            f"labels length {labels.size} incompatible with lattice U+1={U1}"
        )
    if T < 1:
        raise DimensionError("T must be >= 1")
    if not 0 <= blank < V:
        raise ValidationError(f"blank {blank} out of range [0, {V})")
    if labels.size:
        if np.any(labels == blank):
            raise ValidationError("labels must not contain the blank symbol")
        if labels.min() < 0 or labels.max() >= V:
            raise ValidationError(f"label out of range [0, {V})")
    return labels


def forward_backward(log_probs: np.ndarray, labels, blank: int = 0):
    """Alpha/beta lattices and the loss computed from each end.

    Returns (alpha, beta, loss_from_alpha, loss_from_beta); the two losses
    agree to within accumulation error on any proper input.
    """
    labels = _validate(log_probs, labels, blank)
    T, U1, _ = log_probs.shape
    U = U1 - 1
    lpb = log_probs[:, :, blank]
    # lpl[t, u] = log-prob of emitting label u+1 at node (t, u)
    lpl = log_probs[:, np.arange(U), labels] if U else np.zeros((T, 0))

    alpha = np.full((T, U1), NEG_INF)
    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            a = alpha[t - 1, u] + lpb[t - 1, u] if t > 0 else NEG_INF
            b = alpha[t, u - 1] + lpl[t, u - 1] if u > 0 else NEG_INF
            alpha[t, u] = _lse(a, b)

    beta = np.full((T, U1), NEG_INF)
    beta[T - 1, U] = lpb[T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            a = beta[t + 1, u] + lpb[t, u] if t < T - 1 else NEG_INF
            b = beta[t, u + 1] + lpl[t, u] if u < U else NEG_INF
            beta[t, u] = _lse(a, b)

    loss_alpha = -(alpha[T - 1, U] + lpb[T - 1, U])
    loss_beta = -beta[0, 0]
    return alpha, beta, loss_alpha, loss_beta


def rnnt_loss(log_probs: np.ndarray, labels, blank: int = 0):
    """Loss and its exact gradient w.r.t. log_probs.

    grad[t, u, v] = -P(transition (t,u) --v--> next | y), the posterior
    occupancy of each lattice transition, so perturbing any single entry of
    log_probs and re-running the DP matches this gradient.
    """
    labels = _validate(log_probs, labels, blank)
    T, U1, _ = log_probs.shape
    U = U1 - 1
    alpha, beta, loss, _ = forward_backward(log_probs, labels, blank)
    log_z = beta[0, 0]
    grad = np.zeros_like(log_probs)
    if not math.isfinite(log_z):
        return float(loss), grad

    lpb = log_probs[:, :, blank]
    # blank transitions (t, u) -> (t+1, u), plus the final blank at (T-1, U)
    occ_blank = np.full((T, U1), NEG_INF)
    if T > 1:
        occ_blank[: T - 1] = alpha[: T - 1] + lpb[: T - 1] + beta[1:] - log_z
    occ_blank[T - 1, U] = alpha[T - 1, U] + lpb[T - 1, U] - log_z
    grad[:, :, blank] = -np.exp(occ_blank)

    if U:
        lpl = log_probs[:, np.arange(U), labels]
        occ_label = alpha[:, :U] + lpl + beta[:, 1:] - log_z
        grad[:, np.arange(U), labels] = -np.exp(occ_label)
    return float(loss), grad


def rnnt_loss_tensor(log_probs, labels, blank: int = 0):
    """Autodiff node over rnnt_loss: scalar loss whose backward injects the
    DP gradient into the log-probs tensor."""
    from . import numerics as nm

    lp = log_probs.tensor if hasattr(log_probs, "tensor") else log_probs
    loss, grad = rnnt_loss(lp.data, labels, blank)

    def backward(g):
        lp.accumulate(float(g) * grad)

    return nm.Tensor(np.asarray(loss, dtype=lp.data.dtype), (lp,), backward)


def alignment_oracle(log_probs: np.ndarray, labels, blank: int = 0) -> float:
    """Brute-force loss: enumerate every monotone emission sequence.

    A path makes T-1+U moves (T-1 frame advances interleaved with U label
    emissions) and then the final blank; used only by tests.
    """
    labels = _validate(log_probs, labels, blank)
    T, U1, _ = log_probs.shape
    U = U1 - 1
    if T + U > 12:
        raise CapacityError(f"oracle bound is T+U <= 12, got {T + U}")
    n_moves = T - 1 + U
    path_scores = []
    for label_positions in combinations(range(n_moves), U):
        label_set = set(label_positions)
        t = u = 0
        score = 0.0
        for i in range(n_moves):
            if i in label_set:
                score += log_probs[t, u, labels[u]]
                u += 1
            else:
                score += log_probs[t, u, blank]
                t += 1
        score += log_probs[T - 1, U, blank]
        path_scores.append(score)
    m = max(path_scores)
    if m == NEG_INF:
        return math.inf
    return -(m + math.log(sum(math.exp(s - m) for s in path_scores)))
