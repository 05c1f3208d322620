"""Pure numpy versions of the compiled kernels (same algorithm, batched)."""

from __future__ import annotations

import numpy as np


def _pivoted_logdet_batch(S: np.ndarray, rel_tol: float, det_floor: float) -> np.ndarray:
    S = np.array(S, dtype=float, copy=True)
    n, m, _ = S.shape
    rows = np.arange(n)
    diag_idx = np.arange(m)
    # Equilibrate to unit diagonal so the pivot test ignores parameter scaling.
    d = S[:, diag_idx, diag_idx].copy()
    bad = np.any(d <= 0, axis=1)
    d = np.where(d > 0, d, 1.0)
    ld = np.log(d).sum(axis=1)
    inv = 1.0 / np.sqrt(d)
    S *= inv[:, :, None] * inv[:, None, :]
    active = np.ones((n, m), dtype=bool)
    for _ in range(m):
        diag = np.where(active, S[:, diag_idx, diag_idx], -np.inf)
        piv = diag.argmax(axis=1)
        val = diag[rows, piv]
        bad |= val <= rel_tol
        safe = np.where(bad, 1.0, val)
        ld += np.log(safe)
        active[rows, piv] = False
        col = S[rows, :, piv] * active
        row = S[rows, piv, :] * active
        S -= col[:, :, None] * row[:, None, :] / safe[:, None, None]
    bad |= ld <= np.log(det_floor)
    return np.where(bad, -np.inf, ld)


def logdet_psd(M, rel_tol: float, det_floor: float) -> float:
    M = np.asarray(M, dtype=float)
    return float(_pivoted_logdet_batch(M[None], rel_tol, det_floor)[0])


def batch_criterion(G, W, probs, rel_tol: float, det_floor: float) -> np.ndarray:
    """Φ for P designs: Σ_a probs[a]·log det Σ_k W[p,k] G[p,a,k] G[p,a,k]ᵀ."""
    G = np.asarray(G, dtype=float)
    P, A, K, m = G.shape
    mats = np.einsum("pakr,pk,pakc->parc", G, np.asarray(W, dtype=float), G)
    ld = _pivoted_logdet_batch(mats.reshape(P * A, m, m), rel_tol, det_floor)
    ld = ld.reshape(P, A)
    out = np.empty(P)
    probs = np.asarray(probs, dtype=float)
    for p in range(P):
        # Sequential sum keeps the same summation order as the compiled path.
        if np.any(np.isneginf(ld[p])):
            out[p] = -np.inf
            continue
        acc = 0.0
        for a in range(A):
            acc += probs[a] * ld[p, a]
        out[p] = acc
    return out
