"""Constriction-coefficient particle swarm search over composite designs.

A particle encodes, per group, ``K = max_points_per_group`` doses and K
unconstrained weight scores, followed by M allocation scores. Scores are
mapped to the simplex by a softmax.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (AllocationMeasure, CompositeDesign, Design, DiscretePrior,
                   ParameterStructure, SharingMode)
from .models import group_gradients

log = logging.getLogger(__name__)

SCORE_BOUND = 8.0
MERGE_FRACTION = 1e-4


@dataclass(frozen=True)
class PsoConfig:
    seed: int
    swarm_size: int = 60
    iterations: int = 500
    max_points_per_group: int = 3
    chi: float = 0.7298
    c1: float = 1.49618
    c2: float = 1.49618
    restarts: int = 4
    weight_floor: float = 0.01
    topology: str = "ring"

    def __post_init__(self):
        if self.topology not in ("ring", "global"):
            raise ValueError("topology must be 'ring' or 'global'")
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.max_points_per_group < 1:
            raise ValueError("max_points_per_group must be at least 1")
        if not 0 < self.chi < 1:
            raise ValueError("chi must lie in (0, 1)")
        if not 0 <= self.weight_floor < 0.5:
            raise ValueError("weight_floor must lie in [0, 0.5)")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")


@dataclass
class PsoResult:
    design: CompositeDesign
    value: float
    trace: np.ndarray
    evaluations: int = 0
    restarts_best: list = field(default_factory=list)


def _layout(s: ParameterStructure, K: int):
    M = s.M
    dim = M * 2 * K + M
    lo = np.empty(dim)
    hi = np.empty(dim)
    for i in range(M):
        base = i * 2 * K
        lo[base:base + K] = 0.0
        hi[base:base + K] = s.spaces[i].d_max
        lo[base + K:base + 2 * K] = -SCORE_BOUND
        hi[base + K:base + 2 * K] = SCORE_BOUND
    lo[M * 2 * K:] = -SCORE_BOUND
    hi[M * 2 * K:] = SCORE_BOUND
    return dim, lo, hi


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _split(X: np.ndarray, s: ParameterStructure, K: int):
    """Swarm positions (P, dim) -> doses, pruned weights (P, M, K), lambdas (P, M)."""
    P = X.shape[0]
    M = s.M
    body = X[:, :M * 2 * K].reshape(P, M, 2 * K)
    dmax = np.asarray(s.d_max)[None, :, None]
    doses = np.clip(body[:, :, :K], 0.0, dmax)
    w = _softmax(body[:, :, K:])
    lam = _softmax(X[:, M * 2 * K:])
    return doses, w, lam


def _prune(w: np.ndarray, floor: float) -> np.ndarray:
    keep = (w >= floor) | (w == w.max(axis=-1, keepdims=True))
    w = np.where(keep, w, 0.0)
    return w / w.sum(axis=-1, keepdims=True)


def decode(position, s: ParameterStructure, cfg: PsoConfig) -> CompositeDesign:
    """Map one particle position to a valid composite design."""
    K = cfg.max_points_per_group
    dim, _, _ = _layout(s, K)
    x = np.asarray(position, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"position has shape {x.shape}, expected ({dim},)")
    doses, w, lam = _split(x[None], s, K)
    groups = []
    for i in range(s.M):
        order = np.argsort(doses[0, i], kind="stable")
        tol = MERGE_FRACTION * s.spaces[i].d_max
        pts: list[float] = []
        ws: list[float] = []
        for j in order:
            d, wt = float(doses[0, i, j]), float(w[0, i, j])
            if pts and d - pts[-1] <= tol:
                # Keep the heavier point's location.
                if wt > ws[-1]:
                    pts[-1] = d
                ws[-1] += wt
            else:
                pts.append(d)
                ws.append(wt)
        ws_arr = _prune(np.array(ws)[None], cfg.weight_floor)[0]
        keep = ws_arr > 0
        groups.append(Design(tuple(np.array(pts)[keep]), tuple(ws_arr[keep])))
    return CompositeDesign(tuple(groups), AllocationMeasure(tuple(lam[0])))


def encode(xi: CompositeDesign, s: ParameterStructure, cfg: PsoConfig) -> np.ndarray:
    """Inverse of :func:`decode` for designs with at most K points per group."""
    K = cfg.max_points_per_group
    dim, lo, hi = _layout(s, K)
    x = np.empty(dim)
    for i, g in enumerate(xi.groups):
        if len(g) > K:
            raise ValueError(f"group {i + 1} has {len(g)} points, max is {K}")
        base = i * 2 * K
        pad = K - len(g)
        # Padding copies the last point and splits its weight; decode merges them back.
        last = g.weights[-1] / (pad + 1)
        x[base:base + K] = list(g.points) + [g.points[-1]] * pad
        x[base + K:base + 2 * K] = np.log(list(g.weights[:-1]) + [last] * (pad + 1))
    with np.errstate(divide="ignore"):
        x[s.M * 2 * K:] = np.log(np.asarray(xi.allocation.lambdas))
    return np.clip(x, lo, hi)


def swarm_fitness(X: np.ndarray, s: ParameterStructure, prior: DiscretePrior,
                  cfg: PsoConfig) -> np.ndarray:
    """Φ of every decoded particle; coincident points need no merging here."""
    K = cfg.max_points_per_group
    doses, w, lam = _split(X, s, K)
    w = _prune(w, cfg.weight_floor)
    thetas = prior.points
    G = np.concatenate([group_gradients(s, i, doses[:, i, :], thetas) for i in range(s.M)],
                       axis=2)
    W = (lam[:, :, None] * w).reshape(X.shape[0], s.M * K)
    return kernels.batch_criterion(G, W, prior.probs)


def _default_initial(s: ParameterStructure, prior: DiscretePrior):
    from .saturated import CaseSelectionError, NoRootError, group_marginals, saturated_design

    if s.sharing is SharingMode.COMMON_LOCATION_SCALE and s.M != 2:
        return None
    if s.sharing is SharingMode.COMMON_LOCATION and s.M < 2:
        return None
    try:
        return saturated_design(s, group_marginals(s, prior), prior).design
    except (NoRootError, CaseSelectionError, ValueError):
        return None


def optimize(s: ParameterStructure, prior: DiscretePrior, cfg: PsoConfig,
             initial: CompositeDesign | None | bool = True) -> PsoResult:
    """Search for the design maximizing the Bayesian D-criterion.

    ``initial=True`` seeds one particle per restart with the saturated
    solution when one exists; pass a design to seed with it instead, or
    ``None``/``False`` for a purely random start.
    """
    s.check_theta(prior.points)
    if initial is True:
        initial = _default_initial(s, prior)
    elif initial is False:
        initial = None
    K = cfg.max_points_per_group
    seed_pos = None
    if initial is not None and all(len(g) <= K for g in initial.groups):
        seed_pos = encode(initial, s, cfg)

    dim, lo, hi = _layout(s, K)
    span = hi - lo
    rng = np.random.default_rng(cfg.seed)
    best_x, best_f = None, -np.inf
    trace = np.empty(cfg.restarts * cfg.iterations)
    evals = 0
    restarts_best = []
    t = 0
    idx = np.arange(cfg.swarm_size)
    ring = np.stack([np.roll(idx, 1), idx, np.roll(idx, -1)], axis=1)
    for r in range(cfg.restarts):
        X = lo + rng.random((cfg.swarm_size, dim)) * span
        V = (lo + rng.random((cfg.swarm_size, dim)) * span - X) / 2.0
        if seed_pos is not None:
            X[0] = seed_pos
        F = swarm_fitness(X, s, prior, cfg)
        evals += len(F)
        if r == 0 and not np.any(np.isfinite(F)):
            raise RuntimeError(
                "every particle decodes to a singular design; increase max_points_per_group")
        pbest_x, pbest_f = X.copy(), F.copy()
        g = int(np.argmax(pbest_f))
        for _ in range(cfg.iterations):
            r1 = rng.random((cfg.swarm_size, dim))
            r2 = rng.random((cfg.swarm_size, dim))
            if cfg.topology == "ring":
                nb = ring[np.arange(cfg.swarm_size), np.argmax(pbest_f[ring], axis=1)]
                social = pbest_x[nb]
            else:
                social = pbest_x[g]
            V = cfg.chi * (V + cfg.c1 * r1 * (pbest_x - X) + cfg.c2 * r2 * (social - X))
            V = np.clip(V, -span, span)
            X = np.clip(X + V, lo, hi)
            F = swarm_fitness(X, s, prior, cfg)
            evals += len(F)
            better = F > pbest_f
            pbest_x[better] = X[better]
            pbest_f[better] = F[better]
            g = int(np.argmax(pbest_f))
            if pbest_f[g] > best_f:
                best_f, best_x = float(pbest_f[g]), pbest_x[g].copy()
            trace[t] = best_f
            t += 1
        restarts_best.append(float(pbest_f[g]))
        log.debug("restart %d best %.10g", r, pbest_f[g])

    from .criteria import bayes_logdet

    design = decode(best_x, s, cfg)
    value = bayes_logdet(s, design, prior)
    if initial is not None:
        init_val = bayes_logdet(s, initial, prior)
        if init_val > value:
            design, value = initial, init_val
    return PsoResult(design, value, trace, evals, restarts_best)
