"""Information matrices, the Bayesian D-criterion, sensitivity functions and efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (CompositeDesign, Design, DiscretePrior, ModelKind,
                   ParameterStructure, validate_design)
from .models import group_gradients

EQUIVALENCE_TOL = 1e-3


class SingularDesignError(ValueError):
    """Information matrix is singular at some prior atom."""


@dataclass(frozen=True)
class InfoMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def det(self) -> float:
        return float(np.linalg.det(self.entries))

    def logdet(self) -> float:
        return kernels.logdet_psd(self.entries)


def _require_valid(s: ParameterStructure, xi: CompositeDesign) -> None:
    res = validate_design(xi, s)
    if not res.ok:
        raise ValueError("invalid design: " + "; ".join(res.violations))


def design_gradients(s: ParameterStructure, xi: CompositeDesign, thetas):
    """Stack h_i(d_ij, θ) for every support point: (A, K, m) plus weights (K,)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    blocks, weights = [], []
    for i, (g, lam) in enumerate(zip(xi.groups, xi.allocation.lambdas)):
        blocks.append(group_gradients(s, i, np.asarray(g.points), thetas))
        weights.append(lam * np.asarray(g.weights))
    return np.concatenate(blocks, axis=1), np.concatenate(weights)


def info_matrix_composite(s: ParameterStructure, xi: CompositeDesign, theta) -> InfoMatrix:
    """M(ξ, θ) = Σ_i λ_i Σ_j ω_ij h_i(d_ij) h_i(d_ij)ᵀ."""
    _require_valid(s, xi)
    theta = s.check_theta(theta)
    G, W = design_gradients(s, xi, theta)
    return InfoMatrix(np.einsum("kr,k,kc->rc", G[0], W, G[0]))


def info_matrix_individual(kind, design: Design, theta, sigma2: float = 1.0) -> InfoMatrix:
    d_max = max(design.points) if max(design.points) > 0 else 1.0
    s = ParameterStructure.individual(ModelKind(kind), d_max, sigma2)
    return info_matrix_composite(s, CompositeDesign.single(design), theta)


def bayes_logdet(s: ParameterStructure, xi: CompositeDesign, prior: DiscretePrior) -> float:
    """Prior-averaged log det M(ξ, θ); ``-inf`` if singular at any atom."""
    _require_valid(s, xi)
    thetas = s.check_theta(prior.points)
    G, W = design_gradients(s, xi, thetas)
    return float(kernels.batch_criterion(G[None], W[None], prior.probs)[0])


def _inverse_info(s, xi, thetas):
    G, W = design_gradients(s, xi, thetas)
    mats = np.einsum("akr,k,akc->arc", G, W, G)
    inv = np.empty_like(mats)
    for a, mat in enumerate(mats):
        if kernels.logdet_psd(mat) == -np.inf:
            raise SingularDesignError(
                f"information matrix singular at prior atom {thetas[a].tolist()}")
        inv[a] = np.linalg.inv(mat)
    return inv


def tau_curve(s: ParameterStructure, xi: CompositeDesign, prior: DiscretePrior,
              group: int, doses, _inv=None) -> np.ndarray:
    """τ_i(d) on an array of doses for zero-based ``group``."""
    thetas = s.check_theta(prior.points)
    inv = _inverse_info(s, xi, thetas) if _inv is None else _inv
    doses = np.atleast_1d(np.asarray(doses, dtype=float))
    H = group_gradients(s, group, doses, thetas)  # (A, K, m)
    g = np.einsum("akr,arc,akc->ak", H, inv, H)
    return prior.probs @ g - s.m


def tau(s: ParameterStructure, xi: CompositeDesign, prior: DiscretePrior,
        group_index: int, d: float) -> float:
    """Sensitivity τ_i(d) = E_π[h_iᵀ M⁻¹ h_i] − m for 1-based ``group_index``."""
    if not 1 <= group_index <= s.M:
        raise IndexError(f"group index {group_index} out of range 1..{s.M}")
    _require_valid(s, xi)
    return float(tau_curve(s, xi, prior, group_index - 1, [d])[0])


def _golden_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


@dataclass(frozen=True)
class GroupCurve:
    group: int  # 1-based
    doses: np.ndarray
    tau: np.ndarray
    max_dose: float
    max_tau: float
    violation_intervals: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class EquivalenceReport:
    curves: tuple[GroupCurve, ...]
    max_violation: float
    tolerance: float

    @property
    def certified(self) -> bool:
        return self.max_violation <= self.tolerance

    @property
    def verdict(self) -> str:
        return "certified" if self.certified else "refuted"

    @property
    def violating_groups(self) -> list[int]:
        return [c.group for c in self.curves if c.max_tau > self.tolerance]


def check_equivalence(s: ParameterStructure, xi: CompositeDesign, prior: DiscretePrior,
                      grid_points_per_group: int = 1001,
                      tolerance: float = EQUIVALENCE_TOL) -> EquivalenceReport:
    """Sample τ_i on a uniform grid per group, refine local maxima, compare to tolerance."""
    if grid_points_per_group < 2:
        raise ValueError("grid needs at least 2 points per group")
    _require_valid(s, xi)
    thetas = s.check_theta(prior.points)
    inv = _inverse_info(s, xi, thetas)
    curves = []
    for i in range(s.M):
        grid = np.linspace(0.0, s.spaces[i].d_max, grid_points_per_group)
        vals = tau_curve(s, xi, prior, i, grid, _inv=inv)
        best_d, best_t = float(grid[vals.argmax()]), float(vals.max())
        n = len(grid)
        for j in range(n):
            left = vals[j - 1] if j > 0 else -np.inf
            right = vals[j + 1] if j < n - 1 else -np.inf
            if vals[j] > left and vals[j] >= right:
                lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, n - 1)]
                d_ref, t_ref = _golden_max(
                    lambda x: float(tau_curve(s, xi, prior, i, [x], _inv=inv)[0]), lo, hi)
                for d_c, t_c in ((d_ref, t_ref), (grid[j], vals[j])):
                    if t_c > best_t:
                        best_d, best_t = float(d_c), float(t_c)
        above = vals > tolerance
        intervals = []
        j = 0
        while j < n:
            if above[j]:
                k = j
                while k + 1 < n and above[k + 1]:
                    k += 1
                intervals.append((float(grid[j]), float(grid[k])))
                j = k + 1
            else:
                j += 1
        curves.append(GroupCurve(i + 1, grid, vals, best_d, best_t, tuple(intervals)))
    max_violation = max(c.max_tau for c in curves)
    return EquivalenceReport(tuple(curves), max_violation, tolerance)


def d_efficiency(s: ParameterStructure, xi: CompositeDesign, theta,
                 reference: CompositeDesign) -> float:
    """(det M(ξ,θ) / det M(ref,θ))^(1/m)."""
    ref = info_matrix_composite(s, reference, theta).logdet()
    if ref == -np.inf:
        raise SingularDesignError("reference design is singular")
    ld = info_matrix_composite(s, xi, theta).logdet()
    if ld == -np.inf:
        return 0.0
    return float(math.exp((ld - ref) / s.m))
