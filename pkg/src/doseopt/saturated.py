"""Analytic saturated Bayesian D-optimal designs.

Individual three-parameter models get ``{0, d~, d_max}`` with equal
weights, where ``d~`` solves the prior-averaged stationarity equation of
the interior point. Common-location models build on those; common
location-and-scale models with two groups choose among four candidate
designs by comparing ``log(σ1²/σ2²)`` against a threshold ``u``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (AllocationMeasure, CompositeDesign, Design, DiscretePrior,
                   ModelKind, ParameterStructure, SharingMode)
from .criteria import bayes_logdet
from .models import eta, zeta

N_PROBES = 512
PROBE_EDGE = 1e-9
CASE_TIE_TOL = 1e-9


class NoRootError(ValueError):
    """No sign change of the defining equation inside the design interval."""


class CaseSelectionError(RuntimeError):
    """Threshold rule and direct criterion comparison disagree."""


class CaseLabel(str, enum.Enum):
    A = "A"
    B1 = "B1"
    B2 = "B2"
    C = "C"


@dataclass(frozen=True)
class SaturatedSolution:
    design: CompositeDesign
    case: CaseLabel | None = None
    interior_points: tuple[float, ...] = ()
    auxiliary_points: tuple[float, ...] = ()
    diagnostics: dict = field(default_factory=dict)
    criterion: float | None = None
    u: float | None = None
    candidates: dict = field(default_factory=dict)


def _theta2(prior: DiscretePrior) -> tuple[np.ndarray, np.ndarray]:
    if prior.dim != 1:
        raise ValueError(f"expected a prior over θ2 alone, got dimension {prior.dim}")
    t = prior.points[:, 0]
    if np.any(t <= 0):
        raise ValueError("θ2 prior atoms must be strictly positive")
    return t, prior.probs


# ---------------------------------------------------------------------------
# Defining equations
# ---------------------------------------------------------------------------

def _interior_terms(kind: ModelKind, x: float, d_max: float, t: np.ndarray) -> np.ndarray:
    """Per-atom ∂/∂x log|det| of the equally weighted design {0, x, d_max}."""
    D = d_max
    if kind is ModelKind.EMAX:
        return 1.0 / x - 1.0 / (D - x) - 2.0 / (t + x)
    if kind is ModelKind.EXPONENTIAL:
        # Scaled by exp(-(x + D)/t) top and bottom to stay finite.
        a = -np.expm1(-D / t)
        num = (t + x) * a - D
        den = t * (x * a + D * np.expm1(-x / t))
        return num / den
    if kind is ModelKind.LINEAR_IN_LOG:
        LD = np.log1p(D / t)
        num = t * LD * (D + t) - D * (x + t)
        den = x * (D + t) * LD - D * (x + t) * np.log1p(x / t)
        return num / ((x + t) * den)
    raise ValueError(f"unknown model kind {kind!r}")


def interior_equation(kind, x: float, prior_theta2: DiscretePrior, d_max: float) -> float:
    """Prior average of the interior-point stationarity expression at dose ``x``."""
    t, w = _theta2(prior_theta2)
    return float(w @ _interior_terms(ModelKind(kind), x, d_max, t))


def auxiliary_equation(x: float, prior_theta2: DiscretePrior) -> float:
    """Prior average of 1/d − 2/(d + θ2) (Emax singleton-group point)."""
    t, w = _theta2(prior_theta2)
    return float(w @ (1.0 / x - 2.0 / (x + t)))


def _bisect(f, lo: float, hi: float, flo: float | None = None) -> float:
    flo = f(lo) if flo is None else flo
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bracketed_roots(f, lo: float, hi: float, n: int = N_PROBES) -> list[float]:
    probes = np.geomspace(lo, hi, n)
    vals = np.array([f(x) for x in probes])
    roots = []
    for j in range(n - 1):
        a, b = vals[j], vals[j + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            roots.append(float(probes[j]))
        elif (a > 0) != (b > 0) and b != 0.0:
            roots.append(_bisect(f, float(probes[j]), float(probes[j + 1]), a))
    if vals[-1] == 0.0:
        roots.append(float(probes[-1]))
    return roots


def _individual_criterion(kind: ModelKind, x: float, prior_theta2: DiscretePrior,
                          d_max: float) -> float:
    s = ParameterStructure.individual(kind, d_max)
    prior = s.full_prior([prior_theta2])
    return bayes_logdet(s, CompositeDesign.single(Design.equal([0.0, x, d_max])), prior)


def solve_interior_point(kind, prior_theta2: DiscretePrior, d_max: float) -> float:
    """Non-trivial support point d~ of the saturated design {0, d~, d_max}.

    Scans 512 log-spaced probes over (0, d_max) for sign changes and
    bisects each bracket; with several roots the criterion-best is kept.
    """
    kind = ModelKind(kind)
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    _theta2(prior_theta2)
    f = lambda x: interior_equation(kind, x, prior_theta2, d_max)
    with np.errstate(all="ignore"):
        roots = _bracketed_roots(f, PROBE_EDGE * d_max, d_max * (1 - PROBE_EDGE))
    if not roots:
        raise NoRootError(
            f"{kind.value}: interior-point equation has no sign change on (0, {d_max:g})")
    if len(roots) == 1:
        return roots[0]
    return max(roots, key=lambda x: _individual_criterion(kind, x, prior_theta2, d_max))


def solve_emax_auxiliary(prior_theta2: DiscretePrior, d_max: float) -> float:
    """Root of E[1/d − 2/(d+θ2)] = 0, projected onto [0, d_max].

    ``d·(1/d − 2/(d+θ))`` is strictly decreasing and changes sign inside
    [min θ2, max θ2], so a plain bisection there is exact.
    """
    t, w = _theta2(prior_theta2)
    g = lambda x: float(w @ (2.0 * t / (x + t) - 1.0))
    lo, hi = float(t.min()), float(t.max())
    root = lo if lo == hi else _bisect(g, lo, hi)
    return min(max(root, 0.0), d_max)


# ---------------------------------------------------------------------------
# Individual and common-location designs
# ---------------------------------------------------------------------------

def saturated_individual(kind, prior_theta2: DiscretePrior, d_max: float,
                         sigma2: float = 1.0) -> SaturatedSolution:
    kind = ModelKind(kind)
    x = solve_interior_point(kind, prior_theta2, d_max)
    design = CompositeDesign.single(Design((0.0, x, d_max), (1 / 3, 1 / 3, 1 / 3)))
    s = ParameterStructure.individual(kind, d_max, sigma2)
    return SaturatedSolution(
        design=design,
        interior_points=(x,),
        diagnostics={"interior_residual": (interior_equation(kind, x, prior_theta2, d_max),)},
        criterion=bayes_logdet(s, design, s.full_prior([prior_theta2])),
    )


def common_location_design(s: ParameterStructure, priors: Sequence[DiscretePrior],
                           full_prior: DiscretePrior | None = None) -> SaturatedSolution:
    """Saturated design for M groups sharing only the location parameter.

    The minimal-variance group (lowest index on ties) carries the placebo
    dose: ``{0, d~, d_max}`` at 1/3 each; every other group gets
    ``{d~, d_max}`` at 1/2 each; allocation 3/m for the former, 2/m else.
    """
    if s.sharing is not SharingMode.COMMON_LOCATION:
        raise ValueError("common_location_design needs a common-location structure")
    if s.M < 2:
        raise ValueError("common-location designs need at least two groups")
    if len(priors) != s.M:
        raise ValueError(f"need {s.M} θ2 priors, got {len(priors)}")
    lead = int(np.argmin(s.sigma2))
    xs = [solve_interior_point(s.model, pr, sp.d_max) for pr, sp in zip(priors, s.spaces)]
    groups, lam = [], []
    for i, (x, sp) in enumerate(zip(xs, s.spaces)):
        if i == lead:
            groups.append(Design((0.0, x, sp.d_max), (1 / 3, 1 / 3, 1 / 3)))
            lam.append(3.0 / s.m)
        else:
            groups.append(Design((x, sp.d_max), (0.5, 0.5)))
            lam.append(2.0 / s.m)
    design = CompositeDesign(tuple(groups), AllocationMeasure(tuple(lam)))
    prior = full_prior or s.full_prior(priors)
    residuals = tuple(interior_equation(s.model, x, pr, sp.d_max)
                      for x, pr, sp in zip(xs, priors, s.spaces))
    return SaturatedSolution(
        design=design,
        interior_points=tuple(xs),
        diagnostics={"interior_residual": residuals},
        criterion=bayes_logdet(s, design, prior),
    )


# ---------------------------------------------------------------------------
# Common location and scale, two groups
# ---------------------------------------------------------------------------

def _interior_gap(kind: ModelKind, x: float, D: float, t: np.ndarray) -> np.ndarray:
    """Per-atom log|η(x) − η(D)·ζ(x)/ζ(D)| for the exponential/linear-in-log thresholds."""
    if kind is ModelKind.EXPONENTIAL:
        val = (1 - x / D) * np.exp(x / t) + (x / D) * np.exp((x - D) / t) - 1.0
        return np.log(np.abs(val))
    if kind is ModelKind.LINEAR_IN_LOG:
        g = lambda d: (d + t) / d * np.log1p(d / t)
        return np.log(np.abs(x / (x + t) * (g(D) - g(x))))
    raise ValueError(f"no threshold gap for {kind!r}")


def u_threshold(kind, interior: Sequence[float], priors: Sequence[DiscretePrior],
                d_max: Sequence[float], auxiliary: Sequence[float] | None = None) -> float:
    """Threshold u compared with log(σ1²/σ2²) in the two-group case selection.

    It equals Φ(B2 candidate) − Φ(B1 candidate). Emax needs the auxiliary
    points of both groups; the other kinds use only the interior points.
    """
    kind = ModelKind(kind)
    if len(interior) != 2 or len(priors) != 2 or len(d_max) != 2:
        raise ValueError("u is defined for exactly two groups")
    for x, D in zip(interior, d_max):
        if not 0 < x < D:
            raise ValueError(f"interior point {x} outside (0, {D})")
    if kind is ModelKind.EMAX:
        if auxiliary is None or len(auxiliary) != 2:
            raise ValueError("Emax threshold needs both auxiliary points")
        for a, D in zip(auxiliary, d_max):
            if not 0 < a <= D:
                raise ValueError(f"auxiliary point {a} outside (0, {D}]")
        (x1, x2), (a1, a2), (D1, D2) = interior, auxiliary, d_max
        u = 2.0 * math.log((x1 * D1 * (D1 - x1) * a2) / (x2 * D2 * (D2 - x2) * a1))
        for sign, x, a, D, pr in ((1, x1, a1, D1, priors[0]), (-1, x2, a2, D2, priors[1])):
            t, w = _theta2(pr)
            u += 4.0 * sign * float(w @ np.log((a + t) / ((x + t) * (D + t))))
        return u
    u = 0.0
    for sign, x, D, pr in ((1, interior[0], d_max[0], priors[0]),
                           (-1, interior[1], d_max[1], priors[1])):
        t, w = _theta2(pr)
        u += 2.0 * sign * float(w @ _interior_gap(kind, x, D, t))
    return u


def _candidates(kind, xs, singles, D) -> dict[CaseLabel, CompositeDesign]:
    (x1, x2), (a1, a2), (D1, D2) = xs, singles, D
    third, half = (1 / 3,) * 3, (0.5, 0.5)
    return {
        CaseLabel.A: CompositeDesign(
            (Design((0.0, x1, D1), third), Design((a2,), (1.0,))), AllocationMeasure((0.75, 0.25))),
        CaseLabel.B1: CompositeDesign(
            (Design((0.0, a1), half), Design((x2, D2), half)), AllocationMeasure((0.5, 0.5))),
        CaseLabel.B2: CompositeDesign(
            (Design((x1, D1), half), Design((0.0, a2), half)), AllocationMeasure((0.5, 0.5))),
        CaseLabel.C: CompositeDesign(
            (Design((a1,), (1.0,)), Design((0.0, x2, D2), third)), AllocationMeasure((0.25, 0.75))),
    }


def _threshold_case(kind: ModelKind, log_r: float, u: float) -> CaseLabel | None:
    if log_r <= 0 and log_r <= u:
        return CaseLabel.A
    if u < log_r <= 0:
        return CaseLabel.B1
    if kind is ModelKind.EMAX:
        b2 = 0 <= log_r <= u
    elif kind is ModelKind.EXPONENTIAL:
        b2 = 0 <= log_r < u
    else:
        b2 = 0 < log_r < u
    if b2:
        return CaseLabel.B2
    if log_r >= 0 and log_r > u:
        return CaseLabel.C
    return None


def common_location_scale_design(s: ParameterStructure, priors: Sequence[DiscretePrior],
                                 full_prior: DiscretePrior | None = None,
                                 tie_tol: float = CASE_TIE_TOL) -> SaturatedSolution:
    """Two-group saturated design with shared location and scale.

    Builds the four candidate designs, selects one by the threshold rule
    and checks that it attains the largest criterion among them.
    """
    if s.sharing is not SharingMode.COMMON_LOCATION_SCALE:
        raise ValueError("needs a common location-and-scale structure")
    if s.M != 2:
        raise ValueError("the case selection is implemented for two groups only")
    if len(priors) != 2:
        raise ValueError(f"need 2 θ2 priors, got {len(priors)}")
    kind = s.model
    D = s.d_max
    xs = tuple(solve_interior_point(kind, pr, d) for pr, d in zip(priors, D))
    residuals = {"interior_residual": tuple(
        interior_equation(kind, x, pr, d) for x, pr, d in zip(xs, priors, D))}
    if kind is ModelKind.EMAX:
        aux = tuple(solve_emax_auxiliary(pr, d) for pr, d in zip(priors, D))
        residuals["auxiliary_residual"] = tuple(
            auxiliary_equation(a, pr) if a < d else 0.0
            for a, pr, d in zip(aux, priors, D))
        singles = aux
    else:
        aux = ()
        singles = D
    u = u_threshold(kind, xs, priors, D, auxiliary=aux or None)
    log_r = math.log(s.sigma2[0] / s.sigma2[1])
    prior = full_prior or s.full_prior(priors)
    cands = _candidates(kind, xs, singles, D)
    values = {lab: bayes_logdet(s, des, prior) for lab, des in cands.items()}
    best = max(values.values())
    case = _threshold_case(kind, log_r, u)
    if case is None:
        case = max(values, key=values.get)
    if values[case] < best - tie_tol:
        raise CaseSelectionError(
            f"threshold chose case {case.value} (Φ={values[case]:.12g}) but the best "
            f"candidate has Φ={best:.12g} (log r={log_r:.6g}, u={u:.6g})")
    return SaturatedSolution(
        design=cands[case],
        case=case,
        interior_points=xs,
        auxiliary_points=aux,
        diagnostics=residuals,
        criterion=values[case],
        u=u,
        candidates={lab: (cands[lab], values[lab]) for lab in cands},
    )


def saturated_design(s: ParameterStructure, priors: Sequence[DiscretePrior],
                     full_prior: DiscretePrior | None = None) -> SaturatedSolution:
    """Dispatch to the saturated construction matching the structure."""
    if s.sharing is SharingMode.INDIVIDUAL:
        sol = saturated_individual(s.model, priors[0], s.d_max[0], s.sigma2[0])
        if full_prior is not None:
            sol = SaturatedSolution(sol.design, None, sol.interior_points, (), sol.diagnostics,
                                    bayes_logdet(s, sol.design, full_prior))
        return sol
    if s.sharing is SharingMode.COMMON_LOCATION:
        return common_location_design(s, priors, full_prior)
    return common_location_scale_design(s, priors, full_prior)


def group_marginals(s: ParameterStructure, prior: DiscretePrior) -> list[DiscretePrior]:
    """θ2 marginal of each group extracted from a full prior."""
    out = []
    for idx in s.nonlinear_indices():
        vals, inv = np.unique(prior.points[:, idx], return_inverse=True)
        probs = np.bincount(inv.ravel(), weights=prior.probs, minlength=len(vals))
        out.append(DiscretePrior(vals, probs / probs.sum()))
    return out


def locally_d_optimal(s: ParameterStructure, theta, pso_config=None) -> CompositeDesign:
    """Best of the Dirac-prior saturated construction and a PSO run at θ."""
    from .pso import PsoConfig, optimize

    theta = s.check_theta(theta)
    prior = DiscretePrior.dirac(theta)
    cfg = pso_config or PsoConfig(seed=0)
    best, best_val = None, -np.inf
    saturated = None
    if not (s.sharing is SharingMode.COMMON_LOCATION_SCALE and s.M != 2):
        try:
            saturated = saturated_design(s, group_marginals(s, prior), prior)
        except (NoRootError, CaseSelectionError):
            saturated = None
    if saturated is not None:
        best, best_val = saturated.design, saturated.criterion
    res = optimize(s, prior, cfg, initial=best)
    if res.value > best_val:
        best = res.design
    return best
