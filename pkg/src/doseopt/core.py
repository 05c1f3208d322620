"""Domain types: design spaces, designs, priors and parameter structures.

All value types are frozen dataclasses holding tuples or read-only numpy
arrays, so they can be shared freely between threads.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SUM_TOL = 1e-12
MERGE_TOL = 1e-10


class ModelKind(str, enum.Enum):
    EMAX = "emax"
    EXPONENTIAL = "exponential"
    LINEAR_IN_LOG = "linlog"


class SharingMode(str, enum.Enum):
    INDIVIDUAL = "individual"
    COMMON_LOCATION = "common_location"
    COMMON_LOCATION_SCALE = "common_location_scale"


# (p, q) per sharing mode: common and group-specific parameter counts.
_BLOCKS = {
    SharingMode.INDIVIDUAL: (3, 0),
    SharingMode.COMMON_LOCATION: (1, 2),
    SharingMode.COMMON_LOCATION_SCALE: (2, 1),
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DesignSpace:
    """The closed dose interval ``[0, d_max]``."""

    d_max: float

    def __post_init__(self):
        if not np.isfinite(self.d_max) or self.d_max <= 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")

    def contains(self, d: float, tol: float = 0.0) -> bool:
        return -tol <= d <= self.d_max + tol


@dataclass(frozen=True)
class Design:
    """Approximate design on one dose interval: support points and weights.

    Construction only checks shapes; numeric invariants (ordering, weight
    sum, bounds) are reported by :func:`validate_design`.
    """

    points: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(x) for x in self.points)
        ws = tuple(float(x) for x in self.weights)
        if len(pts) == 0:
            raise ValueError("a design needs at least one support point")
        if len(pts) != len(ws):
            raise ValueError(
                f"{len(pts)} points but {len(ws)} weights")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", ws)

    @classmethod
    def equal(cls, points: Sequence[float]) -> "Design":
        k = len(points)
        return cls(tuple(points), (1.0 / k,) * k)

    @classmethod
    def normalized(cls, points: Sequence[float], weights: Sequence[float],
                   merge_tol: float = MERGE_TOL) -> "Design":
        """Sort, merge doses closer than ``merge_tol`` and rescale weights."""
        order = np.argsort(np.asarray(points, dtype=float), kind="stable")
        pts: list[float] = []
        ws: list[float] = []
        for j in order:
            d, w = float(points[j]), float(weights[j])
            if pts and d - pts[-1] <= merge_tol:
                ws[-1] += w
            else:
                pts.append(d)
                ws.append(w)
        total = sum(ws)
        return cls(tuple(pts), tuple(w / total for w in ws))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class AllocationMeasure:
    """Share of the total sample size given to each group."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        if len(lam) == 0:
            raise ValueError("allocation needs at least one group")
        object.__setattr__(self, "lambdas", lam)

    def __len__(self) -> int:
        return len(self.lambdas)


@dataclass(frozen=True)
class CompositeDesign:
    """Per-group designs plus the allocation measure across groups."""

    groups: tuple[Design, ...]
    allocation: AllocationMeasure

    def __post_init__(self):
        groups = tuple(self.groups)
        if not isinstance(self.allocation, AllocationMeasure):
            object.__setattr__(self, "allocation",
                               AllocationMeasure(tuple(self.allocation)))
        if len(groups) != len(self.allocation):
            raise ValueError(
                f"{len(groups)} group designs but "
                f"{len(self.allocation)} allocation weights")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def single(cls, design: Design) -> "CompositeDesign":
        return cls((design,), AllocationMeasure((1.0,)))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def total_support(self) -> int:
        return sum(len(g) for g in self.groups)

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (group index, dose, combined weight λ_i ω_ij) arrays."""
        idx, doses, w = [], [], []
        for i, (g, lam) in enumerate(zip(self.groups, self.allocation.lambdas)):
            for d, om in zip(g.points, g.weights):
                idx.append(i)
                doses.append(d)
                w.append(lam * om)
        return np.array(idx, dtype=np.intp), np.array(doses), np.array(w)


@dataclass(frozen=True)
class DiscretePrior:
    """Finitely supported probability measure on parameter vectors."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        probs = np.array(self.probs, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("prior needs at least one atom")
        if pts.shape[0] != probs.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} atoms but {probs.shape[0]} probabilities")
        if not np.all(np.isfinite(pts)):
            raise ValueError("prior atoms must be finite")
        if np.any(probs <= 0):
            raise ValueError("prior probabilities must be positive")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError(
                f"prior probabilities sum to {probs.sum():.15g}, not 1")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "probs", _readonly(probs))

    @classmethod
    def dirac(cls, value) -> "DiscretePrior":
        return cls(np.atleast_2d(np.asarray(value, dtype=float)), [1.0])

    @classmethod
    def uniform(cls, values) -> "DiscretePrior":
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        return cls(values, np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    def atoms(self):
        return list(zip(map(tuple, self.points), self.probs))


def product_prior(marginals: Sequence[DiscretePrior]) -> DiscretePrior:
    """Independent product of discrete marginals (first marginal varies slowest)."""
    if len(marginals) == 0:
        raise ValueError("product_prior needs at least one marginal")
    idx = itertools.product(*(range(mg.n_atoms) for mg in marginals))
    points, probs = [], []
    for combo in idx:
        points.append(np.concatenate(
            [mg.points[j] for mg, j in zip(marginals, combo)]))
        probs.append(float(np.prod(
            [mg.probs[j] for mg, j in zip(marginals, combo)])))
    probs = np.array(probs)
    # Product of normalized marginals is normalized up to rounding.
    return DiscretePrior(np.array(points), probs / probs.sum())


@dataclass(frozen=True)
class ParameterStructure:
    """Model family, sharing pattern, group variances and design spaces."""

    model: ModelKind
    sharing: SharingMode
    sigma2: tuple[float, ...]
    spaces: tuple[DesignSpace, ...]

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        object.__setattr__(self, "sharing", SharingMode(self.sharing))
        sig = tuple(float(s) for s in self.sigma2)
        spaces = tuple(s if isinstance(s, DesignSpace) else DesignSpace(float(s))
                       for s in self.spaces)
        if len(sig) != len(spaces) or len(sig) == 0:
            raise ValueError("sigma2 and spaces must have one entry per group")
        if any(not s > 0 for s in sig):
            raise ValueError("group variances must be positive")
        if self.sharing is SharingMode.INDIVIDUAL and len(sig) != 1:
            raise ValueError("an individual model has exactly one group")
        object.__setattr__(self, "sigma2", sig)
        object.__setattr__(self, "spaces", spaces)

    @classmethod
    def individual(cls, model, d_max: float = 1.0, sigma2: float = 1.0):
        return cls(model, SharingMode.INDIVIDUAL, (sigma2,), (DesignSpace(d_max),))

    @classmethod
    def common_location(cls, model, d_max: Sequence[float], sigma2: Sequence[float]):
        return cls(model, SharingMode.COMMON_LOCATION, tuple(sigma2),
                   tuple(DesignSpace(d) for d in d_max))

    @classmethod
    def common_location_scale(cls, model, d_max: Sequence[float],
                              sigma2: Sequence[float]):
        return cls(model, SharingMode.COMMON_LOCATION_SCALE, tuple(sigma2),
                   tuple(DesignSpace(d) for d in d_max))

    @property
    def M(self) -> int:
        return len(self.sigma2)

    @property
    def p(self) -> int:
        return _BLOCKS[self.sharing][0]

    @property
    def q(self) -> int:
        return _BLOCKS[self.sharing][1]

    @property
    def m(self) -> int:
        return self.p + self.q * self.M

    @property
    def d_max(self) -> tuple[float, ...]:
        return tuple(s.d_max for s in self.spaces)

    def nonlinear_indices(self) -> list[int]:
        """Positions of the θ2-type parameters (must be strictly positive)."""
        if self.sharing is SharingMode.INDIVIDUAL:
            return [2]
        return [self.p + self.q * i + self.q - 1 for i in range(self.M)]

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.m:
            raise ValueError(
                f"parameter vector has length {theta.shape[-1]}, expected {self.m}")
        if np.any(theta[..., self.nonlinear_indices()] <= 0):
            raise ValueError("nonlinear parameters θ2 must be strictly positive")
        return theta

    def full_prior(self, group_priors: Sequence[DiscretePrior],
                   location: DiscretePrior | None = None,
                   scale: DiscretePrior | None = None,
                   slopes: Sequence[DiscretePrior] | None = None) -> DiscretePrior:
        """Assemble the product prior over the full parameter vector.

        ``group_priors`` are the θ2 marginals per group. Location defaults
        to a Dirac at 0, scales and per-group slopes to a Dirac at 1.
        """
        if len(group_priors) != self.M:
            raise ValueError(f"need {self.M} group priors, got {len(group_priors)}")
        location = location or DiscretePrior.dirac([0.0])
        scale = scale or DiscretePrior.dirac([1.0])
        if self.sharing is SharingMode.INDIVIDUAL:
            return product_prior([location, scale, group_priors[0]])
        if self.sharing is SharingMode.COMMON_LOCATION_SCALE:
            return product_prior([location, scale, *group_priors])
        slopes = slopes or [DiscretePrior.dirac([1.0])] * self.M
        marg = [location]
        for sl, gp in zip(slopes, group_priors):
            marg += [sl, gp]
        return product_prior(marg)


@dataclass
class ValidationResult:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_design(xi: CompositeDesign, s: ParameterStructure,
                    saturated: bool = False) -> ValidationResult:
    """List every violated design invariant (empty list means valid)."""
    res = ValidationResult()
    v = res.violations
    if xi.n_groups != s.M:
        v.append(f"design has {xi.n_groups} groups, structure expects {s.M}")
    lam = np.asarray(xi.allocation.lambdas)
    if np.any(lam < 0) or np.any(lam > 1):
        v.append("allocation: lambda outside [0, 1]")
    if abs(lam.sum() - 1.0) > SUM_TOL:
        v.append(f"allocation: weight sum {lam.sum():.15g} != 1")
    for i, g in enumerate(xi.groups):
        pts = np.asarray(g.points)
        ws = np.asarray(g.weights)
        if not np.all(np.isfinite(pts)):
            v.append(f"group {i + 1}: non-finite dose")
        if np.any(np.diff(pts) <= 0):
            v.append(f"group {i + 1}: points not strictly increasing")
        if np.any(ws <= 0) or np.any(ws > 1):
            v.append(f"group {i + 1}: weight outside (0, 1]")
        if abs(ws.sum() - 1.0) > SUM_TOL:
            v.append(f"group {i + 1}: weight sum {ws.sum():.15g} != 1")
        if i < s.M:
            dmax = s.spaces[i].d_max
            bad = pts[(pts < 0) | (pts > dmax)]
            if bad.size:
                v.append(f"group {i + 1}: dose {bad[0]:g} out of bounds [0, {dmax:g}]")
    if saturated and xi.total_support != s.m:
        v.append(f"saturated design needs {s.m} support points, has {xi.total_support}")
    return res
