"""Emax, exponential and linear-in-log regression functions and gradients.

Each family is ``θ0 + θ1·η(d, θ2)`` with ``η(0, θ2) = 0``. Gradients are
closed form; ``zeta`` below is ``∂η/∂θ2``.
"""

from __future__ import annotations

import numpy as np

from .core import ModelKind, ParameterStructure, SharingMode


def eta(kind: ModelKind, d, t):
    """Dose-effect shape η(d, θ2), vectorized."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind is ModelKind.EMAX:
        return d / (t + d)
    if kind is ModelKind.EXPONENTIAL:
        return np.expm1(d / t)
    if kind is ModelKind.LINEAR_IN_LOG:
        return np.log1p(d / t)
    raise ValueError(f"unknown model kind {kind!r}")


def zeta(kind: ModelKind, d, t):
    """Partial derivative ∂η/∂θ2, vectorized."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind is ModelKind.EMAX:
        return -d / (t + d) ** 2
    if kind is ModelKind.EXPONENTIAL:
        return -(d / t ** 2) * np.exp(d / t)
    if kind is ModelKind.LINEAR_IN_LOG:
        return -d / (t * (t + d))
    raise ValueError(f"unknown model kind {kind!r}")


def _check_scalar(d, theta2, sigma2=1.0):
    if not theta2 > 0:
        raise ValueError(f"θ2 must be positive, got {theta2}")
    if not sigma2 > 0:
        raise ValueError(f"σ² must be positive, got {sigma2}")
    if d < 0:
        raise ValueError(f"dose must be nonnegative, got {d}")


def eval_regression(kind, d: float, theta) -> float:
    """Model mean at dose ``d`` for ``theta = (θ0, θ1, θ2)``."""
    kind = ModelKind(kind)
    t0, t1, t2 = map(float, theta)
    _check_scalar(d, t2)
    with np.errstate(over="raise"):
        try:
            return float(t0 + t1 * eta(kind, d, t2))
        except FloatingPointError as exc:
            raise OverflowError(f"overflow evaluating {kind.value} at d/θ2={d / t2:g}") from exc


def gradient_individual(kind, d: float, theta, sigma2: float = 1.0) -> np.ndarray:
    """(1/σ)·∂f/∂(θ0, θ1, θ2) for the three-parameter model."""
    kind = ModelKind(kind)
    t0, t1, t2 = map(float, theta)
    _check_scalar(d, t2, sigma2)
    with np.errstate(over="raise"):
        try:
            g = np.array([1.0, eta(kind, d, t2), t1 * zeta(kind, d, t2)])
        except FloatingPointError as exc:
            raise OverflowError(f"overflow evaluating {kind.value} at d/θ2={d / t2:g}") from exc
    return g / np.sqrt(sigma2)


def group_gradients(s: ParameterStructure, group: int, doses, thetas) -> np.ndarray:
    """Gradient vectors h_i(d, θ) for many doses and parameter vectors at once.

    ``group`` is zero-based. ``doses`` has shape ``(*B, K)`` and ``thetas``
    shape ``(A, m)``; the result has shape ``(*B, A, K, m)``.
    """
    if not 0 <= group < s.M:
        raise IndexError(f"group index {group} out of range for M={s.M}")
    doses = np.asarray(doses, dtype=float)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    d = doses[..., None, :]
    p, q = s.p, s.q
    out = np.zeros(doses.shape[:-1] + (thetas.shape[0], doses.shape[-1], s.m))
    kind = s.model
    with np.errstate(over="raise"):
        try:
            if s.sharing is SharingMode.INDIVIDUAL:
                t1 = thetas[:, 1, None]
                t2 = thetas[:, 2, None]
                out[..., 0] = 1.0
                out[..., 1] = eta(kind, d, t2)
                out[..., 2] = t1 * zeta(kind, d, t2)
            elif s.sharing is SharingMode.COMMON_LOCATION:
                base = p + q * group
                slope = thetas[:, base, None]
                t2 = thetas[:, base + 1, None]
                out[..., 0] = 1.0
                out[..., base] = eta(kind, d, t2)
                out[..., base + 1] = slope * zeta(kind, d, t2)
            else:
                scale = thetas[:, 1, None]
                t2 = thetas[:, p + group, None]
                out[..., 0] = 1.0
                out[..., 1] = eta(kind, d, t2)
                out[..., p + group] = scale * zeta(kind, d, t2)
        except FloatingPointError as exc:
            raise OverflowError(f"overflow in {kind.value} gradient") from exc
    return out / np.sqrt(s.sigma2[group])


def gradient_group(s: ParameterStructure, group_index: int, d: float, theta) -> np.ndarray:
    """Length-m gradient h_i(d, θ) for group ``group_index`` (1-based)."""
    if not 1 <= group_index <= s.M:
        raise IndexError(f"group index {group_index} out of range 1..{s.M}")
    theta = s.check_theta(theta)
    if d < 0:
        raise ValueError(f"dose must be nonnegative, got {d}")
    return group_gradients(s, group_index - 1, np.array([d]), theta[None, :])[0, 0]
