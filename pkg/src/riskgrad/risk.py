"""Exact and empirical VaR, CVaR, and the hinge functional they both minimize.

All three operations accept either a plain sample batch (uniform weights) or
an exact finite distribution (values with probability weights). Ties at the
quantile boundary are handled by fractional-weight splitting of the boundary
atom, which makes ``cvar_alpha(Z, a) == min_nu h_alpha(Z, nu, a)`` hold
exactly on discrete batches, with the minimizer at ``var_alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch

_WEIGHT_TOL = 1e-12
_ALPHA_MARGIN = 1e-12


@dataclass(frozen=True)
class SampleBatch:
    """Realizations of a scalar cost variable, optionally with exact weights."""

    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", values)
        if values.size == 0:
            raise EmptyBatch("sample batch must be nonempty")
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float).ravel()
            object.__setattr__(self, "weights", weights)
            if weights.shape != values.shape:
                raise ValueError("weights must match values in length")
            if np.any(weights < 0.0):
                raise ValueError("weights must be nonnegative")
            if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
                raise ValueError("weights must sum to 1 within 1e-12")

    def effective_weights(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        n = self.values.size
        return np.full(n, 1.0 / n)


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0 or 1.0 - alpha < _ALPHA_MARGIN:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    return float(alpha)


def _sorted(batch: SampleBatch) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(batch.values, kind="stable")
    return batch.values[order], batch.effective_weights()[order]


def var_alpha(batch: SampleBatch, alpha: float) -> float:
    """Smallest sample value whose weighted CDF reaches ``alpha``."""
    alpha = _check_alpha(alpha)
    z, w = _sorted(batch)
    cum = np.cumsum(w)
    # guard against cumulative rounding leaving cum[-1] a hair below alpha
    cum[-1] = max(cum[-1], 1.0)
    i = int(np.searchsorted(cum, alpha, side="left"))
    return float(z[i])


def cvar_alpha(batch: SampleBatch, alpha: float) -> float:
    """Mean of the worst ``1 - alpha`` tail, splitting the boundary atom.

    Computed in closed form from the sorted samples:
    ``(1/(1-alpha)) * [(F(z*) - alpha) * z* + sum_{z > z*} w z]`` where ``z*``
    is the alpha-quantile. Equals ``min_nu h_alpha(batch, nu, alpha)``.
    """
    alpha = _check_alpha(alpha)
    z, w = _sorted(batch)
    cum = np.cumsum(w)
    cum[-1] = max(cum[-1], 1.0)
    i = int(np.searchsorted(cum, alpha, side="left"))
    boundary = (cum[i] - alpha) * z[i]
    tail = float(np.dot(w[i + 1 :], z[i + 1 :]))
    return float((boundary + tail) / (1.0 - alpha))


def h_alpha(batch: SampleBatch, nu: float, alpha: float) -> float:
    """The hinge functional ``nu + E[(Z - nu)^+] / (1 - alpha)``."""
    alpha = _check_alpha(alpha)
    w = batch.effective_weights()
    excess = np.maximum(batch.values - nu, 0.0)
    return float(nu + np.dot(w, excess) / (1.0 - alpha))
