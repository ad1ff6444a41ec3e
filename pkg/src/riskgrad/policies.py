"""Boltzmann policies over feature maps, with score-function evaluation.

A policy keeps one independent parameter block per action; action scores are
``theta[a] . phi(state)`` and probabilities come from an overflow-safe softmax
(scores are shifted by their max, which leaves probabilities unchanged in
exact arithmetic). The same machinery serves plain states (integer ids) and
augmented ``(x, s)`` states — the feature map decides what a "state" is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .mdp import Trajectory


# ---------------------------------------------------------------------------
# feature maps
# ---------------------------------------------------------------------------


class TabularFeatures:
    """One-hot features over integer state ids (linearly independent)."""

    kind = "tabular"

    def __init__(self, n_states: int):
        self.dimension = int(n_states)
        self._eye = np.eye(self.dimension)

    def __call__(self, state: int) -> np.ndarray:
        return self._eye[int(state)]

    def matrix(self) -> np.ndarray:
        return self._eye


def _clamp(z: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    # inputs are clamped to the declared box so perturbed evaluations at the
    # box edge stay defined
    return np.clip(z, ranges[:, 0], ranges[:, 1])


class RbfFeatures:
    """Gaussian radial basis grid over a box of real inputs.

    Centers sit on a uniform grid over ``ranges`` (one count per coordinate);
    the per-coordinate bandwidth equals the grid spacing.
    """

    kind = "rbf"

    def __init__(self, ranges, counts):
        self.ranges = np.asarray(ranges, dtype=float).reshape(-1, 2)
        counts = np.asarray(counts, dtype=int).ravel()
        if len(counts) != len(self.ranges):
            raise DimensionMismatch("one grid count per input coordinate")
        axes = []
        widths = []
        for (lo, hi), c in zip(self.ranges, counts):
            if c < 1 or hi <= lo:
                raise ValueError("rbf grid needs hi > lo and count >= 1")
            pts = np.linspace(lo, hi, c)
            axes.append(pts)
            widths.append((hi - lo) / max(c - 1, 1))
        grids = np.meshgrid(*axes, indexing="ij")
        self.centers = np.stack([g.ravel() for g in grids], axis=1)
        self.bandwidth = np.asarray(widths, dtype=float)
        self.dimension = len(self.centers)

    def __call__(self, z) -> np.ndarray:
        z = _clamp(np.asarray(z, dtype=float).ravel(), self.ranges)
        if z.shape != (self.ranges.shape[0],):
            raise DimensionMismatch("input dimension does not match ranges")
        d = (z[None, :] - self.centers) / self.bandwidth[None, :]
        return np.exp(-0.5 * np.sum(d * d, axis=1))


class FourierFeatures:
    """Cosine Fourier basis of a given order over a box of real inputs."""

    kind = "fourier"

    def __init__(self, ranges, order: int):
        self.ranges = np.asarray(ranges, dtype=float).reshape(-1, 2)
        self.order = int(order)
        d = len(self.ranges)
        grids = np.meshgrid(*[np.arange(self.order + 1)] * d, indexing="ij")
        self.coefficients = np.stack([g.ravel() for g in grids], axis=1).astype(float)
        self.dimension = len(self.coefficients)

    def __call__(self, z) -> np.ndarray:
        z = _clamp(np.asarray(z, dtype=float).ravel(), self.ranges)
        lo, hi = self.ranges[:, 0], self.ranges[:, 1]
        unit = (z - lo) / (hi - lo)
        return np.cos(np.pi * self.coefficients @ unit)


# ---------------------------------------------------------------------------
# parameters and score function
# ---------------------------------------------------------------------------


@dataclass
class PolicyParams:
    """Per-action parameter blocks constrained to the box [-b, b]^dim."""

    theta: np.ndarray  # shape (n_actions, dim)
    box_bound: float = 20.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 2:
            raise DimensionMismatch("theta must be (n_actions, feature_dim)")

    @property
    def n_actions(self) -> int:
        return self.theta.shape[0]

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    def project(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, -self.box_bound, self.box_bound)

    @classmethod
    def zeros(cls, n_actions: int, dim: int, box_bound: float = 20.0) -> "PolicyParams":
        return cls(theta=np.zeros((n_actions, dim)), box_bound=box_bound)


def action_probabilities(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape != (params.dim,):
        raise DimensionMismatch(
            f"features have shape {features.shape}, expected ({params.dim},)"
        )
    scores = params.theta @ features
    scores = scores - scores.max()
    e = np.exp(scores)
    return e / e.sum()


def grad_log_policy(params: PolicyParams, features: np.ndarray, action: int) -> np.ndarray:
    """Gradient of log softmax-policy probability for one action.

    Returns an array shaped like ``theta``; the block for action ``a`` equals
    ``(1{a == action} - mu(a)) * features``.
    """
    if not 0 <= action < params.n_actions:
        raise DimensionMismatch(f"action {action} out of range")
    mu = action_probabilities(params, features)
    coeff = -mu
    coeff[action] += 1.0
    return np.outer(coeff, np.asarray(features, dtype=float))


class BoltzmannPolicy:
    """Feature map plus parameters, exposing the sampler-facing interface."""

    def __init__(self, features, params: PolicyParams):
        self.features = features
        self.params = params
        if params.dim != features.dimension:
            raise DimensionMismatch("params and feature map disagree on dimension")

    def probs(self, state) -> np.ndarray:
        return action_probabilities(self.params, self.features(state))

    def grad_log(self, state, action: int) -> np.ndarray:
        return grad_log_policy(self.params, self.features(state), action)

    def prob_table(self, n_states: int) -> np.ndarray:
        """Action probabilities for every integer state id, stacked."""
        return np.stack([self.probs(x) for x in range(n_states)])

    def with_params(self, theta: np.ndarray) -> "BoltzmannPolicy":
        return BoltzmannPolicy(
            self.features, PolicyParams(theta=theta, box_bound=self.params.box_bound)
        )

    def score(self, traj: Trajectory) -> np.ndarray:
        """Summed log-policy gradient along a trajectory."""
        total = np.zeros_like(self.params.theta)
        for x, a in zip(traj.states, traj.actions):
            total += self.grad_log(int(x), int(a))
        return total

    # -- checkpointing ------------------------------------------------------

    def to_checkpoint(self) -> dict:
        return {
            "kind": getattr(self.features, "kind", "custom"),
            "dimension": self.params.dim,
            "theta": self.params.theta.ravel().tolist(),
            "box_bound": self.params.box_bound,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def load_params(self, doc: dict) -> None:
        theta = np.asarray(doc["theta"], dtype=float).reshape(self.params.theta.shape)
        self.params = PolicyParams(theta=theta, box_bound=float(doc["box_bound"]))


def attach_scores(policy: BoltzmannPolicy, batch: list[Trajectory]) -> list[Trajectory]:
    for traj in batch:
        traj.score = policy.score(traj)
    return batch
