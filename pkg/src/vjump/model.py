"""Velocity-jump model instances and their structural checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from vjump.errors import ValidationError

MAX_SPEEDS = 64
SPAN_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class VelocityModel:
    """Finitely many velocities in R^d with transition rates between them.

    ``rates[i, j]`` is the rate of switching from velocity ``i`` to velocity
    ``j``. The diagonal is unused and stored as zero. Symmetric rates are the
    normal case; asymmetric ones must be requested explicitly and are only
    accepted by operations that document support for them.
    """

    velocities: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        v = np.array(self.velocities, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValidationError("velocities must be an (n, d) array", "model.velocities")
        n = v.shape[0]
        if n < 2:
            raise ValidationError(f"need at least 2 speeds, got {n}", "model.velocities")
        if n > MAX_SPEEDS:
            raise ValidationError(f"at most {MAX_SPEEDS} speeds supported, got {n}",
                                  "model.velocities")
        mu = np.array(self.rates, dtype=float)
        if mu.shape != (n, n):
            raise ValidationError(f"rates must be {n}x{n}, got {mu.shape}", "model.rates")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(v))):
            raise ValidationError("non-finite entries in model", "model")
        off = ~np.eye(n, dtype=bool)
        if np.any(mu[off] < 0):
            i, j = np.argwhere((mu < 0) & off)[0]
            raise ValidationError(f"negative rate mu[{i},{j}] = {mu[i, j]}", "model.rates")
        np.fill_diagonal(mu, 0.0)
        v.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "rates", mu)

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    @property
    def d(self) -> int:
        return self.velocities.shape[1]

    @property
    def is_symmetric(self) -> bool:
        # exact comparison: rates are read from input, never computed
        return bool(np.array_equal(self.rates, self.rates.T))

    @classmethod
    def from_arcs(cls, velocities, arcs, asymmetric=False):
        """Build from an arc list ``[(i, j, mu), ...]`` with 0-based indices.

        Without ``asymmetric`` each arc sets both ``mu[i, j]`` and ``mu[j, i]``;
        with it, arcs are directed.
        """
        v = np.array(velocities, dtype=float)
        n = v.shape[0]
        mu = np.zeros((n, n))
        for k, (i, j, rate) in enumerate(arcs):
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValidationError(f"arc ({i}, {j}) out of range for n={n}",
                                      f"model.rates[{k}]")
            mu[i, j] = rate
            if not asymmetric:
                mu[j, i] = rate
        return cls(v, mu)

    @classmethod
    def goldstein_kac(cls, nu=1.0, mu=1.0, mu21=None):
        """Two speeds -nu, +nu on the line; ``mu21`` makes the rates asymmetric."""
        mu21 = mu if mu21 is None else mu21
        return cls([[-nu], [nu]], [[0.0, mu], [mu21, 0.0]])

    def with_velocities(self, velocities) -> "VelocityModel":
        return VelocityModel(velocities, self.rates)

    def to_dict(self):
        return {
            "d": self.d,
            "velocities": self.velocities.tolist(),
            "rates": self.rates.tolist(),
        }


def build_transition_matrix(model: VelocityModel) -> np.ndarray:
    """Transition matrix B of the kinetic system ``f_t + A.grad f + B f = 0``.

    Entry ``(i, j)`` is ``-mu[j, i]`` (inflow from ``j`` into ``i``) and the
    diagonal holds the total outflow rate of ``i``, so every column sums to
    zero. For symmetric rates B is the weighted Laplacian of the rate graph.
    """
    mu = model.rates
    B = -mu.T.copy()
    np.fill_diagonal(B, mu.sum(axis=1))
    B.setflags(write=False)
    return B


def check_irreducible(model: VelocityModel):
    """Connectivity of the graph with an arc wherever a rate is nonzero.

    Returns ``(connected, labels)`` with one component label per speed.
    Zero rates are absent arcs; there is no threshold.
    """
    adj = (model.rates > 0) | (model.rates.T > 0)
    ncomp, labels = connected_components(adj.astype(np.int8), directed=False)
    return ncomp == 1, labels


def velocity_differences(model: VelocityModel) -> np.ndarray:
    v = model.velocities
    i, j = np.triu_indices(model.n, k=1)
    return v[i] - v[j]


def check_span_condition(model: VelocityModel):
    """Whether the pairwise velocity differences span R^d.

    Returns ``(spans, rank)``; the rank uses a singular-value cutoff relative
    to the largest singular value.
    """
    diffs = velocity_differences(model)
    s = np.linalg.svd(diffs, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False, 0
    rank = int(np.sum(s > SPAN_RTOL * s[0]))
    return rank == model.d, rank


def check_sk_condition(model: VelocityModel) -> bool:
    """Irreducibility together with the span condition.

    This pair is sufficient for the Shizuta-Kawashima dissipativity condition
    and hence for strict decay of every nonzero frequency.
    """
    if not model.is_symmetric:
        raise ValidationError("SK check is defined for symmetric rates only", "model.rates")
    connected, _ = check_irreducible(model)
    spans, _ = check_span_condition(model)
    return bool(connected and spans)
