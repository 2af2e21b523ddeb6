"""Correlated random walk whose small-step limit is the kinetic system.

Each step of length ``dt`` a particle in state ``i`` keeps its state with
probability ``p_i = 1 - sum_j mu_ij dt`` or jumps to ``j`` with probability
``mu_ij dt``, and is then displaced by ``v_new * dt``: a particle that
switches already moves with its new velocity during the switching step.

Randomness is counter-based: the uniforms for step ``s`` of particle block
``b`` come from a Philox stream keyed by the master seed with counter
``(0, 0, s, b)``. Results therefore do not depend on how blocks are
scheduled across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from vjump.errors import ValidationError
from vjump.model import VelocityModel
from vjump.spectral import Grid, InitialDatum, SpectralField

BLOCK = 65536
_INIT_STEP = 2**63  # counter slot reserved for initial sampling


def default_dt(model: VelocityModel) -> float:
    out = model.rates.sum(axis=1).max()
    return 0.1 / out if out > 0 else 0.1


@lru_cache(maxsize=64)
def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def _stream(seed: int, step: int, block: int) -> np.random.Generator:
    counter = np.array([0, 0, step, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(seed), counter=counter))


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    model: VelocityModel
    positions: np.ndarray  # (count, d)
    states: np.ndarray  # (count,), 0-based speed indices
    time: float
    dt: float
    seed: int
    steps: int = 0
    box: float | None = None  # periodic half-width, None for free space

    def __post_init__(self):
        p = 1.0 - self.model.rates.sum(axis=1) * self.dt
        if self.dt <= 0 or np.any(p < 0):
            raise ValidationError(
                f"dt={self.dt} too large: staying probabilities must be nonnegative",
                "particles.dt",
            )

    @property
    def count(self) -> int:
        return self.states.shape[0]

    def to_csv_rows(self):
        for x, s in zip(self.positions, self.states):
            yield [*x.tolist(), int(s)]


def sample_ensemble(model: VelocityModel, datum: InitialDatum, count: int, seed: int,
                    dt: float | None = None, box: float | None = None) -> ParticleEnsemble:
    """Draw ``count`` particles from the Gaussian mixture described by ``datum``.

    Bumps are chosen in proportion to their mass; negative amplitudes and
    constant offsets cannot be sampled and are rejected.
    """
    if not datum.bumps or datum.offsets or any(b.amplitude <= 0 for b in datum.bumps):
        raise ValidationError("particle sampling needs positive Gaussian bumps only", "initial")
    dt = default_dt(model) if dt is None else float(dt)
    d = model.d
    masses = np.array([b.mass(d) for b in datum.bumps])
    rng = _stream(seed, _INIT_STEP, 0)
    which = rng.choice(len(masses), size=count, p=masses / masses.sum())
    centers = np.array([np.reshape(b.center, d) for b in datum.bumps], dtype=float)
    widths = np.array([b.width for b in datum.bumps])
    pos = centers[which] + widths[which, None] * rng.standard_normal((count, d))
    states = np.array([b.component for b in datum.bumps])[which]
    if box is not None:
        pos = (pos + box) % (2 * box) - box
    return ParticleEnsemble(model, pos, states, 0.0, dt, int(seed), 0, box)


def _transition_table(model: VelocityModel, dt: float):
    """Staying probabilities and cumulative switching thresholds.

    A uniform ``u`` keeps state ``i`` when ``u < stay[i]``; otherwise the new
    state is the first ``j`` with ``u < cum[i, j]``.
    """
    P = model.rates * dt
    stay = 1.0 - P.sum(axis=1)
    cum = stay[:, None] + np.cumsum(P, axis=1)
    cum[:, -1] = np.inf  # guards against cumulative rounding below 1
    return stay, cum


def _advance_block(ens: ParticleEnsemble, table, lo, hi, block):
    stay, cum = table
    u = _stream(ens.seed, ens.steps, block).random(hi - lo)
    new = ens.states[lo:hi].copy()
    jump = np.flatnonzero(u >= stay[new])
    if jump.size:
        new[jump] = np.sum(u[jump, None] >= cum[new[jump]], axis=1)
    pos = ens.positions[lo:hi] + ens.model.velocities[new] * ens.dt
    return pos, new


def step(ens: ParticleEnsemble, workers: int = 1) -> ParticleEnsemble:
    """Advance every particle by one time step."""
    table = _transition_table(ens.model, ens.dt)
    bounds = [(lo, min(lo + BLOCK, ens.count), b) for b, lo in enumerate(range(0, ens.count, BLOCK))]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _advance_block(ens, table, *a), bounds))
    else:
        parts = [_advance_block(ens, table, *a) for a in bounds]
    pos = np.concatenate([p for p, _ in parts]) if parts else ens.positions.copy()
    states = np.concatenate([s for _, s in parts]) if parts else ens.states.copy()
    if ens.box is not None:
        pos = (pos + ens.box) % (2 * ens.box) - ens.box
    return replace(ens, positions=pos, states=states, steps=ens.steps + 1,
                   time=(ens.steps + 1) * ens.dt)


def run(ens: ParticleEnsemble, t: float, workers: int = 1) -> ParticleEnsemble:
    """Step until the ensemble time reaches ``t`` (rounded to whole steps)."""
    target = int(round(t / ens.dt))
    while ens.steps < target:
        ens = step(ens, workers)
    return ens


def density_histogram(ens: ParticleEnsemble, grid: Grid) -> SpectralField:
    """Mass-normalized density on the grid's points (cells centred on them)."""
    if grid.d != ens.model.d:
        raise ValidationError("grid and ensemble dimensions differ")
    h = grid.spacing
    idx = np.floor((ens.positions + grid.L) / h + 0.5).astype(np.int64) % grid.N
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.N**grid.d).reshape(grid.shape)
    density = counts / (ens.count * grid.cell_volume)
    return SpectralField.from_physical(grid, density)


def telegraph_variance(nu: float, mu: float, t: float) -> float:
    """Position variance of the two-speed walk started from its stationary state."""
    if t == 0:
        return 0.0
    return nu**2 / mu * t * (1 - (1 - np.exp(-2 * mu * t)) / (2 * mu * t))
