"""Large-time comparison of the kinetic total density with its parabolic limit.

Both fields start from the same datum on a shared grid. At geometrically
spaced times we record the L2 norms of the kinetic density ``u``, of the
parabolic solution ``u_par`` and of their difference, then fit log-log
slopes. For a diffusive system in ``d`` dimensions the expected exponents are
``-d/4`` for the norms and ``-d/4 - 1/2`` for the difference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from vjump import dispersion, spectral
from vjump.errors import NumericalGuardError, PreconditionError
from vjump.model import VelocityModel, check_sk_condition
from vjump.spectral import Grid, InitialDatum

SLOPE_TOL = 0.1
PARABOLIC_FACTOR = 0.5  # D_effective = PARABOLIC_FACTOR * Hessian of the slow branch


def decay_times(t_min: float, t_max: float, per_decade: int) -> np.ndarray:
    count = int(round(per_decade * np.log10(t_max / t_min))) + 1
    return np.geomspace(t_min, t_max, max(count, 2))


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    expected: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(abs(self.slope - self.expected) <= self.tolerance)

    def to_dict(self):
        return {"slope": self.slope, "stderr": self.stderr, "expected": self.expected,
                "tolerance": self.tolerance, "pass": self.passed}


def fit_slope(t, y, expected=np.nan, tolerance=SLOPE_TOL) -> SlopeFit:
    """Ordinary least squares slope of ``log y`` against ``log t``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 3 or np.any(y <= 0):
        return SlopeFit(np.nan, np.nan, expected, tolerance)
    res = linregress(np.log(t), np.log(y))
    return SlopeFit(float(res.slope), float(res.stderr), expected, tolerance)


@dataclass
class DecayStudy:
    d: int
    rows: np.ndarray  # columns t, |u|, |u_par|, |u - u_par|
    window: tuple
    fits: dict
    D_effective: np.ndarray
    horizon: float
    truncated: int = 0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.fits.values())

    def summary(self):
        return {
            "d": self.d,
            "window": list(self.window),
            "horizon": self.horizon,
            "truncated_rows": self.truncated,
            "D_effective": self.D_effective.tolist(),
            "fits": {k: f.to_dict() for k, f in self.fits.items()},
            "pass": self.passed,
            "notes": list(self.notes),
        }


def run_decay(model: VelocityModel, grid: Grid, datum: InitialDatum, times,
              window=None, factor: float = PARABOLIC_FACTOR,
              tolerance: float = SLOPE_TOL, difference_tolerance: float | None = None) -> DecayStudy:
    """Evolve both equations and fit the decay exponents.

    ``factor`` scales the Hessian of the slow branch into the parabolic
    coefficient; values other than the default exist for control runs.
    Times past the wrap-around horizon of the box are dropped with a warning.
    """
    if not check_sk_condition(model):
        raise PreconditionError("SK condition fails: need irreducible rates and spanning velocity differences")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 3 or np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise PreconditionError("decay study needs at least 3 positive, strictly increasing times")
    drift, D = dispersion.hessian_oracle(model)
    D_eff = factor * D
    ev = np.linalg.eigvalsh(D_eff)
    if ev.min() <= 1e-12 * max(ev.max(), np.finfo(float).tiny):
        raise PreconditionError("diffusion matrix is singular: decay study needs it positive definite")

    vmax = float(np.max(np.linalg.norm(model.velocities, axis=1)))
    horizon = spectral.safe_horizon(vmax, float(ev.max()), datum.max_width(), grid.L)
    keep = times <= horizon
    notes = []
    truncated = int(np.sum(~keep))
    if truncated:
        msg = f"{truncated} times beyond wrap-around horizon t={horizon:.6g} dropped"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        times = times[keep]
        if times.size < 3:
            raise NumericalGuardError(f"fewer than 3 times inside the wrap-around horizon t={horizon:.6g}")

    f0 = datum.sample(grid, model.n)
    u0 = spectral.total_density(f0)
    rows = []
    for t in times:
        u = spectral.total_density(spectral.solve_hyperbolic(model, f0, t))
        up = spectral.solve_parabolic(D_eff, u0, t, drift=drift)
        rows.append((t, spectral.l2_norm(u), spectral.l2_norm(up), spectral.l2_distance(u, up)))
    rows = np.array(rows)

    if window is None:
        window = (rows[-1, 0] / 10.0, rows[-1, 0])
    sel = (rows[:, 0] >= window[0] * (1 - 1e-12)) & (rows[:, 0] <= window[1] * (1 + 1e-12))
    d = model.d
    dtol = tolerance if difference_tolerance is None else difference_tolerance
    fits = {
        "u": fit_slope(rows[sel, 0], rows[sel, 1], -d / 4, tolerance),
        "u_par": fit_slope(rows[sel, 0], rows[sel, 2], -d / 4, tolerance),
        "difference": fit_slope(rows[sel, 0], rows[sel, 3], -d / 4 - 0.5, dtol),
    }
    return DecayStudy(d, rows, tuple(map(float, window)), fits, D_eff, float(horizon), truncated, notes)
