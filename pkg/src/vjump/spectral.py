"""Exact-in-time Fourier solver on the periodic box [-L, L)^d.

A field is stored by its Fourier coefficients ``c_m`` with
``f(x) = sum_m c_m exp(i kappa_m . (x + L))`` and ``kappa_m = pi m / L``, i.e.
the plain discrete Fourier transform of the samples on ``-L + 2 L j / N``.
The kinetic system is advanced mode by mode with the matrix exponential of
``-(B + i diag(v . kappa)) t``; the parabolic comparison equation with the
scalar multiplier ``exp(-(kappa . D kappa) t - i (drift . kappa) t)``.
Modes on a Nyquist line are discarded by the kinetic propagator for t > 0
(and by the parabolic one when a drift is present): their wavenumber sign is
ambiguous on the grid, and keeping them would break the semigroup property.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from vjump.errors import NumericalGuardError, PreconditionError, ValidationError
from vjump.model import VelocityModel, build_transition_matrix

COND_LIMIT = 1e3
RINGING_RTOL = 1e-8


@dataclass(frozen=True)
class Grid:
    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("grid dimension must be >= 1", "grid")
        if self.L <= 0:
            raise ValidationError("box half-width L must be positive", "grid.L")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValidationError("N must be a power of two >= 8", "grid.N")

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def spacing(self) -> float:
        return 2 * self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def volume(self) -> float:
        return (2 * self.L) ** self.d

    def axis(self) -> np.ndarray:
        return -self.L + self.spacing * np.arange(self.N)

    def coordinates(self) -> np.ndarray:
        """Physical points, shape ``(d, N, ..., N)``."""
        ax = self.axis()
        return np.array(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def wavenumbers(self) -> np.ndarray:
        """Frequencies ``kappa_m``, shape ``(d, N, ..., N)``."""
        k = np.fft.fftfreq(self.N, d=self.spacing) * 2 * np.pi
        return np.array(np.meshgrid(*([k] * self.d), indexing="ij"))

    def nyquist_mask(self) -> np.ndarray:
        """Modes on a Nyquist line, whose wavenumber sign is ambiguous."""
        idx = np.indices(self.shape)
        return np.any(idx == self.N // 2, axis=0)

    def mirror(self, coeffs: np.ndarray) -> np.ndarray:
        """``c(-m)`` for every ``m``, on the trailing ``d`` axes."""
        axes = tuple(range(-self.d, 0))
        return np.roll(np.flip(coeffs, axis=axes), 1, axis=axes)


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray  # (components, N, ..., N), complex

    @property
    def n_components(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def from_physical(cls, grid: Grid, values) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.shape == grid.shape:
            values = values[None]
        if values.shape[1:] != grid.shape:
            raise ValidationError(f"field shape {values.shape} does not match grid {grid.shape}")
        axes = tuple(range(1, grid.d + 1))
        return cls(grid, np.fft.fftn(values, axes=axes) / grid.N**grid.d)

    def to_physical(self) -> np.ndarray:
        axes = tuple(range(1, self.grid.d + 1))
        return np.fft.ifftn(self.coeffs * self.grid.N**self.grid.d, axes=axes).real

    def mean_mode(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.d]

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i : i + 1])


@dataclass(frozen=True)
class Gaussian:
    """``amplitude * exp(-|x - center|^2 / (2 width^2))`` in one component."""

    component: int
    amplitude: float
    center: tuple
    width: float

    def mass(self, d: int) -> float:
        return self.amplitude * (np.sqrt(2 * np.pi) * self.width) ** d


@dataclass(frozen=True)
class InitialDatum:
    bumps: tuple = ()
    offsets: tuple = ()  # (component, constant) pairs

    def max_width(self) -> float:
        return max((b.width for b in self.bumps), default=0.0)

    def mass(self, d: int) -> float:
        return sum(b.mass(d) for b in self.bumps)

    def sample(self, grid: Grid, n_components: int) -> SpectralField:
        """Evaluate on the grid, summing periodic images that reach the box."""
        x = grid.coordinates()
        f = np.zeros((n_components,) + grid.shape)
        period = 2 * grid.L
        for b in self.bumps:
            if not 0 <= b.component < n_components:
                raise ValidationError(f"component {b.component} out of range", "initial")
            if b.width <= 0:
                raise ValidationError("Gaussian width must be positive", "initial")
            c = np.asarray(b.center, dtype=float).reshape(grid.d)
            r2 = np.zeros(grid.shape)
            for a in range(grid.d):
                # nearest periodic image
                dx = (x[a] - c[a] + grid.L) % period - grid.L
                r2 += dx**2
            f[b.component] += b.amplitude * np.exp(-r2 / (2 * b.width**2))
        for comp, value in self.offsets:
            f[comp] += value
        return SpectralField.from_physical(grid, f)


def _model_key(model: VelocityModel):
    return (model.velocities.tobytes(), model.velocities.shape, model.rates.tobytes())


class HyperbolicPropagator:
    """Per-mode propagators of the kinetic system on a fixed grid.

    Each mode generator is diagonalized once; propagating to any time is then
    ``V exp(lam t) V^-1``. Modes whose eigenvector matrix is ill-conditioned
    (near coalescing eigenvalues) fall back to a direct matrix exponential.
    """

    def __init__(self, model: VelocityModel, grid: Grid):
        if grid.d != model.d:
            raise ValidationError(f"grid dimension {grid.d} != model dimension {model.d}")
        self.model = model
        self.grid = grid
        B = build_transition_matrix(model)
        n = model.n
        kap = grid.wavenumbers().reshape(grid.d, -1).T  # (modes, d)
        proj = kap @ model.velocities.T  # (modes, n)
        gen = -(B[None] + 1j * proj[:, :, None] * np.eye(n)[None])
        lam, V = np.linalg.eig(gen)
        Vinv = np.linalg.inv(V)
        cond = np.linalg.norm(V, axis=(1, 2)) * np.linalg.norm(Vinv, axis=(1, 2))
        self.lam = lam
        self.V = V
        self.Vinv = Vinv
        self.fallback = np.flatnonzero(~(cond < COND_LIMIT * n))
        self._fallback_gen = gen[self.fallback]

    def apply(self, f0: SpectralField, t: float) -> SpectralField:
        if t < 0:
            raise ValidationError(f"time must be nonnegative, got {t}")
        if f0.grid != self.grid or f0.n_components != self.model.n:
            raise ValidationError("field does not match the propagator's grid or model")
        if t == 0:
            return SpectralField(self.grid, f0.coeffs.copy())
        n = self.model.n
        c = f0.coeffs.reshape(n, -1).T  # (modes, n)
        w = np.einsum("mij,mj->mi", self.Vinv, c)
        out = np.einsum("mij,mj->mi", self.V, np.exp(self.lam * t) * w)
        if self.fallback.size:
            P = expm(self._fallback_gen * t)
            out[self.fallback] = np.einsum("mij,mj->mi", P, c[self.fallback])
        coeffs = out.T.reshape(f0.coeffs.shape)
        coeffs[:, self.grid.nyquist_mask()] = 0.0
        # enforce c(-m) = conj c(m) exactly
        coeffs = 0.5 * (coeffs + np.conj(self.grid.mirror(coeffs)))
        return SpectralField(self.grid, coeffs)


_PROPAGATORS: OrderedDict = OrderedDict()


def propagator(model: VelocityModel, grid: Grid) -> HyperbolicPropagator:
    key = (_model_key(model), grid)
    prop = _PROPAGATORS.get(key)
    if prop is None:
        prop = HyperbolicPropagator(model, grid)
        _PROPAGATORS[key] = prop
        while len(_PROPAGATORS) > 4:
            _PROPAGATORS.popitem(last=False)
    else:
        _PROPAGATORS.move_to_end(key)
    return prop


def solve_hyperbolic(model: VelocityModel, f0: SpectralField, t: float) -> SpectralField:
    """Kinetic solution at time ``t`` from ``f0`` (exact in time)."""
    return propagator(model, f0.grid).apply(f0, t)


def solve_parabolic(D_effective, u0: SpectralField, t: float, drift=None) -> SpectralField:
    """Solution of ``u_t + drift . grad u = div(D_effective grad u)``."""
    if t < 0:
        raise ValidationError(f"time must be nonnegative, got {t}")
    grid = u0.grid
    D = np.atleast_2d(np.asarray(D_effective, dtype=float))
    if D.shape != (grid.d, grid.d):
        raise ValidationError(f"diffusion matrix must be {grid.d}x{grid.d}")
    D = 0.5 * (D + D.T)
    ev = np.linalg.eigvalsh(D)
    if ev.min() < -1e-12 * max(np.abs(ev).max(), np.finfo(float).tiny):
        raise PreconditionError("diffusion matrix has a negative direction")
    drift = np.zeros(grid.d) if drift is None else np.asarray(drift, dtype=float).reshape(grid.d)
    kap = grid.wavenumbers()
    quad = np.einsum("a...,ab,b...->...", kap, D, kap)
    phase = np.einsum("a,a...->...", drift, kap)
    mult = np.exp(-quad * t - 1j * phase * t)
    coeffs = u0.coeffs * mult[None]
    if np.any(drift) and t > 0:
        # the phase is odd in kappa, so Nyquist modes have no consistent value
        coeffs[:, grid.nyquist_mask()] = 0.0
        coeffs = 0.5 * (coeffs + np.conj(grid.mirror(coeffs)))
    return SpectralField(grid, coeffs)


def total_density(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs.sum(axis=0, keepdims=True))


def l2_norm(f: SpectralField) -> float:
    """L2 norm over the box (all components), exact by Plancherel."""
    return float(np.sqrt(f.grid.volume * np.sum(np.abs(f.coeffs) ** 2)))


def l2_distance(u: SpectralField, v: SpectralField) -> float:
    if u.grid != v.grid:
        raise ValidationError("fields live on different grids")
    if u.n_components != v.n_components:
        raise ValidationError("fields have different numbers of components")
    return l2_norm(SpectralField(u.grid, u.coeffs - v.coeffs))


def sobolev_seminorm_sq(f: SpectralField, k: int) -> float:
    """Sum over components of the squared H^k seminorm."""
    kap = f.grid.wavenumbers()
    k2 = np.sum(kap**2, axis=0)
    return float(f.grid.volume * np.sum(k2[None] ** k * np.abs(f.coeffs) ** 2))


def _eta(tag):
    if callable(tag):
        return tag
    if tag == "square":
        return np.square
    if tag == "absolute":
        return np.abs
    if tag == "positive-part":
        return lambda s: np.maximum(s, 0.0)
    if isinstance(tag, (tuple, list)) and len(tag) == 2:
        xs, ys = (np.asarray(a, dtype=float) for a in tag)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValidationError("convex table needs increasing abscissae and matching values")
        slopes = np.diff(ys) / np.diff(xs)
        if np.any(np.diff(slopes) < -1e-12 * max(1.0, np.abs(slopes).max())):
            raise ValidationError("tabulated eta is not convex")

        def table(s):
            # linear extrapolation keeps the function convex and Lipschitz
            out = np.interp(s, xs, ys)
            out = np.where(s < xs[0], ys[0] + slopes[0] * (s - xs[0]), out)
            return np.where(s > xs[-1], ys[-1] + slopes[-1] * (s - xs[-1]), out)

        return table
    raise ValidationError(f"unknown convex function {tag!r}")


def lyapunov_functional(f: SpectralField, eta="square") -> float:
    """Sum over components of the integral of ``eta(f_i)``, by grid quadrature."""
    g = _eta(eta)
    return float(f.grid.cell_volume * np.sum(g(f.to_physical())))


@dataclass
class ComparisonReport:
    holds: bool
    tolerance: float
    worst: list  # (t, min over grid and components of g - f)

    @property
    def worst_violation(self) -> float:
        return max((max(0.0, -m) for _, m in self.worst), default=0.0)


def comparison_check(model: VelocityModel, f0: SpectralField, g0: SpectralField, times) -> ComparisonReport:
    """Check that componentwise ordering ``f <= g`` survives evolution.

    Violations up to ``1e-8 * max amplitude`` count as spectral ringing.
    """
    a = f0.to_physical()
    b = g0.to_physical()
    amp = max(np.abs(a).max(), np.abs(b).max())
    tol = RINGING_RTOL * amp
    worst = []
    for t in times:
        ft = solve_hyperbolic(model, f0, t).to_physical()
        gt = solve_hyperbolic(model, g0, t).to_physical()
        worst.append((float(t), float(np.min(gt - ft))))
    holds = all(m >= -tol for _, m in worst)
    return ComparisonReport(holds, float(tol), worst)


def telegraph_residual(model: VelocityModel, f0: SpectralField, t: float) -> float:
    """Relative per-mode residual of ``u_tt + 2 mu u_t + nu^2 kappa^2 u = 0``.

    Only meaningful for the symmetric two-speed model with speeds ``-nu, nu``;
    time derivatives are taken exactly from the generator.
    """
    if model.n != 2 or model.d != 1 or not model.is_symmetric:
        raise ValidationError("telegraph relation needs the symmetric two-speed model in 1-D")
    v = model.velocities[:, 0]
    nu = 0.5 * (v[1] - v[0])
    mu = model.rates[0, 1]
    grid = f0.grid
    kap = grid.wavenumbers()[0].ravel()
    B = build_transition_matrix(model)
    M = B[None] + 1j * (kap[:, None] * v[None])[:, :, None] * np.eye(2)[None]
    f = solve_hyperbolic(model, f0, t).coeffs.reshape(2, -1).T
    ft = -np.einsum("mij,mj->mi", M, f)
    ftt = -np.einsum("mij,mj->mi", M, ft)
    u, ut, utt = f.sum(1), ft.sum(1), ftt.sum(1)
    res = utt + 2 * mu * ut + (nu * kap) ** 2 * u
    scale = np.abs(utt) + 2 * mu * np.abs(ut) + (nu * kap) ** 2 * np.abs(u)
    mask = scale > 0
    return float(np.max(np.abs(res[mask]) / scale[mask])) if mask.any() else 0.0


def safe_horizon(vmax: float, D_norm: float, width: float, L: float) -> float:
    """Largest t with ``vmax t + 6 (width + sqrt(2 |D| t)) <= L``."""
    budget = L - 6 * width
    if budget <= 0:
        return 0.0
    # vmax s^2 + 6 sqrt(2 D) s - budget = 0 with s = sqrt(t)
    a, b = vmax, 6 * np.sqrt(2 * D_norm)
    if a == 0:
        return np.inf if b == 0 else (budget / b) ** 2
    s = (-b + np.sqrt(b * b + 4 * a * budget)) / (2 * a)
    return float(s * s)


def check_domain(vmax, D_norm, width, L, t_final):
    horizon = safe_horizon(vmax, D_norm, width, L)
    if t_final > horizon:
        raise NumericalGuardError(
            f"t={t_final:g} exceeds wrap-around horizon {horizon:g} for box half-width {L:g}"
        )
    return horizon
