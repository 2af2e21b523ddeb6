"""Dispersion relation, drift velocity and diffusion matrix.

Frequencies are real vectors ``kappa``; the per-mode generator is
``M(kappa) = B + i diag(v . kappa)`` and modes evolve as ``exp(-M t)``.
The slow branch ``lam(kappa)`` is the eigenvalue of ``-M(kappa)`` through 0
at ``kappa = 0``. Near the origin

    lam(kappa) = -i v_drift . kappa - 1/2 kappa . D kappa + O(|kappa|^3)

so ``D`` is the Hessian of the branch in the imaginary-frequency variable
``k = i kappa`` and the parabolic limit has coefficient ``D / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vjump import forests
from vjump.errors import BranchCrossingError, PreconditionError, ValidationError
from vjump.model import VelocityModel, build_transition_matrix, check_irreducible

DRIFT_RTOL = 1e-10
PAIR_RTOL = 1e-10


def symbol_matrix(model: VelocityModel, kappa) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float).reshape(model.d)
    B = build_transition_matrix(model)
    return B + 1j * np.diag(model.velocities @ kappa)


def _scale(x) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _minors_and_i1(model: VelocityModel):
    B = build_transition_matrix(model)
    minors = forests.first_order_minors(B)
    total = float(minors.sum())
    norm = np.linalg.norm(B, 2)
    if norm == 0.0 or abs(total) <= 1e-12 * norm ** (model.n - 1):
        raise PreconditionError(
            "irreducibility violated: sum of first-order minors vanishes"
        )
    return B, minors, total


def drift_velocity_minor(model: VelocityModel) -> np.ndarray:
    """Minor-weighted mean of the velocities; valid for asymmetric rates too."""
    _, minors, total = _minors_and_i1(model)
    return minors @ model.velocities / total


def drift_velocity_symmetric(model: VelocityModel) -> np.ndarray:
    if not model.is_symmetric:
        raise PreconditionError("arithmetic-mean drift requires symmetric rates")
    return model.velocities.mean(axis=0)


def recenter(model: VelocityModel) -> VelocityModel:
    """Same rates, velocities seen from the frame moving with the drift."""
    return model.with_velocities(model.velocities - drift_velocity_minor(model))


def _require_comoving(model: VelocityModel, drift: np.ndarray):
    vmax = _scale(model.velocities)
    if np.max(np.abs(drift)) > DRIFT_RTOL * vmax:
        raise PreconditionError(
            f"nonzero drift {drift.tolist()}: recenter the model first"
        )


def _sym_outer(a, b):
    return 0.5 * (np.outer(a, b) + np.outer(b, a))


def diffusion_matrix_minor(model: VelocityModel) -> np.ndarray:
    """Diffusion matrix from the second-order principal minors.

    ``D = -(2 / I1) sum_{i<j} B(i, j) sym(v_i (x) v_j)``. Only valid in the
    comoving frame.
    """
    B, minors, total = _minors_and_i1(model)
    _require_comoving(model, minors @ model.velocities / total)
    v = model.velocities
    D = np.zeros((model.d, model.d))
    for i in range(model.n):
        for j in range(i + 1, model.n):
            D += forests.principal_minor(B, (i, j)) * _sym_outer(v[i], v[j])
    return -2.0 / total * D


def diffusion_matrix_forest(model: VelocityModel) -> np.ndarray:
    """Diffusion matrix as a nonnegative sum over two-tree spanning forests.

    ``D = (2 / I1) sum_F mu_T1 mu_T2 w(T1) (x) w(T1)`` with ``w(T)`` the sum of
    the velocities in tree ``T``. ``I1`` is also taken from forest sums, so
    no determinant enters this route.
    """
    pairs = forests.forest_pairs(model)
    n = model.n
    # every single-root forest is a spanning tree, whichever root is chosen
    total = n * forests.forest_minor(model, (0,))
    _require_comoving(model, model.velocities.mean(axis=0))
    v = model.velocities
    D = np.zeros((model.d, model.d))
    for f in pairs:
        w = v[list(f.trees[0])].sum(axis=0)
        D += f.weight * np.outer(w, w)
    return 2.0 / total * D


def check_paired(model: VelocityModel):
    """Check ``v[2l+1] = -v[2l]`` (plus an optional trailing zero velocity).

    Returns the list of pairs ``(2l, 2l+1)``.
    """
    v = model.velocities
    n = model.n
    tol = 1e-12 * max(_scale(v), 1.0)
    k = n // 2
    if n % 2 == 1 and np.max(np.abs(v[-1])) > tol:
        raise PreconditionError("odd number of speeds requires the last velocity to be zero")
    pairs = [(2 * l, 2 * l + 1) for l in range(k)]
    for a, b in pairs:
        if np.max(np.abs(v[a] + v[b])) > tol:
            raise PreconditionError(f"velocities {a} and {b} are not opposite")
    return pairs


def check_pair_minors(model: VelocityModel, pairs):
    """Verify ``B(2l, j) == B(2l+1, j)`` for every pair and every other ``j``."""
    B = build_transition_matrix(model)
    scale = max(abs(forests.principal_minor(B, (0,))), np.finfo(float).tiny)
    for a, b in pairs:
        for j in range(model.n):
            if j in (a, b):
                continue
            ma = forests.principal_minor(B, (a, j))
            mb = forests.principal_minor(B, (b, j))
            if abs(ma - mb) > PAIR_RTOL * max(abs(ma), abs(mb), scale):
                raise PreconditionError(
                    f"pair minor equality B({a},{j}) = B({b},{j}) violated: {ma!r} != {mb!r}",
                )


def diffusion_matrix_paired(model: VelocityModel) -> np.ndarray:
    """Diffusion matrix for velocities in opposite pairs.

    Under the pair-minor equalities only same-pair forest sums survive:
    ``D = (2 / I1) sum_l [sum over forests separating 2l, 2l+1] v_{2l+1} (x) v_{2l+1}``.
    """
    if not model.is_symmetric:
        raise PreconditionError("paired formula requires symmetric rates")
    pairs = check_paired(model)
    check_pair_minors(model, pairs)
    family = forests.forest_pairs(model)
    total = model.n * forests.forest_minor(model, (0,))
    v = model.velocities
    D = np.zeros((model.d, model.d))
    for a, b in pairs:
        D += family.between(a, b).total_weight * np.outer(v[b], v[b])
    return 2.0 / total * D


def lambda_branch(model: VelocityModel, kappa, min_step: float = 1e-12) -> complex:
    """Follow the eigenvalue of ``-M(s kappa)`` through 0 from s = 0 to 1.

    Each accepted continuation step must keep the tracked eigenvalue more than
    ten times as far from the rest of the spectrum as it moved. Steps are
    halved until that holds.

    Raises
    ------
    BranchCrossingError
        If the step falls below ``min_step``.
    """
    kappa = np.asarray(kappa, dtype=float).reshape(model.d)
    if not np.any(kappa):
        return 0j
    B = build_transition_matrix(model)
    proj = model.velocities @ kappa
    lam = 0j
    s, ds = 0.0, 1.0
    while s < 1.0:
        step = min(ds, 1.0 - s)
        ev = np.linalg.eigvals(-(B + 1j * np.diag((s + step) * proj)))
        dist = np.abs(ev - lam)
        k = int(np.argmin(dist))
        moved = dist[k]
        others = np.delete(ev, k)
        gap = np.min(np.abs(others - ev[k])) if others.size else np.inf
        if gap > 10.0 * moved:
            lam = complex(ev[k])
            s += step
            ds = 2.0 * step
        else:
            ds = 0.5 * step
            if ds < min_step:
                raise BranchCrossingError(
                    f"slow branch meets another eigenvalue near s={s:.6g} along {kappa.tolist()}"
                )
    return lam


def frequency_scale(model: VelocityModel) -> float:
    """Natural wavenumber scale: rate magnitude over speed magnitude."""
    vmax = _scale(model.velocities)
    B = build_transition_matrix(model)
    bnorm = float(np.max(np.abs(B)))
    if vmax == 0.0:
        return 1.0
    return (bnorm if bnorm > 0 else 1.0) / vmax


def branch_step(model: VelocityModel) -> float:
    """Finite-difference step for the slow branch.

    The branch is analytic in a disc of radius ``rho = gap / vmax``, where
    ``gap`` is the distance from 0 to the rest of the spectrum of B. That can be
    far below the largest rate on weakly connected graphs. With ``x = h / rho``
    the extrapolated truncation error is O(x**4) and the eigensolver noise is
    O(eps * |B| / (gap * x**2)); the step balances the two.
    """
    vmax = _scale(model.velocities)
    if vmax == 0.0:
        return 1.0
    B = build_transition_matrix(model)
    ev = np.sort(np.abs(np.linalg.eigvals(B)))
    bnorm = float(np.max(np.abs(B)))
    gap = float(ev[1]) if ev.size > 1 and ev[1] > 0 else bnorm
    # the constant 4 was tuned on 400 random sparse graphs with n <= 10
    x = 4.0 * (np.finfo(float).eps * bnorm / gap) ** (1 / 6)
    return min(x, 0.1) * gap / vmax


def _fd_derivatives(model, h):
    d = model.d
    E = np.eye(d)
    lam = lambda kap: lambda_branch(model, kap)
    grad = np.zeros(d, dtype=complex)
    hess = np.zeros((d, d), dtype=complex)
    plus = [lam(h * E[j]) for j in range(d)]
    minus = [lam(-h * E[j]) for j in range(d)]
    for j in range(d):
        grad[j] = (plus[j] - minus[j]) / (2 * h)
        hess[j, j] = (plus[j] + minus[j]) / h**2  # lam(0) = 0
    for j in range(d):
        for l in range(j + 1, d):
            pp = lam(h * (E[j] + E[l]))
            pm = lam(h * (E[j] - E[l]))
            mp = lam(h * (-E[j] + E[l]))
            mm = lam(-h * (E[j] + E[l]))
            hess[j, l] = hess[l, j] = (pp - pm - mp + mm) / (4 * h**2)
    return grad, hess


def hessian_oracle(model: VelocityModel, rel_step: float | None = None):
    """Drift and diffusion matrix by finite differences of the slow branch.

    Central differences at step ``h`` and ``h / 2`` combined by one Richardson
    extrapolation. The default ``h`` comes from :func:`branch_step`; passing
    ``rel_step`` uses ``h = rel_step * frequency_scale(model)`` instead.

    Returns
    -------
    (v_drift, D) with ``v_drift = -grad_k lam(0)`` and ``D = D^2_k lam(0)``.
    """
    connected, _ = check_irreducible(model)
    if not connected:
        raise PreconditionError("irreducibility violated: rate graph is disconnected")
    if not np.any(model.velocities):
        return np.zeros(model.d), np.zeros((model.d, model.d))
    h = branch_step(model) if rel_step is None else rel_step * frequency_scale(model)
    g1, H1 = _fd_derivatives(model, h)
    g2, H2 = _fd_derivatives(model, h / 2)
    grad = (4 * g2 - g1) / 3
    hess = (4 * H2 - H1) / 3
    # d/dkappa = i d/dk
    drift = -grad.imag
    D = -hess.real
    return drift, 0.5 * (D + D.T)


@dataclass
class AbscissaScan:
    kappas: np.ndarray  # (m, d)
    abscissa: np.ndarray  # (m,)
    c0: float  # largest c0 with abscissa <= -c0 |k|^2 / (1 + |k|^2) on the scan
    plateau: float  # -min_i B_ii, the high-frequency limit of the abscissa
    violations: list = field(default_factory=list)  # rows with kappa != 0 and abscissa >= -tol

    @property
    def worst_margin(self) -> float:
        nz = np.linalg.norm(self.kappas, axis=1) > 0
        return float(np.max(self.abscissa[nz])) if np.any(nz) else 0.0


def spectral_abscissa_scan(model: VelocityModel, kappas, tol: float = 1e-12) -> AbscissaScan:
    """Largest real part of the spectrum of ``-M(kappa)`` at each frequency."""
    kappas = np.atleast_2d(np.asarray(kappas, dtype=float))
    if kappas.shape[1] != model.d:
        raise ValidationError(f"frequencies must have {model.d} components")
    B = build_transition_matrix(model)
    proj = kappas @ model.velocities.T  # (m, n)
    M = B[None, :, :] + 1j * proj[:, :, None] * np.eye(model.n)[None]
    ev = np.linalg.eigvals(-M)
    absc = ev.real.max(axis=1)
    k2 = np.sum(kappas**2, axis=1)
    nz = k2 > 0
    absc[~nz] = np.max(np.linalg.eigvalsh(-B)) if model.is_symmetric else absc[~nz]
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = -absc[nz] * (1 + k2[nz]) / k2[nz]
    c0 = float(np.min(bound)) if bound.size else np.inf
    violations = [int(i) for i in np.flatnonzero(nz & (absc >= -tol))]
    plateau = -float(np.min(np.diag(B)))
    return AbscissaScan(kappas, absc, c0, plateau, violations)


def scan_directions(model: VelocityModel) -> np.ndarray:
    """Unit directions for abscissa scans.

    The coordinate axes plus the right singular vectors of the velocity
    differences; the latter include any direction the differences miss.
    """
    from vjump.model import velocity_differences

    dirs = [np.eye(model.d)]
    diffs = velocity_differences(model)
    _, _, vt = np.linalg.svd(diffs)
    dirs.append(vt)
    out = []
    for u in np.vstack(dirs):
        u = u / np.linalg.norm(u)
        if not any(abs(abs(u @ w) - 1.0) < 1e-12 for w in out):
            out.append(u)
    return np.array(out)


def resolving_frequency(model: VelocityModel, factor: float = 1e3) -> float:
    """Scan range at which the abscissa has settled onto its plateau.

    Along a direction u the off-diagonal coupling shifts the real parts by
    O((|B| / (|k| dp))**2), where dp is the smallest separation of the
    projected speeds u.v^i. Coincident projections are skipped: they are the
    degenerate directions a scan is meant to flag, not resolve.
    """
    B = build_transition_matrix(model)
    bnorm = float(np.max(np.abs(B)))
    seps = []
    for u in scan_directions(model):
        p = np.sort(model.velocities @ u)
        gaps = np.diff(p)
        gaps = gaps[gaps > 1e-12 * max(_scale(model.velocities), 1.0)]
        if gaps.size:
            seps.append(gaps.min())
    if not seps or bnorm == 0.0:
        return factor * frequency_scale(model)
    return factor * bnorm / min(seps)


@dataclass
class DiffusionReport:
    v_drift: np.ndarray
    D_minor: np.ndarray
    D_forest: np.ndarray | None
    D_hessian: np.ndarray
    D_effective: np.ndarray
    psd_min_eig: float
    discrepancies: dict
    forests: list | None = None

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        out = {
            "v_drift": arr(self.v_drift),
            "D_minor": arr(self.D_minor),
            "D_forest": arr(self.D_forest),
            "D_hessian": arr(self.D_hessian),
            "D_effective": arr(self.D_effective),
            "psd_min_eig": self.psd_min_eig,
            "discrepancies": dict(self.discrepancies),
        }
        if self.forests is not None:
            out["forests"] = self.forests
        return out


def diffusion_report(model: VelocityModel, dump_forests: bool = False) -> DiffusionReport:
    """Drift plus the diffusion matrix by every applicable route.

    The minor and forest routes are evaluated on the recentered model; the
    Hessian oracle on the model as given (its Hessian is frame invariant).
    The forest route is skipped for asymmetric rates or n above the
    enumeration limit.
    """
    drift = drift_velocity_minor(model)
    comoving = recenter(model)
    D_minor = diffusion_matrix_minor(comoving)
    D_forest = None
    family = None
    if model.is_symmetric and model.n <= forests.MAX_ENUMERATION_SPEEDS:
        D_forest = diffusion_matrix_forest(comoving)
        if dump_forests:
            family = forests.forest_pairs(model).to_json()
    _, D_hess = hessian_oracle(model)

    def gap(a, b):
        return float(np.max(np.abs(a - b)))

    disc = {"minor_hessian": gap(D_minor, D_hess)}
    if D_forest is not None:
        disc["minor_forest"] = gap(D_minor, D_forest)
        disc["forest_hessian"] = gap(D_forest, D_hess)
    return DiffusionReport(
        v_drift=drift,
        D_minor=D_minor,
        D_forest=D_forest,
        D_hessian=D_hess,
        D_effective=0.5 * D_hess,
        psd_min_eig=float(np.min(np.linalg.eigvalsh(D_minor))),
        discrepancies=disc,
        forests=family,
    )
