"""Batch command-line front end.

    vjump analyze|spectrum|decay|simulate --config <path> [--out <dir>]
          [--dump-forests] [--particles] [--kappa-max K] [--samples S]

Each command writes its files into the output directory and prints a JSON
summary on stdout. Failures print a JSON error object on stderr and exit
with 2 (validation), 3 (mathematical precondition) or 4 (numerical guard).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from vjump import decay, dispersion, forests, particles, spectral
from vjump.config import RunConfig, load_config
from vjump.errors import PreconditionError, VJumpError
from vjump.model import build_transition_matrix, check_irreducible, check_sk_condition, check_span_condition

ETAS = ("square", "absolute", "positive-part")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def _time_tag(t: float) -> str:
    return format(t, "g")


def cmd_analyze(cfg: RunConfig, out: Path, dump_forests=False) -> dict:
    model = cfg.model
    connected, labels = check_irreducible(model)
    spans, rank = check_span_condition(model)
    structure = {
        "n": model.n,
        "d": model.d,
        "symmetric": model.is_symmetric,
        "irreducible": connected,
        "components": labels.tolist(),
        "span_rank": rank,
        "span_condition": spans,
        "sk_condition": check_sk_condition(model) if model.is_symmetric else None,
    }
    if not connected:
        raise PreconditionError("irreducibility violated: rate graph is disconnected")
    B = build_transition_matrix(model)
    minors = forests.first_order_minors(B)
    structure["first_order_minors"] = minors.tolist()
    structure["I1"] = float(minors.sum())
    if model.is_symmetric:
        dev = float(np.max(np.abs(minors - minors[0])) / abs(minors[0]))
        structure["minor_equality"] = {"max_rel_deviation": dev, "holds": dev <= 1e-10}
    if dump_forests and not model.is_symmetric:
        raise PreconditionError("forest dump requires symmetric rates")
    report = dispersion.diffusion_report(model, dump_forests=dump_forests)
    doc = {"model": model.to_dict(), "structure": structure, "diffusion": report.to_dict()}
    write_json(out / "report.json", doc)
    summary = {k: v for k, v in doc["diffusion"].items() if k != "forests"}
    summary["sk_condition"] = structure["sk_condition"]
    return summary


def spectrum_kappas(model, kappa_max, samples):
    mags = np.concatenate([[0.0], np.geomspace(kappa_max * 1e-5, kappa_max, samples - 1)])
    dirs = dispersion.scan_directions(model)
    return mags, dirs


def cmd_spectrum(cfg: RunConfig, out: Path, kappa_max=None, samples=None) -> dict:
    model = cfg.model
    kappa_max = kappa_max or cfg.kappa_max or dispersion.resolving_frequency(model)
    samples = samples or cfg.samples or 200
    mags, dirs = spectrum_kappas(model, kappa_max, samples)
    rows = []
    c0 = np.inf
    worst = -np.inf
    flagged = 0
    plateau = None
    tail = []
    for k, u in enumerate(dirs):
        scan = dispersion.spectral_abscissa_scan(model, mags[:, None] * u[None])
        plateau = scan.plateau
        c0 = min(c0, scan.c0)
        worst = max(worst, scan.worst_margin)
        flagged += len(scan.violations)
        tail.append(scan.abscissa[-1])
        k2 = mags**2
        for m, a, kk in zip(mags, scan.abscissa, k2):
            bound = -a * (1 + kk) / kk if kk > 0 else np.nan
            flag = int(kk > 0 and a >= -1e-12)
            rows.append((m, k, a, bound, flag))
    write_csv(out / "spectrum.csv", ["kappa_norm", "direction", "abscissa", "c0_bound", "flagged"], rows)
    summary = {
        "kappa_max": float(kappa_max),
        "samples": int(samples),
        "directions": dirs.tolist(),
        "c0": float(c0),
        "worst_margin": float(worst),
        "flagged_rows": int(flagged),
        "plateau": float(plateau),
        "abscissa_at_kappa_max": [float(a) for a in tail],
        "pass": bool(flagged == 0 and c0 > 0),
    }
    write_json(out / "spectrum.json", summary)
    return summary


def cmd_decay(cfg: RunConfig, out: Path) -> dict:
    cfg.require("grid", "decay")
    dc = cfg.decay
    times = decay.decay_times(dc.t_min, dc.t_max, dc.per_decade)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        study = decay.run_decay(cfg.model, cfg.grid, cfg.initial, times, window=dc.fit_window)
    for note in study.notes:
        print(f"warning: {note}", file=sys.stderr)
    write_csv(out / "decay.csv", ["t", "norm_u", "norm_u_par", "norm_difference"], study.rows)
    summary = study.summary()
    write_json(out / "decay.json", summary)
    return summary


def _snapshot_rows(grid, f, u):
    x = grid.coordinates().reshape(grid.d, -1)
    fp = f.to_physical().reshape(f.n_components, -1)
    up = u.to_physical().reshape(-1)
    return np.vstack([x, fp, up[None]]).T


def l1_density_distance(rho: spectral.SpectralField, u: spectral.SpectralField) -> float:
    """L1 distance between a unit-mass density and ``u`` scaled to unit mass."""
    a = rho.to_physical()[0]
    b = u.to_physical()[0]
    cell = u.grid.cell_volume
    mass = b.sum() * cell
    if mass <= 0:
        raise PreconditionError("PDE density has no positive mass to normalize")
    return float(np.sum(np.abs(a - b / mass)) * cell)


def cmd_simulate(cfg: RunConfig, out: Path, with_particles=False) -> dict:
    cfg.require("grid")
    model, grid = cfg.model, cfg.grid
    times = cfg.times or (0.0,)
    f0 = cfg.initial.sample(grid, model.n)
    header = [f"x{a + 1}" for a in range(grid.d)] + [f"f{i}" for i in range(model.n)] + ["u"]
    traces = []
    fields = {}
    for t in times:
        f = spectral.solve_hyperbolic(model, f0, t)
        u = spectral.total_density(f)
        fields[t] = u
        write_csv(out / f"snapshots_{_time_tag(t)}.csv", header, _snapshot_rows(grid, f, u))
        traces.append((t, *(spectral.lyapunov_functional(f, eta) for eta in ETAS)))
    write_csv(out / "lyapunov.csv", ["t", *ETAS], traces)
    tr = np.array(traces)
    scale = np.maximum(np.abs(tr[:1, 1:]), np.finfo(float).tiny)
    monotone = bool(np.all(np.diff(tr[:, 1:], axis=0) <= spectral.RINGING_RTOL * scale))
    summary = {"times": list(times), "lyapunov_monotone": monotone,
               "mass": float(spectral.total_density(f0).mean_mode()[0].real * grid.volume)}
    if with_particles:
        cfg.require("particles")
        p = cfg.particles
        ens = particles.sample_ensemble(model, cfg.initial, p.count, p.seed, dt=p.dt, box=grid.L)
        rows = []
        for t in times:
            ens = particles.run(ens, t, workers=p.workers)
            rho = particles.density_histogram(ens, grid)
            rows.append((t, ens.count, l1_density_distance(rho, fields[t])))
        write_csv(out / "particles.csv", ["t", "count", "l1_distance"], rows)
        write_csv(out / f"ensemble_{_time_tag(ens.time)}.csv",
                  [f"x{a + 1}" for a in range(grid.d)] + ["state"], ens.to_csv_rows())
        summary["particles"] = {"count": ens.count, "dt": ens.dt, "seed": ens.seed,
                                "l1_distance": [r[2] for r in rows]}
    write_json(out / "simulate.json", summary)
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vjump", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "spectrum", "decay", "simulate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: config 'outputs' or '.')")
        if name == "analyze":
            p.add_argument("--dump-forests", action="store_true", help="include two-tree forests in report.json")
        if name == "spectrum":
            p.add_argument("--kappa-max", type=float, help="largest scanned frequency norm (default: resolved from the model)")
            p.add_argument("--samples", type=int, help="frequency samples per direction including 0 (default 200)")
        if name == "simulate":
            p.add_argument("--particles", action="store_true", help="add the Monte Carlo comparison")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.outputs or ".")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "analyze":
            summary = cmd_analyze(cfg, out, args.dump_forests)
        elif args.command == "spectrum":
            summary = cmd_spectrum(cfg, out, args.kappa_max, args.samples)
        elif args.command == "decay":
            summary = cmd_decay(cfg, out)
        else:
            summary = cmd_simulate(cfg, out, args.particles)
    except VJumpError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
