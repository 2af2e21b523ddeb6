"""Run configuration: JSON schema, semantic checks and typed settings.

All indices in a config (rate arcs, initial-datum components) are 0-based.
Validation failures raise :class:`ValidationError` carrying the offending
field path, e.g. ``model.rates[2][1]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from vjump.errors import ValidationError
from vjump.model import VelocityModel
from vjump.spectral import Gaussian, Grid, InitialDatum

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["d", "velocities", "rates"],
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "velocities": {
                    "type": "array",
                    "minItems": 2,
                    "items": {"type": "array", "minItems": 1, "items": _NUM},
                },
                "rates": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "minItems": 3,
                        "maxItems": 3,
                        "prefixItems": [
                            {"type": "integer", "minimum": 0},
                            {"type": "integer", "minimum": 0},
                            {"type": "number", "minimum": 0},
                        ],
                    },
                },
                "asymmetric": {"type": "boolean"},
            },
        },
        "grid": {
            "type": "object",
            "required": ["L", "N"],
            "additionalProperties": False,
            "properties": {"L": _POS, "N": {"type": "integer", "minimum": 8}},
        },
        "initial": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["component"],
                "additionalProperties": False,
                "properties": {
                    "component": {"type": "integer", "minimum": 0},
                    "amplitude": _NUM,
                    "center": {"type": "array", "items": _NUM},
                    "width": _POS,
                    "constant": _NUM,
                },
                "oneOf": [
                    {"required": ["amplitude", "center", "width"], "not": {"required": ["constant"]}},
                    {"required": ["constant"], "not": {"required": ["amplitude"]}},
                ],
            },
        },
        "times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "decay": {
            "type": "object",
            "required": ["t_min", "t_max", "per_decade"],
            "additionalProperties": False,
            "properties": {
                "t_min": _POS,
                "t_max": _POS,
                "per_decade": {"type": "integer", "minimum": 1},
                "fit_window": {"type": "array", "minItems": 2, "maxItems": 2, "items": _POS},
            },
        },
        "particles": {
            "type": "object",
            "required": ["count", "seed"],
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "dt": _POS,
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kappa_max": _POS,
                "samples": {"type": "integer", "minimum": 2},
            },
        },
        "outputs": {"type": "string"},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


@dataclass(frozen=True)
class DecaySettings:
    t_min: float
    t_max: float
    per_decade: int
    fit_window: tuple | None = None


@dataclass(frozen=True)
class ParticleSettings:
    count: int
    seed: int
    dt: float | None = None
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    model: VelocityModel
    grid: Grid | None
    initial: InitialDatum
    times: tuple
    decay: DecaySettings | None
    particles: ParticleSettings | None
    kappa_max: float | None
    samples: int | None
    outputs: str | None
    raw: dict

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ValidationError(f"config section '{name}' is required for this command", name)


def _check_schema(doc):
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise ValidationError(err.message, _path(err.absolute_path))


def _build_model(section) -> VelocityModel:
    d = section["d"]
    vel = section["velocities"]
    for k, v in enumerate(vel):
        if len(v) != d:
            raise ValidationError(f"velocity has {len(v)} entries, expected d={d}", f"model.velocities[{k}]")
    n = len(vel)
    asym = section.get("asymmetric", False)
    if asym and n != 2:
        raise ValidationError("asymmetric rates are only supported for two speeds", "model.asymmetric")
    seen = set()
    for k, (i, j, _) in enumerate(section["rates"]):
        for pos, idx in enumerate((i, j)):
            if idx >= n:
                raise ValidationError(f"index {idx} out of range for n={n}", f"model.rates[{k}][{pos}]")
        if i == j:
            raise ValidationError("self-transition arcs are not allowed", f"model.rates[{k}]")
        key = (i, j) if asym else (min(i, j), max(i, j))
        if key in seen:
            raise ValidationError(f"duplicate arc {key}", f"model.rates[{k}]")
        seen.add(key)
    return VelocityModel.from_arcs(vel, section["rates"], asymmetric=asym)


def _build_initial(items, model: VelocityModel) -> InitialDatum:
    bumps, offsets = [], []
    for k, item in enumerate(items):
        c = item["component"]
        if c >= model.n:
            raise ValidationError(f"component {c} out of range for n={model.n}", f"initial[{k}].component")
        if "constant" in item:
            offsets.append((c, float(item["constant"])))
            continue
        center = item["center"]
        if len(center) != model.d:
            raise ValidationError(f"center has {len(center)} entries, expected d={model.d}",
                                  f"initial[{k}].center")
        bumps.append(Gaussian(c, float(item["amplitude"]), tuple(map(float, center)), float(item["width"])))
    return InitialDatum(tuple(bumps), tuple(offsets))


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded config document and build the typed settings."""
    _check_schema(doc)
    model = _build_model(doc["model"])
    grid = None
    if "grid" in doc:
        g = doc["grid"]
        grid = Grid(model.d, float(g["L"]), int(g["N"]))
    initial = _build_initial(doc.get("initial", []), model)
    times = tuple(float(t) for t in doc.get("times", []))
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("times must be strictly increasing", "times")
    decay = None
    if "decay" in doc:
        dc = doc["decay"]
        if dc["t_max"] <= dc["t_min"]:
            raise ValidationError("t_max must exceed t_min", "decay.t_max")
        window = tuple(dc["fit_window"]) if "fit_window" in dc else None
        if window is not None and window[1] <= window[0]:
            raise ValidationError("fit window must be increasing", "decay.fit_window")
        decay = DecaySettings(float(dc["t_min"]), float(dc["t_max"]), int(dc["per_decade"]), window)
    particles = None
    if "particles" in doc:
        p = doc["particles"]
        particles = ParticleSettings(int(p["count"]), int(p["seed"]), p.get("dt"), int(p.get("workers", 1)))
    scan = doc.get("spectrum", {})
    return RunConfig(
        model=model,
        grid=grid,
        initial=initial,
        times=times,
        decay=decay,
        particles=particles,
        kappa_max=scan.get("kappa_max"),
        samples=scan.get("samples"),
        outputs=doc.get("outputs"),
        raw=doc,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc.strerror}", "config") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "config") from None
    return parse_config(doc)
