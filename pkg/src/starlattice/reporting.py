"""Command-line front end, experiment configs, run records and plot data.

A config is a flat ``key=value`` text file; command-line flags override it.
Each run writes a CSV table and a JSON run record into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    FLOOR_REL,
    fit_envelope_exponent,
    residual_series,
    rho_grid,
    rotation_average,
    theory_exponents,
)
from .catalog import DENSITIES, TEST_FUNCTIONS, density, make_body, test_function
from .fourier import NODES_PER_PERIOD, R_MAX, TransformBudgetError, decay_sweep, default_r_grid
from .geometry import Rotation, haar_rotations
from .lattice import BOUNDARY_REL, TOL_REL, BudgetError
from .quadrature import TARGET_TOL, verify_volume_identity

log = logging.getLogger(__name__)

KINDS = ("count", "converge", "rotate-average", "fourier-decay", "verify-identity")
BODIES = ("ball", "ellipsoid", "superellipsoid", "polygon", "square", "density-body")
CSV_COLUMNS = ("rho", "rotation_id", "count", "discrete_value", "target", "residual", "boundary_hits")
PROFILE_COLUMNS = ("direction_index", "phi_x", "phi_y", "kind", "r", "magnitude", "fitted_slope")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_THRESHOLD = 4


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def fmt(x) -> str:
    """Serialize a number with 17 significant digits (round-trips doubles)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    kind: str = "converge"
    body: str = "ball"
    dim: int = 2
    k: int | None = None
    axes: list[float] | None = None
    normals: list[float] | None = None
    offsets: list[float] | None = None
    expr: str | None = None
    density: str | None = None
    f: str = "one"
    rho: list[float] | None = None
    rho_start: float = 16.0
    rho_stop: float = 1024.0
    per_octave: int = 8
    jitter: float = 0.5
    seed: int = 0
    rotations: int = 0
    angle: float | None = None
    samples: int = 10**7
    sigmas: float = 3.0
    directions: list[float] | None = None
    transform: str = "surface"
    r_start: float = 16.0
    r_stop: float = 256.0
    r_step: float = 0.05
    out: str = "out"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        if self.body not in BODIES:
            raise ConfigError(f"body: expected one of {BODIES}, got {self.body!r}")
        if self.dim not in (2, 3, 4):
            raise ConfigError(f"dim: expected 2, 3 or 4, got {self.dim}")
        if self.body == "superellipsoid" and (self.k is None or self.k < 1):
            raise ConfigError("k: superellipsoid needs a positive integer k")
        if self.body == "ellipsoid" and (self.axes is None or len(self.axes) != self.dim):
            raise ConfigError(f"axes: ellipsoid needs {self.dim} semi-axes")
        if self.body == "density-body" and self.expr not in DENSITIES:
            raise ConfigError(f"expr: density-body needs a builtin density id from {sorted(DENSITIES)}")
        if self.body in ("polygon", "square") and self.dim != 2:
            raise ConfigError("dim: polygons are planar")
        if self.body == "polygon" and self.normals is not None:
            if len(self.normals) % 2 or self.offsets is None or len(self.offsets) * 2 != len(self.normals):
                raise ConfigError("normals/offsets: give 2 numbers per facet normal and one offset per facet")
        if self.density is not None and self.density not in DENSITIES:
            raise ConfigError(f"density: unknown id {self.density!r}; choose from {sorted(DENSITIES)}")
        if self.f not in TEST_FUNCTIONS:
            raise ConfigError(f"f: unknown id {self.f!r}; choose from {sorted(TEST_FUNCTIONS)}")
        if self.kind in ("converge", "rotate-average") and not 0 < self.rho_start < self.rho_stop:
            raise ConfigError(f"rho_start/rho_stop: need 0 < start < stop, got {self.rho_start} and {self.rho_stop}")
        if self.per_octave < 1:
            raise ConfigError("per_octave: must be >= 1")
        if self.kind == "count" and not self.rho:
            raise ConfigError("rho: count needs one or more rho values")
        if self.rho is not None and any(r <= 0 for r in self.rho):
            raise ConfigError("rho: values must be positive")
        if self.kind == "rotate-average" and self.rotations < 1:
            raise ConfigError("rotations: rotate-average needs rotations >= 1")
        if self.rotations < 0:
            raise ConfigError("rotations: must be >= 0")
        if self.angle is not None and self.dim != 2:
            raise ConfigError("angle: a fixed rotation angle applies to n = 2 only")
        if self.kind == "fourier-decay":
            if self.dim != 2:
                raise ConfigError("dim: Fourier decay is implemented for n = 2")
            if self.transform not in ("surface", "shell"):
                raise ConfigError("transform: expected surface or shell")
            if not 0 < self.r_start < self.r_stop or self.r_step <= 0:
                raise ConfigError("r_start/r_stop/r_step: need 0 < start < stop and a positive step")
            if self.directions is not None and len(self.directions) % 2:
                raise ConfigError("directions: give 2 numbers per direction")
        if self.samples < 1:
            raise ConfigError("samples: must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        return self

    def snapshot(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    if "None" in kind and text.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("list"):
            text = text.strip("[]")
            return [float(v) for v in text.replace(",", " ").split()]
        if kind.startswith("int"):
            return int(float(text)) if float(text).is_integer() else int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return text


def _normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = _normalize_key(key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        try:
            values[key] = _convert(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional file, then apply ``overrides``."""
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {p}: {exc}") from None
        values.update(parse_config_text(text, str(p)))
    for key, value in (overrides or {}).items():
        key = _normalize_key(key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown field {key!r}")
        values[key] = _convert(key, value) if isinstance(value, str) else value
    return ExperimentConfig(**values).validate()


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    config: dict
    version: str
    wall_time: float
    tolerances: dict
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _body(cfg: ExperimentConfig):
    normals = None
    if cfg.normals is not None:
        normals = np.asarray(cfg.normals, dtype=float).reshape(-1, 2)
    return make_body(cfg.body, cfg.dim, k=cfg.k, axes=cfg.axes, normals=normals, offsets=cfg.offsets, expr=cfg.expr)


def _family(cfg: ExperimentConfig, rotated: bool) -> tuple[str, int | None]:
    if cfg.body == "superellipsoid" and cfg.k != 1:
        return "superellipsoid", cfg.k
    if cfg.body in ("polygon", "square"):
        return ("polygon-algebraic" if rotated else "polygon-rational"), None
    return "positive-curvature", None


def _rotations(cfg: ExperimentConfig) -> list[Rotation]:
    if cfg.angle is not None:
        return [Rotation.from_angle(cfg.angle, id=f"angle{fmt(cfg.angle)}")]
    if cfg.rotations > 0:
        return haar_rotations(cfg.dim, cfg.rotations, cfg.seed)
    return [Rotation.identity(cfg.dim)]


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.rho:
        return np.asarray(cfg.rho, dtype=float)
    return rho_grid(cfg.rho_start, cfg.rho_stop, cfg.per_octave, seed=cfg.seed, jitter=cfg.jitter)


def _rows(series_list) -> list[list]:
    rows = []
    for s in series_list:
        for r in s.records:
            rows.append([r.rho, r.rotation_id, r.weighted_count, r.discrete_value, r.target, r.residual, r.boundary_hits])
    return rows


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _fit_summary(fit) -> dict | None:
    if fit is None:
        return None
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "window": list(fit.window),
        "method": fit.method,
        "points": fit.points,
        "floor_dropped": fit.floor_dropped,
    }


def _theory(cfg: ExperimentConfig, rotated: bool) -> dict:
    family, k = _family(cfg, rotated)
    try:
        th = theory_exponents(cfg.dim, family, k)
    except ValueError:
        return {"family": family, "predicted": None, "text": f"family={family} n={cfg.dim}: no prediction"}
    return {"family": family, "predicted": float(th.predicted), "text": th.summary()}


def _run_lattice(cfg: ExperimentConfig, record: RunRecord):
    body = _body(cfg)
    f = test_function(cfg.f, cfg.dim)
    m = density(cfg.density, cfg.dim) if cfg.density else None
    grid = _grid(cfg)
    rotated = False
    if cfg.kind == "rotate-average":
        rotations = _rotations(cfg)
        avg = rotation_average(body, f, m, grid, len(rotations), seed=cfg.seed, workers=cfg.workers, rotations=rotations)
        series = avg.series
        rotated = True
        record.tables["rotation_mean"] = {
            "rho": avg.rho.tolist(),
            "mean_abs": avg.mean_abs.tolist(),
            "stderr": avg.stderr.tolist(),
            "spread": avg.spread.tolist(),
        }
        record.summary["fit"] = _fit_summary(avg.fit)
    else:
        rotations = _rotations(cfg)
        series = [residual_series(body, f, m, grid, g, workers=cfg.workers) for g in rotations]
        rotated = not all(g.is_identity for g in rotations)
        if len(series) == 1 and grid.size >= 8:
            try:
                record.summary["fit"] = _fit_summary(fit_envelope_exponent(series[0]))
            except ValueError as exc:
                record.summary["fit"] = None
                record.summary["fit_note"] = str(exc)
    rows = _rows(series)
    record.tables["residuals"] = {"columns": list(CSV_COLUMNS), "rows": rows}
    record.summary["body"] = body.describe()
    record.summary["target"] = series[0].target
    record.summary["target_error"] = series[0].target_error
    record.summary["flagged_rho"] = sorted({r for s in series for r in s.flagged})
    record.summary["theory"] = _theory(cfg, rotated)
    record.paths["csv"] = str(write_csv(Path(cfg.out) / "residuals.csv", CSV_COLUMNS, rows))


def _directions(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.directions is None:
        return np.array([[1.0, 0.0]])
    return np.asarray(cfg.directions, dtype=float).reshape(-1, 2)


def _run_fourier(cfg: ExperimentConfig, record: RunRecord):
    body = _body(cfg)
    g = test_function(cfg.f, 2) if cfg.f != "one" else None
    r = default_r_grid(cfg.r_start, cfg.r_stop, cfg.r_step)
    profiles = decay_sweep(body, _directions(cfg), r, kind=cfg.transform, g=g)
    rows = []
    for i, p in enumerate(profiles):
        for rv, mag in zip(p.r_grid, p.magnitudes):
            rows.append([i, p.direction[0], p.direction[1], p.kind, rv, mag, p.slope])
    record.tables["profiles"] = {"columns": list(PROFILE_COLUMNS), "rows": rows}
    record.summary["body"] = body.describe()
    record.summary["profiles"] = [
        {
            "direction": p.direction.tolist(),
            "slope": p.slope,
            "fitted_alpha": p.fitted_alpha,
            "peaks": p.peaks,
            "j_vanishing": p.j_vanishing,
            "normalized_sup": p.normalized_sup,
        }
        for p in profiles
    ]
    record.paths["csv"] = str(write_csv(Path(cfg.out) / "profiles.csv", PROFILE_COLUMNS, rows))


def _run_identity(cfg: ExperimentConfig, record: RunRecord):
    f = test_function(cfg.f, cfg.dim)
    m = density(cfg.density or "one", cfg.dim)
    chk = verify_volume_identity(f, m, n=cfg.dim, samples=cfg.samples, seed=cfg.seed)
    record.summary.update(
        lhs=chk.lhs,
        stderr=chk.stderr,
        rhs=chk.rhs,
        relative_discrepancy=chk.relative_discrepancy,
        sigmas=chk.sigmas,
        threshold_sigmas=cfg.sigmas,
        passed=bool(chk.sigmas <= cfg.sigmas),
    )


def run(config: ExperimentConfig) -> RunRecord:
    """Execute one experiment, writing its CSV and JSON run record."""
    cfg = config.validate()
    record = RunRecord(
        config=cfg.snapshot(),
        version=__version__,
        wall_time=0.0,
        tolerances={
            "membership_rel": TOL_REL,
            "boundary_rel": BOUNDARY_REL,
            "target_quadrature": TARGET_TOL,
            "fit_floor_rel": FLOOR_REL,
            "nodes_per_period": NODES_PER_PERIOD,
            "transform_r_max": R_MAX,
        },
    )
    t0 = time.perf_counter()
    if cfg.kind in ("count", "converge", "rotate-average"):
        _run_lattice(cfg, record)
    elif cfg.kind == "fourier-decay":
        _run_fourier(cfg, record)
    else:
        _run_identity(cfg, record)
    record.wall_time = time.perf_counter() - t0
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "run.json"
    record.paths["json"] = str(path)
    path.write_text(record.to_json() + "\n")
    return record


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def _plot_series(record: RunRecord):
    """``(x, y, label)`` of the quantity to plot, from the record tables."""
    if "rotation_mean" in record.tables:
        t = record.tables["rotation_mean"]
        return np.array(t["rho"]), np.array(t["mean_abs"]), "mean |R|"
    if "residuals" in record.tables:
        rows = record.tables["residuals"]["rows"]
        return np.array([r[0] for r in rows], dtype=float), np.abs([r[5] for r in rows]), "|R|"
    if "profiles" in record.tables:
        rows = [r for r in record.tables["profiles"]["rows"] if r[0] == 0]
        return np.array([r[4] for r in rows], dtype=float), np.array([r[5] for r in rows]), "|Psi|"
    raise ValueError("record has no residual series or decay profile")


def emit_plot_data(record: RunRecord, out_dir=None) -> dict:
    """Write log-log data, a 2-point fit line and a text summary.

    Points with a zero value are left out of the log files and counted in
    the summary.  Returns the written paths.
    """
    x, y, label = _plot_series(record)
    if x.size == 0:
        raise ValueError("empty series: nothing to plot")
    out = Path(out_dir if out_dir is not None else record.config.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    keep = y > 0
    dropped = x[~keep]
    lx, ly = np.log10(x[keep]), np.log10(y[keep])
    paths = {"data": out / "plot_data.txt"}
    with open(paths["data"], "w") as fh:
        for a, b in zip(lx, ly):
            fh.write(f"{fmt(a)} {fmt(b)}\n")

    fit = record.summary.get("fit")
    if "profiles" in record.tables and record.summary.get("profiles"):
        p = record.summary["profiles"][0]
        fit = {"slope": p["slope"], "intercept": None}
    lines = [f"quantity: {label}", f"points written: {int(keep.sum())}"]
    if dropped.size:
        lines.append(f"dropped {dropped.size} point(s) with zero value at rho = " + ", ".join(fmt(r) for r in dropped))
    if fit is not None and keep.sum() >= 2:
        slope = fit["slope"]
        if fit.get("intercept") is not None:
            c = fit["intercept"] / math.log(10.0)
        else:
            c = float(np.mean(ly - slope * lx))
        ends = np.array([lx.min(), lx.max()])
        paths["fit"] = out / "plot_fit.txt"
        with open(paths["fit"], "w") as fh:
            for a in ends:
                fh.write(f"{fmt(a)} {fmt(slope * a + c)}\n")
        lines.append(f"fitted slope {slope:.4f}")
    else:
        lines.append("no fit available")
    theory = record.summary.get("theory")
    if theory is not None:
        if theory.get("predicted") is not None:
            lines.append(f"predicted {theory['predicted']:.4g}")
        lines.append(f"theory: {theory['text']}")
    paths["summary"] = out / "plot_summary.txt"
    paths["summary"].write_text("\n".join(lines) + "\n")
    return {k: str(v) for k, v in paths.items()}


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file; flags override it")
    for name in (
        "body",
        "dim",
        "k",
        "axes",
        "normals",
        "offsets",
        "expr",
        "density",
        "f",
        "rho",
        "rho-start",
        "rho-stop",
        "per-octave",
        "jitter",
        "seed",
        "rotations",
        "angle",
        "samples",
        "sigmas",
        "directions",
        "transform",
        "r-start",
        "r-stop",
        "r-step",
        "out",
        "workers",
    ):
        common.add_argument(f"--{name}", dest=name.replace("-", "_"), default=None)
    common.add_argument("--plot", action="store_true", help="also write plot-ready files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="starlattice", description="Weighted lattice counts in star bodies.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common])
    th = sub.add_parser("theory", help="print predicted exponents")
    th.add_argument("--family", choices=["positive-curvature", "superellipsoid", "polygon-rational", "polygon-algebraic"])
    th.add_argument("--body", default=None)
    th.add_argument("--dim", type=int, default=2)
    th.add_argument("--k", type=int, default=None)
    return p


def _theory_command(args) -> int:
    family = args.family
    k = args.k
    if family is None:
        if args.body == "superellipsoid":
            family = "superellipsoid"
        elif args.body in ("polygon", "square"):
            family = "polygon-rational"
        else:
            family = "positive-curvature"
    try:
        th = theory_exponents(args.dim, family, k)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(th.summary())
    if th.note:
        print(th.note)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "theory":
        return _theory_command(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "plot", "verbose")
    }
    overrides["kind"] = args.command
    try:
        cfg = load_config(args.config, overrides)
        record = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetError, TransformBudgetError) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.plot and cfg.kind != "verify-identity":
        emit_plot_data(record)
    _report(cfg, record)
    if cfg.kind == "verify-identity" and not record.summary["passed"]:
        return EXIT_THRESHOLD
    return EXIT_OK


def _report(cfg: ExperimentConfig, record: RunRecord):
    s = record.summary
    if cfg.kind == "verify-identity":
        print(
            f"lhs={s['lhs']:.10g} +- {s['stderr']:.3g}  rhs={s['rhs']:.10g}  "
            f"{s['sigmas']:.2f} sigma  {'PASS' if s['passed'] else 'FAIL'}"
        )
        return
    if cfg.kind == "fourier-decay":
        for p in s["profiles"]:
            print(f"direction={p['direction']} slope={p['slope']:.4f} peaks={p['peaks']}")
    else:
        if s.get("fit"):
            print(f"{s['body']}: envelope slope {s['fit']['slope']:.4f}")
        print(f"theory: {s['theory']['text']}")
    print(f"wrote {record.paths['csv']} and {record.paths['json']}")


if __name__ == "__main__":
    sys.exit(main())
