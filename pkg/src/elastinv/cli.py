"""Command-line interface: ``elastinv <command> [flags]``.

Settings are resolved as built-in defaults, then a named preset, then the
INI file given by ``--config``, then explicit flags.  The effective
settings are written to ``<out>/config.ini`` for every run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .dtn import BackgroundMedium, DtnError
from .fem import MeshError, build_disk_mesh, write_field_csv, write_mesh_csv
from .inversion import (
    VARIANTS,
    InversionError,
    InversionProblem,
    StepSize,
    StoppingRule,
    SweepSchedule,
    relative_errors,
    run_sweep,
)
from .scenarios import (
    PRESETS,
    InverseCrimeWarning,
    get_phantom,
    paper_preset,
    read_dataset,
    read_header,
    synthesize,
    write_dataset,
)
from .solver import FrequencyContext, SolverError, solve_forward
from .specfun import SpecialFunctionError
from .validation import run_all

log = logging.getLogger("elastinv")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # medium
    lambda0: float = 2.0
    mu0: float = 1.0
    rho0: float = 1.0
    radius: float = 1.0
    # meshes
    mesh_level: int = 1
    data_mesh_level: int | None = None
    boundary_points: int | None = None
    # schedule
    frequencies: tuple = (1.0,)
    directions: tuple = (0.0,)
    inner_iterations: int = 10
    frequency_order: str = "outer"
    # step and stopping
    step: str = "matrix"
    alpha: float = 0.01
    stop: str = "fixed"
    tau: float = 3.0
    eta0: float = 0.1
    delta: float | None = None
    # problem
    preset: str | None = None
    phantom: str = "blobs"
    kind: str = "P"
    variant: str = "full"
    noise: float = 0.0
    seed: int = 0
    dataset: str | None = None
    margin: float = 0.1
    # runtime
    workers: int = 0
    out: str = "out"

    @property
    def medium(self) -> BackgroundMedium:
        return BackgroundMedium(self.lambda0, self.mu0, self.rho0, self.radius)

    @property
    def data_level(self) -> int:
        return self.mesh_level + 1 if self.data_mesh_level is None else self.data_mesh_level

    @property
    def worker_count(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def validate(self) -> None:
        if self.mesh_level < 0 or self.data_level < 0:
            raise ConfigError("mesh levels must be >= 0")
        if self.data_level < self.mesh_level:
            raise ConfigError("data mesh level must not be coarser than the inversion mesh level")
        if self.kind not in ("P", "S"):
            raise ConfigError(f"kind must be P or S, got {self.kind!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.inner_iterations < 0:
            raise ConfigError("iterations must be >= 0")
        try:
            BackgroundMedium(self.lambda0, self.mu0, self.rho0, self.radius)
            StepSize(self.step, self.alpha)
            SweepSchedule(self.frequencies, self.directions, self.inner_iterations, self.frequency_order)
            StoppingRule(self.stop, self.tau, self.delta or 0.0, self.eta0)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None


_SECTIONS = {
    "medium": ("lambda0", "mu0", "rho0", "radius"),
    "mesh": ("mesh_level", "data_mesh_level", "boundary_points", "margin"),
    "schedule": ("frequencies", "directions", "inner_iterations", "frequency_order"),
    "step": ("step", "alpha"),
    "stopping": ("stop", "tau", "eta0", "delta"),
    "problem": ("preset", "phantom", "kind", "variant", "noise", "seed", "dataset"),
    "run": ("workers", "out"),
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _float_list(text: str) -> tuple:
    """Comma-separated floats, ``a:b`` for the integers a..b, or ``uniform:M``."""
    text = text.strip()
    if text.startswith("uniform:"):
        m = int(text.split(":", 1)[1])
        return tuple(2 * k * math.pi / m for k in range(m))
    if ":" in text and "," not in text:
        lo, hi = (int(v) for v in text.split(":"))
        return tuple(float(v) for v in range(lo, hi + 1))
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _parse(name: str, text: str):
    kind = _TYPES[name]
    text = text.strip()
    if text == "" or text.lower() == "none":
        if "None" in kind:
            return None
        raise ConfigError(f"{name} must not be empty")
    try:
        if kind == "tuple":
            return _float_list(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {text!r}") from None


def write_config(cfg: RunConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    values = asdict(cfg)
    for section, keys in _SECTIONS.items():
        parser[section] = {k: _format(values[k]) for k in keys}
    with open(path, "w") as fh:
        parser.write(fh)


def read_config(path: str | Path) -> dict:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    out = {}
    for section in parser.sections():
        for key, text in parser[section].items():
            if key not in _TYPES:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            out[key] = _parse(key, text)
    return out


def preset_values(preset_id: str) -> dict:
    try:
        p = paper_preset(preset_id)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    return dict(
        preset=p.id,
        frequencies=p.frequencies,
        directions=p.directions,
        inner_iterations=p.inner_iterations,
        step=p.step,
        alpha=p.step_value,
        kind=p.kind,
        variant=p.variant,
        noise=p.noise,
        phantom=p.phantom,
    )


_FLAG_KEYS = (
    "preset", "out", "seed", "workers", "mesh_level", "data_mesh_level", "noise", "tau", "stop",
    "phantom", "kind", "variant", "step", "alpha", "inner_iterations", "frequencies", "directions",
    "delta", "eta0", "dataset", "boundary_points",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config(args.config) if args.config else {}
    preset = args.preset or file_values.get("preset")
    merged = preset_values(preset) if preset else {}
    merged.update(file_values)
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = _parse(key, val) if isinstance(val, str) and _TYPES[key] == "tuple" else val
    if preset:
        merged["preset"] = preset
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.ini")
    return out


# ---------------------------------------------------------------- commands


def cmd_forward(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg)
    omega = cfg.frequencies[0] if args.omega is None else args.omega
    angle = cfg.directions[0] if args.angle is None else args.angle
    mesh = build_disk_mesh(cfg.radius, cfg.mesh_level, cfg.boundary_points)
    q = get_phantom(cfg.phantom).on_mesh(mesh, cfg.margin)
    t0 = time.perf_counter()
    ctx = FrequencyContext(mesh, cfg.medium, omega).at(q)
    sol = solve_forward(ctx, cfg.kind, angle)
    elapsed = time.perf_counter() - t0
    write_mesh_csv(mesh, out / "nodes.csv", out / "triangles.csv")
    for c, name in enumerate(("u1", "u2")):
        write_field_csv(mesh, sol.u[:, c].real, out / f"{name}_re.csv")
        write_field_csv(mesh, sol.u[:, c].imag, out / f"{name}_im.csv")
    ang = ctx.freq.dtn.angles
    np.savetxt(
        out / "trace.csv",
        np.column_stack([ang, sol.trace[:, 0].real, sol.trace[:, 0].imag, sol.trace[:, 1].real, sol.trace[:, 1].imag]),
        delimiter=",",
        header="theta,u1_re,u1_im,u2_re,u2_im",
        comments="",
    )
    print(f"omega={omega:g} angle={angle:g} kind={cfg.kind} nodes={mesh.n_nodes}")
    print(f"relative residual {sol.residual:.3e}  time {elapsed:.3f} s")
    if cfg.phantom == "zero":
        from .fem import incident_field

        inc = incident_field(cfg.kind, angle, ctx.freq.waves, mesh.nodes[mesh.boundary_ring])
        err = np.linalg.norm(sol.trace - inc) / np.linalg.norm(inc)
        print(f"trace vs incident relative L2 error {err:.3e}")
    return EXIT_OK


def _inverse_crime_notice(cfg: RunConfig) -> None:
    if cfg.data_level == cfg.mesh_level:
        print(
            "WARNING: data and inversion meshes coincide (inverse crime); results are optimistic",
            file=sys.stderr,
        )


def _synthesize(cfg: RunConfig):
    _inverse_crime_notice(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InverseCrimeWarning)
        return synthesize(
            get_phantom(cfg.phantom),
            cfg.frequencies,
            cfg.directions,
            cfg.kind,
            cfg.mesh_level,
            cfg.data_level,
            cfg.noise,
            cfg.seed,
            cfg.variant.startswith("phaseless"),
            cfg.medium,
            cfg.margin,
            cfg.worker_count,
            cfg.boundary_points,
        )


def cmd_synthesize(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg)
    t0 = time.perf_counter()
    ds = _synthesize(cfg)
    path = out / "dataset.bin"
    write_dataset(ds, path)
    n, m = len(ds.frequencies), len(ds.directions)
    print(f"wrote {path}: {n}x{m} records, P={ds.boundary_points}, {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_invert(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg)
    if cfg.dataset:
        ds = read_dataset(cfg.dataset)
        prov = ds.provenance
        if prov.get("inversion_level") is not None and prov.get("data_level") == cfg.mesh_level:
            print("WARNING: dataset was synthesized on the inversion mesh (inverse crime)", file=sys.stderr)
    else:
        ds = _synthesize(cfg)
        write_dataset(ds, out / "dataset.bin")
    mesh = build_disk_mesh(cfg.radius, cfg.mesh_level, cfg.boundary_points or ds.boundary_points)
    truth = get_phantom(cfg.phantom).on_mesh(mesh, cfg.margin) if cfg.phantom else None
    delta = cfg.delta if cfg.delta is not None else ds.noise_level
    stopping = StoppingRule(cfg.stop, cfg.tau, delta, cfg.eta0)
    schedule = SweepSchedule(cfg.frequencies, cfg.directions, cfg.inner_iterations, cfg.frequency_order)
    step = StepSize.for_medium(cfg.step, cfg.alpha, cfg.medium)
    problem = InversionProblem(mesh, cfg.medium, cfg.margin)
    t0 = time.perf_counter()
    try:
        q, trace = run_sweep(problem, schedule, step, ds, cfg.kind, cfg.variant, stopping, truth=truth)
    except InversionError as exc:
        if exc.trace is not None:
            exc.trace.write_csv(out / "trace.csv")
        raise
    trace.write_csv(out / "trace.csv")
    write_mesh_csv(mesh, out / "nodes.csv", out / "triangles.csv")
    for name, values in zip(("q_lambda", "q_mu", "q_rho"), q.as_array()):
        write_field_csv(mesh, values, out / f"{name}.csv")
    summary = {
        "variant": cfg.variant,
        "steps": len(trace.rows),
        "seconds": time.perf_counter() - t0,
        "stops": [list(s) for s in trace.stops],
    }
    if truth is not None:
        e = relative_errors(mesh, q, truth)
        summary["e_qlambda"], summary["e_qmu"], summary["e_qrho"] = (None if math.isnan(v) else float(v) for v in e)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, args) -> int:
    results = run_all(cfg.medium, corrupt_mode=args.corrupt_mode)
    print("suite\tstatus\tmetric\ttolerance")
    for r in results:
        print(f"{r.name}\t{'PASS' if r.passed else 'FAIL'}\t{r.metric:.3e}\t{r.tolerance:.1e}")
    if args.out is not None:
        out = _prepare_out(cfg)
        (out / "validate.json").write_text(json.dumps([asdict(r) for r in results], indent=2))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def cmd_dataset_info(cfg: RunConfig, args) -> int:
    path = args.path or cfg.dataset
    if not path:
        raise ConfigError("dataset-info needs a dataset path")
    try:
        head = read_header(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from None
    print(json.dumps(head, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("settings (override --config and --preset)")
    g.add_argument("--config", help="INI file with run settings")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int, help="worker threads for synthesis (default: core count)")
    g.add_argument("--mesh-level", dest="mesh_level", type=int)
    g.add_argument("--data-mesh-level", dest="data_mesh_level", type=int)
    g.add_argument("--boundary-points", dest="boundary_points", type=int, help="ring size P of the inversion mesh")
    g.add_argument("--noise", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--stop", choices=("fixed", "discrepancy"))
    g.add_argument("--delta", type=float, help="noise bound for the discrepancy rule (default: dataset noise)")
    g.add_argument("--eta0", type=float)
    g.add_argument("--phantom")
    g.add_argument("--kind", choices=("P", "S"))
    g.add_argument("--variant", choices=VARIANTS)
    g.add_argument("--step", choices=("constant", "scalar", "matrix"))
    g.add_argument("--alpha", type=float)
    g.add_argument("--iterations", dest="inner_iterations", type=int)
    g.add_argument("--frequencies", help="e.g. '1:10' or '1,2.5,4'")
    g.add_argument("--directions", help="e.g. 'uniform:16' or '0,1.5708'")
    g.add_argument("--dataset", help="dataset file to invert")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastinv", description="Elastic inverse medium scattering on a disk.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("forward", help="solve one forward problem")
    _common(p)
    p.add_argument("--omega", type=float)
    p.add_argument("--angle", type=float)
    p.set_defaults(func=cmd_forward)
    p = sub.add_parser("synthesize", help="generate a near-field dataset")
    _common(p)
    p.set_defaults(func=cmd_synthesize)
    p = sub.add_parser("invert", help="run a Landweber sweep")
    _common(p)
    p.set_defaults(func=cmd_invert)
    p = sub.add_parser("validate", help="run the built-in invariant suites")
    _common(p)
    p.add_argument("--corrupt-mode", dest="corrupt_mode", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("dataset-info", help="print a dataset header")
    _common(p)
    p.add_argument("path", nargs="?")
    p.set_defaults(func=cmd_dataset_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except (ConfigError, KeyError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, InversionError, DtnError, SpecialFunctionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
