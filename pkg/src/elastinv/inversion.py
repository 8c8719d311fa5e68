"""Multi-frequency Landweber reconstruction.

The sweep runs frequency-outer, direction-middle, Landweber-inner.  Each
inner step solves the forward problem at the current iterate, forms the
boundary residual, solves one adjoint problem with that residual as datum
and moves ``q`` along the real part of the adjoint-state gradient.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dtn import BackgroundMedium
from .fem import DiskMesh, MaterialField, admissible, support_cutoff
from .scenarios import NearFieldDataset
from .solver import (
    FieldSolution,
    ForwardContext,
    FrequencyContext,
    adjoint_gradient,
    boundary_norm,
    phaseless,
    solve_adjoint,
    solve_forward,
)

log = logging.getLogger(__name__)

VARIANTS = ("full", "phaseless", "density", "phaseless-density")


class InversionError(RuntimeError):
    def __init__(self, message: str, trace: "IterationTrace | None" = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class StepSize:
    """Relaxation parameter as a function of frequency.

    ``constant``: alpha = value; ``scalar``: alpha = value / omega;
    ``matrix``: alpha = 1/(100 omega) * [[2+r, r, 0], [r, 2+r, 0], [0, 0, 1]]
    with ``r = lambda0 / mu0``.
    """

    variant: str = "matrix"
    value: float = 0.01
    lame_ratio: float = 2.0

    def __post_init__(self):
        if self.variant not in ("constant", "scalar", "matrix"):
            raise ValueError(f"unknown step variant {self.variant!r}")

    @classmethod
    def for_medium(cls, variant: str, value: float, medium: BackgroundMedium) -> "StepSize":
        return cls(variant, value, medium.lambda0 / medium.mu0)

    def matrix(self, omega: float) -> np.ndarray:
        if self.variant == "constant":
            return self.value * np.eye(3)
        if self.variant == "scalar":
            return self.value / omega * np.eye(3)
        r = self.lame_ratio
        return np.array([[2 + r, r, 0.0], [r, 2 + r, 0.0], [0.0, 0.0, 1.0]]) / (100.0 * omega)

    def apply(self, grad: np.ndarray, omega: float) -> np.ndarray:
        return self.matrix(omega) @ grad


@dataclass(frozen=True)
class SweepSchedule:
    frequencies: tuple
    directions: tuple
    inner_iterations: int
    frequency_order: str = "outer"  # "outer" (default) or "inner"

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float)
        if len(w) == 0 or np.any(np.diff(w) <= 0):
            raise ValueError("frequencies must be non-empty and strictly increasing")
        if self.inner_iterations < 0:
            raise ValueError("inner_iterations must be >= 0")
        if self.frequency_order not in ("outer", "inner"):
            raise ValueError("frequency_order must be 'outer' or 'inner'")

    def stages(self):
        """Yield ``(i, j)`` index pairs in sweep order."""
        n, m = len(self.frequencies), len(self.directions)
        if self.frequency_order == "outer":
            for i in range(n):
                for j in range(m):
                    yield i, j
        else:
            for j in range(m):
                for i in range(n):
                    yield i, j


def tau_lower_bound(eta0: float) -> float:
    return 2.0 * (1.0 + eta0) / (1.0 - 2.0 * eta0)


@dataclass(frozen=True)
class StoppingRule:
    kind: str = "fixed"  # "fixed" | "discrepancy"
    tau: float = 3.0
    delta: float = 0.0
    eta0: float = 0.1
    relative: bool = True

    def __post_init__(self):
        if self.kind not in ("fixed", "discrepancy"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if not 0 <= self.eta0 < 0.5:
            raise ValueError("eta0 must lie in [0, 1/2)")
        if self.kind == "discrepancy" and not self.tau > tau_lower_bound(self.eta0):
            raise ValueError(
                f"tau={self.tau} violates tau > 2(1+eta0)/(1-2 eta0) = {tau_lower_bound(self.eta0):.4g}"
            )

    def noise_bound(self, data_norm: float) -> float:
        """Absolute noise bound for one record: ``delta * ||data||`` when relative."""
        return self.delta * data_norm if self.relative else self.delta


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    stops: list = field(default_factory=list)  # (i, j, k', noise_bound)
    initial_distance: float = math.nan
    initial_errors: np.ndarray | None = None

    COLUMNS = ("i", "j", "l", "omega", "theta", "residual", "e_qlambda", "e_qmu", "e_qrho", "seconds")

    def append(self, **row) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            wr.writeheader()
            for r in self.rows:
                wr.writerow({k: r[k] for k in self.COLUMNS})


def relative_errors(mesh: DiskMesh, q: MaterialField, truth: MaterialField) -> np.ndarray:
    """``||q - q_true|| / ||q_true||`` per parameter in the consistent mass norm.

    Components with zero truth give ``nan``.
    """
    mass = mesh.mass_matrix()
    out = np.empty(3)
    for k, (a, b) in enumerate(zip(q.as_array(), truth.as_array())):
        den = math.sqrt(max(b @ (mass @ b), 0.0))
        d = a - b
        out[k] = math.sqrt(max(d @ (mass @ d), 0.0)) / den if den > 0 else math.nan
    return out


def parameter_distance(mesh: DiskMesh, q: MaterialField, truth: MaterialField) -> float:
    """``||q - q_true||`` in ``L^2(B_R)^3`` (consistent mass)."""
    mass = mesh.mass_matrix()
    d = q.as_array() - truth.as_array()
    return math.sqrt(sum(max(r @ (mass @ r), 0.0) for r in d))


# ---------------------------------------------------------------- steps


@dataclass
class StepResult:
    increment: MaterialField
    residual: float
    solution: FieldSolution


def _zero_increment(n: int) -> MaterialField:
    return MaterialField.zeros(n)


def gradient_step(
    ctx: ForwardContext,
    data: np.ndarray,
    kind: str,
    angle: float,
    step: StepSize,
    components=(0, 1, 2),
) -> StepResult:
    """Landweber increment ``alpha Re (N'_q)^*(data - N(q))`` at ``ctx.q``."""
    sol = solve_forward(ctx, kind, angle)
    h = np.asarray(data) - sol.trace
    w = ctx.freq.dtn.quadrature_weight
    res = boundary_norm(w, h)
    n = ctx.mesh.n_nodes
    if res == 0.0:
        return StepResult(_zero_increment(n), 0.0, sol)
    adj = solve_adjoint(ctx, h)
    g = adjoint_gradient(ctx, sol.u, adj.phi, components).real
    return StepResult(MaterialField.from_array(step.apply(g, ctx.omega)), res, sol)


def gradient_step_phaseless(
    ctx: ForwardContext,
    data: np.ndarray,
    kind: str,
    angle: float,
    step: StepSize,
    components=(0, 1, 2),
) -> StepResult:
    """Increment ``2 alpha Re (N'_q)^*(hbar u)`` with ``hbar = data - |u|^2``."""
    sol = solve_forward(ctx, kind, angle)
    hbar = np.asarray(data, dtype=float) - phaseless(sol.trace)
    w = ctx.freq.dtn.quadrature_weight
    res = boundary_norm(w, hbar)
    n = ctx.mesh.n_nodes
    if res == 0.0:
        return StepResult(_zero_increment(n), 0.0, sol)
    adj = solve_adjoint(ctx, hbar[:, None] * sol.trace)
    g = 2.0 * adjoint_gradient(ctx, sol.u, adj.phi, components).real
    return StepResult(MaterialField.from_array(step.apply(g, ctx.omega)), res, sol)


def gradient_step_density(ctx: ForwardContext, data: np.ndarray, kind: str, angle: float, step: StepSize) -> StepResult:
    """Density-only increment ``alpha Re(rho0 omega^2 conj(u) . phi)``."""
    return gradient_step(ctx, data, kind, angle, step, components=(2,))


# ---------------------------------------------------------------- sweep


@dataclass
class InversionProblem:
    mesh: DiskMesh
    medium: BackgroundMedium
    margin: float = 0.1
    truncation: int | None = None


def run_sweep(
    problem: InversionProblem,
    schedule: SweepSchedule,
    step: StepSize,
    dataset: NearFieldDataset,
    kind: str | None = None,
    variant: str = "full",
    stopping: StoppingRule | None = None,
    initial: MaterialField | None = None,
    truth: MaterialField | None = None,
    callback=None,
) -> tuple[MaterialField, IterationTrace]:
    """Run the multi-frequency Landweber sweep.

    ``dataset`` records are looked up by value of frequency and direction,
    so the schedule may use any subset of the dataset's grid.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    stopping = stopping or StoppingRule()
    mesh = problem.mesh
    kind = kind or dataset.kind
    is_phaseless = variant.startswith("phaseless")
    if is_phaseless != bool(dataset.phaseless):
        raise InversionError(f"variant {variant!r} does not match dataset (phaseless={dataset.phaseless})")
    if dataset.boundary_points != mesh.boundary_points:
        raise InversionError(
            f"dataset has {dataset.boundary_points} boundary samples, mesh ring has {mesh.boundary_points}"
        )
    components = (2,) if variant.endswith("density") else (0, 1, 2)
    fidx = {round(float(w), 12): i for i, w in enumerate(dataset.frequencies)}
    didx = {round(float(t), 12): j for j, t in enumerate(dataset.directions)}
    try:
        lookup = {
            (i, j): (fidx[round(float(w), 12)], didx[round(float(t), 12)])
            for i, w in enumerate(schedule.frequencies)
            for j, t in enumerate(schedule.directions)
        }
    except KeyError as exc:
        raise InversionError(f"dataset does not cover schedule entry {exc}") from None

    q = initial.copy() if initial is not None else MaterialField.zeros(mesh.n_nodes)
    q = admissible(q, mesh, problem.margin)
    chi = support_cutoff(mesh, problem.margin)
    trace = IterationTrace()
    if truth is not None:
        trace.initial_distance = parameter_distance(mesh, q, truth)
        trace.initial_errors = relative_errors(mesh, q, truth)
    freq_cache: dict[int, FrequencyContext] = {}
    stepper = gradient_step_phaseless if is_phaseless else gradient_step
    weight = 2 * math.pi * problem.medium.radius / mesh.boundary_points

    for i, j in schedule.stages():
        omega = float(schedule.frequencies[i])
        theta = float(schedule.directions[j])
        if i not in freq_cache:
            freq_cache.clear()
            freq_cache[i] = FrequencyContext(mesh, problem.medium, omega, problem.truncation)
        fctx = freq_cache[i]
        data = dataset.record(*lookup[(i, j)])
        bound = stopping.noise_bound(boundary_norm(weight, data))
        stopped_at = None
        for l in range(1, schedule.inner_iterations + 1):
            t0 = time.perf_counter()
            try:
                ctx = fctx.at(q)
                res = stepper(ctx, data, kind, theta, step, components)
            except Exception as exc:
                raise InversionError(f"stage (i={i}, j={j}, l={l}) failed: {exc}", trace) from exc
            if stopping.kind == "discrepancy" and res.residual <= stopping.tau * bound:
                stopped_at = l - 1
                trace.append(**_row(i, j, l, omega, theta, res.residual, None, mesh, truth, t0, skipped=True))
                break
            q = admissible(q + res.increment.scaled(chi), mesh, problem.margin)
            trace.append(**_row(i, j, l, omega, theta, res.residual, q, mesh, truth, t0))
            if callback is not None:
                callback(i, j, l, q)
        if stopping.kind == "discrepancy":
            trace.stops.append((i, j, schedule.inner_iterations if stopped_at is None else stopped_at, bound))
        log.info("stage i=%d j=%d done (omega=%g)", i, j, omega)
    return q, trace


def _row(i, j, l, omega, theta, residual, q, mesh, truth, t0, skipped=False):
    if truth is not None and q is not None:
        e = relative_errors(mesh, q, truth)
        dist = parameter_distance(mesh, q, truth)
    else:
        e = (math.nan,) * 3
        dist = math.nan
    return dict(
        i=i + 1,
        j=j + 1,
        l=l,
        omega=omega,
        theta=theta,
        residual=residual,
        e_qlambda=e[0],
        e_qmu=e[1],
        e_qrho=e[2],
        seconds=time.perf_counter() - t0,
        distance=dist,
        updated=not skipped,
    )
