"""Self-checks run by ``elastinv validate``.

Each suite returns a :class:`SuiteResult` with the worst observed
discrepancy and the tolerance it was held to.  References come from
``scipy.special`` and from the package's own independent routes (adjoint
pairings, Taylor remainders), never from the code under test alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special as sp

from .dtn import BackgroundMedium, DtnOperator, apply_dtn, build_dtn
from .fem import MaterialField, build_disk_mesh, project_material
from .solver import (
    FrequencyContext,
    adjoint_gradient,
    boundary_inner,
    derivative_apply,
    parameter_inner,
    solve_adjoint,
    solve_forward,
)
from .specfun import hankel1_orders


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    metric: float
    tolerance: float


def check_specfun(tol: float = 1e-10) -> SuiteResult:
    worst = 0.0
    for t in (0.1, 0.7, 2.0, 5.5, 10.0, 15.0):
        h = hankel1_orders(30, t)[:31]
        n = np.arange(31)
        ref = sp.hankel1(n, t)
        worst = max(worst, float(np.max(np.abs(h - ref) / np.abs(ref))))
        # Wronskian J_{n+1} Y_n - J_n Y_{n+1} = 2 / (pi t)
        w = h.real[1:] * h.imag[:-1] - h.real[:-1] * h.imag[1:]
        worst = max(worst, float(np.max(np.abs(w * np.pi * t / 2 - 1))))
    return SuiteResult("specfun", worst <= tol, worst, tol)


def exterior_mode_trace(op: DtnOperator, n: int, a: complex, b: complex):
    """Displacement and traction on ``r = R`` of a single radiating mode.

    The field is ``grad(a H_n(kp r) e^{in theta}) + curl(b H_n(ks r) e^{in theta})``.
    """
    med, w = op.medium, op.waves
    r, th = med.radius, op.angles
    kp, ks = w.kp, w.ks
    e = np.exp(1j * n * th)
    hp, hs = sp.hankel1(n, kp * r), sp.hankel1(n, ks * r)
    dp, ds = sp.h1vp(n, kp * r), sp.h1vp(n, ks * r)
    ddp, dds = sp.h1vp(n, kp * r, 2), sp.h1vp(n, ks * r, 2)
    ur = (a * kp * dp + 1j * n / r * b * hs) * e
    ut = (1j * n / r * a * hp - b * ks * ds) * e
    durr = (a * kp**2 * ddp - 1j * n / r**2 * b * hs + 1j * n / r * b * ks * ds) * e
    dutr = (-1j * n / r**2 * a * hp + 1j * n / r * a * kp * dp - b * ks**2 * dds) * e
    srr = med.lambda0 * (-(kp**2) * a * hp * e) + 2 * med.mu0 * durr
    srt = med.mu0 * (dutr - ut / r + 1j * n * ur / r)
    c, s = np.cos(th), np.sin(th)
    u = np.stack([c * ur - s * ut, s * ur + c * ut], 1)
    t = np.stack([c * srr - s * srt, s * srr + c * srt], 1)
    return u, t


def check_dtn_modes(medium: BackgroundMedium, corrupt_mode: int | None = None, tol: float = 1e-8) -> SuiteResult:
    """Exterior radiating modes: ``B`` of the trace equals the traction.

    ``corrupt_mode`` perturbs ``W_n`` for that ``n`` before testing, to show
    the suite is sensitive to a single wrong entry.
    """
    worst = 0.0
    for omega in (1.0, 5.0, 10.0):
        op = build_dtn(medium, omega)
        if corrupt_mode is not None:
            k = int(np.flatnonzero(op.orders == corrupt_mode)[0])
            op.modes[k].w[0, 1] *= 1.01
        top = op.truncation - 2
        for n in range(-top, top + 1):
            u, t = exterior_mode_trace(op, n, 1.0, 0.5 - 0.25j)
            worst = max(worst, float(np.linalg.norm(apply_dtn(op, u) - t) / np.linalg.norm(t)))
    return SuiteResult("dtn-modes", worst <= tol, worst, tol)


def check_dtn_adjoint(medium: BackgroundMedium, pairs: int = 100, tol: float = 1e-12, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    op = build_dtn(medium, 5.0)
    p = op.boundary_points
    worst = 0.0
    for _ in range(pairs):
        a = rng.normal(size=(p, 2)) + 1j * rng.normal(size=(p, 2))
        b = rng.normal(size=(p, 2)) + 1j * rng.normal(size=(p, 2))
        lhs = np.vdot(b, apply_dtn(op, a, adjoint=True))
        rhs = np.vdot(apply_dtn(op, b), a)
        scale = np.linalg.norm(a) * np.linalg.norm(b) * np.max(np.abs(op.w_stack()))
        worst = max(worst, float(abs(lhs - rhs) / scale))
    return SuiteResult("dtn-adjoint", worst <= tol, worst, tol)


def _smooth_field(mesh, seed: int, amp: float = 0.3) -> MaterialField:
    rng = np.random.default_rng(seed)
    x, y = mesh.nodes.T
    comps = []
    for _ in range(3):
        c = rng.uniform(-0.4, 0.4, 2)
        comps.append(rng.uniform(-amp, amp) * np.exp(-10 * ((x - c[0]) ** 2 + (y - c[1]) ** 2)))
    return project_material(MaterialField(*comps), mesh)


def check_discrete_adjoint(medium: BackgroundMedium, tol: float = 1e-8) -> SuiteResult:
    mesh = build_disk_mesh(medium.radius, 0, coarse_points=64)
    worst = 0.0
    rng = np.random.default_rng(1)
    for omega in (1.0, 5.0):
        ctx = FrequencyContext(mesh, medium, omega).at(_smooth_field(mesh, 2))
        w = ctx.freq.dtn.quadrature_weight
        for kind in ("P", "S"):
            base = solve_forward(ctx, kind, 0.3)
            for k in range(5):
                dq = _smooth_field(mesh, 10 + k)
                h = rng.normal(size=base.trace.shape) + 1j * rng.normal(size=base.trace.shape)
                d = derivative_apply(ctx, base, dq)
                g = adjoint_gradient(ctx, base.u, solve_adjoint(ctx, h).phi)
                lhs = boundary_inner(w, d, h)
                rhs = parameter_inner(mesh, dq, g)
                scale = np.sqrt(w * np.sum(np.abs(d) ** 2) * w * np.sum(np.abs(h) ** 2))
                worst = max(worst, float(abs(lhs - rhs) / scale))
    return SuiteResult("discrete-adjoint", worst <= tol, worst, tol)


def check_taylor(medium: BackgroundMedium, band=(3.5, 4.5)) -> SuiteResult:
    mesh = build_disk_mesh(medium.radius, 0, coarse_points=64)
    freq = FrequencyContext(mesh, medium, 2.0)
    q = _smooth_field(mesh, 3)
    ctx = freq.at(q)
    base = solve_forward(ctx, "P", 0.0)
    dq = _smooth_field(mesh, 4, 0.2)
    lin = derivative_apply(ctx, base, dq)
    rem = []
    for eps in (1e-2, 5e-3):
        pert = MaterialField.from_array(q.as_array() + eps * dq.as_array())
        tr = solve_forward(freq.at(pert), "P", 0.0).trace
        rem.append(np.linalg.norm(tr - base.trace - eps * lin))
    ratio = float(rem[0] / rem[1])
    return SuiteResult("taylor", band[0] <= ratio <= band[1], ratio, band[1])


def run_all(medium: BackgroundMedium | None = None, corrupt_mode: int | None = None) -> list[SuiteResult]:
    medium = medium or BackgroundMedium()
    return [
        check_specfun(),
        check_dtn_modes(medium, corrupt_mode),
        check_dtn_adjoint(medium),
        check_discrete_adjoint(medium),
        check_taylor(medium),
    ]
