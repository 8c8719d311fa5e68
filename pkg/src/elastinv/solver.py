"""Forward, adjoint and linearised solves for the scattering problem on the disk.

All solves at a fixed (mesh, q, omega) share one sparse LU factorisation.
The adjoint problem has the same (complex symmetric) operator as the forward
one, so it is solved with conjugated boundary data and the result conjugated
back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spl

from .dtn import BackgroundMedium, DtnOperator, build_dtn
from .fem import (
    _TRIPLE,
    DiskMesh,
    FemSystem,
    MaterialField,
    _scatter,
    _strain_vectors,
    assemble_system,
    boundary_load,
    boundary_load_vector,
    dtn_matrix,
    lambda_local,
    mass_local,
    mu_local,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when the discrete system cannot be factorised or solved."""


@dataclass
class FieldSolution:
    u: np.ndarray  # (n_nodes, 2)
    trace: np.ndarray  # (P, 2)
    omega: float
    kind: str | None = None
    angle: float | None = None
    residual: float = 0.0


@dataclass
class AdjointSolution:
    phi: np.ndarray  # (n_nodes, 2)
    datum: np.ndarray  # (P, 2)
    residual: float = 0.0


class FrequencyContext:
    """Mesh, medium and DtN data that do not depend on ``q``."""

    def __init__(self, mesh: DiskMesh, medium: BackgroundMedium, omega: float, truncation: int | None = None):
        if abs(mesh.radius - medium.radius) > 1e-12 * medium.radius:
            raise ValueError("mesh radius and medium radius differ")
        self.mesh = mesh
        self.medium = medium
        self.omega = float(omega)
        self.dtn: DtnOperator = build_dtn(medium, omega, truncation, mesh.boundary_points)
        self.boundary = dtn_matrix(mesh, self.dtn)
        self._loads: dict = {}

    @property
    def waves(self):
        return self.dtn.waves

    def incident_load(self, kind: str, angle: float) -> np.ndarray:
        key = (kind, float(angle))
        if key not in self._loads:
            g = boundary_load(kind, angle, self.waves, self.medium, self.dtn)
            self._loads[key] = boundary_load_vector(self.mesh, self.dtn, g)
        return self._loads[key]

    def at(self, q: MaterialField) -> "ForwardContext":
        return ForwardContext(self, q)


class ForwardContext:
    """Assembled and factorised system at a fixed material field."""

    def __init__(self, freq: FrequencyContext, q: MaterialField):
        self.freq = freq
        self.q = q
        self.system: FemSystem = assemble_system(
            freq.mesh, q, freq.medium, freq.waves, freq.dtn, boundary=freq.boundary
        )
        self._matrix = self.system.matrix
        try:
            self._lu = spl.splu(self._matrix, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"factorisation failed at omega={freq.omega}: {exc}") from exc
        self.factorizations = 1

    @property
    def mesh(self) -> DiskMesh:
        return self.freq.mesh

    @property
    def omega(self) -> float:
        return self.freq.omega

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        x = self._lu.solve(np.asarray(rhs, dtype=complex))
        if not np.all(np.isfinite(x)):
            raise SolverError(f"non-finite solution at omega={self.omega}")
        nrm = np.linalg.norm(rhs)
        res = np.linalg.norm(self._matrix @ x - rhs) / nrm if nrm > 0 else 0.0
        return x, float(res)

    def trace_of(self, u_nodal: np.ndarray) -> np.ndarray:
        return u_nodal[self.mesh.boundary_ring].copy()


def solve_forward(ctx: ForwardContext, kind: str, angle: float) -> FieldSolution:
    """Total field for a plane incident wave."""
    x, res = ctx.solve(ctx.freq.incident_load(kind, angle))
    u = x.reshape(-1, 2)
    return FieldSolution(u, ctx.trace_of(u), ctx.omega, kind, float(angle), res)


def solve_boundary_datum(ctx: ForwardContext, g: np.ndarray) -> FieldSolution:
    """Total-field problem with an arbitrary boundary datum ``g`` of shape (P, 2)."""
    x, res = ctx.solve(boundary_load_vector(ctx.mesh, ctx.freq.dtn, g))
    u = x.reshape(-1, 2)
    return FieldSolution(u, ctx.trace_of(u), ctx.omega, residual=res)


def near_field(solution: FieldSolution) -> np.ndarray:
    return solution.trace


def phaseless(trace: np.ndarray) -> np.ndarray:
    """Pointwise ``|u|^2`` of a (P, 2) trace."""
    return np.sum(np.abs(trace) ** 2, axis=-1)


def solve_adjoint(ctx: ForwardContext, h: np.ndarray) -> AdjointSolution:
    """Solve for ``phi`` with ``T conj(phi) - B conj(phi) = conj(h)``."""
    h = np.asarray(h, dtype=complex)
    x, res = ctx.solve(boundary_load_vector(ctx.mesh, ctx.freq.dtn, np.conj(h)))
    return AdjointSolution(np.conj(x.reshape(-1, 2)), h, res)


def perturbation_matrix(ctx: ForwardContext, dq: MaterialField) -> sps.csr_matrix:
    """Matrix of ``a_{dq-1}(u, v)``: coefficients lambda0 dq_l, 2 mu0 dq_m, -rho0 omega^2 dq_r."""
    med, mesh = ctx.freq.medium, ctx.mesh
    local = (
        lambda_local(mesh, med.lambda0 * dq.q_lambda)
        + 2.0 * mu_local(mesh, med.mu0 * dq.q_mu)
        - mass_local(mesh, med.rho0 * ctx.omega**2 * dq.q_rho)
    )
    return _scatter(mesh, local)


def derivative_apply(ctx: ForwardContext, base: FieldSolution, dq: MaterialField) -> np.ndarray:
    """Boundary trace of the linearised field ``N'_q(dq)``."""
    rhs = -(perturbation_matrix(ctx, dq) @ base.u.ravel())
    if not np.any(rhs):
        return np.zeros_like(base.trace)
    x, _ = ctx.solve(rhs)
    return ctx.trace_of(x.reshape(-1, 2))


def adjoint_gradient(ctx: ForwardContext, u: np.ndarray, phi: np.ndarray, components=(0, 1, 2)) -> np.ndarray:
    """Nodal fields of ``(-lambda0 div(conj u) div(phi), -2 mu0 E(conj u):E(phi), rho0 omega^2 conj(u).phi)``.

    Element integrals against each hat function are divided by the lumped
    mass, so that ``sum_i m_i dq_i conj(G_i)`` reproduces the discrete pairing
    exactly.  Returns a complex array of shape (3, n_nodes); components not
    listed in ``components`` are left at zero.
    """
    mesh, med = ctx.mesh, ctx.freq.medium
    area, grads = mesh.geometry
    tris = mesh.triangles
    ub = np.conj(u)[tris].reshape(len(tris), 6)
    ph = phi[tris].reshape(len(tris), 6)
    out = np.zeros((3, mesh.n_nodes), dtype=complex)
    lumped = mesh.lumped_mass()
    if 0 in components:
        div = grads.reshape(len(tris), 6)
        val = -med.lambda0 * np.sum(div * ub, 1) * np.sum(div * ph, 1)
        np.add.at(out[0], tris.ravel(), np.repeat(val * area / 3.0, 3))
    if 1 in components:
        eps = _strain_vectors(grads)
        eu = np.einsum("tik,ti->tk", eps, ub)
        ep = np.einsum("tik,ti->tk", eps, ph)
        val = -2.0 * med.mu0 * (eu[:, 0] * ep[:, 0] + eu[:, 1] * ep[:, 1] + 2.0 * eu[:, 2] * ep[:, 2])
        np.add.at(out[1], tris.ravel(), np.repeat(val * area / 3.0, 3))
    if 2 in components:
        uc = np.conj(u)[tris]  # (T, 3, 2)
        pc = phi[tris]
        dot = np.einsum("tad,tbd->tab", uc, pc)
        loc = med.rho0 * ctx.omega**2 * area[:, None] * np.einsum("iab,tab->ti", _TRIPLE, dot)
        np.add.at(out[2], tris.ravel(), loc.ravel())
    return out / lumped


def boundary_inner(dtn_or_weight, a: np.ndarray, b: np.ndarray) -> complex:
    """Trapezoidal ``int_Gamma a . conj(b) ds``."""
    w = dtn_or_weight if np.isscalar(dtn_or_weight) else dtn_or_weight.quadrature_weight
    return complex(w * np.sum(a * np.conj(b)))


def boundary_norm(weight: float, a: np.ndarray) -> float:
    return float(np.sqrt(weight * np.sum(np.abs(a) ** 2)))


def parameter_inner(mesh: DiskMesh, dq: MaterialField, g: np.ndarray) -> complex:
    """Lumped-mass ``L^2(B_R)^3`` pairing ``sum_i m_i dq_i conj(g_i)``."""
    m = mesh.lumped_mass()
    return complex(np.sum(m * dq.as_array() * np.conj(g)))
