"""P1 vector finite elements on a ring-structured disk mesh.

Degrees of freedom are interleaved: node ``i`` owns ``2*i`` (x component)
and ``2*i + 1`` (y component).  The discrete system is

    K(q, omega) = A_lambda + B_mu + C_rho - D

with ``D`` the dense DtN block on the boundary ring, weighted by the
trapezoidal arc-length weight ``2 pi R / P``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .dtn import BackgroundMedium, DtnOperator, WaveNumbers, apply_dtn, dense_block

CLAMP_EPS = 1e-6
BASE_BOUNDARY_POINTS = 128

# exact integrals of products of three barycentric coordinates over a
# triangle, divided by its area
_TRIPLE = np.array(
    [[[{1: 6.0, 2: 2.0, 3: 1.0}[len({a, b, c})] / 60.0 for c in range(3)] for b in range(3)] for a in range(3)]
)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class DiskMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_ring: np.ndarray
    refinement_level: int
    radius: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.nodes)

    @property
    def boundary_points(self) -> int:
        return len(self.boundary_ring)

    @cached_property
    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Areas and barycentric gradients, shape (T,) and (T, 3, 2); read-only."""
        area, grads = _geometry(self)
        area.flags.writeable = False
        grads.flags.writeable = False
        return area, grads

    @property
    def areas(self) -> np.ndarray:
        return self.geometry[0]

    @cached_property
    def _lumped(self) -> np.ndarray:
        m = np.zeros(self.n_nodes)
        np.add.at(m, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        m.flags.writeable = False
        return m

    def lumped_mass(self) -> np.ndarray:
        return self._lumped

    @cached_property
    def _mass(self) -> sps.csr_matrix:
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = self.areas[:, None, None] * local
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        return sps.csr_matrix((vals.ravel(), (rows, cols)), shape=(self.n_nodes,) * 2)

    def mass_matrix(self) -> sps.csr_matrix:
        """Consistent scalar P1 mass matrix (cached; do not modify)."""
        return self._mass

    def element_diameters(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e = [np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)]
        return np.max(e, axis=0)


def boundary_points_for_level(level: int, coarse_points: int = BASE_BOUNDARY_POINTS) -> int:
    return coarse_points * 2**level


def _stitch(inner: np.ndarray, inner_ang: np.ndarray, outer: np.ndarray, outer_ang: np.ndarray):
    """Triangulate the annulus between two closed rings sorted by angle."""
    tris = []
    i = k = 0
    ni, no = len(inner), len(outer)
    two_pi = 2 * math.pi
    while i < ni or k < no:
        next_i = inner_ang[i + 1] if i + 1 < ni else inner_ang[0] + two_pi
        next_k = outer_ang[k + 1] if k + 1 < no else outer_ang[0] + two_pi
        if k >= no or (i < ni and next_i < next_k):
            tris.append((inner[i], inner[(i + 1) % ni], outer[k % no]))
            i += 1
        else:
            tris.append((inner[i % ni], outer[(k + 1) % no], outer[k]))
            k += 1
    return tris


def build_disk_mesh(
    radius: float = 1.0,
    refinement_level: int = 1,
    boundary_points: int | None = None,
    coarse_points: int = BASE_BOUNDARY_POINTS,
) -> DiskMesh:
    """Concentric-ring triangulation of the disk.

    The interior resolution is ``n = coarse_points * 2**level``: ring ``j``
    of ``J = ceil(n / (2 pi))`` rings carries ``ceil(n j / J)`` equally
    spaced nodes at radius ``R j / J``, so element sizes are about
    ``2 pi R / n``.  The outermost ring is exactly the ``P`` uniform
    boundary angles, ``P = n`` unless ``boundary_points`` is given.
    """
    if refinement_level < 0:
        raise MeshError("refinement_level must be >= 0")
    n = boundary_points_for_level(refinement_level, coarse_points)
    p = n if boundary_points is None else int(boundary_points)
    if p < 16 or p & (p - 1):
        raise MeshError(f"boundary_points must be a power of two >= 16, got {p}")
    n_rings = math.ceil(n / (2 * math.pi))
    nodes = [np.zeros((1, 2))]
    rings, angles = [np.array([0])], [np.array([0.0])]
    start = 1
    for j in range(1, n_rings + 1):
        count = p if j == n_rings else max(6, math.ceil(n * j / n_rings))
        ang = 2 * math.pi * np.arange(count) / count
        r = radius if j == n_rings else radius * j / n_rings
        nodes.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        rings.append(np.arange(start, start + count))
        angles.append(ang)
        start += count
    nodes = np.vstack(nodes)
    tris = [(0, rings[1][m], rings[1][(m + 1) % len(rings[1])]) for m in range(len(rings[1]))]
    for j in range(1, n_rings):
        tris += _stitch(rings[j], angles[j], rings[j + 1], angles[j + 1])
    tris = np.array(tris, dtype=np.int64)
    p0, p1, p2 = (nodes[tris[:, i]] for i in range(3))
    signed = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    flip = signed < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return DiskMesh(nodes, tris, rings[-1], refinement_level, float(radius))


def _geometry(mesh: DiskMesh):
    """Areas and barycentric gradients, shape (T,) and (T, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    # gradients of barycentric coordinates
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return area, grads


# ---------------------------------------------------------------- material


@dataclass
class MaterialField:
    """Nodal P1 samples of the relative perturbations of lambda, mu and rho."""

    q_lambda: np.ndarray
    q_mu: np.ndarray
    q_rho: np.ndarray

    @classmethod
    def zeros(cls, n_nodes: int) -> "MaterialField":
        return cls(np.zeros(n_nodes), np.zeros(n_nodes), np.zeros(n_nodes))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "MaterialField":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0].copy(), arr[1].copy(), arr[2].copy())

    def as_array(self) -> np.ndarray:
        return np.stack([self.q_lambda, self.q_mu, self.q_rho])

    def copy(self) -> "MaterialField":
        return MaterialField.from_array(self.as_array())

    def __add__(self, other: "MaterialField") -> "MaterialField":
        return MaterialField.from_array(self.as_array() + other.as_array())

    def scaled(self, factor) -> "MaterialField":
        """Multiply by a scalar or by a nodal array."""
        return MaterialField.from_array(factor * self.as_array())


def support_cutoff(mesh: DiskMesh, margin: float = 0.1) -> np.ndarray:
    """Nodal cutoff: 1 for r <= (1-2m)R, 0 for r >= (1-m)R, C1 smoothstep between."""
    R = mesh.radius
    r = np.linalg.norm(mesh.nodes, axis=1)
    inner, outer = R * (1 - 2 * margin), R * (1 - margin)
    s = np.clip((outer - r) / (outer - inner), 0.0, 1.0)
    chi = s * s * (3 - 2 * s)
    chi[mesh.boundary_ring] = 0.0
    return chi


def project_material(q: MaterialField, mesh: DiskMesh, margin: float = 0.1) -> MaterialField:
    """Real part, support cutoff and lower-bound clamp ``q >= -1 + eps``."""
    chi = support_cutoff(mesh, margin)
    arr = np.real(q.as_array()) * chi
    return MaterialField.from_array(np.maximum(arr, -1.0 + CLAMP_EPS))


def admissible(q: MaterialField, mesh: DiskMesh, margin: float = 0.1) -> MaterialField:
    """Idempotent projection: real part, zero where the cutoff vanishes, clamp.

    Unlike :func:`project_material` values inside the support are not
    rescaled, so applying it twice changes nothing.
    """
    keep = support_cutoff(mesh, margin) > 0
    arr = np.where(keep, np.real(q.as_array()), 0.0)
    return MaterialField.from_array(np.maximum(arr, -1.0 + CLAMP_EPS))


# ---------------------------------------------------------------- assembly


def _expand(tris: np.ndarray) -> np.ndarray:
    """Element dof indices, shape (T, 6), ordered (node0 x, node0 y, node1 x, ...)."""
    return np.stack([2 * tris, 2 * tris + 1], axis=2).reshape(len(tris), 6)


def _scatter(mesh: DiskMesh, local: np.ndarray) -> sps.csr_matrix:
    dofs = _expand(mesh.triangles)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    return sps.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_dofs,) * 2)


def _div_vectors(grads: np.ndarray) -> np.ndarray:
    """Divergence of each of the six local basis functions, shape (T, 6)."""
    return grads.reshape(len(grads), 6)


def _strain_vectors(grads: np.ndarray) -> np.ndarray:
    """Voigt-like strain of each local basis function: (T, 6, 3) with
    components (e11, e22, e12)."""
    t = len(grads)
    eps = np.zeros((t, 6, 3))
    for a in range(3):
        gx, gy = grads[:, a, 0], grads[:, a, 1]
        eps[:, 2 * a, 0] = gx
        eps[:, 2 * a, 2] = 0.5 * gy
        eps[:, 2 * a + 1, 1] = gy
        eps[:, 2 * a + 1, 2] = 0.5 * gx
    return eps


def _element_means(mesh: DiskMesh, values: np.ndarray) -> np.ndarray:
    return values[mesh.triangles].mean(axis=1)


def lambda_local(mesh: DiskMesh, coef: np.ndarray) -> np.ndarray:
    """Local matrices of int coef div(u) div(v) for nodal P1 ``coef``."""
    area, grads = mesh.geometry
    div = _div_vectors(grads)
    w = area * _element_means(mesh, coef)
    return w[:, None, None] * div[:, :, None] * div[:, None, :]


def mu_local(mesh: DiskMesh, coef: np.ndarray) -> np.ndarray:
    """Local matrices of int coef E(u):E(v)."""
    area, grads = mesh.geometry
    eps = _strain_vectors(grads)
    metric = np.array([1.0, 1.0, 2.0])  # e12 appears twice in A:B
    w = area * _element_means(mesh, coef)
    return w[:, None, None] * np.einsum("tik,k,tjk->tij", eps, metric, eps)


def mass_local(mesh: DiskMesh, coef: np.ndarray) -> np.ndarray:
    """Local matrices of int coef u.v with exact cubic integration."""
    area, _ = mesh.geometry
    c = coef[mesh.triangles]  # (T, 3)
    scalar = area[:, None, None] * np.einsum("tc,cab->tab", c, _TRIPLE)
    local = np.zeros((len(area), 6, 6))
    local[:, 0::2, 0::2] = scalar
    local[:, 1::2, 1::2] = scalar
    return local


def volume_matrix(mesh: DiskMesh, q: MaterialField, medium: BackgroundMedium, omega: float) -> sps.csr_matrix:
    """Sparse part ``A + B + C`` of the system."""
    local = (
        lambda_local(mesh, medium.lambda0 * (1.0 + q.q_lambda))
        + 2.0 * mu_local(mesh, medium.mu0 * (1.0 + q.q_mu))
        - mass_local(mesh, medium.rho0 * omega**2 * (1.0 + q.q_rho))
    )
    return _scatter(mesh, local)


def boundary_dofs(mesh: DiskMesh) -> np.ndarray:
    return np.column_stack([2 * mesh.boundary_ring, 2 * mesh.boundary_ring + 1]).ravel()


def dtn_matrix(mesh: DiskMesh, dtn: DtnOperator) -> sps.csr_matrix:
    """Sparse embedding of the weighted boundary block ``D``.

    The block is symmetrised; it is complex symmetric up to round-off because
    ``W_{-n} = W_n^T``.
    """
    _check_grid(mesh, dtn)
    blk = dense_block(dtn) * dtn.quadrature_weight
    blk = 0.5 * (blk + blk.T)
    bd = boundary_dofs(mesh)
    rows = np.repeat(bd, len(bd))
    cols = np.tile(bd, len(bd))
    return sps.csr_matrix((blk.ravel(), (rows, cols)), shape=(mesh.n_dofs,) * 2)


def _check_grid(mesh: DiskMesh, dtn: DtnOperator) -> None:
    if mesh.boundary_points != dtn.boundary_points:
        raise MeshError(
            f"mesh boundary ring has {mesh.boundary_points} nodes, DtN grid has {dtn.boundary_points}"
        )
    if not math.isclose(mesh.radius, dtn.medium.radius):
        raise MeshError("mesh radius differs from the DtN radius")


@dataclass
class FemSystem:
    mesh: DiskMesh
    medium: BackgroundMedium
    waves: WaveNumbers
    dtn: DtnOperator
    q: MaterialField
    volume: sps.csr_matrix
    boundary: sps.csr_matrix

    @property
    def matrix(self) -> sps.csc_matrix:
        return (self.volume - self.boundary).tocsc()


def assemble_system(
    mesh: DiskMesh,
    q: MaterialField,
    medium: BackgroundMedium,
    waves: WaveNumbers,
    dtn: DtnOperator,
    boundary: sps.csr_matrix | None = None,
) -> FemSystem:
    """Assemble ``a_q(u, v) - <B u, v>`` on ``mesh``.

    ``boundary`` may be passed to reuse a previously built DtN block for the
    same (mesh, dtn) pair.
    """
    _check_grid(mesh, dtn)
    if len(q.q_rho) != mesh.n_nodes:
        raise MeshError("material field size does not match the mesh")
    vol = volume_matrix(mesh, q, medium, waves.omega)
    if boundary is None:
        boundary = dtn_matrix(mesh, dtn)
    return FemSystem(mesh, medium, waves, dtn, q, vol, boundary)


def boundary_load_vector(mesh: DiskMesh, dtn: DtnOperator, g: np.ndarray) -> np.ndarray:
    """Global load for ``int_Gamma g . conj(v) ds`` with trapezoidal weights."""
    f = np.zeros(mesh.n_dofs, dtype=complex)
    f[boundary_dofs(mesh)] = dtn.quadrature_weight * np.asarray(g).ravel()
    return f


# ---------------------------------------------------------------- incident


def _direction(angle: float):
    d = np.array([math.cos(angle), math.sin(angle)])
    return d, np.array([-d[1], d[0]])


def incident_field(kind: str, angle: float, waves: WaveNumbers, points: np.ndarray) -> np.ndarray:
    """Plane P wave ``d e^{i k_p x.d}`` or S wave ``d_perp e^{i k_s x.d}``."""
    d, dperp = _direction(angle)
    points = np.asarray(points, dtype=float)
    if kind == "P":
        return np.exp(1j * waves.kp * points @ d)[:, None] * d
    if kind == "S":
        return np.exp(1j * waves.ks * points @ d)[:, None] * dperp
    raise ValueError(f"incidence kind must be 'P' or 'S', got {kind!r}")


def incident_traction(
    kind: str, angle: float, waves: WaveNumbers, medium: BackgroundMedium, points: np.ndarray
) -> np.ndarray:
    """``nu . sigma(u_in)`` on the circle through ``points``, with ``nu = x/|x|``."""
    d, dperp = _direction(angle)
    points = np.asarray(points, dtype=float)
    nu = points / np.linalg.norm(points, axis=1)[:, None]
    lam, mu = medium.lambda0, medium.mu0
    if kind == "P":
        k, pol = waves.kp, d
    elif kind == "S":
        k, pol = waves.ks, dperp
    else:
        raise ValueError(f"incidence kind must be 'P' or 'S', got {kind!r}")
    phase = np.exp(1j * k * points @ d)
    # grad u = i k pol d^T e^{...}
    nd = nu @ d
    npol = nu @ pol
    div = 1j * k * (pol @ d) * phase
    # 2 mu E(u) nu = mu i k (pol (d.nu) + d (pol.nu)) e^{...}
    t = mu * 1j * k * phase[:, None] * (np.outer(nd, pol) + np.outer(npol, d))
    return t + lam * div[:, None] * nu


def boundary_load(kind: str, angle: float, waves: WaveNumbers, medium: BackgroundMedium, dtn: DtnOperator) -> np.ndarray:
    """``g = T u_in - B u_in`` at the DtN grid angles, shape (P, 2)."""
    th = dtn.angles
    pts = medium.radius * np.column_stack([np.cos(th), np.sin(th)])
    uin = incident_field(kind, angle, waves, pts)
    return incident_traction(kind, angle, waves, medium, pts) - apply_dtn(dtn, uin)


# ---------------------------------------------------------------- export


def write_mesh_csv(mesh: DiskMesh, nodes_path: str | Path, triangles_path: str | Path) -> None:
    with open(nodes_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(mesh.nodes):
            wr.writerow([i, repr(float(x)), repr(float(y))])
    with open(triangles_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n1", "n2", "n3"])
        wr.writerows(mesh.triangles.tolist())


def write_field_csv(mesh: DiskMesh, values: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "value"])
        for (x, y), v in zip(mesh.nodes, np.asarray(values, dtype=float)):
            wr.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
