"""Truncated Dirichlet-to-Neumann operator for the 2D Navier equation on a circle.

A boundary trace ``w`` sampled at ``P`` uniform angles is rotated into the
(radial, tangential) frame, Fourier transformed in angle, each mode ``n`` is
multiplied by ``W_n / R`` and the result is transformed and rotated back.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .specfun import MAX_ORDER, alpha_all, beta_all


class DtnError(ValueError):
    pass


class SingularModeError(DtnError):
    def __init__(self, n: int, det: complex):
        super().__init__(f"A_n is numerically singular for mode n={n} (det={det!r})")
        self.n = n


@dataclass(frozen=True)
class BackgroundMedium:
    lambda0: float = 2.0
    mu0: float = 1.0
    rho0: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        for name in ("lambda0", "mu0", "rho0", "radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class WaveNumbers:
    omega: float
    kp: float
    ks: float
    tp: float
    ts: float


def wave_numbers(medium: BackgroundMedium, omega: float) -> WaveNumbers:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    kp = omega * math.sqrt(medium.rho0 / (medium.lambda0 + 2.0 * medium.mu0))
    ks = omega * math.sqrt(medium.rho0 / medium.mu0)
    return WaveNumbers(omega, kp, ks, kp * medium.radius, ks * medium.radius)


def default_truncation(waves: WaveNumbers) -> int:
    return min(MAX_ORDER, max(16, math.ceil(waves.ts) + 12))


def default_boundary_points(truncation: int) -> int:
    """Smallest power of two >= max(128, 4 * truncation)."""
    need = max(128, 4 * truncation)
    return 1 << (need - 1).bit_length()


@dataclass(frozen=True)
class ModeMatrix:
    n: int
    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    det_a: complex


def _mode_blocks(waves: WaveNumbers, medium: BackgroundMedium, n, ap, as_, bp, bs):
    tp, ts = waves.tp, waves.ts
    mu, lam = medium.mu0, medium.lambda0
    a = np.array([[tp * ap, 1j * n], [1j * n, -ts * as_]], dtype=complex)
    b = np.array(
        [
            [2 * mu * tp**2 * bp - lam * tp**2, 2j * mu * n * (ts * as_ - 1)],
            [2j * mu * n * (tp * ap - 1), -2 * mu * ts**2 * bs - mu * ts**2],
        ],
        dtype=complex,
    )
    return a, b


def mode_matrix(waves: WaveNumbers, medium: BackgroundMedium, n: int) -> ModeMatrix:
    """Mode matrix ``W_n = B_n A_n^{-1}`` by a direct 2x2 solve."""
    m = abs(int(n))
    ap_all = alpha_all(m, waves.tp)
    as_all = alpha_all(m, waves.ts)
    bp = beta_all(m, waves.tp, ap_all)[m]
    bs = beta_all(m, waves.ts, as_all)[m]
    return _build_mode(waves, medium, int(n), ap_all[m], as_all[m], bp, bs)


def _build_mode(waves, medium, n, ap, as_, bp, bs) -> ModeMatrix:
    a, b = _mode_blocks(waves, medium, n, ap, as_, bp, bs)
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    scale = abs(a).max() ** 2
    if not np.isfinite(det) or abs(det) <= 1e-13 * scale:
        raise SingularModeError(n, det)
    # W A = B  <=>  A^T W^T = B^T
    w = np.linalg.solve(a.T, b.T).T
    return ModeMatrix(n, a, b, w, complex(det))


def closed_form_w(waves: WaveNumbers, medium: BackgroundMedium, n: int) -> np.ndarray:
    """Closed-form entries of the mode matrix, used only as a cross-check.

    The printed expressions carry a ``1/R`` factor, so they equal
    ``W_n / R`` (the per-mode traction map), with ``mu`` read as ``mu0``.
    """
    m = abs(int(n))
    ap = alpha_all(m, waves.tp)[m]
    as_ = alpha_all(m, waves.ts)[m]
    tp, ts, R = waves.tp, waves.ts, medium.radius
    det = -tp * ap * ts * as_ + n**2
    c = medium.rho0 * waves.omega**2 * R**2
    mu = medium.mu0
    w11 = (-2 * mu * det + c * ts * as_) / (R * det)
    w22 = (-2 * mu * det + c * tp * ap) / (R * det)
    w12 = (-2j * n * mu * det + 1j * n * c) / (R * det)
    return np.array([[w11, w12], [-w12, w22]])


@dataclass(frozen=True)
class DtnOperator:
    medium: BackgroundMedium
    waves: WaveNumbers
    truncation: int
    boundary_points: int
    modes: tuple = field(repr=False)

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.truncation, self.truncation + 1)

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.boundary_points) / self.boundary_points

    @property
    def quadrature_weight(self) -> float:
        """Trapezoidal arc-length weight of one boundary sample."""
        return 2.0 * np.pi * self.medium.radius / self.boundary_points

    def w_stack(self) -> np.ndarray:
        """Mode matrices of shape (2*N_t+1, 2, 2) ordered as :attr:`orders`.

        Pairs are averaged so that ``W_{-n} = W_n^T`` holds exactly; the
        individual solves agree to round-off only.
        """
        w = np.stack([m.w for m in self.modes])
        return 0.5 * (w + np.transpose(w[::-1], (0, 2, 1)))

    def mode(self, n: int) -> ModeMatrix:
        return self.modes[n + self.truncation]


def build_dtn(
    medium: BackgroundMedium,
    omega: float,
    truncation: int | None = None,
    boundary_points: int | None = None,
) -> DtnOperator:
    waves = wave_numbers(medium, omega)
    nt = default_truncation(waves) if truncation is None else int(truncation)
    if nt < 0 or nt > MAX_ORDER:
        raise DtnError(f"truncation {nt} outside [0, {MAX_ORDER}]")
    p = default_boundary_points(nt) if boundary_points is None else int(boundary_points)
    if p & (p - 1) or p < 2 * nt + 2:
        raise DtnError(f"boundary_points={p} must be a power of two >= {2 * nt + 2}")
    ap = alpha_all(nt, waves.tp)
    as_ = alpha_all(nt, waves.ts)
    bp = beta_all(nt, waves.tp, ap)
    bs = beta_all(nt, waves.ts, as_)
    modes = tuple(
        _build_mode(waves, medium, n, ap[abs(n)], as_[abs(n)], bp[abs(n)], bs[abs(n)])
        for n in range(-nt, nt + 1)
    )
    return DtnOperator(medium, waves, nt, p, modes)


def _rotate(trace: np.ndarray, theta: np.ndarray, inverse: bool = False) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    if inverse:
        s = -s
    out = np.empty_like(trace)
    out[:, 0] = c * trace[:, 0] + s * trace[:, 1]
    out[:, 1] = -s * trace[:, 0] + c * trace[:, 1]
    return out


def _apply(op: DtnOperator, trace: np.ndarray, transposed_form: bool) -> np.ndarray:
    p, nt = op.boundary_points, op.truncation
    theta = op.angles
    rot = _rotate(trace, theta)
    coef = np.fft.fft(rot, axis=0) / p
    out = np.zeros((p, 2), dtype=complex)
    w = op.w_stack()
    idx = op.orders % p
    if transposed_form:
        # sum_n W_n^T c_{-n} e^{-in theta}: re-indexed series
        c_neg = coef[(-op.orders) % p]
        out_neg = np.einsum("nji,nj->ni", w, c_neg)
        out[(-op.orders) % p] = out_neg
    else:
        out[idx] = np.einsum("nij,nj->ni", w, coef[idx])
    values = np.fft.ifft(out, axis=0) * p / op.medium.radius
    return _rotate(values, theta, inverse=True)


def apply_dtn(
    op: DtnOperator,
    trace: np.ndarray,
    adjoint: bool = False,
    transposed_form: bool = False,
) -> np.ndarray:
    """Apply the truncated DtN map (or its adjoint) to a boundary trace.

    Parameters
    ----------
    trace : (P, 2) complex array
        Cartesian displacement components at the angles ``2 pi m / P``.
    adjoint : bool
        Apply ``B* phi = conj(B conj(phi))`` instead.
    transposed_form : bool
        Evaluate through the equivalent ``W_n^T`` series; same result up to
        round-off.
    """
    trace = np.asarray(trace, dtype=complex)
    if trace.shape != (op.boundary_points, 2):
        raise DtnError(
            f"trace shape {trace.shape} does not match ({op.boundary_points}, 2)"
        )
    if adjoint:
        return np.conj(_apply(op, np.conj(trace), transposed_form))
    return _apply(op, trace, transposed_form)


def dense_block(op: DtnOperator) -> np.ndarray:
    """Matrix of ``apply_dtn`` on interleaved dofs ``[u1_0, u2_0, u1_1, ...]``.

    Built from the circulant kernel ``S(d) = sum_n W_n e^{i n d}`` so that
    ``block @ trace.ravel() == apply_dtn(op, trace).ravel()``.
    """
    p = op.boundary_points
    theta = op.angles
    k = np.arange(p)
    phase = np.exp(1j * np.outer(op.orders, 2 * np.pi * k / p))
    kernel = np.einsum("nij,nk->kij", op.w_stack(), phase) / (p * op.medium.radius)
    s = kernel[(np.arange(p)[:, None] - np.arange(p)[None, :]) % p]
    c, sn = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, sn], -1), np.stack([-sn, c], -1)], -2)  # M_theta
    blk = np.einsum("aji,abjk,bkl->aibl", rot, s, rot)
    return blk.reshape(2 * p, 2 * p)


def hermitian_part_eigenvalues(w: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``-(W + W^H)/2`` in ascending order."""
    return np.linalg.eigvalsh(-(w + w.conj().T) / 2)


def write_modes_csv(op: DtnOperator, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(
            ["n"]
            + [f"{part}_w{i}{j}" for i in (1, 2) for j in (1, 2) for part in ("re", "im")]
            + ["eig_min", "eig_max"]
        )
        for m in op.modes:
            vals = []
            for i in range(2):
                for j in range(2):
                    vals += [m.w[i, j].real, m.w[i, j].imag]
            eig = hermitian_part_eigenvalues(m.w)
            wr.writerow([m.n] + [repr(float(v)) for v in vals] + [repr(float(e)) for e in eig])
