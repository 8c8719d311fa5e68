"""Phantoms, synthetic near-field datasets and named experiment presets."""

from __future__ import annotations

import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dtn import BackgroundMedium
from .fem import DiskMesh, MaterialField, boundary_points_for_level, build_disk_mesh, project_material
from .solver import FrequencyContext, solve_forward

MAGIC = b"ELDSET01"


class InverseCrimeWarning(UserWarning):
    pass


# ---------------------------------------------------------------- phantoms


def peaks_density(x1, x2):
    """Three-Gaussian density perturbation (MATLAB ``peaks``-like surface, scaled)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (
        0.3 * (1 - 3 * x1) ** 2 * np.exp(-9 * x1**2 - (3 * x2 + 1) ** 2)
        - (0.6 * x1 - 27 * x1**3 - 3**5 * x2**5) * np.exp(-9 * x1**2 - 9 * x2**2)
        - 0.03 * np.exp(-((3 * x1 + 1) ** 2) - 9 * x2**2)
    )


def _zero(x1, x2):
    return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)


@dataclass(frozen=True)
class Phantom:
    name: str
    q_lambda: Callable
    q_mu: Callable
    q_rho: Callable
    support_radius: float

    def sample(self, points: np.ndarray) -> MaterialField:
        x1, x2 = np.asarray(points, dtype=float).T
        return MaterialField(
            np.asarray(self.q_lambda(x1, x2), dtype=float),
            np.asarray(self.q_mu(x1, x2), dtype=float),
            np.asarray(self.q_rho(x1, x2), dtype=float),
        )

    def on_mesh(self, mesh: DiskMesh, margin: float = 0.1) -> MaterialField:
        """Nodal samples with the support cutoff applied."""
        return project_material(self.sample(mesh.nodes), mesh, margin)


def _bumps(spec):
    """Sum of compactly supported C^2 bumps ``a (1 - |x-c|^2/w^2)^3``."""

    def f(x1, x2):
        out = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        for a, c1, c2, w in spec:
            s = 1 - ((x1 - c1) ** 2 + (x2 - c2) ** 2) / w**2
            out = out + a * np.where(s > 0, s, 0.0) ** 3
        return out

    return f


# Each bump (amplitude, centre x, centre y, radius) lies inside |x| <= 0.8.
# "blobs" keeps every radius near a third of the shortest P wavelength used by
# the example presets (about 1.26 at omega = 10), so q_lambda is resolvable.
# "blobs-fine" has narrower bumps that sit below that limit for q_lambda.
BLOB_PRESETS = {
    "blobs": (
        ((0.5, -0.3, 0.15, 0.45), (-0.3, 0.25, -0.25, 0.4)),
        ((0.4, 0.2, 0.25, 0.45), (0.3, -0.25, -0.25, 0.4)),
        ((0.4, 0.0, 0.3, 0.45), (0.3, 0.0, -0.3, 0.4)),
    ),
    "blobs-fine": (
        ((0.5, -0.3, 0.2, 0.3), (-0.3, 0.3, -0.25, 0.25)),
        ((0.4, 0.3, 0.25, 0.3), (0.3, -0.25, -0.3, 0.25)),
        ((0.4, 0.0, 0.35, 0.3), (0.3, 0.0, -0.35, 0.3)),
    ),
    "single": (
        ((0.4, 0.0, 0.0, 0.5),),
        ((0.3, 0.0, 0.0, 0.5),),
        ((0.3, 0.0, 0.0, 0.5),),
    ),
}


def blob_phantom(name: str = "blobs") -> Phantom:
    """Three-parameter sum-of-bumps phantom from :data:`BLOB_PRESETS`."""
    try:
        spec = BLOB_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown phantom {name!r}; choose from {sorted(BLOB_PRESETS)}") from None
    support = max(math.hypot(c1, c2) + w for comp in spec for _, c1, c2, w in comp)
    return Phantom(name, _bumps(spec[0]), _bumps(spec[1]), _bumps(spec[2]), support)


def peaks_phantom() -> Phantom:
    return Phantom("peaks", _zero, _zero, peaks_density, 1.0)


def zero_phantom() -> Phantom:
    return Phantom("zero", _zero, _zero, _zero, 0.0)


def get_phantom(name: str) -> Phantom:
    if name == "peaks":
        return peaks_phantom()
    if name == "zero":
        return zero_phantom()
    return blob_phantom(name)


# ---------------------------------------------------------------- dataset


@dataclass
class NearFieldDataset:
    medium: BackgroundMedium
    frequencies: list
    directions: list
    kind: str
    phaseless: bool
    records: np.ndarray  # (N, M, P, 2) complex or (N, M, P) float
    noise_level: float = 0.0
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def boundary_points(self) -> int:
        return self.records.shape[2]

    def record(self, i: int, j: int) -> np.ndarray:
        return self.records[i, j]

    def header(self) -> dict:
        return {
            "format": "elastinv-nearfield",
            "version": 1,
            "medium": asdict(self.medium),
            "frequencies": [float(w) for w in self.frequencies],
            "directions": [float(t) for t in self.directions],
            "kind": self.kind,
            "phaseless": bool(self.phaseless),
            "boundary_points": int(self.boundary_points),
            "noise": {"level": float(self.noise_level), "seed": self.seed},
            "provenance": self.provenance,
        }


def write_dataset(ds: NearFieldDataset, path: str | Path) -> None:
    """Magic, uint64 header length, JSON header, then little-endian float64 records."""
    head = json.dumps(ds.header(), sort_keys=True).encode()
    if ds.phaseless:
        payload = np.ascontiguousarray(ds.records, dtype="<f8")
    else:
        rec = np.ascontiguousarray(ds.records, dtype=np.complex128)
        # [Re u1, Im u1, Re u2, Im u2] per sample
        payload = rec.view("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(payload.tobytes())


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    if fh.read(len(MAGIC)) != MAGIC:
        raise ValueError("not a near-field dataset file")
    (n,) = struct.unpack("<Q", fh.read(8))
    return json.loads(fh.read(n).decode())


def read_dataset(path: str | Path) -> NearFieldDataset:
    with open(path, "rb") as fh:
        head = _read_header(fh)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    n, m, p = len(head["frequencies"]), len(head["directions"]), head["boundary_points"]
    if head["phaseless"]:
        records = raw.reshape(n, m, p).copy()
    else:
        records = raw.view(np.complex128).reshape(n, m, p, 2).copy()
    return NearFieldDataset(
        BackgroundMedium(**head["medium"]),
        head["frequencies"],
        head["directions"],
        head["kind"],
        head["phaseless"],
        records,
        head["noise"]["level"],
        head["noise"]["seed"],
        head["provenance"],
    )


def apply_noise(traces: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative noise ``u (1 + level * xi)`` with ``xi`` uniform on the unit disk."""
    if level == 0:
        return traces.copy()
    r = np.sqrt(rng.uniform(size=traces.shape))
    ang = rng.uniform(0, 2 * np.pi, size=traces.shape)
    return traces * (1 + level * r * np.exp(1j * ang))


def synthesize(
    phantom: Phantom,
    frequencies,
    directions,
    kind: str = "P",
    inversion_level: int = 1,
    data_level: int | None = None,
    noise: float = 0.0,
    seed: int | None = 0,
    phaseless: bool = False,
    medium: BackgroundMedium | None = None,
    margin: float = 0.1,
    workers: int = 1,
    boundary_points: int | None = None,
) -> NearFieldDataset:
    """Solve the forward problem on a finer mesh and sample the inversion ring.

    ``boundary_points`` is the ring size ``P`` of the inversion mesh (default:
    the level's own).  The data mesh ring has ``2**(data_level -
    inversion_level)`` times as many nodes, so restriction is exact
    subsampling.
    """
    medium = medium or BackgroundMedium()
    data_level = inversion_level + 1 if data_level is None else int(data_level)
    p = boundary_points_for_level(inversion_level) if boundary_points is None else int(boundary_points)
    prov = {
        "inversion_level": int(inversion_level),
        "data_level": data_level,
        "boundary_points": p,
        "phantom": phantom.name,
    }
    if data_level < inversion_level:
        raise ValueError("data_level must not be coarser than inversion_level")
    if data_level == inversion_level:
        msg = "data and inversion meshes coincide: inverse crime"
        warnings.warn(msg, InverseCrimeWarning, stacklevel=2)
        prov["warning"] = msg
    stride = 2 ** (data_level - inversion_level)
    mesh = build_disk_mesh(medium.radius, data_level, p * stride)
    q = phantom.on_mesh(mesh, margin)
    frequencies = [float(w) for w in frequencies]
    directions = [float(t) for t in directions]

    def one_frequency(omega):
        ctx = FrequencyContext(mesh, medium, omega).at(q)
        return [solve_forward(ctx, kind, th).trace[::stride] for th in directions]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(one_frequency, frequencies))
    else:
        rows = [one_frequency(w) for w in frequencies]
    clean = np.array(rows)
    rng = np.random.default_rng(seed)
    noisy = apply_noise(clean, noise, rng)
    records = np.sum(np.abs(noisy) ** 2, axis=-1) if phaseless else noisy
    return NearFieldDataset(medium, frequencies, directions, kind, phaseless, records, noise, seed, prov)


# ---------------------------------------------------------------- presets


@dataclass(frozen=True)
class Preset:
    id: str
    frequencies: tuple
    directions: tuple
    inner_iterations: int
    step: str  # "matrix" | "scalar" | "constant"
    step_value: float
    kind: str
    variant: str  # "full" | "phaseless" | "density"
    noise: float
    phantom: str


def _dirs(m: int) -> tuple:
    return tuple(2 * j * math.pi / m for j in range(m))


_OMEGA10 = tuple(float(w) for w in range(1, 11))
_OMEGA11 = tuple(float(w) for w in range(1, 12))

PRESETS = {
    p.id: p
    for p in [
        Preset("example1-P", _OMEGA10, _dirs(16), 10, "matrix", 0.01, "P", "full", 0.0, "blobs"),
        Preset("example1-S", _OMEGA10, _dirs(16), 10, "matrix", 0.01, "S", "full", 0.0, "blobs"),
        Preset("example1-noise3", _OMEGA10, _dirs(16), 10, "matrix", 0.01, "P", "full", 0.03, "blobs"),
        Preset("example1-noise5", _OMEGA10, _dirs(16), 10, "matrix", 0.01, "P", "full", 0.05, "blobs"),
        Preset("example2-scalar", _OMEGA10, _dirs(16), 10, "scalar", 0.01, "P", "full", 0.0, "blobs"),
        Preset("example3-phaseless", _OMEGA10, _dirs(16), 10, "matrix", 0.01, "P", "phaseless", 0.0, "blobs"),
        Preset("example4-single-direction", _OMEGA10, (0.0,), 50, "matrix", 0.01, "P", "full", 0.0, "blobs"),
        Preset("example5-density", _OMEGA11, _dirs(16), 10, "constant", 0.01, "P", "density", 0.0, "peaks"),
        Preset("example5-phaseless", _OMEGA11, _dirs(16), 10, "constant", 0.01, "P", "phaseless-density", 0.0, "peaks"),
        Preset("example6-fixed-frequency", (1.0,), (math.pi / 2,), 10, "constant", 0.01, "P", "density", 0.0, "peaks"),
    ]
}


def paper_preset(preset_id: str) -> Preset:
    try:
        return PRESETS[preset_id]
    except KeyError:
        raise KeyError(f"unknown preset {preset_id!r}; choose from {sorted(PRESETS)}") from None
