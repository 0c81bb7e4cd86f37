"""Geometric mmWave channel model.

Channels are built from a small number of propagation paths, each with a
complex gain and a departure/arrival direction:

    H_k = sqrt(N_BS * N_MS / L_k) * sum_l alpha_l * a_MS(l) a_BS(l)^H

Array response vectors follow a half-wavelength uniform planar array. Element
ordering is m-major: index ``m * N + n`` holds element ``(m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ArrayGeometry",
    "Path",
    "PathSet",
    "upa_response",
    "synthesize_channel",
    "synthesize_channels",
    "sample_scenario",
    "run_rng",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """An ``rows x cols`` uniform planar array (a ULA is ``n x 1``)."""

    rows: int
    cols: int = 1

    def __post_init__(self):
        if int(self.rows) < 1 or int(self.cols) < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @classmethod
    def ula(cls, n: int) -> "ArrayGeometry":
        return cls(n, 1)


@dataclass(frozen=True)
class Path:
    """One propagation path. Angles in radians."""

    gain: complex
    aod_azimuth: float
    aod_elevation: float
    aoa_azimuth: float
    aoa_elevation: float

    def __post_init__(self):
        values = (self.gain, self.aod_azimuth, self.aod_elevation, self.aoa_azimuth, self.aoa_elevation)
        if not np.all(np.isfinite(np.asarray(values, dtype=complex))):
            raise ValueError("path gain and angles must be finite")


@dataclass(frozen=True)
class PathSet:
    """All paths between the BS and user ``user``."""

    user: int
    paths: tuple[Path, ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ValueError("a path set needs at least one path")

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    def bs_angles(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([p.aod_azimuth for p in self.paths]),
                np.array([p.aod_elevation for p in self.paths]))

    def ms_angles(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([p.aoa_azimuth for p in self.paths]),
                np.array([p.aoa_elevation for p in self.paths]))


def upa_response(phi, theta, geometry: ArrayGeometry) -> np.ndarray:
    """Unit-norm UPA response vector(s).

    Parameters
    ----------
    phi, theta : float or array_like
        Azimuth and elevation in radians. Arrays broadcast against each other.
    geometry : ArrayGeometry

    Returns
    -------
    np.ndarray
        Shape ``(M*N,)`` for scalar angles, otherwise ``(M*N, *angle_shape)``
        with one response per column.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m = np.arange(geometry.rows)
    n = np.arange(geometry.cols)
    # (M, N, *angles) phase grid, flattened m-major
    u = np.sin(phi) * np.sin(theta)
    v = np.cos(theta)
    extra = (1,) * np.broadcast(u, v).ndim
    phase = (m.reshape(-1, 1, *extra) * u + n.reshape(1, -1, *extra) * v)
    resp = np.exp(1j * np.pi * phase) / np.sqrt(geometry.size)
    return resp.reshape(geometry.size, *resp.shape[2:])


def path_responses(path_set: PathSet, bs_geom: ArrayGeometry,
                   ms_geom: ArrayGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Stacked responses ``(A_MS, A_BS)`` with one column per path."""
    a_ms = upa_response(*path_set.ms_angles(), ms_geom)
    a_bs = upa_response(*path_set.bs_angles(), bs_geom)
    return a_ms, a_bs


def synthesize_channel(path_set: PathSet, bs_geom: ArrayGeometry,
                       ms_geom: ArrayGeometry) -> np.ndarray:
    """Channel matrix ``H`` of shape ``(N_MS, N_BS)`` for one user."""
    a_ms, a_bs = path_responses(path_set, bs_geom, ms_geom)
    scale = np.sqrt(bs_geom.size * ms_geom.size / len(path_set))
    return scale * (a_ms * path_set.gains) @ a_bs.conj().T


def synthesize_channels(path_sets: Sequence[PathSet], bs_geom: ArrayGeometry,
                        ms_geom: ArrayGeometry) -> np.ndarray:
    """Stack of all user channels, shape ``(K, N_MS, N_BS)``."""
    return np.stack([synthesize_channel(ps, bs_geom, ms_geom) for ps in path_sets])


def run_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent generator for Monte-Carlo run ``run_index`` under ``seed``.

    Streams depend only on ``(seed, run_index)``, so runs can be evaluated in
    any order or in parallel.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(run_index)])))


def sample_scenario(rng, K: int, L: int) -> list[PathSet]:
    """Draw ``K`` users with ``L`` paths each.

    Azimuths are uniform on [0, 2pi), elevations uniform on [-pi/2, pi/2] and
    gains i.i.d. CN(0, 1). ``rng`` is a ``numpy.random.Generator`` or an
    integer seed.
    """
    if K < 1 or L < 1:
        raise ValueError(f"need K >= 1 and L >= 1, got K={K}, L={L}")
    if not isinstance(rng, np.random.Generator):
        rng = run_rng(rng)
    gains = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) / np.sqrt(2.0)
    azimuths = rng.uniform(0.0, 2 * np.pi, size=(2, K, L))
    elevations = rng.uniform(-np.pi / 2, np.pi / 2, size=(2, K, L))
    out = []
    for k in range(K):
        paths = tuple(
            Path(complex(gains[k, l]), float(azimuths[0, k, l]), float(elevations[0, k, l]),
                 float(azimuths[1, k, l]), float(elevations[1, k, l]))
            for l in range(L))
        out.append(PathSet(k, paths))
    return out
