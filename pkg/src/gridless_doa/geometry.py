"""Linear array geometry, steering vectors and synthetic snapshots.

All angles are in radians and measured from the array axis, so a target
at ``pi / 2`` sits at broadside.  Positions are in meters along the axis
with the reference element at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ConstructionError

SPEED_OF_LIGHT = 299_792_458.0


def wavelength_from_frequency(frequency_hz: float) -> float:
    """Return the free-space wavelength in meters for a carrier in Hz."""
    if not frequency_hz > 0:
        raise DomainError(f"frequency must be positive, got {frequency_hz}")
    return SPEED_OF_LIGHT / frequency_hz


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions of a linear array.

    Parameters
    ----------
    positions : array_like
        Element positions in meters, strictly increasing, starting at 0.
    wavelength : float
        Carrier wavelength in meters.
    """

    positions: np.ndarray
    wavelength: float

    def __post_init__(self):
        r = np.array(self.positions, dtype=float).reshape(-1)
        if r.size < 1:
            raise DomainError("an array needs at least one element")
        if not np.all(np.isfinite(r)):
            raise DomainError("positions must be finite")
        if r[0] != 0.0:
            raise DomainError("the reference element must sit at position 0")
        if r.size > 1 and not np.all(np.diff(r) > 0):
            raise DomainError("positions must be strictly increasing")
        if not (np.isfinite(self.wavelength) and self.wavelength > 0):
            raise DomainError(f"wavelength must be positive, got {self.wavelength}")
        r.setflags(write=False)
        object.__setattr__(self, "positions", r)
        object.__setattr__(self, "wavelength", float(self.wavelength))

    @property
    def n_elements(self) -> int:
        return int(self.positions.size)

    @property
    def aperture(self) -> float:
        """Aperture D, the position of the last element."""
        return float(self.positions[-1])

    @property
    def electrical_positions(self) -> np.ndarray:
        """Positions scaled to radians, ``2 pi r / lambda``."""
        return 2.0 * np.pi * self.positions / self.wavelength

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        return (self.wavelength == other.wavelength
                and np.array_equal(self.positions, other.positions))

    def __hash__(self):
        return hash((self.wavelength, self.positions.tobytes()))


@dataclass(frozen=True)
class Target:
    """A point target with complex reflectivity at ``angle`` radians."""

    reflectivity: complex
    angle: float


@dataclass(frozen=True)
class Scene:
    """K targets plus a noise level.

    ``snr_db=None`` means noiseless.
    """

    targets: tuple[Target, ...]
    snr_db: float | None = None

    def __post_init__(self):
        targets = tuple(t if isinstance(t, Target) else Target(*t) for t in self.targets)
        if not targets:
            raise DomainError("a scene needs at least one target")
        angles = np.array([t.angle for t in targets], dtype=float)
        if np.any(angles <= 0) or np.any(angles >= np.pi):
            raise DomainError("target angles must lie strictly inside (0, pi)")
        if np.unique(angles).size != angles.size:
            raise DomainError("target angles must be distinct")
        object.__setattr__(self, "targets", targets)

    @classmethod
    def from_arrays(cls, angles: Sequence[float], reflectivities: Sequence[complex] | None = None,
                    snr_db: float | None = None) -> "Scene":
        angles = list(np.atleast_1d(np.asarray(angles, dtype=float)))
        if reflectivities is None:
            reflectivities = [1.0 + 0j] * len(angles)
        if len(reflectivities) != len(angles):
            raise DomainError("need one reflectivity per angle")
        return cls(tuple(Target(complex(c), float(a)) for c, a in zip(reflectivities, angles)), snr_db)

    @property
    def angles(self) -> np.ndarray:
        return np.array([t.angle for t in self.targets])

    @property
    def reflectivities(self) -> np.ndarray:
        return np.array([t.reflectivity for t in self.targets], dtype=complex)

    @property
    def k(self) -> int:
        return len(self.targets)


def _check_angle(angle) -> np.ndarray:
    a = np.asarray(angle, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0) or np.any(a >= np.pi):
        raise DomainError("angles must lie strictly inside (0, pi)")
    return a


def steering_vector(geometry: ArrayGeometry, angle: float) -> np.ndarray:
    """Array response ``exp(j 2 pi r_n / lambda cos(angle))``.

    Parameters
    ----------
    geometry : ArrayGeometry
    angle : float
        Direction in radians, strictly inside (0, pi).

    Returns
    -------
    ndarray of complex, shape (N,)
    """
    a = float(_check_angle(angle))
    return np.exp(1j * geometry.electrical_positions * np.cos(a))


def steering_matrix(geometry: ArrayGeometry, angles) -> np.ndarray:
    """Stack of steering vectors, shape (N, len(angles)).

    Unlike :func:`steering_vector` this accepts the closed interval
    ``[0, pi]`` so it can describe scan grids that start at 0.
    """
    a = np.atleast_1d(np.asarray(angles, dtype=float))
    if np.any(a < 0) or np.any(a > np.pi):
        raise DomainError("scan angles must lie in [0, pi]")
    return np.exp(1j * np.outer(geometry.electrical_positions, np.cos(a)))


def noiseless_signal(geometry: ArrayGeometry, scene: Scene) -> np.ndarray:
    A = np.exp(1j * np.outer(geometry.electrical_positions, np.cos(scene.angles)))
    return A @ scene.reflectivities


def noise_std_for_snr(signal: np.ndarray, snr_db: float) -> float:
    """Per-element complex noise std giving the requested array SNR.

    SNR is total signal power over expected total noise power.
    """
    signal = np.asarray(signal)
    power = float(np.vdot(signal, signal).real)
    return float(np.sqrt(power / (signal.size * 10.0 ** (snr_db / 10.0))))


def synthesize_snapshot(geometry: ArrayGeometry, scene: Scene, seed=None) -> np.ndarray:
    """Single snapshot ``x = sum_k c_k a(theta_k) + n``.

    Noise is circularly symmetric complex Gaussian, scaled so that
    ``10 log10(|s|^2 / E|n|^2)`` equals ``scene.snr_db``.

    Parameters
    ----------
    geometry : ArrayGeometry
    scene : Scene
    seed : int, numpy.random.Generator or SeedSequence, optional
        Anything accepted by :func:`numpy.random.default_rng`.

    Returns
    -------
    ndarray of complex, shape (N,)
    """
    s = noiseless_signal(geometry, scene)
    if scene.snr_db is None:
        return s
    rng = np.random.default_rng(seed)
    sigma = noise_std_for_snr(s, scene.snr_db)
    n = rng.standard_normal(s.size) + 1j * rng.standard_normal(s.size)
    return s + sigma / np.sqrt(2.0) * n


def make_ula(n_elements: int, spacing: float, wavelength: float) -> ArrayGeometry:
    """Uniform linear array ``[0, d, ..., (N - 1) d]``."""
    if n_elements < 2:
        raise DomainError("a ULA needs at least two elements")
    if not spacing > 0:
        raise DomainError("spacing must be positive")
    return ArrayGeometry(np.arange(n_elements) * float(spacing), wavelength)


def equivalent_ula(geometry: ArrayGeometry) -> ArrayGeometry:
    """ULA with the same element count and aperture."""
    n = geometry.n_elements
    return make_ula(n, geometry.aperture / (n - 1), geometry.wavelength)


def make_perturbed_nla(n_elements: int, aperture: float, target_ld: float,
                       wavelength: float, seed=None, max_resamples: int = 10_000) -> ArrayGeometry:
    """Random non-uniform array with a prescribed location deviation.

    Both endpoints stay at 0 and ``aperture``.  Interior elements get
    uniform offsets from the ULA grid, rescaled so the RMS offset equals
    ``target_ld`` grid spacings.  Draws that break monotonicity are
    rejected and redrawn.

    Raises
    ------
    ConstructionError
        If no monotone draw is found within ``max_resamples`` attempts.
    """
    if n_elements < 2:
        raise DomainError("need at least two elements")
    if not aperture > 0:
        raise DomainError("aperture must be positive")
    if not target_ld >= 0:
        raise DomainError("target_ld must be non-negative")
    d = aperture / (n_elements - 1)
    if target_ld == 0:
        return make_ula(n_elements, d, wavelength)
    if n_elements == 2:
        raise ConstructionError("a two-element array with fixed endpoints has LD 0")
    base = np.arange(n_elements) * d
    base[-1] = aperture
    rng = np.random.default_rng(seed)
    for _ in range(max_resamples):
        offsets = np.zeros(n_elements)
        offsets[1:-1] = rng.uniform(-1.0, 1.0, n_elements - 2)
        rms = np.sqrt(np.sum(offsets ** 2) / n_elements)
        if rms == 0:
            continue
        r = base + offsets * (target_ld * d / rms)
        if np.all(np.diff(r) > 0):
            return ArrayGeometry(r, wavelength)
    raise ConstructionError(
        f"no monotone array with LD={target_ld} after {max_resamples} draws")


def mimo_virtual_positions(tx_positions, rx_positions, decimals: int = 12):
    """Sum co-array of a MIMO radar.

    Returns
    -------
    positions : ndarray
        Unique virtual positions, ascending, shifted so the first is 0.
    channel_map : ndarray of int, shape (n_tx * n_rx,)
        Index of the virtual element fed by each (tx, rx) channel, in
        tx-major order.
    """
    tx = np.asarray(tx_positions, dtype=float).reshape(-1)
    rx = np.asarray(rx_positions, dtype=float).reshape(-1)
    sums = (tx[:, None] + rx[None, :]).reshape(-1)
    sums = sums - sums.min()
    unique, channel_map = np.unique(np.round(sums, decimals), return_inverse=True)
    return unique, channel_map


def combine_channels(samples, channel_map) -> np.ndarray:
    """Average MIMO channel samples that land on the same virtual element."""
    samples = np.asarray(samples, dtype=complex).reshape(-1)
    channel_map = np.asarray(channel_map)
    if samples.size != channel_map.size:
        raise DomainError("one sample per channel is required")
    n = int(channel_map.max()) + 1
    total = np.bincount(channel_map, weights=samples.real, minlength=n) \
        + 1j * np.bincount(channel_map, weights=samples.imag, minlength=n)
    return total / np.bincount(channel_map, minlength=n)


def mimo_virtual_array(tx_positions, rx_positions, wavelength: float) -> ArrayGeometry:
    positions, _ = mimo_virtual_positions(tx_positions, rx_positions)
    return ArrayGeometry(positions, wavelength)


def load_geometry(path, wavelength: float) -> ArrayGeometry:
    """Read a geometry file: one position in meters per line, ``#`` comments."""
    from .io import read_real_column

    return ArrayGeometry(read_real_column(path), wavelength)


def save_geometry(path, geometry: ArrayGeometry) -> None:
    lines = [f"# {geometry.n_elements} elements, wavelength {geometry.wavelength!r} m"]
    lines += [repr(float(r)) for r in geometry.positions]
    Path(path).write_text("\n".join(lines) + "\n")
