"""Array manifold separation.

The response of a linear array factors as ``a(theta) = G v(theta)`` where
``v(theta)`` is the Vandermonde vector ``exp(j theta i)``, ``i = -I..I``,
of a virtual uniform array and ``G`` holds Bessel coefficients of the
Jacobi-Anger expansion

    exp(j z cos(theta)) = sum_i j^i J_i(z) exp(j i theta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geometry import ArrayGeometry
from . import io

# Powers of j, indexed by i mod 4.  Exact, unlike 1j ** i.
_J_POWERS = np.array([1, 1j, -1, -1j])

_RESCALE_LIMIT = 1e250


def _miller_start(n_max: int, z_max: float) -> int:
    top = max(n_max, int(math.ceil(z_max)))
    start = top + 20 + int(math.sqrt(40.0 * top))
    return start + (start % 2)


def bessel_j_table(max_order: int, arguments) -> np.ndarray:
    """Integer-order Bessel functions ``J_0 .. J_max_order``.

    Uses Miller's downward recurrence ``J_{k-1} = (2k / z) J_k - J_{k+1}``
    started far above the requested orders, normalized with
    ``J_0 + 2 sum_k J_{2k} = 1``.  Intermediate values are rescaled to stay
    inside the floating-point range, so deep tails underflow cleanly to 0.

    Parameters
    ----------
    max_order : int
        Highest order returned, at least 0.
    arguments : array_like
        Non-negative real arguments.

    Returns
    -------
    ndarray, shape (len(arguments), max_order + 1)
    """
    if max_order < 0:
        raise DomainError("max_order must be non-negative")
    z = np.atleast_1d(np.asarray(arguments, dtype=float))
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise DomainError("Bessel arguments must be finite and non-negative")
    out = np.zeros((z.size, max_order + 1))
    zero = z == 0
    out[zero, 0] = 1.0
    zp = z[~zero]
    if zp.size == 0:
        return out
    table = np.zeros((zp.size, max_order + 1))
    start = _miller_start(max_order, float(zp.max()))
    upper = np.zeros_like(zp)
    current = np.full_like(zp, 1e-300)
    norm = np.zeros_like(zp)
    for k in range(start, 0, -1):
        if k <= max_order:
            table[:, k] = current
        if k % 2 == 0:
            norm += 2.0 * current
        lower = (2.0 * k / zp) * current - upper
        upper, current = current, lower
        big = np.abs(current) > _RESCALE_LIMIT
        if np.any(big):
            s = 1.0 / _RESCALE_LIMIT
            current[big] *= s
            upper[big] *= s
            norm[big] *= s
            table[big, k:] *= s
    table[:, 0] = current
    norm += current
    out[~zero] = table / norm[:, None]
    return out


def bessel_j(order: int, argument: float) -> float:
    """Bessel function of the first kind ``J_order(argument)``.

    Negative orders follow ``J_{-i}(z) = (-1)^i J_i(z)``.
    """
    n = abs(int(order))
    value = float(bessel_j_table(n, [argument])[0, n])
    if order < 0 and n % 2:
        value = -value
    return value


def default_truncation_order(geometry: ArrayGeometry) -> int:
    """Smallest integer strictly above ``2 pi D / lambda``."""
    return int(math.floor(2.0 * math.pi * geometry.aperture / geometry.wavelength)) + 1


def truncation_tail(geometry: ArrayGeometry, order: int) -> float:
    """Upper bound on ``max |G v(theta) - a(theta)|`` at truncation ``order``.

    The bound is ``max_n 2 sum_{i > order} |J_i(2 pi r_n / lambda)|``,
    valid for every angle because the dropped Vandermonde entries have
    unit modulus.
    """
    z = geometry.electrical_positions
    z_max = float(z.max())
    n_max = max(order, int(z_max + 30 + 10 * z_max ** (1 / 3))) + 1
    table = np.abs(bessel_j_table(n_max, z))
    return float(2.0 * table[:, order + 1:].sum(axis=1).max())


def accurate_truncation_order(geometry: ArrayGeometry, tolerance: float = 1e-8) -> int:
    """Smallest order not below the default whose tail bound is ``<= tolerance``.

    The default order leaves a reconstruction error of order 0.1 for
    apertures of several wavelengths, so estimation uses this order.
    """
    if not tolerance > 0:
        raise DomainError("tolerance must be positive")
    z = geometry.electrical_positions
    z_max = float(z.max())
    lo = default_truncation_order(geometry)
    n_max = max(lo, int(z_max + 30 + 10 * z_max ** (1 / 3))) + 1
    table = np.abs(bessel_j_table(n_max, z))
    # tails[:, m] = sum_{i > m} |J_i|
    tails = np.cumsum(table[:, ::-1], axis=1)[:, ::-1]
    tails = np.concatenate([tails[:, 1:], np.zeros((z.size, 1))], axis=1)
    worst = 2.0 * tails.max(axis=0)
    ok = np.nonzero(worst[lo:] <= tolerance)[0]
    if ok.size == 0:
        raise DomainError(f"tolerance {tolerance} unreachable in double precision")
    return lo + int(ok[0])


@dataclass(frozen=True)
class SamplingMatrix:
    """The ``N x (2I + 1)`` manifold-separation matrix.

    Attributes
    ----------
    g : ndarray of complex
    truncation_order : int
        I; virtual indices run over ``-I .. I``.
    """

    g: np.ndarray
    truncation_order: int

    def __post_init__(self):
        g = np.array(self.g, dtype=complex)
        if g.ndim != 2:
            raise DomainError("sampling matrix must be two-dimensional")
        if g.shape[1] != 2 * self.truncation_order + 1:
            raise DomainError(
                f"{g.shape[1]} columns do not match truncation order {self.truncation_order}")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def n_elements(self) -> int:
        return self.g.shape[0]

    @property
    def n_virtual(self) -> int:
        return self.g.shape[1]

    @property
    def is_mirror_symmetric(self) -> bool:
        """True when column ``-i`` equals column ``i``.

        Geometry-derived matrices always have this property, which makes
        ``v(theta)`` and ``v(-theta)`` indistinguishable through ``G``.
        """
        return bool(np.array_equal(self.g, self.g[:, ::-1]))

    def response(self, angles) -> np.ndarray:
        """Modelled array response ``G V(angles)``, shape (N, K)."""
        return self.g @ vandermonde_matrix(angles, self.truncation_order)

    def reconstruction_error(self, geometry: ArrayGeometry, angles) -> float:
        """``max |G v(theta) - a(theta)|`` over ``angles``."""
        a = np.exp(1j * np.outer(geometry.electrical_positions, np.cos(np.atleast_1d(angles))))
        return float(np.abs(self.response(angles) - a).max())


def sampling_matrix(geometry: ArrayGeometry, order: int | None = None) -> SamplingMatrix:
    """Build ``G[n, i + I] = j^i J_i(2 pi r_n / lambda)``.

    Parameters
    ----------
    geometry : ArrayGeometry
    order : int, optional
        Truncation order I.  Defaults to
        :func:`default_truncation_order`.  Orders below the default are
        allowed with a warning.
    """
    default = default_truncation_order(geometry)
    if order is None:
        order = default
    order = int(order)
    if order < 1:
        raise DomainError("truncation order must be at least 1")
    if order < default:
        warnings.warn(f"truncation order {order} is below the aperture bound {default}; "
                      "the manifold will be poorly reconstructed", stacklevel=2)
    table = bessel_j_table(order, geometry.electrical_positions)
    idx = np.arange(order + 1)
    half = table * _J_POWERS[idx % 4]
    # j^{-i} J_{-i} = j^i J_i, so the negative half mirrors the positive one.
    g = np.concatenate([half[:, :0:-1], half], axis=1)
    return SamplingMatrix(g, order)


def vandermonde_matrix(angles, order: int) -> np.ndarray:
    """Columns ``exp(j theta_k i)`` for ``i = -order .. order``."""
    th = np.atleast_1d(np.asarray(angles, dtype=float))
    return np.exp(1j * np.outer(np.arange(-order, order + 1), th))


def virtual_vandermonde(angle: float, order: int) -> np.ndarray:
    """Virtual-array Vandermonde vector ``v(theta)`` of length ``2 I + 1``."""
    if not 0 < angle < np.pi:
        raise DomainError("angle must lie strictly inside (0, pi)")
    return vandermonde_matrix([angle], order)[:, 0]


def load_sampling_matrix(path) -> SamplingMatrix:
    """Read a measured (EADF) sampling matrix file."""
    g = io.read_complex_matrix(path)
    if g.shape[1] % 2 == 0:
        raise DomainError(f"{path}: N_v = {g.shape[1]} must be odd")
    return SamplingMatrix(g, (g.shape[1] - 1) // 2)


def save_sampling_matrix(path, sampling: SamplingMatrix) -> None:
    io.write_complex_matrix(path, sampling.g)
