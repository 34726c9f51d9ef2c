"""Accuracy metrics, resolution constants and the Cramer-Rao bound.

All angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, NumericalError
from .geometry import ArrayGeometry, Scene, noiseless_signal, noise_std_for_snr


def match_errors(estimated, truth) -> np.ndarray:
    """Absolute error of each true angle after optimal pairing.

    Estimates and truths are paired by the assignment minimizing the
    summed squared error, so matching never inflates the RMSE.  A truth left without an estimate (fewer estimates
    than targets) takes the error to the nearest estimate, or ``pi`` when
    there are no estimates at all.
    """
    est = np.atleast_1d(np.asarray(estimated, dtype=float))
    tru = np.atleast_1d(np.asarray(truth, dtype=float))
    if est.size == 0:
        return np.full(tru.size, math.pi)
    cost = np.abs(tru[:, None] - est[None, :])
    rows, cols = linear_sum_assignment(cost ** 2)
    errors = cost.min(axis=1)
    errors[rows] = cost[rows, cols]
    return errors


@dataclass(frozen=True)
class TrialResult:
    """One Monte-Carlo trial.

    Attributes
    ----------
    estimated, truth : ndarray
        Angles in radians.
    errors : ndarray
        Matched absolute errors, one per true angle.
    runtime : float
        Seconds spent by the estimator.
    """

    estimated: np.ndarray
    truth: np.ndarray
    errors: np.ndarray
    runtime: float = 0.0

    @classmethod
    def from_angles(cls, estimated, truth, runtime: float = 0.0) -> "TrialResult":
        est = np.sort(np.atleast_1d(np.asarray(estimated, dtype=float)))
        tru = np.sort(np.atleast_1d(np.asarray(truth, dtype=float)))
        return cls(est, tru, match_errors(est, tru), float(runtime))

    @property
    def k(self) -> int:
        return int(self.truth.size)

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    def success(self, gamma: float) -> bool:
        return self.max_error < gamma


def _check_trials(trials) -> list[TrialResult]:
    trials = list(trials)
    if not trials:
        raise DomainError("no trials")
    ks = {t.k for t in trials}
    if len(ks) != 1:
        raise DomainError(f"trials disagree on the target count: {sorted(ks)}")
    return trials


def rmse(trials) -> float:
    """``sqrt(sum_i |theta_hat_i - theta_0|^2 / (MC K))`` over matched angles."""
    trials = _check_trials(trials)
    total = math.fsum(float(np.sum(t.errors ** 2)) for t in trials)
    return math.sqrt(total / (len(trials) * trials[0].k))


def success_rate(trials, gamma: float) -> float:
    """Fraction of trials whose largest matched error is below ``gamma``."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    trials = _check_trials(trials)
    return sum(t.success(gamma) for t in trials) / len(trials)


def _positions(array):
    if isinstance(array, ArrayGeometry):
        return array.positions
    return np.asarray(array, dtype=float).reshape(-1)


def location_deviation(nla, ula) -> float:
    """RMS element displacement from a ULA in units of its spacing.

    Parameters
    ----------
    nla, ula : ArrayGeometry or array_like
        Arrays with equal element counts; ``ula`` must be uniform.
    """
    r = _positions(nla)
    u = _positions(ula)
    if r.size != u.size:
        raise DomainError(f"element counts differ: {r.size} vs {u.size}")
    if u.size < 2:
        raise DomainError("need at least two elements")
    steps = np.diff(u)
    d = float(steps.mean())
    if not d > 0 or not np.allclose(steps, d, rtol=1e-9, atol=0):
        raise DomainError("reference array is not uniform")
    return float(np.sqrt(np.sum((r - u) ** 2) / r.size) / d)


def resolution(geometry: ArrayGeometry, eta: float = 4.0) -> tuple[float, float]:
    """Theoretical resolution ``rho = 1.22 lambda / D`` and grid interval ``rho / eta``."""
    return resolution_from(geometry.wavelength, geometry.aperture, eta)


def resolution_from(wavelength: float, aperture: float, eta: float = 4.0) -> tuple[float, float]:
    if not aperture > 0:
        raise DomainError("aperture must be positive")
    if not eta >= 1:
        raise DomainError("eta must be at least 1")
    rho = 1.22 * wavelength / aperture
    return rho, rho / eta


def fisher_information(geometry: ArrayGeometry, scene: Scene, noise_var: float) -> np.ndarray:
    """Fisher information for ``(theta_k, Re c_k, Im c_k)``.

    Deterministic single-snapshot model ``x ~ CN(sum_k c_k a(theta_k), s^2 I)``
    with known ``s^2``: ``J = (2 / s^2) Re(D^H D)`` where ``D`` holds the
    derivatives of the mean.  Parameter order is all angles, then all real
    parts, then all imaginary parts.
    """
    kr = geometry.electrical_positions
    th = scene.angles
    c = scene.reflectivities
    a = np.exp(1j * np.outer(kr, np.cos(th)))
    da = a * (-1j * np.outer(kr, np.sin(th)))
    deriv = np.concatenate([da * c, a, 1j * a], axis=1)
    return 2.0 / noise_var * np.real(deriv.conj().T @ deriv)


def crlb_single_snapshot(geometry: ArrayGeometry, scene: Scene, snr_db: float | None = None) -> np.ndarray:
    """Cramer-Rao bound on each target angle, in radians squared.

    The noise variance follows from the scene's noiseless signal power
    and ``snr_db`` (defaults to ``scene.snr_db``).

    Raises
    ------
    NumericalError
        If the Fisher information is singular, e.g. for coinciding angles.
    """
    if snr_db is None:
        snr_db = scene.snr_db
    if snr_db is None:
        raise DomainError("the bound needs a finite SNR")
    sigma = noise_std_for_snr(noiseless_signal(geometry, scene), snr_db)
    fim = fisher_information(geometry, scene, sigma ** 2)
    s = np.linalg.svd(fim, compute_uv=False)
    if s[-1] <= s[0] * 1e-13:
        raise NumericalError("singular Fisher information")
    return np.diag(np.linalg.inv(fim))[:scene.k].copy()
