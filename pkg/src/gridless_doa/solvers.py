"""Numerical cores: the APG atomic-norm solver, ISTA and the Bartlett beamformer.

The APG solver works on the semidefinite formulation

    minimize  tau (v + trace(T) / N_v) + |G d - x|^2
    subject to [[v, d^H], [d, T]] >= 0,  T Hermitian Toeplitz,

with iterations of momentum extrapolation, a gradient step on ``d``,
eigenvalue shrinkage of ``T`` and a rank-truncated eigendecomposition of
the bordered matrix.  When ``G`` is mirror symmetric (always the case for
a geometry-derived matrix) every iterate is invariant under ``i -> -i``
and the bordered matrix splits into an even block and an odd block.  The
solver then works on those blocks, which is exact and several times
cheaper than the dense path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.signal

from .errors import DivergenceError, DomainError, NumericalError
from .geometry import ArrayGeometry, steering_matrix
from .manifold import SamplingMatrix

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Toeplitz structure

def _diagonal_counts(n: int) -> np.ndarray:
    """Entries with ``|col - row| = k`` in an ``n x n`` matrix."""
    counts = 2.0 * (n - np.arange(n))
    counts[0] = n
    return counts


def toeplitz_row(matrix) -> np.ndarray:
    """First row of the Hermitian Toeplitz projection of ``matrix``.

    Entry ``k`` averages diagonal ``k`` with the conjugate of diagonal
    ``-k``.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    offset = (np.arange(n)[None, :] - np.arange(n)[:, None]).ravel()
    flat = m.ravel()
    upper = offset >= 0
    lower = ~upper
    total = np.bincount(offset[upper], weights=flat.real[upper], minlength=n) \
        + 1j * np.bincount(offset[upper], weights=flat.imag[upper], minlength=n)
    mirrored = np.bincount(-offset[lower], weights=flat.real[lower], minlength=n) \
        - 1j * np.bincount(-offset[lower], weights=flat.imag[lower], minlength=n)
    row = (total + mirrored) / _diagonal_counts(n)
    row[0] = row[0].real
    return row


def toeplitz_from_row(row) -> np.ndarray:
    """Hermitian Toeplitz matrix with first row ``row``."""
    row = np.asarray(row)
    return scipy.linalg.toeplitz(np.conj(row), row)


def toeplitz_project(matrix) -> np.ndarray:
    """Orthogonal projection onto Hermitian Toeplitz matrices.

    Each output diagonal is the mean of the matching input diagonal,
    with diagonals ``k`` and ``-k`` averaged so the result is Hermitian.
    """
    return toeplitz_from_row(toeplitz_row(matrix))


def toeplitz_frobenius(row) -> float:
    """Frobenius norm of the Hermitian Toeplitz matrix with first row ``row``."""
    row = np.asarray(row)
    return float(np.sqrt(np.sum(_diagonal_counts(row.size) * np.abs(row) ** 2)))


def shrink_eigenvalues(eigenvalues, threshold: float) -> np.ndarray:
    """Soft threshold ``max(lambda - threshold, 0)``."""
    return np.maximum(np.asarray(eigenvalues, dtype=float) - threshold, 0.0)


class _MirrorBasis:
    """Even/odd change of basis for vectors indexed by ``i = -I..I``.

    The even basis is ``e_0`` and ``(e_m + e_-m) / sqrt 2``; the odd basis
    is ``(e_m - e_-m) / sqrt 2`` for ``m = 1..I``.  A real symmetric
    Toeplitz matrix with first row ``t`` becomes ``diag(Te, To)`` with

        Te[m, n] = t|m - n| + t(m + n),  Te[0, n] = sqrt 2 t(n),
        To[m, n] = t|m - n| - t(m + n).
    """

    def __init__(self, order: int):
        self.order = order
        self.n_virtual = 2 * order + 1
        m = np.arange(1, order + 1)
        self._diff = np.abs(m[:, None] - m[None, :])
        self._sum = m[:, None] + m[None, :]
        self._counts = _diagonal_counts(self.n_virtual)

    def even_columns(self, g: np.ndarray) -> np.ndarray:
        i = self.order
        return np.concatenate([g[:, i:i + 1], math.sqrt(2.0) * g[:, i + 1:]], axis=1)

    def expand_even(self, d_even: np.ndarray) -> np.ndarray:
        half = d_even[1:] / math.sqrt(2.0)
        return np.concatenate([half[::-1], d_even[:1], half])

    def blocks(self, t: np.ndarray):
        n = self.order + 1
        te = np.empty((n, n))
        te[0, 0] = t[0]
        te[0, 1:] = te[1:, 0] = math.sqrt(2.0) * t[1:n]
        te[1:, 1:] = t[self._diff] + t[self._sum]
        to = t[self._diff] - t[self._sum]
        return te, to

    def row_from_blocks(self, me: np.ndarray, mo: np.ndarray) -> np.ndarray:
        """Toeplitz projection of ``diag(me, mo)`` expressed in the full basis."""
        n = self.n_virtual
        me = me.real
        w = np.bincount(self._diff.ravel(), weights=(me[1:, 1:] + mo).ravel(), minlength=n)
        w += np.bincount(self._sum.ravel(), weights=(me[1:, 1:] - mo).ravel(), minlength=n)
        w[1:self.order + 1] += math.sqrt(2.0) * (me[0, 1:] + me[1:, 0])
        w[0] += me[0, 0]
        return w / self._counts


# ---------------------------------------------------------------------------
# APG

@dataclass(frozen=True)
class ApgConfig:
    """Settings of the APG solver.

    Any of ``step_size``, ``shrink_threshold``, ``tolerance`` and ``tau``
    may be ``None`` to pick the automatic value:

    * step size ``1 / sigma_max(G)^2``;
    * ``tau = noise_std sqrt(N_v log N_v)`` when ``noise_std`` is known,
      else ``0.1 sqrt(N) |x|_2``, a tenth of the Cauchy-Schwarz bound on
      ``max_theta |a(theta)^H x|`` above which the solution is zero;
    * shrink threshold ``tau * step_size``;
    * tolerance ``1e-6 |T_0|_F``.

    ``truncation`` chooses which eigenpairs of the bordered matrix are
    kept: the ``rank + 1`` largest (``"algebraic"``) or the ``rank + 1``
    of largest modulus (``"magnitude"``).
    """

    step_size: float | None = None
    shrink_threshold: float | None = None
    tolerance: float | None = None
    max_iterations: int = 2000
    tau: float | None = None
    noise_std: float | None = None
    truncation: str = "algebraic"
    use_symmetry: bool = True

    def __post_init__(self):
        for name in ("step_size", "shrink_threshold", "tolerance", "tau"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"{name} must be positive, got {value}")
        if self.noise_std is not None and not self.noise_std >= 0:
            raise DomainError("noise_std must be non-negative")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if self.truncation not in ("algebraic", "magnitude"):
            raise DomainError(f"unknown truncation rule {self.truncation!r}")


@dataclass
class ApgState:
    """Final APG iterate and run statistics.

    Attributes
    ----------
    d : ndarray of complex, shape (N_v,)
    v : float
    toeplitz_row : ndarray of complex, shape (N_v,)
        First row of T.
    momentum : float
    iterations : int
    residual : float
        ``|G d - x|_2``.
    converged : bool
    tau, step_size, shrink_threshold, tolerance : float
        The resolved settings.
    changes : list of float
        ``|T_{i+1} - T_i|_F`` per iteration.
    """

    d: np.ndarray
    v: float
    toeplitz_row: np.ndarray
    momentum: float
    iterations: int
    residual: float
    converged: bool
    tau: float
    step_size: float
    shrink_threshold: float
    tolerance: float
    changes: list = field(default_factory=list)

    @property
    def t_toeplitz(self) -> np.ndarray:
        return toeplitz_from_row(self.toeplitz_row)


def fidelity_gradient(g: np.ndarray, d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient ``G^H (G d - x)`` of ``|G d - x|^2 / 2`` with respect to ``conj(d)``."""
    return g.conj().T @ (g @ d - x)


def _momentum(t_prev: float) -> float:
    return (1.0 + math.sqrt(4.0 * t_prev * t_prev + 1.0)) / 2.0


def _select(eigenvalues: np.ndarray, count: int, rule: str) -> np.ndarray:
    """Indices of the ``count`` eigenvalues kept by the truncation rule."""
    key = np.abs(eigenvalues) if rule == "magnitude" else eigenvalues
    return np.argsort(-key, kind="stable")[:count]


def resolve_tau(config: ApgConfig, n_virtual: int, snapshot) -> float:
    """Regularization weight tau for a run of :func:`apg_solve`."""
    if config.tau is not None:
        return config.tau
    if config.noise_std is not None and config.noise_std > 0:
        return config.noise_std * math.sqrt(n_virtual * math.log(n_virtual))
    x = np.asarray(snapshot).reshape(-1)
    return 0.1 * math.sqrt(x.size) * float(np.linalg.norm(x))


def apg_solve(snapshot, sampling: SamplingMatrix, config: ApgConfig | None = None) -> ApgState:
    """Solve the atomic-norm problem on the virtual array by APG.

    Parameters
    ----------
    snapshot : array_like of complex, shape (N,)
    sampling : SamplingMatrix
    config : ApgConfig, optional

    Returns
    -------
    ApgState

    Raises
    ------
    DomainError
        If the snapshot length does not match ``sampling``.
    DivergenceError
        If an iterate becomes non-finite.
    """
    config = config or ApgConfig()
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    g = sampling.g
    if x.size != g.shape[0]:
        raise DomainError(f"snapshot has {x.size} samples, sampling matrix expects {g.shape[0]}")
    n_v = sampling.n_virtual
    step = config.step_size or 1.0 / np.linalg.norm(g, 2) ** 2
    if not np.any(x):
        return ApgState(np.zeros(n_v, complex), 0.0, np.zeros(n_v, complex), 1.0, 1, 0.0, True,
                        config.tau or 0.0, step, config.shrink_threshold or 0.0,
                        config.tolerance or 0.0, [0.0])
    if config.use_symmetry and sampling.is_mirror_symmetric:
        return _apg_mirror(x, sampling, config, step)
    return _apg_dense(x, sampling, config, step)


def _settings(config, n_v, x, t0_norm, step):
    tau = resolve_tau(config, n_v, x)
    if config.shrink_threshold is not None:
        threshold = config.shrink_threshold
        if config.tau is None:
            tau = threshold / step
    else:
        threshold = tau * step
    tolerance = config.tolerance if config.tolerance is not None else 1e-6 * t0_norm
    return tau, threshold, tolerance


def _apg_dense(x, sampling, config, step) -> ApgState:
    g = sampling.g
    gh = g.conj().T
    n_v = sampling.n_virtual

    d = gh @ x
    t = toeplitz_row(np.outer(d, d.conj()))
    v = float(t[0].real)  # trace(T_0) / N_v
    tau, threshold, tolerance = _settings(config, n_v, x, toeplitz_frobenius(t), step)

    d_prev, t_prev = d, t
    mom_prev = 1.0
    changes = []
    converged = False
    z = np.empty((n_v + 1, n_v + 1), complex)
    for it in range(1, config.max_iterations + 1):
        mom = _momentum(mom_prev)
        w = (mom_prev - 1.0) / mom
        d_bar = d + w * (d - d_prev)
        t_bar = t + w * (t - t_prev)
        d_g = d_bar - step * fidelity_gradient(g, d_bar, x)
        lam, vecs = np.linalg.eigh(toeplitz_from_row(t_bar))
        lam_s = shrink_eigenvalues(lam, threshold)
        rank = int(np.count_nonzero(lam_s))
        z[0, 0] = lam_s.sum()
        z[0, 1:] = d_g.conj()
        z[1:, 0] = d_g
        z[1:, 1:] = (vecs * lam_s) @ vecs.conj().T
        sig, u = np.linalg.eigh(z)
        keep = _select(sig, rank + 1, config.truncation)
        z_t = (u[:, keep] * sig[keep]) @ u[:, keep].conj().T
        d_prev, t_prev, mom_prev = d, t, mom
        d = z_t[1:, 0].copy()
        v = float(z_t[0, 0].real)
        t = toeplitz_row(z_t[1:, 1:])
        change = toeplitz_frobenius(t - t_prev)
        if not (np.isfinite(change) and np.all(np.isfinite(d))):
            raise DivergenceError(f"APG diverged at iteration {it}; try a smaller step size")
        changes.append(change)
        if change <= tolerance:
            converged = True
            break
    residual = float(np.linalg.norm(g @ d - x))
    return ApgState(d, v, t, mom_prev, it, residual, converged, tau, step, threshold,
                    tolerance, changes)


def _apg_mirror(x, sampling, config, step) -> ApgState:
    basis = _MirrorBasis(sampling.truncation_order)
    ge = basis.even_columns(sampling.g)
    geh = ge.conj().T
    n_v = sampling.n_virtual
    ne = basis.order + 1

    d = geh @ x
    t = basis.row_from_blocks(np.outer(d, d.conj()), np.zeros((ne - 1, ne - 1)))
    v = float(t[0])  # trace(T_0) / N_v
    tau, threshold, tolerance = _settings(config, n_v, x, toeplitz_frobenius(t), step)

    d_prev, t_prev = d, t
    mom_prev = 1.0
    changes = []
    converged = False
    z = np.empty((ne + 1, ne + 1), complex)
    for it in range(1, config.max_iterations + 1):
        mom = _momentum(mom_prev)
        w = (mom_prev - 1.0) / mom
        d_bar = d + w * (d - d_prev)
        t_bar = t + w * (t - t_prev)
        d_g = d_bar - step * fidelity_gradient(ge, d_bar, x)
        te, to = basis.blocks(t_bar)
        lam_e, vec_e = np.linalg.eigh(te)
        lam_o, vec_o = np.linalg.eigh(to)
        lam_e = shrink_eigenvalues(lam_e, threshold)
        lam_o = shrink_eigenvalues(lam_o, threshold)
        rank = int(np.count_nonzero(lam_e) + np.count_nonzero(lam_o))
        z[0, 0] = lam_e.sum() + lam_o.sum()
        z[0, 1:] = d_g.conj()
        z[1:, 0] = d_g
        z[1:, 1:] = (vec_e * lam_e) @ vec_e.T
        sig_e, u_e = np.linalg.eigh(z)
        # The odd block of Z is the shrunk odd block of T, already diagonal.
        sig = np.concatenate([sig_e, lam_o])
        keep = _select(sig, rank + 1, config.truncation)
        keep_e = keep[keep < ne + 1]
        keep_o = keep[keep >= ne + 1] - (ne + 1)
        z_e = (u_e[:, keep_e] * sig_e[keep_e]) @ u_e[:, keep_e].conj().T
        z_o = (vec_o[:, keep_o] * lam_o[keep_o]) @ vec_o[:, keep_o].T
        d_prev, t_prev, mom_prev = d, t, mom
        d = z_e[1:, 0].copy()
        v = float(z_e[0, 0].real)
        t = basis.row_from_blocks(z_e[1:, 1:], z_o)
        change = toeplitz_frobenius(t - t_prev)
        if not (np.isfinite(change) and np.all(np.isfinite(d))):
            raise DivergenceError(f"APG diverged at iteration {it}; try a smaller step size")
        changes.append(change)
        if change <= tolerance:
            converged = True
            break
    d_full = basis.expand_even(d)
    residual = float(np.linalg.norm(sampling.g @ d_full - x))
    return ApgState(d_full, v, t.astype(complex), mom_prev, it, residual, converged, tau, step,
                    threshold, tolerance, changes)


def atomic_objective(snapshot, sampling: SamplingMatrix, tau: float, d, v: float, row) -> float:
    """``tau (v + trace(T) / N_v) + |G d - x|^2``."""
    x = np.asarray(snapshot, dtype=complex)
    fit = np.linalg.norm(sampling.g @ np.asarray(d) - x) ** 2
    return float(tau * (v + np.real(row[0])) + fit)


# ---------------------------------------------------------------------------
# Continuous refinement

@dataclass(frozen=True)
class RefineResult:
    """Atoms after local refinement of the atomic-norm objective."""

    angles: np.ndarray
    powers: np.ndarray
    objective: float
    converged: bool
    iterations: int


def refine_atoms(snapshot, sampling: SamplingMatrix, tau: float, angles,
                 powers=None, max_iterations: int = 500) -> RefineResult:
    """Locally minimize the atomic-norm objective over K atom angles and powers.

    With ``T = sum_k p_k v(theta_k) v(theta_k)^H`` the optimal ``d`` and
    ``v`` are available in closed form and the objective reduces to

        F(p, theta) = tau (x^H (tau I + B P B^H)^{-1} x + sum_k p_k),

    with ``B = G V(theta)``.  F and its gradient cost ``O(N^2 K)`` per
    evaluation; L-BFGS-B handles ``p >= 0``.

    Parameters
    ----------
    snapshot : array_like of complex
    sampling : SamplingMatrix
    tau : float
        Regularization weight, positive.
    angles : array_like
        Starting angles in radians.
    powers : array_like, optional
        Starting powers.  Defaults to the magnitudes of a least-squares fit.
    """
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    if not tau > 0:
        raise DomainError("tau must be positive")
    th0 = np.atleast_1d(np.asarray(angles, dtype=float))
    k = th0.size
    g = sampling.g
    idx = np.arange(-sampling.truncation_order, sampling.truncation_order + 1)
    eye = np.eye(x.size)

    def atoms(th):
        vm = np.exp(1j * np.outer(idx, th))
        return g @ vm, g @ (1j * idx[:, None] * vm)

    if powers is None:
        b0, _ = atoms(th0)
        c0 = np.linalg.lstsq(b0, x, rcond=None)[0]
        powers = np.abs(c0)
    p0 = np.maximum(np.asarray(powers, dtype=float), 1e-3 * max(np.max(powers), 1e-12))

    def objective(z):
        p, th = z[:k], z[k:]
        b, db = atoms(th)
        r = tau * eye + (b * p) @ b.conj().T
        q = scipy.linalg.solve(r, x, assume_a="her")
        alpha = b.conj().T @ q
        beta = db.conj().T @ q
        f = float(np.real(np.vdot(x, q))) + p.sum()
        grad_p = 1.0 - np.abs(alpha) ** 2
        grad_t = -2.0 * p * np.real(np.conj(beta) * alpha)
        return f * tau, np.concatenate([grad_p, grad_t]) * tau

    eps = 1e-9
    res = scipy.optimize.minimize(
        objective, np.concatenate([p0, th0]), jac=True, method="L-BFGS-B",
        bounds=[(0.0, None)] * k + [(eps, math.pi - eps)] * k,
        options=dict(maxiter=max_iterations, ftol=1e-15, gtol=1e-12))
    if not np.all(np.isfinite(res.x)):
        raise NumericalError("refinement produced non-finite atoms")
    return RefineResult(res.x[k:].copy(), res.x[:k].copy(), float(res.fun),
                        bool(res.success), int(res.nit))


def refine_least_squares(snapshot, sampling: SamplingMatrix, angles,
                         max_iterations: int = 200) -> RefineResult:
    """Support-fixed debiasing: minimize ``|x - B(theta) B(theta)^+ x|`` over the angles.

    Variable projection with the Kaufman Jacobian ``-P_perp dB_k c_k``,
    solved by a bounded trust-region least-squares method.  The returned
    ``powers`` are the squared magnitudes of the least-squares amplitudes
    and ``objective`` is the squared residual norm.
    """
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    th0 = np.atleast_1d(np.asarray(angles, dtype=float))
    g = sampling.g
    idx = np.arange(-sampling.truncation_order, sampling.truncation_order + 1)

    def parts(th):
        vm = np.exp(1j * np.outer(idx, th))
        b = g @ vm
        q, _ = np.linalg.qr(b)
        c = np.linalg.lstsq(b, x, rcond=None)[0]
        return b, q, c, g @ (1j * idx[:, None] * vm)

    def residual(th):
        b, _, c, _ = parts(th)
        r = x - b @ c
        return np.concatenate([r.real, r.imag])

    def jacobian(th):
        _, q, c, db = parts(th)
        m = db * c
        m = m - q @ (q.conj().T @ m)
        return -np.concatenate([m.real, m.imag])

    eps = 1e-9
    th0 = np.clip(th0, 2 * eps, math.pi - 2 * eps)
    res = scipy.optimize.least_squares(residual, th0, jac=jacobian, bounds=(eps, math.pi - eps),
                                       method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                       max_nfev=max_iterations)
    if not np.all(np.isfinite(res.x)):
        raise NumericalError("least-squares refinement produced non-finite angles")
    c = parts(res.x)[2]
    return RefineResult(res.x.copy(), np.abs(c) ** 2, float(2 * res.cost),
                        bool(res.success), int(res.nfev))


def _atom_matrix(sampling: SamplingMatrix, angles) -> np.ndarray:
    idx = np.arange(-sampling.truncation_order, sampling.truncation_order + 1)
    return sampling.g @ np.exp(1j * np.outer(idx, np.atleast_1d(angles)))


def _dual_vector(snapshot, sampling: SamplingMatrix, tau: float, angles, powers) -> np.ndarray:
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    b = _atom_matrix(sampling, angles)
    r = tau * np.eye(x.size) + (b * np.asarray(powers, dtype=float)) @ b.conj().T
    return scipy.linalg.solve(r, x, assume_a="her")


def atomic_cost(snapshot, sampling: SamplingMatrix, tau: float, angles, powers) -> float:
    """``F(p, theta)`` minimized by :func:`refine_atoms`."""
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    q = _dual_vector(x, sampling, tau, angles, powers)
    return float(tau * (np.vdot(x, q).real + np.sum(powers)))


def dual_certificate(snapshot, sampling: SamplingMatrix, tau: float, angles, powers,
                     grid) -> np.ndarray:
    """``|b(theta)^H q|`` on ``grid`` with ``q = (tau I + B P B^H)^{-1} x``.

    At a minimizer of the atomic-norm objective this stays at or below 1
    everywhere and touches 1 at the atoms; a value above 1 marks an
    angle where adding an atom lowers the objective.
    """
    q = _dual_vector(snapshot, sampling, tau, angles, powers)
    return np.abs(_atom_matrix(sampling, grid).conj().T @ q)


# ---------------------------------------------------------------------------
# Grid-based baselines

@dataclass(frozen=True)
class GridSpectrum:
    """Values on a uniform angle grid ``theta_m = m pi / M``.

    Attributes
    ----------
    grid_angles : ndarray
    magnitudes : ndarray
        Complex coefficients for ISTA, beam power magnitudes for DBF.
    iterations : int
    objective : tuple of float
        Per-iteration objective values (ISTA only).
    """

    grid_angles: np.ndarray
    magnitudes: np.ndarray
    iterations: int = 0
    objective: tuple = ()

    @property
    def spacing(self) -> float:
        return float(self.grid_angles[1] - self.grid_angles[0])


def scan_grid(m_grid: int) -> np.ndarray:
    if m_grid < 2:
        raise DomainError("the grid needs at least two points")
    return np.arange(m_grid) * (math.pi / m_grid)


def grid_size(rho_s: float) -> int:
    """Grid size ``ceil(pi / rho_s)`` for grid interval ``rho_s``."""
    return int(math.ceil(math.pi / rho_s))


def dbf_spectrum(snapshot, geometry: ArrayGeometry, m_grid: int) -> GridSpectrum:
    """Bartlett beamformer magnitude ``|a(theta_m)^H x| / N``."""
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    if x.size != geometry.n_elements:
        raise DomainError("snapshot length does not match the geometry")
    grid = scan_grid(m_grid)
    a = steering_matrix(geometry, grid)
    return GridSpectrum(grid, np.abs(a.conj().T @ x) / geometry.n_elements)


def ista_objective(snapshot, a, c, gamma) -> float:
    r = np.asarray(snapshot) - a @ c
    return float(0.5 * np.vdot(r, r).real + gamma * np.abs(c).sum())


def ista_solve(snapshot, geometry: ArrayGeometry, m_grid: int, gamma: float,
               max_iterations: int = 2000, tolerance: float = 1e-8) -> GridSpectrum:
    """Grid-based sparse recovery by iterative shrinkage thresholding.

    Minimizes ``0.5 |x - A c|^2 + gamma |c|_1`` with
    ``A[n, m] = exp(j 2 pi r_n / lambda cos(m pi / M))`` and step size
    ``1 / |A|_2^2``.  Stops when the relative change of ``c`` drops below
    ``tolerance``.
    """
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    if x.size != geometry.n_elements:
        raise DomainError("snapshot length does not match the geometry")
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    grid = scan_grid(m_grid)
    a = steering_matrix(geometry, grid)
    ah = a.conj().T
    step = 1.0 / np.linalg.norm(a, 2) ** 2
    c = np.zeros(m_grid, complex)
    history = [ista_objective(x, a, c, gamma)]
    it = 0
    if np.any(x):
        for it in range(1, max_iterations + 1):
            u = c - step * (ah @ (a @ c - x))
            mag = np.abs(u)
            scale = np.maximum(1.0 - step * gamma / np.maximum(mag, np.finfo(float).tiny), 0.0)
            c_new = u * scale
            if not np.all(np.isfinite(c_new)):
                raise DivergenceError(f"ISTA diverged at iteration {it}")
            delta = np.linalg.norm(c_new - c)
            c = c_new
            history.append(ista_objective(x, a, c, gamma))
            if delta <= tolerance * max(np.linalg.norm(c), np.finfo(float).tiny):
                break
    return GridSpectrum(grid, c, it, tuple(history))


def default_ista_gamma(snapshot, geometry: ArrayGeometry, m_grid: int,
                       noise_std: float | None = None) -> float:
    """``noise_std sqrt(N log M)`` if the noise level is known.

    Otherwise ``0.1 max_m |a_m^H x|``, a tenth of the smallest weight that
    zeroes the whole solution.
    """
    if noise_std is not None and noise_std > 0:
        return noise_std * math.sqrt(geometry.n_elements * math.log(m_grid))
    a = steering_matrix(geometry, scan_grid(m_grid))
    return 0.1 * float(np.abs(a.conj().T @ np.asarray(snapshot)).max())


def spectrum_peaks(spectrum: GridSpectrum, k: int | None = None,
                   min_relative: float = 0.0) -> np.ndarray:
    """Angles of the largest local maxima of ``|magnitudes|``, ascending.

    Parameters
    ----------
    spectrum : GridSpectrum
    k : int, optional
        Keep at most this many peaks (the largest ones).
    min_relative : float
        Drop peaks below this fraction of the global maximum.
    """
    mag = np.abs(spectrum.magnitudes)
    if mag.max() <= 0:
        return np.array([])
    padded = np.concatenate([[-1.0], mag, [-1.0]])
    peaks, _ = scipy.signal.find_peaks(padded)
    peaks = peaks - 1
    peaks = peaks[mag[peaks] >= min_relative * mag.max()]
    order = np.argsort(-mag[peaks], kind="stable")
    if k is not None:
        order = order[:k]
    return np.sort(spectrum.grid_angles[peaks[order]])

