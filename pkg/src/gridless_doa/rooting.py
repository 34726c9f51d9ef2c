"""Angle and amplitude recovery from the solver's Toeplitz matrix.

The pipeline follows root-MUSIC on the virtual array: split off the
noise subspace of ``T``, root ``f(z) = p(z)^H U_N U_N^H p(z)``, keep the
roots nearest the unit circle and read the angles from their phases.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev

from .errors import DomainError, EstimationError, GridlessDoaError
from .geometry import ArrayGeometry
from .manifold import SamplingMatrix, accurate_truncation_order, sampling_matrix, vandermonde_matrix
from .solvers import (ApgConfig, apg_solve, atomic_cost, dual_certificate, refine_atoms,
                      refine_least_squares, toeplitz_from_row)

log = logging.getLogger(__name__)

PHASE_SEPARATION = 1e-6
_DEFLATION_LIMIT = 1e-14


@dataclass
class DoaEstimate:
    """Recovered targets.

    Attributes
    ----------
    angles : ndarray
        K angles in radians, ascending.
    amplitudes : ndarray of complex
        Least-squares reflectivities matching ``angles``.
    residual : float
        ``|G V(angles) c - x|_2``.
    diagnostics : dict
    """

    angles: np.ndarray
    amplitudes: np.ndarray
    residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.angles.size)

    def to_record(self) -> dict:
        """JSON-serializable result record."""
        return {
            "angles_deg": [float(a) for a in np.rad2deg(self.angles)],
            "amplitudes": [[float(c.real), float(c.imag)] for c in self.amplitudes],
            "residual": _jsonable(float(self.residual)),
            "k": self.k,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def noise_subspace(t_toeplitz, n_signal: int, eigenvalues_out: list | None = None) -> np.ndarray:
    """Eigenvectors of the ``N_v - n_signal`` smallest eigenvalues.

    Parameters
    ----------
    t_toeplitz : ndarray, shape (N_v, N_v)
        Hermitian matrix.
    n_signal : int
        Signal-subspace dimension, ``1 <= n_signal < N_v``.
    eigenvalues_out : list, optional
        If given, receives the ascending eigenvalues.
    """
    t = np.asarray(t_toeplitz)
    n_v = t.shape[0]
    if not 1 <= n_signal < n_v:
        raise DomainError(f"need 1 <= K < N_v = {n_v}, got K = {n_signal}")
    lam, vecs = np.linalg.eigh(t)
    if eigenvalues_out is not None:
        eigenvalues_out.extend(lam.tolist())
    gap = lam[n_v - n_signal] - lam[n_v - n_signal - 1]
    if gap < 1e-12:
        warnings.warn(f"degenerate signal/noise split, eigenvalue gap {gap:.3g}", stacklevel=2)
    return vecs[:, :n_v - n_signal]


def _laurent_coefficients(u_noise: np.ndarray) -> np.ndarray:
    """``w[k + N_v - 1]`` is the sum of diagonal ``k`` of ``U_N U_N^H``."""
    c = u_noise @ u_noise.conj().T
    n = c.shape[0]
    offset = (np.arange(n)[None, :] - np.arange(n)[:, None]).ravel() + (n - 1)
    flat = c.ravel()
    w = np.bincount(offset, weights=flat.real, minlength=2 * n - 1).astype(complex)
    if np.iscomplexobj(flat):
        w += 1j * np.bincount(offset, weights=flat.imag, minlength=2 * n - 1)
    return w


def root_polynomial(u_noise) -> np.ndarray:
    """All roots of ``z^(N_v - 1) p(z)^H U_N U_N^H p(z)``.

    The polynomial has degree ``2 (N_v - 1)``.  Real palindromic
    coefficient sets, which arise whenever ``T`` is real, are rooted
    through the equivalent Chebyshev series in ``(z + 1/z) / 2`` at half
    the degree; other inputs go through the companion matrix.
    """
    u = np.asarray(u_noise)
    w = _laurent_coefficients(u)
    n = u.shape[0]
    scale = np.abs(w).max()
    if scale == 0:
        raise EstimationError("root_polynomial", "noise subspace is empty")
    lead = 0
    while lead < n - 1 and abs(w[-1 - lead]) < _DEFLATION_LIMIT * scale:
        lead += 1
    if lead:
        log.info("deflating %d vanishing leading coefficients", lead)
    real = np.all(w.imag == 0) and np.allclose(w.real, w.real[::-1], rtol=0, atol=1e-13 * scale)
    coeffs = w[::-1][lead:len(w) - lead] if lead else w[::-1]
    if real:
        half = w.real[n - 1:].copy()
        half[1:] *= 2.0
        if lead:
            half = half[:n - lead]
        x = chebyshev.chebroots(half)
        s = np.sqrt(x.astype(complex) ** 2 - 1.0)
        roots = np.concatenate([x + s, x - s])
    else:
        roots = np.roots(coeffs)
    roots = _merge_double_roots(roots, coeffs)
    if lead:
        roots = np.concatenate([roots, np.zeros(lead), np.full(lead, np.inf)])
    return roots


def _merge_double_roots(roots: np.ndarray, coeffs: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Replace numerically split double roots by the matching root of ``f'``.

    Rounding splits a double root of ``f`` into a pair about ``sqrt(eps)``
    apart.  The same point is a simple root of ``f'``, which Newton's
    method started from the pair's mean locates to working precision.
    The polynomial is self-inversive, so the merged pair is written as
    ``z`` and ``1 / conj(z)``.
    """
    roots = np.array(roots, dtype=complex)
    d1 = np.polyder(coeffs)
    d2 = np.polyder(d1)
    done = np.zeros(roots.size, bool)
    for i in range(roots.size):
        if done[i]:
            continue
        scale = max(1.0, abs(roots[i]))
        dist = np.abs(roots - roots[i])
        dist[done] = np.inf
        dist[i] = np.inf
        j = int(np.argmin(dist))
        if dist[j] >= tol * scale:
            continue
        start = z = 0.5 * (roots[i] + roots[j])
        for _ in range(8):
            den = np.polyval(d2, z)
            if den == 0:
                break
            step = np.polyval(d1, z) / den
            z = z - step
            if abs(step) <= 1e-16 * scale:
                break
        if abs(z - start) <= 10 * tol * scale:
            # keep one member on each side of the circle
            roots[i], roots[j] = z, 1 / np.conj(z)
        done[i] = done[j] = True
    return roots


def select_roots(roots, k: int, separation: float = PHASE_SEPARATION) -> np.ndarray:
    """The K roots nearest the unit circle with distinct ``|arg|``.

    Roots outside the unit circle are dropped first, which removes one
    member of every conjugate-reciprocal pair.

    Raises
    ------
    EstimationError
        If fewer than K candidates have distinct phases.
    """
    z = np.asarray(roots, dtype=complex).reshape(-1)
    z = z[np.isfinite(z)]
    z = z[np.abs(z) <= 1.0]
    # Sort on (distance to circle, phase) so the result does not depend
    # on the input order.
    order = np.lexsort((np.angle(z), np.abs(np.abs(z) - 1.0)))
    chosen = []
    phases = []
    for zi in z[order]:
        ph = abs(np.angle(zi))
        if all(abs(ph - p) > separation for p in phases):
            chosen.append(zi)
            phases.append(ph)
            if len(chosen) == k:
                return np.array(chosen)
    raise EstimationError("select_roots", f"only {len(chosen)} of {k} distinct roots found")


def angles_from_roots(roots, warnings_out: list | None = None) -> np.ndarray:
    """``|arg z|`` for each root, ascending."""
    z = np.asarray(roots, dtype=complex).reshape(-1)
    if z.size == 0:
        raise DomainError("no roots given")
    th = np.sort(np.abs(np.angle(z)))
    edge = (th <= 0) | (th >= np.pi)
    if np.any(edge):
        msg = f"boundary angle(s) {th[edge].tolist()} at the array axis"
        warnings.warn(msg, stacklevel=2)
        if warnings_out is not None:
            warnings_out.append(msg)
    return th


def amplitudes_lsq(snapshot, sampling: SamplingMatrix, angles):
    """Least-squares reflectivities ``argmin_c |x - G V c|``.

    Returns
    -------
    amplitudes : ndarray of complex
    residual : float
    condition : float
        Condition number of ``G V``.
    """
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    b = sampling.g @ vandermonde_matrix(angles, sampling.truncation_order)
    c, *_ = np.linalg.lstsq(b, x, rcond=None)
    s = np.linalg.svd(b, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    if cond > 1e8:
        warnings.warn(f"ill-conditioned amplitude fit, condition number {cond:.3g}", stacklevel=2)
    return c, float(np.linalg.norm(b @ c - x)), cond


def estimate_model_order(t_toeplitz, max_k: int | None = None, mirror: bool = True) -> int:
    """Eigen-gap guess of the target count, for diagnostics only.

    Picks the largest ratio between consecutive descending eigenvalues.
    With a mirror-symmetric sampling matrix each target occupies two
    signal dimensions.
    """
    lam = np.sort(np.linalg.eigvalsh(np.asarray(t_toeplitz)))[::-1]
    lam = np.maximum(lam, lam[0] * 1e-16 + np.finfo(float).tiny)
    ratios = lam[:-1] / lam[1:]
    step = 2 if mirror else 1
    limit = ratios.size if max_k is None else min(ratios.size, step * max_k)
    candidates = np.arange(step - 1, limit, step)
    best = candidates[np.argmax(ratios[candidates])]
    return int((best + 1) // step)


def _guarded(res, seeds, n_virtual):
    """Refined atoms, falling back to the seed where refinement degenerated.

    An atom whose power collapsed carries no angle information, and a
    jump of more than ``pi / N_v`` means the local search left the seed's
    basin.  Returns angles, powers, the number of rejected atoms and the
    mask of collapsed atoms.
    """
    collapsed = ~(res.powers > 1e-8 * max(res.powers.max(), 1e-300))
    keep = ~collapsed & (np.abs(res.angles - seeds) <= math.pi / n_virtual)
    powers = np.where(collapsed, 0.0, res.powers)
    return np.where(keep, res.angles, seeds), powers, int((~keep).sum()), collapsed


def _reseed_collapsed(x, sampling, tau, angles, powers, collapsed, grid):
    """Move zero-power atoms to the dual-certificate peaks, one at a time.

    With every power at zero the certificate is ``|b(theta)^H x| / tau``,
    whose peak is where the first atom enters as ``tau`` decreases.
    Peaks within ``2 pi / N_v`` of an atom already placed are skipped.
    """
    angles = angles.copy()
    placed = ~collapsed
    width = 2 * math.pi / sampling.n_virtual
    for i in np.flatnonzero(collapsed):
        cert = dual_certificate(x, sampling, tau, angles[placed], powers[placed], grid) \
            if placed.any() else np.abs(_matched(x, sampling, grid))
        for a in angles[placed]:
            cert[np.abs(grid - a) < width] = -np.inf
        angles[i] = grid[np.argmax(cert)]
        placed[i] = True
    return angles


def _matched(x, sampling, grid):
    return (sampling.g @ vandermonde_matrix(grid, sampling.truncation_order)).conj().T @ x


def _polish(x, sampling, tau, rooted, notes):
    """Local refinement of the rooted atoms plus certificate-driven swaps.

    After refining, the dual certificate is scanned on a grid eight times
    finer than the virtual array; while it exceeds 1, the weakest atom is
    re-seeded at the certificate peak and the swap is kept only if the
    objective drops.
    """
    k = rooted.size
    res = refine_atoms(x, sampling, tau, rooted)
    angles, powers, rejected, collapsed = _guarded(res, rooted, sampling.n_virtual)
    grid = np.linspace(0.0, math.pi, 8 * sampling.n_virtual + 1)[1:-1]
    if collapsed.any():
        angles = _reseed_collapsed(x, sampling, tau, angles, powers, collapsed, grid)
        notes.append(f"{int(collapsed.sum())} atom(s) vanished at this tau; "
                     "re-seeded at the dual-certificate peak")
    elif rejected:
        notes.append(f"refinement rejected for {rejected} atom(s); keeping rooted angles")
    cost = atomic_cost(x, sampling, tau, angles, powers)
    swaps = 0
    for _ in range(k):
        cert = dual_certificate(x, sampling, tau, angles, powers, grid)
        if cert.max() <= 1.0 + 1e-6:
            break
        seeds = angles.copy()
        seeds[np.argmin(powers)] = grid[np.argmax(cert)]
        cand = refine_atoms(x, sampling, tau, seeds)
        c_angles, c_powers, _, _ = _guarded(cand, seeds, sampling.n_virtual)
        c_cost = atomic_cost(x, sampling, tau, c_angles, c_powers)
        if not c_cost < cost - 1e-12 * abs(cost):
            break
        angles, powers, cost = c_angles, c_powers, c_cost
        swaps += 1
    order = np.argsort(angles)
    angles, powers = angles[order], powers[order]
    info = {"converged": res.converged, "iterations": res.iterations, "objective": cost,
            "powers": powers, "swaps": swaps}
    if angles.size > 1 and np.min(np.diff(angles)) <= PHASE_SEPARATION:
        notes.append("refinement merged two atoms; keeping rooted angles")
        return rooted, info
    return angles, info


def _debias(x, sampling, polished, notes):
    """Least-squares angle refit on the fixed support.

    Removes the shrinkage bias of the atomic-norm objective.  The refit
    is kept only if it lowers the residual without merging atoms or
    making the amplitude fit ill-conditioned.
    """
    _, before, _ = amplitudes_lsq(x, sampling, polished)
    res = refine_least_squares(x, sampling, polished)
    angles = np.sort(res.angles)
    ok = res.objective <= before ** 2 * (1 + 1e-12)
    if ok and angles.size > 1:
        b = sampling.g @ vandermonde_matrix(angles, sampling.truncation_order)
        sv = np.linalg.svd(b, compute_uv=False)
        ok = np.min(np.diff(angles)) > PHASE_SEPARATION and sv[-1] > 1e-8 * sv[0]
    info = {"accepted": bool(ok), "iterations": res.iterations,
            "shift": float(np.max(np.abs(angles - polished))) if ok else 0.0}
    if not ok:
        notes.append("least-squares refit rejected; keeping atomic-norm angles")
        return polished, info
    return angles, info


def estimate_fnlanm(snapshot, geometry: ArrayGeometry | None, k: int,
                    config: ApgConfig | None = None, *, sampling: SamplingMatrix | None = None,
                    order: int | None = None, refine: bool = True) -> DoaEstimate:
    """Gridless DoA estimate for an arbitrary linear array.

    Parameters
    ----------
    snapshot : array_like of complex, shape (N,)
    geometry : ArrayGeometry or None
        Used to build the sampling matrix when ``sampling`` is not given.
    k : int
        Number of targets.
    config : ApgConfig, optional
    sampling : SamplingMatrix, optional
        Precomputed or measured sampling matrix.
    order : int, optional
        Truncation order; defaults to :func:`accurate_truncation_order`.
    refine : bool
        Polish the rooted angles by local minimization of the atomic-norm
        objective, then refit them by least squares on the fixed support.

    Raises
    ------
    EstimationError
        Tagged with the failing stage.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    config = config or ApgConfig()
    start = time.perf_counter()
    if sampling is None:
        if geometry is None:
            raise DomainError("need a geometry or a sampling matrix")
        sampling = sampling_matrix(geometry, order if order is not None
                                   else accurate_truncation_order(geometry))
    x = np.asarray(snapshot, dtype=complex).reshape(-1)
    if x.size != sampling.n_elements:
        raise DomainError(f"snapshot has {x.size} samples, expected {sampling.n_elements}")

    try:
        state = apg_solve(x, sampling, config)
    except GridlessDoaError as exc:
        raise EstimationError("apg", str(exc)) from exc
    mirror = sampling.is_mirror_symmetric
    n_signal = 2 * k if mirror else k
    notes: list[str] = []
    eigenvalues: list[float] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            u_n = noise_subspace(toeplitz_from_row(state.toeplitz_row), n_signal, eigenvalues)
            roots = root_polynomial(u_n)
            chosen = select_roots(roots, k)
        except EstimationError:
            raise
        except (GridlessDoaError, np.linalg.LinAlgError) as exc:
            raise EstimationError("rooting", str(exc)) from exc
        rooted = angles_from_roots(chosen, notes)
        angles = rooted
        refine_info = None
        if refine and np.any(x) and state.tau > 0:
            try:
                angles, refine_info = _polish(x, sampling, state.tau, rooted, notes)
                angles, refine_info["debias"] = _debias(x, sampling, angles, notes)
            except GridlessDoaError as exc:
                raise EstimationError("refine", str(exc)) from exc
        amplitudes, residual, cond = amplitudes_lsq(x, sampling, angles)
    notes.extend(str(w.message) for w in caught)
    diagnostics = {
        "truncation_order": sampling.truncation_order,
        "n_virtual": sampling.n_virtual,
        "apg_iterations": state.iterations,
        "apg_converged": state.converged,
        "apg_residual": state.residual,
        "tau": state.tau,
        "eigenvalues": eigenvalues[::-1][:max(4 * k, 8)],
        "root_magnitudes": np.abs(chosen),
        "rooted_angles": rooted,
        "refine": refine_info,
        "condition_number": cond,
        "warnings": notes,
        "runtime_s": time.perf_counter() - start,
    }
    return DoaEstimate(angles, amplitudes, residual, diagnostics)
