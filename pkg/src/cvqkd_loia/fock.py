"""Linear algebra on a truncated single-mode Fock space.

Matrices are plain complex ``numpy`` arrays indexed by photon number, so
``m[i, j] = <i|m|j>``. Everything here is a pure function of its inputs.
"""

import math
import warnings

import numpy as np
from scipy.special import gammaln

from .errors import InvalidInputError, TruncationWarning

HERMITIAN_TOL = 1e-12
NEGATIVE_EIG_TOL = 1e-10
DEFAULT_FLOOR_REL = 1e-10


def default_dim(max_abs2):
    """Cutoff dimension for coherent states with ``|alpha|^2 <= max_abs2``.

    Poisson tails beyond roughly ``4|alpha|^2 + 10`` photons are negligible.
    """
    return 1 + int(math.ceil(4.0 * float(max_abs2) + 10.0))


def coherent_state(alpha, dim, return_deficit=False):
    """Truncated Fock expansion ``<m|alpha> = exp(-|alpha|^2/2) alpha^m / sqrt(m!)``.

    Args:
        alpha: complex amplitude.
        dim: number of Fock levels kept (``n_cut + 1``).
        return_deficit: also return the truncated mass ``1 - ||v||^2``.

    Returns:
        The state vector, or ``(vector, deficit)``.
    """
    dim = _check_dim(dim)
    alpha = complex(alpha)
    if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
        raise InvalidInputError(f"coherent amplitude must be finite, got {alpha!r}")
    n = np.arange(dim)
    if alpha == 0:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
    else:
        r = abs(alpha)
        # log-domain magnitude keeps large |alpha| from overflowing alpha**m / m!
        mag = np.exp(-0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1))
        vec = mag * np.exp(1j * n * np.angle(alpha))
    if return_deficit:
        return vec, 1.0 - float(np.vdot(vec, vec).real)
    return vec


def annihilation(dim):
    """Matrix of the annihilation operator, ``a[m, m+1] = sqrt(m+1)``."""
    dim = _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def number_operator(dim):
    dim = _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def mixture(vectors, weights):
    """Density matrix ``sum_k w_k |v_k><v_k|`` from the columns of ``vectors``."""
    vectors = np.asarray(vectors, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    if vectors.ndim != 2 or vectors.shape[1] != weights.shape[0]:
        raise InvalidInputError(
            f"expected one column per weight, got vectors {vectors.shape} and "
            f"{weights.shape[0]} weights")
    rho = (vectors * weights) @ vectors.conj().T
    return 0.5 * (rho + rho.conj().T)


def build_tau(constellation, dim, warn=True):
    """Average transmitted state ``tau = sum_k p_k |alpha_k><alpha_k|``.

    ``constellation`` is anything with ``alphas`` and ``probs`` arrays. The
    trace equals ``sum_k p_k ||v_k||^2`` which is below 1 by the truncated mass.
    """
    dim = _check_dim(dim)
    probs = np.asarray(constellation.probs, dtype=float)
    if abs(probs.sum() - 1.0) > 1e-12:
        raise InvalidInputError(f"probabilities sum to {probs.sum()!r}, not 1")
    vecs = coherent_matrix(constellation.alphas, dim)
    if warn:
        deficit = 1.0 - float(np.sum(probs * np.sum(np.abs(vecs) ** 2, axis=0)))
        warn_truncation(deficit, dim)
    return mixture(vecs, probs)


def coherent_matrix(alphas, dim):
    """Coherent states for each amplitude, stacked as columns."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    return np.column_stack([coherent_state(a, dim) for a in alphas])


def warn_truncation(deficit, dim, tol=1e-6):
    if deficit > tol:
        warnings.warn(
            f"truncated mass {deficit:.3g} exceeds {tol:g} at dim={dim}",
            TruncationWarning, stacklevel=3)


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - m.conj().T), initial=0.0) <= tol


def psd_eigh(m):
    """Eigendecomposition of a Hermitian PSD matrix with tiny negative eigenvalues clamped.

    Raises:
        InvalidInputError: if ``m`` is not Hermitian or has an eigenvalue
            below ``-1e-10``.
    """
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m):
        raise InvalidInputError("matrix is not Hermitian")
    evals, evecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    if evals.size and evals[0] < -NEGATIVE_EIG_TOL:
        raise InvalidInputError(f"matrix is not positive semidefinite (min eigenvalue {evals[0]:.3g})")
    return np.clip(evals, 0.0, None), evecs


def _resolve_floor(evals, floor):
    if floor is None:
        return DEFAULT_FLOOR_REL * (evals[-1] if evals.size else 0.0)
    return float(floor)


def psd_sqrt(m):
    """Principal square root of a PSD matrix via its eigendecomposition."""
    evals, evecs = psd_eigh(m)
    return (evecs * np.sqrt(evals)) @ evecs.conj().T


def psd_pinv_sqrt(m, floor=None):
    """Pseudo-inverse square root; eigenvalues below ``floor`` map to zero.

    ``floor`` defaults to ``1e-10`` times the largest eigenvalue.
    """
    evals, evecs = psd_eigh(m)
    floor = _resolve_floor(evals, floor)
    keep = evals > floor
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / np.sqrt(evals[keep])
    return (evecs * inv) @ evecs.conj().T


def support_projector(m, floor=None):
    evals, evecs = psd_eigh(m)
    keep = evals > _resolve_floor(evals, floor)
    v = evecs[:, keep]
    return v @ v.conj().T


def alpha_tau(tau, floor=None):
    """The operator ``tau^{1/2} a tau^{-1/2}`` (pseudo-inverse on the support of tau).

    Generally not Hermitian. For a pure ``tau = |alpha><alpha|`` it reduces
    to ``alpha |alpha><alpha|``.
    """
    tau = np.asarray(tau, dtype=complex)
    a = annihilation(tau.shape[0])
    return psd_sqrt(tau) @ a @ psd_pinv_sqrt(tau, floor)


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise InvalidInputError(f"Fock dimension must be an integer >= 2, got {dim!r}")
    return int(dim)
