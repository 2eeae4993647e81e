"""Independent reference computations used to cross-check the fast paths.

Nothing here is on the hot path. Each function recomputes a quantity from a
different starting point (explicit two-mode states, full covariance matrices,
sampling) so that agreement is meaningful.
"""

import math

import numpy as np
from scipy import sparse

from . import fock
from .constellation import fock_model


def c1_purification(constellation, dim=None):
    """Lossless c1 as ``<Phi| a (x) a |Phi>`` on an explicit purification of tau.

    ``|Phi> = sum_n taubar^{1/2}|n> (x) |n>`` is built as a ``dim**2`` vector
    and the two-mode operator is assembled with sparse Kronecker products,
    so no trace identity is used.
    """
    dim = constellation.default_dim() if dim is None else int(dim)
    model = fock_model(constellation, dim)
    s = np.conj(model.sqrt_tau)
    eye = np.eye(dim)
    phi = np.zeros(dim * dim, dtype=complex)
    for n in range(dim):
        phi += np.kron(s[:, n], eye[n])
    a = sparse.csr_matrix(fock.annihilation(dim))
    return float(np.vdot(phi, sparse.kron(a, a) @ phi).real)


def c1_first_moments(constellation, pq):
    """Lossless c1 from the per-state first moments of ``a_tau`` and ``a``.

    This is the expectation of the C1 constraint operator on the ideal
    prepare-and-measure state. It agrees with the trace form only up to the
    conditioning of ``tau^{-1/2}``, so compare at a looser tolerance.
    """
    vecs = fock_model(constellation, pq.dim).vectors
    a = fock.annihilation(pq.dim)
    mom = np.einsum("ik,ik->k", vecs.conj(), a @ vecs)
    return float(np.sum(constellation.probs * np.real(np.conj(pq.first_moments) * mom)))


def covariance_matrix(V, W, Z):
    """Two-mode covariance matrix in ``(x_A, p_A, x_B, p_B)`` ordering."""
    sz = np.diag([1.0, -1.0])
    eye = np.eye(2)
    return np.block([[V * eye, Z * sz], [Z * sz, W * eye]])


def symplectic_spectrum(gamma):
    n = gamma.shape[0] // 2
    omega = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    ev = np.abs(np.linalg.eigvals(1j * omega @ gamma))
    return np.sort(ev)[::2]


def entropy_g(nu):
    """Von Neumann entropy of a thermal mode with symplectic eigenvalue ``nu``."""
    if nu <= 1.0 + 1e-12:
        return 0.0
    p, m = (nu + 1.0) / 2.0, (nu - 1.0) / 2.0
    return p * math.log2(p) - m * math.log2(m)


def holevo_oracle(V, W, Z):
    """Eve's Holevo information given Bob's heterodyne outcome.

    Uses the full 4x4 matrix, the generic symplectic spectrum and the Schur
    complement ``gamma_A - sigma (gamma_B + I)^-1 sigma^T`` for the
    conditional state.
    """
    gamma = covariance_matrix(V, W, Z)
    s_ab = sum(entropy_g(nu) for nu in symplectic_spectrum(gamma))
    g_a, g_b, sig = gamma[:2, :2], gamma[2:, 2:], gamma[:2, 2:]
    cond = g_a - sig @ np.linalg.inv(g_b + np.eye(2)) @ sig.T
    s_cond = entropy_g(math.sqrt(np.linalg.det(cond)))
    return s_ab - s_cond
