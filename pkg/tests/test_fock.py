import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqkd_loia import fock
from cvqkd_loia.constellation import from_points, qpsk
from cvqkd_loia.errors import InvalidInputError, TruncationWarning


def test_coherent_state_norm_alpha_one():
    v = fock.coherent_state(1.0, 20)
    assert abs(np.vdot(v, v).real - 1.0) < 1e-12


@pytest.mark.parametrize("alpha", [0.3, 1.0 + 0.5j, -2.0j, 2.5 * np.exp(0.7j)])
def test_coherent_state_matches_factorial_formula(alpha):
    dim = 30
    v = fock.coherent_state(alpha, dim)
    ref = np.array([math.exp(-abs(alpha) ** 2 / 2) * alpha ** m / math.sqrt(math.factorial(m))
                    for m in range(dim)])
    np.testing.assert_allclose(v, ref, atol=1e-14)


def test_vacuum_is_first_basis_vector():
    v = fock.coherent_state(0, 5)
    np.testing.assert_array_equal(v, [1, 0, 0, 0, 0])


def test_large_amplitude_does_not_overflow():
    v, deficit = fock.coherent_state(12.0, 400, return_deficit=True)
    assert np.all(np.isfinite(v))
    assert abs(deficit) < 1e-12


def test_coherent_state_is_eigenvector_of_a():
    alpha = 0.8 - 0.4j
    dim = 40
    v = fock.coherent_state(alpha, dim)
    av = fock.annihilation(dim) @ v
    np.testing.assert_allclose(av[:-5], alpha * v[:-5], atol=1e-13)


@pytest.mark.parametrize("bad", [1, 0, 2.5, -3])
def test_bad_dim_rejected(bad):
    with pytest.raises(InvalidInputError):
        fock.annihilation(bad)


def test_nonfinite_alpha_rejected():
    with pytest.raises(InvalidInputError):
        fock.coherent_state(complex(np.nan, 0), 10)


def test_default_dim_formula():
    assert fock.default_dim(0.228) == 1 + math.ceil(4 * 0.228 + 10)
    assert fock.default_dim(7.0) == 39


def test_qpsk_tau_has_mod4_block_structure():
    c = qpsk(0.456)
    tau = fock.build_tau(c, 16)
    m, n = np.indices(tau.shape)
    assert np.max(np.abs(tau[(m - n) % 4 != 0])) < 1e-15
    assert np.max(np.abs(tau[(m - n) % 4 == 0])) > 1e-3


def test_qpsk_tau_eigenvalues_match_closed_form():
    # spectrum of a four-state phase mixture: Poisson mass per residue class mod 4
    c = qpsk(0.456)
    r2 = c.max_abs2
    dim = 40
    tau = fock.build_tau(c, dim)
    ev = np.sort(np.linalg.eigvalsh(tau))[::-1][:4]
    classes = [sum(math.exp(-r2) * r2 ** n / math.factorial(n) for n in range(j, dim, 4)) for j in range(4)]
    np.testing.assert_allclose(ev, sorted(classes, reverse=True), atol=1e-14)


@pytest.mark.parametrize("V_A", [0.2, 0.456, 2.0])
def test_qpsk_mean_photon_by_trace(V_A):
    c = qpsk(V_A)
    tau = fock.build_tau(c, c.default_dim())
    n = np.trace(tau @ fock.number_operator(tau.shape[0])).real
    assert abs(n - V_A / 2) < 1e-9


def test_truncation_warning():
    c = from_points([(3.0, 1.0)])
    with pytest.warns(TruncationWarning):
        fock.build_tau(c, 8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fock.build_tau(c, c.default_dim())


def test_psd_eigh_rejects_non_hermitian_and_negative():
    with pytest.raises(InvalidInputError):
        fock.psd_eigh(np.array([[1, 1], [0, 1]]))
    with pytest.raises(InvalidInputError):
        fock.psd_eigh(np.diag([1.0, -1e-6]))
    ev, _ = fock.psd_eigh(np.diag([1.0, -1e-12]))
    assert ev.min() == 0.0


def test_pinv_sqrt_on_rank_deficient():
    v = fock.coherent_state(0.5, 10)
    rho = np.outer(v, v.conj())
    p = fock.psd_pinv_sqrt(rho)
    s = fock.psd_sqrt(rho)
    np.testing.assert_allclose(s @ p, fock.support_projector(rho), atol=1e-10)


def test_alpha_tau_pure_state():
    alpha = 0.6 + 0.2j
    v = fock.coherent_state(alpha, 30)
    rho = np.outer(v, v.conj())
    at = fock.alpha_tau(rho)
    np.testing.assert_allclose(at, alpha * rho, atol=1e-10)


def test_pinv_floor_drops_small_eigenvalues():
    m = np.diag([1.0, 1e-3, 1e-13]).astype(complex)
    p = fock.psd_pinv_sqrt(m)
    np.testing.assert_allclose(np.diag(p).real, [1.0, 1 / math.sqrt(1e-3), 0.0])
    p2 = fock.psd_pinv_sqrt(m, floor=1e-2)
    np.testing.assert_allclose(np.diag(p2).real, [1.0, 0.0, 0.0])


@st.composite
def psd_matrices(draw):
    n = draw(st.integers(2, 6))
    rank = draw(st.integers(1, n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return x @ x.conj().T


@settings(max_examples=60, deadline=None)
@given(psd_matrices())
def test_psd_sqrt_squares_back(m):
    s = fock.psd_sqrt(m)
    assert fock.is_hermitian(s, 1e-10 * max(1.0, np.abs(m).max()))
    np.testing.assert_allclose(s @ s, m, atol=1e-9 * max(1.0, np.abs(m).max()))


@settings(max_examples=60, deadline=None)
@given(psd_matrices())
def test_pinv_sqrt_is_moore_penrose(m):
    s, p = fock.psd_sqrt(m), fock.psd_pinv_sqrt(m)
    proj = fock.support_projector(m)
    scale = max(1.0, np.abs(m).max())
    np.testing.assert_allclose(s @ p, proj, atol=1e-7 * scale)
    np.testing.assert_allclose(p @ m @ p, proj, atol=1e-7 * scale)
