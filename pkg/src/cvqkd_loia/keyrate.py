"""Asymptotic key rate under collective attacks with reverse reconciliation.

The cross-correlation ``Z`` of the covariance matrix is replaced by its
analytic lower bound, so no semidefinite program is solved here.
Quantities are in shot-noise units with vacuum quadrature variance 1.
"""

from dataclasses import dataclass
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy.special import logsumexp

from . import fock
from .constellation import fock_model, protocol_quantities
from .errors import IntegrationWarning, InvalidInputError, UnphysicalError

FIBER_LOSS_DB_PER_KM = 0.2
IAB_VARIANTS = ("discrete", "gaussian")
_LN2 = math.log(2.0)


def distance_to_T(d_km, loss_db_per_km=FIBER_LOSS_DB_PER_KM):
    """Fiber transmittance ``10^(-loss * d / 10)``."""
    if not d_km >= 0:
        raise InvalidInputError(f"distance must be non-negative, got {d_km!r}")
    return 10.0 ** (-loss_db_per_km * d_km / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Phase-insensitive Gaussian channel; ``xi`` is referred to the channel input."""

    T: float
    xi: float

    def __post_init__(self):
        if not (0.0 < self.T <= 1.0):
            raise InvalidInputError(f"transmittance must be in (0, 1], got {self.T!r}")
        if not (self.xi >= 0.0 and math.isfinite(self.xi)):
            raise InvalidInputError(f"excess noise must be finite and >= 0, got {self.xi!r}")


@dataclass(frozen=True)
class Observables:
    c1: float
    c2: float
    n_B: float


@dataclass(frozen=True)
class HolevoResult:
    chi_BE: float
    lambda1: float
    lambda2: float
    lambda3: float


@dataclass(frozen=True)
class RateBreakdown:
    """All intermediate quantities of one key-rate evaluation (rates in bits/symbol)."""

    V: float
    W: float
    Z: float
    lambda1: float
    lambda2: float
    lambda3: float
    I_AB: float
    chi_BE: float
    rate: float
    radicand: float
    iab_variant: str
    observables: Observables

    @property
    def rate_clamped(self):
        return max(self.rate, 0.0)


@lru_cache(maxsize=64)
def _c1_unit(constellation, dim, floor):
    model = fock_model(constellation, dim, floor)
    # tau-bar is the entrywise conjugate, so its square root is conj(sqrt(tau))
    s = model.sqrt_tau.conj()
    a = fock.annihilation(model.dim)
    return float(np.real(np.trace(s @ a @ s @ a.conj().T)))


def c1_trace(constellation, dim=None, floor=None):
    """``tr(taubar^{1/2} a taubar^{1/2} a^dag)``: the lossless value of c1."""
    dim = constellation.default_dim() if dim is None else int(dim)
    return _c1_unit(constellation, dim, floor)


def channel_observables(constellation, ch, dim=None, pq=None):
    """Observables ``(c1, c2, n_B)`` produced by a Gaussian channel without attack."""
    if pq is None:
        pq = protocol_quantities(constellation, dim)
    n = pq.mean_photon
    sqrtT = math.sqrt(ch.T)
    return Observables(c1=sqrtT * c1_trace(constellation, pq.dim),
                       c2=sqrtT * n,
                       n_B=ch.T * n + ch.T * ch.xi / 2.0)


def z_radicand(obs, pq):
    return obs.n_B - obs.c2 ** 2 / pq.mean_photon


def z_star(obs, pq):
    """Analytic lower bound ``2 c1 - 2 sqrt((n_B - c2^2/<n>) w)`` on ``Z``."""
    if not pq.mean_photon > 0:
        raise InvalidInputError("mean photon number must be positive")
    rad = z_radicand(obs, pq)
    if rad < -1e-6:
        raise UnphysicalError(f"n_B - c2^2/<n> = {rad:.3g} < 0: observables are unphysical")
    return 2.0 * obs.c1 - 2.0 * math.sqrt(max(rad, 0.0) * max(pq.w, 0.0))


def g_function(x):
    """Bosonic entropy ``(x+1) log2(x+1) - x log2 x`` with ``G(0) = 0``."""
    if x <= 0.0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def symplectic_eigenvalues(V, W, Z):
    delta = V * V + W * W - 2.0 * Z * Z
    det = (V * W - Z * Z) ** 2
    disc = delta * delta - 4.0 * det
    if disc < 0.0:
        # only rounding can make this negative for a real symmetric block matrix
        disc = 0.0
    root = math.sqrt(disc)
    l1 = math.sqrt(max((delta + root) / 2.0, 0.0))
    l2 = math.sqrt(max((delta - root) / 2.0, 0.0))
    return l1, l2


def holevo(V, W, Z):
    """Holevo bound between Bob (heterodyne) and Eve for the covariance matrix ``(V, W, Z)``."""
    if V < 1.0 - 1e-9 or W < 1.0 - 1e-9:
        raise UnphysicalError(f"V={V!r} and W={W!r} must be >= 1")
    l1, l2 = symplectic_eigenvalues(V, W, Z)
    l3 = V - Z * Z / (1.0 + W)
    for name, lam in (("lambda1", l1), ("lambda2", l2), ("lambda3", l3)):
        if lam < 1.0 - 1e-6:
            raise UnphysicalError(f"{name}={lam:.9g} < 1: covariance matrix is not physical")
    chi = g_function((l1 - 1.0) / 2.0) + g_function((l2 - 1.0) / 2.0) - g_function((l3 - 1.0) / 2.0)
    return HolevoResult(chi_BE=chi, lambda1=l1, lambda2=l2, lambda3=l3)


def _noise_var(ch):
    # per-quadrature variance of the heterodyne outcome in amplitude units
    return (2.0 + ch.T * ch.xi) / 4.0


def _mi_1d(levels, probs, s2, nodes):
    """Mutual information of a discrete real input through AWGN of variance ``s2``."""
    x, wts = np.polynomial.hermite.hermgauss(nodes)
    wts = wts / math.sqrt(math.pi)
    levels = np.asarray(levels, dtype=float)
    logp = np.log(np.asarray(probs, dtype=float))
    # y[k, i] = m_k + sqrt(2 s2) x_i, evaluated against every component j
    y = levels[:, None] + math.sqrt(2.0 * s2) * x[None, :]
    expo = -(y[:, :, None] - levels[None, None, :]) ** 2 / (2.0 * s2)
    own = -(x * x)[None, :]
    mix = logsumexp(expo + logp[None, None, :], axis=2)
    return float(np.sum(np.exp(logp)[:, None] * wts[None, :] * (own - mix))) / _LN2


def _mi_2d(alphas, probs, s2, nodes, chunk=16):
    x, wts = np.polynomial.hermite.hermgauss(nodes)
    X, Y = np.meshgrid(x, x, indexing="ij")
    z = math.sqrt(2.0 * s2) * (X + 1j * Y).ravel()
    w2 = (np.outer(wts, wts) / math.pi).ravel()
    own = -np.abs(X + 1j * Y).ravel() ** 2
    logp = np.log(probs)
    total = 0.0
    for start in range(0, alphas.size, chunk):
        mk = alphas[start:start + chunk]
        y = mk[:, None] + z[None, :]
        mix = logsumexp(-np.abs(y[:, :, None] - alphas[None, None, :]) ** 2 / (2.0 * s2)
                        + logp[None, None, :], axis=2)
        total += float(np.sum(probs[start:start + chunk, None] * w2[None, :] * (own[None, :] - mix)))
    return total / _LN2


def _mi_discrete(constellation, ch, nodes):
    s2 = _noise_var(ch)
    sqrtT = math.sqrt(ch.T)
    split = constellation.quadrature_factorization()
    if split is not None:
        # the 2-D tensor rule of a separable integrand is the sum of two 1-D rules
        (re_l, re_p), (im_l, im_p) = split
        return _mi_1d(sqrtT * re_l, re_p, s2, nodes) + _mi_1d(sqrtT * im_l, im_p, s2, nodes)
    return _mi_2d(sqrtT * constellation.alphas, constellation.probs, s2, nodes)


def mutual_info(constellation, ch, variant="discrete", nodes=64, check=True):
    """Alice-Bob mutual information in bits per symbol for heterodyne detection.

    ``variant="discrete"`` integrates the discrete-input channel
    ``y = sqrt(T) alpha + z`` with Gauss-Hermite quadrature (``nodes`` per
    dimension). ``variant="gaussian"`` is the Gaussian-input capacity
    ``log2(1 + T V_A / (2 + T xi))``.
    """
    if variant == "gaussian":
        return math.log2(1.0 + ch.T * constellation.modulation_variance / (2.0 + ch.T * ch.xi))
    if variant != "discrete":
        raise InvalidInputError(f"unknown I_AB variant {variant!r}; choose from {IAB_VARIANTS}")
    value = _mi_discrete(constellation, ch, nodes)
    if check:
        finer = _mi_discrete(constellation, ch, 2 * nodes)
        if abs(finer - value) > 1e-6 * max(abs(finer), 1e-12):
            warnings.warn(f"Gauss-Hermite I_AB changed by {abs(finer - value):.3g} when doubling nodes",
                          IntegrationWarning, stacklevel=2)
    return max(value, 0.0)


def mutual_info_mc(constellation, ch, samples=10**7, seed=0, chunk=250_000):
    """Monte-Carlo estimate of the discrete-input mutual information.

    Uses the full 2-D mixture density regardless of separability.

    Returns:
        ``(estimate, standard_error)`` in bits per symbol.
    """
    rng = np.random.default_rng(seed)
    alphas, probs = math.sqrt(ch.T) * constellation.alphas, constellation.probs
    logp = np.log(probs)
    s2 = _noise_var(ch)
    sd = math.sqrt(s2)
    total = total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        k = rng.choice(alphas.size, size=n, p=probs)
        z = sd * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        y = alphas[k] + z
        own = -np.abs(z) ** 2 / (2.0 * s2)
        mix = logsumexp(-np.abs(y[:, None] - alphas[None, :]) ** 2 / (2.0 * s2) + logp[None, :], axis=1)
        v = (own - mix) / _LN2
        total += float(v.sum())
        total_sq += float((v * v).sum())
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)


def covariance_entries(obs, pq):
    """``(V, W, Z*)`` for the analytic key-rate bound."""
    return 1.0 + 2.0 * pq.mean_photon, 1.0 + 2.0 * obs.n_B, z_star(obs, pq)


def rate_from_observables(constellation, obs, pq, I_AB, beta, variant="discrete"):
    V, W, Z = covariance_entries(obs, pq)
    h = holevo(V, W, Z)
    return RateBreakdown(V=V, W=W, Z=Z, lambda1=h.lambda1, lambda2=h.lambda2, lambda3=h.lambda3,
                         I_AB=I_AB, chi_BE=h.chi_BE, rate=beta * I_AB - h.chi_BE,
                         radicand=z_radicand(obs, pq), iab_variant=variant, observables=obs)


def key_rate(constellation, ch, beta, dim=None, iab_variant="discrete", pq=None, nodes=64):
    """Devetak-Winter rate ``beta I_AB - chi_BE`` with ``Z`` replaced by its lower bound."""
    if not (0.0 < beta <= 1.0):
        raise InvalidInputError(f"reconciliation efficiency must be in (0, 1], got {beta!r}")
    if pq is None:
        pq = protocol_quantities(constellation, dim)
    obs = channel_observables(constellation, ch, pq=pq)
    I_AB = mutual_info(constellation, ch, variant=iab_variant, nodes=nodes)
    return rate_from_observables(constellation, obs, pq, I_AB, beta, iab_variant)


def truncation_deltas(constellation, ch, beta, dim=None, extra=8, iab_variant="discrete"):
    """Change of each downstream scalar when the Fock cutoff grows by ``extra``."""
    dim = constellation.default_dim() if dim is None else int(dim)
    out = {}
    results = []
    for d in (dim, dim + extra):
        pq = protocol_quantities(constellation, d)
        obs = channel_observables(constellation, ch, pq=pq)
        results.append((pq, obs, key_rate(constellation, ch, beta, iab_variant=iab_variant, pq=pq)))
    (pq0, ob0, r0), (pq1, ob1, r1) = results
    out["mean_photon"] = abs(pq1.mean_photon - pq0.mean_photon)
    out["w"] = abs(pq1.w - pq0.w)
    out["c1"] = abs(ob1.c1 - ob0.c1)
    out["z_star"] = abs(r1.Z - r0.Z)
    out["rate"] = abs(r1.rate - r0.rate)
    return out
