"""Local-oscillator intensity attack with random, mean-preserving fluctuations.

Each LO pulse reaches Bob with intensity ``k * I_LO`` where ``k`` is i.i.d.
with ``E[k] = 1`` and variance ``V_k``. The parties normalize with the SNU
calibrated before the run, so their estimates of ``c1, c2, n_B`` are biased
by ``E[1/sqrt(k)]`` and ``E[1/k]``. Rate computations use the second-order
Taylor values of those factors; exact moments are available for comparison.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, special

from .constellation import protocol_quantities
from .errors import BracketError, InfeasibleScenarioError, InvalidInputError, NonMonotoneError
from .keyrate import ChannelParams, Observables, distance_to_T, key_rate

FLUCTUATION_KINDS = ("uniform", "gaussian-truncated", "two-point")
MIN_SUPPORT = 0.5
GAUSS_CUT = 4.0
# variance of a standard normal truncated symmetrically at +-GAUSS_CUT
_GAUSS_TRUNC_VAR = 1.0 - 2.0 * GAUSS_CUT * math.exp(-GAUSS_CUT ** 2 / 2) / math.sqrt(2 * math.pi) \
    / math.erf(GAUSS_CUT / math.sqrt(2))


@dataclass(frozen=True)
class FluctuationModel:
    """Distribution of the attack factor ``k`` (mean 1, variance ``V_k``)."""

    kind: str = "uniform"
    V_k: float = 0.0

    def __post_init__(self):
        if self.kind not in FLUCTUATION_KINDS:
            raise InvalidInputError(f"unknown fluctuation kind {self.kind!r}; choose from {FLUCTUATION_KINDS}")
        if not (self.V_k >= 0 and math.isfinite(self.V_k)):
            raise InvalidInputError(f"V_k must be finite and >= 0, got {self.V_k!r}")
        lo, _ = self.support
        if lo < MIN_SUPPORT:
            raise InvalidInputError(
                f"{self.kind} fluctuations with V_k={self.V_k} reach k={lo:.3g} < {MIN_SUPPORT}")

    @property
    def half_width(self):
        """Half-width of the support around 1."""
        if self.kind == "uniform":
            return math.sqrt(3.0 * self.V_k)
        if self.kind == "two-point":
            return math.sqrt(self.V_k)
        return GAUSS_CUT * self.sigma

    @property
    def sigma(self):
        """Scale of the untruncated normal for the truncated-Gaussian kind."""
        return math.sqrt(self.V_k / _GAUSS_TRUNC_VAR)

    @property
    def support(self):
        h = self.half_width
        return 1.0 - h, 1.0 + h

    def sample(self, rng, size):
        if self.V_k == 0:
            return np.ones(size)
        h = self.half_width
        if self.kind == "uniform":
            return rng.uniform(1.0 - h, 1.0 + h, size)
        if self.kind == "two-point":
            return np.where(rng.random(size) < 0.5, 1.0 - h, 1.0 + h)
        return 1.0 + self.sigma * special.ndtri(
            rng.uniform(special.ndtr(-GAUSS_CUT), special.ndtr(GAUSS_CUT), size))

    def moment(self, power):
        """Exact ``E[k**power]``."""
        if self.V_k == 0:
            return 1.0
        h = self.half_width
        if self.kind == "two-point":
            return 0.5 * ((1.0 - h) ** power + (1.0 + h) ** power)
        if self.kind == "uniform":
            if power == -1:
                return math.atanh(h) / h
            # (1+h)^a - (1-h)^a without cancellation for small h
            a = power + 1.0
            lo = math.log1p(-h)
            return math.exp(a * lo) * math.expm1(a * (math.log1p(h) - lo)) / (2.0 * h * a)
        s = self.sigma
        norm = math.erf(GAUSS_CUT / math.sqrt(2))

        def density(k):
            return math.exp(-0.5 * ((k - 1.0) / s) ** 2) / (s * math.sqrt(2 * math.pi) * norm)

        val, _ = integrate.quad(lambda k: k ** power * density(k), 1.0 - h, 1.0 + h,
                                epsabs=1e-15, epsrel=1e-13, limit=200)
        return val


@dataclass(frozen=True)
class CalibrationModel:
    """Detector gain ``A`` and LO intensity ``I_LO``; the SNU is ``A^2 I_LO``."""

    A: float = 1.0
    I_LO: float = 1.0

    def __post_init__(self):
        if not (self.A > 0 and self.I_LO > 0):
            raise InvalidInputError("gain and LO intensity must be positive")

    @property
    def u_S(self):
        return self.A ** 2 * self.I_LO

    def practical_snu(self, k):
        return k * self.u_S


@dataclass(frozen=True)
class BiasFactors:
    inv_sqrt_mean: float
    inv_mean: float
    taylor_inv_sqrt: float
    taylor_inv: float


def _vk(fm):
    return fm.V_k if isinstance(fm, FluctuationModel) else float(fm)


def taylor_factors(V_k):
    """``(1 + 3 V_k / 8, 1 + V_k)``: second-order values of ``E[k^-1/2]`` and ``E[1/k]``."""
    return 1.0 + 0.375 * V_k, 1.0 + V_k


def bias_factors(fm):
    ts, ti = taylor_factors(fm.V_k)
    return BiasFactors(inv_sqrt_mean=fm.moment(-0.5), inv_mean=fm.moment(-1),
                       taylor_inv_sqrt=ts, taylor_inv=ti)


def _factors(fm, exact):
    if exact:
        if not isinstance(fm, FluctuationModel):
            raise InvalidInputError("exact moments need a FluctuationModel, not a bare variance")
        return fm.moment(-0.5), fm.moment(-1)
    return taylor_factors(_vk(fm))


def practical_observables(estimated, fm, exact=False):
    """Map stale-SNU estimates to the values under the true per-pulse SNU."""
    f_sqrt, f_inv = _factors(fm, exact)
    return Observables(c1=f_sqrt * estimated.c1, c2=f_sqrt * estimated.c2,
                       n_B=f_inv * (estimated.n_B + 1.0) - 1.0)


def estimated_observables(practical, fm, exact=False):
    f_sqrt, f_inv = _factors(fm, exact)
    return Observables(c1=practical.c1 / f_sqrt, c2=practical.c2 / f_sqrt,
                       n_B=(practical.n_B + 1.0) / f_inv - 1.0)


def estimated_channel(T_c, xi_c, V_A, fm):
    """Channel ``(T_e, xi_e)`` inferred by parties who normalize with the stale SNU."""
    v = _vk(fm)
    f_sqrt, f_inv = taylor_factors(v)
    T_e = T_c / f_sqrt ** 2
    ratio = f_sqrt ** 2 / f_inv
    xi_e = ratio * xi_c - (1.0 - ratio) * V_A - (1.0 - 1.0 / f_inv) * 2.0 / T_e
    return T_e, xi_e


def practical_channel(T_c, xi_e, V_A, fm):
    """Practical excess noise ``xi_c`` whose stale-SNU estimate is ``xi_e`` at transmittance ``T_c``.

    Raises:
        InfeasibleScenarioError: if no non-negative ``xi_c`` exists.
    """
    v = _vk(fm)
    f_sqrt, f_inv = taylor_factors(v)
    T_e = T_c / f_sqrt ** 2
    ratio = f_sqrt ** 2 / f_inv
    # estimated_channel is affine in xi_c with slope `ratio`; solve it directly
    xi_c = (xi_e + (1.0 - ratio) * V_A + (1.0 - 1.0 / f_inv) * 2.0 / T_e) / ratio
    if xi_c < 0:
        raise InfeasibleScenarioError(
            f"xi_e={xi_e} at T_c={T_c}, V_k={v} needs negative practical excess noise {xi_c:.3g}")
    return xi_c


@dataclass(frozen=True)
class AttackRates:
    T_c: float
    xi_c: float
    T_e: float
    xi_e: float
    estimated: object
    practical: object

    @property
    def estimated_rate(self):
        return self.estimated.rate

    @property
    def practical_rate(self):
        return self.practical.rate


def attack_scenario_rates(constellation, d_km, xi_e, fm, beta, dim=None, iab_variant="discrete",
                          loss_db_per_km=None):
    """Key rate the parties believe in versus the rate actually secure.

    The distance fixes the true transmittance ``T_c``; ``xi_e`` is the
    excess noise the parties estimate.
    """
    T_c = distance_to_T(d_km) if loss_db_per_km is None else distance_to_T(d_km, loss_db_per_km)
    return attack_rates_at(constellation, T_c, xi_e, fm, beta, dim=dim, iab_variant=iab_variant)


def attack_rates_at(constellation, T_c, xi_e, fm, beta, dim=None, iab_variant="discrete"):
    pq = protocol_quantities(constellation, dim)
    V_A = constellation.modulation_variance
    xi_c = practical_channel(T_c, xi_e, V_A, fm)
    T_e, _ = estimated_channel(T_c, xi_c, V_A, fm)
    est = key_rate(constellation, ChannelParams(T_e, xi_e), beta, iab_variant=iab_variant, pq=pq)
    if _vk(fm) == 0:
        prac = est
    else:
        prac = key_rate(constellation, ChannelParams(T_c, xi_c), beta, iab_variant=iab_variant, pq=pq)
    return AttackRates(T_c=T_c, xi_c=xi_c, T_e=T_e, xi_e=xi_e, estimated=est, practical=prac)


def practical_rate(constellation, T_c, xi_e, V_k, beta, dim=None, iab_variant="discrete"):
    pq = protocol_quantities(constellation, dim)
    xi_c = practical_channel(T_c, xi_e, constellation.modulation_variance, V_k)
    return key_rate(constellation, ChannelParams(T_c, xi_c), beta, iab_variant=iab_variant, pq=pq).rate


def min_vk(constellation, d_km, xi_e, beta, v_max=0.08, tol=1e-7, grid_points=12, dim=None,
           iab_variant="discrete", loss_db_per_km=None, rtol=1e-4):
    """Smallest ``V_k`` at which the practical key rate drops to zero or below.

    Returns 0 when the scenario already has no key without attack. The
    bracket is narrowed to ``min(tol, rtol * V_k)`` so thresholds far below
    ``tol`` are still resolved.

    Raises:
        BracketError: practical rate is still positive at ``v_max``.
        NonMonotoneError: the practical rate increases somewhere on a coarse
            grid over ``[0, v_max]``; the grid is attached to the error.
    """
    T_c = distance_to_T(d_km) if loss_db_per_km is None else distance_to_T(d_km, loss_db_per_km)

    def rate(v):
        return practical_rate(constellation, T_c, xi_e, v, beta, dim=dim, iab_variant=iab_variant)

    grid = np.linspace(0.0, v_max, grid_points)
    values = np.array([rate(v) for v in grid])
    if values[0] <= 0:
        return 0.0
    if values[-1] > 0:
        raise BracketError(f"practical rate {values[-1]:.3g} still positive at V_k={v_max} (d={d_km} km)")
    if np.any(np.diff(values) > 1e-12):
        raise NonMonotoneError(f"practical rate not monotone in V_k at d={d_km} km", grid, values)
    idx = int(np.argmax(values <= 0))
    lo, hi = grid[idx - 1], grid[idx]
    while hi - lo > min(tol, rtol * hi) and hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if rate(mid) > 0:
            lo = mid
        else:
            hi = mid
    return float(hi)
