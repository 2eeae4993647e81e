"""Discrete-modulation constellations and the protocol quantities derived from them.

Amplitudes are coherent-state amplitudes ``alpha`` in units where the
quadrature operator is ``x = a + a^dagger`` (vacuum variance 1), so the
modulation variance per quadrature is ``V_A = 2 <n>``.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from . import fock
from .errors import InvalidInputError


def mean_photon_from_va(V_A):
    """Mean photon number for modulation variance ``V_A`` (``<n> = V_A / 2``).

    This is the only place the convention lives; swap it here if needed.
    """
    return 0.5 * V_A


def va_from_mean_photon(n):
    return 2.0 * n


@dataclass(frozen=True)
class Constellation:
    """Finite ensemble of coherent states ``{(alpha_k, p_k)}``.

    ``amplitudes`` and ``probabilities`` are tuples so instances are hashable
    and can key caches. Use :attr:`alphas` / :attr:`probs` for arrays.
    """

    amplitudes: tuple
    probabilities: tuple
    label: str = "custom"
    kind: str = "custom"
    params: tuple = field(default=(), compare=False)

    def __post_init__(self):
        amps = tuple(complex(a) for a in self.amplitudes)
        probs = tuple(float(p) for p in self.probabilities)
        if len(amps) == 0 or len(amps) != len(probs):
            raise InvalidInputError("need one probability per amplitude and at least one point")
        if not all(math.isfinite(a.real) and math.isfinite(a.imag) for a in amps):
            raise InvalidInputError("amplitudes must be finite")
        if not all(0.0 < p <= 1.0 for p in probs):
            raise InvalidInputError("probabilities must lie in (0, 1]")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise InvalidInputError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "probabilities", probs)

    @property
    def alphas(self):
        return np.array(self.amplitudes, dtype=complex)

    @property
    def probs(self):
        return np.array(self.probabilities, dtype=float)

    @property
    def size(self):
        return len(self.amplitudes)

    @property
    def mean_photon(self):
        return float(np.sum(self.probs * np.abs(self.alphas) ** 2))

    @property
    def modulation_variance(self):
        return va_from_mean_photon(self.mean_photon)

    @property
    def max_abs2(self):
        return float(np.max(np.abs(self.alphas) ** 2))

    def default_dim(self):
        return fock.default_dim(self.max_abs2)

    def rotated(self, phase):
        """Same ensemble with every amplitude multiplied by ``exp(i phase)``."""
        rot = complex(math.cos(phase), math.sin(phase))
        return Constellation(tuple(a * rot for a in self.amplitudes), self.probabilities,
                             label=f"{self.label} rotated {phase:.6g}", kind="custom")

    def quadrature_factorization(self, tol=1e-12):
        """Split into independent real and imaginary marginals if possible.

        Returns ``((re_levels, re_probs), (im_levels, im_probs))`` when the
        points form a full product grid with ``p(x, p) = p(x) p(p)``, else
        ``None``.
        """
        alphas, probs = self.alphas, self.probs
        re_levels, re_idx = _unique_levels(alphas.real)
        im_levels, im_idx = _unique_levels(alphas.imag)
        if re_levels.size * im_levels.size != alphas.size:
            return None
        grid = np.zeros((re_levels.size, im_levels.size))
        grid[re_idx, im_idx] = probs
        if np.count_nonzero(grid) != alphas.size:
            return None
        p_re, p_im = grid.sum(axis=1), grid.sum(axis=0)
        if np.max(np.abs(np.outer(p_re, p_im) - grid)) > tol:
            return None
        return (re_levels, p_re), (im_levels, p_im)

    def to_config(self):
        """Flat mapping understood by :func:`constellation_from_config`."""
        if self.kind == "qpsk":
            return {"constellation": "qpsk", "V_A": dict(self.params)["V_A"]}
        if self.kind == "pcs-qam":
            p = dict(self.params)
            return {"constellation": "pcs-qam", "V_A": p["V_A"], "M": p["M"], "nu": p["nu"]}
        return {"constellation": "custom",
                "points": [[a.real, a.imag, p] for a, p in zip(self.amplitudes, self.probabilities)]}


def _unique_levels(values, tol=1e-12):
    order = np.argsort(values)
    levels = []
    idx = np.empty(values.size, dtype=int)
    for i in order:
        if not levels or abs(values[i] - levels[-1]) > tol * max(1.0, abs(values[i])):
            levels.append(values[i])
        idx[i] = len(levels) - 1
    return np.array(levels), idx


def from_points(points, label="custom"):
    """Constellation from ``[(alpha, p), ...]``."""
    amps, probs = zip(*points)
    return Constellation(tuple(amps), tuple(probs), label=label)


def qpsk(V_A):
    """Four equiprobable states at odd multiples of pi/4 with ``|alpha|^2 = V_A / 2``."""
    if not (V_A > 0 and math.isfinite(V_A)):
        raise InvalidInputError(f"modulation variance must be positive, got {V_A!r}")
    r = math.sqrt(mean_photon_from_va(V_A))
    amps = tuple(r * complex(math.cos((2 * j + 1) * math.pi / 4), math.sin((2 * j + 1) * math.pi / 4))
                 for j in range(4))
    return Constellation(amps, (0.25,) * 4, label="QPSK", kind="qpsk", params=(("V_A", float(V_A)),))


def pcs_qam(M, nu, V_A):
    """Probabilistically shaped square M-QAM.

    Points sit on the odd-integer grid ``{±1, ±3, ..., ±(sqrt(M)-1)}^2`` with
    probabilities proportional to ``exp(-nu (x^2 + p^2))`` evaluated on that
    unscaled grid. The whole grid is then scaled so that ``2 <n> = V_A``.
    """
    if int(M) != M or M < 4:
        raise InvalidInputError(f"M must be a power of 4, got {M!r}")
    M = int(M)
    side = math.isqrt(M)
    if side * side != M or side & (side - 1):
        raise InvalidInputError(f"M must be a power of 4 (square grid with power-of-two side), got {M}")
    if not (nu > 0 and math.isfinite(nu)):
        raise InvalidInputError(f"shaping parameter nu must be positive, got {nu!r}")
    if not (V_A > 0 and math.isfinite(V_A)):
        raise InvalidInputError(f"modulation variance must be positive, got {V_A!r}")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    x, p = np.meshgrid(levels, levels, indexing="ij")
    x, p = x.ravel(), p.ravel()
    r2 = x * x + p * p
    # shift exponents by the minimum so the largest weight is exactly 1
    weights = np.exp(-nu * (r2 - r2.min()))
    probs = weights / weights.sum()
    if not np.all(np.isfinite(probs)) or not np.all(probs > 0):
        raise InvalidInputError(f"cannot normalize PCS-{M}-QAM with nu={nu}")
    scale = math.sqrt(mean_photon_from_va(V_A) / float(np.sum(probs * r2)))
    amps = scale * (x + 1j * p)
    probs = probs / math.fsum(probs)
    return Constellation(tuple(amps), tuple(probs), label=f"PCS-{M}-QAM(nu={nu:g})", kind="pcs-qam",
                         params=(("M", M), ("nu", float(nu)), ("V_A", float(V_A))))


def constellation_from_config(cfg):
    """Inverse of :meth:`Constellation.to_config`."""
    kind = str(cfg.get("constellation", "")).lower()
    if kind == "qpsk":
        return qpsk(float(cfg["V_A"]))
    if kind in ("pcs-qam", "qam"):
        return pcs_qam(int(cfg["M"]), float(cfg["nu"]), float(cfg["V_A"]))
    if kind == "custom":
        return from_points([(complex(re, im), p) for re, im, p in cfg["points"]])
    raise InvalidInputError(f"unknown constellation kind {cfg.get('constellation')!r}")


@dataclass(frozen=True)
class FockModel:
    """Cached Fock-space objects for one constellation at one cutoff."""

    dim: int
    vectors: np.ndarray
    tau: np.ndarray
    sqrt_tau: np.ndarray
    pinv_sqrt_tau: np.ndarray
    alpha_tau: np.ndarray
    deficit: float


@lru_cache(maxsize=64)
def fock_model(constellation, dim=None, floor=None):
    """Build (and cache) tau, its square roots and ``alpha_tau``."""
    dim = constellation.default_dim() if dim is None else int(dim)
    vecs = fock.coherent_matrix(constellation.alphas, dim)
    probs = constellation.probs
    deficit = 1.0 - float(np.sum(probs * np.sum(np.abs(vecs) ** 2, axis=0)))
    fock.warn_truncation(deficit, dim)
    tau = fock.mixture(vecs, probs)
    sqrt_tau = fock.psd_sqrt(tau)
    pinv = fock.psd_pinv_sqrt(tau, floor)
    a_tau = sqrt_tau @ fock.annihilation(dim) @ pinv
    for arr in (vecs, tau, sqrt_tau, pinv, a_tau):
        arr.setflags(write=False)
    return FockModel(dim, vecs, tau, sqrt_tau, pinv, a_tau, deficit)


@dataclass(frozen=True)
class ProtocolQuantities:
    """Protocol constants entering the analytic bound on the cross correlation.

    Attributes:
        mean_photon: average photon number ``<n>``.
        w: ``sum_k p_k (<a_tau^dag a_tau>_k - |<a_tau>_k|^2)``.
        first_moments: ``<alpha_k| a_tau |alpha_k>`` per constellation point.
        dim: Fock cutoff used.
        deficit: truncated probability mass of tau.
    """

    mean_photon: float
    w: float
    first_moments: np.ndarray
    dim: int
    deficit: float


def protocol_quantities(constellation, dim=None, floor=None):
    model = fock_model(constellation, dim, floor)
    vecs, probs = model.vectors, constellation.probs
    av = model.alpha_tau @ vecs
    first = np.einsum("ik,ik->k", vecs.conj(), av)
    second = np.sum(np.abs(av) ** 2, axis=0)
    w = float(np.sum(probs * (second - np.abs(first) ** 2)))
    if w < -1e-9:
        raise InvalidInputError(f"negative w={w:.3g}; Fock cutoff too small?")
    first.setflags(write=False)
    mean_photon = float(np.sum(probs * np.sum(np.abs(vecs) ** 2 * np.arange(model.dim)[:, None], axis=0)))
    return ProtocolQuantities(mean_photon=mean_photon, w=max(w, 0.0), first_moments=first,
                              dim=model.dim, deficit=model.deficit)
