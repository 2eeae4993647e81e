"""Monte-Carlo simulation of heterodyne parameter estimation under LO fluctuations.

Generative model, per pulse ``i``:

* Alice draws ``alpha_i`` from the constellation.
* Bob's heterodyne quadratures are ``q, p ~ N(2 sqrt(T) Re/Im alpha_i, 2 + T xi)``
  in shot-noise units, and ``y_i = (q + i p) / 2``.
* The attack factor ``k_i`` is drawn from the fluctuation model.

Two raw-record models are available. ``"stationary"`` (the default) keeps
Bob's recorded data at ``sqrt(u_S) y_i`` whatever ``k_i`` is. The true
shot-noise level of pulse ``i`` is still ``k_i u_S``, so dividing by it gives
the practical parameters. The stale-SNU estimates then differ from the
practical ones by exactly ``E[1/sqrt(k)]`` and ``E[1/k]``.
``"scaled"`` records ``sqrt(k_i u_S) y_i``, i.e. the detector output follows
the LO. Per-pulse normalization then recovers ``y_i`` itself, and the
stale/true ratios become ``1/E[sqrt(k)]`` and ``1/E[k] = 1``.

Linear statistics are normalized by ``sqrt(u_S)`` and quadratic ones by ``u_S``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .attack import FluctuationModel, taylor_factors
from .constellation import protocol_quantities
from .errors import InsufficientPowerError, InvalidInputError
from .keyrate import channel_observables

RAW_MODELS = ("stationary", "scaled")
RATIO_NAMES = ("c1", "c2", "nB+1")


def make_rng(seed, stream=0):
    """Counter-based generator; ``(seed, stream)`` pairs give independent reproducible streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)])))


@dataclass(frozen=True)
class SymbolBatch:
    N: int
    indices: np.ndarray
    alphas: np.ndarray
    y_raw: np.ndarray
    k_samples: np.ndarray
    u_S: float
    seed: int
    stream: int = 0
    raw_model: str = "stationary"

    def true_snu(self):
        """Per-pulse shot-noise unit ``k_i u_S``."""
        return self.k_samples * self.u_S


@dataclass(frozen=True)
class EstimatorOutputs:
    c1_hat: float
    c2_hat: float
    nB_hat: float
    u_S_hat: float


def simulate_batch(constellation, ch, fm, cal, N, seed, stream=0, raw_model="stationary"):
    """Draw ``N`` pulses; see the module docstring for the model."""
    if N < 2:
        raise InvalidInputError("need at least two pulses")
    if raw_model not in RAW_MODELS:
        raise InvalidInputError(f"unknown raw model {raw_model!r}")
    rng = make_rng(seed, stream)
    idx = rng.choice(constellation.size, size=N, p=constellation.probs)
    alphas = constellation.alphas[idx]
    sd = math.sqrt(2.0 + ch.T * ch.xi)
    mean = 2.0 * math.sqrt(ch.T) * alphas
    q = mean.real + sd * rng.standard_normal(N)
    p = mean.imag + sd * rng.standard_normal(N)
    y = 0.5 * (q + 1j * p)
    k = fm.sample(rng, N)
    u_S = cal.u_S
    if raw_model == "stationary":
        y_raw = math.sqrt(u_S) * y
    else:
        y_raw = np.sqrt(k * u_S) * y
    return SymbolBatch(N=N, indices=idx, alphas=alphas, y_raw=y_raw, k_samples=k, u_S=u_S,
                       seed=seed, stream=stream, raw_model=raw_model)


def calibrate_snu(cal, N_cal, seed, size=None, stream=0, chunk=200_000):
    """SNU estimate ``mean(v^2)`` from ``N_cal`` vacuum quadrature samples of variance ``u_S``.

    With ``size`` set, returns that many independent estimates.
    """
    if N_cal < 4:
        raise InvalidInputError("calibration needs at least 4 samples")
    rng = make_rng(seed, stream)
    sd = math.sqrt(cal.u_S)
    if size is None:
        v = sd * rng.standard_normal(N_cal)
        return float(np.mean(v * v))
    out = np.empty(size)
    for start in range(0, size, chunk):
        n = min(chunk, size - start)
        v = sd * rng.standard_normal((n, N_cal))
        out[start:start + n] = np.mean(v * v, axis=1)
    return out


def interleave(z):
    """Complex vector ``z`` as ``[Re z_1, Im z_1, Re z_2, Im z_2, ...]``."""
    z = np.asarray(z, dtype=complex)
    return np.column_stack([z.real, z.imag]).ravel()


def estimate(batch, pq, u_S_used):
    """Estimators of ``c1``, ``c2`` and ``n_B`` from one batch.

    ``u_S_used`` is the SNU the parties normalize with: a scalar (the
    calibrated value) or one value per pulse. The prefactors ``sqrt(2)/N``
    and ``sqrt(2)/(2N)`` are applied to sums over the interleaved real
    sequences. ``x`` are Alice's quadrature symbols ``2 alpha`` (variance
    ``V_A``) and ``a`` are the first moments ``<alpha|a_tau|alpha>``.
    """
    N = batch.N
    u = np.broadcast_to(np.asarray(u_S_used, dtype=float), (N,))
    y_lin = interleave(batch.y_raw / np.sqrt(u))
    a = interleave(np.asarray(pq.first_moments)[batch.indices])
    x = interleave(2.0 * batch.alphas)
    c1 = math.sqrt(2.0) / N * float(a @ y_lin)
    c2 = math.sqrt(2.0) / (2.0 * N) * float(x @ y_lin)
    nB1 = float(np.sum(np.abs(batch.y_raw) ** 2 / u)) / N
    return EstimatorOutputs(c1_hat=c1, c2_hat=c2, nB_hat=nB1 - 1.0, u_S_hat=float(np.mean(u)))


def fitted_prefactors(constellation, ch, cal, N, seed, dim=None):
    """Ratio of each estimator (no attack, exact SNU) to its analytic value.

    The estimator prefactors are kept as written; any constant-factor
    mismatch with the analytic observables shows up here rather than being
    rescaled away.

    Returns:
        dict ``name -> (factor, standard_error)``.
    """
    pq = protocol_quantities(constellation, dim)
    obs = channel_observables(constellation, ch, pq=pq)
    batch = simulate_batch(constellation, ch, FluctuationModel("uniform", 0.0), cal, N, seed)
    y = batch.y_raw / math.sqrt(cal.u_S)
    per_pulse = {
        "c1": math.sqrt(2.0) * np.real(np.conj(pq.first_moments[batch.indices]) * y),
        "c2": math.sqrt(2.0) / 2.0 * np.real(np.conj(2.0 * batch.alphas) * y),
        "nB+1": np.abs(y) ** 2,
    }
    analytic = {"c1": obs.c1, "c2": obs.c2, "nB+1": obs.n_B + 1.0}
    return {name: (float(v.mean()) / analytic[name], float(v.std(ddof=1)) / math.sqrt(N) / abs(analytic[name]))
            for name, v in per_pulse.items()}


@dataclass(frozen=True)
class BiasRow:
    """One measured ratio (true-SNU estimate over stale-SNU estimate)."""

    name: str
    measured: float
    stderr: float
    predicted: float
    predicted_taylor: float

    @property
    def z(self):
        if self.stderr == 0:
            return 0.0 if self.measured == self.predicted else math.inf
        return (self.measured - self.predicted) / self.stderr

    def within(self, sigmas=3.0):
        return abs(self.measured - self.predicted) <= sigmas * self.stderr + 1e-15


@dataclass(frozen=True)
class BiasReport:
    V_k: float
    kind: str
    raw_model: str
    N: int
    trials: int
    rows: tuple

    def row(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def passed(self, sigmas=3.0):
        return all(r.within(sigmas) for r in self.rows)


def predicted_ratios(fm, raw_model="stationary"):
    """Expected true/stale ratios for ``(c1, c2, n_B + 1)`` under a raw-record model."""
    if raw_model == "stationary":
        s, i = fm.moment(-0.5), fm.moment(-1)
    else:
        s, i = 1.0 / fm.moment(0.5), 1.0 / fm.moment(1)
    return {"c1": s, "c2": s, "nB+1": i}


def _trial_ratios(args):
    constellation, ch, fm, cal, N, seed, stream, raw_model, first_moments = args
    batch = simulate_batch(constellation, ch, fm, cal, N, seed, stream=stream, raw_model=raw_model)
    pq = _MomentsOnly(first_moments)
    stale = estimate(batch, pq, cal.u_S)
    true = estimate(batch, pq, batch.true_snu())
    return (true.c1_hat / stale.c1_hat, true.c2_hat / stale.c2_hat, (true.nB_hat + 1.0) / (stale.nB_hat + 1.0))


@dataclass(frozen=True)
class _MomentsOnly:
    first_moments: np.ndarray


def _power_check(constellation, ch, fm, cal, N, trials, seed, pq, raw_model):
    pilot = simulate_batch(constellation, ch, FluctuationModel(fm.kind, 0.0), cal, min(N, 200_000), seed,
                           stream=2**32 - 1)
    y = pilot.y_raw / math.sqrt(cal.u_S)
    stats = {
        "c1": np.real(np.conj(pq.first_moments[pilot.indices]) * y),
        "c2": np.real(np.conj(pilot.alphas) * y),
        "nB+1": np.abs(y) ** 2,
    }
    pred = predicted_ratios(fm, raw_model)
    var_s = fm.moment(-1.0) - fm.moment(-0.5) ** 2
    var_i = fm.moment(-2.0) - fm.moment(-1.0) ** 2
    for name, s in stats.items():
        var_k = var_i if name == "nB+1" else var_s
        se = math.sqrt(var_k * float(np.mean(s * s)) / (float(np.mean(s)) ** 2 * N * trials))
        if abs(pred[name] - 1.0) <= 3.0 * se:
            raise InsufficientPowerError(
                f"{name}: predicted bias {pred[name] - 1.0:.3g} is within 3 standard errors ({se:.3g}); "
                f"increase N*trials above {N * trials}")


def verify_bias(constellation, ch, fm, cal, N, trials, seed, raw_model="stationary", dim=None, jobs=1,
                check_power=True):
    """Measure true-SNU / stale-SNU estimator ratios over independent trials.

    Each trial uses its own RNG stream ``(seed, trial)`` so results do not
    depend on ``jobs``.

    Raises:
        InsufficientPowerError: for ``V_k > 0`` when the predicted bias would
            not exceed three standard errors.
    """
    if trials < 2:
        raise InvalidInputError("need at least two trials for a standard error")
    pq = protocol_quantities(constellation, dim)
    if check_power and fm.V_k > 0 and raw_model == "stationary":
        _power_check(constellation, ch, fm, cal, N, trials, seed, pq, raw_model)
    moments = np.array(pq.first_moments)
    tasks = [(constellation, ch, fm, cal, N, seed, t, raw_model, moments) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            ratios = np.array(list(pool.map(_trial_ratios, tasks)))
    else:
        ratios = np.array([_trial_ratios(t) for t in tasks])
    pred = predicted_ratios(fm, raw_model)
    ts, ti = taylor_factors(fm.V_k)
    taylor = {"c1": ts, "c2": ts, "nB+1": ti}
    rows = []
    for j, name in enumerate(RATIO_NAMES):
        col = ratios[:, j]
        rows.append(BiasRow(name=name, measured=float(col.mean()),
                            stderr=float(col.std(ddof=1)) / math.sqrt(trials),
                            predicted=pred[name], predicted_taylor=taylor[name]))
    return BiasReport(V_k=fm.V_k, kind=fm.kind, raw_model=raw_model, N=N, trials=trials, rows=tuple(rows))


@dataclass(frozen=True)
class FiniteSizeReport:
    N_cal: int
    repetitions: int
    inv_sqrt_mean: float
    inv_sqrt_stderr: float
    inv_mean: float
    inv_stderr: float

    @property
    def predicted_inv_sqrt(self):
        return 1.0 + 3.0 / (4.0 * self.N_cal)

    @property
    def predicted_inv(self):
        return self.N_cal / (self.N_cal - 2.0)

    @property
    def exact_inv_sqrt(self):
        """``E[sqrt(N / chi2_N)]``; the first-order value above drops ``25/(32 N^2)``."""
        n = self.N_cal
        return math.sqrt(n / 2.0) * math.exp(special.gammaln((n - 1) / 2.0) - special.gammaln(n / 2.0))


def finite_size_factors(cal, N_cal, repetitions, seed):
    """Mean of ``sqrt(u_S / u_S_hat)`` and ``u_S / u_S_hat`` over repeated calibrations.

    These are the factors by which a finite calibration inflates the
    linear (``c1``, ``c2``) and quadratic (``n_B + 1``) estimators.
    """
    u_hat = calibrate_snu(cal, N_cal, seed, size=repetitions)
    r = cal.u_S / u_hat
    s = np.sqrt(r)
    return FiniteSizeReport(N_cal=N_cal, repetitions=repetitions,
                            inv_sqrt_mean=float(s.mean()), inv_sqrt_stderr=float(s.std(ddof=1)) / math.sqrt(repetitions),
                            inv_mean=float(r.mean()), inv_stderr=float(r.std(ddof=1)) / math.sqrt(repetitions))
