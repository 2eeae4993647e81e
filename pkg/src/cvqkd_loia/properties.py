"""Release-gate property suite with optional injected mutations.

Each check returns a :class:`CheckResult`; the suite passes only if every
check does. Mutations patch a library function for the duration of the
run so one can confirm the suite actually catches that class of bug.
"""

from contextlib import ExitStack
from dataclasses import asdict, dataclass
import math
from unittest import mock

import numpy as np

from . import attack, keyrate, oracles, sdp
from .constellation import pcs_qam, protocol_quantities, qpsk
from .errors import CVQKDError
from .estimation import make_rng

PHYS_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seed: int = None

    def __post_init__(self):
        self.passed = bool(self.passed)  # numpy bools do not serialise


def _g_natural_log(x):
    if x <= 0:
        return 0.0
    return (x + 1.0) * math.log(x + 1.0) - x * math.log(x)


def _estimated_channel_sign_flip(T_c, xi_c, V_A, fm):
    v = attack._vk(fm)
    f_sqrt, f_inv = attack.taylor_factors(v)
    T_e = T_c / f_sqrt ** 2
    ratio = f_sqrt ** 2 / f_inv
    xi_e = ratio * xi_c + (1.0 - ratio) * V_A - (1.0 - 1.0 / f_inv) * 2.0 / T_e
    return T_e, xi_e


MUTATIONS = {
    "natural-log-g": ("cvqkd_loia.keyrate.g_function", _g_natural_log),
    "xi-sign-flip": ("cvqkd_loia.attack.estimated_channel", _estimated_channel_sign_flip),
}


def default_constellations():
    return {"qpsk": (qpsk(0.456), (0.007, 0.01)), "qam256": (pcs_qam(256, 0.039, 6.332), (0.029, 0.05))}


def physicality(constellation, points, beta=0.95, pq=None):
    """Worst-case physicality margins of the key-rate pipeline over ``(T, xi)`` points.

    Returns a dict of minima: ``lambda`` (of lambda1, lambda2), ``chi`` and
    ``radicand``.
    """
    pq = pq or protocol_quantities(constellation)
    worst = {"lambda": math.inf, "chi": math.inf, "radicand": math.inf}
    for T, xi in points:
        r = keyrate.key_rate(constellation, keyrate.ChannelParams(T, xi), beta, pq=pq)
        worst["lambda"] = min(worst["lambda"], r.lambda1, r.lambda2)
        worst["chi"] = min(worst["chi"], r.chi_BE)
        worst["radicand"] = min(worst["radicand"], r.radicand)
    return worst


def _grid_points(xis, distances=np.arange(0.0, 101.0, 5.0)):
    return [(keyrate.distance_to_T(d), xi) for xi in xis for d in distances]


def check_holevo_oracle():
    bad = 0
    worst = 0.0
    c = qpsk(0.456)
    pq = protocol_quantities(c)
    for T, xi in _grid_points((0.0, 0.01, 0.05), np.arange(0.0, 101.0, 10.0)):
        r = keyrate.key_rate(c, keyrate.ChannelParams(T, xi), 0.95, pq=pq)
        ref = oracles.holevo_oracle(r.V, r.W, r.Z)
        chi = keyrate.holevo(r.V, r.W, r.Z).chi_BE
        err = abs(chi - ref)
        worst = max(worst, err)
        bad += err > 1e-9
    return CheckResult("holevo-oracle", bad == 0, f"max |chi - oracle| = {worst:.3g}")


def check_channel_roundtrip(seed=0):
    rng = make_rng(seed, 11)
    worst = 0.0
    for _ in range(200):
        T_c = rng.uniform(0.01, 1.0)
        xi_e = rng.uniform(0.0, 0.1)
        V_A = rng.uniform(0.1, 8.0)
        v = rng.uniform(0.0, 0.01)
        try:
            xi_c = attack.practical_channel(T_c, xi_e, V_A, v)
        except CVQKDError:
            continue
        _, back = attack.estimated_channel(T_c, xi_c, V_A, v)
        worst = max(worst, abs(back - xi_e))
    return CheckResult("channel-roundtrip", worst <= 1e-12, f"max |xi_e - forward(inverse(xi_e))| = {worst:.3g}",
                       seed)


def check_zero_attack():
    worst = 0.0
    for T in np.linspace(0.01, 1.0, 50):
        for xi in (0.0, 0.01, 0.05):
            T_e, xi_e = attack.estimated_channel(T, xi, 0.456, 0.0)
            worst = max(worst, abs(T_e - T), abs(xi_e - xi))
    return CheckResult("zero-attack-identity", worst <= 1e-12, f"max deviation {worst:.3g}")


def check_observable_roundtrip(seed=0):
    rng = make_rng(seed, 12)
    worst = 0.0
    for kind in attack.FLUCTUATION_KINDS:
        for v in (0.0, 5e-4, 2e-3, 1e-2):
            fm = attack.FluctuationModel(kind, v)
            for _ in range(20):
                est = keyrate.Observables(*rng.uniform(0.0, 3.0, 3))
                for exact in (False, True):
                    back = attack.estimated_observables(attack.practical_observables(est, fm, exact), fm, exact)
                    worst = max(worst, abs(back.c1 - est.c1), abs(back.c2 - est.c2), abs(back.n_B - est.n_B))
    return CheckResult("observable-roundtrip", worst <= 1e-12, f"max roundtrip error {worst:.3g}", seed)


def check_physicality():
    msgs, ok = [], True
    for label, (c, xis) in default_constellations().items():
        pts = _grid_points(xis)
        # include the attacked channels the sweeps visit
        for xi in xis:
            for d in np.arange(0.0, 101.0, 10.0):
                T_c = keyrate.distance_to_T(d)
                try:
                    xi_c = attack.practical_channel(T_c, xi, c.modulation_variance, 2e-3)
                except CVQKDError:
                    continue
                pts.append((T_c, xi_c))
                pts.append(attack.estimated_channel(T_c, xi_c, c.modulation_variance, 2e-3))
        w = physicality(c, [(T, xi) for T, xi in pts if xi >= 0])
        good = w["lambda"] >= 1 - PHYS_TOL and w["chi"] >= 0 and w["radicand"] >= -PHYS_TOL
        ok &= good
        msgs.append(f"{label}: min lambda {w['lambda']:.12g}, min chi {w['chi']:.3g}, "
                    f"min radicand {w['radicand']:.3g}")
    return CheckResult("physicality", ok, "; ".join(msgs))


def check_identity_radicand():
    worst = 0.0
    for c in (qpsk(0.456), pcs_qam(16, 0.085, 2.0)):
        pq = protocol_quantities(c)
        obs = keyrate.channel_observables(c, keyrate.ChannelParams(1.0, 0.0), pq=pq)
        worst = max(worst, abs(keyrate.z_radicand(obs, pq)))
    return CheckResult("identity-radicand", worst <= 1e-9, f"max |radicand| at T=1, xi=0: {worst:.3g}")


def check_c1_oracle():
    worst = 0.0
    for c in (qpsk(0.456), pcs_qam(16, 0.085, 2.0), pcs_qam(64, 0.05, 4.0)):
        worst = max(worst, abs(keyrate.c1_trace(c) - oracles.c1_purification(c)))
    return CheckResult("c1-oracle", worst <= 1e-9, f"max |trace - purification| = {worst:.3g}")


def check_taylor():
    worst = 0.0
    for kind in attack.FLUCTUATION_KINDS:
        fm = attack.FluctuationModel(kind, 2e-3)
        worst = max(worst, abs(fm.moment(-0.5) - (1 + 3 * fm.V_k / 8)))
    return CheckResult("taylor-accuracy", worst < 1e-5, f"max |E[k^-1/2] - taylor| = {worst:.3g}")


def check_truncation():
    worst = 0.0
    for c, xis in default_constellations().values():
        for T, xi in _grid_points(xis[:1], (0.0, 50.0)):
            worst = max(worst, max(keyrate.truncation_deltas(c, keyrate.ChannelParams(T, xi), 0.95).values()))
    return CheckResult("truncation", worst < 1e-6, f"max delta under dim+8: {worst:.3g}")


def check_sdp_operators():
    c = qpsk(0.456)
    bundle = sdp.build_sdp_constraints(c)
    herm = max(float(np.max(np.abs(m - m.conj().T))) for m in bundle.as_dict().values())
    phi = sdp.entangled_state(c, bundle.dim)
    pq = protocol_quantities(c)
    c2 = keyrate.channel_observables(c, keyrate.ChannelParams(1.0, 0.0), pq=pq).c2
    err = abs(np.vdot(phi, bundle.C2 @ phi).real - 2 * c2)
    return CheckResult("sdp-operators", herm == 0.0 and err < 1e-9,
                       f"hermiticity defect {herm:.3g}, |tr(rho C2) - 2 c2| = {err:.3g}")


def check_fluctuation_mean(seed=0, n=2_000_000):
    msgs, ok = [], True
    for j, kind in enumerate(attack.FLUCTUATION_KINDS):
        fm = attack.FluctuationModel(kind, 2e-3)
        k = fm.sample(make_rng(seed, 100 + j), n)
        se = math.sqrt(fm.V_k / n)
        z = (k.mean() - 1.0) / se
        ok &= abs(z) < 4.0 and bool(np.all(k > 0))
        msgs.append(f"{kind}: z={z:.2f}")
    return CheckResult("fluctuation-mean", ok, ", ".join(msgs), seed)


def check_min_vk_bracket():
    c = qpsk(0.456)
    m = attack.min_vk(c, 10.0, 0.01, 0.95)
    T = keyrate.distance_to_T(10.0)
    lo = attack.practical_rate(c, T, 0.01, m - 1e-6, 0.95)
    hi = attack.practical_rate(c, T, 0.01, m + 1e-6, 0.95)
    return CheckResult("min-vk-bracket", lo > 0 >= hi, f"min V_k={m:.8g}, rate below {lo:.3g}, above {hi:.3g}")


def check_transmittance_drop():
    ok = all(attack.estimated_channel(T, 0.01, 0.456, v)[0] < T
             for T in np.linspace(0.05, 1.0, 20) for v in (1e-6, 5e-4, 2e-3, 1e-2))
    return CheckResult("transmittance-drop", ok, "T_e < T_c at 80 points")


def check_iab_mc(seed=0, samples=1_000_000):
    c = qpsk(0.456)
    ch = keyrate.ChannelParams(keyrate.distance_to_T(10.0), 0.01)
    gh = keyrate.mutual_info(c, ch)
    mc, se = keyrate.mutual_info_mc(c, ch, samples=samples, seed=seed)
    z = (mc - gh) / se
    return CheckResult("iab-quadrature-vs-mc", abs(z) < 3.0, f"z = {z:.2f}", seed)


CHECKS = (check_holevo_oracle, check_channel_roundtrip, check_zero_attack, check_observable_roundtrip,
          check_physicality, check_identity_radicand, check_c1_oracle, check_taylor, check_truncation,
          check_sdp_operators, check_fluctuation_mean, check_min_vk_bracket, check_transmittance_drop,
          check_iab_mc)
SEEDED = {check_channel_roundtrip, check_observable_roundtrip, check_fluctuation_mean, check_iab_mc}


@dataclass
class PropertyReport:
    checks: list
    mutations: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {"passed": self.passed, "mutations": list(self.mutations),
                "checks": [asdict(c) for c in self.checks]}


def run_property_suite(seed=0, mutations=(), only=None):
    """Run every check (or those named in ``only``) with ``mutations`` applied.

    Exceptions raised inside a check count as failures.
    """
    unknown = [m for m in mutations if m not in MUTATIONS]
    if unknown:
        raise KeyError(f"unknown mutations {unknown}; available: {sorted(MUTATIONS)}")
    results = []
    with ExitStack() as stack:
        for m in mutations:
            target, repl = MUTATIONS[m]
            stack.enter_context(mock.patch(target, repl))
        for fn in CHECKS:
            name = fn.__name__.removeprefix("check_").replace("_", "-")
            if only and name not in only:
                continue
            try:
                res = fn(seed) if fn in SEEDED else fn()
            except Exception as exc:  # noqa: BLE001 - any crash is a failed property
                res = CheckResult(name, False, f"{type(exc).__name__}: {exc}", seed if fn in SEEDED else None)
            results.append(res)
    return PropertyReport(results, tuple(mutations))
