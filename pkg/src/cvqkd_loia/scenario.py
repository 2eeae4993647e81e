"""Scenario configs, sweeps and deterministic CSV/manifest output.

A scenario file is flat YAML::

    schema_version: 1
    name: qpsk-rate
    constellation: qpsk          # qpsk | pcs-qam | custom
    V_A: 0.456
    xi_e: 0.007                  # or xi_c; scalar or list
    beta: 0.95
    V_k: [0, 5.0e-4, 1.0e-3, 2.0e-3]
    d_start: 0
    d_stop: 40
    d_step: 0.5                  # or distances: [...]

Optional keys are listed in :data:`OPTIONAL_KEYS` with their defaults.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import math
import pathlib

import numpy as np
import yaml

from ._version import __version__
from .attack import (FLUCTUATION_KINDS, FluctuationModel, attack_rates_at, estimated_channel, min_vk)
from .constellation import constellation_from_config, protocol_quantities
from .errors import (BracketError, CVQKDError, ConfigError, InfeasibleScenarioError, NonMonotoneError,
                     UnphysicalError)
from .keyrate import FIBER_LOSS_DB_PER_KM, IAB_VARIANTS, ChannelParams, distance_to_T, key_rate

SCHEMA_VERSION = 1
CONSTELLATION_KEYS = ("constellation", "V_A", "M", "nu", "points")
OPTIONAL_KEYS = {
    "name": "scenario",
    "fluctuation": "uniform",
    "dim": None,
    "iab_variant": "discrete",
    "seed": 0,
    "loss_db_per_km": FIBER_LOSS_DB_PER_KM,
    "v_max": 0.08,
    "tol": 1e-7,
    "V_k": None,
}
GRID_KEYS = ("d_start", "d_stop", "d_step", "distances")
KNOWN_KEYS = set(OPTIONAL_KEYS) | set(CONSTELLATION_KEYS) | set(GRID_KEYS) | {
    "schema_version", "xi_e", "xi_c", "beta"}
MC_DEFAULTS = {
    "name": "mc-bias", "T": 0.5, "xi": 0.01, "V_k": [5e-4, 2e-3], "fluctuation": "uniform",
    "N": 2_000_000, "trials": 50, "raw_model": "stationary", "seed": 0, "N_cal": 100,
    "repetitions": 1_000_000, "A": 1.0, "I_LO": 1.0, "dim": None,
}

SWEEP_COLUMNS = ("scenario_id", "xi_input", "d_km", "V_k", "T_c", "T_e", "xi_c", "xi_e",
                 "estimated_rate", "practical_rate", "iab_variant", "status")
MIN_VK_COLUMNS = ("scenario_id", "xi_e", "d_km", "T_c", "min_vk", "estimated_rate_at_min",
                  "practical_dead", "estimated_alive", "iab_variant", "status")

COLUMN_DOCS = {
    "scenario_id": ("", "scenario name followed by the index of the excess-noise value"),
    "xi_input": ("SNU", "excess noise given in the config (estimated or practical, see manifest)"),
    "d_km": ("km", "fiber length"),
    "V_k": ("", "variance of the LO attack factor"),
    "T_c": ("", "true channel transmittance"),
    "T_e": ("", "transmittance inferred with the stale SNU"),
    "xi_c": ("SNU", "practical excess noise"),
    "xi_e": ("SNU", "excess noise inferred with the stale SNU"),
    "estimated_rate": ("bits/symbol", "key rate the parties compute, unclamped"),
    "practical_rate": ("bits/symbol", "key rate actually secure, unclamped"),
    "iab_variant": ("", "mutual-information model"),
    "status": ("", "ok, infeasible, unphysical, dead, bracket, nonmonotone"),
    "min_vk": ("", "smallest V_k at which the practical rate is <= 0"),
    "estimated_rate_at_min": ("bits/symbol", "estimated rate evaluated at V_k = min_vk"),
    "practical_dead": ("", "1 when the practical rate is <= 0 at min_vk"),
    "estimated_alive": ("", "1 when the estimated rate is still > 0 at min_vk"),
}


@dataclass(frozen=True)
class Scenario:
    """Validated scenario. ``xi_values`` holds ``xi_e`` or ``xi_c`` per ``xi_kind``."""

    name: str
    constellation_cfg: dict = field(hash=False)
    xi_kind: str
    xi_values: tuple
    beta: float
    V_k: tuple
    distances: tuple
    fluctuation: str = "uniform"
    dim: int = None
    iab_variant: str = "discrete"
    seed: int = 0
    loss_db_per_km: float = FIBER_LOSS_DB_PER_KM
    v_max: float = 0.08
    tol: float = 1e-7

    @property
    def constellation(self):
        return constellation_from_config(self.constellation_cfg)

    def with_overrides(self, **kw):
        data = self.to_config()
        data.update({k: v for k, v in kw.items() if v is not None})
        return Scenario.from_config(data)

    def to_config(self):
        cfg = {"schema_version": SCHEMA_VERSION, "name": self.name, "beta": self.beta,
               self.xi_kind: list(self.xi_values), "V_k": list(self.V_k), "distances": list(self.distances),
               "fluctuation": self.fluctuation, "dim": self.dim, "iab_variant": self.iab_variant,
               "seed": self.seed, "loss_db_per_km": self.loss_db_per_km, "v_max": self.v_max, "tol": self.tol}
        cfg.update(self.constellation_cfg)
        return cfg

    @classmethod
    def from_config(cls, cfg):
        return parse_scenario(cfg)


def _as_list(value, key):
    if isinstance(value, (list, tuple)):
        out = list(value)
    else:
        out = [value]
    try:
        return [float(v) for v in out]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number or a list of numbers") from exc


def _distances(cfg):
    if "distances" in cfg:
        if any(k in cfg for k in ("d_start", "d_stop", "d_step")):
            raise ConfigError("give either distances or d_start/d_stop/d_step, not both")
        d = _as_list(cfg["distances"], "distances")
    elif all(k in cfg for k in ("d_start", "d_stop", "d_step")):
        start, stop, step = (float(cfg[k]) for k in ("d_start", "d_stop", "d_step"))
        if step <= 0:
            raise ConfigError("d_step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        # integer multiples avoid accumulated rounding in the grid
        d = [start + i * step for i in range(n)]
    else:
        raise ConfigError("missing distance grid (distances, or d_start/d_stop/d_step)")
    if not d:
        raise ConfigError("distance grid is empty")
    if any(x < 0 or not math.isfinite(x) for x in d):
        raise ConfigError("distances must be finite and >= 0")
    if any(b <= a for a, b in zip(d, d[1:])):
        raise ConfigError("distance grid must be strictly increasing")
    return tuple(d)


def parse_scenario(cfg, require_vk=True):
    """Validate a flat mapping and build a :class:`Scenario`.

    Raises:
        ConfigError: on any schema problem.
    """
    _check_version_and_keys(cfg, KNOWN_KEYS)
    const_cfg = _constellation_cfg(cfg)

    has_e, has_c = "xi_e" in cfg, "xi_c" in cfg
    if has_e == has_c:
        raise ConfigError("give exactly one of xi_e and xi_c")
    xi_kind = "xi_e" if has_e else "xi_c"
    xi_values = _as_list(cfg[xi_kind], xi_kind)
    if not xi_values or any(x < 0 or not math.isfinite(x) for x in xi_values):
        raise ConfigError(f"{xi_kind} values must be finite and >= 0")

    if "beta" not in cfg:
        raise ConfigError("missing beta")
    try:
        beta = float(cfg["beta"])
        for key in ("loss_db_per_km", "v_max", "tol"):
            opts_val = float(cfg.get(key, OPTIONAL_KEYS[key]))
            if not (opts_val > 0 and math.isfinite(opts_val)):
                raise ConfigError(f"{key} must be positive")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric value: {exc}") from exc
    if not 0 < beta <= 1:
        raise ConfigError("beta must be in (0, 1]")

    opts = {k: cfg.get(k, v) for k, v in OPTIONAL_KEYS.items()}
    vk = opts.pop("V_k")
    if vk is None:
        if require_vk:
            raise ConfigError("missing V_k")
        vk = [0.0]
    vk = _as_list(vk, "V_k")
    if not vk:
        raise ConfigError("V_k list is empty")
    if any(v < 0 or not math.isfinite(v) for v in vk):
        raise ConfigError("V_k values must be finite and >= 0")
    if opts["fluctuation"] not in FLUCTUATION_KINDS:
        raise ConfigError(f"fluctuation must be one of {FLUCTUATION_KINDS}")
    if opts["iab_variant"] not in IAB_VARIANTS:
        raise ConfigError(f"iab_variant must be one of {IAB_VARIANTS}")
    for v in vk:
        try:
            FluctuationModel(opts["fluctuation"], v)
        except CVQKDError as exc:
            raise ConfigError(str(exc)) from exc
    if opts["dim"] is not None:
        opts["dim"] = int(opts["dim"])
        if opts["dim"] < 2:
            raise ConfigError("dim must be >= 2")
    try:
        seed = int(opts["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed must be an integer") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")

    return Scenario(name=str(opts["name"]), constellation_cfg=const_cfg, xi_kind=xi_kind,
                    xi_values=tuple(xi_values), beta=beta, V_k=tuple(vk), distances=_distances(cfg),
                    fluctuation=opts["fluctuation"], dim=opts["dim"], iab_variant=opts["iab_variant"],
                    seed=seed, loss_db_per_km=float(opts["loss_db_per_km"]), v_max=float(opts["v_max"]),
                    tol=float(opts["tol"]))


def _check_version_and_keys(cfg, known):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    unknown = sorted(set(cfg) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def _constellation_cfg(cfg):
    const_cfg = {k: cfg[k] for k in CONSTELLATION_KEYS if k in cfg}
    try:
        constellation_from_config(const_cfg)
    except (CVQKDError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad constellation: {exc}") from exc
    return const_cfg


def parse_mc_config(cfg):
    """Validate a Monte-Carlo bias config; returns a plain dict with defaults filled in.

    Keys besides the constellation ones: ``T``, ``xi``, ``V_k`` (list),
    ``fluctuation``, ``N``, ``trials``, ``raw_model``, ``seed``, ``N_cal``,
    ``repetitions``, ``A``, ``I_LO``, ``dim``.
    """
    _check_version_and_keys(cfg, set(MC_DEFAULTS) | set(CONSTELLATION_KEYS) | {"schema_version"})
    out = dict(MC_DEFAULTS)
    out.update({k: v for k, v in cfg.items() if k in MC_DEFAULTS})
    out["constellation_cfg"] = _constellation_cfg(cfg)
    try:
        out["T"], out["xi"] = float(out["T"]), float(out["xi"])
        out["V_k"] = _as_list(out["V_k"], "V_k")
        for key in ("N", "trials", "N_cal", "repetitions", "seed"):
            out[key] = int(out[key])
        out["A"], out["I_LO"] = float(out["A"]), float(out["I_LO"])
        if out["dim"] is not None:
            out["dim"] = int(out["dim"])
        ChannelParams(out["T"], out["xi"])
        for v in out["V_k"]:
            FluctuationModel(out["fluctuation"], v)
    except (CVQKDError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if out["raw_model"] not in ("stationary", "scaled"):
        raise ConfigError("raw_model must be stationary or scaled")
    if out["N"] < 1 or out["trials"] < 2 or out["N_cal"] < 4 or out["repetitions"] < 2:
        raise ConfigError("need N >= 1, trials >= 2, N_cal >= 4, repetitions >= 2")
    if not out["V_k"]:
        raise ConfigError("V_k list is empty")
    return out


def parse_constellation_only(cfg):
    """Config for the operator dump: constellation keys plus optional ``dim`` and ``name``."""
    _check_version_and_keys(cfg, set(CONSTELLATION_KEYS) | {"schema_version", "dim", "name"})
    const_cfg = _constellation_cfg(cfg)
    dim = cfg.get("dim")
    if dim is not None:
        try:
            dim = int(dim)
        except (TypeError, ValueError) as exc:
            raise ConfigError("dim must be an integer") from exc
        if dim < 2:
            raise ConfigError("dim must be >= 2")
    return str(cfg.get("name", "constraints")), constellation_from_config(const_cfg), dim


def load_config(path):
    """Read a YAML scenario file into a flat dict.

    Raises:
        ConfigError: unreadable file or invalid YAML.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_scenario(path, require_vk=True):
    return parse_scenario(load_config(path), require_vk=require_vk)


@dataclass
class SweepResult:
    kind: str
    scenario: Scenario
    columns: tuple
    rows: list

    def column(self, name):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_csv(self):
        return format_csv(self.columns, self.rows)

    def manifest(self, csv_name):
        return build_manifest(self, csv_name)


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def format_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _sweep_point(args):
    scn, i_xi, d, v = args
    c = scn.constellation
    fm = FluctuationModel(scn.fluctuation, v)
    T_c = distance_to_T(d, scn.loss_db_per_km)
    xi = scn.xi_values[i_xi]
    sid = f"{scn.name}-{i_xi}"
    nan = float("nan")
    try:
        if scn.xi_kind == "xi_e":
            res = attack_rates_at(c, T_c, xi, fm, scn.beta, dim=scn.dim, iab_variant=scn.iab_variant)
            return (sid, xi, d, v, T_c, res.T_e, res.xi_c, res.xi_e, res.estimated_rate, res.practical_rate,
                    scn.iab_variant, "ok")
        T_e, xi_e = estimated_channel(T_c, xi, c.modulation_variance, fm)
        if xi_e < 0:
            raise InfeasibleScenarioError(f"estimated excess noise {xi_e:.3g} < 0")
        pq = protocol_quantities(c, scn.dim)
        prac = key_rate(c, ChannelParams(T_c, xi), scn.beta, iab_variant=scn.iab_variant, pq=pq)
        est = prac if v == 0 else key_rate(c, ChannelParams(T_e, xi_e), scn.beta,
                                           iab_variant=scn.iab_variant, pq=pq)
        return (sid, xi, d, v, T_c, T_e, xi, xi_e, est.rate, prac.rate, scn.iab_variant, "ok")
    except InfeasibleScenarioError:
        status = "infeasible"
    except UnphysicalError:
        status = "unphysical"
    return (sid, xi, d, v, T_c, nan, nan, nan, nan, nan, scn.iab_variant, status)


def _min_vk_point(args):
    scn, i_xi, d = args
    c = scn.constellation
    xi = scn.xi_values[i_xi]
    T_c = distance_to_T(d, scn.loss_db_per_km)
    sid = f"{scn.name}-{i_xi}"
    nan = float("nan")
    try:
        m = min_vk(c, d, xi, scn.beta, v_max=scn.v_max, tol=scn.tol, dim=scn.dim,
                   iab_variant=scn.iab_variant, loss_db_per_km=scn.loss_db_per_km)
    except BracketError:
        return (sid, xi, d, T_c, nan, nan, False, False, scn.iab_variant, "bracket")
    except NonMonotoneError:
        return (sid, xi, d, T_c, nan, nan, False, False, scn.iab_variant, "nonmonotone")
    except (InfeasibleScenarioError, UnphysicalError):
        return (sid, xi, d, T_c, nan, nan, False, False, scn.iab_variant, "infeasible")
    if m == 0.0:
        zero = attack_rates_at(c, T_c, xi, FluctuationModel(scn.fluctuation, 0.0), scn.beta, dim=scn.dim,
                               iab_variant=scn.iab_variant)
        return (sid, xi, d, T_c, 0.0, zero.estimated_rate, True, zero.estimated_rate > 0,
                scn.iab_variant, "dead")
    res = attack_rates_at(c, T_c, xi, m, scn.beta, dim=scn.dim, iab_variant=scn.iab_variant)
    return (sid, xi, d, T_c, m, res.estimated_rate, res.practical_rate <= 0, res.estimated_rate > 0,
            scn.iab_variant, "ok")


def _run(fn, tasks, jobs):
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [fn(t) for t in tasks]


def run_sweep(scn, jobs=1):
    """Cartesian sweep over ``xi x distance x V_k``; failing points become status rows."""
    tasks = [(scn, i, d, v) for i in range(len(scn.xi_values)) for d in scn.distances for v in scn.V_k]
    rows = _run(_sweep_point, tasks, jobs)
    return SweepResult("sweep", scn, SWEEP_COLUMNS, rows)


def run_min_vk_sweep(scn, jobs=1):
    """Minimal attack variance per ``(xi_e, d)``. Only ``xi_e`` scenarios make sense here."""
    if scn.xi_kind != "xi_e":
        raise ConfigError("min-vk needs xi_e, the excess noise the parties estimate")
    tasks = [(scn, i, d) for i in range(len(scn.xi_values)) for d in scn.distances]
    rows = _run(_min_vk_point, tasks, jobs)
    return SweepResult("min-vk", scn, MIN_VK_COLUMNS, rows)


def build_manifest(result, csv_name):
    scn = result.scenario
    cols = [{"name": c, "unit": COLUMN_DOCS[c][0], "description": COLUMN_DOCS[c][1]} for c in result.columns]
    if result.kind == "sweep":
        plot = {"x": "d_km", "y": ["estimated_rate", "practical_rate"], "group_by": ["scenario_id", "V_k"],
                "style": {"estimated_rate": "solid", "practical_rate": "dashed"}, "yscale": "log"}
    else:
        plot = {"x": "d_km", "y": ["min_vk"], "group_by": ["scenario_id"], "yscale": "linear"}
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": result.kind,
        "csv": csv_name,
        "columns": cols,
        "xi_input_kind": scn.xi_kind,
        "iab_variant": scn.iab_variant,
        "config": scn.to_config(),
        "plot": plot,
        "package_version": __version__,
    }


def write_result(result, out_dir, stem=None):
    """Write ``<stem>.csv`` and ``<stem>.manifest.json``; returns both paths."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{result.scenario.name}_{result.kind}"
    csv_path = out / f"{stem}.csv"
    man_path = out / f"{stem}.manifest.json"
    csv_path.write_text(result.to_csv(), encoding="utf-8", newline="")
    man_path.write_text(json.dumps(result.manifest(csv_path.name), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    return csv_path, man_path
