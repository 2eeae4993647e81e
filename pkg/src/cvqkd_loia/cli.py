"""Command-line entry point: ``cvqkd-loia <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 1 a property or statistical check failed, 2 bad
configuration or usage.
"""

import argparse
import json
import logging
import pathlib
import sys
import time

import numpy as np

from . import scenario as scn_mod
from ._version import __version__
from .attack import CalibrationModel, FluctuationModel
from .constellation import constellation_from_config
from .errors import ConfigError, InsufficientPowerError
from .estimation import finite_size_factors, verify_bias
from .keyrate import IAB_VARIANTS, ChannelParams
from .plotting import plot_result
from .properties import MUTATIONS, run_property_suite
from .sdp import build_sdp_constraints, write_operator_bundle

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
log = logging.getLogger("cvqkd_loia")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="YAML scenario file")
    p.add_argument("--out", default="out", help="output directory (created if missing)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    p.add_argument("--iab-variant", choices=IAB_VARIANTS, default=None,
                   help="mutual-information model; overrides the config")


def build_parser():
    parser = _Parser(prog="cvqkd-loia", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", help="estimated vs practical key rate over distance and V_k")
    _common(p)
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")

    p = sub.add_parser("min-vk", help="minimal V_k that removes all secure key, per distance")
    _common(p)
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("mc-bias", help="Monte-Carlo check of the estimator bias factors")
    _common(p)

    p = sub.add_parser("props", help="run the property suite")
    _common(p, config_required=False)
    p.add_argument("--mutate", action="append", default=[], choices=sorted(MUTATIONS),
                   help="inject a known bug (repeatable) to confirm the suite catches it")

    p = sub.add_parser("constraints-dump", help="write the SDP constraint operators to a text bundle")
    _common(p)
    return parser


def _scenario(args, require_vk=True):
    s = scn_mod.load_scenario(args.config, require_vk=require_vk)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.iab_variant is not None:
        over["iab_variant"] = args.iab_variant
    return s.with_overrides(**over) if over else s


def _emit(result, args):
    csv_path, man_path = scn_mod.write_result(result, args.out)
    print(f"wrote {csv_path} ({len(result.rows)} rows) and {man_path}")
    if not getattr(args, "no_plot", True):
        try:
            png = plot_result(result, csv_path.with_suffix(".png"))
        except ImportError as exc:
            log.warning("%s; skipping figure", exc)
            return
        print(f"wrote {png}")


def cmd_sweep(args):
    s = _scenario(args)
    result = scn_mod.run_sweep(s, jobs=args.jobs)
    _emit(result, args)
    bad = [r for r in result.rows if r[-1] != "ok"]
    if bad:
        log.warning("%d of %d points not evaluated (see status column)", len(bad), len(result.rows))
    return EXIT_OK


def cmd_min_vk(args):
    s = _scenario(args, require_vk=False)
    result = scn_mod.run_min_vk_sweep(s, jobs=args.jobs)
    _emit(result, args)
    return EXIT_OK


def cmd_mc_bias(args):
    cfg = scn_mod.parse_mc_config(scn_mod.load_config(args.config))
    seed = cfg["seed"] if args.seed is None else args.seed
    c = constellation_from_config(cfg["constellation_cfg"])
    ch = ChannelParams(cfg["T"], cfg["xi"])
    cal = CalibrationModel(cfg["A"], cfg["I_LO"])
    cols = ("quantity", "V_k", "fluctuation", "raw_model", "N", "trials", "measured", "stderr",
            "predicted", "predicted_taylor", "z", "passed")
    rows, ok = [], True
    for i, v in enumerate(cfg["V_k"]):
        fm = FluctuationModel(cfg["fluctuation"], v)
        try:
            row_seed = int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])
            rep = verify_bias(c, ch, fm, cal, cfg["N"], cfg["trials"], row_seed,
                              raw_model=cfg["raw_model"], dim=cfg["dim"], jobs=args.jobs)
        except InsufficientPowerError as exc:
            raise ConfigError(str(exc)) from exc
        for r in rep.rows:
            passed = r.within(3.0)
            ok &= passed
            rows.append((r.name, v, fm.kind, rep.raw_model, rep.N, rep.trials, r.measured, r.stderr,
                         r.predicted, r.predicted_taylor, r.z, passed))
    fs = finite_size_factors(cal, cfg["N_cal"], cfg["repetitions"], seed)
    for name, m, se, pred in (("calib_inv_sqrt", fs.inv_sqrt_mean, fs.inv_sqrt_stderr, fs.predicted_inv_sqrt),
                              ("calib_inv", fs.inv_mean, fs.inv_stderr, fs.predicted_inv)):
        z = (m - pred) / se
        ok &= abs(z) <= 3.0
        rows.append((name, 0.0, "", "", fs.N_cal, fs.repetitions, m, se, pred, pred, z, abs(z) <= 3.0))
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg['name']}.csv"
    path.write_text(scn_mod.format_csv(cols, rows), encoding="utf-8", newline="")
    for r in rows:
        print(f"{'PASS' if r[-1] else 'FAIL'} {r[0]:>15} V_k={r[1]:<8g} measured={r[6]:.9f} "
              f"predicted={r[8]:.9f} z={r[10]:+.2f}")
    print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_props(args):
    seed = 0
    if args.config:
        cfg = scn_mod.load_config(args.config)
        unknown = set(cfg) - {"schema_version", "seed", "mutations"}
        if cfg.get("schema_version") != scn_mod.SCHEMA_VERSION or unknown:
            raise ConfigError("props config takes schema_version, seed and mutations only")
        seed = int(cfg.get("seed", 0))
        args.mutate = list(args.mutate) + list(cfg.get("mutations", []))
        bad = [m for m in args.mutate if m not in MUTATIONS]
        if bad:
            raise ConfigError(f"unknown mutations {bad}")
    if args.seed is not None:
        seed = args.seed
    report = run_property_suite(seed=seed, mutations=tuple(args.mutate))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}"
              + (f" (seed {c.seed})" if c.seed is not None and not c.passed else ""))
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "props_summary.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_constraints_dump(args):
    name, c, dim = scn_mod.parse_constellation_only(scn_mod.load_config(args.config))
    bundle = build_sdp_constraints(c, dim)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.ops"
    write_operator_bundle(bundle, path)
    meta = {"constellation": c.to_config(), "dim": bundle.dim, "M": bundle.M,
            "ordering": "index = k * dim + n (label register first)",
            "operators": {k: list(v.shape) for k, v in bundle.as_dict().items()}}
    path.with_suffix(".manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "min-vk": cmd_min_vk, "mc-bias": cmd_mc_bias, "props": cmd_props,
            "constraints-dump": cmd_constraints_dump}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.debug("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
