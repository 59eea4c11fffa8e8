"""Command-line entry point: ``coopnet sweep|single|validate``.

Settings come from built-in defaults, then the JSON ``--config`` file, then
flags (flags win).  Reports and data go to stdout, diagnostics to stderr.

Exit codes: 0 success, 1 validation check failed, 2 bad configuration or
arguments, 3 solver retry budget exhausted (partial output is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import jsonschema
import numpy as np

from . import harness, validation
from .covariance import ValidationError
from .cvxcore import SolverError
from .harness import SCHEMES, SweepConfig
from .netmodel import NetworkGeometry, convert, db_to_linear, rate_no_coop, rate_no_interference
from .precoders import closest_base_clusters, dpc_sum_rate, sin_precode, zf_covariances, zf_rates

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("coopnet")

_POS = {"type": "number", "exclusiveMinimum": 0}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_bases": {"type": "integer", "minimum": 1},
                "dx": _POS, "dy": _POS, "eta": _POS,
            },
        },
        "snr_grid_db": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "schemes": {"type": "array", "items": {"enum": list(SCHEMES)}, "minItems": 1},
        "cluster_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "trials": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "tol": _POS,
        "unit": {"enum": ["bits", "nats"]},
        "zf_cond_limit": _POS,
    },
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _path_of(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        key = ".".join(filter(None, [path, extra[0] if extra else ""]))
        return f"unknown key '{key}'"
    return f"key '{path or '<root>'}': {err.message}"


def load_config(path) -> dict:
    """Parse and schema-check a JSON run configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {_path_of(exc)}") from None
    return doc


def _list(conv):
    def parse(text):
        try:
            return [conv(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse list {text!r}") from None
    return parse


def build_config(args) -> SweepConfig:
    doc = load_config(args.config) if args.config else {}
    geo = NetworkGeometry(**doc.get("geometry", {}))
    fields = {k: v for k, v in doc.items() if k != "geometry"}
    flags = {
        "trials": args.trials, "master_seed": args.seed, "schemes": args.schemes,
        "cluster_sizes": args.cluster_sizes, "snr_grid_db": args.snr_db, "tol": args.tol,
        "unit": args.unit, "zf_cond_limit": args.zf_cond_limit,
    }
    fields.update({k: v for k, v in flags.items() if v is not None})
    if args.n_bases is not None:
        geo = NetworkGeometry(args.n_bases, geo.dx, geo.dy, geo.eta)
    for k in ("snr_grid_db", "schemes", "cluster_sizes"):
        if k in fields:
            fields[k] = tuple(fields[k])
    try:
        return SweepConfig(geometry=geo, **fields)
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    cfg = build_config(args)
    log.info("sweep: %d trial(s), %d SNR point(s), variants %s",
             cfg.trials, len(cfg.snr_grid_db), cfg.variants())
    res = harness.run_sweep(cfg, workers=args.workers)
    if args.out:
        harness.emit_csv(res, args.out, args.format)
    else:
        sys.stdout.write(harness.format_records(res, args.format))
    if res.missing:
        log.error("%d record(s) missing after solver retries", len(res.missing))
        return EXIT_SOLVER
    return EXIT_OK


def _vec(v) -> str:
    return " ".join(f"{x:9.4f}" for x in np.atleast_1d(v))


def single_report(cfg: SweepConfig, scheme: str, snr_db: float, cluster_size: int | None) -> list[str]:
    """Human-readable report of one scheme on the channel of trial 0."""
    n = cfg.geometry.n_bases
    P = float(db_to_linear(snr_db))
    H, resampled = harness.trial_channel(cfg, 0)
    Hm = H.entries
    g = np.abs(Hm) ** 2
    off = g[~np.eye(n, dtype=bool)]
    lines = [f"scheme {scheme}  N={n}  SNR {snr_db:g} dB  seed {cfg.master_seed}  unit {cfg.unit}"]
    if resampled:
        lines.append(f"notice: channel resampled {resampled} time(s) (condition number above "
                     f"{cfg.zf_cond_limit:.3g})")
    lines.append(f"channel: mean |h_ii|^2 {np.diag(g).mean():.4f}  mean |h_ij|^2 (i!=j) "
                 f"{off.mean() if off.size else 0.0:.4f}  cond {np.linalg.cond(Hm):.4g}")
    u = cfg.unit
    powers, gap = None, None
    if scheme == "NoCoop":
        rates = rate_no_coop(Hm, P, u)
        powers = np.full(n, P)
    elif scheme == "NoInterference":
        rates = rate_no_interference(Hm, P, u)
        powers = np.full(n, P)
    elif scheme == "DPC":
        total = dpc_sum_rate(Hm, P, max(cfg.tol, 1e-6), u)
        lines.append(f"sum capacity {total:.6f}  per base {total / n:.6f}")
        return lines
    elif scheme == "ZF":
        z = zf_rates(Hm, P, cfg.tol, u, cfg.zf_cond_limit)
        rates, powers, gap = z.rates, zf_covariances(z).base_powers(), z.solution.gap
        lines.append(f"gamma:        {_vec(z.gamma)}")
    else:
        size = n if cluster_size is None else cluster_size
        clusters = None if size == n else closest_base_clusters(n, size)
        s = sin_precode(Hm, P, clusters, tol=cfg.tol, unit=u)
        rates, powers, gap = s.exact_rates, s.covariances.base_powers(), s.solution.gap
        lines.append(f"cluster size {size}")
        lines.append(f"surrogate:    {_vec(s.tilde_rates)}")
        for k, c in enumerate(s.covariances.clusters):
            full = s.covariances.full(k)
            support = np.flatnonzero(np.abs(full).max(axis=0) > 0) + 1
            lines.append(f"user {c.user}: bases {list(c.bases)}  covariance support "
                         f"{support.tolist()}")
            if n <= 8:
                lines += ["    " + " ".join(f"{x:8.4f}" for x in row) for row in np.abs(full)]
    lines.append(f"rates:        {_vec(rates)}")
    lines.append(f"sum rate {rates.sum():.6f}  per base {rates.sum() / n:.6f}")
    lines.append(f"base powers:  {_vec(powers)}  (limit {P:.4g})")
    if gap is not None:
        lines.append(f"solver gap {gap:.3e}")
    return lines


def cmd_single(args) -> int:
    cfg = build_config(args)
    explicit = args.snr_db or (args.config and "snr_grid_db" in load_config(args.config))
    snr = cfg.snr_grid_db[0] if explicit else 10.0
    try:
        lines = single_report(cfg, args.scheme, snr, args.cluster_size)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    print("\n".join(lines))
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = validation.run_all(args.inject_tol or validation.NOMINAL_TOL)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--snr-db", type=_list(float), metavar="LIST", help="SNR points in dB, comma separated")
    p.add_argument("--n-bases", type=int, metavar="N", help="number of base stations")
    p.add_argument("--tol", type=float, help="relative solver tolerance")
    p.add_argument("--unit", choices=("bits", "nats"), help="rate unit (default bits)")
    p.add_argument("--zf-cond-limit", type=float, metavar="X",
                   help="resample channels whose condition number exceeds X (default 1e12)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopnet",
        description="Cooperative base-station downlink on a wraparound line network.",
        epilog="Precedence: flags > config file > defaults.  Exit codes: 0 ok, 1 check "
               "failed, 2 configuration error, 3 solver retry budget exhausted.  "
               "COOPNET_LOG sets the log level (default WARNING).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over SNR, scheme and cluster size")
    _common(p)
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--trials", type=int, help="channel realizations (default 50)")
    p.add_argument("--schemes", type=_list(str), metavar="LIST",
                   help=f"comma separated subset of {','.join(SCHEMES)}")
    p.add_argument("--cluster-sizes", type=_list(int), metavar="LIST", help="SIN cluster sizes")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes")
    p.add_argument("--format", choices=("csv", "gnuplot"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("single", help="inspect one scheme on one channel realization")
    _common(p)
    p.add_argument("--scheme", required=True, help=f"one of {', '.join(SCHEMES)}")
    p.add_argument("--cluster-size", type=int, help="SIN cluster size (default N)")
    p.set_defaults(func=cmd_single, trials=None, schemes=None, cluster_sizes=None)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--inject-tol", type=float, metavar="TOL",
                   help="debug: solve with this tolerance while keeping nominal pass thresholds")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("COOPNET_LOG", "WARNING").upper(),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "single" and args.scheme not in SCHEMES:
        print(f"error: unknown scheme {args.scheme!r}; choose from {', '.join(SCHEMES)}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
