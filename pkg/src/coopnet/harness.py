"""Seeded Monte Carlo sweeps over SNR, scheme and cluster size.

Every trial draws one channel that is shared by all schemes and SNR points,
so scheme comparisons are paired.  Results depend only on the configuration;
worker count and completion order never change the output.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .covariance import ValidationError
from .cvxcore import SolverError
from .netmodel import (
    NetworkGeometry,
    convert,
    db_to_linear,
    derive_seed,
    rate_no_coop,
    rate_no_interference,
    sample_channel,
    sinr_no_coop,
)
from .precoders import (
    ZF_COND_LIMIT,
    closest_base_clusters,
    dpc_sum_rate,
    sin_precode,
    zf_rates,
)

log = logging.getLogger(__name__)

SCHEMES = ("NoCoop", "NoInterference", "DPC", "ZF", "SIN")
DEFAULT_SNR_DB = tuple(float(x) for x in range(-10, 31, 4))
CSV_HEADER = ("scheme", "cluster_size", "snr_db", "mean_rate_per_base",
              "std_error", "trials", "resampled")
RETRIES = 3
MAX_RESAMPLES = 100


@dataclass(frozen=True)
class SweepConfig:
    """Everything that determines a sweep's output."""

    geometry: NetworkGeometry = field(default_factory=NetworkGeometry)
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_DB
    schemes: tuple[str, ...] = SCHEMES
    cluster_sizes: tuple[int, ...] | None = None    # None: 1, 3, 5, 7 up to N
    trials: int = 50
    master_seed: int = 0
    tol: float = 1e-6
    unit: str = "bits"
    zf_cond_limit: float = ZF_COND_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        n = self.geometry.n_bases
        sizes = self.cluster_sizes
        if sizes is None:
            sizes = [c for c in (1, 3, 5, 7) if c <= n]
        object.__setattr__(self, "cluster_sizes", tuple(int(c) for c in sizes))
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        if not self.snr_grid_db:
            raise ValidationError("SNR grid is empty")
        if not all(math.isfinite(s) for s in self.snr_grid_db):
            raise ValidationError("SNR values must be finite")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValidationError(f"unknown scheme(s) {bad}; choose from {', '.join(SCHEMES)}")
        if "SIN" in self.schemes and not self.cluster_sizes:
            raise ValidationError("SIN needs at least one cluster size")
        for c in self.cluster_sizes:
            if not 1 <= c <= n:
                raise ValidationError(f"cluster size {c} outside 1..{n}")
            if c % 2 == 0 and c != n:
                raise ValidationError(f"cluster size must be odd (or {n} for full coordination), got {c}")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.unit not in ("bits", "nats"):
            raise ValidationError(f"unknown unit {self.unit!r}")

    def variants(self):
        """``(scheme, cluster_size)`` pairs, in output order."""
        n = self.geometry.n_bases
        out = []
        for s in self.schemes:
            if s == "SIN":
                out += [(s, c) for c in sorted(set(self.cluster_sizes))]
            else:
                out.append((s, n if s in ("DPC", "ZF") else 1))
        return sorted(out)


@dataclass(frozen=True)
class Record:
    scheme: str
    cluster_size: int
    snr_db: float
    mean_rate_per_base: float
    std_error: float
    trials: int
    resampled: int
    missing: bool = False


@dataclass
class SweepResult:
    """Aggregated records plus per-trial sum rates keyed by ``(scheme, cluster_size, snr_db)``.

    ``samples`` hold exact sum rates (``nan`` where a trial failed);
    ``surrogate`` holds the SIN surrogate sum rates.
    """

    config: SweepConfig
    records: list[Record]
    samples: dict
    surrogate: dict
    resampled: int

    def record(self, scheme, cluster_size, snr_db) -> Record:
        for r in self.records:
            if (r.scheme, r.cluster_size, r.snr_db) == (scheme, cluster_size, float(snr_db)):
                return r
        raise KeyError((scheme, cluster_size, snr_db))

    @property
    def missing(self) -> list[Record]:
        return [r for r in self.records if r.missing]


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

def trial_channel(cfg: SweepConfig, t: int):
    """Channel of trial ``t`` and the number of ill-conditioned draws skipped to get it."""
    for attempt in range(MAX_RESAMPLES):
        H = sample_channel(cfg.geometry, derive_seed(cfg.master_seed, t, attempt))
        if np.linalg.cond(H.entries) <= cfg.zf_cond_limit:
            if attempt:
                log.info("trial %d: resampled channel %d time(s) (near-singular)", t, attempt)
            return H, attempt
    raise RuntimeError(f"trial {t}: no well-conditioned channel in {MAX_RESAMPLES} draws")


def _with_retries(fn, tol, what):
    for k in range(RETRIES + 1):
        try:
            return fn(tol * 10.0 ** k)
        except SolverError as exc:
            log.warning("%s: solver failed at tol %.1e (%s)", what, tol * 10.0 ** k, exc)
    return None


def _point(cfg: SweepConfig, H, scheme: str, size: int, P: float):
    """Exact and surrogate sum rate (nats) of one scheme, or None after the retry budget."""
    n = cfg.geometry.n_bases
    if scheme == "NoCoop":
        return float(rate_no_coop(H, P, "nats").sum()), None
    if scheme == "NoInterference":
        return float(rate_no_interference(H, P, "nats").sum()), None
    what = f"{scheme}/{size} at P={P:.4g}"
    if scheme == "DPC":
        v = _with_retries(lambda tol: dpc_sum_rate(H, P, max(tol, 1e-6), "nats"), cfg.tol, what)
        return None if v is None else (v, None)
    if scheme == "ZF":
        z = _with_retries(lambda tol: zf_rates(H, P, tol, "nats", cfg.zf_cond_limit), cfg.tol, what)
        return None if z is None else (float(z.rates.sum()), None)
    clusters = None if size == n else closest_base_clusters(n, size)
    s = _with_retries(lambda tol: sin_precode(H, P, clusters, tol=tol, unit="nats"), cfg.tol, what)
    return None if s is None else (float(s.exact_rates.sum()), float(s.tilde_rates.sum()))


def run_trial(cfg: SweepConfig, t: int):
    """All points of trial ``t``: ``(resampled, {(scheme, size, snr_db): (exact, surrogate) | None})``."""
    H, resampled = trial_channel(cfg, t)
    out = {}
    for snr in cfg.snr_grid_db:
        P = float(db_to_linear(snr))
        for scheme, size in cfg.variants():
            out[(scheme, size, snr)] = _point(cfg, H, scheme, size, P)
    return resampled, out


def _run_trial_star(args):
    return run_trial(*args)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def run_sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """Run every trial and reduce to per-point records (rates per base, in ``cfg.unit``)."""
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_trial_star, jobs))
    else:
        trials = [run_trial(*j) for j in jobs]
    return aggregate(cfg, trials)


def aggregate(cfg: SweepConfig, trials) -> SweepResult:
    n = cfg.geometry.n_bases
    resampled = int(sum(r for r, _ in trials))
    keys = sorted({k for _, pts in trials for k in pts})
    samples, surrogate, records = {}, {}, []
    for key in keys:
        vals = [pts.get(key) for _, pts in trials]
        exact = np.array([np.nan if v is None else convert(v[0], cfg.unit) for v in vals])
        samples[key] = exact
        if key[0] == "SIN":
            surrogate[key] = np.array([np.nan if v is None else convert(v[1], cfg.unit) for v in vals])
        ok = exact[np.isfinite(exact)]
        missing = len(ok) < len(exact)
        per_base = ok / n
        mean = float(per_base.mean()) if len(ok) and not missing else math.nan
        se = (float(per_base.std(ddof=1) / math.sqrt(len(ok)))
              if len(ok) > 1 and not missing else math.nan)
        if missing:
            log.error("%s/%d at %g dB: %d trial(s) failed after retries; record missing",
                      key[0], key[1], key[2], len(exact) - len(ok))
        records.append(Record(key[0], key[1], key[2], mean, se, len(ok), resampled, missing))
    return SweepResult(cfg, records, samples, surrogate, resampled)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return format(x, ".9g")


def format_records(res: SweepResult, fmt: str = "csv") -> str:
    """Serialize records, sorted by (scheme, cluster_size, snr_db)."""
    rows = [(r.scheme, str(r.cluster_size), _fmt(r.snr_db), _fmt(r.mean_rate_per_base),
             _fmt(r.std_error), str(r.trials), str(r.resampled))
            for r in sorted(res.records, key=lambda r: (r.scheme, r.cluster_size, r.snr_db))]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "gnuplot":
        lines = ["# " + " ".join(CSV_HEADER)]
        prev = None
        for row in rows:
            if prev is not None and row[:2] != prev:
                lines += ["", ""]   # gnuplot dataset separator
            lines.append(" ".join(row))
            prev = row[:2]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def emit_csv(res: SweepResult, path, fmt: str = "csv") -> Path:
    path = Path(path)
    text = format_records(res, fmt)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
    return path


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairedStats:
    snr_db: float
    mean_difference: float      # per base, a minus b
    std_error: float
    fraction_a_ge_b: float
    trials: int


def paired_compare(res: SweepResult, a, b, tol: float = 0.0) -> list[PairedStats]:
    """Per-SNR paired differences of sum rates between variants ``a`` and ``b``.

    ``a`` and ``b`` are ``(scheme, cluster_size)``.  ``tol`` is the slack
    allowed when counting trials with ``a >= b``.
    """
    n = res.config.geometry.n_bases
    out = []
    for snr in res.config.snr_grid_db:
        try:
            xa = res.samples[(*a, snr)]
            xb = res.samples[(*b, snr)]
        except KeyError as exc:
            raise ValidationError(f"variant {exc.args[0][:2]} not in the sweep") from None
        if xa.shape != xb.shape:
            raise ValidationError("variants were run on different trial sets")
        ok = np.isfinite(xa) & np.isfinite(xb)
        d = (xa[ok] - xb[ok]) / n
        se = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else math.nan
        frac = float(np.mean(xa[ok] >= xb[ok] - tol)) if len(d) else math.nan
        out.append(PairedStats(snr, float(d.mean()) if len(d) else math.nan, se, frac, len(d)))
    return out


def average_sinr_db(geo: NetworkGeometry, snr_db: float, trials: int = 50, seed: int = 0,
                    method: str = "power-ratio") -> float:
    """Trial-averaged SINR of the non-cooperative system, in dB.

    ``"power-ratio"`` divides the mean received signal power by the mean
    interference-plus-noise power.  ``"mean-db"`` averages per-user SINRs in
    dB and ``"db-of-mean"`` converts the mean linear SINR.
    """
    P = float(db_to_linear(snr_db))
    cfg = SweepConfig(geometry=geo, trials=trials, master_seed=seed, schemes=("NoCoop",))
    Hs = [trial_channel(cfg, t)[0].entries for t in range(trials)]
    if method == "power-ratio":
        g = np.abs(np.array(Hs)) ** 2
        sig = np.einsum("tii->ti", g) * P
        interf = 1.0 + (g.sum(axis=2) - np.einsum("tii->ti", g)) * P
        return float(10 * np.log10(sig.mean() / interf.mean()))
    s = np.array([sinr_no_coop(H, P) for H in Hs])
    if method == "mean-db":
        return float(np.mean(10 * np.log10(s)))
    if method == "db-of-mean":
        return float(10 * np.log10(s.mean()))
    raise ValueError(f"unknown averaging method {method!r}")


def with_overrides(cfg: SweepConfig, **kw) -> SweepConfig:
    """Copy of ``cfg`` with the non-None keyword values replaced."""
    kw = {k: v for k, v in kw.items() if v is not None}
    geo_keys = {"n_bases", "dx", "dy", "eta"}
    geo = {k: kw.pop(k) for k in list(kw) if k in geo_keys}
    if geo:
        kw["geometry"] = replace(cfg.geometry, **geo)
    return replace(cfg, **kw)
