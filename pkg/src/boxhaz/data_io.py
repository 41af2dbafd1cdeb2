"""Data ingestion, time-axis partitioning, simulation, and output files.

File formats (comma separated, UTF-8, header row, '.' decimal point):

* input data: ``time,status,<covariate>...`` with status in {0, 1}
* samples: ``iter,beta_<name>...,lambda_1..lambda_J,loglik`` written with 17
  significant digits so a reread reproduces every float exactly
* grid table: ``gamma,J,B,DIC,status,best_B,best_DIC``
* curves: ``curve,group,time,value``
* summary JSON: see :data:`SUMMARY_SCHEMA`
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .model import DomainError, SurvivalDataset, TimePartition

__all__ = [
    "IngestionError",
    "SimulationSpec",
    "SimulationResult",
    "read_dataset",
    "write_dataset",
    "build_partition",
    "simulate",
    "censoring_probability",
    "write_samples",
    "read_samples",
    "write_summary",
    "write_grid",
    "write_curves",
    "SUMMARY_SCHEMA",
    "PARTITION_EPS",
]

PARTITION_EPS = 1e-6


class IngestionError(DomainError):
    """Malformed input file."""


def _open_text(source):
    if hasattr(source, "read"):
        return source, False
    if isinstance(source, (str, os.PathLike)) and Path(source).exists():
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, str) and "\n" in source:
        return io.StringIO(source), False
    raise IngestionError(f"cannot open data source {source!r}")


def read_dataset(source, time_col="time", status_col="status", covariates=None,
                 require_event=True) -> SurvivalDataset:
    """Read a delimited survival file.

    Parameters
    ----------
    source : path, file-like, or CSV text
    time_col, status_col : str
        Column names for the observed time and event indicator.
    covariates : list of str, optional
        Covariate columns in order; default is every other column.

    Raises
    ------
    IngestionError
        On missing columns or values, non-numeric fields, negative times,
        status outside {0, 1}, or a file with no events.
    """
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("empty file: a header row is required") from None
        for col in (time_col, status_col):
            if col not in header:
                raise IngestionError(f"missing required column {col!r}")
        if covariates is None:
            covariates = [h for h in header if h not in (time_col, status_col)]
        missing = [c for c in covariates if c not in header]
        if missing:
            raise IngestionError(f"missing covariate columns {missing}")
        if not covariates:
            raise IngestionError("at least one covariate column is required")
        ti, si = header.index(time_col), header.index(status_col)
        ci = [header.index(c) for c in covariates]
        ys, nus, zs = [], [], []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
            vals = {}
            for name, idx in [(time_col, ti), (status_col, si)] + list(zip(covariates, ci)):
                text = row[idx].strip()
                if text == "" or text.upper() in ("NA", "NAN"):
                    raise IngestionError(f"row {rowno}: missing value in column {name!r}")
                try:
                    v = float(text)
                except ValueError:
                    raise IngestionError(
                        f"row {rowno}: non-numeric value {text!r} in column {name!r}"
                    ) from None
                if not math.isfinite(v):
                    raise IngestionError(f"row {rowno}: non-finite value in column {name!r}")
                vals[name] = v
            if vals[time_col] < 0:
                raise IngestionError(f"row {rowno}: negative time {vals[time_col]!r}")
            if vals[status_col] not in (0.0, 1.0):
                raise IngestionError(f"row {rowno}: status must be 0 or 1, got {row[si]!r}")
            ys.append(vals[time_col])
            nus.append(int(vals[status_col]))
            zs.append([vals[c] for c in covariates])
    finally:
        if close:
            fh.close()
    if require_event and not any(nus):
        raise IngestionError("at least one event required (status column is all zero)")
    Z = np.asarray(zs, dtype=float).reshape(len(ys), len(covariates))
    return SurvivalDataset(np.asarray(ys), np.asarray(nus), Z, tuple(covariates))


def write_dataset(data: SurvivalDataset, dest):
    """Write ``data`` in the input CSV format."""
    rows = [["time", "status", *data.covariate_names]]
    for i in range(data.n):
        rows.append([repr(float(data.y[i])), str(int(data.nu[i]))]
                    + [repr(float(v)) for v in data.Z[i]])
    _write_rows(rows, dest)


def _write_rows(rows, dest):
    if hasattr(dest, "write"):
        csv.writer(dest, lineterminator="\n").writerows(rows)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def build_partition(data: SurvivalDataset, J: int) -> TimePartition:
    """Cut the time axis into ``J`` intervals with roughly equal event counts.

    Interior cut ``j`` is the event time of rank ``ceil(j * D / J)`` among the
    ``D`` sorted event times (ties included), i.e. the lower empirical
    ``j/J`` quantile.  When ties make cuts coincide, cuts are moved to the
    neighbouring distinct event times so that they stay strictly increasing
    and every interval ``(s_{j-1}, s_j]`` holds at least one event.  The last
    cut is ``(1 + 1e-6) * max(y)``.

    Raises
    ------
    DomainError
        If ``J`` exceeds the number of distinct event times.
    """
    if J < 1:
        raise DomainError("J must be at least 1")
    ev = np.sort(data.y[data.nu == 1])
    if ev.size == 0:
        raise DomainError("at least one event required to partition the time axis")
    if not data.y.max() > 0:
        raise DomainError("all observed times are zero; the time axis cannot be partitioned")
    uniq = np.unique(ev)
    # an event at time 0 falls in the first interval but cannot bound one
    positive = uniq[uniq > 0]
    if J > max(positive.size, 1):
        raise DomainError(
            f"J = {J} exceeds the {positive.size} distinct positive event times; use a smaller J"
        )
    s_last = (1.0 + PARTITION_EPS) * data.y.max()
    if J == 1:
        return TimePartition(np.array([0.0, s_last]))
    D = ev.size
    K = positive.size
    idx = []
    for j in range(1, J):
        q = ev[max(math.ceil(j * D / J) - 1, 0)]
        idx.append(int(np.searchsorted(positive, q, side="left")))
    # cut indices into `positive` must be strictly increasing and leave the
    # largest event time for the last interval
    for a in range(len(idx)):
        low = idx[a - 1] + 1 if a else 0
        idx[a] = max(idx[a], low)
    for a in range(len(idx) - 1, -1, -1):
        high = idx[a + 1] - 1 if a + 1 < len(idx) else K - 2
        idx[a] = min(idx[a], high)
    cuts = positive[idx]
    part = TimePartition(np.concatenate([[0.0], cuts, [s_last]]))
    part.validate(data)
    return part


@dataclass(frozen=True)
class SimulationSpec:
    """Generating design for synthetic survival data.

    Defaults reproduce the simulation design used in the package demos:
    gamma 0.5, constant baseline 0.5, ``Z1 ~ N(5, 1)``, ``Z2`` in {1, 2} with
    probability 0.5 each, coefficients (0.7, 1) and uniform censoring aimed
    at a 25% censoring rate.
    """

    n: int = 300
    gamma_true: float = 0.5
    lambda0: float = 0.5
    beta_true: tuple = (0.7, 1.0)
    normal_covariates: tuple = ((5.0, 1.0),)
    binary_covariates: tuple = ((1.0, 2.0, 0.5),)
    censoring: str = "uniform"
    censoring_rate: float = 0.25
    seed: int = 2024

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if not self.lambda0 > 0:
            raise DomainError("lambda0 must be positive")
        if not 0 <= self.gamma_true <= 1:
            raise DomainError("gamma_true must lie in [0, 1]")
        p = len(self.normal_covariates) + len(self.binary_covariates)
        if len(self.beta_true) != p:
            raise DomainError(f"beta_true has {len(self.beta_true)} entries for {p} covariates")
        if self.censoring not in ("none", "uniform"):
            raise DomainError("censoring must be 'none' or 'uniform'")
        if self.censoring == "uniform" and not 0 < self.censoring_rate < 1:
            raise DomainError("censoring_rate must lie in (0, 1)")
        for mean, sd in self.normal_covariates:
            if not sd >= 0:
                raise DomainError("normal covariate SD must be nonnegative")
        for a, b, q in self.binary_covariates:
            if not 0 <= q <= 1:
                raise DomainError("binary covariate probability must lie in [0, 1]")

    @property
    def covariate_names(self):
        p = len(self.normal_covariates) + len(self.binary_covariates)
        return tuple(f"z{c + 1}" for c in range(p))


@dataclass
class SimulationResult:
    data: SurvivalDataset
    c_max: float = math.inf
    target_rate: float = 0.0
    expected_rate: float = 0.0
    redraws: int = 0
    info: dict = field(default_factory=dict)


def censoring_probability(rate, c_max):
    """``P(C < T)`` for ``T ~ Exp(rate)`` and ``C ~ Uniform(0, c_max)``, vectorized in ``rate``."""
    x = np.asarray(rate, dtype=float) * c_max
    small = x < 1e-8
    out = np.empty_like(x)
    # E[exp(-rate * C)] = (1 - exp(-rate * c_max)) / (rate * c_max)
    out[~small] = -np.expm1(-x[~small]) / x[~small]
    out[small] = 1.0 - 0.5 * x[small]
    return out


def _draw_covariates(spec, rng, size):
    cols = []
    for mean, sd in spec.normal_covariates:
        cols.append(rng.normal(mean, sd, size))
    for a, b, q in spec.binary_covariates:
        cols.append(np.where(rng.random(size) < q, a, b))
    return np.column_stack(cols)


def _subject_rates(Z, spec):
    eta = Z @ np.asarray(spec.beta_true, dtype=float)
    g = spec.gamma_true
    if g == 0:
        return spec.lambda0 * np.exp(eta), np.ones(len(eta), dtype=bool)
    base = spec.lambda0**g + g * eta
    ok = base > 0
    rates = np.where(ok, np.maximum(base, 0.0) ** (1.0 / g), np.nan)
    return rates, ok


def simulate(spec: SimulationSpec) -> SimulationResult:
    """Draw a dataset from the transformation model with constant baseline.

    Each subject's hazard is constant in time, so failure times are
    exponential and drawn by inverse CDF.  Covariate vectors giving a
    nonpositive hazard are redrawn; more than 10% redraws is an error.
    With uniform censoring the upper bound ``c_max`` is found by bisection so
    that the average analytic censoring probability over the drawn
    covariates equals the target rate.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    Z = _draw_covariates(spec, rng, n)
    rates, ok = _subject_rates(Z, spec)
    redraws = 0
    while not ok.all():
        bad = np.flatnonzero(~ok)
        redraws += bad.size
        if redraws > 0.1 * n:
            raise DomainError(
                f"{redraws} covariate redraws for n = {n}: design is inconsistent "
                "with the hazard constraint"
            )
        Z[bad] = _draw_covariates(spec, rng, bad.size)
        rates, ok = _subject_rates(Z, spec)
    T = -np.log(rng.random(n)) / rates
    res = SimulationResult(None, redraws=redraws)
    if spec.censoring == "none":
        y, nu = T, np.ones(n, dtype=np.int64)
    else:
        target = spec.censoring_rate

        def gap(log_c):
            return censoring_probability(rates, math.exp(log_c)).mean() - target

        # the censoring probability decreases from 1 to 0 as c_max grows
        lo = math.log(1e-6 / rates.max())
        hi = math.log(10.0 / rates.min())
        while gap(hi) > 0:
            hi += 2.0
        log_c = brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12)
        c_max = math.exp(log_c)
        C = rng.random(n) * c_max
        y = np.minimum(T, C)
        nu = (T <= C).astype(np.int64)
        res.c_max = c_max
        res.target_rate = target
        res.expected_rate = float(censoring_probability(rates, c_max).mean())
    res.data = SurvivalDataset(y, nu, Z, spec.covariate_names)
    res.info = {
        "c_max": res.c_max if math.isfinite(res.c_max) else None,
        "expected_censoring_rate": res.expected_rate,
        "empirical_censoring_rate": float(1.0 - nu.mean()),
        "covariate_redraws": redraws,
    }
    return res


# -- outputs ---------------------------------------------------------------

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["config", "summaries", "fit", "diagnostics"],
    "properties": {
        "config": {"type": "object"},
        "summaries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "mean", "sd", "hpd_low", "hpd_high"],
                "properties": {
                    "name": {"type": "string"},
                    "mean": {"type": "number"},
                    "sd": {"type": "number"},
                    "hpd_low": {"type": "number"},
                    "hpd_high": {"type": "number"},
                },
            },
        },
        "fit": {
            "type": "object",
            "required": ["B", "dic", "dev_mean", "dev_at_mean"],
            "properties": {
                "B": {"type": ["number", "null"]},
                "dic": {"type": ["number", "null"]},
                "dev_mean": {"type": ["number", "null"]},
                "dev_at_mean": {"type": ["number", "null"]},
            },
        },
        "diagnostics": {
            "type": "object",
            "required": ["geweke_z"],
            "properties": {
                "geweke_z": {"type": "array", "items": {"type": ["number", "null"]}},
            },
        },
    },
}


def _fmt(v):
    return format(float(v), ".17g")


def write_samples(chain, dest):
    """Write retained draws as ``iter,<params>...,loglik`` with 17 significant digits."""
    rows = [["iter", *chain.param_names, "loglik"]]
    for m in range(chain.M):
        rows.append([str(m + 1), *(_fmt(v) for v in chain.draws[m]), _fmt(chain.loglik[m])])
    _write_rows(rows, dest)


def read_samples(source):
    """Read a samples CSV; returns ``(names, draws, loglik)``.

    Raises
    ------
    IngestionError
        On a malformed file.
    """
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty samples file") from None
        if len(header) < 3 or header[0] != "iter" or header[-1] != "loglik":
            raise IngestionError("samples file must have columns iter,...,loglik")
        rows = []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"row {rowno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise IngestionError(f"row {rowno}: non-numeric value") from None
    finally:
        if close:
            fh.close()
    arr = np.asarray(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return header[1:-1], arr[:, :-1], arr[:, -1]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def write_summary(dest, config: dict, summary, fit=None, geweke=None, extra=None):
    """Write the summary JSON object; returns the object written.

    ``summary`` is a :class:`~boxhaz.inference.PosteriorSummary`, ``fit`` a
    :class:`~boxhaz.selection.FitStatistics` (or None) and ``geweke`` a
    :class:`~boxhaz.sampler.GewekeReport` (or None).
    """
    obj = {
        "config": config,
        "summaries": summary.to_records(),
        "fit": {
            "B": _finite_or_none(fit.B) if fit else None,
            "dic": _finite_or_none(fit.dic) if fit else None,
            "dev_mean": _finite_or_none(fit.dev_mean) if fit else None,
            "dev_at_mean": _finite_or_none(fit.dev_at_mean) if fit else None,
        },
        "diagnostics": {
            "geweke_z": [None if f else float(z) for z, f in zip(geweke.z, geweke.flagged)]
            if geweke else [],
        },
    }
    if extra:
        obj.update(extra)
    text = json.dumps(obj, indent=2, default=_json_default)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")
    return obj


def write_grid(grid, dest):
    """Write a grid of fits as ``gamma,J,B,DIC,status,best_B,best_DIC``."""
    rows = [["gamma", "J", "B", "DIC", "status", "best_B", "best_DIC"]]
    for idx, cell in enumerate(grid.cells if grid is not None else []):
        fs = cell.fit
        rows.append([
            repr(float(cell.gamma)), str(cell.J),
            _fmt(fs.B) if fs else "", _fmt(fs.dic) if fs else "",
            cell.status,
            str(int(idx == grid.best_by_B)), str(int(idx == grid.best_by_DIC)),
        ])
    _write_rows(rows, dest)


def write_curves(curves, dest):
    """Write curves given as ``{(curve, group): (times, values)}``."""
    rows = [["curve", "group", "time", "value"]]
    for (name, group), (times, values) in curves.items():
        for t, v in zip(times, values):
            rows.append([name, str(group), _fmt(t), _fmt(v)])
    _write_rows(rows, dest)
