"""Posterior summaries, predictive survival, hazard curves and the
Nelson-Aalen estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .model import ConstraintError, DomainError, TimePartition

__all__ = [
    "PosteriorSummary",
    "SurvivalPrediction",
    "StepFunction",
    "hpd_interval",
    "equal_tail_interval",
    "summarize",
    "cumulative_hazard",
    "predict_survival",
    "hazard_curve",
    "hazard_steps",
    "nelson_aalen",
]


def _window(M, level):
    if not 0 < level <= 1:
        raise ValueError("level must be in (0, 1]")
    # guard against 0.95 * 100 landing a hair above 95
    return min(M, max(1, math.ceil(level * M - 1e-9)))


def hpd_interval(x, level=0.95):
    """Shortest interval spanning ``ceil(level * M)`` sorted draws.

    Ties go to the window with the lowest start index.
    """
    x = np.sort(np.asarray(x, dtype=float))
    w = _window(x.size, level)
    widths = x[w - 1:] - x[: x.size - w + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + w - 1])


def equal_tail_interval(x, level=0.95):
    """Central window of ``ceil(level * M)`` sorted draws.

    Uses the same number of points as :func:`hpd_interval`, so the HPD
    interval is never wider.
    """
    x = np.sort(np.asarray(x, dtype=float))
    w = _window(x.size, level)
    i = (x.size - w) // 2
    return float(x[i]), float(x[i + w - 1])


@dataclass
class PosteriorSummary:
    names: list
    mean: np.ndarray
    sd: np.ndarray
    hpd_low: np.ndarray
    hpd_high: np.ndarray
    level: float = 0.95

    def to_records(self) -> list:
        return [
            {"name": n, "mean": float(m), "sd": float(s), "hpd_low": float(lo), "hpd_high": float(hi)}
            for n, m, s, lo, hi in zip(self.names, self.mean, self.sd, self.hpd_low, self.hpd_high)
        ]

    def __getitem__(self, name):
        i = list(self.names).index(name)
        return self.to_records()[i]


def summarize(chain, level=0.95, names=None) -> PosteriorSummary:
    """Mean, SD and HPD interval of every column.

    ``chain`` is a :class:`~boxhaz.sampler.ChainOutput` or an ``(M, q)``
    array of draws.
    """
    if hasattr(chain, "draws"):
        draws = chain.draws
        names = names or chain.param_names
    else:
        draws = np.asarray(chain, dtype=float)
        if draws.ndim == 1:
            draws = draws[:, None]
        names = names or [f"x{i + 1}" for i in range(draws.shape[1])]
    if draws.shape[0] < 2:
        raise ValueError("at least two draws are needed for a summary")
    bounds = np.array([hpd_interval(draws[:, c], level) for c in range(draws.shape[1])])
    return PosteriorSummary(
        list(names), draws.mean(axis=0), draws.std(axis=0, ddof=1),
        bounds[:, 0], bounds[:, 1], level,
    )


def _chain_parts(chain, partition, gamma):
    partition = partition if partition is not None else chain.partition
    gamma = chain.config.gamma if gamma is None else gamma
    return chain.beta, chain.lam, partition, gamma


def _hazard_levels(beta, lam, z, gamma):
    """Per-draw hazard in each interval for profile ``z``: shape ``(M, J)``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if beta.shape[1] != z.size:
        raise DomainError(f"profile has {z.size} entries, expected {beta.shape[1]}")
    eta = beta @ z
    if gamma == 0:
        return lam * np.exp(eta)[:, None]
    base = lam**gamma + gamma * eta[:, None]
    if np.any(base < 0):
        raise ConstraintError("covariate profile gives a negative hazard at some draw")
    return base ** (1.0 / gamma)


def _check_times(t, partition: TimePartition):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise DomainError("times must be non-negative")
    if np.any(t > partition.s[-1]):
        raise DomainError(
            f"time beyond the last cut point {partition.s[-1]:g}; the hazard is not defined there"
        )
    return t


def cumulative_hazard(beta, lam, z, t, partition: TimePartition, gamma):
    """``H(t)`` per draw and time: shape ``(M, len(t))``."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    t = _check_times(t, partition)
    levels = _hazard_levels(beta, lam, z, gamma)
    return levels @ model.exposure_matrix(t, partition).T


@dataclass
class SurvivalPrediction:
    z: np.ndarray
    times: np.ndarray
    survival: np.ndarray


def predict_survival(chain, z, t, partition=None, gamma=None):
    """Posterior predictive survival ``mean_m exp(-H(t; draw_m, z))``.

    Returns a float for scalar ``t``; otherwise a :class:`SurvivalPrediction`.

    Raises
    ------
    DomainError
        For negative times or times past the last cut point.
    """
    beta, lam, partition, gamma = _chain_parts(chain, partition, gamma)
    H = cumulative_hazard(beta, lam, z, t, partition, gamma)
    surv = np.exp(-H).mean(axis=0)
    if np.ndim(t) == 0:
        return float(surv[0])
    return SurvivalPrediction(np.asarray(z, dtype=float), np.asarray(t, dtype=float), surv)


def hazard_curve(chain, z, times=None, partition=None, gamma=None):
    """Posterior mean hazard at each time in ``(0, s_J]``.

    Defaults to the interval midpoints.
    """
    beta, lam, partition, gamma = _chain_parts(chain, partition, gamma)
    s = partition.s
    if times is None:
        times = 0.5 * (s[:-1] + s[1:])
    times = _check_times(times, partition)
    if np.any(times <= 0):
        raise DomainError("hazard curve times must be positive")
    levels = _hazard_levels(beta, lam, z, gamma).mean(axis=0)
    return levels[model.interval_index(times, partition)]


def hazard_steps(chain, z, partition=None, gamma=None):
    """Step-function form for plotting: ``(edges, levels)`` with ``J+1`` edges."""
    beta, lam, partition, gamma = _chain_parts(chain, partition, gamma)
    return partition.s.copy(), _hazard_levels(beta, lam, z, gamma).mean(axis=0)


@dataclass
class StepFunction:
    """Right-continuous step function jumping to ``values[i]`` at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        vals = np.concatenate([[0.0], self.values])
        return vals[idx + 1]


def _na_single(y, nu):
    ev_times, d = np.unique(y[nu == 1], return_counts=True)
    ys = np.sort(y)
    at_risk = ys.size - np.searchsorted(ys, ev_times, side="left")
    return StepFunction(ev_times, np.cumsum(d / at_risk))


def nelson_aalen(data, groups=None, labels=None) -> dict:
    """Nelson-Aalen cumulative hazard per group.

    Parameters
    ----------
    data : SurvivalDataset
    groups : array-like of length n, optional
        Group label per subject; all subjects form one group (label ``"all"``)
        when omitted.
    labels : sequence, optional
        Groups to report; defaults to the distinct values of ``groups``.
        A requested label with no subjects is an error.

    Returns
    -------
    dict mapping label to :class:`StepFunction`, in sorted label order.
    """
    if groups is None:
        return {"all": _na_single(data.y, data.nu)}
    groups = np.asarray(groups)
    if groups.shape != (data.n,):
        raise DomainError("one group label per subject is required")
    if labels is None:
        labels = sorted(set(groups.tolist()), key=str)
    out = {}
    for g in labels:
        mask = groups == g
        if not mask.any():
            raise DomainError(f"group {g!r} is empty")
        out[g] = _na_single(data.y[mask], data.nu[mask])
    return out
