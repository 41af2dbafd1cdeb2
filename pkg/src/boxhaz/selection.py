"""Model assessment by conditional predictive ordinates and DIC, and the
(gamma, J) grid search built on them."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import model
from .model import ModelConfig, ModelError, SurvivalDataset, TimePartition

__all__ = [
    "FitStatistics",
    "GridCell",
    "GridResult",
    "InadmissibleMeanError",
    "subject_likelihood",
    "subject_loglik_matrix",
    "compute_cpo",
    "compute_dic",
    "fit_statistics",
    "fit_cell",
    "run_grid",
]


class InadmissibleMeanError(ModelError):
    """The posterior mean violates the hazard constraint, so DIC is undefined."""


@dataclass
class FitStatistics:
    """Per-subject CPO and the B / DIC summaries.

    ``cpo_cv`` is the Monte Carlo coefficient of variation of the
    reciprocal-likelihood average behind each CPO.
    """

    cpo: np.ndarray
    cpo_cv: np.ndarray
    B: float
    dic: float = math.nan
    dev_mean: float = math.nan
    dev_at_mean: float = math.nan
    dic_error: str = ""

    def to_dict(self) -> dict:
        def f(v):
            return float(v) if math.isfinite(v) else None
        return {"B": f(self.B), "dic": f(self.dic), "dev_mean": f(self.dev_mean),
                "dev_at_mean": f(self.dev_at_mean)}


def subject_likelihood(draw, i, data: SurvivalDataset, partition: TimePartition,
                       gamma) -> float:
    """Likelihood factor ``L_i`` of subject ``i`` at parameter ``draw``."""
    one = data.subset([i])
    return math.exp(model.log_likelihood(draw, one, partition, gamma))


def subject_loglik_matrix(chain, data: SurvivalDataset, chunk: int = 256) -> np.ndarray:
    """``log L_i`` at every retained draw, shape ``(M, n)``.

    Subjects whose transformed hazard is negative in any interval get
    ``-inf``.
    """
    gamma = chain.config.gamma
    part = chain.partition
    E = model.exposure_matrix(data.y, part)
    j = model.interval_index(data.y, part)
    ev = data.nu == 1
    out = np.empty((chain.M, data.n))
    for start in range(0, chain.M, chunk):
        beta = chain.beta[start:start + chunk]
        lam = chain.lam[start:start + chunk]
        eta = beta @ data.Z.T
        if gamma == 0:
            h = lam[:, None, :] * np.exp(eta)[:, :, None]
            with np.errstate(divide="ignore"):
                logh_own = np.log(lam[:, j]) + eta
            bad = np.zeros(eta.shape, dtype=bool)
        else:
            base = lam[:, None, :] ** gamma + gamma * eta[:, :, None]
            bad = (base < 0).any(axis=2)
            h = np.clip(base, 0.0, None) ** (1.0 / gamma)
            own = np.take_along_axis(base, np.broadcast_to(j[None, :, None], (len(beta), data.n, 1)), axis=2)[..., 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                logh_own = np.where(own > 0, np.log(np.clip(own, 1e-320, None)) / gamma, -np.inf)
            logh_own[logh_own < np.log(model.HAZARD_FLOOR)] = -np.inf
        ll = -(h * E[None, :, :]).sum(axis=2)
        ll = np.where(ev[None, :], ll + np.where(ev[None, :], logh_own, 0.0), ll)
        ll[bad] = -np.inf
        out[start:start + chunk] = ll
    return out


def compute_cpo(chain, data: SurvivalDataset, return_cv=False):
    """Harmonic-mean estimate of each subject's CPO.

    ``CPO_i = [mean_m 1/L_i(draw_m)]^-1``, computed as a log-sum-exp of
    ``-log L_i``.  A zero likelihood at any draw makes ``CPO_i = 0`` (with a
    warning).

    Returns
    -------
    cpo : ndarray of shape (n,)
    cv : ndarray of shape (n,), only if ``return_cv``
        Coefficient of variation of the Monte Carlo mean of ``1/L_i``.
    """
    ll = subject_loglik_matrix(chain, data)
    M = ll.shape[0]
    neg = -ll
    log_mean_recip = logsumexp(neg, axis=0) - math.log(M)
    log_cpo = -log_mean_recip
    collapsed = ~np.isfinite(log_mean_recip)
    if collapsed.any():
        warnings.warn(
            f"{collapsed.sum()} subject(s) have zero likelihood at some draw; CPO set to 0",
            RuntimeWarning, stacklevel=2,
        )
    cpo = np.exp(log_cpo)
    if not return_cv:
        return cpo
    with np.errstate(invalid="ignore", over="ignore"):
        w = np.exp(neg - neg.max(axis=0))
        sd = w.std(axis=0, ddof=1) if M > 1 else np.zeros(data.n)
        cv = sd / (math.sqrt(M) * w.mean(axis=0))
    cv[collapsed] = np.inf
    return cpo, cv


def compute_dic(chain, data: SurvivalDataset):
    """Return ``(dev_mean, dev_at_mean, dic)`` with ``dic = 2*dev_mean - dev_at_mean``.

    ``dev_mean`` uses the stored per-draw log-likelihoods.

    Raises
    ------
    InadmissibleMeanError
        When the coordinate-wise posterior mean violates the constraint.
    """
    dev_mean = -2.0 * float(np.mean(chain.loglik))
    mean_state = model.ParameterState.from_vector(chain.draws.mean(axis=0), chain.p)
    ll_bar = model.log_likelihood(mean_state, data, chain.partition, chain.config.gamma)
    if not math.isfinite(ll_bar):
        raise InadmissibleMeanError(
            "posterior mean of (beta, lambda) violates the hazard constraint; "
            "DIC is undefined here, compare models with the B statistic instead"
        )
    dev_at_mean = -2.0 * ll_bar
    return dev_mean, dev_at_mean, 2.0 * dev_mean - dev_at_mean


def fit_statistics(chain, data: SurvivalDataset) -> FitStatistics:
    """CPO, B and DIC for one fitted chain (DIC left NaN if undefined)."""
    cpo, cv = compute_cpo(chain, data, return_cv=True)
    with np.errstate(divide="ignore"):
        B = float(np.sum(np.log(cpo)))
    fs = FitStatistics(cpo, cv, B)
    try:
        fs.dev_mean, fs.dev_at_mean, fs.dic = compute_dic(chain, data)
    except InadmissibleMeanError as exc:
        fs.dic_error = str(exc)
    return fs


@dataclass
class GridCell:
    gamma: float
    J: int
    status: str = "ok"
    fit: FitStatistics = None
    summary: object = None
    chain: object = None
    message: str = ""


@dataclass
class GridResult:
    cells: list = field(default_factory=list)
    best_by_B: int = None
    best_by_DIC: int = None

    def table(self, stat="B"):
        """Matrix of a statistic with gammas as rows and J values as columns."""
        gammas = sorted({c.gamma for c in self.cells})
        Js = sorted({c.J for c in self.cells})
        out = np.full((len(gammas), len(Js)), np.nan)
        for c in self.cells:
            if c.fit is not None:
                v = c.fit.B if stat == "B" else c.fit.dic
                out[gammas.index(c.gamma), Js.index(c.J)] = v
        return gammas, Js, out


def fit_cell(data, gamma, J, config, settings, keep_chain=False) -> GridCell:
    """Partition, sample and score one (gamma, J) combination."""
    from .data_io import build_partition
    from .inference import summarize
    from .sampler import run_chain

    cell = GridCell(gamma=float(gamma), J=int(J))
    try:
        part = build_partition(data, J)
        cfg = replace(config, gamma=float(gamma), J=int(J))
        chain = run_chain(data, part, cfg, settings)
        cell.fit = fit_statistics(chain, data)
        cell.summary = summarize(chain)
        if keep_chain:
            cell.chain = chain
    except ModelError as exc:
        cell.status = "failed"
        cell.message = f"{type(exc).__name__}: {exc}"
    return cell


def _fit_cell_args(args):
    return fit_cell(*args)


def run_grid(data: SurvivalDataset, gammas, Js, config: ModelConfig, settings=None,
             jobs: int = 1, keep_chains=False) -> GridResult:
    """Fit every (gamma, J) cell with the same priors and sampler settings.

    Cells that fail (e.g. too few distinct event times for ``J``) are marked
    ``failed`` and skipped when choosing the best cells.  Cells are ordered
    gamma-major, matching the input lists.
    """
    from .sampler import SamplerSettings

    gammas, Js = list(gammas), list(Js)
    if not gammas or not Js:
        raise ValueError("gamma and J lists must be non-empty")
    settings = settings or SamplerSettings()
    tasks = [(data, g, J, config, settings, keep_chains) for g in gammas for J in Js]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cells = list(ex.map(_fit_cell_args, tasks))
    else:
        cells = [_fit_cell_args(t) for t in tasks]
    res = GridResult(cells)
    ok = [i for i, c in enumerate(cells) if c.fit is not None]
    if ok:
        res.best_by_B = max(ok, key=lambda i: cells[i].fit.B)
        with_dic = [i for i in ok if math.isfinite(cells[i].fit.dic)]
        if with_dic:
            res.best_by_DIC = min(with_dic, key=lambda i: cells[i].fit.dic)
    return res
