"""Metropolis-within-Gibbs sampler for the transformation hazard model.

One sweep updates ``beta_1 .. beta_p`` in order by adaptive rejection
sampling from their (log-concave) full conditionals, then
``lambda_1 .. lambda_J`` by random-walk Metropolis on the log scale.
Every coordinate move stays inside the region where all hazards are
nonnegative, so each retained draw is admissible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import log_ndtr

from . import model
from ._kernels import bounds_shift, h_shift, loglik_shift
from .ars import ARSError, ARSStats, ars_sample, initial_abscissae
from .model import (
    ConfigurationError,
    DomainError,
    ModelConfig,
    ModelError,
    ParameterState,
    SurvivalDataset,
    TimePartition,
)

__all__ = [
    "SamplerSettings",
    "ChainOutput",
    "GewekeReport",
    "InitializationError",
    "GibbsSampler",
    "initialize_state",
    "sample_beta_component",
    "sample_lambda_component",
    "run_chain",
    "geweke_diagnostic",
]

LAMBDA_FLOOR = 1e-10


class InitializationError(ModelError):
    """No admissible starting point could be constructed."""


@dataclass(frozen=True)
class SamplerSettings:
    """Chain length, thinning and proposal tuning.

    Defaults give a burn-in of 2000 sweeps, thinning by 5 and 10,000
    retained draws.
    """

    burn_in: int = 2000
    thin: int = 5
    M: int = 10_000
    seed: int = 0
    metropolis_step: float = 0.5
    adapt_window: int = 50
    ars_init_points: int = 3
    target_accept: float = 0.44

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be nonnegative")
        if self.thin < 1 or self.M < 1:
            raise ConfigurationError("thin and M must be at least 1")
        if not self.metropolis_step > 0:
            raise ConfigurationError("metropolis_step must be positive")
        if self.adapt_window < 1:
            raise ConfigurationError("adapt_window must be at least 1")
        if self.ars_init_points < 3:
            raise ConfigurationError("ars_init_points must be at least 3")


@dataclass
class ChainOutput:
    """Retained draws, one row per kept sweep: ``beta_1..beta_p, lambda_1..lambda_J``."""

    draws: np.ndarray
    loglik: np.ndarray
    config: ModelConfig
    settings: SamplerSettings
    partition: TimePartition
    names: tuple
    stats: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.draws.shape[0]

    @property
    def p(self) -> int:
        return self.draws.shape[1] - self.partition.J

    @property
    def J(self) -> int:
        return self.partition.J

    @property
    def beta(self) -> np.ndarray:
        return self.draws[:, : self.p]

    @property
    def lam(self) -> np.ndarray:
        return self.draws[:, self.p:]

    @property
    def param_names(self) -> list:
        return [f"beta_{c}" for c in self.names] + [
            f"lambda_{j + 1}" for j in range(self.J)
        ]

    def state(self, m: int) -> ParameterState:
        return ParameterState.from_vector(self.draws[m], self.p)

    def recompute_loglik(self, data: SurvivalDataset) -> np.ndarray:
        g = self.config.gamma
        return np.array([
            model.log_likelihood(self.state(m), data, self.partition, g)
            for m in range(self.M)
        ])


@dataclass
class GewekeReport:
    z: np.ndarray
    flagged: np.ndarray
    names: list
    window_early: float
    window_late: float

    def to_dict(self) -> dict:
        return {
            "window_early": self.window_early,
            "window_late": self.window_late,
            "parameters": [
                {"name": nm, "z": None if fl else float(z), "flagged": bool(fl)}
                for nm, z, fl in zip(self.names, self.z, self.flagged)
            ],
        }


def _exposure_setup(data: SurvivalDataset, partition: TimePartition):
    E = np.ascontiguousarray(model.exposure_matrix(data.y, partition))
    jidx = np.ascontiguousarray(model.interval_index(data.y, partition), dtype=np.int64)
    return E, jidx


def initialize_state(data: SurvivalDataset, partition: TimePartition,
                     config: ModelConfig) -> ParameterState:
    """Start at ``beta = 0`` and per-interval crude event rates.

    Raises
    ------
    InitializationError
        If an interval has no exposure or no events.
    """
    E, jidx = _exposure_setup(data, partition)
    exposure = E.sum(axis=0)
    events = np.bincount(jidx[data.nu == 1], minlength=partition.J).astype(float)
    for j in range(partition.J):
        if not exposure[j] > 0:
            raise InitializationError(f"interval {j + 1} has zero exposure time")
        if events[j] == 0:
            raise InitializationError(f"interval {j + 1} contains no events")
    lam = np.maximum(events / exposure, LAMBDA_FLOOR)
    return ParameterState(np.zeros(data.p), lam)


class GibbsSampler:
    """Holds the data workspace and the current state of one chain.

    Parameters
    ----------
    data, partition, config
        Model inputs; ``config.check_data`` is applied.
    settings : SamplerSettings
    state : ParameterState, optional
        Admissible starting point; defaults to :func:`initialize_state`.
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded with ``settings.seed``.
    """

    def __init__(self, data, partition, config, settings=None, state=None, rng=None):
        settings = settings or SamplerSettings()
        if data.p < 1:
            raise DomainError("at least one covariate is required")
        if data.n:
            config.check_data(data)
            partition.validate(data, require_events=False)
        elif not 0 <= config.k < data.p:
            raise ConfigurationError(f"k={config.k} out of range for p={data.p}")
        self.data = data
        self.partition = partition
        self.config = config
        self.settings = settings
        self.rng = rng if rng is not None else np.random.default_rng(settings.seed)
        self.gamma = config.gamma
        self.k = config.k
        self.sigma = config.sigma_vector(data.p)
        self.E, self.jidx = _exposure_setup(data, partition)
        self.nu = np.ascontiguousarray(data.nu, dtype=np.int64)
        self.Zt = np.ascontiguousarray(data.Z.T)
        if state is None:
            state = initialize_state(data, partition, config)
        state = state.copy()
        if state.beta.size != data.p or state.lam.size != partition.J:
            raise DomainError("initial state dimensions do not match the model")
        if not model.constraint_satisfied(state, data, self.gamma):
            raise InitializationError("initial state violates the hazard constraint")
        self.state = state
        self.eta = data.Z @ state.beta if data.n else np.zeros(0)
        self._zero = np.zeros(data.n)
        self.width = np.full(data.p, np.nan)
        self._d2 = np.full(data.p, np.nan)
        self.step = np.full(partition.J, float(settings.metropolis_step))
        self.ars_stats = ARSStats()
        self.fallbacks = 0
        self.accepts = np.zeros(partition.J, dtype=np.int64)
        self.attempts = np.zeros(partition.J, dtype=np.int64)

    # -- log targets ---------------------------------------------------------

    def _loglik(self, eta_rest, zcol, x, lam):
        return loglik_shift(eta_rest, zcol, x, lam, self.gamma, self.nu, self.jidx, self.E)

    def _log_c(self, r_rest, zcol, x, minlamg):
        """log c(beta_(-k), lambda) up to the constant log(sqrt(2 pi) sigma_k)."""
        if self.gamma == 0 or self.data.n == 0:
            return 0.0
        h = h_shift(r_rest, zcol, x, self.Zt[self.k], minlamg, self.gamma)
        return float(log_ndtr(h / self.sigma[self.k]))

    def beta_target(self, m):
        """Log full conditional of ``beta_m`` (up to a constant) and its support."""
        st = self.state
        zm = self.Zt[m]
        eta_rest = self.eta - st.beta[m] * zm
        sig = self.sigma[m]
        lam = st.lam
        g = self.gamma
        if g == 0 or self.data.n == 0:
            lo, hi = -math.inf, math.inf
            minlamg = 0.0
        else:
            minlamg = float(np.min(lam**g))
            lo, hi = bounds_shift(eta_rest, zm, minlamg, g)
        if m == self.k or g == 0 or self.data.n == 0:
            def logf(x):
                return self._loglik(eta_rest, zm, x, lam) - 0.5 * (x / sig) ** 2
        else:
            r_rest = eta_rest - st.beta[self.k] * self.Zt[self.k]

            def logf(x):
                return (self._loglik(eta_rest, zm, x, lam) - 0.5 * (x / sig) ** 2
                        - self._log_c(r_rest, zm, x, minlamg))
        return logf, lo, hi, eta_rest

    def lambda_target(self, j):
        """Log full conditional of ``lambda_j`` (up to a constant)."""
        st = self.state
        alpha, xi = self.config.alpha, self.config.xi
        lam = st.lam.copy()
        g = self.gamma
        r = self.eta - st.beta[self.k] * self.Zt[self.k] if self.data.n else self._zero

        def logf(v):
            if not v > 0:
                return -math.inf
            lam[j] = v
            ll = self._loglik(self.eta, self._zero, 0.0, lam)
            if ll == -math.inf:
                return ll
            out = ll + (alpha - 1.0) * math.log(v) - xi * v
            if g > 0:
                out -= self._log_c(r, self._zero, 0.0, float(np.min(lam**g)))
            return out

        return logf

    # -- coordinate updates --------------------------------------------------

    def _initial_width(self, logf, x, lo, hi, m):
        d = 1e-3 * max(1.0, abs(x))
        if lo < x - d and x + d < hi:
            f0, fm, fp = logf(x), logf(x - d), logf(x + d)
            curv = (fp - 2.0 * f0 + fm) / (d * d)
            if math.isfinite(curv) and curv < 0:
                return 2.0 / math.sqrt(-curv)
        return self.sigma[m]

    def update_beta(self, m):
        """Redraw ``beta_m`` from its full conditional; returns the new value."""
        logf, lo, hi, eta_rest = self.beta_target(m)
        x0 = self.state.beta[m]
        if not lo < hi:
            return x0
        if not math.isfinite(self.width[m]):
            self.width[m] = self._initial_width(logf, x0, lo, hi, m)
        pts = initial_abscissae(x0, self.width[m], lo, hi, self.settings.ars_init_points)
        try:
            x, stats = ars_sample(logf, lo, hi, pts, self.rng)
            self.ars_stats.add(stats)
        except ARSError:
            self.fallbacks += 1
            x = self._metropolis_beta(logf, x0, lo, hi, self.sigma[m] / 10.0)
        d2 = (x - x0) ** 2
        self._d2[m] = d2 if not math.isfinite(self._d2[m]) else 0.9 * self._d2[m] + 0.1 * d2
        # E[(x - x0)^2] is twice the conditional variance; abscissae go ~2 SD out
        w = math.sqrt(2.0 * self._d2[m])
        if w > 1e-12 * (1.0 + abs(x)):
            self.width[m] = w
        self.state.beta[m] = x
        self.eta = eta_rest + x * self.Zt[m]
        return x

    def _metropolis_beta(self, logf, x0, lo, hi, scale):
        prop = x0 + scale * self.rng.standard_normal()
        if not lo < prop < hi:
            return x0
        f1 = logf(prop)
        f0 = logf(x0)
        if math.log(self.rng.random()) < f1 - f0:
            return prop
        return x0

    def update_lambda(self, j):
        """One log-scale random-walk Metropolis step for ``lambda_j``.

        Returns True when the proposal was accepted.
        """
        logf = self.lambda_target(j)
        cur = self.state.lam[j]
        prop = cur * math.exp(self.step[j] * self.rng.standard_normal())
        f1 = logf(prop)
        f0 = logf(cur)
        self.attempts[j] += 1
        # log-normal proposal: Jacobian term log(prop / cur)
        log_ratio = f1 - f0 + math.log(prop) - math.log(cur)
        if f1 > -math.inf and math.log(self.rng.random()) < log_ratio:
            self.state.lam[j] = prop
            self.accepts[j] += 1
            return True
        return False

    def sweep(self, check=False):
        """One systematic scan; returns the acceptance flags of the lambda steps."""
        for m in range(self.data.p):
            self.update_beta(m)
            if check:
                self._assert_admissible()
        flags = []
        for j in range(self.partition.J):
            flags.append(self.update_lambda(j))
            if check:
                self._assert_admissible()
        return flags

    def _assert_admissible(self):
        assert model.constraint_satisfied(self.state, self.data, self.gamma), self.state

    def adapt(self, n_adapt):
        """Robbins-Monro nudge of the log proposal scales toward the target rate."""
        rate = self.accepts / np.maximum(self.attempts, 1)
        gain = 1.0 / math.sqrt(n_adapt)
        self.step = self.step * np.exp(gain * (rate - self.settings.target_accept))
        self.accepts[:] = 0
        self.attempts[:] = 0


def sample_beta_component(state, m, data, partition, config, rng, width=None) -> float:
    """Draw ``beta_m`` from its full conditional given the rest of ``state``."""
    s = GibbsSampler(data, partition, config, SamplerSettings(), state=state, rng=rng)
    if width is not None:
        s.width[m] = width
    return s.update_beta(m)


def sample_lambda_component(state, j, data, partition, config, rng, step=0.5) -> float:
    """One Metropolis update of ``lambda_j``; returns the (possibly unchanged) value."""
    s = GibbsSampler(data, partition, config, SamplerSettings(metropolis_step=step),
                     state=state, rng=rng)
    s.update_lambda(j)
    return s.state.lam[j]


def run_chain(data: SurvivalDataset, partition: TimePartition, config: ModelConfig,
              settings: SamplerSettings = None, init: ParameterState = None,
              trace=None, check=False) -> ChainOutput:
    """Run burn-in plus ``M * thin`` sweeps and keep every ``thin``-th draw.

    Parameters
    ----------
    init : ParameterState, optional
        Starting point; by default :func:`initialize_state`.
    trace : file-like, optional
        Receives one JSON object per sweep (iteration, parameters, kernel
        log-likelihood, lambda acceptance flags).
    check : bool
        Assert admissibility after every coordinate update.
    """
    settings = settings or SamplerSettings()
    sampler = GibbsSampler(data, partition, config, settings, state=init)
    p, J = data.p, partition.J
    draws = np.empty((settings.M, p + J))
    loglik = np.empty(settings.M)
    total = settings.burn_in + settings.M * settings.thin
    n_adapt = 0
    kept = 0
    post = {"accepts": np.zeros(J, dtype=np.int64), "ars": ARSStats(), "fallbacks": 0}
    for it in range(total):
        if it == settings.burn_in:
            ars0 = ARSStats(**asdict(sampler.ars_stats))
            fb0 = sampler.fallbacks
            sampler.accepts[:] = 0
            sampler.attempts[:] = 0
        flags = sampler.sweep(check=check)
        if it < settings.burn_in and (it + 1) % settings.adapt_window == 0:
            n_adapt += 1
            sampler.adapt(n_adapt)
        if it >= settings.burn_in:
            post["accepts"] += np.asarray(flags, dtype=np.int64)
            if (it - settings.burn_in + 1) % settings.thin == 0:
                draws[kept] = sampler.state.vector()
                loglik[kept] = model.log_likelihood(sampler.state, data, partition, config.gamma)
                kept += 1
        if trace is not None:
            rec = {
                "iteration": it,
                "params": sampler.state.vector().tolist(),
                "loglik": sampler._loglik(sampler.eta, sampler._zero, 0.0, sampler.state.lam),
                "lambda_accepted": [bool(f) for f in flags],
            }
            trace.write(json.dumps(rec) + "\n")
    if settings.burn_in == 0:
        ars0, fb0 = ARSStats(), 0
    ars = sampler.ars_stats
    n_post = settings.M * settings.thin
    stats = {
        "lambda_accept_rate": (post["accepts"] / n_post).tolist(),
        "lambda_step": sampler.step.tolist(),
        "ars_evaluations": ars.evaluations - ars0.evaluations,
        "ars_squeeze_accepts": ars.squeeze_accepts - ars0.squeeze_accepts,
        "ars_envelope_accepts": ars.envelope_accepts - ars0.envelope_accepts,
        "ars_rejections": ars.rejections - ars0.rejections,
        "ars_fallbacks": sampler.fallbacks - fb0,
        "ars_fallbacks_total": sampler.fallbacks,
    }
    return ChainOutput(draws, loglik, config, settings, partition, data.covariate_names, stats)


def _var_of_mean(x):
    """Batch-means variance of the mean with floor(sqrt(n)) batches."""
    n = x.size
    B = max(int(math.isqrt(n)), 2)
    size = n // B
    bm = x[: B * size].reshape(B, size).mean(axis=1)
    return bm.var(ddof=1) / B


def geweke_diagnostic(chain, early_fraction=0.1, late_fraction=0.5) -> GewekeReport:
    """Geweke z-scores comparing the early and late parts of each chain column.

    ``chain`` is a :class:`ChainOutput` or a 2-D array of draws.  Columns
    that are constant (or whose segment variances are both zero) are
    flagged and get ``z = nan``.
    """
    if isinstance(chain, ChainOutput):
        x, names = chain.draws, chain.param_names
    else:
        x = np.asarray(chain, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        names = [f"param_{c + 1}" for c in range(x.shape[1])]
    n = x.shape[0]
    if n < 100:
        raise ValueError("Geweke diagnostic needs at least 100 draws")
    if not (0 < early_fraction and 0 < late_fraction and early_fraction + late_fraction <= 1):
        raise ValueError("window fractions must be positive and sum to at most 1")
    na = int(early_fraction * n)
    nb = int(late_fraction * n)
    z = np.full(x.shape[1], np.nan)
    flagged = np.zeros(x.shape[1], dtype=bool)
    for c in range(x.shape[1]):
        col = x[:, c]
        a, b = col[:na], col[n - nb:]
        v = _var_of_mean(a) + _var_of_mean(b)
        if np.ptp(col) == 0 or not v > 0:
            flagged[c] = True
            continue
        z[c] = (a.mean() - b.mean()) / math.sqrt(v)
    return GewekeReport(z, flagged, list(names), early_fraction, late_fraction)
