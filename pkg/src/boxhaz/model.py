"""Domain types and closed-form mathematics of the Box-Cox transformation
hazard model with a piecewise-constant baseline.

The hazard of subject ``i`` in interval ``j`` is

    h_ij = (lambda_j**gamma + gamma * eta_i)**(1/gamma),   gamma in (0, 1]
    h_ij = lambda_j * exp(eta_i),                          gamma == 0

with ``eta_i = beta' Z_i``.  For ``gamma > 0`` every pair must satisfy
``lambda_j**gamma + gamma * eta_i >= 0``.

Normal tail probabilities go through :func:`scipy.special.log_ndtr`, the
Cephes erf/erfc routine with an asymptotic series in the far tail (relative
error near 1e-15 over the whole real line).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

__all__ = [
    "ModelError",
    "DomainError",
    "ConstraintError",
    "ConfigurationError",
    "SurvivalDataset",
    "TimePartition",
    "ModelConfig",
    "ParameterState",
    "box_cox",
    "hazard",
    "constraint_satisfied",
    "h_gamma",
    "exposure_matrix",
    "interval_index",
    "log_likelihood",
    "subject_log_likelihoods",
    "log_norm_constant",
    "log_prior_beta_k",
    "log_prior_beta_l",
    "log_prior_lambda_j",
    "admissible_interval",
]

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
# hazards below this are treated as zero inside logs
HAZARD_FLOOR = 1e-300


class ModelError(ValueError):
    """Base class for all model errors."""


class DomainError(ModelError):
    """Argument outside the domain of a function, or mismatched shapes."""


class ConstraintError(ModelError):
    """Hazard nonnegativity constraint violated."""


class ConfigurationError(ModelError):
    """Model configuration inconsistent with the data."""


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored survival data.

    Parameters
    ----------
    y : array of shape (n,)
        Observed times, ``min(T_i, C_i)``.
    nu : array of shape (n,)
        Event indicators, 1 for an observed failure and 0 for censoring.
    Z : array of shape (n, p)
        Covariate matrix.
    covariate_names : tuple of str, optional
        Column labels; defaults to ``z1 .. zp``.

    A dataset without events is allowed here (useful for prior-only runs);
    partitioning and file ingestion enforce the one-event requirement.
    """

    y: np.ndarray
    nu: np.ndarray
    Z: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        nu = np.asarray(self.nu).reshape(-1)
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1) if y.size else Z.reshape(0, -1)
        if Z.ndim != 2 or Z.shape[0] != y.size or nu.size != y.size:
            raise DomainError(
                f"inconsistent shapes: y {y.shape}, nu {nu.shape}, Z {Z.shape}"
            )
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise DomainError("observed times must be finite and nonnegative")
        if not np.all(np.isin(nu, (0, 1))):
            raise DomainError("event indicators must be 0 or 1")
        if not np.all(np.isfinite(Z)):
            raise DomainError("covariates must be finite")
        names = tuple(self.covariate_names) or tuple(
            f"z{c + 1}" for c in range(Z.shape[1])
        )
        if len(names) != Z.shape[1]:
            raise DomainError("covariate_names length does not match Z")
        for arr in (y, Z):
            arr.setflags(write=False)
        nu = nu.astype(np.int64)
        nu.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.nu.sum())

    def subset(self, idx) -> "SurvivalDataset":
        """Return the dataset restricted to rows ``idx``."""
        idx = np.asarray(idx)
        return SurvivalDataset(
            self.y[idx], self.nu[idx], self.Z[idx], self.covariate_names
        )


@dataclass(frozen=True)
class TimePartition:
    """Cut points ``0 = s_0 < s_1 < ... < s_J`` of the time axis."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if s.size < 2:
            raise DomainError("a partition needs at least two cut points")
        if s[0] != 0.0:
            raise DomainError("the first cut point must be 0")
        if not np.all(np.isfinite(s)) or np.any(np.diff(s) <= 0):
            raise DomainError("cut points must be finite and strictly increasing")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def J(self) -> int:
        return self.s.size - 1

    def validate(self, data: SurvivalDataset, require_events: bool = True):
        """Check the partition covers ``data`` and every interval has an event."""
        if data.n and self.s[-1] <= data.y.max():
            raise DomainError(
                f"last cut point {self.s[-1]!r} must exceed max time {data.y.max()!r}"
            )
        if require_events:
            j = interval_index(data.y[data.nu == 1], self)
            counts = np.bincount(j, minlength=self.J)
            empty = np.flatnonzero(counts == 0)
            if empty.size:
                raise DomainError(
                    f"interval {empty[0] + 1} of {self.J} contains no event"
                )


@dataclass(frozen=True)
class ModelConfig:
    """Fixed model settings and prior hyperparameters.

    ``k`` is the 0-based column index of the coefficient that carries the
    truncated normal prior.  ``sigma`` holds one prior standard deviation per
    coefficient (a scalar is broadcast once ``p`` is known).
    """

    gamma: float
    J: int = 1
    k: int = 0
    sigma: tuple = (100.0,)
    alpha: float = 2.0
    xi: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.J < 1:
            raise ConfigurationError("J must be at least 1")
        sigma = tuple(float(v) for v in np.atleast_1d(self.sigma))
        if not sigma or any(not v > 0 for v in sigma):
            raise ConfigurationError("prior standard deviations must be positive")
        if not (self.alpha > 0 and self.xi > 0):
            raise ConfigurationError("Gamma prior shape and rate must be positive")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "gamma", float(self.gamma))

    def sigma_vector(self, p: int) -> np.ndarray:
        if len(self.sigma) == 1:
            return np.full(p, self.sigma[0])
        if len(self.sigma) != p:
            raise ConfigurationError(
                f"sigma has {len(self.sigma)} entries but there are {p} covariates"
            )
        return np.asarray(self.sigma)

    def check_data(self, data: SurvivalDataset):
        """Validate ``k`` and column-``k`` positivity against ``data``."""
        if not 0 <= self.k < data.p:
            raise ConfigurationError(f"k={self.k} out of range for p={data.p}")
        self.sigma_vector(data.p)
        if self.gamma > 0:
            bad = np.flatnonzero(data.Z[:, self.k] <= 0)
            if bad.size:
                raise ConfigurationError(
                    f"constrained covariate {data.covariate_names[self.k]!r} must be "
                    f"strictly positive; subject {bad[0] + 1} has "
                    f"{data.Z[bad[0], self.k]!r}"
                )


@dataclass
class ParameterState:
    """Current regression coefficients and baseline hazard levels."""

    beta: np.ndarray
    lam: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)

    def copy(self) -> "ParameterState":
        return ParameterState(self.beta.copy(), self.lam.copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.lam])

    @classmethod
    def from_vector(cls, v, p: int) -> "ParameterState":
        v = np.asarray(v, dtype=float)
        return cls(v[:p].copy(), v[p:].copy())


def box_cox(y, gamma):
    """Box-Cox power transform ``(y**gamma - 1)/gamma``, ``log y`` at 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("box_cox is defined for positive arguments only")
    if gamma == 0:
        out = np.log(y)
    else:
        # expm1 keeps the small-gamma limit continuous
        out = np.expm1(gamma * np.log(y)) / gamma
    return out if out.ndim else float(out)


def hazard(lambda_j, eta, gamma):
    """Hazard ``{lambda_j**gamma + gamma*eta}**(1/gamma)`` (Cox form at 0).

    Raises
    ------
    DomainError
        If ``lambda_j <= 0``.
    ConstraintError
        If ``gamma > 0`` and the transformed hazard is negative.
    """
    lam = np.asarray(lambda_j, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("baseline hazard levels must be positive")
    if gamma == 0:
        out = lam * np.exp(eta)
    else:
        base = lam**gamma + gamma * eta
        if np.any(base < 0):
            raise ConstraintError(
                "lambda**gamma + gamma*eta < 0: hazard would be negative"
            )
        out = base ** (1.0 / gamma)
    return out if out.ndim else float(out)


def _check_dims(state: ParameterState, data: SurvivalDataset, J=None):
    if state.beta.size != data.p:
        raise DomainError(
            f"beta has {state.beta.size} entries but data has {data.p} covariates"
        )
    if J is not None and state.lam.size != J:
        raise DomainError(f"lambda has {state.lam.size} entries but J = {J}")


def constraint_satisfied(state: ParameterState, data: SurvivalDataset, gamma) -> bool:
    """True iff ``lambda_j**gamma + gamma*beta'Z_i >= 0`` for every i, j."""
    _check_dims(state, data)
    if np.any(state.lam <= 0):
        return False
    if gamma == 0 or data.n == 0:
        return True
    eta = data.Z @ state.beta
    return bool(np.min(state.lam**gamma) + gamma * eta.min() >= 0)


def h_gamma(lam, beta_minus_k, data: SurvivalDataset, k: int, gamma) -> float:
    """Truncation bound: ``beta_k`` is admissible iff ``beta_k >= -h_gamma``.

    Minimum over subjects and intervals of
    ``(lambda_j**gamma + gamma*beta_(-k)'Z_i(-k)) / (gamma*Z_ik)``.
    Returns ``+inf`` for an empty dataset.
    """
    if not gamma > 0:
        raise DomainError("h_gamma is defined for gamma > 0 only")
    zk = data.Z[:, k]
    bad = np.flatnonzero(zk <= 0)
    if bad.size:
        raise ConfigurationError(
            f"column {k} must be strictly positive; subject {bad[0] + 1} has {zk[bad[0]]!r}"
        )
    if data.n == 0:
        return np.inf
    lam = np.asarray(lam, dtype=float)
    rest = np.delete(data.Z, k, axis=1) @ np.asarray(beta_minus_k, dtype=float)
    return float(np.min((np.min(lam**gamma) + gamma * rest) / (gamma * zk)))


def interval_index(t, partition: TimePartition) -> np.ndarray:
    """0-based interval index with ``t`` in ``(s_{j-1}, s_j]``; ``t = 0`` maps to 0."""
    j = np.searchsorted(partition.s, np.asarray(t, dtype=float), side="left") - 1
    return np.clip(j, 0, partition.J - 1)


def exposure_matrix(t, partition: TimePartition) -> np.ndarray:
    """Time spent in each interval up to ``t``: shape ``(len(t), J)``."""
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    s = partition.s
    return np.clip(np.minimum(t, s[1:]) - s[:-1], 0.0, None)


def _log_hazard_matrix(eta, lam, gamma):
    """log h_ij for all pairs; -inf where the hazard is zero or negative."""
    if gamma == 0:
        return np.log(lam)[None, :] + eta[:, None]
    base = lam[None, :] ** gamma + gamma * eta[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(base) / gamma
    out[~(base > 0)] = -np.inf
    out[out < np.log(HAZARD_FLOOR)] = -np.inf
    return out


def subject_log_likelihoods(state: ParameterState, data: SurvivalDataset,
                            partition: TimePartition, gamma) -> np.ndarray:
    """Per-subject log-likelihood contributions ``log L_i``.

    Subjects with a negative transformed hazard in any interval get ``-inf``.
    """
    _check_dims(state, data, partition.J)
    if data.n == 0:
        return np.zeros(0)
    if np.any(state.lam <= 0):
        return np.full(data.n, -np.inf)
    eta = data.Z @ state.beta
    logh = _log_hazard_matrix(eta, state.lam, gamma)
    E = exposure_matrix(data.y, partition)
    j = interval_index(data.y, partition)
    rows = np.arange(data.n)
    h = np.exp(logh)
    cum = (h * E).sum(axis=1)
    ev = data.nu == 1
    out = -cum
    out[ev] = out[ev] + logh[rows[ev], j[ev]]
    if gamma > 0:
        base_min = np.min(state.lam**gamma) + gamma * eta
        out[base_min < 0] = -np.inf
    return out


def log_likelihood(state: ParameterState, data: SurvivalDataset,
                   partition: TimePartition, gamma) -> float:
    """Piecewise-exponential log-likelihood of the transformation model.

    Returns ``-inf`` when the hazard constraint is violated anywhere or an
    observed event has zero hazard.
    """
    _check_dims(state, data, partition.J)
    if not constraint_satisfied(state, data, gamma):
        return -np.inf
    return float(subject_log_likelihoods(state, data, partition, gamma).sum())


def log_norm_constant(lam, beta_minus_k, data: SurvivalDataset, k: int,
                      sigma_k: float, gamma) -> float:
    """``log c = log(sqrt(2 pi) sigma_k (1 - Phi(-h/sigma_k)))``.

    Uses ``1 - Phi(-x) = Phi(x)`` and ``log_ndtr`` so that large ``|h/sigma_k|``
    neither underflows nor loses relative accuracy.
    """
    h = h_gamma(lam, beta_minus_k, data, k, gamma)
    return _log_c_from_h(h, sigma_k)


def _log_c_from_h(h, sigma_k):
    return LOG_SQRT_2PI + np.log(sigma_k) + float(log_ndtr(h / sigma_k))


def log_prior_beta_k(beta_k, lam, beta_minus_k, data: SurvivalDataset, k: int,
                     sigma_k: float, gamma) -> float:
    """Normalized log-density of the truncated normal prior on ``beta_k``.

    At ``gamma = 0`` there is no truncation and this is the untruncated
    normal log-density.
    """
    if gamma == 0:
        return -0.5 * (beta_k / sigma_k) ** 2 - LOG_SQRT_2PI - np.log(sigma_k)
    h = h_gamma(lam, beta_minus_k, data, k, gamma)
    if beta_k < -h:
        return -np.inf
    return -0.5 * (beta_k / sigma_k) ** 2 - _log_c_from_h(h, sigma_k)


def log_prior_beta_l(beta_l, sigma_l) -> float:
    """Unnormalized normal kernel ``-beta_l**2 / (2 sigma_l**2)``."""
    return -0.5 * (beta_l / sigma_l) ** 2


def log_prior_lambda_j(lambda_j, alpha, xi) -> float:
    """Unnormalized Gamma kernel ``(alpha-1) log lambda - xi lambda``."""
    if lambda_j <= 0:
        return -np.inf
    return (alpha - 1.0) * np.log(lambda_j) - xi * lambda_j


def admissible_interval(m: int, beta, lam, data: SurvivalDataset, gamma):
    """Range ``(lo, hi)`` of ``beta_m`` keeping the constraint satisfied.

    The other coefficients and ``lam`` are held fixed.  At ``gamma = 0`` the
    whole real line is admissible.
    """
    if gamma == 0 or data.n == 0:
        return -np.inf, np.inf
    beta = np.asarray(beta, dtype=float)
    zm = data.Z[:, m]
    rest = data.Z @ beta - zm * beta[m]
    slack = np.min(np.asarray(lam, dtype=float) ** gamma) + gamma * rest
    pos, neg = zm > 0, zm < 0
    lo = np.max(-slack[pos] / (gamma * zm[pos])) if pos.any() else -np.inf
    hi = np.min(-slack[neg] / (gamma * zm[neg])) if neg.any() else np.inf
    return float(lo), float(hi)
