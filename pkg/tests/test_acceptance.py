"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The replication study runs 100 replications per design by default; set
``BOXHAZ_ACCEPTANCE_REPS=10`` for a smoke run that finishes in minutes.
"""

import io
import json
import math
import os
import time

import jsonschema
import numpy as np
import pytest
from scipy import integrate
from scipy.special import log_ndtr, logsumexp

from boxhaz import data_io, inference, model, selection
from boxhaz.data_io import SimulationSpec, build_partition, simulate
from boxhaz.model import ModelConfig, ParameterState, SurvivalDataset, TimePartition
from boxhaz.sampler import GibbsSampler, SamplerSettings, run_chain

from conftest import random_instance

RESULTS = {}
REPS = int(os.environ.get("BOXHAZ_ACCEPTANCE_REPS", "100"))


def record(name, passed, detail):
    RESULTS[name] = (bool(passed), detail)


def batch_se(x, batches=50):
    x = np.asarray(x, dtype=float)
    size = x.size // batches
    bm = x[: batches * size].reshape(batches, size).mean(axis=1)
    return bm.std(ddof=1) / math.sqrt(batches)


# -- replication study ------------------------------------------------------

TRUTH = np.array([0.7, 1.0])
# reference posterior means and SDs at n = 300 by censoring design
REFERENCE = {"n300_c0": ((0.7705, 1.0556), (0.2177, 0.4049)),
             "n300_c25": ((0.7430, 1.0542), (0.2315, 0.4534))}
DESIGNS = {"n300_c0": (300, "none"), "n300_c25": (300, "uniform"), "n1000_c0": (1000, "none")}


def replicate(n, censoring, seed):
    spec = SimulationSpec(n=n, censoring=censoring, censoring_rate=0.25, seed=seed)
    data = simulate(spec).data
    chain = run_chain(data, build_partition(data, 1), ModelConfig(gamma=0.5, J=1),
                      SamplerSettings(burn_in=200, thin=1, M=5000, seed=seed))
    beta = chain.beta
    return beta.mean(axis=0), beta.std(axis=0, ddof=1), 1.0 - data.nu.mean()


@pytest.fixture(scope="module")
def replication_study():
    out = {}
    for key, (n, cens) in DESIGNS.items():
        t0 = time.time()
        reps = [replicate(n, cens, 1000 * n + r) for r in range(REPS)]
        means = np.array([r[0] for r in reps])
        sds = np.array([r[1] for r in reps])
        out[key] = {
            "mean": means.mean(axis=0),
            "rep_se": means.std(axis=0, ddof=1) / math.sqrt(REPS),
            "sd": sds.mean(axis=0),
            "censoring": float(np.mean([r[2] for r in reps])),
            "seconds": time.time() - t0,
        }
    return out


def _fmt(v):
    return "(" + ", ".join(f"{x:.4f}" for x in v) + ")"


def test_replication_reference_values(replication_study):
    ok, parts = True, []
    for key, (mean, sd) in REFERENCE.items():
        r = replication_study[key]
        z = (r["mean"] - np.array(mean)) / r["rep_se"]
        ok &= bool(np.all(np.abs(z) <= 3))
        parts.append(f"{key}: grand mean {_fmt(r['mean'])} +/- {_fmt(r['rep_se'])} vs {_fmt(mean)} "
                     f"(z {_fmt(z)}), mean SD {_fmt(r['sd'])} vs {_fmt(sd)}, "
                     f"censoring {r['censoring']:.3f}")
    record("replication study: grand means within 3 replication SEs of reference (n=300)", ok,
           f"{REPS} reps; " + "; ".join(parts))
    assert ok


def test_replication_trend(replication_study):
    small, large = replication_study["n300_c0"], replication_study["n1000_c0"]
    closer = np.abs(large["mean"] - TRUTH) < np.abs(small["mean"] - TRUTH)
    shrink = large["sd"] < small["sd"]
    ok = bool(closer.all() and shrink.all())
    record("replication study: means approach truth and SDs shrink as n grows", ok,
           f"n=300 mean {_fmt(small['mean'])} sd {_fmt(small['sd'])}; "
           f"n=1000 mean {_fmt(large['mean'])} sd {_fmt(large['sd'])}")
    assert ok


# -- special cases ----------------------------------------------------------

def cox_loglik(beta, lam, y, nu, Z, s):
    total = 0.0
    for i in range(len(y)):
        rate = math.exp(sum(b * z for b, z in zip(beta, Z[i])))
        for j in range(len(lam)):
            lo, hi = s[j], s[j + 1]
            if y[i] > lo:
                total -= lam[j] * rate * (min(y[i], hi) - lo)
            if nu[i] and lo < y[i] <= hi or (nu[i] and j == 0 and y[i] == 0):
                total += math.log(lam[j] * rate)
    return total


def additive_loglik(beta, lam, y, nu, Z, s):
    total = 0.0
    for i in range(len(y)):
        eta = sum(b * z for b, z in zip(beta, Z[i]))
        if any(l + eta < 0 for l in lam):
            return -math.inf
        for j in range(len(lam)):
            lo, hi = s[j], s[j + 1]
            h = lam[j] + eta
            if y[i] > lo:
                total -= h * (min(y[i], hi) - lo)
            if nu[i] and (lo < y[i] <= hi or (j == 0 and y[i] == 0)):
                if h <= 0:
                    return -math.inf
                total += math.log(h)
    return total


def test_special_case_oracles():
    rng = np.random.default_rng(2024)
    worst, bad = 0.0, 0
    for _ in range(1000):
        data, part = random_instance(rng, n_max=10, J_max=3, p_max=3, positive_k=False)
        beta = rng.normal(0, 0.3, data.p)
        lam = rng.uniform(0.3, 2.0, part.J)
        args = (beta, lam, data.y, data.nu, data.Z, part.s)
        for gamma, oracle in ((0.0, cox_loglik), (1.0, additive_loglik)):
            got = model.log_likelihood(ParameterState(beta, lam), data, part, gamma)
            want = oracle(*args)
            if math.isinf(want) or math.isinf(got):
                bad += got != want
                continue
            worst = max(worst, abs(got - want))
    ok = worst <= 1e-10 and bad == 0
    record("special cases: Cox and additive forms match independent likelihoods", ok,
           f"1000 instances, max abs diff {worst:.2e}, sentinel mismatches {bad}")
    assert ok


# -- continuity in gamma ----------------------------------------------------

def test_box_cox_continuity():
    g = 1e-6
    worst, worst_at, nonfinite = 0.0, None, 0
    held = 0.0
    for lam in np.geomspace(0.1, 10.0, 25):
        lower = -lam**g / g + 0.01
        # geometric spacing toward the admissible lower end, linear near zero
        etas = np.concatenate([-np.geomspace(-lower, 1e-3, 60), np.linspace(-1, 5, 61)])
        for eta in etas:
            h0 = model.hazard(lam, eta, 0.0)
            h1 = model.hazard(lam, eta, g)
            rel = abs(h1 - h0) / h0 if h0 > 0 else math.nan
            if not math.isfinite(rel):
                nonfinite += 1
                continue
            if rel < 1e-4:
                held = min(held, eta)
            if rel > worst:
                worst, worst_at = rel, (lam, eta)
    ok = worst < 1e-4 and nonfinite == 0
    record("Box-Cox continuity at gamma = 1e-6 over the admissible eta range", ok,
           f"max rel diff {worst:.3g} at (lambda, eta) = ({worst_at[0]:.3g}, {worst_at[1]:.4g}); "
           f"{nonfinite} grid points with both hazards underflowing to 0; "
           f"bound holds down to eta = {held:.3g}")
    assert ok


# -- normalizing constant ---------------------------------------------------

def test_normalizing_constant_quadrature():
    # p = 2 with Z = (1, 1), lambda = 1, gamma = 1 gives h = 1 + beta_2
    data = SurvivalDataset([1.0], [1], [[1.0, 1.0]])
    worst = 0.0
    for sigma in (0.5, 1.0, 3.0):
        for x in np.linspace(-6, 6, 121):
            h = x * sigma
            got = model.log_norm_constant([1.0], [h - 1.0], data, 0, sigma, 1.0)
            val, _ = integrate.quad(lambda t: math.exp(-t * t / (2 * sigma * sigma)), -h, np.inf,
                                    epsabs=0, epsrel=1e-13, limit=200)
            worst = max(worst, abs(got - math.log(val)))
    ok = worst <= 1e-8
    record("normalizing constant matches adaptive quadrature for h/sigma in [-6, 6]", ok,
           f"max abs log diff {worst:.2e}")
    assert ok


# -- prior recovery ---------------------------------------------------------

def test_prior_recovery():
    data = SurvivalDataset(np.zeros(0), np.zeros(0), np.zeros((0, 1)))
    part = TimePartition([0.0, 1.0])
    cfg = ModelConfig(gamma=0.5)
    chain = run_chain(data, part, cfg, SamplerSettings(burn_in=2000, thin=1, M=100000, seed=5),
                      init=ParameterState([0.0], [200.0]))
    lam, beta = chain.lam[:, 0], chain.beta[:, 0]
    # no subjects: the truncation bound is +inf and beta's prior is N(0, 100^2)
    checks = {
        "lambda mean": (lam.mean(), 200.0, batch_se(lam)),
        "lambda var": (lam.var(), 2.0 / 0.01**2, batch_se((lam - 200.0) ** 2)),
        "beta mean": (beta.mean(), 0.0, batch_se(beta)),
        "beta var": (np.mean(beta**2), 100.0**2, batch_se(beta**2)),
    }
    z = {k: (est - want) / se for k, (est, want, se) in checks.items()}
    ok = all(abs(v) <= 3 for v in z.values())
    record("prior recovery with empty data (1e5 draws)", ok,
           "; ".join(f"{k} {checks[k][0]:.4g} vs {checks[k][1]:.4g} (z {z[k]:+.2f})" for k in checks))
    assert ok


# -- log-concavity ----------------------------------------------------------

def test_beta_conditionals_log_concave():
    data = simulate(SimulationSpec(n=300, seed=77)).data
    part = build_partition(data, 1)
    rng = np.random.default_rng(13)
    worst = -math.inf
    count = 0
    for gamma in (0.25, 0.5, 0.75, 1.0):
        s = GibbsSampler(data, part, ModelConfig(gamma=gamma), rng=rng)
        done = 0
        while done < 100:
            beta = rng.normal([0.5, 0.8], [0.5, 0.8])
            lam = rng.uniform(0.05, 5.0, 1)
            st = ParameterState(beta, lam)
            if not model.constraint_satisfied(st, data, gamma):
                continue
            s.state = st
            s.eta = data.Z @ beta
            for m in range(data.p):
                logf, lo, hi, _ = s.beta_target(m)
                x = beta[m]
                d = 1e-3 * max(1.0, abs(x))
                if not (lo < x - d and x + d < hi):
                    continue
                f0, fm, fp = logf(x), logf(x - d), logf(x + d)
                worst = max(worst, (fp - 2 * f0 + fm) / (d * d))
                count += 1
            done += 1
    ok = worst <= 1e-6
    record("log-concavity of beta full conditionals (FD second derivative)", ok,
           f"{count} interior evaluations over 4 gammas, max second difference {worst:.3g}")
    assert ok


# -- CPO oracle -------------------------------------------------------------

CPO_GAMMA, CPO_SIGMA, CPO_ALPHA, CPO_XI = 0.5, 1.0, 2.0, 1.0
CPO_Y = np.array([1.0, 1.5, 2.0])
CPO_NU = np.array([1, 0, 1])
CPO_Z = np.array([1.0, 2.0, 1.5])


def _log_joint(beta, lam, subjects):
    """Log prior times the likelihood of ``subjects``; the prior's truncation uses every Z."""
    g = CPO_GAMMA
    h = lam**g / (g * CPO_Z.max())
    out = (-0.5 * (beta / CPO_SIGMA) ** 2
           - 0.5 * math.log(2 * math.pi) - math.log(CPO_SIGMA) - log_ndtr(h / CPO_SIGMA)
           + (CPO_ALPHA - 1) * np.log(lam) - CPO_XI * lam)
    for i in subjects:
        base = lam**g + g * beta * CPO_Z[i]
        hz = np.where(base > 0, np.abs(base) ** (1 / g), 0.0)
        with np.errstate(divide="ignore"):
            out = out + CPO_NU[i] * np.log(hz) - hz * CPO_Y[i]
    return np.where(beta >= -h, out, -np.inf)


def _log_evidence(subjects, nodes=200, u_range=(-10.0, 3.0), width=15.0):
    """2-D Gauss-Legendre over log(lambda) and beta above its truncation point."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = u_range
    u = 0.5 * (b - a) * x + 0.5 * (b + a)
    wu = 0.5 * (b - a) * w
    lam = np.exp(u)
    h = lam**CPO_GAMMA / (CPO_GAMMA * CPO_Z.max())
    t = 0.5 * width * (x + 1)
    beta = -h[:, None] + t[None, :]
    wb = 0.5 * width * w
    lf = _log_joint(beta, np.broadcast_to(lam[:, None], beta.shape), subjects) + u[:, None]
    return logsumexp(lf + np.log(wu)[:, None] + np.log(wb)[None, :])


def test_cpo_quadrature_oracle():
    data = SurvivalDataset(CPO_Y, CPO_NU, CPO_Z[:, None])
    part = TimePartition([0.0, 2.0 * (1 + 1e-6)])
    cfg = ModelConfig(gamma=CPO_GAMMA, sigma=(CPO_SIGMA,), alpha=CPO_ALPHA, xi=CPO_XI)
    chain = run_chain(data, part, cfg, SamplerSettings(burn_in=1000, thin=1, M=50000, seed=1))
    cpo = selection.compute_cpo(chain, data)
    full = _log_evidence([0, 1, 2])
    oracle = np.array([math.exp(full - _log_evidence([j for j in range(3) if j != i])) for i in range(3)])
    rel = np.abs(cpo / oracle - 1)
    ok = bool(np.all(rel < 0.05))
    record("CPO harmonic mean vs quadrature oracle (n=3, M=50000)", ok,
           f"chain {_fmt(cpo)} oracle {_fmt(oracle)} max rel err {rel.max():.3%}")
    assert ok


# -- HPD --------------------------------------------------------------------

def test_hpd_brute_force():
    rng = np.random.default_rng(99)
    mismatches = wider = 0
    for c in range(1000):
        M = int(rng.integers(2, 300))
        kind = c % 3
        x = (rng.standard_normal(M) if kind == 0 else rng.gamma(1.5, size=M) if kind == 1
             else np.round(rng.exponential(size=M), 1))
        level = float(rng.choice([0.5, 0.8, 0.9, 0.95, 0.99]))
        w = min(M, max(1, math.ceil(level * M - 1e-9)))
        xs = np.sort(x)
        widths = [xs[i + w - 1] - xs[i] for i in range(M - w + 1)]
        i = min(range(len(widths)), key=lambda k: (widths[k], k))
        got = inference.hpd_interval(x, level)
        mismatches += got != (xs[i], xs[i + w - 1])
        elo, ehi = inference.equal_tail_interval(x, level)
        wider += (got[1] - got[0]) > (ehi - elo)
    ok = mismatches == 0 and wider == 0
    record("HPD shortest window equals exhaustive search and never exceeds equal-tail width", ok,
           f"1000 chains, {mismatches} mismatches, {wider} wider than equal-tail")
    assert ok


# -- choice of constrained coefficient -------------------------------------

def test_constrained_coefficient_sensitivity():
    data = simulate(SimulationSpec(n=300, seed=31)).data
    part = build_partition(data, 1)
    settings = SamplerSettings(burn_in=500, thin=1, M=10000, seed=3)
    chains = [run_chain(data, part, ModelConfig(gamma=0.5, k=k), settings) for k in (0, 1)]
    z = []
    for c in range(chains[0].draws.shape[1]):
        a, b = chains[0].draws[:, c], chains[1].draws[:, c]
        z.append((a.mean() - b.mean()) / math.hypot(batch_se(a), batch_se(b)))
    ok = all(abs(v) < 3 for v in z)
    record("posterior means insensitive to which coefficient is constrained", ok,
           f"z per parameter {_fmt(z)}; means k=1 {_fmt(chains[0].draws.mean(axis=0))} "
           f"k=2 {_fmt(chains[1].draws.mean(axis=0))}")
    assert ok


# -- workflow shape on a simulated stand-in -------------------------------

def test_workflow_shape():
    data = simulate(SimulationSpec(n=300, seed=3)).data
    settings = SamplerSettings(burn_in=100, thin=1, M=300)
    grid = selection.run_grid(data, [0, 0.25, 0.5, 0.75, 1], [1, 5, 10], ModelConfig(gamma=0.0),
                              settings, keep_chains=True)
    gammas, Js, table = grid.table("B")
    buf = io.StringIO()
    data_io.write_grid(grid, buf)
    header = buf.getvalue().splitlines()[0]
    best = grid.cells[grid.best_by_B]
    sbuf = io.StringIO()
    data_io.write_summary(sbuf, {"gamma": best.gamma, "J": best.J}, best.summary, best.fit)
    summary = json.loads(sbuf.getvalue())
    jsonschema.validate(summary, data_io.SUMMARY_SCHEMA)
    z = data.Z.mean(axis=0)
    t = 0.5 * float(np.median(data.y))
    preds = [inference.predict_survival(c.chain, z, t) for c in grid.cells if c.gamma == best.gamma]
    ok = (table.shape == (5, 3) and np.isfinite(table).all()
          and header == "gamma,J,B,DIC,status,best_B,best_DIC"
          and len(summary["summaries"]) == data.p + best.J
          and len(preds) == 3 and all(0 < p < 1 for p in preds))
    record("workflow shape on simulated data (reference point values need unavailable data)", ok,
           f"grid {table.shape}, best by B gamma={best.gamma} J={best.J}, "
           f"best by DIC cell {grid.best_by_DIC}, predictive survival at t={t:.3g} "
           f"for J=1,5,10: {_fmt(preds)}")
    assert ok
