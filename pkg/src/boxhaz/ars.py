"""Derivative-free adaptive rejection sampling.

Draws from a univariate density proportional to ``exp(logf(x))`` on an
interval ``(lo, hi)`` when ``logf`` is concave.  The upper hull is built
from chords through neighbouring abscissae (no gradients needed): on
``[x_i, x_{i+1}]`` the envelope is the lower of the chords through
``(x_{i-1}, x_i)`` and ``(x_{i+1}, x_{i+2})`` extended into the segment, and
beyond the outermost abscissae the outermost chords are extended to the
domain ends.  The chord through ``(x_i, x_{i+1})`` is the squeeze function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["ARSError", "ARSStats", "ars_sample", "initial_abscissae"]

_NEG_INF = -math.inf


class ARSError(RuntimeError):
    """The envelope could not be built or the target is not log-concave."""


@dataclass
class ARSStats:
    evaluations: int = 0
    squeeze_accepts: int = 0
    envelope_accepts: int = 0
    rejections: int = 0

    def add(self, other: "ARSStats"):
        self.evaluations += other.evaluations
        self.squeeze_accepts += other.squeeze_accepts
        self.envelope_accepts += other.envelope_accepts
        self.rejections += other.rejections

    @property
    def proposals(self) -> int:
        return self.squeeze_accepts + self.envelope_accepts + self.rejections


def _log_int_exp(b, w):
    """log of the integral of exp(b t) over [0, w], w > 0 finite."""
    bw = b * w
    if abs(bw) < 1e-10:
        return math.log(w) + 0.5 * bw
    if b > 0:
        return bw + math.log(-math.expm1(-bw)) - math.log(b)
    return math.log(-math.expm1(bw)) - math.log(-b)


def initial_abscissae(center, width, lo, hi, n_points):
    """Points spread around ``center`` and kept strictly inside ``(lo, hi)``."""
    width = abs(width) if width and math.isfinite(width) else 1.0
    if math.isfinite(lo) and math.isfinite(hi):
        if not lo < center < hi:
            center = 0.5 * (lo + hi)
    elif math.isfinite(lo) and not center > lo:
        center = lo + width
    elif math.isfinite(hi) and not center < hi:
        center = hi - width
    left = min(width, 0.9 * (center - lo)) if math.isfinite(lo) else width
    right = min(width, 0.9 * (hi - center)) if math.isfinite(hi) else width
    pts = []
    for a in range(n_points):
        t = -1.0 + 2.0 * a / (n_points - 1)
        pts.append(center + t * (left if t < 0 else right))
    # rounding can land a point on a bound when center hugs it
    return sorted({x for x in pts if lo < x < hi})


class _Hull:
    """Abscissae and log-density values with the derived envelope pieces."""

    def __init__(self, xs, hs, lo, hi):
        self.xs = xs
        self.hs = hs
        self.lo = lo
        self.hi = hi
        self.build()

    def slopes(self):
        xs, hs = self.xs, self.hs
        return [(hs[i + 1] - hs[i]) / (xs[i + 1] - xs[i]) for i in range(len(xs) - 1)]

    def build(self):
        xs, hs = self.xs, self.hs
        n = len(xs)
        b = self.slopes()
        for i in range(1, len(b)):
            # slopes of a concave function never increase
            if b[i] > b[i - 1] + 1e-8 * (1.0 + abs(b[i - 1])):
                raise ARSError("target is not log-concave on the abscissae")
        # piece = (left, right, anchor_x, anchor_h, slope)
        pieces = []
        if xs[0] > self.lo:
            pieces.append((self.lo, xs[0], xs[0], hs[0], b[0]))
        for i in range(n - 1):
            a, c = xs[i], xs[i + 1]
            lines = []
            if i >= 1:
                lines.append((xs[i], hs[i], b[i - 1]))
            if i + 1 <= n - 2:
                lines.append((xs[i + 1], hs[i + 1], b[i + 1]))
            if len(lines) == 1:
                ax, ah, s = lines[0]
                pieces.append((a, c, ax, ah, s))
                continue
            (x1, h1, s1), (x2, h2, s2) = lines
            # chord from the left dominates at a, chord from the right at c
            if s1 - s2 > 0:
                z = (h2 - h1 + s1 * x1 - s2 * x2) / (s1 - s2)
            else:
                z = c
            z = min(max(z, a), c)
            if z > a:
                pieces.append((a, z, x1, h1, s1))
            if z < c:
                pieces.append((z, c, x2, h2, s2))
        if xs[-1] < self.hi:
            pieces.append((xs[-1], self.hi, xs[-1], hs[-1], b[-1]))
        logm = []
        for left, right, ax, ah, s in pieces:
            if left == _NEG_INF:
                if not s > 0:
                    raise ARSError("envelope is not integrable on the left")
                logm.append(ah + s * (right - ax) - math.log(s))
            elif right == math.inf:
                if not s < 0:
                    raise ARSError("envelope is not integrable on the right")
                logm.append(ah + s * (left - ax) - math.log(-s))
            else:
                logm.append(ah + s * (left - ax) + _log_int_exp(s, right - left))
        top = max(logm)
        w = [math.exp(v - top) for v in logm]
        total = sum(w)
        acc, cum = 0.0, []
        for v in w:
            acc += v / total
            cum.append(acc)
        self.pieces = pieces
        self.cum = cum

    def sample(self, rng):
        u = rng.random()
        idx = 0
        cum = self.cum
        while idx < len(cum) - 1 and u > cum[idx]:
            idx += 1
        left, right, ax, ah, s = self.pieces[idx]
        v = rng.random()
        if left == _NEG_INF:
            x = right + math.log(v) / s
        elif right == math.inf:
            x = left + math.log(v) / s
        else:
            w = right - left
            if abs(s * w) < 1e-10:
                x = left + v * w
            elif s < 0:
                x = left + math.log1p(v * math.expm1(s * w)) / s
            else:
                x = right + math.log1p((1.0 - v) * math.expm1(-s * w)) / s
            x = min(max(x, left), right)
        return x, ah + s * (x - ax)

    def squeeze(self, x):
        xs = self.xs
        if x < xs[0] or x > xs[-1]:
            return _NEG_INF
        # bisect
        lo_i, hi_i = 0, len(xs) - 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) // 2
            if xs[mid] <= x:
                lo_i = mid
            else:
                hi_i = mid
        x0, x1 = xs[lo_i], xs[hi_i]
        h0, h1 = self.hs[lo_i], self.hs[hi_i]
        return h0 + (h1 - h0) * (x - x0) / (x1 - x0)

    def insert(self, x, h):
        xs = self.xs
        i = 0
        while i < len(xs) and xs[i] < x:
            i += 1
        if i < len(xs) and xs[i] == x:
            return
        xs.insert(i, x)
        self.hs.insert(i, h)
        self.build()


def _prepare(logf, points, lo, hi, stats, max_steps=60):
    """Evaluate initial points, dropping infeasible ones and stepping out."""
    xs, hs = [], []
    for x in points:
        h = logf(x)
        stats.evaluations += 1
        if h > _NEG_INF and not math.isnan(h):
            xs.append(x)
            hs.append(h)
    if not xs:
        raise ARSError("log-density is -inf at every initial abscissa")
    # refill toward the feasible region until three points are available
    tries = 0
    while len(xs) < 3:
        tries += 1
        if tries > max_steps:
            raise ARSError("could not find three feasible abscissae")
        span = (xs[-1] - xs[0]) or max(abs(xs[0]), 1.0) * 1e-3
        cands = [xs[0] - span / 2.0 ** (tries - 1), xs[-1] + span / 2.0 ** (tries - 1)]
        for x in cands:
            if lo < x < hi and x not in xs:
                h = logf(x)
                stats.evaluations += 1
                if h > _NEG_INF:
                    i = 0
                    while i < len(xs) and xs[i] < x:
                        i += 1
                    xs.insert(i, x)
                    hs.insert(i, h)
    steps = 0
    while lo == _NEG_INF and (hs[1] - hs[0]) / (xs[1] - xs[0]) <= 0:
        steps += 1
        if steps > max_steps:
            raise ARSError("no positive left slope found when stepping out")
        x = xs[0] - 2.0 ** steps * (xs[1] - xs[0])
        xs.insert(0, x)
        hs.insert(0, logf(x))
        stats.evaluations += 1
        if not hs[0] > _NEG_INF:
            raise ARSError("log-density -inf while stepping out to the left")
    steps = 0
    while hi == math.inf and (hs[-1] - hs[-2]) / (xs[-1] - xs[-2]) >= 0:
        steps += 1
        if steps > max_steps:
            raise ARSError("no negative right slope found when stepping out")
        x = xs[-1] + 2.0 ** steps * (xs[-1] - xs[-2])
        xs.append(x)
        hs.append(logf(x))
        stats.evaluations += 1
        if not hs[-1] > _NEG_INF:
            raise ARSError("log-density -inf while stepping out to the right")
    return xs, hs


def ars_sample(logf, lo, hi, points, rng, max_points=60, max_iter=200):
    """Draw one sample from ``exp(logf)`` restricted to ``(lo, hi)``.

    Parameters
    ----------
    logf : callable
        Concave log-density up to a constant; may return ``-inf``.
    lo, hi : float
        Support bounds, possibly infinite.
    points : sequence of float
        Initial abscissae inside ``(lo, hi)``; see :func:`initial_abscissae`.
    rng : numpy.random.Generator

    Returns
    -------
    x : float
    stats : ARSStats

    Raises
    ------
    ARSError
        When the envelope cannot be built, is not integrable, the target is
        detected to be non-log-concave, or no draw is accepted within the
        iteration budget.
    """
    stats = ARSStats()
    xs, hs = _prepare(logf, [x for x in points if lo < x < hi], lo, hi, stats)
    hull = _Hull(xs, hs, lo, hi)
    for _ in range(max_iter):
        x, ux = hull.sample(rng)
        logu = math.log(rng.random())
        if logu <= hull.squeeze(x) - ux:
            stats.squeeze_accepts += 1
            return x, stats
        hx = logf(x)
        stats.evaluations += 1
        if hx > ux + 1e-8 * (1.0 + abs(ux)):
            raise ARSError("log-density exceeds its envelope: not log-concave")
        if logu <= hx - ux:
            stats.envelope_accepts += 1
            return x, stats
        stats.rejections += 1
        if hx > _NEG_INF and len(hull.xs) < max_points:
            hull.insert(x, hx)
    raise ARSError(f"no acceptance within {max_iter} envelope draws")
