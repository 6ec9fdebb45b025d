"""Welch two-sample t-test with a self-contained Student t distribution."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

_TINY = 1e-300
_RTOL = 1e-15
_MAX_ITER = 10_000


class InsufficientSampleError(ValueError):
    pass


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _RTOL:
            return h
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``y`` may carry ``1 - x`` computed without cancellation.
    """
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(a * math.log(x) + b * math.log(y) + lbeta)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student t with ``df``."""
    if math.isnan(t) or not df > 0:
        return math.nan
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2)))


def t_cdf(t: float, df: float) -> float:
    half = 0.5 * t_sf2(t, df)
    return 1.0 - half if t > 0 else half


@dataclass
class TTestResult:
    metric: str
    mean_a: float
    mean_b: float
    delta: float
    delta_pct: float
    std_err: float
    t_stat: float
    df: float
    p_value: float
    n_a: int
    n_b: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_var(x: Sequence[float]) -> tuple[float, float]:
    m = math.fsum(x) / len(x)
    return m, math.fsum((v - m) ** 2 for v in x) / (len(x) - 1)


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float], metric: str = "") -> TTestResult:
    """Welch unequal-variance t-test of ``mean(a) - mean(b)``.

    When both samples have zero variance the statistic is undefined: equal
    means give t=0, p=1 and different means give t=+-inf, p=0; both cases
    set ``degenerate``.
    """
    a = [float(v) for v in sample_a]
    b = [float(v) for v in sample_b]
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSampleError(
            f"need at least 2 observations per sample, got {len(a)} and {len(b)}"
        )
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    na, nb = len(a), len(b)
    delta = ma - mb
    delta_pct = delta / mb if mb != 0 else math.nan
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0.0:
        t = 0.0 if delta == 0 else math.copysign(math.inf, delta)
        p = 1.0 if delta == 0 else 0.0
        return TTestResult(metric, ma, mb, delta, delta_pct, 0.0, t, float(na + nb - 2), p, na, nb, True)
    se = math.sqrt(se2)
    t = delta / se
    # normalized so tiny variances cannot underflow when squared
    top = max(qa, qb)
    ra, rb = qa / top, qb / top
    df = (ra + rb) ** 2 / (ra * ra / (na - 1) + rb * rb / (nb - 1))
    return TTestResult(metric, ma, mb, delta, delta_pct, se, t, df, t_sf2(t, df), na, nb)


def standardized_mean_difference(sample: Sequence[float], reference: Sequence[float]) -> float:
    """(mean(sample) - mean(reference)) / sd(reference); 0 when sd is 0 and means agree."""
    ms = math.fsum(sample) / len(sample)
    mr, vr = _mean_var(reference) if len(reference) > 1 else (math.fsum(reference) / len(reference), 0.0)
    if vr == 0.0:
        return 0.0 if ms == mr else math.copysign(math.inf, ms - mr)
    return (ms - mr) / math.sqrt(vr)
