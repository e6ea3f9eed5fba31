"""Brute-force reference for every metric.

Deliberately naive: exact rationals, explicit double loops, and no imports
from the main engine, so the two can be checked against each other.
"""

from __future__ import annotations

from fractions import Fraction


def oracle_curve(trace):
    out = []
    for tau in range(1, len(trace) + 1):
        total = 0
        for i in range(tau):
            total += trace[i]
        out.append(Fraction(total, tau))
    return out


def oracle_online(trace):
    curve = oracle_curve(trace)
    T = len(curve)
    best = curve[0]
    worst = curve[0]
    worst_at = 1
    for tau in range(1, T + 1):
        v = curve[tau - 1]
        if v > best:
            best = v
        if v < worst:
            worst = v
            worst_at = tau
    final = curve[-1]
    return {
        "curve": curve,
        "online_acc": final,
        "ped": best - final,
        "mer": final - worst,
        "r_min": Fraction(worst_at, T),
    }


def oracle_trend(points, T):
    n = len(points)
    xs = [Fraction(step, T) for step, _ in points]
    ys = [Fraction(value) for _, value in points]
    mx = sum(xs, Fraction(0)) / n
    my = sum(ys, Fraction(0)) / n
    num = Fraction(0)
    den = Fraction(0)
    for i in range(n):
        num += (xs[i] - mx) * (ys[i] - my)
        den += (xs[i] - mx) ** 2
    return num / den


def _lookup(entries, online, mode, tau, c):
    if c == tau and mode == "online":
        return online.get(tau)
    return entries.get((tau, c))


def oracle_bwt(T, entries, online, t, mode="online"):
    num = 0
    count = 0
    for tau in range(1, T - t + 1):
        later = entries.get((tau, tau + t))
        base = _lookup(entries, online, mode, tau, tau)
        if later is None or base is None:
            continue
        num += later - base
        count += 1
    return None if count == 0 else Fraction(num, count)


def oracle_forgetting_exact(T, entries, online, t, mode="online"):
    num = 0
    count = 0
    for tau in range(1, T - t + 1):
        vals = []
        complete = True
        for tp in range(tau, tau + t + 1):
            v = _lookup(entries, online, mode, tau, tp)
            if v is None:
                complete = False
                break
            vals.append(v)
        if not complete:
            continue
        best = vals[0]
        for v in vals:
            if v > best:
                best = v
        num += best - vals[-1]
        count += 1
    return None if count == 0 else Fraction(num, count)


def oracle_forgetting_approx(T, entries, t, horizons):
    num = 0
    count = 0
    for tau in range(1, T - t + 1):
        end = entries.get((tau, tau + t))
        if end is None:
            continue
        best = end
        for h in horizons:
            if 1 <= h <= t:
                v = entries.get((tau, tau + h))
                if v is not None and v > best:
                    best = v
        num += best - end
        count += 1
    return None if count == 0 else Fraction(num, count)


def oracle_metrics(trace, matrix=None, horizons=(), holdout_points=None, T=None):
    """Reference values for a trace and (optionally) a matrix, as exact rationals.

    `matrix` may be an EvalMatrix or any object exposing `T`, `entries`,
    `online` and `baseline_mode`; only those raw fields are read.
    """
    report = oracle_online(trace)
    if holdout_points is not None and len(holdout_points) >= 2:
        report["trend_ho"] = oracle_trend(holdout_points, T or len(trace))
    if matrix is not None:
        mT, ent, onl, mode = matrix.T, matrix.entries, matrix.online, matrix.baseline_mode
        report["bwt"] = {t: oracle_bwt(mT, ent, onl, t, mode) for t in horizons}
        report["f_exact"] = {t: oracle_forgetting_exact(mT, ent, onl, t, mode) for t in horizons}
        report["f_approx"] = {t: oracle_forgetting_approx(mT, ent, t, horizons) for t in horizons}
        iv = None
        for t in range(1, mT):
            iv = oracle_bwt(mT, ent, onl, t, mode)
            if iv is not None:
                break
        report["iv"] = iv
    return report
