"""Independent brute-force oracles used to freeze expected values.

Everything here is deliberately written as plain dict/loop enumeration or
direct Monte Carlo, independent of the package's engines.
"""

from __future__ import annotations

import numpy as np

PG_HALF = {0: 0.25, 1: 0.5, 2: 0.25}


def brute_child_dist(gf: int, gm: int) -> dict[int, float]:
    out: dict[int, float] = {}
    for af in (0, 1):
        pf = gf / 2 if af else 1 - gf / 2
        for am in (0, 1):
            pm = gm / 2 if am else 1 - gm / 2
            if pf * pm > 0:
                out[af + am] = out.get(af + am, 0.0) + pf * pm
    return out


def brute_hwe(p: float) -> dict[int, float]:
    q = 1 - p
    return {k: v for k, v in {0: q * q, 1: 2 * p * q, 2: p * p}.items() if v > 0}


def brute_parent_pairs(p: float):
    pop = brute_hwe(p)
    return [((gf, gm), pop[gf] * pop[gm]) for gf in pop for gm in pop]


def brute_sib_joint(p: float) -> dict[tuple[int, int], float]:
    joint: dict[tuple[int, int], float] = {}
    for (gf, gm), w in brute_parent_pairs(p):
        cd = brute_child_dist(gf, gm)
        for a, pa in cd.items():
            for b, pb in cd.items():
                joint[(a, b)] = joint.get((a, b), 0.0) + w * pa * pb
    return joint


def brute_cov(joint: dict[tuple[int, int], float], f) -> float:
    ea = sum(w * f(a) for (a, b), w in joint.items())
    eb = sum(w * f(b) for (a, b), w in joint.items())
    eab = sum(w * f(a) * f(b) for (a, b), w in joint.items())
    return eab - ea * eb


def discrete_moments(mass: dict[float, float]):
    m = sum(v * p for v, p in mass.items())
    var = sum(p * (v - m) ** 2 for v, p in mass.items())
    return m, var


def coupling_enumeration(values_a, probs_a, values_b, probs_b, maximize: bool):
    """Extremal E[(A-B)^2] by greedy rank pairing (rearrangement inequality).

    Independent of the package's quantile-merge: walks mass in sorted order
    (reversed for B when maximizing).
    """
    a = sorted(zip(values_a, probs_a))
    b = sorted(zip(values_b, probs_b), reverse=maximize)
    ia = ib = 0
    ra, rb = a[0][1], b[0][1]
    total = 0.0
    while ia < len(a) and ib < len(b):
        m = min(ra, rb)
        total += m * (a[ia][0] - b[ib][0]) ** 2
        ra -= m
        rb -= m
        if ra <= 1e-15:
            ia += 1
            if ia < len(a):
                ra = a[ia][1]
        if rb <= 1e-15:
            ib += 1
            if ib < len(b):
                rb = b[ib][1]
    return total


def random_discrete_law(rng: np.random.Generator, max_support: int = 6):
    k = int(rng.integers(1, max_support + 1))
    values = np.sort(rng.choice(np.arange(-6, 7), size=k, replace=False)).astype(float)
    probs = rng.dirichlet(np.ones(k))
    return values, probs
