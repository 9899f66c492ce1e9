"""Genotype distributions and Mendelian transmission.

Dosage coding throughout: a diploid genotype at one locus is the count of
reference alleles, 0/1/2 (aa/Aa/AA).  Loci are independent (no linkage).
All functions are pure and all types are immutable; nothing here samples.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

MASS_TOL = 1e-12


@dataclass(frozen=True)
class AlleleFrequency:
    """Frequency p of the reference allele A; q = 1 - p is implied."""

    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0) or math.isnan(self.p):
            raise ValueError(f"allele frequency must lie in [0, 1], got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p


@dataclass(frozen=True)
class GenotypeDistribution:
    """Probability mass over dosage values at one locus.

    Invariants: support strictly increasing, probabilities nonnegative and
    summing to one within 1e-12.
    """

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise ValueError("support and probs must be nonempty and equal length")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > MASS_TOL:
            raise ValueError(f"probabilities sum to {sum(self.probs)}, not 1")

    def items(self):
        return zip(self.support, self.probs)

    def prob(self, value: float) -> float:
        for v, p in self.items():
            if v == value:
                return p
        return 0.0

    def mean(self) -> float:
        return sum(v * p for v, p in self.items())

    def variance(self) -> float:
        m = self.mean()
        return sum(p * (v - m) ** 2 for v, p in self.items())


@dataclass(frozen=True)
class FamilyConfiguration:
    """One cell of the exact family table.

    ``parents[i] = (father dosage, mother dosage)`` at locus i; ``child`` and
    ``child2`` are the two siblings' dosage vectors, conditionally i.i.d.
    given the parents; ``weight`` is the joint probability of the cell.
    """

    parents: tuple[tuple[int, int], ...]
    child: tuple[int, ...]
    child2: tuple[int, ...]
    weight: float


def hwe_dist(freq: AlleleFrequency) -> GenotypeDistribution:
    """Hardy-Weinberg genotype law: P(0, 1, 2) = (q^2, 2pq, p^2).

    Degenerate frequencies collapse the support (p = 1 gives {2: 1}).
    """
    p, q = freq.p, freq.q
    pairs = [(0, q * q), (1, 2 * p * q), (2, p * p)]
    pairs = [(v, w) for v, w in pairs if w > 0.0]
    values, probs = zip(*pairs)
    return GenotypeDistribution(tuple(float(v) for v in values), tuple(probs))


def mendelian_child_dist(g_m: int, g_f: int) -> GenotypeDistribution:
    """Child dosage law given the two parental dosages.

    Each parent independently transmits one allele; a parent with dosage d
    transmits the reference allele with probability d/2.  E.g. Aa+Aa, i.e.
    (1, 1), gives {0: 1/4, 1: 1/2, 2: 1/4}.
    """
    for g in (g_m, g_f):
        if g not in (0, 1, 2):
            raise ValueError(f"parental dosage must be 0, 1 or 2, got {g}")
    mass: dict[int, float] = {}
    for a_m in (0, 1):
        pm = g_m / 2.0 if a_m == 1 else 1.0 - g_m / 2.0
        if pm == 0.0:
            continue
        for a_f in (0, 1):
            pf = g_f / 2.0 if a_f == 1 else 1.0 - g_f / 2.0
            if pf == 0.0:
                continue
            c = a_m + a_f
            mass[c] = mass.get(c, 0.0) + pm * pf
    values = tuple(sorted(mass))
    return GenotypeDistribution(tuple(float(v) for v in values), tuple(mass[v] for v in values))


def parent_pair_table(freq: AlleleFrequency) -> list[tuple[tuple[int, int], float]]:
    """Ordered (father, mother) dosage pairs with joint HWE probability.

    Parents are drawn i.i.d. from the population law; zero-probability
    pairs are dropped.
    """
    pop = hwe_dist(freq)
    out = []
    for gf, wf in pop.items():
        for gm, wm in pop.items():
            w = wf * wm
            if w > 0.0:
                out.append(((int(gf), int(gm)), w))
    return out


def enumerate_family_space(n_loci: int, freq: AlleleFrequency) -> list[FamilyConfiguration]:
    """Exact enumeration of (parents, child, sibling) over independent loci.

    Weights sum to one; marginally each child locus follows ``hwe_dist`` and
    the two children are conditionally i.i.d. given the parents.
    """
    if n_loci < 1:
        raise ValueError("n_loci must be >= 1")
    per_locus = []
    for _ in range(n_loci):
        cells = []
        for (gf, gm), w in parent_pair_table(freq):
            cd = mendelian_child_dist(gm, gf)
            cells.append(((gf, gm), w, cd))
        per_locus.append(cells)

    configs = []
    for combo in itertools.product(*per_locus):
        parents = tuple(c[0] for c in combo)
        w_par = math.prod(c[1] for c in combo)
        child_supports = [[(int(v), p) for v, p in c[2].items()] for c in combo]
        for ch1 in itertools.product(*child_supports):
            for ch2 in itertools.product(*child_supports):
                w = w_par * math.prod(p for _, p in ch1) * math.prod(p for _, p in ch2)
                if w > 0.0:
                    configs.append(
                        FamilyConfiguration(
                            parents=parents,
                            child=tuple(v for v, _ in ch1),
                            child2=tuple(v for v, _ in ch2),
                            weight=w,
                        )
                    )
    return configs


def sib_pair_joint(freq: AlleleFrequency) -> dict[tuple[int, int], float]:
    """Joint law of one locus' dosages (G1, G2) for two full siblings.

    Marginals equal ``hwe_dist(freq)``; the joint is exchangeable.
    """
    joint: dict[tuple[int, int], float] = {}
    for (gf, gm), w in parent_pair_table(freq):
        cd = mendelian_child_dist(gm, gf)
        for g1, p1 in cd.items():
            for g2, p2 in cd.items():
                key = (int(g1), int(g2))
                joint[key] = joint.get(key, 0.0) + w * p1 * p2
    return joint


def one_gene_effect(a: float, d: float, m: float = 0.0):
    """Genetic-value map f with additive effect a and dominance d.

    f(0) = m - a, f(1) = m + d, f(2) = m + a (dosage-coded heterozygote in
    the middle).  Returns a plain callable.
    """

    def f(g: float) -> float:
        return m + a * (g - 1.0) + d * g * (2.0 - g)

    return f


def additive_dominance_variances(freq: AlleleFrequency, a: float, d: float) -> tuple[float, float]:
    """(sigma_a^2, sigma_d^2) = (2pq[a + (q - p)d]^2, (2pqd)^2)."""
    p, q = freq.p, freq.q
    sa2 = 2 * p * q * (a + (q - p) * d) ** 2
    sd2 = (2 * p * q * d) ** 2
    return sa2, sd2
