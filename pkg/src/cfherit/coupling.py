"""Extremal-coupling mean squared differences and the derived xi bounds.

For fixed marginals F_A, F_B the comonotone coupling A = F_A^{-1}(U),
B = F_B^{-1}(U) minimizes E[(A-B)^2] and the countermonotone coupling
B = F_B^{-1}(1-U) maximizes it.  Quantiles follow the left-continuous
convention F^{-1}(u) = inf{y : F(y) >= u}; on a sorted sample of size N that
is the ceil(uN)-th order statistic, which the sorted-sample estimator
realizes by pairing equal (or reversed) ranks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .dsl import ENGINE_MC, PhenotypeModel
from .errors import CFHeritError, DegeneratePhenotypeError
from .laws import DiscreteLaw, EmpiricalLaw, MixtureLaw, NormalLaw
from .moments import EngineConfig, ModelContext, variance_decomposition
from .rng import substream


@dataclass(frozen=True)
class BoundResult:
    value: float
    se: float = 0.0
    method: str = "analytic"


# ---------------------------------------------------------------------------
# Pairwise mean squared differences
# ---------------------------------------------------------------------------

def _as_normal(law):
    """Normal view of a law when one exists (point masses count)."""
    if isinstance(law, NormalLaw):
        return law
    if isinstance(law, DiscreteLaw) and len(law.values) == 1:
        return NormalLaw(law.values[0], 0.0)
    if isinstance(law, MixtureLaw) and len(law.weights) == 1:
        return NormalLaw(law.means[0], law.vars[0])
    return None


def _discrete_pair_msd(a: DiscreteLaw, b: DiscreteLaw, reverse: bool) -> float:
    """Exact E[(F_a^{-1}(U) - F_b^{-1}(u'))^2], u' = 1-U if reverse else U."""
    va = np.asarray(a.values)
    pa = np.asarray(a.probs)
    vb = np.asarray(b.values)
    pb = np.asarray(b.probs)
    if reverse:
        vb = vb[::-1]
        pb = pb[::-1]
    ca = np.cumsum(pa)
    cb = np.cumsum(pb)
    cuts = np.unique(np.concatenate([ca, cb, [1.0]]))
    cuts = cuts[cuts > 0.0]
    prev = np.concatenate([[0.0], cuts[:-1]])
    mids = (prev + cuts) / 2.0
    ia = np.minimum(np.searchsorted(ca, mids, side="left"), len(va) - 1)
    ib = np.minimum(np.searchsorted(cb, mids, side="left"), len(vb) - 1)
    return float(np.sum((cuts - prev) * (va[ia] - vb[ib]) ** 2))


def _empirical_pair_msd(a: EmpiricalLaw, b: EmpiricalLaw, reverse: bool) -> float:
    if a.n != b.n:
        raise CFHeritError(
            f"empirical marginals have mismatched sizes ({a.n} vs {b.n}); "
            "resample to a common N upstream"
        )
    ys = b.sorted_values[::-1] if reverse else b.sorted_values
    return float(np.mean((a.sorted_values - ys) ** 2))


def _pair_msd(a, b, reverse: bool) -> float | None:
    """Closed-form MSD when available, else None."""
    na, nb = _as_normal(a), _as_normal(b)
    if na is not None and nb is not None:
        sa, sb = np.sqrt(na.var), np.sqrt(nb.var)
        spread = (sa + sb) if reverse else (sa - sb)
        return float((na.mean - nb.mean) ** 2 + spread**2)
    if isinstance(a, DiscreteLaw) and isinstance(b, DiscreteLaw):
        return _discrete_pair_msd(a, b, reverse)
    if isinstance(a, EmpiricalLaw) and isinstance(b, EmpiricalLaw):
        return _empirical_pair_msd(a, b, reverse)
    return None


def comonotone_msd(a, b) -> float:
    """E[(F_a^{-1}(U) - F_b^{-1}(U))^2]: the minimum over couplings of (a, b)."""
    out = _pair_msd(a, b, reverse=False)
    if out is None:
        raise CFHeritError(
            "no closed form for this marginal pair; sample both sides to a "
            "common N and pass EmpiricalLaw objects"
        )
    return out


def countermonotone_msd(a, b) -> float:
    """E[(F_a^{-1}(U) - F_b^{-1}(1-U))^2]: the maximum over couplings of (a, b)."""
    out = _pair_msd(a, b, reverse=True)
    if out is None:
        raise CFHeritError(
            "no closed form for this marginal pair; sample both sides to a "
            "common N and pass EmpiricalLaw objects"
        )
    return out


def frechet_oracle(a: DiscreteLaw, b: DiscreteLaw) -> tuple[float, float]:
    """Exact (min, max) of E[(A-B)^2] over all couplings with marginals a, b.

    Solved as a transport linear program over the joint mass matrix; supports
    of size up to 12 each.
    """
    if len(a.values) > 12 or len(b.values) > 12:
        raise CFHeritError("oracle supports at most 12-point marginals")
    va = np.asarray(a.values)
    vb = np.asarray(b.values)
    cost = (va[:, None] - vb[None, :]) ** 2
    na, nb = len(va), len(vb)
    c = cost.reshape(-1)
    a_eq = []
    b_eq = []
    for i in range(na):
        row = np.zeros(na * nb)
        row[i * nb : (i + 1) * nb] = 1.0
        a_eq.append(row)
        b_eq.append(a.probs[i])
    for j in range(nb - 1):  # last column constraint is redundant
        row = np.zeros(na * nb)
        row[j::nb] = 1.0
        a_eq.append(row)
        b_eq.append(b.probs[j])
    a_eq = np.asarray(a_eq)
    b_eq = np.asarray(b_eq)
    lo = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    hi = linprog(-c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not (lo.success and hi.success):
        raise CFHeritError("transport LP failed")
    return float(lo.fun), float(-hi.fun)


# ---------------------------------------------------------------------------
# xi_l and xi_u for models
# ---------------------------------------------------------------------------

N_REPLICATES = 8


class _LawTable:
    """Per-(stratum, genotype) marginal laws with lazy sorted-sample replicates.

    Sampled marginals carry 2R independent sorted samples of size mc_n / R:
    R replicate pairs, where the second member of each pair estimates the
    order-statistic noise so the rank-pairing MSD can be debiased (the raw
    equal-rank estimator is biased upward by the order-statistic variance).
    """

    def __init__(self, ctx: ModelContext, config: EngineConfig):
        self.ctx = ctx
        self.config = config
        self.general = ctx.kernel.engine == ENGINE_MC
        self.n_rep = max(2000, config.mc_n // N_REPLICATES)
        self._laws: dict[tuple, object] = {}
        self._samples: dict[tuple, np.ndarray] = {}
        self._counter = 0

    def law(self, stratum, gamma):
        key = (stratum.index, gamma)
        if key not in self._laws:
            if self.general:
                self._laws[key] = None
            else:
                self._laws[key] = self.ctx.kernel.law(self.ctx.env(stratum, gamma))
        return self._laws[key]

    def sample_key(self, stratum, gamma) -> tuple:
        if self.general:
            return (stratum.index, gamma)
        # identical laws share one replicate set
        law = self.law(stratum, gamma)
        if isinstance(law, MixtureLaw):
            return ("mix", law.weights, law.means, law.vars)
        if isinstance(law, DiscreteLaw):
            return ("disc", law.values, law.probs)
        return ("norm", law.mean, law.var)

    def replicates(self, stratum, gamma) -> np.ndarray:
        """(2R, n_rep) array of independently drawn, row-sorted samples."""
        key = self.sample_key(stratum, gamma)
        if key not in self._samples:
            rng = substream(self.config.seed, 3, self._counter)
            self._counter += 1
            total = 2 * N_REPLICATES * self.n_rep
            if self.general:
                from .moments import _simulate_rows

                env = self.ctx.env(stratum, gamma)
                idx = np.zeros(total, dtype=int)
                draws = _simulate_rows(self.ctx.model, [env], idx, rng)
            else:
                draws = self.law(stratum, gamma).sample(rng, total)
            self._samples[key] = np.sort(draws.reshape(2 * N_REPLICATES, self.n_rep), axis=1)
        return self._samples[key]


def _replicate_msd(a: np.ndarray, b: np.ndarray, reverse: bool) -> tuple[float, float]:
    """Debiased rank-pairing MSD from replicate sorted samples.

    Per replicate r, the raw equal-rank (or reversed-rank) MSD between the
    r-th samples is corrected by the within-law rank-pairing MSDs of the
    paired replicates, which estimate twice the order-statistic variance.
    Returns (value, standard error over replicates).
    """
    vals = np.empty(N_REPLICATES)
    for r in range(N_REPLICATES):
        xa, xa2 = a[2 * r], a[2 * r + 1]
        xb, xb2 = b[2 * r], b[2 * r + 1]
        yb = xb[::-1] if reverse else xb
        raw = np.mean((xa - yb) ** 2)
        bias = 0.5 * np.mean((xa - xa2) ** 2) + 0.5 * np.mean((xb - xb2) ** 2)
        vals[r] = raw - bias
    value = max(float(vals.mean()), 0.0)
    se = float(vals.std(ddof=1) / np.sqrt(N_REPLICATES))
    return value, se


def _coupling_sum(model: PhenotypeModel, reverse: bool, config: EngineConfig) -> BoundResult:
    """Sum over strata and off-diagonal genotype pairs of weighted extremal MSDs,
    divided by 2 Var(Y).  Diagonal pairs contribute zero."""
    decomp = variance_decomposition(model, config)
    var_y = decomp["var_y"]
    if var_y <= 0:
        raise DegeneratePhenotypeError("Var(Y) = 0")
    ctx = ModelContext(model, config)
    table = _LawTable(ctx, config)
    total = 0.0
    mc_var = 0.0
    used_mc = False
    pair_cache: dict[tuple, tuple[float, float]] = {}
    for s in ctx.strata:
        genos = s.genotypes
        for i, (ga, pa) in enumerate(genos):
            for gb, pb in genos[i + 1 :]:
                w = s.weight * pa * pb * 2.0  # unordered pair counted twice
                if w == 0.0:
                    continue
                la = table.law(s, ga)
                lb = table.law(s, gb)
                msd = _pair_msd(la, lb, reverse) if not table.general else None
                if msd is None:
                    ka = table.sample_key(s, ga)
                    kb = table.sample_key(s, gb)
                    ck = (ka, kb, reverse)
                    if ck not in pair_cache:
                        pair_cache[ck] = _replicate_msd(
                            table.replicates(s, ga), table.replicates(s, gb), reverse
                        )
                    msd, se = pair_cache[ck]
                    mc_var += (w / (2 * var_y)) ** 2 * se**2
                    used_mc = True
                total += w * msd
    value = total / (2.0 * var_y)
    if used_mc:
        return BoundResult(value, se=float(np.sqrt(mc_var)), method="monte-carlo")
    return BoundResult(value, method="analytic")


def xi_l(model: PhenotypeModel, config: EngineConfig | None = None) -> BoundResult:
    """Tight lower bound: comonotone quantile coupling within strata.

    Exact for the linear-gaussian and probit classes; sorted-sample Monte
    Carlo (mc_n per marginal) for mixture or general models.
    """
    return _coupling_sum(model, reverse=False, config=config or EngineConfig())


def xi_u(model: PhenotypeModel, config: EngineConfig | None = None) -> BoundResult:
    """Countermonotone upper bound with the off-diagonal convention.

    Diagonal pairs (g = g') contribute zero -- a redraw that lands on the
    same genotype yields the same potential outcome, so only the literal
    off-diagonal terms constrain Var(Y(G) - Y(G')).  The value may exceed 1
    for non-binary genotypes and is reported as computed; combine with
    min(xi_u, xi_u', 1) for a usable upper bound.
    """
    return _coupling_sum(model, reverse=True, config=config or EngineConfig())
