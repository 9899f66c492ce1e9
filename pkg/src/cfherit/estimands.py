"""All heritability notions computed from a structural phenotype model.

Estimands and their counterfactual comparisons:

* ``xi`` -- Var(Y(G) - Y(G')) / 2 Var(Y) with the environment held identical.
  The redraw G' is marginal in population mode ("unrelated"), Mendelian given
  the same parents in within-family mode ("fraternal"); "adopted" redraws the
  genotype from a fresh family while keeping the factual family context, and
  "unrelated" in family mode redraws the family context as well.
* ``broad_h2`` / ``narrow_h2`` -- variance explained by E(Y|G) and by its best
  linear approximation in the dosage vector.
* ``moment_bounds`` -- the identifiable bounds from the variance
  decomposition; ``coupling.xi_l`` / ``coupling.xi_u`` give the quantile
  coupling bounds.
* twin, sibling-regression and plant-breeding quantities for the family
  designs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import coupling as coupling_mod
from .dsl import (
    ENGINE_LINEAR,
    ENGINE_MC,
    MODE_POPULATION,
    MODE_WITHIN_FAMILY,
    PhenotypeModel,
    classify,
    evaluate_expr,
    parse_expr,
)
from .errors import CFHeritError, DegeneratePhenotypeError, ModelValidationError, ReportInconsistencyError
from .genetics import AlleleFrequency, mendelian_child_dist, parent_pair_table
from .moments import (
    EngineConfig,
    Kernel,
    ModelContext,
    mc_sample,
    pair_diff_stats,
    variance_decomposition,
)
from .rng import batch_se

KIND_UNRELATED = "unrelated"
KIND_FRATERNAL = "fraternal"
KIND_ADOPTED = "adopted"


@dataclass(frozen=True)
class EstimandResult:
    value: float
    se: float = 0.0
    method: str = "analytic"


def default_kind(model: PhenotypeModel) -> str:
    return KIND_FRATERNAL if model.mode == MODE_WITHIN_FAMILY else KIND_UNRELATED


def _check_kind(model: PhenotypeModel, kind: str | None) -> str:
    kind = kind or default_kind(model)
    if model.mode == MODE_POPULATION and kind != KIND_UNRELATED:
        raise ModelValidationError(
            f"counterfactual kind '{kind}' requires within_family mode"
        )
    if kind not in (KIND_UNRELATED, KIND_FRATERNAL, KIND_ADOPTED):
        raise ModelValidationError(f"unknown counterfactual kind '{kind}'")
    return kind


# ---------------------------------------------------------------------------
# xi
# ---------------------------------------------------------------------------

def xi(model: PhenotypeModel, kind: str | None = None, config: EngineConfig | None = None) -> EstimandResult:
    """Counterfactual heritability Var(Y(G) - Y(G')) / 2 Var(Y)."""
    config = config or EngineConfig()
    kind = _check_kind(model, kind)
    if classify(model) == ENGINE_MC:
        if kind == KIND_ADOPTED or (kind == KIND_UNRELATED and model.mode == MODE_WITHIN_FAMILY):
            raise CFHeritError(
                f"kind '{kind}' is only available analytically; model is general-mc"
            )
        return _xi_mc(model, config)
    decomp = variance_decomposition(model, config)
    var_y = decomp["var_y"]
    ctx = ModelContext(model, config)
    kernel = ctx.kernel

    within_stratum_redraw = model.mode == MODE_POPULATION or kind == KIND_FRATERNAL
    if within_stratum_redraw:
        e_d2 = 0.0
        for s in ctx.strata:
            genos = s.genotypes
            for i, (ga, pa) in enumerate(genos):
                for gb, pb in genos[i + 1 :]:
                    w = s.weight * pa * pb
                    _, m2 = pair_diff_stats(kernel, ctx.env(s, ga), ctx.env(s, gb))
                    # both orders contribute; E[D] = 0 by exchangeability
                    e_d2 += 2.0 * w * m2
        return EstimandResult(e_d2 / (2.0 * var_y))

    if kind == KIND_ADOPTED:
        marginal = dict(ctx.marginal_genotype_law())
        e_d = 0.0
        e_d2 = 0.0
        for s in ctx.strata:
            for ga, pa in s.genotypes:
                env_a = ctx.env(s, ga)
                for gb, pb in marginal.items():
                    w = s.weight * pa * pb
                    if w == 0.0:
                        continue
                    md, m2 = pair_diff_stats(kernel, env_a, ctx.env(s, gb))
                    e_d += w * md
                    e_d2 += w * m2
        num = e_d2 - e_d * e_d
        return EstimandResult(num / (2.0 * var_y))

    # family-mode unrelated: redraw the whole family context
    return EstimandResult(_xi_unrelated_family(ctx, kernel, var_y))


def _xi_unrelated_family(ctx: ModelContext, kernel: Kernel, var_y: float) -> float:
    states = [(s, gamma, w) for s, gamma, w in ctx.states() if w > 0.0]
    weights = np.asarray([w for _, _, w in states])
    comps = [kernel.components(ctx.env(s, gamma)) for s, gamma, _ in states]
    n_comp = len(comps[0])
    if kernel.engine == ENGINE_LINEAR:
        total = 0.0
        for k in range(n_comp):
            wk = comps[0][k].w
            mus = np.asarray([c[k].mu for c in comps])
            var_mu = float(weights @ mus**2 - (weights @ mus) ** 2)
            total += wk * 2.0 * var_mu
            for j, nsym in enumerate(kernel.norm_syms):
                cs = np.asarray([c[k].cs[j] for c in comps])
                var_c = float(weights @ cs**2 - (weights @ cs) ** 2)
                total += wk * 2.0 * var_c * kernel.norm_var[nsym]
        return total / (2.0 * var_y)
    # probit: every event must be a half-line in a single shared normal
    total = 0.0
    for k in range(n_comp):
        wk = comps[0][k].w
        los = np.empty(len(comps))
        his = np.empty(len(comps))
        ps = np.empty(len(comps))
        for i, c in enumerate(comps):
            comp = c[k]
            active = [
                (j, n)
                for j, n in enumerate(kernel.norm_syms)
                if comp.cs[j] != 0.0
            ]
            if len(active) > 1:
                raise CFHeritError(
                    "family-mode unrelated xi needs at most one latent normal "
                    "per component; use Monte Carlo instead"
                )
            if active:
                j, n = active[0]
                c_eff = comp.cs[j] * np.sqrt(kernel.norm_var[n])
                if c_eff > 0:
                    lo, hi = -comp.mu / c_eff, np.inf
                elif c_eff < 0:
                    lo, hi = -np.inf, -comp.mu / c_eff
                else:  # pragma: no cover
                    lo, hi = (-np.inf, np.inf) if comp.mu > 0 else (np.inf, -np.inf)
            else:
                lo, hi = (-np.inf, np.inf) if comp.mu > 0 else (np.inf, -np.inf)
            los[i], his[i] = lo, hi
            ps[i] = _interval_prob(lo, hi)
        e_p = float(weights @ ps)
        lo_max = np.maximum.outer(los, los)
        hi_min = np.minimum.outer(his, his)
        pab = np.clip(_phi(hi_min) - _phi(lo_max), 0.0, None)
        cross = float(weights @ pab @ weights)
        total += wk * (2.0 * e_p - 2.0 * cross)
    return total / (2.0 * var_y)


def _phi(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    arr = np.asarray(x, dtype=float)
    out[np.isneginf(arr)] = 0.0
    out[np.isposinf(arr)] = 1.0
    finite = np.isfinite(arr)
    out[finite] = ndtr(arr[finite])
    return out


def _interval_prob(lo: float, hi: float) -> float:
    if lo >= hi:
        return 0.0
    a = 0.0 if np.isneginf(lo) else float(ndtr(-lo))
    return max(0.0, a - (0.0 if np.isposinf(hi) else float(ndtr(-hi))))


def _xi_mc(model: PhenotypeModel, config: EngineConfig) -> EstimandResult:
    tab = mc_sample(model, config.mc_n, seed=config.seed, coupling="shared-env-pair", config=config)
    d = tab["y"] - tab["y_prime"]
    var_y = float(tab["y"].var())
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0")
    value = float(d.var() / (2.0 * var_y))
    # batch SE on the squared differences; Var(Y) noise is second order here
    se = batch_se((d - d.mean()) ** 2, config.n_batches) / (2.0 * var_y)
    return EstimandResult(value, se=se, method="monte-carlo")


# ---------------------------------------------------------------------------
# Broad and narrow heritability
# ---------------------------------------------------------------------------

def _eyg_table(model: PhenotypeModel, config: EngineConfig):
    """Marginal genotype law with E(Y|G = gamma) attached; and Var(Y)."""
    ctx = ModelContext(model, config)
    kernel = ctx.kernel
    mass: dict[tuple, float] = {}
    wsum: dict[tuple, float] = {}
    ey = ey2 = 0.0
    for s, gamma, w in ctx.states():
        m, v = kernel.moments(ctx.env(s, gamma))
        mass[gamma] = mass.get(gamma, 0.0) + w
        wsum[gamma] = wsum.get(gamma, 0.0) + w * m
        ey += w * m
        ey2 += w * (v + m * m)
    var_y = ey2 - ey * ey
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0")
    table = {g: (mass[g], wsum[g] / mass[g]) for g in mass}
    return table, var_y, ey


def broad_h2(model: PhenotypeModel, config: EngineConfig | None = None) -> EstimandResult:
    """H^2 = Var(E(Y|G)) / Var(Y), marginalizing everything but the genotype."""
    config = config or EngineConfig()
    if classify(model) == ENGINE_MC:
        return _linear_genetic_mc(model, config)[0]
    table, var_y, ey = _eyg_table(model, config)
    v = sum(p * (m - ey) ** 2 for p, m in table.values())
    return EstimandResult(v / var_y)


def narrow_h2(model: PhenotypeModel, config: EngineConfig | None = None) -> EstimandResult:
    """h^2 from the least-squares projection of E(Y|G) on dosages.

    Solves the centered normal equations Cov(G) beta = Cov(G, Y); a singular
    genotype covariance (monomorphic locus) takes the minimum-norm solution.
    """
    config = config or EngineConfig()
    if classify(model) == ENGINE_MC:
        return _linear_genetic_mc(model, config)[1]
    table, var_y, ey = _eyg_table(model, config)
    gammas = list(table)
    probs = np.asarray([table[g][0] for g in gammas])
    means = np.asarray([table[g][1] for g in gammas])
    gmat = np.asarray(gammas, dtype=float)
    mu_g = probs @ gmat
    centered = gmat - mu_g
    cov = (centered * probs[:, None]).T @ centered
    cyg = (centered * probs[:, None]).T @ (means - ey)
    beta, *_ = np.linalg.lstsq(cov, cyg, rcond=None)
    v = float(beta @ cov @ beta)
    return EstimandResult(v / var_y)


def _linear_genetic_mc(model: PhenotypeModel, config: EngineConfig):
    tab = mc_sample(model, config.mc_n, seed=config.seed, config=config)
    y = tab["y"]
    var_y = float(y.var())
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0")
    g = np.stack([tab[s] for s in model.genotype_symbols()], axis=1)
    _, inv = np.unique(g, axis=0, return_inverse=True)
    ngroups = int(inv.max()) + 1
    counts = np.bincount(inv, minlength=ngroups).astype(float)
    means = np.bincount(inv, weights=y, minlength=ngroups) / counts
    w = counts / counts.sum()
    h2_broad = float(w @ (means - y.mean()) ** 2) / var_y
    centered = g - g.mean(axis=0)
    cov = (centered.T @ centered) / g.shape[0]
    cyg = centered.T @ (y - y.mean()) / g.shape[0]
    beta, *_ = np.linalg.lstsq(cov, cyg, rcond=None)
    h2_narrow = float(beta @ cov @ beta) / var_y
    se = 4.0 / np.sqrt(config.mc_n)  # crude scale for reporting
    return (
        EstimandResult(h2_broad, se=se, method="monte-carlo"),
        EstimandResult(h2_narrow, se=se, method="monte-carlo"),
    )


# ---------------------------------------------------------------------------
# Moment bounds
# ---------------------------------------------------------------------------

def moment_bounds(model: PhenotypeModel, config: EngineConfig | None = None):
    """(xi_l', xi_u') from the variance decomposition."""
    d = variance_decomposition(model, config or EngineConfig())
    method = d["method"]
    lo = EstimandResult(d["genetic_var_within_x"] / d["var_y"], method=method)
    hi = EstimandResult(d["mean_var_within_x"] / d["var_y"], method=method)
    return lo, hi


# ---------------------------------------------------------------------------
# Twin and sibling quantities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SiblingModel:
    """Two siblings Y_i = f_direct(own G) + f_indirect(sib G) + F + E_i.

    ``direct``/``indirect`` are expressions over dosage symbols (g1, g2, ...),
    one per locus, each locus at Hardy-Weinberg equilibrium with its allele
    frequency; F ~ N(0, family_variance) is shared, the E_i are i.i.d.
    N(0, noise_variance).
    """

    direct: object
    indirect: object | None
    allele_freqs: dict[str, float]
    family_variance: float = 0.0
    noise_variance: float = 0.0

    @staticmethod
    def build(direct: str, indirect: str | None, allele_freqs: dict[str, float],
              family_variance: float = 0.0, noise_variance: float = 0.0) -> "SiblingModel":
        return SiblingModel(
            direct=parse_expr(direct),
            indirect=parse_expr(indirect) if indirect else None,
            allele_freqs=dict(allele_freqs),
            family_variance=float(family_variance),
            noise_variance=float(noise_variance),
        )

    def loci(self) -> list[str]:
        return sorted(self.allele_freqs)


@dataclass
class TwinQuantities:
    rho_mz: float
    rho_dz: float
    h2_twin: float
    var_y: float


@dataclass
class RdrQuantities:
    h2_rdr: float
    xi_fraternal: float
    xi_adopted: float
    var_y: float


def _sibling_tables(sib: SiblingModel):
    """Family enumeration with per-configuration f_direct/f_indirect values."""
    loci = sib.loci()
    tables = [parent_pair_table(AlleleFrequency(sib.allele_freqs[name])) for name in loci]
    import itertools

    fd = {}
    fi = {}

    def val(expr, gamma):
        if expr is None:
            return 0.0
        return float(evaluate_expr(expr, dict(zip(loci, gamma))))

    rows = []  # (weight, gamma1, gamma2)
    for parents in itertools.product(*tables):
        w_par = np.prod([w for _, w in parents])
        child_axes = []
        for (gf, gm), _ in parents:
            cd = mendelian_child_dist(gm, gf)
            child_axes.append(list(zip(cd.support, cd.probs)))
        kids = []
        for combo in itertools.product(*child_axes):
            p = np.prod([w for _, w in combo])
            kids.append((tuple(v for v, _ in combo), p))
        for g1, p1 in kids:
            fd.setdefault(g1, val(sib.direct, g1))
            fi.setdefault(g1, val(sib.indirect, g1))
            for g2, p2 in kids:
                rows.append((w_par * p1 * p2, g1, g2))
    return rows, fd, fi


def _sibling_moments(sib: SiblingModel):
    rows, fd, fi = _sibling_tables(sib)
    w = np.asarray([r[0] for r in rows])
    d1 = np.asarray([fd[r[1]] for r in rows])
    d2 = np.asarray([fd[r[2]] for r in rows])
    i1 = np.asarray([fi[r[1]] for r in rows])
    i2 = np.asarray([fi[r[2]] for r in rows])

    def cov(a, b):
        return float(w @ (a * b) - (w @ a) * (w @ b))

    stats = {
        "var_d": cov(d1, d1),
        "var_i": cov(i1, i1),
        "cov_di_same": cov(d1, i1),
        "cov_dd_cross": cov(d1, d2),
        "cov_ii_cross": cov(i1, i2),
        "cov_di_cross": cov(d1, i2),
    }
    # E[Var(f_direct(G) | parents)]: subtract the between-family part
    stats["within_var_d"] = stats["var_d"] - stats["cov_dd_cross"]
    stats["var_y"] = (
        stats["var_d"]
        + stats["var_i"]
        + 2.0 * stats["cov_di_cross"]
        + sib.family_variance
        + sib.noise_variance
    )
    return stats


def twin_quantities(model, config: EngineConfig | None = None) -> TwinQuantities:
    """(rho_MZ, rho_DZ, h2_twin) for a sibling model or a within-family model.

    Identical twins share genotype and family context; fraternal twins share
    only the family context.  Latent environment symbols are idiosyncratic
    per twin; observed environment (including parent-derived covariates) is
    shared.
    """
    if isinstance(model, SiblingModel):
        st = _sibling_moments(model)
        var_y = st["var_y"]
        if var_y <= 1e-14:
            raise DegeneratePhenotypeError("Var(Y) = 0")
        cov_mz = st["var_d"] + st["var_i"] + 2.0 * st["cov_di_same"] + model.family_variance
        # Cov(fd1, fi1) + Cov(fd1, fd2) + Cov(fi1, fi2) + Cov(fd2, fi2) + family part
        cov_dz = (
            st["cov_di_same"] * 2.0 + st["cov_dd_cross"] + st["cov_ii_cross"] + model.family_variance
        )
        rho_mz = cov_mz / var_y
        rho_dz = cov_dz / var_y
        return TwinQuantities(rho_mz, rho_dz, 2.0 * (rho_mz - rho_dz), var_y)
    if not isinstance(model, PhenotypeModel) or model.mode != MODE_WITHIN_FAMILY:
        raise ModelValidationError("twin quantities need a within-family model")
    config = config or EngineConfig()
    if classify(model) == ENGINE_MC:
        raise CFHeritError("twin quantities for general-mc models are not supported")
    ctx = ModelContext(model, config)
    kernel = ctx.kernel
    ey = ey2 = 0.0
    e_m2 = 0.0
    e_mx2 = 0.0
    for s in ctx.strata:
        mx = 0.0
        for gamma, p in s.genotypes:
            m, v = kernel.moments(ctx.env(s, gamma))
            ey += s.weight * p * m
            ey2 += s.weight * p * (v + m * m)
            e_m2 += s.weight * p * m * m
            mx += p * m
        e_mx2 += s.weight * mx * mx
    var_y = ey2 - ey * ey
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0")
    rho_mz = (e_m2 - ey * ey) / var_y
    rho_dz = (e_mx2 - ey * ey) / var_y
    return TwinQuantities(rho_mz, rho_dz, 2.0 * (rho_mz - rho_dz), var_y)


def rdr_quantities(sib: SiblingModel) -> RdrQuantities:
    """Sibling-regression heritability and its counterfactual cousins.

    h2_RDR = Var(f_direct(G1)) / Var(Y1); the fraternal comparison holds the
    sibling's genotype fixed, the adopted comparison redraws the child from a
    fresh family.  h2_RDR = xi_adopted here, and both may exceed 1 when
    direct and indirect effects are negatively correlated (reported with a
    warning, never clamped).
    """
    st = _sibling_moments(sib)
    var_y = st["var_y"]
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0")
    h2_rdr = st["var_d"] / var_y
    out = RdrQuantities(
        h2_rdr=h2_rdr,
        xi_fraternal=st["within_var_d"] / var_y,
        xi_adopted=st["var_d"] / var_y,
        var_y=var_y,
    )
    if out.h2_rdr > 1.0:
        warnings.warn(
            f"h2_RDR = {out.h2_rdr:.4f} exceeds 1 (negatively correlated direct "
            "and indirect effects); reported unclamped",
            stacklevel=2,
        )
    return out


# ---------------------------------------------------------------------------
# Genetic correlation
# ---------------------------------------------------------------------------

def genetic_correlation(
    model_y: PhenotypeModel,
    model_z: PhenotypeModel,
    config: EngineConfig | None = None,
) -> EstimandResult:
    """Cov(Y(G)-Y(G'), Z(G)-Z(G')) / 2 sqrt(Var Y Var Z) with shared draws.

    Both models must agree on mode and on the bindings of every symbol they
    share.  The redrawn genotype is the union of the two models' genotype
    vectors, redrawn jointly; environment draws are shared.
    """
    config = config or EngineConfig()
    if model_y.mode != model_z.mode:
        raise ModelValidationError("models must share the family mode")
    merged: dict = {}
    for m in (model_y, model_z):
        for name, d in m.symbols.items():
            if name in merged and merged[name] != d:
                raise ModelValidationError(f"binding mismatch for shared symbol '{name}'")
            merged[name] = d
    union = PhenotypeModel(
        phenotype=model_y.phenotype, symbols=merged, mode=model_y.mode
    )
    engines = {classify(model_y), classify(model_z)}
    if engines <= {ENGINE_LINEAR}:
        ctx = ModelContext(union, config)
        ky = Kernel(PhenotypeModel(model_y.phenotype, merged, model_y.mode))
        kz = Kernel(PhenotypeModel(model_z.phenotype, merged, model_z.mode))
        num = 0.0
        vy = _pair_variance_for(ky, ctx)
        vz = _pair_variance_for(kz, ctx)
        shared_norm = [n for n in ky.norm_syms if n in kz.norm_syms]
        for s in ctx.strata:
            genos = s.genotypes
            for i, (ga, pa) in enumerate(genos):
                for gb, pb in genos[i + 1 :]:
                    w = 2.0 * s.weight * pa * pb
                    env_a, env_b = ctx.env(s, ga), ctx.env(s, gb)
                    ca, cb = ky.components(env_a), ky.components(env_b)
                    za, zb = kz.components(env_a), kz.components(env_b)
                    for cya, cyb, cza, czb in zip(ca, cb, za, zb):
                        term = (cya.mu - cyb.mu) * (cza.mu - czb.mu)
                        for n in shared_norm:
                            iy = ky.norm_syms.index(n)
                            iz = kz.norm_syms.index(n)
                            term += (
                                (cya.cs[iy] - cyb.cs[iy])
                                * (cza.cs[iz] - czb.cs[iz])
                                * ky.norm_var[n]
                            )
                        num += w * cya.w * term
        return EstimandResult(num / (2.0 * np.sqrt(vy * vz)))
    # Monte Carlo paired evaluation with shared environment and shared (G, G')
    tab = mc_sample(
        union, config.mc_n, seed=config.seed, coupling="shared-env-pair",
        config=config, keep_latents=True,
    )
    env = {k: v for k, v in tab.items()}
    y = _eval_on_table(model_y, env, primed=False)
    y2 = _eval_on_table(model_y, env, primed=True)
    z = _eval_on_table(model_z, env, primed=False)
    z2 = _eval_on_table(model_z, env, primed=True)
    dy, dz = y - y2, z - z2
    vy, vz = float(y.var()), float(z.var())
    if vy <= 1e-14 or vz <= 1e-14:
        raise DegeneratePhenotypeError("Var = 0")
    num = float(np.mean(dy * dz) - dy.mean() * dz.mean())
    value = num / (2.0 * np.sqrt(vy * vz))
    se = batch_se(dy * dz, config.n_batches) / (2.0 * np.sqrt(vy * vz))
    return EstimandResult(value, se=se, method="monte-carlo")


def _eval_on_table(model: PhenotypeModel, tab: dict, primed: bool) -> np.ndarray:
    env = dict(tab)
    if primed:
        for g in model.genotype_symbols():
            env[g] = tab[g + "_prime"]
    for s in model.symbols.values():
        if s.role == "derived":
            env[s.name] = evaluate_expr(s.derived, env)
    return np.asarray(evaluate_expr(model.phenotype, env), dtype=float)


def _pair_variance_for(kernel: Kernel, ctx: ModelContext) -> float:
    ey = ey2 = 0.0
    for s, gamma, w in ctx.states():
        comps = kernel.components(ctx.env(s, gamma))
        for c in comps:
            ey += w * c.w * c.mu
            ey2 += w * c.w * (kernel.comp_var(c) + c.mu**2)
    v = ey2 - ey * ey
    if v <= 1e-14:
        raise DegeneratePhenotypeError("Var = 0")
    return v


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class ReportEntry:
    value: float
    method: str = "analytic"
    se: float = 0.0


@dataclass
class HeritabilityReport:
    entries: dict[str, ReportEntry]
    kind: str
    model_digest: str
    warnings: list[str] = field(default_factory=list)

    def value(self, name: str) -> float:
        return self.entries[name].value

    def names(self) -> list[str]:
        return list(self.entries)


REPORT_ORDER = [
    "narrow_h2",
    "broad_H2",
    "xi",
    "xi_l_prime",
    "xi_l",
    "xi_u",
    "xi_u_prime",
    "h2_twin",
    "rho_MZ",
    "rho_DZ",
    "xi_adopted",
    "xi_unrelated",
]


def report(model: PhenotypeModel, config: EngineConfig | None = None) -> HeritabilityReport:
    """Every estimand applicable to the model's mode, with invariant checks."""
    config = config or EngineConfig()
    kind = default_kind(model)
    entries: dict[str, ReportEntry] = {}
    notes: list[str] = []

    def put(name, res):
        entries[name] = ReportEntry(float(res.value), res.method, float(res.se))

    put("narrow_h2", narrow_h2(model, config))
    put("broad_H2", broad_h2(model, config))
    put("xi", xi(model, kind=kind, config=config))
    lo, hi = moment_bounds(model, config)
    put("xi_l_prime", lo)
    put("xi_u_prime", hi)
    put("xi_l", coupling_mod.xi_l(model, config))
    put("xi_u", coupling_mod.xi_u(model, config))
    if entries["xi_u"].value > 1.0:
        notes.append(
            f"xi_u = {entries['xi_u'].value:.4f} exceeds 1; the usable upper "
            "bound is min(xi_u, xi_u_prime, 1)"
        )
    if model.mode == MODE_WITHIN_FAMILY and classify(model) != ENGINE_MC:
        tw = twin_quantities(model, config)
        entries["h2_twin"] = ReportEntry(tw.h2_twin)
        entries["rho_MZ"] = ReportEntry(tw.rho_mz)
        entries["rho_DZ"] = ReportEntry(tw.rho_dz)
        put("xi_adopted", xi(model, kind=KIND_ADOPTED, config=config))
        try:
            put("xi_unrelated", xi(model, kind=KIND_UNRELATED, config=config))
        except CFHeritError:
            pass
        if entries["xi_adopted"].value > 1.0:
            notes.append(
                f"xi_adopted = {entries['xi_adopted'].value:.4f} exceeds 1; reported unclamped"
            )

    _check_report(entries)
    return HeritabilityReport(
        entries=entries, kind=kind, model_digest=model.digest(), warnings=notes
    )


def _tol(*items: ReportEntry) -> float:
    return max(1e-9, 4.0 * float(np.sqrt(sum(e.se**2 for e in items))))


def _check_report(entries: dict[str, ReportEntry]) -> None:
    e = entries
    checks = [
        ("0 <= xi", e["xi"].value >= -_tol(e["xi"])),
        ("xi <= 1", e["xi"].value <= 1.0 + _tol(e["xi"])),
        ("narrow_h2 <= broad_H2", e["narrow_h2"].value <= e["broad_H2"].value + _tol()),
        ("broad_H2 <= 1", e["broad_H2"].value <= 1.0 + _tol()),
        (
            "xi_l_prime <= xi_l",
            e["xi_l_prime"].value <= e["xi_l"].value + _tol(e["xi_l_prime"], e["xi_l"]),
        ),
        ("xi_l <= xi", e["xi_l"].value <= e["xi"].value + _tol(e["xi_l"], e["xi"])),
        (
            "xi <= min(xi_u, xi_u_prime)",
            e["xi"].value
            <= min(e["xi_u"].value, e["xi_u_prime"].value)
            + _tol(e["xi"], e["xi_u"], e["xi_u_prime"]),
        ),
    ]
    failed = [name for name, ok in checks if not ok]
    if failed:
        raise ReportInconsistencyError(
            "report invariants violated: " + "; ".join(failed),
            diagnostics={k: (v.value, v.se) for k, v in entries.items()},
        )
