"""Exact and Monte Carlo conditional moments over strata of (X, G, G', G_p).

The analytic engines work on a compiled view of the model:

* strata enumerate the conditioning context -- observed environment values in
  population mode, parental genotypes (plus any independent observed
  environment) in within-family mode.  Continuous observed symbols are
  discretized on a Gauss-Hermite grid, which is exact for the polynomial
  functionals the linear engine needs.
* within a stratum, the conditional law of Y given the genotype vector is a
  finite Gaussian mixture: discrete latent symbols index the components and
  normal latent symbols contribute component variance.

Stratum computations are independent; every Monte Carlo consumer draws from a
sub-stream derived from (seed, ordinal) so results never depend on scheduling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import dsl
from .dsl import (
    ENGINE_LINEAR,
    ENGINE_MC,
    ENGINE_PROBIT,
    MODE_POPULATION,
    ROLE_LATENT,
    PhenotypeModel,
    classify,
    evaluate_expr,
)
from .errors import DegeneratePhenotypeError, DegenerateStratumError, ModelValidationError
from .genetics import AlleleFrequency, mendelian_child_dist, parent_pair_table
from .laws import EmpiricalLaw, MixtureLaw, NormalLaw, bernoulli_law, discrete_from_atoms
from .rng import batch_se, substream

DEFAULT_MC_N = 1_000_000
DEFAULT_GH_ORDER = 64


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 0
    mc_n: int = DEFAULT_MC_N
    gh_order: int = DEFAULT_GH_ORDER
    n_batches: int = 10


@dataclass
class ConditionalLaw:
    """Mean/variance of Y within a stratum, plus the exact law when available."""

    mean: float
    variance: float
    form: object | None = None  # NormalLaw | DiscreteLaw | MixtureLaw | EmpiricalLaw
    method: str = "analytic"
    se: float = 0.0
    n: int | None = None
    seed: int | None = None


@dataclass(frozen=True)
class Stratum:
    index: int
    assign: dict
    weight: float
    genotypes: tuple  # ((gamma tuple, prob), ...) conditional on this stratum


# ---------------------------------------------------------------------------
# Compiled kernel: conditional law components given all discrete symbols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """One mixture component: weight, mean (normal means folded in) and the
    coefficient of each latent normal symbol."""

    w: float
    mu: float
    cs: tuple[float, ...]


class Kernel:
    def __init__(self, model: PhenotypeModel):
        self.model = model
        self.engine = classify(model)
        latents = [s for s in model.symbols.values() if s.role == ROLE_LATENT]
        self.norm_syms = [s.name for s in latents if s.dist.kind == "normal"]
        self.norm_mean = {s.name: s.dist.mean() for s in latents if s.dist.kind == "normal"}
        self.norm_var = {s.name: s.dist.variance() for s in latents if s.dist.kind == "normal"}
        self.disc_lat = [
            (s.name, s.dist.support(), s.dist.weights())
            for s in latents
            if s.dist.is_discrete
        ]
        norm_set = set(self.norm_syms)
        self._m0: list[tuple[float, tuple[str, ...]]] = []
        self._mj: dict[str, list[tuple[float, tuple[str, ...]]]] = {n: [] for n in self.norm_syms}
        self._analytic = self.engine != ENGINE_MC
        if self._analytic:
            for names, coef in dsl.monomials(model.inner_expr()).items():
                normals = [n for n in names if n in norm_set]
                if not normals:
                    self._m0.append((coef, names))
                else:
                    rest = list(names)
                    rest.remove(normals[0])
                    self._mj[normals[0]].append((coef, tuple(rest)))
            env_syms = set()
            for _, names in self._m0:
                env_syms |= set(names)
            for lst in self._mj.values():
                for _, names in lst:
                    env_syms |= set(names)
            self.env_syms = sorted(env_syms - norm_set - {n for n, _, _ in self.disc_lat})
        else:
            self.env_syms = sorted(
                dsl.expr_symbols(model.phenotype)
                - norm_set
                - {n for n, _, _ in self.disc_lat}
            )
        self._cache: dict[tuple, tuple[Component, ...]] = {}

    @staticmethod
    def _eval_monos(monos, env) -> float:
        total = 0.0
        for coef, names in monos:
            term = coef
            for n in names:
                term *= env[n]
            total += term
        return total

    def components(self, env: dict) -> tuple[Component, ...]:
        """Mixture components of the conditional law given the fixed symbols in env."""
        if not self._analytic:
            raise ModelValidationError("general-mc model has no analytic components")
        key = tuple(env[s] for s in self.env_syms)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        comps = []
        axes = [[(v, w) for v, w in zip(sup, wts)] for _, sup, wts in self.disc_lat]
        names = [n for n, _, _ in self.disc_lat]
        for combo in itertools.product(*axes):
            w = math.prod(p for _, p in combo) if combo else 1.0
            full = dict(env)
            for name, (v, _) in zip(names, combo):
                full[name] = v
            mu = self._eval_monos(self._m0, full)
            cs = []
            for nsym in self.norm_syms:
                c = self._eval_monos(self._mj[nsym], full)
                mu += c * self.norm_mean[nsym]
                cs.append(c)
            comps.append(Component(w=w, mu=mu, cs=tuple(cs)))
        out = tuple(comps)
        self._cache[key] = out
        return out

    def comp_var(self, comp: Component) -> float:
        return sum(c * c * self.norm_var[n] for c, n in zip(comp.cs, self.norm_syms))

    def law(self, env: dict):
        """Exact conditional law of Y given env (all genotype/observed/derived fixed)."""
        comps = self.components(env)
        if self.engine == ENGINE_PROBIT:
            p = 0.0
            for c in comps:
                v = self.comp_var(c)
                if v > 0.0:
                    p += c.w * float(ndtr(c.mu / math.sqrt(v)))
                else:
                    p += c.w * (1.0 if c.mu > 0.0 else 0.0)
            return bernoulli_law(p)
        vs = [self.comp_var(c) for c in comps]
        if len(comps) == 1:
            return NormalLaw(comps[0].mu, vs[0])
        if all(v == 0.0 for v in vs):
            return discrete_from_atoms([c.mu for c in comps], [c.w for c in comps])
        return MixtureLaw(tuple(c.w for c in comps), tuple(c.mu for c in comps), tuple(vs))

    def moments(self, env: dict) -> tuple[float, float]:
        comps = self.components(env)
        if self.engine == ENGINE_PROBIT:
            law = self.law(env)
            return law.mean, law.variance()
        m = sum(c.w * c.mu for c in comps)
        ex2 = sum(c.w * (self.comp_var(c) + c.mu**2) for c in comps)
        return m, ex2 - m * m


# ---------------------------------------------------------------------------
# Pairwise second moments under shared environment
# ---------------------------------------------------------------------------

def _halfline(mu: float, c: float):
    """Event {mu + c*Z > 0} as ('gt'|'lt'|'full'|'empty', threshold)."""
    if c > 0.0:
        return ("gt", -mu / c)
    if c < 0.0:
        return ("lt", -mu / c)
    return ("full", 0.0) if mu > 0.0 else ("empty", 0.0)


def _p_event(ev) -> float:
    kind, t = ev
    if kind == "gt":
        return float(ndtr(-t))
    if kind == "lt":
        return float(ndtr(t))
    return 1.0 if kind == "full" else 0.0


def _p_and(ev_a, ev_b) -> float:
    ka, ta = ev_a
    kb, tb = ev_b
    if ka == "empty" or kb == "empty":
        return 0.0
    if ka == "full":
        return _p_event(ev_b)
    if kb == "full":
        return _p_event(ev_a)
    if ka == "gt" and kb == "gt":
        return float(ndtr(-max(ta, tb)))
    if ka == "lt" and kb == "lt":
        return float(ndtr(min(ta, tb)))
    if ka == "gt":  # {Z > ta} and {Z < tb}
        return max(0.0, float(ndtr(tb) - ndtr(ta)))
    return max(0.0, float(ndtr(ta) - ndtr(tb)))


def _mvn_upper(ha: float, hb: float, rho: float) -> float:
    """P(U > ha, V > hb) for standard bivariate normal with correlation rho."""
    from scipy.stats import multivariate_normal

    rho = min(1.0, max(-1.0, rho))
    if rho >= 1.0 - 1e-12:
        return float(ndtr(-max(ha, hb)))
    if rho <= -1.0 + 1e-12:
        return max(0.0, float(ndtr(-ha) - ndtr(hb)))
    cov = [[1.0, rho], [rho, 1.0]]
    return float(multivariate_normal(mean=[0.0, 0.0], cov=cov).cdf([-ha, -hb]))


def _probit_pair(kernel: Kernel, a: Component, b: Component) -> tuple[float, float]:
    """(E[D], E[D^2]) contribution of one shared component for indicator models."""
    va = kernel.comp_var(a)
    vb = kernel.comp_var(b)
    active = [n for n, x, y in zip(kernel.norm_syms, a.cs, b.cs) if x != 0.0 or y != 0.0]
    if len(active) <= 1:
        if active:
            ia = kernel.norm_syms.index(active[0])
            sd = math.sqrt(kernel.norm_var[active[0]])
            ev_a = _halfline(a.mu, a.cs[ia] * sd)
            ev_b = _halfline(b.mu, b.cs[ia] * sd)
        else:
            ev_a = ("full", 0.0) if a.mu > 0 else ("empty", 0.0)
            ev_b = ("full", 0.0) if b.mu > 0 else ("empty", 0.0)
        pa, pb = _p_event(ev_a), _p_event(ev_b)
        pab = _p_and(ev_a, ev_b)
    else:
        sa, sb = math.sqrt(va), math.sqrt(vb)
        pa = float(ndtr(a.mu / sa)) if sa > 0 else (1.0 if a.mu > 0 else 0.0)
        pb = float(ndtr(b.mu / sb)) if sb > 0 else (1.0 if b.mu > 0 else 0.0)
        if sa == 0.0 or sb == 0.0:
            # one event is deterministic; intersection is the other (or empty)
            pab = pa * pb
        else:
            cov = sum(
                x * y * kernel.norm_var[n]
                for x, y, n in zip(a.cs, b.cs, kernel.norm_syms)
            )
            pab = _mvn_upper(-a.mu / sa, -b.mu / sb, cov / (sa * sb))
    return pa - pb, pa + pb - 2.0 * pab


def pair_diff_stats(kernel: Kernel, env_a: dict, env_b: dict) -> tuple[float, float]:
    """(E[D], E[D^2]) for D = Y(env_a) - Y(env_b) with all latent symbols shared."""
    ca = kernel.components(env_a)
    cb = kernel.components(env_b)
    mean_d = 0.0
    m2 = 0.0
    if kernel.engine == ENGINE_LINEAR:
        for a, b in zip(ca, cb):
            dmu = a.mu - b.mu
            dvar = sum(
                (x - y) ** 2 * kernel.norm_var[n]
                for x, y, n in zip(a.cs, b.cs, kernel.norm_syms)
            )
            mean_d += a.w * dmu
            m2 += a.w * (dmu * dmu + dvar)
        return mean_d, m2
    for a, b in zip(ca, cb):
        md, e2 = _probit_pair(kernel, a, b)
        mean_d += a.w * md
        m2 += a.w * e2
    return mean_d, m2


# ---------------------------------------------------------------------------
# Context: strata and genotype laws
# ---------------------------------------------------------------------------

def _gauss_hermite_nodes(mean: float, var: float, order: int):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    return mean + math.sqrt(var) * x, w


class ModelContext:
    """Enumerated strata for a model plus genotype laws per stratum.

    ``pinned`` fixes continuous observed symbols at exact values instead of
    enumerating their Gauss-Hermite grid (used when conditioning on them).
    """

    def __init__(
        self,
        model: PhenotypeModel,
        config: EngineConfig | None = None,
        pinned: dict | None = None,
    ):
        self.model = model
        self.config = config or EngineConfig()
        self.kernel = Kernel(model)
        self.gsyms = model.genotype_symbols()
        self.pinned = dict(pinned or {})
        self.strata: list[Stratum] = []
        self._build()

    def _observed_axes(self):
        axes = []
        for name in self.model.observed_symbols():
            if name in self.pinned:
                axes.append([(name, float(self.pinned[name]), 1.0)])
                continue
            dist = self.model.symbols[name].dist
            if dist.is_discrete:
                axes.append([(name, float(v), float(w)) for v, w in zip(dist.support(), dist.weights()) if w > 0])
            else:
                nodes, wts = _gauss_hermite_nodes(dist.mean(), dist.variance(), self.config.gh_order)
                axes.append([(name, float(v), float(w)) for v, w in zip(nodes, wts)])
        return axes

    def _build(self):
        model = self.model
        if model.mode == MODE_POPULATION:
            axes_g = []
            for g in self.gsyms:
                dist = model.symbols[g].dist
                axes_g.append([(v, w) for v, w in zip(dist.support(), dist.weights()) if w > 0])
            geno = tuple(
                (tuple(v for v, _ in combo), math.prod(w for _, w in combo))
                for combo in itertools.product(*axes_g)
            )
            strata = []
            for idx, combo in enumerate(itertools.product(*self._observed_axes())):
                assign = {name: v for name, v, _ in combo}
                weight = math.prod(w for _, _, w in combo) if combo else 1.0
                strata.append(Stratum(idx, assign, weight, geno))
            self.strata = strata
        else:
            locus_tables = []
            for g in self.gsyms:
                p = model.symbols[g].dist.params[0]
                locus_tables.append(parent_pair_table(AlleleFrequency(p)))
            derived = [model.symbols[n] for n in model.derived_symbols()]
            obs_axes = self._observed_axes()
            idx = 0
            strata = []
            for parents in itertools.product(*locus_tables):
                w_par = math.prod(w for _, w in parents)
                assign_par = {}
                child_axes = []
                for g, ((gf, gm), _) in zip(self.gsyms, parents):
                    assign_par[g + "f"] = float(gf)
                    assign_par[g + "m"] = float(gm)
                    cd = mendelian_child_dist(gm, gf)
                    child_axes.append(list(zip(cd.support, cd.probs)))
                geno = tuple(
                    (tuple(v for v, _ in combo), math.prod(w for _, w in combo))
                    for combo in itertools.product(*child_axes)
                )
                for obs_combo in itertools.product(*obs_axes):
                    assign = dict(assign_par)
                    for name, v, _ in obs_combo:
                        assign[name] = v
                    for d in derived:
                        assign[d.name] = float(evaluate_expr(d.derived, assign))
                    w_obs = math.prod(w for _, _, w in obs_combo) if obs_combo else 1.0
                    strata.append(Stratum(idx, assign, w_par * w_obs, geno))
                    idx += 1
            self.strata = strata

    # -- views -------------------------------------------------------------
    def env(self, stratum: Stratum, gamma: tuple) -> dict:
        env = dict(stratum.assign)
        for name, v in zip(self.gsyms, gamma):
            env[name] = v
        return env

    def marginal_genotype_law(self) -> list[tuple[tuple, float]]:
        mass: dict[tuple, float] = {}
        for s in self.strata:
            for gamma, p in s.genotypes:
                mass[gamma] = mass.get(gamma, 0.0) + s.weight * p
        return sorted(mass.items())

    def states(self):
        """Iterate (stratum, gamma, joint weight)."""
        for s in self.strata:
            for gamma, p in s.genotypes:
                yield s, gamma, s.weight * p


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def _env_matches(env: dict, partial: dict) -> bool:
    for k, v in partial.items():
        if k not in env:
            raise ModelValidationError(f"unknown conditioning symbol '{k}'")
        if abs(env[k] - float(v)) > 1e-12:
            return False
    return True


def _continuous_pins(model: PhenotypeModel, partial: dict) -> dict:
    pins = {}
    for name, value in partial.items():
        sym = model.symbols.get(name)
        if sym is not None and sym.dist is not None and not sym.dist.is_discrete:
            pins[name] = float(value)
    return pins


def conditional_states(
    model: PhenotypeModel, partial: dict, config: EngineConfig | None = None,
    ctx: ModelContext | None = None,
):
    """(weight, env) pairs consistent with a partial assignment, renormalized.

    Continuous observed symbols named in the assignment are pinned at their
    exact values; discrete symbols filter the enumeration.
    """
    ctx = ctx or ModelContext(model, config, pinned=_continuous_pins(model, partial))
    out = []
    for s, gamma, w in ctx.states():
        env = ctx.env(s, gamma)
        if _env_matches(env, partial):
            out.append((w, env))
    total = sum(w for w, _ in out)
    if total <= 0.0:
        raise DegenerateStratumError(f"conditioning event has probability 0: {partial}")
    return [(w / total, env) for w, env in out], ctx


def cond_moments(
    model: PhenotypeModel, stratum: dict, config: EngineConfig | None = None
) -> ConditionalLaw:
    """Conditional law of Y given a partial assignment of (G, X, G_p).

    Unassigned conditioning symbols are marginalized; latent symbols always
    are.  For general-mc models the law is sample-based with a recorded seed.
    """
    config = config or EngineConfig()
    if classify(model) == ENGINE_MC:
        states, _ = conditional_states(model, stratum, config)
        rng = substream(config.seed, 901)
        n = config.mc_n
        idx = rng.choice(len(states), size=n, p=np.asarray([w for w, _ in states]))
        draws = _simulate_rows(model, [env for _, env in states], idx, rng)
        return ConditionalLaw(
            mean=float(draws.mean()),
            variance=float(draws.var()),
            form=EmpiricalLaw(np.sort(draws), seed_key=(config.seed, 901)),
            method="monte-carlo",
            se=batch_se(draws, config.n_batches),
            n=n,
            seed=config.seed,
        )
    states, ctx = conditional_states(model, stratum, config)
    kernel = ctx.kernel
    if kernel.engine == ENGINE_PROBIT:
        p = sum(w * kernel.law(env).mean for w, env in states)
        law = bernoulli_law(p)
        return ConditionalLaw(mean=law.mean, variance=law.variance(), form=law)
    ws, mus, vs = [], [], []
    for w, env in states:
        for c in kernel.components(env):
            ws.append(w * c.w)
            mus.append(c.mu)
            vs.append(kernel.comp_var(c))
    if len(ws) == 1:
        law = NormalLaw(mus[0], vs[0])
    elif all(v == 0.0 for v in vs):
        law = discrete_from_atoms(mus, ws)
    else:
        law = MixtureLaw(tuple(ws), tuple(mus), tuple(vs))
    mean = law.mean
    return ConditionalLaw(mean=float(mean), variance=float(law.variance()), form=law)


def variance_decomposition(
    model: PhenotypeModel, config: EngineConfig | None = None, force_mc: bool = False
) -> dict:
    """Total-variance components over the conditioning strata.

    Keys: var_y, var_of_x_means = Var(E[Y|X]), mean_var_within_x = E[Var(Y|X)],
    mean_var_within_gx = E[Var(Y|G,X)], genetic_var_within_x =
    E[Var{E(Y|G,X)|X}].  ``force_mc`` estimates the components from a sample
    table even when the analytic engine applies (used for cross-checks).
    """
    config = config or EngineConfig()
    if force_mc or classify(model) == ENGINE_MC:
        return _variance_decomposition_mc(model, config)
    ctx = ModelContext(model, config)
    kernel = ctx.kernel
    ey = ey2 = 0.0
    mean_var_within_gx = 0.0
    genetic_var_within_x = 0.0
    e_x_mean_sq = 0.0
    mean_var_within_x = 0.0
    for s in ctx.strata:
        ps = np.asarray([p for _, p in s.genotypes])
        mv = [kernel.moments(ctx.env(s, gamma)) for gamma, _ in s.genotypes]
        ms = np.asarray([m for m, _ in mv])
        vs = np.asarray([v for _, v in mv])
        mx = float(ps @ ms)
        within_g_mean_var = float(ps @ vs)
        var_means = float(ps @ (ms - mx) ** 2)
        ey += s.weight * mx
        ey2 += s.weight * float(ps @ (vs + ms**2))
        mean_var_within_gx += s.weight * within_g_mean_var
        genetic_var_within_x += s.weight * var_means
        mean_var_within_x += s.weight * (within_g_mean_var + var_means)
        e_x_mean_sq += s.weight * mx * mx
    var_y = ey2 - ey * ey
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0; heritability is undefined")
    return {
        "var_y": float(var_y),
        "var_of_x_means": float(max(e_x_mean_sq - ey * ey, 0.0)),
        "mean_var_within_x": float(mean_var_within_x),
        "mean_var_within_gx": float(mean_var_within_gx),
        "genetic_var_within_x": float(max(genetic_var_within_x, 0.0)),
        "mean_y": float(ey),
        "method": "analytic",
    }


def diff_moments(
    model: PhenotypeModel,
    g,
    g_prime,
    stratum: dict | None = None,
    config: EngineConfig | None = None,
) -> ConditionalLaw:
    """Law of D = Y(g) - Y(g') under shared environment, within a stratum.

    ``g`` and ``g_prime`` assign every genotype symbol.  All environment
    symbols take identical values in both potential outcomes, so additive
    shared noise cancels exactly.  Unassigned conditioning symbols are
    marginalized under P(. | G = g, G' = g', stratum).
    """
    config = config or EngineConfig()
    stratum = dict(stratum or {})
    gsyms = model.genotype_symbols()
    g = (g,) if np.isscalar(g) else tuple(g)
    g_prime = (g_prime,) if np.isscalar(g_prime) else tuple(g_prime)
    if len(g) != len(gsyms) or len(g_prime) != len(gsyms):
        raise ModelValidationError("g and g' must assign every genotype symbol")
    for i, name in enumerate(gsyms):
        sup = model.symbols[name].dist.support()
        if float(g[i]) not in sup or float(g_prime[i]) not in sup:
            raise ModelValidationError(f"genotype value outside support of '{name}'")
        if name in stratum:
            raise ModelValidationError("genotype symbols are set by g/g', not the stratum")

    ctx = ModelContext(model, config, pinned=_continuous_pins(model, stratum))
    # P(sigma | stratum, G=g, G'=g') over strata consistent with the partial assignment
    cells = []
    for s in ctx.strata:
        if not _env_matches(dict(s.assign), {k: v for k, v in stratum.items() if k in s.assign}):
            continue
        extra = {k: v for k, v in stratum.items() if k not in s.assign}
        if extra:
            raise ModelValidationError(f"unknown conditioning symbols {sorted(extra)}")
        pg = dict()
        for gamma, p in s.genotypes:
            pg[gamma] = p
        pa = pg.get(tuple(float(v) for v in g), 0.0)
        pb = pg.get(tuple(float(v) for v in g_prime), 0.0)
        w = s.weight * pa * pb
        if w > 0.0:
            cells.append((w, s))
    total = sum(w for w, _ in cells)
    if total <= 0.0:
        raise DegenerateStratumError(
            f"stratum has probability 0 for g={g}, g'={g_prime}, {stratum}"
        )

    if classify(model) == ENGINE_MC:
        return _diff_moments_mc(model, g, g_prime, [(w / total, s) for w, s in cells], ctx, config)

    kernel = ctx.kernel
    mean_d = 0.0
    m2 = 0.0
    for w, s in cells:
        env_a = ctx.env(s, tuple(float(v) for v in g))
        env_b = ctx.env(s, tuple(float(v) for v in g_prime))
        md, e2 = pair_diff_stats(kernel, env_a, env_b)
        mean_d += (w / total) * md
        m2 += (w / total) * e2
    var_d = max(m2 - mean_d * mean_d, 0.0)
    return ConditionalLaw(mean=float(mean_d), variance=float(var_d))


# ---------------------------------------------------------------------------
# Monte Carlo sampling
# ---------------------------------------------------------------------------

def _draw_dist(dist, rng, n):
    if dist.kind == "normal":
        mean, var = dist.params
        return rng.normal(mean, math.sqrt(var), size=n)
    return rng.choice(np.asarray(dist.support()), size=n, p=np.asarray(dist.weights()))


def _transmit(parent_dosage: np.ndarray, rng) -> np.ndarray:
    return (rng.random(parent_dosage.shape[0]) < parent_dosage / 2.0).astype(float)


def _simulate_rows(model: PhenotypeModel, envs: list[dict], idx: np.ndarray, rng) -> np.ndarray:
    """Evaluate Y for rows whose fixed symbols come from envs[idx]; latents drawn iid."""
    env_arrays: dict[str, np.ndarray] = {}
    for k in envs[0].keys():
        vals = np.asarray([e[k] for e in envs])
        env_arrays[k] = vals[idx]
    n = idx.size
    for s in model.symbols.values():
        if s.role == ROLE_LATENT:
            env_arrays[s.name] = _draw_dist(s.dist, rng, n)
    for s in model.symbols.values():
        if s.role == dsl.ROLE_DERIVED and s.name not in env_arrays:
            env_arrays[s.name] = evaluate_expr(s.derived, env_arrays)
    return np.asarray(evaluate_expr(model.phenotype, env_arrays), dtype=float)


def mc_sample(
    model: PhenotypeModel,
    n: int,
    seed: int = 0,
    coupling: str = "none",
    config: EngineConfig | None = None,
    keep_latents: bool = False,
) -> dict[str, np.ndarray]:
    """Reproducible sample table of (G_p, G, G', X, Y, Y').

    With ``coupling='shared-env-pair'`` the table adds a redrawn genotype
    (marginal in population mode, Mendelian from the same parents in
    within-family mode) and Y' evaluated with identical environment draws.
    Rows are drawn stratum by stratum with multinomial counts; each stratum
    consumes its own (seed, stratum ordinal) sub-stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if coupling not in ("none", "shared-env-pair"):
        raise ValueError(f"unknown coupling '{coupling}'")
    config = config or EngineConfig(seed=seed)
    syms = model.symbols
    gsyms = model.genotype_symbols()
    pair = coupling == "shared-env-pair"

    # sampling cells: discrete observed contexts (population) or parent combos (family)
    if model.mode == MODE_POPULATION:
        disc_obs = [x for x in model.observed_symbols() if syms[x].dist.is_discrete]
        axes = [
            [(x, float(v), float(w)) for v, w in zip(syms[x].dist.support(), syms[x].dist.weights()) if w > 0]
            for x in disc_obs
        ]
        cells = []
        for combo in itertools.product(*axes):
            assign = {x: v for x, v, _ in combo}
            w = math.prod(wt for _, _, wt in combo) if combo else 1.0
            cells.append((assign, w))
    else:
        locus_tables = [
            parent_pair_table(AlleleFrequency(syms[g].dist.params[0])) for g in gsyms
        ]
        cells = []
        for parents in itertools.product(*locus_tables):
            assign = {}
            for g, ((gf, gm), _) in zip(gsyms, parents):
                assign[g + "f"] = float(gf)
                assign[g + "m"] = float(gm)
            w = math.prod(wt for _, wt in parents)
            cells.append((assign, w))

    master = substream(seed, 0)
    counts = master.multinomial(n, [w for _, w in cells])
    chunks: dict[str, list[np.ndarray]] = {}

    for ordinal, ((assign, _), k) in enumerate(zip(cells, counts)):
        if k == 0:
            continue
        rng = substream(seed, 1, ordinal)
        env: dict[str, np.ndarray] = {key: np.full(k, v) for key, v in assign.items()}
        if model.mode == MODE_POPULATION:
            for g in gsyms:
                env[g] = _draw_dist(syms[g].dist, rng, k)
            for x in model.observed_symbols():
                if x not in env:
                    env[x] = _draw_dist(syms[x].dist, rng, k)
            g_prime = {g: _draw_dist(syms[g].dist, rng, k) for g in gsyms} if pair else {}
        else:
            for g in gsyms:
                env[g] = _transmit(env[g + "f"], rng) + _transmit(env[g + "m"], rng)
            for x in model.observed_symbols():
                if x not in env:
                    env[x] = _draw_dist(syms[x].dist, rng, k)
            g_prime = (
                {g: _transmit(env[g + "f"], rng) + _transmit(env[g + "m"], rng) for g in gsyms}
                if pair
                else {}
            )
        for s in syms.values():
            if s.role == ROLE_LATENT:
                env[s.name] = _draw_dist(s.dist, rng, k)
        for s in syms.values():
            if s.role == dsl.ROLE_DERIVED:
                env[s.name] = evaluate_expr(s.derived, env)
        row: dict[str, np.ndarray] = {}
        for key in sorted(assign):
            row[key] = env[key]
        for g in gsyms:
            row[g] = env[g]
        for x in model.observed_symbols() + model.derived_symbols():
            row[x] = env[x]
        if keep_latents:
            for name in model.latent_symbols():
                row[name] = env[name]
        row["y"] = np.asarray(evaluate_expr(model.phenotype, env), dtype=float)
        if pair:
            env2 = dict(env)
            for g in gsyms:
                env2[g] = g_prime[g]
            for s in syms.values():
                if s.role == dsl.ROLE_DERIVED:
                    env2[s.name] = evaluate_expr(s.derived, env2)
            for g in gsyms:
                row[g + "_prime"] = env2[g]
            row["y_prime"] = np.asarray(evaluate_expr(model.phenotype, env2), dtype=float)
        for key, arr in row.items():
            chunks.setdefault(key, []).append(np.asarray(arr, dtype=float))

    return {k: np.concatenate(v) for k, v in chunks.items()}


# ---------------------------------------------------------------------------
# Monte Carlo fallbacks for general-mc models
# ---------------------------------------------------------------------------

def _variance_decomposition_mc(model: PhenotypeModel, config: EngineConfig) -> dict:
    for x in model.observed_symbols():
        if not model.symbols[x].dist.is_discrete:
            raise ModelValidationError(
                "sample-based variance decomposition needs discrete observed symbols"
            )
    tab = mc_sample(model, config.mc_n, seed=config.seed, coupling="none", config=config)
    y = tab["y"]
    var_y = float(y.var())
    if var_y <= 1e-14:
        raise DegeneratePhenotypeError("Var(Y) = 0; heritability is undefined")
    xkey = _conditioning_key(model, tab)
    gkey = xkey + [np.asarray(tab[g]) for g in model.genotype_symbols()]
    var_between_x, within_x = _group_split(y, xkey)
    _, within_gx = _group_split(y, gkey)
    return {
        "var_y": var_y,
        "var_of_x_means": var_between_x,
        "mean_var_within_x": within_x,
        "mean_var_within_gx": within_gx,
        "genetic_var_within_x": max(within_x - within_gx, 0.0),
        "mean_y": float(y.mean()),
        "method": "monte-carlo",
    }


def _conditioning_key(model: PhenotypeModel, tab: dict) -> list[np.ndarray]:
    if model.mode == MODE_POPULATION:
        return [np.asarray(tab[x]) for x in model.observed_symbols()]
    keys = []
    for g in model.genotype_symbols():
        keys += [np.asarray(tab[g + "f"]), np.asarray(tab[g + "m"])]
    keys += [np.asarray(tab[x]) for x in model.observed_symbols()]
    return keys


def _group_split(y: np.ndarray, keys: list[np.ndarray]) -> tuple[float, float]:
    """(variance of group means, mean within-group variance) over key cells."""
    if not keys:
        return 0.0, float(y.var())
    stacked = np.stack(keys, axis=1)
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    ngroups = int(inv.max()) + 1
    counts = np.bincount(inv, minlength=ngroups).astype(float)
    sums = np.bincount(inv, weights=y, minlength=ngroups)
    sq = np.bincount(inv, weights=y * y, minlength=ngroups)
    means = sums / counts
    within = (sq / counts) - means**2
    w = counts / counts.sum()
    return float(w @ (means - y.mean()) ** 2), float(w @ within)


def _diff_moments_mc(model, g, g_prime, cells, ctx, config) -> ConditionalLaw:
    rng = substream(config.seed, 902)
    n = config.mc_n
    weights = np.asarray([w for w, _ in cells])
    envs_a = [ctx.env(s, tuple(float(v) for v in g)) for _, s in cells]
    envs_b = [ctx.env(s, tuple(float(v) for v in g_prime)) for _, s in cells]
    idx = rng.choice(len(cells), size=n, p=weights)
    env_arrays: dict[str, np.ndarray] = {}
    env_arrays_b: dict[str, np.ndarray] = {}
    for k in envs_a[0].keys():
        env_arrays[k] = np.asarray([e[k] for e in envs_a])[idx]
        env_arrays_b[k] = np.asarray([e[k] for e in envs_b])[idx]
    for s in model.symbols.values():
        if s.role == ROLE_LATENT:
            draw = _draw_dist(s.dist, rng, n)
            env_arrays[s.name] = draw
            env_arrays_b[s.name] = draw
    for s in model.symbols.values():
        if s.role == dsl.ROLE_DERIVED:
            env_arrays[s.name] = evaluate_expr(s.derived, env_arrays)
            env_arrays_b[s.name] = evaluate_expr(s.derived, env_arrays_b)
    d = np.asarray(evaluate_expr(model.phenotype, env_arrays), dtype=float) - np.asarray(
        evaluate_expr(model.phenotype, env_arrays_b), dtype=float
    )
    return ConditionalLaw(
        mean=float(d.mean()),
        variance=float(d.var()),
        method="monte-carlo",
        se=batch_se(d, config.n_batches),
        n=n,
        seed=config.seed,
    )
