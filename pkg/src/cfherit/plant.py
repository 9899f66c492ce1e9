"""Entry-mean heritability for factorial breeding designs.

A design grows n_g genotypes in n_x environments with n_r replications and
scores the genotype means Ybar(g), averaged over environments and
replications.  The counterfactual comparison redraws the genotype while the
realized environment (block effects and plot errors) is held fixed, so the
error variance enters only through the denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ModelValidationError

ZERO_SUM_TOL = 1e-9


@dataclass
class PlantDesign:
    n_g: int
    n_x: int
    n_r: int
    mode: str  # 'fixed' or 'random'
    # fixed mode: effect tables
    alpha: np.ndarray | None = None       # (n_g,)
    beta: np.ndarray | None = None        # (n_x,)
    gamma: np.ndarray | None = None       # (n_g, n_x)
    error_variance: float = 0.0
    # random mode: variance components
    var_g: float | None = None
    var_x: float | None = None
    var_gx: float | None = None

    def __post_init__(self):
        if min(self.n_g, self.n_x, self.n_r) < 1:
            raise ModelValidationError("n_g, n_x, n_r must be >= 1")
        if self.error_variance < 0:
            raise ModelValidationError("error variance must be >= 0")
        if self.mode == "fixed":
            self.alpha = np.asarray(self.alpha, dtype=float)
            self.beta = np.asarray(self.beta, dtype=float)
            self.gamma = np.asarray(self.gamma, dtype=float)
            if self.alpha.shape != (self.n_g,) or self.beta.shape != (self.n_x,):
                raise ModelValidationError("alpha/beta shapes must match n_g/n_x")
            if self.gamma.shape != (self.n_g, self.n_x):
                raise ModelValidationError("gamma must be n_g x n_x")
            for name, arr in (("alpha", self.alpha), ("beta", self.beta)):
                if abs(arr.sum()) > ZERO_SUM_TOL:
                    raise ModelValidationError(f"{name} must sum to zero")
            if np.abs(self.gamma.sum(axis=0)).max() > ZERO_SUM_TOL:
                raise ModelValidationError("gamma columns must sum to zero")
            if np.abs(self.gamma.sum(axis=1)).max() > ZERO_SUM_TOL:
                raise ModelValidationError("gamma rows must sum to zero")
        elif self.mode == "random":
            for name in ("var_g", "var_x", "var_gx"):
                v = getattr(self, name)
                if v is None or v < 0:
                    raise ModelValidationError(f"{name} must be a nonnegative variance")
        else:
            raise ModelValidationError(f"unknown plant design mode '{self.mode}'")

    # variance components, defined for both modes
    def sigma_g2(self) -> float:
        if self.mode == "fixed":
            return float(np.mean(self.alpha**2))
        return float(self.var_g)

    def sigma_x2(self) -> float:
        if self.mode == "fixed":
            return float(np.mean(self.beta**2))
        return float(self.var_x)

    def sigma_gx2(self) -> float:
        if self.mode == "fixed":
            return float(np.mean(self.gamma**2))
        return float(self.var_gx)


def plant_heritability(design: PlantDesign) -> tuple[float, float]:
    """(xi, H2_plant) for the design.

    Fixed mode:   xi = sG2 / (sG2 + sE2/(n_x n_r))
    Random mode:  xi = (sG2 + sGX2/n_x) / (sG2 + sX2/n_x + sGX2/n_x + sE2/(n_x n_r))
    Both compared against the conventional entry-mean heritability
    H2_plant = sG2 / (sG2 + sGX2/n_x + sE2/(n_x n_r)).
    """
    sg2 = design.sigma_g2()
    se2_bar = design.error_variance / (design.n_x * design.n_r)
    sgx_bar = design.sigma_gx2() / design.n_x
    h2_plant = sg2 / (sg2 + sgx_bar + se2_bar)
    if design.mode == "fixed":
        xi = sg2 / (sg2 + se2_bar)
    else:
        sx_bar = design.sigma_x2() / design.n_x
        xi = (sg2 + sgx_bar) / (sg2 + sx_bar + sgx_bar + se2_bar)
    return float(xi), float(h2_plant)


def simulate_entry_means(
    design: PlantDesign, n_experiments: int, rng: np.random.Generator
) -> np.ndarray:
    """(n_experiments, n_g) array of potential-outcome entry means Ybar(g).

    Within one experiment every genotype's counterfactual mean shares the
    same realized block effects and plot-error average.
    """
    ng, nx, nr = design.n_g, design.n_x, design.n_r
    out = np.empty((n_experiments, ng))
    err_sd = np.sqrt(design.error_variance / (nx * nr))
    for r in range(n_experiments):
        if design.mode == "fixed":
            alpha = design.alpha
            beta_bar = float(design.beta.mean())
            gamma_bar = design.gamma.mean(axis=1)
        else:
            alpha = rng.normal(0.0, np.sqrt(design.var_g), size=ng)
            beta_bar = float(rng.normal(0.0, np.sqrt(design.var_x), size=nx).mean())
            gamma_bar = rng.normal(0.0, np.sqrt(design.var_gx), size=(ng, nx)).mean(axis=1)
        ebar = rng.normal(0.0, err_sd) if err_sd > 0 else 0.0
        out[r] = alpha + beta_bar + gamma_bar + ebar
    return out


def xi_from_entry_means(means: np.ndarray) -> float:
    """Plug-in xi from simulated entry means: genotype redraw within experiment.

    E[(Ybar(G) - Ybar(G'))^2] with G, G' i.i.d. uniform over the columns is
    exactly twice the mean within-experiment population variance.
    """
    mbar = means.mean(axis=1, keepdims=True)
    within = np.mean((means - mbar) ** 2)
    return float(within / means.var())


def fixed_design(
    n_g: int,
    n_x: int,
    n_r: int,
    var_g: float,
    var_x: float,
    var_gx: float,
    error_variance: float,
) -> PlantDesign:
    """Canonical zero-sum effect tables achieving the requested variances."""

    def pattern(n: int) -> np.ndarray:
        v = np.arange(n, dtype=float) - (n - 1) / 2.0
        ms = np.mean(v**2)
        return v / np.sqrt(ms) if ms > 0 else v

    pg = pattern(n_g)
    px = pattern(n_x)
    alpha = pg * np.sqrt(var_g)
    beta = px * np.sqrt(var_x)
    outer = np.outer(pg, px)
    ms = np.mean(outer**2)
    gamma = outer / np.sqrt(ms) * np.sqrt(var_gx) if ms > 0 else np.zeros((n_g, n_x))
    return PlantDesign(
        n_g=n_g, n_x=n_x, n_r=n_r, mode="fixed",
        alpha=alpha, beta=beta, gamma=gamma, error_variance=error_variance,
    )


def load_design(path) -> PlantDesign:
    """Read a design from JSON (keys mirror the PlantDesign fields)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    mode = raw.get("mode")
    common = dict(
        n_g=int(raw["n_g"]), n_x=int(raw["n_x"]), n_r=int(raw["n_r"]),
        mode=mode, error_variance=float(raw.get("error_variance", 0.0)),
    )
    if mode == "fixed":
        return PlantDesign(
            **common,
            alpha=np.asarray(raw["alpha"], dtype=float),
            beta=np.asarray(raw["beta"], dtype=float),
            gamma=np.asarray(raw["gamma"], dtype=float),
        )
    return PlantDesign(
        **common,
        var_g=float(raw.get("var_g", 0.0)),
        var_x=float(raw.get("var_x", 0.0)),
        var_gx=float(raw.get("var_gx", 0.0)),
    )
