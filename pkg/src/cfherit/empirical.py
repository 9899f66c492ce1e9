"""Plug-in estimation of the identifiable bounds from tabular (X, G, Y) data.

Works on comma-separated files with a header row; X and G columns must be
discrete.  Within-cell means and variances (divisor n-1) are plugged into the
population formulas with empirical cell weights; the quantile-coupling lower
bound pairs equal ranks across genotype cells sharing an X value, resampling
unequal cells to a common size by linear interpolation of the empirical
quantile function.  Standard errors come from a nonparametric bootstrap with
per-replicate derived seeds.

The quantile plug-in for xi_l is this package's construction (the population
quantity has no published estimator); it is labeled as such in reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import CFHeritError, DegeneratePhenotypeError
from .rng import substream

MIN_CELL = 2
DEFAULT_BOOTSTRAP = 200


def _quantile_resample(sorted_v: np.ndarray, m: int) -> np.ndarray:
    """Empirical quantile function of a sorted sample at midpoints (i-1/2)/m.

    Linear interpolation between order statistics (numpy's 'linear' rule);
    used to bring two cells to a common size before rank pairing.
    """
    u = (np.arange(1, m + 1) - 0.5) / m
    return np.interp(u * (sorted_v.size - 1), np.arange(sorted_v.size), sorted_v)


@dataclass
class Dataset:
    x: np.ndarray          # (n, kx) discrete labels; kx may be 0
    g: np.ndarray          # (n, kg) dosages
    y: np.ndarray          # (n,)
    x_cols: tuple[str, ...]
    g_cols: tuple[str, ...]
    y_col: str
    excluded_cells: list[tuple] = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.y.size)

    def cell_report(self) -> pd.DataFrame:
        df = pd.DataFrame(
            np.column_stack([self.x, self.g]) if self.x_cols else self.g,
            columns=list(self.x_cols) + list(self.g_cols),
        )
        df["count"] = 1
        keys = list(self.x_cols) + list(self.g_cols)
        return df.groupby(keys, as_index=False).count()


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    se: float


@dataclass
class EstimateResult:
    bounds: dict[str, BoundEstimate]
    n: int
    n_boot: int
    excluded_cells: list[tuple]
    notes: list[str] = field(default_factory=list)


def load_table(path, x_cols, g_cols, y_col) -> Dataset:
    """Load and validate a CSV of (X, G, Y) rows.

    Missing columns or non-numeric Y raise; (x, g) cells with fewer than two
    rows are dropped with a warning entry (variance needs two observations).
    """
    df = pd.read_csv(path)
    cols = list(x_cols) + list(g_cols) + [y_col]
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise CFHeritError(f"missing columns in {path}: {missing}")
    sub = df[cols]
    if sub.isna().any().any():
        raise CFHeritError("dataset has missing cells")
    y = pd.to_numeric(sub[y_col], errors="coerce").to_numpy(dtype=float)
    if np.isnan(y).any():
        raise CFHeritError(f"non-numeric phenotype values in column '{y_col}'")
    x = sub[list(x_cols)].to_numpy() if x_cols else np.empty((len(sub), 0))
    g = sub[list(g_cols)].to_numpy()
    ds = Dataset(x=x, g=g, y=y, x_cols=tuple(x_cols), g_cols=tuple(g_cols), y_col=y_col)
    return _drop_undersized(ds)


def from_arrays(x, g, y, x_cols=(), g_cols=(), y_col="y") -> Dataset:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[:, None]
    g = np.asarray(g)
    if g.ndim == 1:
        g = g[:, None]
    x_cols = tuple(x_cols) if x_cols else tuple(f"x{i+1}" for i in range(x.shape[1]))
    g_cols = tuple(g_cols) if g_cols else tuple(f"g{i+1}" for i in range(g.shape[1]))
    ds = Dataset(
        x=x, g=g, y=np.asarray(y, dtype=float),
        x_cols=x_cols, g_cols=g_cols, y_col=y_col,
    )
    return _drop_undersized(ds)


def _cell_keys(ds: Dataset):
    xg = np.column_stack([ds.x, ds.g]) if ds.x.shape[1] else ds.g
    cells, inv = np.unique(xg, axis=0, return_inverse=True)
    return cells, inv.ravel()


def _drop_undersized(ds: Dataset) -> Dataset:
    cells, inv = _cell_keys(ds)
    counts = np.bincount(inv)
    bad = np.where(counts < MIN_CELL)[0]
    if bad.size == 0:
        return ds
    keep = ~np.isin(inv, bad)
    return Dataset(
        x=ds.x[keep], g=ds.g[keep], y=ds.y[keep],
        x_cols=ds.x_cols, g_cols=ds.g_cols, y_col=ds.y_col,
        excluded_cells=[tuple(cells[i]) for i in bad],
    )


@dataclass
class _Keyed:
    """Integer-coded view of a dataset: cell ids, x ids, and the x id per cell."""

    xinv: np.ndarray
    ginv: np.ndarray
    nx: int
    ncell: int
    cell_to_x: np.ndarray
    binary_g: bool
    has_x: bool


def _key_dataset(ds: Dataset) -> _Keyed:
    if ds.x.shape[1]:
        _, xinv = np.unique(ds.x, axis=0, return_inverse=True)
        xinv = xinv.ravel()
    else:
        xinv = np.zeros(ds.n, dtype=int)
    _, ginv = _cell_keys(ds)
    nx = int(xinv.max()) + 1
    ncell = int(ginv.max()) + 1
    cell_to_x = np.zeros(ncell, dtype=int)
    cell_to_x[ginv] = xinv
    binary_g = np.unique(ds.g, axis=0).shape[0] == 2
    return _Keyed(xinv, ginv, nx, ncell, cell_to_x, binary_g, has_x=ds.x.shape[1] > 0)


def _plugin_bounds(keyed: _Keyed, xinv, ginv, y) -> dict[str, float]:
    n = y.size
    var_y = y.var(ddof=1)
    if var_y <= 0:
        raise DegeneratePhenotypeError("sample Var(Y) is zero")
    nx, ncell = keyed.nx, keyed.ncell

    cnt_x = np.bincount(xinv, minlength=nx).astype(float)
    sum_x = np.bincount(xinv, weights=y, minlength=nx)
    ss_x = np.bincount(xinv, weights=y * y, minlength=nx)
    occupied_x = cnt_x > 1
    mean_x = np.divide(sum_x, cnt_x, out=np.zeros(nx), where=cnt_x > 0)
    var_x = np.zeros(nx)
    var_x[occupied_x] = (ss_x - cnt_x * mean_x**2)[occupied_x] / (cnt_x[occupied_x] - 1)

    cnt_c = np.bincount(ginv, minlength=ncell).astype(float)
    sum_c = np.bincount(ginv, weights=y, minlength=ncell)
    mean_c = np.divide(sum_c, cnt_c, out=np.zeros(ncell), where=cnt_c > 0)

    w_x = cnt_x / n
    xi_u_prime = float(w_x @ var_x) / var_y if keyed.has_x else 1.0

    # E[Var{E(Y|G,X)|X}]: dispersion of the cell means within each x
    mbar_x = np.zeros(nx)
    np.add.at(mbar_x, keyed.cell_to_x, (cnt_c / np.maximum(cnt_x[keyed.cell_to_x], 1)) * mean_c)
    gen_var = np.zeros(nx)
    np.add.at(
        gen_var,
        keyed.cell_to_x,
        (cnt_c / np.maximum(cnt_x[keyed.cell_to_x], 1))
        * (mean_c - mbar_x[keyed.cell_to_x]) ** 2,
    )
    xi_l_prime = float(w_x @ gen_var) / var_y

    # sorted values per cell
    order = np.argsort(ginv, kind="stable")
    y_ord = y[order]
    bounds_idx = np.searchsorted(ginv[order], np.arange(ncell + 1))
    cell_vals = []
    for c in range(ncell):
        v = np.sort(y_ord[bounds_idx[c]:bounds_idx[c + 1]])
        cell_vals.append(v)

    def coupling_sum(reverse: bool) -> float:
        num = 0.0
        for ix in range(nx):
            cells_ix = np.where(keyed.cell_to_x == ix)[0]
            cells_ix = cells_ix[cnt_c[cells_ix] > 0]
            if cells_ix.size < 2:
                continue
            wx = w_x[ix]
            for i, ca in enumerate(cells_ix):
                for cb in cells_ix[i + 1 :]:
                    pa = cnt_c[ca] / cnt_x[ix]
                    pb = cnt_c[cb] / cnt_x[ix]
                    va, vb = cell_vals[ca], cell_vals[cb]
                    if va.size != vb.size:
                        m = max(va.size, vb.size)
                        va = _quantile_resample(va, m)
                        vb = _quantile_resample(vb, m)
                    if reverse:
                        vb = vb[::-1]
                    num += wx * pa * pb * 2.0 * np.mean((va - vb) ** 2)
        return num / (2.0 * var_y)

    out = {
        "xi_l_prime": xi_l_prime,
        "xi_u_prime": xi_u_prime,
        "xi_l": coupling_sum(reverse=False),
    }
    if keyed.binary_g:
        out["xi_u"] = coupling_sum(reverse=True)
    return out


def estimate_bounds(
    ds: Dataset, seed: int = 0, n_boot: int = DEFAULT_BOOTSTRAP
) -> EstimateResult:
    """Plug-in bounds with bootstrap standard errors (n_boot replicates)."""
    keyed = _key_dataset(ds)
    point = _plugin_bounds(keyed, keyed.xinv, keyed.ginv, ds.y)
    reps: dict[str, list[float]] = {k: [] for k in point}
    n = ds.n
    for b in range(n_boot):
        rng = substream(seed, 7, b)
        idx = rng.integers(0, n, size=n)
        try:
            est = _plugin_bounds(keyed, keyed.xinv[idx], keyed.ginv[idx], ds.y[idx])
        except DegeneratePhenotypeError:
            continue
        for k in reps:
            if k in est:
                reps[k].append(est[k])
    bounds = {
        k: BoundEstimate(
            point[k], float(np.std(reps[k], ddof=1)) if len(reps[k]) > 1 else float("nan")
        )
        for k in point
    }
    notes = ["xi_l is a quantile plug-in construction of this package"]
    if ds.excluded_cells:
        notes.append(f"excluded {len(ds.excluded_cells)} undersized cells")
    return EstimateResult(
        bounds=bounds, n=n, n_boot=n_boot, excluded_cells=ds.excluded_cells, notes=notes
    )
