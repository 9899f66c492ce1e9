import numpy as np
import pytest

from cfherit.empirical import estimate_bounds, from_arrays, load_table
from cfherit.errors import CFHeritError, DegeneratePhenotypeError
from cfherit.moments import mc_sample
from cfherit.tables import builtin_models

MODELS2 = dict(builtin_models(2))


def _synthetic(label: str, n: int, seed: int):
    m = MODELS2[label]
    tab = mc_sample(m, n, seed=seed)
    x = tab["x1"] if "x1" in tab else np.empty((n, 0))
    return from_arrays(x=x, g=np.column_stack([tab["g1"], tab["g2"]]), y=tab["y"])


class TestLoadTable:
    def test_round_trip_csv(self, tmp_path):
        import pandas as pd

        ds0 = _synthetic("g1*x1+e1", 5000, seed=41)
        path = tmp_path / "rows.csv"
        pd.DataFrame(
            {"x1": ds0.x[:, 0], "g1": ds0.g[:, 0], "g2": ds0.g[:, 1], "y": ds0.y}
        ).to_csv(path, index=False)
        ds = load_table(path, x_cols=["x1"], g_cols=["g1", "g2"], y_col="y")
        assert ds.n == ds0.n
        assert np.allclose(np.sort(ds.y), np.sort(ds0.y))
        rep = ds.cell_report()
        assert rep["count"].sum() == ds.n

    def test_missing_column(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(CFHeritError, match="missing"):
            load_table(path, x_cols=[], g_cols=["g1"], y_col="y")

    def test_non_numeric_phenotype(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("g1,y\n0,1.5\n0,oops\n")
        with pytest.raises(CFHeritError, match="non-numeric|missing cells"):
            load_table(path, x_cols=[], g_cols=["g1"], y_col="y")

    def test_undersized_cell_excluded(self, tmp_path):
        path = tmp_path / "rows.csv"
        rows = ["g1,y"] + [f"0,{v}" for v in np.linspace(0, 1, 50)] + ["2,9.9"]
        path.write_text("\n".join(rows) + "\n")
        ds = load_table(path, x_cols=[], g_cols=["g1"], y_col="y")
        assert ds.excluded_cells == [(2.0,)]
        assert ds.n == 50


class TestEstimateBounds:
    def test_constant_phenotype(self):
        ds = from_arrays(x=np.empty((10, 0)), g=np.zeros((10, 1)), y=np.ones(10))
        with pytest.raises(DegeneratePhenotypeError):
            estimate_bounds(ds, n_boot=5)

    def test_no_x_gives_trivial_upper(self):
        ds = _synthetic("g1+g2+e1", 20_000, seed=43)
        res = estimate_bounds(ds, seed=1, n_boot=30)
        assert res.bounds["xi_u_prime"].value == 1.0

    def test_row1_small_n(self):
        ds = _synthetic("g1+g2+e1", 30_000, seed=44)
        res = estimate_bounds(ds, seed=1, n_boot=40)
        for key in ("xi_l_prime", "xi_l"):
            b = res.bounds[key]
            assert b.value == pytest.approx(2 / 3, abs=max(4 * b.se, 0.01))

    def test_row5_small_n(self):
        ds = _synthetic("g1*x1+e1", 30_000, seed=45)
        res = estimate_bounds(ds, seed=1, n_boot=40)
        assert res.bounds["xi_l_prime"].value == pytest.approx(5 / 11, abs=0.02)
        assert res.bounds["xi_u_prime"].value == pytest.approx(9 / 11, abs=0.02)
        assert res.bounds["xi_l"].value == pytest.approx(5 / 11, abs=0.02)

    def test_bound_chain_respected(self):
        ds = _synthetic("g1*x1+e1", 30_000, seed=46)
        res = estimate_bounds(ds, seed=1, n_boot=40)
        lo = res.bounds["xi_l_prime"]
        xl = res.bounds["xi_l"]
        hi = res.bounds["xi_u_prime"]
        slack = 4 * np.sqrt(lo.se**2 + xl.se**2)
        assert lo.value <= xl.value + slack
        assert xl.value <= hi.value + 4 * np.sqrt(xl.se**2 + hi.se**2)

    def test_binary_genotype_upper_bound(self):
        rng = np.random.default_rng(2)
        n = 20_000
        g = rng.integers(0, 2, size=n).astype(float)
        y = g + rng.normal(0, 0.7, n)
        ds = from_arrays(x=np.empty((n, 0)), g=g, y=y)
        res = estimate_bounds(ds, seed=1, n_boot=30)
        assert "xi_u" in res.bounds
        assert res.bounds["xi_l"].value <= res.bounds["xi_u"].value

    def test_deterministic_given_seed(self):
        ds = _synthetic("g1+g2+e1", 10_000, seed=47)
        a = estimate_bounds(ds, seed=9, n_boot=20)
        b = estimate_bounds(ds, seed=9, n_boot=20)
        assert a.bounds == b.bounds

    def test_design_note_present(self):
        ds = _synthetic("g1+g2+e1", 5_000, seed=48)
        res = estimate_bounds(ds, seed=1, n_boot=10)
        assert any("plug-in construction" in note for note in res.notes)
