import numpy as np
import pytest

from cfherit.coupling import (
    comonotone_msd,
    countermonotone_msd,
    frechet_oracle,
    xi_l,
    xi_u,
)
from cfherit.dsl import parse_model
from cfherit.errors import CFHeritError
from cfherit.laws import DiscreteLaw, EmpiricalLaw, NormalLaw, bernoulli_law
from cfherit.moments import EngineConfig

from helpers import coupling_enumeration, random_discrete_law


class TestClosedForms:
    def test_normal_comonotone(self):
        a = NormalLaw(0.0, (1 + 1.0) / 4.0)
        b = NormalLaw(0.0, 0.25)
        expected = (np.sqrt(2.0) - 1.0) ** 2 / 4.0
        assert comonotone_msd(a, b) == pytest.approx(expected, abs=1e-15)

    def test_identical_marginals(self):
        a = NormalLaw(0.3, 0.7)
        assert comonotone_msd(a, a) == 0.0
        d = DiscreteLaw((0.0, 1.0), (0.5, 0.5))
        assert comonotone_msd(d, d) == 0.0

    def test_bernoulli_gap(self):
        a = bernoulli_law(0.5)
        b = bernoulli_law(0.75)
        assert comonotone_msd(a, b) == pytest.approx(0.25, abs=1e-15)

    def test_countermonotone_normal(self):
        a = NormalLaw(0.0, 1.0)
        assert countermonotone_msd(a, a) == pytest.approx(4.0, abs=1e-15)

    def test_countermonotone_point_mass(self):
        p = NormalLaw(1.5, 0.0)
        assert countermonotone_msd(p, p) == 0.0

    def test_countermonotone_bernoulli_half(self):
        b = bernoulli_law(0.5)
        assert countermonotone_msd(b, b) == pytest.approx(1.0, abs=1e-15)

    def test_empirical_sorted_pairing(self):
        rng = np.random.default_rng(0)
        a = EmpiricalLaw(np.sort(rng.normal(0, 1, 1000)))
        b = EmpiricalLaw(np.sort(rng.normal(0, 2, 1000)))
        got = comonotone_msd(a, b)
        manual = np.mean((a.sorted_values - b.sorted_values) ** 2)
        assert got == pytest.approx(manual)

    def test_empirical_size_mismatch(self):
        a = EmpiricalLaw(np.arange(5.0))
        b = EmpiricalLaw(np.arange(6.0))
        with pytest.raises(CFHeritError, match="mismatch"):
            comonotone_msd(a, b)

    def test_empirical_convergence_to_normal_form(self):
        # sorted-sample estimate of (sigma1 - sigma2)^2 for centered normals
        rng = np.random.default_rng(11)
        n = 1_000_000
        a = EmpiricalLaw(np.sort(rng.normal(0, 1.0, n)))
        b = EmpiricalLaw(np.sort(rng.normal(0, 1.5, n)))
        got = comonotone_msd(a, b)
        assert got == pytest.approx(0.25, abs=4e-3)


class TestDiscreteMerge:
    def test_example_quantile_segments(self):
        a = DiscreteLaw((0.0, 1.0), (0.5, 0.5))
        b = DiscreteLaw((0.0, 1.0), (0.25, 0.75))
        assert comonotone_msd(a, b) == pytest.approx(0.25, abs=1e-15)

    def test_against_greedy_enumeration(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            va, pa = random_discrete_law(rng)
            vb, pb = random_discrete_law(rng)
            a = DiscreteLaw(tuple(va), tuple(pa))
            b = DiscreteLaw(tuple(vb), tuple(pb))
            assert comonotone_msd(a, b) == pytest.approx(
                coupling_enumeration(va, pa, vb, pb, maximize=False), abs=1e-10
            )
            assert countermonotone_msd(a, b) == pytest.approx(
                coupling_enumeration(va, pa, vb, pb, maximize=True), abs=1e-10
            )


class TestFrechetOracle:
    def test_two_point(self):
        a = DiscreteLaw((0.0, 1.0), (0.5, 0.5))
        lo, hi = frechet_oracle(a, a)
        assert lo == pytest.approx(0.0, abs=1e-9)
        assert hi == pytest.approx(1.0, abs=1e-9)

    def test_point_mass_unique_coupling(self):
        a = DiscreteLaw((2.0,), (1.0,))
        b = DiscreteLaw((0.0, 1.0), (0.25, 0.75))
        lo, hi = frechet_oracle(a, b)
        expected = 0.25 * 4.0 + 0.75 * 1.0
        assert lo == pytest.approx(expected, abs=1e-9)
        assert hi == pytest.approx(expected, abs=1e-9)

    def test_three_point_uniform(self):
        u = DiscreteLaw((-1.0, 0.0, 1.0), (1 / 3, 1 / 3, 1 / 3))
        lo, hi = frechet_oracle(u, u)
        assert lo == pytest.approx(0.0, abs=1e-9)
        assert hi == pytest.approx(8.0 / 3.0, abs=1e-9)

    def test_support_cap(self):
        big = DiscreteLaw(tuple(map(float, range(13))), tuple([1 / 13] * 13))
        with pytest.raises(CFHeritError):
            frechet_oracle(big, big)

    def test_oracle_sandwich_random(self):
        # extremal couplings meet the exhaustive transport optimum
        rng = np.random.default_rng(7)
        for _ in range(40):
            va, pa = random_discrete_law(rng)
            vb, pb = random_discrete_law(rng)
            a = DiscreteLaw(tuple(va), tuple(pa))
            b = DiscreteLaw(tuple(vb), tuple(pb))
            lo, hi = frechet_oracle(a, b)
            assert comonotone_msd(a, b) == pytest.approx(lo, abs=1e-9)
            assert countermonotone_msd(a, b) == pytest.approx(hi, abs=1e-9)


PATHOLOGY = """
symbol g1 : genotype ~ discrete(0:{t}, 1:{t}, 2:{t})
symbol e1 : latent_env ~ normal(0, 1)
phenotype = e1
""".format(t=1 / 3)


class TestModelBounds:
    def test_pathology_four_thirds(self):
        m = parse_model(PATHOLOGY)
        assert xi_u(m).value == pytest.approx(4.0 / 3.0, abs=1e-9)
        assert xi_l(m).value == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_binary_upper_equals_lower(self):
        m = parse_model(
            "symbol g1 : genotype ~ bernoulli(0.5)\nphenotype = g1\n"
        )
        assert xi_u(m).value == pytest.approx(xi_l(m).value, abs=1e-12)

    def test_binary_probit_within_oracle(self):
        m = parse_model(
            "symbol g1 : genotype ~ bernoulli(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = ind(g1 + e1)\n"
        )
        lo = xi_l(m).value
        hi = xi_u(m).value
        # oracle on the two conditional Bernoulli marginals
        from scipy.special import ndtr

        p0 = float(ndtr(0.0))
        p1 = float(ndtr(np.sqrt(2.0)))
        a = bernoulli_law(p0)
        b = bernoulli_law(p1)
        omin, omax = frechet_oracle(a, b)
        var_y = None
        from cfherit.moments import variance_decomposition

        var_y = variance_decomposition(m)["var_y"]
        w = 2.0 * 0.25  # two ordered off-diagonal pairs
        assert lo == pytest.approx(w * omin / (2 * var_y), abs=1e-9)
        assert hi == pytest.approx(w * omax / (2 * var_y), abs=1e-9)

    def test_affine_invariance_of_xi_l(self):
        base = (
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = {phen}\n"
        )
        m0 = parse_model(base.format(phen="g1 + e1"))
        v0 = xi_l(m0).value
        for c, b in [(2.0, 7.0), (-3.0, 7.0)]:
            m = parse_model(base.format(phen=f"{c}*(g1 + e1) + {b}"))
            assert xi_l(m).value == pytest.approx(v0, abs=1e-12)
            assert xi_u(m).value == pytest.approx(xi_u(m0).value, abs=1e-12)

    def test_mixed_law_types_fall_back_to_sampling(self):
        # g1 = 0 collapses the noise to a discrete law, g1 > 0 keeps a mixture
        m = parse_model(
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "symbol e2 : latent_env ~ discrete(0:0.5, 1:0.5)\n"
            "phenotype = g1*e1 + e2\n"
        )
        cfg = EngineConfig(seed=4, mc_n=64_000)
        lo = xi_l(m, cfg)
        hi = xi_u(m, cfg)
        assert lo.method == "monte-carlo"
        assert lo.value <= hi.value

    def test_sorted_sample_mixture_reproducible(self):
        text = (
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "symbol e2 : latent_env ~ discrete(0:0.0625, 0.5:0.25, 1:0.375, 1.5:0.25, 2:0.0625)\n"
            "phenotype = g1*e2 + e1\n"
        )
        m = parse_model(text)
        cfg = EngineConfig(seed=9, mc_n=100_000)
        r1 = xi_l(m, cfg)
        r2 = xi_l(m, cfg)
        assert r1.value == r2.value
        assert r1.method == "monte-carlo"
        assert r1.se > 0
