import numpy as np
import pytest

from cfherit import coupling as cp
from cfherit.dsl import parse_model
from cfherit.errors import (
    DegeneratePhenotypeError,
    ModelValidationError,
    ReportInconsistencyError,
)
from cfherit.estimands import (
    SiblingModel,
    broad_h2,
    genetic_correlation,
    moment_bounds,
    narrow_h2,
    rdr_quantities,
    report,
    twin_quantities,
    xi,
)
from cfherit.genetics import AlleleFrequency, additive_dominance_variances
from cfherit.moments import EngineConfig, mc_sample
from cfherit.tables import builtin_models

MODELS2 = dict(builtin_models(2))
MODELS3 = dict(builtin_models(3))

NO_GXE_ROWS = ["g1+g2+e1", "g1*g2+e1", "g1+x1+e1"]
COMONOTONE_ROWS = ["g1+g2+e1", "g1*g2+e1", "g1+x1+e1", "g1*x1+e1"]


class TestXi:
    def test_population_values(self):
        assert xi(MODELS2["g1+g2+e1"]).value == pytest.approx(2 / 3, abs=1e-12)
        assert xi(MODELS3["g1+g2+e1"]).value == pytest.approx(1 / 3, abs=1e-12)

    def test_kind_mode_mismatch(self):
        with pytest.raises(ModelValidationError):
            xi(MODELS2["g1+g2+e1"], kind="fraternal")
        with pytest.raises(ModelValidationError):
            xi(MODELS3["g1+g2+e1"], kind="bogus")

    def test_one_minus_xi_is_correlation(self):
        # 1 - xi equals Cor(Y(G), Y(G')) from paired shared-environment draws
        for label in ("g1*e2+e1", "ind(g1+x1+e1)"):
            m = MODELS2[label]
            val = xi(m).value
            t = mc_sample(m, 1_000_000, seed=31, coupling="shared-env-pair")
            corr = np.corrcoef(t["y"], t["y_prime"])[0, 1]
            assert 1.0 - val == pytest.approx(corr, abs=5e-3)
            assert corr >= -1e-3

    def test_xi_within_unit_interval_all_rows(self):
        for models in (MODELS2, MODELS3):
            for m in models.values():
                v = xi(m).value
                assert -1e-12 <= v <= 1.0 + 1e-12

    def test_equals_broad_h2_without_gxe(self):
        for label in NO_GXE_ROWS:
            m = MODELS2[label]
            assert xi(m).value == pytest.approx(broad_h2(m).value, abs=1e-10)

    def test_degenerate(self):
        m = parse_model("symbol e1 : latent_env ~ normal(0, 0)\nphenotype = e1\n")
        with pytest.raises(DegeneratePhenotypeError):
            xi(m)


class TestBroadNarrow:
    def test_product_model(self):
        m = MODELS2["g1*g2+e1"]
        assert broad_h2(m).value == pytest.approx(5 / 7, abs=1e-12)
        assert narrow_h2(m).value == pytest.approx(4 / 7, abs=1e-12)

    def test_pure_environment(self):
        m = parse_model("symbol e1 : latent_env ~ normal(0, 1)\nphenotype = e1\n")
        assert broad_h2(m).value == 0.0
        assert narrow_h2(m).value == 0.0

    def test_one_gene_decomposition(self):
        p, a, d, se2 = 0.35, 1.3, 0.6, 0.8
        sa2, sd2 = additive_dominance_variances(AlleleFrequency(p), a, d)
        m = parse_model(
            f"symbol g1 : genotype ~ hwe({p})\n"
            f"symbol e1 : latent_env ~ normal(0, {se2})\n"
            f"phenotype = {a}*(g1 - 1) + {d}*g1*(2 - g1) + e1\n"
        )
        vy = sa2 + sd2 + se2
        assert broad_h2(m).value == pytest.approx((sa2 + sd2) / vy, abs=1e-10)
        assert narrow_h2(m).value == pytest.approx(sa2 / vy, abs=1e-10)

    def test_additive_projection_exact(self):
        m = MODELS2["g1+g2+e1"]
        assert narrow_h2(m).value == pytest.approx(broad_h2(m).value, abs=1e-12)

    def test_monomorphic_locus_min_norm(self):
        m = parse_model(
            "symbol g1 : genotype ~ hwe(1)\n"
            "symbol g2 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = g1 + g2 + e1\n"
        )
        # singular Cov(G): only g2 contributes
        assert narrow_h2(m).value == pytest.approx(0.5 / 1.0, abs=1e-10)

    def test_ordering(self):
        for models in (MODELS2, MODELS3):
            for m in models.values():
                h2 = narrow_h2(m).value
                H2 = broad_h2(m).value
                assert h2 <= H2 + 1e-10
                assert H2 <= 1.0 + 1e-12

    def test_dosage_recoding_invariance(self):
        # the +-1/0 coding is an affine recode of the 0/1/2 dosage; the
        # projection onto linear functions is affine-invariant, so every
        # ratio estimand is unchanged
        p, a, d = 0.3, 1.1, 0.7
        q = 1 - p
        dosage = parse_model(
            f"symbol g1 : genotype ~ hwe({p})\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            f"phenotype = {a}*(g1 - 1) + {d}*g1*(2 - g1) + e1\n"
        )
        recoded = parse_model(
            f"symbol g1 : genotype ~ discrete(-1:{q*q!r}, 0:{2*p*q!r}, 1:{p*p!r})\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            f"phenotype = {a}*g1 + {d}*(1 - g1*g1) + e1\n"
        )
        for fn in (narrow_h2, broad_h2, xi):
            assert fn(recoded).value == pytest.approx(fn(dosage).value, abs=1e-12)


class TestMomentBounds:
    def test_gxe_observed(self):
        lo, hi = moment_bounds(MODELS2["g1*x1+e1"])
        assert lo.value == pytest.approx(5 / 11, abs=1e-12)
        assert hi.value == pytest.approx(9 / 11, abs=1e-12)

    def test_family_observed(self):
        lo, hi = moment_bounds(MODELS3["g1+x1+e1"])
        assert hi.value == pytest.approx(3 / 7, abs=1e-12)

    def test_trivial_bounds(self):
        m = parse_model("symbol e1 : latent_env ~ normal(0, 1)\nphenotype = e1\n")
        lo, hi = moment_bounds(m)
        assert lo.value == 0.0
        assert hi.value == 1.0

    def test_h2_below_xi_l_prime_when_independent(self):
        # X independent of G (population rows): H^2 <= xi_l'; equality without X
        for label in ["g1+g2+e1", "g1*g2+e1", "g1*e2+e1"]:
            m = MODELS2[label]
            lo, _ = moment_bounds(m)
            assert broad_h2(m).value == pytest.approx(lo.value, abs=1e-10)
        for label in ["g1+x1+e1", "g1*x1+e1"]:
            m = MODELS2[label]
            lo, _ = moment_bounds(m)
            assert broad_h2(m).value <= lo.value + 1e-10

    def test_comonotone_tightness(self):
        for table, models in ((2, MODELS2), (3, MODELS3)):
            for label in COMONOTONE_ROWS:
                m = models[label]
                assert cp.xi_l(m).value == pytest.approx(xi(m).value, abs=1e-10), (
                    table,
                    label,
                )


class TestTwin:
    def test_ace_example(self):
        sib = SiblingModel.build("g1 - 1", None, {"g1": 0.5},
                                 family_variance=0.25, noise_variance=0.5)
        tw = twin_quantities(sib)
        assert tw.h2_twin == pytest.approx(0.4, abs=1e-12)
        assert tw.rho_mz == pytest.approx((0.5 + 0.25) / 1.25, abs=1e-12)
        assert tw.rho_dz == pytest.approx((0.25 + 0.25) / 1.25, abs=1e-12)
        rd = rdr_quantities(sib)
        assert tw.h2_twin == pytest.approx(2 * rd.xi_fraternal, abs=1e-12)

    def test_dominance_formula(self):
        p, a, d = 0.4, 1.0, 0.8
        sa2, sd2 = additive_dominance_variances(AlleleFrequency(p), a, d)
        sib = SiblingModel.build(
            f"{a}*(g1 - 1) + {d}*g1*(2 - g1)", None, {"g1": p},
            family_variance=0.3, noise_variance=0.5,
        )
        tw = twin_quantities(sib)
        vy = sa2 + sd2 + 0.8
        assert tw.h2_twin == pytest.approx((sa2 + 1.5 * sd2) / vy, abs=1e-12)

    def test_plain_family_model(self):
        tw = twin_quantities(MODELS3["ind(g1+g2+e1)"])
        assert tw.h2_twin == pytest.approx(0.3844, abs=5e-4)

    def test_h2_twin_equals_twice_xi_l_prime(self):
        # no shared environment beyond the family context
        for label in MODELS3:
            m = MODELS3[label]
            tw = twin_quantities(m)
            lo, _ = moment_bounds(m)
            assert tw.h2_twin == pytest.approx(2.0 * lo.value, abs=1e-10)

    def test_population_model_rejected(self):
        with pytest.raises(ModelValidationError):
            twin_quantities(MODELS2["g1+g2+e1"])


class TestRdr:
    def test_direct_only(self):
        sib = SiblingModel.build("g1", None, {"g1": 0.5}, 0.0, 0.5)
        rd = rdr_quantities(sib)
        assert rd.h2_rdr == pytest.approx(0.5, abs=1e-12)
        assert rd.xi_fraternal == pytest.approx(0.25, abs=1e-12)
        assert rd.xi_adopted == pytest.approx(rd.h2_rdr, abs=1e-15)

    def test_indirect_changes_denominator_only(self):
        base = SiblingModel.build("g1", None, {"g1": 0.5}, 0.0, 0.5)
        with_ind = SiblingModel.build("g1", "g1", {"g1": 0.5}, 0.0, 0.5)
        rd0 = rdr_quantities(base)
        rd1 = rdr_quantities(with_ind)
        assert rd0.h2_rdr * rd0.var_y == pytest.approx(rd1.h2_rdr * rd1.var_y, abs=1e-12)

    def test_zero_direct(self):
        sib = SiblingModel.build("0*g1", "g1", {"g1": 0.5}, 0.0, 0.5)
        rd = rdr_quantities(sib)
        assert rd.h2_rdr == 0.0
        assert rd.xi_fraternal == 0.0
        assert rd.xi_adopted == 0.0

    def test_fraternal_below_rdr(self):
        sib = SiblingModel.build("g1 + 0.3*g1*(2 - g1)", "0.5*g1", {"g1": 0.4}, 0.1, 0.5)
        rd = rdr_quantities(sib)
        assert rd.xi_fraternal <= rd.h2_rdr + 1e-12

    def test_negative_indirect_exceeds_one(self):
        sib = SiblingModel.build("g1 - 1", "-0.5*(g1 - 1)", {"g1": 0.5}, 0.0, 0.05)
        with pytest.warns(UserWarning, match="exceeds 1"):
            rd = rdr_quantities(sib)
        assert rd.h2_rdr > 1.0
        # enumeration cross-check: Var(fd) = 0.5, Var(Y) = Var(0.5 fd ... )
        sa2, _ = additive_dominance_variances(AlleleFrequency(0.5), 1.0, 0.0)
        vy = sa2 * (1 + 0.25) - 2 * 0.5 * (0.5 * sa2) + 0.05
        assert rd.h2_rdr == pytest.approx(sa2 / vy, abs=1e-12)


class TestGeneticCorrelation:
    def test_self_is_xi(self):
        m = MODELS2["g1*e2+e1"]
        assert genetic_correlation(m, m).value == pytest.approx(xi(m).value, abs=1e-12)

    def test_sign_flip(self):
        m = MODELS2["g1+g2+e1"]
        neg = parse_model(m.text().replace("phenotype = g1 + g2 + e1",
                                           "phenotype = -(g1 + g2 + e1)"))
        assert genetic_correlation(m, neg).value == pytest.approx(-xi(m).value, abs=1e-12)

    def test_independent_loci_zero(self):
        my = parse_model(
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = g1 + e1\n"
        )
        mz = parse_model(
            "symbol g2 : genotype ~ hwe(0.5)\n"
            "symbol e2 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = g2 + e2\n"
        )
        assert genetic_correlation(my, mz).value == pytest.approx(0.0, abs=1e-12)

    def test_binding_mismatch(self):
        my = parse_model(
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = g1 + e1\n"
        )
        mz = parse_model(
            "symbol g1 : genotype ~ hwe(0.3)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "phenotype = g1 + e1\n"
        )
        with pytest.raises(ModelValidationError, match="mismatch"):
            genetic_correlation(my, mz)

    def test_probit_pair_mc(self):
        m = MODELS2["ind(g1+g2+e1)"]
        cfg = EngineConfig(seed=13, mc_n=400_000)
        r = genetic_correlation(m, m, cfg)
        assert r.method == "monte-carlo"
        assert r.value == pytest.approx(xi(m).value, abs=4 * r.se + 1e-3)


class TestReport:
    def test_population_report_fields(self):
        rep = report(MODELS2["g1*x1+e1"])
        for name in ("narrow_h2", "broad_H2", "xi", "xi_l_prime", "xi_l", "xi_u", "xi_u_prime"):
            assert name in rep.entries
        assert rep.kind == "unrelated"
        assert len(rep.model_digest) == 12

    def test_family_report_fields(self):
        rep = report(MODELS3["g1+x1+e1"])
        for name in ("h2_twin", "rho_MZ", "rho_DZ", "xi_adopted", "xi_unrelated"):
            assert name in rep.entries
        assert rep.kind == "fraternal"

    def test_pure_environment_report(self):
        m = parse_model(
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 1)\n"
            "phenotype = e1\n"
        )
        rep = report(m)
        assert rep.value("xi") == 0.0
        assert rep.value("broad_H2") == 0.0
        assert rep.value("xi_u_prime") == 1.0

    def test_bound_chain_all_builtin_rows(self):
        for models in (MODELS2, MODELS3):
            for label, m in models.items():
                rep = report(m, EngineConfig(seed=17, mc_n=200_000))
                e = rep.entries
                slack = 4 * (e["xi_l"].se + e["xi"].se) + 1e-9
                assert e["xi_l_prime"].value <= e["xi_l"].value + slack, label
                assert e["xi_l"].value <= e["xi"].value + slack, label
                assert e["xi"].value <= min(e["xi_u"].value, e["xi_u_prime"].value) + slack

    def test_affine_invariance(self):
        base = (
            "symbol g1 : genotype ~ hwe(0.5)\n"
            "symbol e1 : latent_env ~ normal(0, 0.5)\n"
            "symbol e2 : latent_env ~ discrete(0:0.25, 1:0.5, 2:0.25)\n"
            "phenotype = {phen}\n"
        )
        m0 = parse_model(base.format(phen="g1*e2 + e1"))
        cfg = EngineConfig(seed=23, mc_n=200_000)
        r0 = report(m0, cfg)
        for c, b in [(2.0, 7.0), (-3.0, 7.0)]:
            m = parse_model(base.format(phen=f"{c}*(g1*e2 + e1) + {b}"))
            r = report(m, cfg)
            for name in ("narrow_h2", "broad_H2", "xi", "xi_l_prime", "xi_u_prime"):
                assert r.value(name) == pytest.approx(r0.value(name), abs=1e-10), name
            # xi_l is sampled for this mixture model; allow Monte Carlo slack
            assert r.value("xi_l") == pytest.approx(
                r0.value("xi_l"), abs=4 * (r.entries["xi_l"].se + r0.entries["xi_l"].se)
            )

    def test_inconsistency_raises(self):
        from cfherit.estimands import ReportEntry, _check_report

        entries = {
            "narrow_h2": ReportEntry(0.5),
            "broad_H2": ReportEntry(0.4),  # violates h2 <= H2
            "xi": ReportEntry(0.5),
            "xi_l_prime": ReportEntry(0.1),
            "xi_l": ReportEntry(0.2),
            "xi_u": ReportEntry(0.9),
            "xi_u_prime": ReportEntry(0.9),
        }
        with pytest.raises(ReportInconsistencyError):
            _check_report(entries)
