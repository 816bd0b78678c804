import math

import numpy as np
import pytest

from pdginfer.model import (
    PDG,
    GammaSpec,
    Hyperarc,
    JointDistribution,
    PdgError,
    Variable,
    oinc,
    score_gamma,
    sinc,
    validate,
)

from conftest import arc, bvar, bn_chain_joint


def point_mass_free_pdg(n_vars=2):
    names = [f"V{i}" for i in range(n_vars)]
    return PDG([bvar(n) for n in names], [])


class TestTypes:
    def test_cpd_rows_renormalized_within_tolerance(self):
        a = arc("a", (), ("X",), [[0.5, 0.5 + 5e-13]])
        assert abs(a.cpd.sum() - 1.0) < 1e-15

    def test_cpd_row_off_by_too_much_rejected(self):
        with pytest.raises(PdgError):
            arc("a", (), ("X",), [[0.5, 0.4]])

    def test_source_target_overlap_rejected(self):
        with pytest.raises(PdgError):
            arc("a", ("X",), ("X",), [[0.5, 0.5], [0.5, 0.5]])

    def test_unknown_variable_rejected(self):
        with pytest.raises(PdgError):
            PDG([bvar("X")], [arc("a", (), ("Y",), [[1.0, 0.0]])])

    def test_infinite_beta_rejected(self):
        with pytest.raises(PdgError):
            arc("a", (), ("X",), [[0.5, 0.5]], beta=math.inf)

    def test_duplicate_values_rejected(self):
        with pytest.raises(PdgError):
            Variable("X", (0, 0))

    def test_joint_must_sum_to_one(self):
        pdg = point_mass_free_pdg(1)
        with pytest.raises(PdgError):
            JointDistribution(pdg.var_names, np.array([0.5, 0.4]), pdg)

    def test_marginalization_commutes(self):
        # mu(S) by summing mu(S, T) over T equals direct marginalization
        rng = np.random.default_rng(7)
        pdg = PDG([Variable("A", (0, 1, 2)), bvar("B"), bvar("C")], [])
        p = rng.random(12)
        mu = JointDistribution(pdg.var_names, p / p.sum(), pdg)
        ab = mu.marginal(("A", "B")).reshape(3, 2)
        assert np.allclose(ab.sum(axis=1), mu.marginal(("A",)))
        assert np.array_equal(ab.sum(axis=1), mu.marginal(("A",)))

    def test_conditioning(self):
        pdg = PDG([bvar("X"), bvar("Y")], [])
        mu = JointDistribution(pdg.var_names, np.array([0.1, 0.2, 0.3, 0.4]), pdg)
        cond = mu.condition({"X": 1})
        assert cond.prob_of({"Y": 1}) == pytest.approx(0.4 / 0.7)


class TestOInc:
    def test_matching_distribution_scores_zero(self, conflict_pdg):
        pdg = PDG(
            [bvar("X")], [arc("p", (), ("X",), [[0.8, 0.2]])]
        )
        mu = JointDistribution(("X",), np.array([0.8, 0.2]), pdg)
        assert oinc(pdg, mu) == pytest.approx(0.0, abs=1e-12)

    def test_two_conflicting_beliefs_at_half(self, conflict_pdg):
        # direct KL summation oracle:
        #   KL((.5,.5)||(.8,.2)) + KL((.5,.5)||(.2,.8))
        expected = sum(
            0.5 * math.log(0.5 / p) + 0.5 * math.log(0.5 / (1 - p))
            for p in (0.2, 0.8)
        )
        assert expected == pytest.approx(0.44629, abs=5e-6)
        mu = JointDistribution(("X",), np.array([0.5, 0.5]), conflict_pdg)
        assert oinc(conflict_pdg, mu) == pytest.approx(expected, abs=1e-12)

    def test_support_violation_is_infinite(self):
        pdg = PDG([bvar("X")], [arc("p", (), ("X",), [[1.0, 0.0]])])
        mu = JointDistribution(("X",), np.array([0.9, 0.1]), pdg)
        assert oinc(pdg, mu) == math.inf

    def test_variable_mismatch_rejected(self, conflict_pdg, bn_chain_xy):
        mu = JointDistribution(("X",), np.array([0.5, 0.5]), conflict_pdg)
        with pytest.raises(PdgError):
            oinc(bn_chain_xy, mu)

    def test_nonnegative_on_random_instances(self, bn_chain_xy):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = rng.random(4)
            mu = JointDistribution(bn_chain_xy.var_names, p / p.sum(), bn_chain_xy)
            assert oinc(bn_chain_xy, mu) >= 0


class TestSInc:
    def test_no_arcs_uniform_is_negative_log_n(self):
        pdg = point_mass_free_pdg(2)
        mu = JointDistribution.uniform(pdg)
        assert sinc(pdg, mu) == pytest.approx(-math.log(4), abs=1e-12)

    def test_single_unconditional_arc_scores_zero(self):
        pdg = PDG([bvar("X")], [arc("p", (), ("X",), [[0.6, 0.4]])])
        for pr in ([0.5, 0.5], [0.2, 0.8], [0.9, 0.1]):
            mu = JointDistribution(("X",), np.array(pr), pdg)
            assert sinc(pdg, mu) == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_chain(self):
        # fair coin X, Y = X: H(Y|X) - H(mu) = 0 - ln 2
        pdg = PDG(
            [bvar("X"), bvar("Y")],
            [arc("a", ("X",), ("Y",), [[1.0, 0.0], [0.0, 1.0]])],
        )
        mu = JointDistribution(("X", "Y"), np.array([0.5, 0.0, 0.0, 0.5]), pdg)
        assert sinc(pdg, mu) == pytest.approx(-math.log(2), abs=1e-12)

    def test_entropy_lower_bound(self):
        pdg = point_mass_free_pdg(3)
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.random(8)
            mu = JointDistribution(pdg.var_names, p / p.sum(), pdg)
            assert sinc(pdg, mu) >= -math.log(8) - 1e-12


class TestScoreGamma:
    def test_consistent_bn_scores_zero_at_gamma_one(self, bn_chain_xy):
        mu = bn_chain_joint(bn_chain_xy)
        assert score_gamma(bn_chain_xy, mu, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_zero_arcs_scales_entropy(self):
        pdg = point_mass_free_pdg(2)
        mu = JointDistribution.uniform(pdg)
        assert score_gamma(pdg, mu, 2.0) == pytest.approx(-2 * math.log(4), abs=1e-12)

    def test_conflict_at_gamma_zero(self, conflict_pdg):
        mu = JointDistribution(("X",), np.array([0.5, 0.5]), conflict_pdg)
        assert score_gamma(conflict_pdg, mu, 0.0) == pytest.approx(0.44629, abs=5e-6)

    def test_regrouped_path_agrees(self, bn_chain_xy):
        rng = np.random.default_rng(5)
        for _ in range(30):
            p = rng.random(4) + 1e-3
            mu = JointDistribution(bn_chain_xy.var_names, p / p.sum(), bn_chain_xy)
            for gamma in (0.0, 0.3, 1.0, 2.5):
                direct = score_gamma(bn_chain_xy, mu, gamma)
                regrouped = score_gamma(bn_chain_xy, mu, gamma, regrouped=True)
                assert direct == pytest.approx(regrouped, abs=1e-9)

    def test_convex_along_segments_when_beta_dominates(self, bn_chain_xy):
        rng = np.random.default_rng(9)
        gamma = 0.8  # beta = 1 >= gamma * alpha
        for _ in range(25):
            p1, p2 = rng.random(4) + 1e-6, rng.random(4) + 1e-6
            mu1 = JointDistribution(bn_chain_xy.var_names, p1 / p1.sum(), bn_chain_xy)
            mu2 = JointDistribution(bn_chain_xy.var_names, p2 / p2.sum(), bn_chain_xy)
            t = rng.uniform(0.1, 0.9)
            mid = JointDistribution(
                bn_chain_xy.var_names,
                t * mu1.probs + (1 - t) * mu2.probs,
                bn_chain_xy,
            )
            lhs = score_gamma(bn_chain_xy, mid, gamma)
            rhs = t * score_gamma(bn_chain_xy, mu1, gamma) + (1 - t) * score_gamma(
                bn_chain_xy, mu2, gamma
            )
            assert lhs <= rhs + 1e-9


class TestValidate:
    def test_not_proper_flagged(self):
        pdg = PDG(
            [bvar("X")], [arc("a", (), ("X",), [[0.5, 0.5]], alpha=1.0, beta=0.0)]
        )
        report = validate(pdg)
        assert "not-proper" in report.codes()

    def test_wellformed_bn_is_clean(self, bn_chain_xy):
        assert validate(bn_chain_xy).ok

    def test_width_bound_flagged(self, bn_chain_xy):
        report = validate(bn_chain_xy, width_bound=0)
        assert "arc-exceeds-width" in report.codes()


class TestGammaSpec:
    def test_parse_forms(self):
        assert GammaSpec.parse("0").kind == "zero"
        assert GammaSpec.parse("0+").kind == "zero_plus"
        assert GammaSpec.parse("0.25") == GammaSpec("positive", 0.25)
        assert GammaSpec.parse(1e-4).gamma == 1e-4

    def test_negative_rejected(self):
        with pytest.raises(PdgError):
            GammaSpec("positive", -1.0)
