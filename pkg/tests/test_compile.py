import math

import numpy as np
import pytest

from pdginfer.compiler import (
    ArcValueSplit,
    CompileError,
    RegimeError,
    compile_cluster_inc,
    compile_cluster_small_gamma,
    compile_cluster_zero_plus,
    compile_joint_inc,
    compile_joint_small_gamma,
    compile_joint_zero_plus,
    freeze_marginals,
    trivial_tree,
)
from pdginfer.decomp import build_decomposition, root_and_assign
from pdginfer.model import PDG, JointDistribution
from pdginfer.solver import solve

from conftest import arc, bvar, bn_chain_joint

GEOMEAN_CONFLICT = 0.44628710262841953  # KL((.5,.5)||(.8,.2)) + KL((.5,.5)||(.2,.8))


def chain_abc():
    return PDG(
        [bvar("A"), bvar("B"), bvar("C")],
        [
            arc("pa", (), ("A",), [[0.6, 0.4]]),
            arc("pb", ("A",), ("B",), [[0.8, 0.2], [0.3, 0.7]]),
            arc("pc", ("B",), ("C",), [[0.5, 0.5], [0.1, 0.9]]),
        ],
    )


class TestDimensions:
    def test_joint_inc_counts_single_binary_variable(self):
        pdg = PDG([bvar("X")], [arc("p", (), ("X",), [[0.7, 0.3]])])
        comp = compile_joint_inc(pdg)
        # |VA| = 2, |VC| = 2: n = 3*2 + 2 = 8, m = 2*2 + 0 + 1 = 5
        assert comp.program.n == 8
        assert comp.program.m == 5

    def test_cluster_inc_counts_one_arc_two_binary(self):
        pdg = PDG(
            [bvar("X"), bvar("Y")],
            [arc("a", ("X",), ("Y",), [[0.9, 0.1], [0.1, 0.9]])],
        )
        rct = trivial_tree(pdg)
        comp = compile_cluster_inc(pdg, rct)
        # |VA| = 4, |VC| = 4 -> n = 16, m = 2*4 + 0 + 1 = 9
        assert comp.program.n == 16
        assert comp.program.m == 9

    def test_chain_has_separator_calibration_rows(self):
        pdg = chain_abc()
        td = build_decomposition(
            pdg, method="given", clusters=[("A", "B"), ("B", "C")]
        )
        rct = root_and_assign(td, pdg)
        comp = compile_cluster_inc(pdg, rct)
        n_va = 2 + 4 + 4
        n_vc = 4 + 4
        assert comp.program.n == 3 * n_va + n_vc
        # |VT| = |V(B)| = 2
        assert comp.program.m == 2 * n_va + 2 + 2

    def test_small_gamma_counts(self):
        pdg = chain_abc()
        td = build_decomposition(
            pdg, method="given", clusters=[("A", "B"), ("B", "C")]
        )
        rct = root_and_assign(td, pdg)
        comp = compile_cluster_small_gamma(pdg, rct, gamma=0.5)
        n_va, n_vc, n_va0 = 10, 8, 0
        assert comp.program.n == 3 * n_va + 3 * n_vc
        assert comp.program.m == 2 * n_va + 2 + n_va0 + n_vc + 2

    def test_small_gamma_zero_rows_counted(self):
        pdg = PDG(
            [bvar("X"), bvar("Y")],
            [arc("a", ("X",), ("Y",), [[1.0, 0.0], [0.0, 1.0]])],
        )
        comp = compile_joint_small_gamma(pdg, gamma=0.5)
        split = ArcValueSplit.of(pdg)
        assert len(split.zero) == 2
        # n = 3*4 + 3*4, m = 2*4 + 0 + 2 + 4 + 1
        assert comp.program.n == 24
        assert comp.program.m == 15

    def test_zero_plus_counts(self):
        pdg = chain_abc()
        td = build_decomposition(
            pdg, method="given", clusters=[("A", "B"), ("B", "C")]
        )
        rct = root_and_assign(td, pdg)
        frozen = freeze_marginals(bn_joint(pdg), pdg, rct)
        comp = compile_cluster_zero_plus(pdg, rct, frozen)
        n_va, n_vc = 10, 8
        assert comp.program.n == 3 * n_vc
        assert comp.program.m == n_vc + 2 + n_va + 2

    def test_index_map_is_bijection(self):
        pdg = chain_abc()
        comp = compile_joint_small_gamma(pdg, gamma=1.0)
        cols = sorted(comp.index.columns.values())
        assert cols == list(range(comp.program.n))


def bn_joint(pdg):
    """Exact joint of a BN-shaped chain PDG by enumeration."""
    names = pdg.var_names
    probs = []
    arcs = {a.id: a for a in pdg.arcs}
    for world in pdg.worlds():
        assign = dict(zip(names, world))
        p = 1.0
        for a in pdg.arcs:
            s = pdg.assignment_index(a.sources, [assign[v] for v in a.sources])
            t = pdg.assignment_index(a.targets, [assign[v] for v in a.targets])
            p *= a.cpd[s, t]
        probs.append(p)
    probs = np.array(probs)
    return JointDistribution(names, probs / probs.sum(), pdg)


class TestJointInc:
    def test_conflict_objective_and_optimum(self, conflict_pdg):
        comp = compile_joint_inc(conflict_pdg)
        sol = solve(comp.program, tol=1e-9)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(GEOMEAN_CONFLICT, abs=1e-7)
        beliefs = comp.cluster_beliefs(sol.primal)
        assert beliefs[0][1] == pytest.approx(0.5, abs=1e-6)

    def test_consistent_single_cpd_scores_zero(self):
        pdg = PDG([bvar("X")], [arc("p", (), ("X",), [[0.7, 0.3]])])
        comp = compile_joint_inc(pdg)
        sol = solve(comp.program, tol=1e-9)
        assert sol.objective == pytest.approx(0.0, abs=1e-7)
        beliefs = comp.cluster_beliefs(sol.primal)
        assert np.allclose(beliefs[0], [0.7, 0.3], atol=1e-6)


class TestJointSmallGamma:
    def test_bn_scores_zero_and_recovers_joint(self, bn_chain_xy):
        comp = compile_joint_small_gamma(bn_chain_xy, gamma=1.0)
        sol = solve(comp.program, tol=1e-9)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(0.0, abs=1e-7)
        beliefs = comp.cluster_beliefs(sol.primal)[0]
        expected = bn_chain_joint(bn_chain_xy).probs
        assert np.allclose(beliefs, expected, atol=1e-6)

    def test_zero_arcs_pure_max_entropy(self):
        pdg = PDG([bvar("X"), bvar("Y")], [])
        comp = compile_joint_small_gamma(pdg, gamma=1.0)
        sol = solve(comp.program, tol=1e-9)
        assert sol.objective == pytest.approx(-math.log(4), abs=1e-7)
        beliefs = comp.cluster_beliefs(sol.primal)[0]
        assert np.allclose(beliefs, 0.25, atol=1e-6)

    def test_conflict_tiny_gamma(self, conflict_pdg):
        gamma = 1e-4
        comp = compile_joint_small_gamma(conflict_pdg, gamma=gamma)
        sol = solve(comp.program, tol=1e-10)
        beliefs = comp.cluster_beliefs(sol.primal)[0]
        assert beliefs[1] == pytest.approx(0.5, abs=1e-4)
        # alpha = 1 on both arcs: sinc at uniform = 2 H - H = +ln 2
        expected = GEOMEAN_CONFLICT + gamma * math.log(2)
        assert sol.objective == pytest.approx(expected, abs=1e-6)

    def test_variants_agree(self, bn_chain_xy):
        a = solve(
            compile_joint_small_gamma(bn_chain_xy, 0.7, variant="linear-p").program,
            tol=1e-9,
        )
        b = solve(
            compile_joint_small_gamma(bn_chain_xy, 0.7, variant="cone-p").program,
            tol=1e-9,
        )
        assert a.objective == pytest.approx(b.objective, abs=1e-7)

    def test_regime_violation_rejected(self, bn_chain_xy):
        with pytest.raises(RegimeError):
            compile_joint_small_gamma(bn_chain_xy, gamma=1.5)


class TestClusterAgreesWithJoint:
    def test_inc_objective_matches(self):
        pdg = chain_abc()
        td = build_decomposition(pdg)
        rct = root_and_assign(td, pdg)
        sol_c = solve(compile_cluster_inc(pdg, rct).program, tol=1e-9)
        sol_j = solve(compile_joint_inc(pdg).program, tol=1e-9)
        assert sol_c.objective == pytest.approx(sol_j.objective, abs=1e-6)

    def test_small_gamma_objective_matches(self):
        pdg = chain_abc()
        td = build_decomposition(pdg)
        rct = root_and_assign(td, pdg)
        for gamma in (1.0, 1e-3):
            sol_c = solve(compile_cluster_small_gamma(pdg, rct, gamma).program, tol=1e-9)
            sol_j = solve(compile_joint_small_gamma(pdg, gamma).program, tol=1e-9)
            assert sol_c.objective == pytest.approx(sol_j.objective, abs=1e-5)

    def test_single_cluster_small_gamma_is_joint_form(self, bn_chain_xy):
        rct = trivial_tree(bn_chain_xy)
        a = compile_cluster_small_gamma(bn_chain_xy, rct, 1.0)
        b = compile_joint_small_gamma(bn_chain_xy, 1.0)
        assert a.program.n == b.program.n
        assert a.program.m == b.program.m
        assert np.array_equal(a.program.c, b.program.c)


class TestFreezeMarginals:
    def test_alpha_zero_contributes_unit_factor(self, conflict_pdg):
        pdg = PDG(
            [bvar("X")],
            [
                arc("p", (), ("X",), [[0.8, 0.2]], alpha=0.0),
                arc("q", (), ("X",), [[0.2, 0.8]], alpha=0.0),
            ],
        )
        mu = JointDistribution(("X",), np.array([0.5, 0.5]), pdg)
        frozen = freeze_marginals(mu, pdg)
        assert np.allclose(frozen.k[0], 1.0)

    def test_conflict_k_vector(self, conflict_pdg):
        mu = JointDistribution(("X",), np.array([0.5, 0.5]), conflict_pdg)
        frozen = freeze_marginals(mu, conflict_pdg)
        assert np.allclose(frozen.k[0], [0.25, 0.25])

    def test_zero_source_marginal_flagged_undefined(self):
        pdg = PDG(
            [bvar("X"), bvar("Y")],
            [arc("a", ("X",), ("Y",), [[0.5, 0.5], [0.5, 0.5]])],
        )
        mu = JointDistribution(("X", "Y"), np.array([0.5, 0.5, 0.0, 0.0]), pdg)
        frozen = freeze_marginals(mu, pdg)
        assert frozen.undefined["a"] == (1,)
        assert np.allclose(frozen.cond["a"][1], 0.5)


class TestZeroPlus:
    def test_uniquely_determined_pdg_returns_same_joint(self):
        pdg = PDG(
            [bvar("X"), bvar("Y")],
            [
                arc(
                    "full",
                    (),
                    ("X", "Y"),
                    [[0.1, 0.2, 0.3, 0.4]],
                )
            ],
        )
        stage1 = solve(compile_joint_inc(pdg).program, tol=1e-9)
        comp1 = compile_joint_inc(pdg)
        beliefs1 = comp1.cluster_beliefs(stage1.primal)
        frozen = freeze_marginals(beliefs1, pdg, comp1.rct)
        comp2 = compile_joint_zero_plus(pdg, frozen)
        sol2 = solve(comp2.program, tol=1e-9)
        beliefs2 = comp2.cluster_beliefs(sol2.primal)
        assert np.allclose(beliefs2[0], [0.1, 0.2, 0.3, 0.4], atol=1e-5)

    def test_conflict_alpha_zero_sinc_is_negative_entropy(self):
        pdg = PDG(
            [bvar("X")],
            [
                arc("p", (), ("X",), [[0.8, 0.2]], alpha=0.0),
                arc("q", (), ("X",), [[0.2, 0.8]], alpha=0.0),
            ],
        )
        comp1 = compile_joint_inc(pdg)
        sol1 = solve(comp1.program, tol=1e-9)
        frozen = freeze_marginals(comp1.cluster_beliefs(sol1.primal), pdg, comp1.rct)
        comp2 = compile_joint_zero_plus(pdg, frozen)
        sol2 = solve(comp2.program, tol=1e-9)
        beliefs = comp2.cluster_beliefs(sol2.primal)[0]
        assert beliefs[1] == pytest.approx(0.5, abs=1e-5)
        assert sol2.objective == pytest.approx(-math.log(2), abs=1e-6)

    def test_conflict_alpha_one_sinc_is_positive_entropy(self, conflict_pdg):
        comp1 = compile_joint_inc(conflict_pdg)
        sol1 = solve(comp1.program, tol=1e-9)
        frozen = freeze_marginals(
            comp1.cluster_beliefs(sol1.primal), conflict_pdg, comp1.rct
        )
        comp2 = compile_joint_zero_plus(conflict_pdg, frozen)
        sol2 = solve(comp2.program, tol=1e-9)
        beliefs = comp2.cluster_beliefs(sol2.primal)[0]
        assert beliefs[1] == pytest.approx(0.5, abs=1e-5)
        assert sol2.objective == pytest.approx(math.log(2), abs=1e-6)

    def test_zero_arc_pdg_zero_plus_is_uniform(self):
        pdg = PDG([bvar("X"), bvar("Y")], [])
        comp1 = compile_joint_inc(pdg)
        sol1 = solve(comp1.program, tol=1e-9)
        frozen = freeze_marginals(comp1.cluster_beliefs(sol1.primal), pdg, comp1.rct)
        comp2 = compile_joint_zero_plus(pdg, frozen)
        sol2 = solve(comp2.program, tol=1e-9)
        beliefs = comp2.cluster_beliefs(sol2.primal)[0]
        assert np.allclose(beliefs, 0.25, atol=1e-5)
