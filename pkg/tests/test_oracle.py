import math

import numpy as np
import pytest

from pdginfer import engine
from pdginfer.decomp import root_and_assign
from pdginfer.generators import random_ktree_pdg
from pdginfer.model import PDG, JointDistribution, score_gamma
from pdginfer.oracle import (
    CNF,
    OracleError,
    add_uniform_joint_arc,
    brute_force_optimum,
    count_models,
    encode_cnf,
    joint_from_beliefs,
    parse_dimacs,
)

from conftest import arc, bvar, bn_chain_joint


class TestBruteForce:
    def test_conflict_at_gamma_zero(self, conflict_pdg):
        mu = brute_force_optimum(conflict_pdg, 0.0, restarts=2, iters=2000)
        assert mu.probs[1] == pytest.approx(0.5, abs=1e-4)

    def test_consistent_bn_recovers_joint(self, bn_chain_xy):
        mu = brute_force_optimum(bn_chain_xy, 1.0, restarts=2, iters=2000)
        expected = bn_chain_joint(bn_chain_xy)
        tv = 0.5 * np.abs(mu.probs - expected.probs).sum()
        assert tv <= 1e-4

    def test_zero_arc_pdg_is_uniform(self):
        pdg = PDG([bvar("A"), bvar("B")], [])
        mu = brute_force_optimum(pdg, 1.0, restarts=1, iters=500)
        assert np.allclose(mu.probs, 0.25, atol=1e-5)

    def test_zero_plus_two_stage(self, conflict_pdg):
        mu = brute_force_optimum(conflict_pdg, "0+", restarts=2, iters=2000)
        assert mu.probs[1] == pytest.approx(0.5, abs=1e-4)

    def test_matches_engine_on_random_instance(self):
        pdg, td = random_ktree_pdg(seed=100, n=6, treewidth=2, n_arcs=7)
        for gamma in (1e-2, 1.0):
            mu_orc = brute_force_optimum(pdg, gamma, restarts=2, iters=1500)
            rep = engine.infer(pdg, gamma, td=td, tol=1e-9)
            mu_eng = joint_from_beliefs(rep.beliefs)
            assert abs(
                score_gamma(pdg, mu_orc, gamma) - score_gamma(pdg, mu_eng, gamma)
            ) <= 1e-4
            tv = 0.5 * np.abs(mu_orc.probs - mu_eng.probs).sum()
            assert tv <= 1e-3

    def test_unsatisfiable_support_rejected(self):
        pdg = PDG(
            [bvar("X")],
            [
                arc("p", (), ("X",), [[1.0, 0.0]]),
                arc("q", (), ("X",), [[0.0, 1.0]]),
            ],
        )
        with pytest.raises(OracleError):
            brute_force_optimum(pdg, 1.0, restarts=1, iters=100)


class TestJointFromBeliefs:
    def test_single_cluster_identity(self, bn_chain_xy):
        rep = engine.infer(bn_chain_xy, 1.0)
        joint = joint_from_beliefs(rep.beliefs)
        # one cluster covering both variables: the joint is the belief
        assert len(rep.beliefs.rct.clusters) == 1
        assert np.allclose(joint.probs, rep.beliefs.beliefs[0])

    def test_product_beliefs_give_product_distribution(self):
        pdg = PDG(
            [bvar("A"), bvar("B"), bvar("C")],
            [
                arc("ab", ("A",), ("B",), np.full((2, 2), 0.5)),
                arc("bc", ("B",), ("C",), np.full((2, 2), 0.5)),
            ],
        )
        from pdginfer.decomp import build_decomposition

        td = build_decomposition(
            pdg, method="given", clusters=[("A", "B"), ("B", "C")]
        )
        rct = root_and_assign(td, pdg)
        pa = np.array([0.3, 0.7])
        pb = np.array([0.6, 0.4])
        pc = np.array([0.2, 0.8])
        beliefs = (np.outer(pa, pb).ravel(), np.outer(pb, pc).ravel())
        cb = engine.CalibratedBeliefs(rct, beliefs, 0.0, 0.0, pdg)
        joint = joint_from_beliefs(cb)
        expected = np.einsum("a,b,c->abc", pa, pb, pc).ravel()
        assert np.allclose(joint.probs, expected, atol=1e-12)

    def test_round_trip_through_marginalization(self):
        for seed in range(5):
            pdg, td = random_ktree_pdg(seed=seed, n=6, treewidth=2, n_arcs=6)
            rng = np.random.default_rng(seed)
            p = rng.random(pdg.n_worlds) + 0.01
            mu = JointDistribution(pdg.var_names, p / p.sum(), pdg)
            rct = root_and_assign(td, pdg)
            beliefs = tuple(mu.marginal(tuple(c)) for c in rct.clusters)
            cb = engine.CalibratedBeliefs(rct, beliefs, 0.0, 0.0, pdg)
            joint = joint_from_beliefs(cb)
            for ci, cluster in enumerate(rct.clusters):
                assert np.allclose(
                    joint.marginal(tuple(cluster)), beliefs[ci], atol=1e-9
                )


class TestCnf:
    def test_single_positive_clause_structure(self):
        pdg = encode_cnf(CNF(1, ((1,),)))
        assert len(pdg.variables) == 2  # x1 and C1
        assert len(pdg.arcs) == 2  # OR arc and assertion arc

    def test_count_models_examples(self):
        assert count_models(CNF(2, ((1, 2),))) == 3
        assert count_models(CNF(2, ((1, 2), (-1, 2)))) == 2
        assert count_models(CNF(3, ())) == 8

    def test_sharp_sat_identity_small(self):
        formula = CNF(2, ((1, 2), (-1, 2)))
        pdg = encode_cnf(formula)
        inc = engine.inconsistency(pdg, 1.0)
        assert inc == pytest.approx(-math.log(2), abs=1e-4)
        assert math.exp(-inc) == pytest.approx(count_models(formula), rel=1e-3)

    def test_unsatisfiable_formula_infinite_inconsistency(self):
        pdg = encode_cnf(CNF(1, ((1,), (-1,))))
        assert math.isinf(engine.inconsistency(pdg, 1.0))

    def test_gamma_zero_uniform_arc_identity(self):
        formula = CNF(2, ((1, 2), (-1, 2)))
        pdg = add_uniform_joint_arc(encode_cnf(formula))
        inc0 = engine.inconsistency(pdg, "0")
        n_worlds = pdg.n_worlds
        assert n_worlds * math.exp(-inc0) == pytest.approx(
            count_models(formula), rel=1e-3
        )

    def test_oversized_clause_rejected(self):
        with pytest.raises(OracleError):
            encode_cnf(CNF(4, ((1, 2, 3, 4),)), width_bound=3)

    def test_dimacs_roundtrip(self):
        text = """c example
p cnf 3 2
1 -2 0
2 3 0
"""
        cnf = parse_dimacs(text)
        assert cnf.n_vars == 3
        assert cnf.clauses == ((1, -2), (2, 3))

    def test_encode_respects_or_semantics(self):
        formula = CNF(2, ((1, -2),))
        pdg = encode_cnf(formula)
        or_arc = next(a for a in pdg.arcs if a.id == "or1")
        # sources sorted: (x1, x2); clause true unless x1=0 and x2=1
        rows = {}
        for s, (v1, v2) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            sat = (v1 == 1) or (v2 == 0)
            rows[s] = sat
        for s, sat in rows.items():
            assert or_arc.cpd[s, 1] == (1.0 if sat else 0.0)
