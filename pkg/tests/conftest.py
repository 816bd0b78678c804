import numpy as np
import pytest

from pdginfer.model import PDG, Hyperarc, JointDistribution, Variable


def bvar(name):
    return Variable(name, (0, 1))


def arc(aid, sources, targets, cpd, alpha=1.0, beta=1.0):
    return Hyperarc(aid, tuple(sources), tuple(targets), np.asarray(cpd, float), alpha, beta)


@pytest.fixture
def conflict_pdg():
    """Two unconditional beliefs about a binary X: p(X=1)=0.2 vs 0.8."""
    return PDG(
        [bvar("X")],
        [
            arc("p", (), ("X",), [[0.8, 0.2]]),
            arc("q", (), ("X",), [[0.2, 0.8]]),
        ],
    )


@pytest.fixture
def bn_chain_xy():
    """BN-shaped PDG X -> Y with p(X=1)=0.3, p(Y=1|X=1)=0.9, p(Y=1|X=0)=0.1."""
    return PDG(
        [bvar("X"), bvar("Y")],
        [
            arc("px", (), ("X",), [[0.7, 0.3]]),
            arc("py", ("X",), ("Y",), [[0.9, 0.1], [0.1, 0.9]]),
        ],
    )


def bn_chain_joint(pdg):
    """The product distribution of the bn_chain_xy fixture, by enumeration."""
    px = {0: 0.7, 1: 0.3}
    py = {(0, 0): 0.9, (0, 1): 0.1, (1, 0): 0.1, (1, 1): 0.9}
    probs = np.array([px[x] * py[(x, y)] for x in (0, 1) for y in (0, 1)])
    return JointDistribution(pdg.var_names, probs, pdg)
