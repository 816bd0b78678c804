"""Cone descriptions and barrier calculus for K = orthant^q x Kexp^p.

The exponential cone is the closure of
    {(x1, x2, x3) : x1 >= x2 * exp(x3 / x2), x2 > 0},
with the 3-logarithmically-homogeneous self-concordant barrier
    F(x) = -log(x2 * log(x1 / x2) - x3) - log(x1) - log(x2).

Its dual (under <x, s> >= 0) is the closure of
    {(s1, s2, s3) : s1 >= -s3 * exp(s2 / s3 - 1), s3 < 0, s1 > 0}.

The orthant uses the 1-LHSCB -log(x); barriers add over product cones, so
the full parameter is nu = q + 3 p.  All vector-level operations are
batched over the exponential blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np

__all__ = ["ConeSpec", "ConeError", "barrier_exp", "EXP_INIT"]

# Self-dual initial point for each exponential cone block (in K and K*).
EXP_INIT = np.array([1.291, 0.805, -0.828])


class ConeError(ValueError):
    """Raised for points outside a barrier's domain or bad cone specs."""


# -- batched exponential-cone primitives; X has shape (p, 3) -------------------


def _exp_r(X: np.ndarray) -> np.ndarray:
    """The barrier residual x2 log(x1/x2) - x3 (positive strictly inside)."""
    return X[:, 1] * np.log(X[:, 0] / X[:, 1]) - X[:, 2]


def _exp_interior_mask(X: np.ndarray) -> np.ndarray:
    ok = (X[:, 0] > 0) & (X[:, 1] > 0)
    out = np.zeros(len(X), dtype=bool)
    if np.any(ok):
        sub = X[ok]
        out[ok] = sub[:, 1] * np.log(sub[:, 0] / sub[:, 1]) - sub[:, 2] > 0
    return out


def _exp_dual_interior_mask(S: np.ndarray) -> np.ndarray:
    # s1 > -s3 exp(s2/s3 - 1) checked in logs to avoid overflow near s3 = 0
    ok = (S[:, 0] > 0) & (S[:, 2] < 0)
    out = np.zeros(len(S), dtype=bool)
    if np.any(ok):
        sub = S[ok]
        out[ok] = (
            np.log(sub[:, 0]) > np.log(-sub[:, 2]) + sub[:, 1] / sub[:, 2] - 1.0
        )
    return out


def _exp_value_batch(X: np.ndarray) -> np.ndarray:
    r = _exp_r(X)
    return -np.log(r) - np.log(X[:, 0]) - np.log(X[:, 1])


def _exp_grad_batch(X: np.ndarray) -> np.ndarray:
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    ell = np.log(x1 / x2)
    r = x2 * ell - x3
    g = np.empty_like(X)
    g[:, 0] = -(x2 / x1) / r - 1.0 / x1
    g[:, 1] = -(ell - 1.0) / r - 1.0 / x2
    g[:, 2] = 1.0 / r
    return g


def _exp_hess_batch(X: np.ndarray) -> np.ndarray:
    """Stack of 3x3 Hessians, shape (p, 3, 3)."""
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    ell = np.log(x1 / x2)
    r = x2 * ell - x3
    gr = np.stack([x2 / x1, ell - 1.0, -np.ones_like(x1)], axis=1)
    H = gr[:, :, None] * gr[:, None, :] / (r * r)[:, None, None]
    # minus hess(r) / r
    H[:, 0, 0] += (x2 / x1**2) / r
    H[:, 0, 1] -= (1.0 / x1) / r
    H[:, 1, 0] -= (1.0 / x1) / r
    H[:, 1, 1] += (1.0 / x2) / r
    H[:, 0, 0] += 1.0 / x1**2
    H[:, 1, 1] += 1.0 / x2**2
    return H


def barrier_exp(x1: float, x2: float, x3: float):
    """Barrier value, gradient and Hessian at a strictly interior point.

    Satisfies F(t x) = F(x) - 3 log t.  Raises ConeError on the boundary or
    outside the cone.
    """
    if not (x1 > 0 and x2 > 0) or not x2 * math.log(x1 / x2) - x3 > 0:
        raise ConeError("point is not strictly interior to the exponential cone")
    X = np.array([[x1, x2, x3]])
    return (
        float(_exp_value_batch(X)[0]),
        _exp_grad_batch(X)[0],
        _exp_hess_batch(X)[0],
    )


def _exp_conjugate_batch(S: np.ndarray, warm: np.ndarray) -> np.ndarray:
    """Solve F'(x) = -s for every row by damped batched Newton."""
    p = len(S)
    X = warm.copy()
    bad = ~_exp_interior_mask(X)
    if np.any(bad):
        X[bad] = EXP_INIT
    snorm = np.maximum(1.0, np.linalg.norm(S, axis=1))
    active = np.ones(p, dtype=bool)
    for _ in range(60):
        resid = _exp_grad_batch(X) + S
        rnorm = np.linalg.norm(resid, axis=1)
        active = rnorm > 1e-12 * snorm
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        H = _exp_hess_batch(X[idx])
        try:
            step = np.linalg.solve(H, -resid[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise ConeError("singular Hessian in conjugate-point Newton")
        t = np.ones(len(idx))
        for _ in range(40):
            trial = X[idx] + t[:, None] * step
            okay = _exp_interior_mask(trial)
            if np.all(okay):
                break
            t[~okay] *= 0.5
        X[idx] = X[idx] + t[:, None] * step
    if np.any(active):
        resid = _exp_grad_batch(X) + S
        if np.any(np.linalg.norm(resid, axis=1) > 1e-6 * snorm):
            raise ConeError("exp-cone conjugate-point Newton failed to converge")
    return X


@dataclass(frozen=True)
class ConeSpec:
    """Ordered cone blocks: ("orthant", length) or ("exp", 3)."""

    blocks: tuple

    def __post_init__(self):
        norm = []
        for blk in self.blocks:
            kind = blk[0]
            if kind == "orthant":
                length = int(blk[1])
                if length <= 0:
                    raise ConeError("orthant block must have positive length")
                norm.append(("orthant", length))
            elif kind == "exp":
                norm.append(("exp", 3))
            else:
                raise ConeError(f"unknown cone block {blk!r}")
        object.__setattr__(self, "blocks", tuple(norm))

    @property
    def n(self) -> int:
        return sum(length for _, length in self.blocks)

    @property
    def nu(self) -> int:
        return self.n  # 1 per orthant coordinate, 3 per exp block

    @property
    def n_exp(self) -> int:
        return sum(1 for kind, _ in self.blocks if kind == "exp")

    def iter_blocks(self):
        offset = 0
        for kind, length in self.blocks:
            yield kind, offset, length
            offset += length

    @cached_property
    def orth_idx(self) -> np.ndarray:
        idx = []
        for kind, off, length in self.iter_blocks():
            if kind == "orthant":
                idx.extend(range(off, off + length))
        return np.array(idx, dtype=np.int64)

    @cached_property
    def exp_idx(self) -> np.ndarray:
        """Shape (p, 3): coordinate indices of each exponential block."""
        idx = []
        for kind, off, _ in self.iter_blocks():
            if kind == "exp":
                idx.append([off, off + 1, off + 2])
        return np.array(idx, dtype=np.int64).reshape(-1, 3)

    # -- vector-level operations -----------------------------------------------

    def initial_point(self) -> np.ndarray:
        x = np.empty(self.n)
        x[self.orth_idx] = 1.0
        if len(self.exp_idx):
            x[self.exp_idx] = EXP_INIT
        return x

    def interior(self, x: np.ndarray) -> bool:
        if len(self.orth_idx) and not np.all(x[self.orth_idx] > 0):
            return False
        if len(self.exp_idx) and not np.all(_exp_interior_mask(x[self.exp_idx])):
            return False
        return True

    def member(self, x: np.ndarray, tol: float = 0.0) -> bool:
        """Closed-cone membership (tol relaxes the inequalities slightly)."""
        if len(self.orth_idx) and not np.all(x[self.orth_idx] >= -tol):
            return False
        for row in x[self.exp_idx]:
            x1, x2, x3 = row
            if x2 > 0:
                if not (x1 > 0 and x1 + tol >= x2 * math.exp(x3 / x2)):
                    return False
            elif not (x2 >= -tol and x1 >= -tol and x3 <= tol):
                return False
        return True

    def dual_interior(self, s: np.ndarray) -> bool:
        if len(self.orth_idx) and not np.all(s[self.orth_idx] > 0):
            return False
        if len(self.exp_idx) and not np.all(
            _exp_dual_interior_mask(s[self.exp_idx])
        ):
            return False
        return True

    def barrier(self, x: np.ndarray) -> float:
        if not self.interior(x):
            raise ConeError("barrier domain violated")
        total = 0.0
        if len(self.orth_idx):
            total -= float(np.log(x[self.orth_idx]).sum())
        if len(self.exp_idx):
            total += float(_exp_value_batch(x[self.exp_idx]).sum())
        return total

    def grad(self, x: np.ndarray) -> np.ndarray:
        g = np.empty(self.n)
        if len(self.orth_idx):
            g[self.orth_idx] = -1.0 / x[self.orth_idx]
        if len(self.exp_idx):
            g[self.exp_idx] = _exp_grad_batch(x[self.exp_idx])
        return g

    def hess_data(self, x: np.ndarray):
        """(orthant diagonal, stacked exp 3x3 Hessians)."""
        diag = 1.0 / x[self.orth_idx] ** 2 if len(self.orth_idx) else np.zeros(0)
        He = (
            _exp_hess_batch(x[self.exp_idx])
            if len(self.exp_idx)
            else np.zeros((0, 3, 3))
        )
        return diag, He

    def hess_mul(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        if len(self.orth_idx):
            out[self.orth_idx] = v[self.orth_idx] / x[self.orth_idx] ** 2
        if len(self.exp_idx):
            He = _exp_hess_batch(x[self.exp_idx])
            out[self.exp_idx] = np.einsum("pij,pj->pi", He, v[self.exp_idx])
        return out

    def conjugate_point(self, s: np.ndarray, warm: np.ndarray = None) -> np.ndarray:
        """The shadow iterate xtilde = -grad Fdual(s), i.e. F'(xtilde) = -s."""
        if not self.dual_interior(s):
            raise ConeError("conjugate point requires s strictly inside K*")
        out = np.empty(self.n)
        if len(self.orth_idx):
            out[self.orth_idx] = 1.0 / s[self.orth_idx]
        if len(self.exp_idx):
            W = (
                warm[self.exp_idx]
                if warm is not None
                else np.tile(EXP_INIT, (len(self.exp_idx), 1))
            )
            out[self.exp_idx] = _exp_conjugate_batch(s[self.exp_idx], W)
        return out

    def max_step(
        self, x: np.ndarray, dx: np.ndarray, s: np.ndarray, ds: np.ndarray
    ) -> float:
        """Largest alpha in (0, 1] keeping x and s strictly interior (primal
        and dual respectively), found by orthant ratios plus bisection on the
        exponential blocks."""
        hi = 1.0
        for vec, dvec in ((x[self.orth_idx], dx[self.orth_idx]),
                          (s[self.orth_idx], ds[self.orth_idx])):
            if len(vec):
                neg = dvec < 0
                if np.any(neg):
                    hi = min(hi, float((-vec[neg] / dvec[neg]).min()) * (1 - 1e-12))
        if hi <= 0:
            return 0.0
        if len(self.exp_idx) == 0:
            return hi
        Xe, dXe = x[self.exp_idx], dx[self.exp_idx]
        Se, dSe = s[self.exp_idx], ds[self.exp_idx]

        def ok(alpha: float) -> bool:
            return bool(
                np.all(_exp_interior_mask(Xe + alpha * dXe))
                and np.all(_exp_dual_interior_mask(Se + alpha * dSe))
            )

        if ok(hi):
            return hi
        lo, cur = 0.0, hi
        for _ in range(50):
            mid = 0.5 * (lo + cur)
            if ok(mid):
                lo = mid
            else:
                cur = mid
        return lo

    def block_products(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Per-block <x_b, s_b> / nu_b (orthant coordinates count singly)."""
        parts = []
        if len(self.orth_idx):
            parts.append(x[self.orth_idx] * s[self.orth_idx])
        if len(self.exp_idx):
            parts.append((x[self.exp_idx] * s[self.exp_idx]).sum(axis=1) / 3.0)
        return np.concatenate(parts) if parts else np.zeros(0)
