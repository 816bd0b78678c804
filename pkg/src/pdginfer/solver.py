"""Homogeneous self-dual interior-point solver for exponential conic programs.

Follows the predictor/centering/correction scheme with the scaling matrix

    W = mu F''(x) + s s^T/(nu mu) - mu stil stil^T/nu
        + (s - mu stil)(s - mu stil)^T / <s - mu stil, x - mu xtil>
        - mu v v^T / (xtil^T F''(x) xtil - nu mutil^2),
    v = F''(x) xtil - mutil stil,

where stil = -F'(x) and xtil = -Fdual'(s) are the shadow iterates and
mutil = <xtil, stil>/nu.  The rank-one terms vanish on the central path;
when their denominators degenerate they are dropped (the limit is exact
there), and if the step still fails the scaling falls back to mu F''(x).

State is z = (y, x, tau, s, kappa) with complementarity
mu_e = (<x, s> + tau kappa)/(nu + 1).  Each direction solves

    G(dz) = rG,   tau dkappa + kappa dtau = rtk,   W dx + ds = rxs

via a sparse KKT system (rank-one terms handled by augmentation) factored
with splu under static regularization.  Step lengths are capped by a 0.99
fraction-to-boundary rule; the centering weight uses the standard
Mehrotra heuristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeError, ConeSpec
from .program import ConicProgram, ConicSolution

__all__ = ["solve", "SolverOptions"]


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 500
    correction: bool = True
    regularization: float = 1e-10
    step_fraction: float = 0.99
    # assumption (A2) constant from the cited analysis; surfaced, not fixed
    neighborhood_beta: float = 0.9
    # wide-neighborhood floor on per-block complementarity vs. the mean
    neighborhood_eta: float = 1e-2


class _HessPattern:
    """Precomputed sparsity of the block-diagonal barrier Hessian."""

    def __init__(self, cones: ConeSpec):
        self.cones = cones
        oi = cones.orth_idx
        ei = cones.exp_idx
        rows = [oi]
        cols = [oi]
        if len(ei):
            rows.append(np.repeat(ei, 3, axis=1).ravel())
            cols.append(np.tile(ei, (1, 3)).ravel())
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)

    def matrix(self, x: np.ndarray, scale: float) -> sp.csr_matrix:
        diag, He = self.cones.hess_data(x)
        data = np.concatenate([scale * diag, (scale * He).ravel()])
        n = self.cones.n
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=(n, n))


class _Scaling:
    """W = B + U diag(sig) U^T with B = mu F''(x) (sparse block diagonal).

    mode "full" keeps all rank-one terms (each dropped individually when its
    denominator degenerates, where the term vanishes in the limit); "basic"
    keeps only the s/stil pair; "primal" is the plain mu F''(x) scaling.
    """

    def __init__(self, cones, x, s, mu, xtil, stil, mutil, mode="full", pattern=None):
        nu = cones.nu
        pattern = pattern or _HessPattern(cones)
        self.B = pattern.matrix(x, mu)
        cols, sigs = [], []
        if mode in ("full", "basic"):
            cols.append(s)
            sigs.append(1.0 / (nu * mu))
            cols.append(stil)
            sigs.append(-mu / nu)
        if mode == "full" and xtil is not None:
            u3 = s - mu * stil
            w3 = x - mu * xtil
            den3 = float(u3 @ w3)
            if abs(den3) > 1e-13 * (np.linalg.norm(u3) * np.linalg.norm(w3) + 1e-300):
                cols.append(u3)
                sigs.append(1.0 / den3)
            hxt = cones.hess_mul(x, xtil)
            v4 = hxt - mutil * stil
            den4 = float(xtil @ hxt) - nu * mutil**2
            if abs(den4) > 1e-13 * (abs(float(xtil @ hxt)) + 1e-300):
                cols.append(v4)
                sigs.append(-mu / den4)
        if cols:
            self.U = np.column_stack(cols)
            self.sig = np.array(sigs)
        else:
            self.U = np.zeros((cones.n, 0))
            self.sig = np.zeros(0)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.B @ v
        if self.sig.size:
            out = out + self.U @ (self.sig * (self.U.T @ v))
        return out


def _kkt_factor(prog: ConicProgram, scaling: _Scaling, kot: float, delta: float):
    """Factor the augmented KKT matrix for variables (dx, w, dy, dtau)."""
    A = prog.A
    m, n = A.shape
    r = scaling.U.shape[1]
    c_col = sp.csr_matrix(prog.c.reshape(n, 1))
    b_col = sp.csr_matrix(prog.b.reshape(m, 1))
    if r:
        Usp = sp.csr_matrix(scaling.U)
        blocks = [
            [scaling.B + delta * sp.eye(n), Usp, -A.T, c_col],
            [Usp.T, -sp.diags(1.0 / scaling.sig), None, None],
            [A, None, -delta * sp.eye(m), -b_col],
            [-c_col.T, None, b_col.T, sp.csr_matrix([[kot + delta]])],
        ]
    else:
        blocks = [
            [scaling.B + delta * sp.eye(n), -A.T, c_col],
            [A, -delta * sp.eye(m), -b_col],
            [-c_col.T, b_col.T, sp.csr_matrix([[kot + delta]])],
        ]
    K = sp.bmat(blocks, format="csc")
    return (spla.splu(K), K), (n, r, m)


def _kkt_solve(lu_K, dims, rhs1, rhs2, rhs3):
    """Solve the KKT system with two rounds of iterative refinement
    (the scaling blocks reach 1/x^2 magnitudes near the cone boundary and
    plain LU directions degrade there)."""
    lu, K = lu_K
    n, r, m = dims
    rhs = np.concatenate([rhs1, np.zeros(r), rhs2, [rhs3]])
    sol = lu.solve(rhs)
    for _ in range(2):
        resid = rhs - K @ sol
        if float(np.linalg.norm(resid, np.inf)) <= 1e-14 * max(
            1.0, float(np.linalg.norm(rhs, np.inf))
        ):
            break
        sol = sol + lu.solve(resid)
    dx = sol[:n]
    dy = sol[n + r : n + r + m]
    dtau = sol[-1]
    return dx, dy, dtau


def _max_step(cones, x, dx, s, ds, tau, dtau, kappa, dkappa) -> float:
    """Largest alpha in (0, 1] keeping (x, s, tau, kappa) strictly interior."""
    hi = cones.max_step(x, dx, s, ds)
    if dtau < 0:
        hi = min(hi, -tau / dtau * (1 - 1e-12))
    if dkappa < 0:
        hi = min(hi, -kappa / dkappa * (1 - 1e-12))
    return max(hi, 0.0)


def _block_products(cones: ConeSpec, x, s, tau, kappa):
    """Per-block <x_b, s_b>/nu_b plus the tau*kappa pair."""
    return np.concatenate([cones.block_products(x, s), [tau * kappa]])


def solve(
    prog: ConicProgram,
    tol: float = 1e-8,
    max_iter: int = 500,
    correction: bool = True,
    options: Optional[SolverOptions] = None,
) -> ConicSolution:
    """Solve the program to tolerance ``tol`` or produce a certificate."""
    opts = options or SolverOptions()
    opts.tol, opts.max_iter, opts.correction = tol, max_iter, correction
    cones = prog.cones
    A, b, c = prog.A, prog.b, prog.c
    m, n = A.shape
    nu = cones.nu

    x = cones.initial_point()
    s = x.copy()
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    pattern = _HessPattern(cones)

    def hsd_residual_norm(y, x, tau, s, kappa):
        rp = A @ x - b * tau
        rd = -(A.T @ y) + c * tau - s
        rg = b @ y - c @ x - kappa
        return float(np.linalg.norm(np.concatenate([rp, rd, [rg]])))

    def residuals(y, x, tau, s, kappa):
        rp = A @ x - b * tau
        rd = -(A.T @ y) + c * tau - s
        rg = float(b @ y - c @ x - kappa)
        return rp, rd, rg

    def mu_e(x, s, tau, kappa):
        return (float(x @ s) + tau * kappa) / (nu + 1)

    mu0 = mu_e(x, s, tau, kappa)
    g0_norm = max(hsd_residual_norm(y, x, tau, s, kappa), 1e-300)
    bnorm, cnorm = float(np.linalg.norm(b, np.inf)) if m else 0.0, float(
        np.linalg.norm(c, np.inf)
    ) if n else 0.0

    gap_trace = []
    status = "max-iter"
    delta = opts.regularization
    it = 0
    inaccurate = False
    crit_hist: list = []

    def relaxed_optimal(factor: float = 100.0) -> bool:
        """Accept a stalled iterate meeting a mildly relaxed tolerance.

        Primal-degenerate programs (forced-zero coordinates on exponential
        cone boundaries) often have unattained duals: the dual residual then
        plateaus while primal feasibility, complementarity, and the
        primal/dual objective agreement all converge.  Such points are
        accepted as (inaccurate) optima on the strength of those three
        measures alone.
        """
        relaxed = opts.tol * factor
        pres = float(np.linalg.norm(A @ (x / tau) - b, np.inf)) / (1 + bnorm)
        dres = float(np.linalg.norm(A.T @ (y / tau) + s / tau - c, np.inf)) / (
            1 + cnorm
        )
        pcost, dcost = float(c @ x / tau), float(b @ y / tau)
        agap = abs(pcost - dcost)
        rgap = agap / max(1.0, abs(pcost), abs(dcost))
        if pres <= relaxed and dres <= relaxed and min(agap, rgap) <= relaxed:
            return True
        return (
            pres <= relaxed
            and min(agap, rgap) <= relaxed
            and mu_e(x, s, tau, kappa) <= relaxed * mu0
        )

    def make_solution(status, it):
        pobj = prog.objective_scale * float(c @ (x / tau)) + prog.objective_offset
        dobj = prog.objective_scale * float(b @ (y / tau)) + prog.objective_offset
        rp, rd, rg = residuals(y, x, tau, s, kappa)
        res = {
            "primal": float(np.linalg.norm(A @ (x / tau) - b, np.inf) / (1 + bnorm)),
            "dual": float(
                np.linalg.norm(A.T @ (y / tau) + s / tau - c, np.inf) / (1 + cnorm)
            ),
            "gap": abs(float(c @ (x / tau)) - float(b @ (y / tau))),
            "homogeneous": float(
                np.linalg.norm(np.concatenate([rp, rd, [rg]]), np.inf)
            ),
        }
        return ConicSolution(
            x=x,
            y=y,
            s=s,
            tau=tau,
            kappa=kappa,
            status=status,
            gap=mu_e(x, s, tau, kappa),
            residuals=res,
            iterations=it,
            objective=pobj,
            dual_objective=dobj,
            gap_trace=gap_trace,
            inaccurate=inaccurate,
        )

    for it in range(1, opts.max_iter + 1):
        rp, rd, rg = residuals(y, x, tau, s, kappa)
        mu = mu_e(x, s, tau, kappa)
        gap_trace.append(mu)

        # -- convergence / certificates ------------------------------------
        pres = float(np.linalg.norm(A @ (x / tau) - b, np.inf)) / (1 + bnorm)
        dres = float(np.linalg.norm(A.T @ (y / tau) + s / tau - c, np.inf)) / (
            1 + cnorm
        )
        pcost, dcost = float(c @ x / tau), float(b @ y / tau)
        agap = abs(pcost - dcost)
        rgap = agap / max(1.0, abs(pcost), abs(dcost))
        if pres <= opts.tol and dres <= opts.tol and min(agap, rgap) <= opts.tol:
            status = "optimal"
            break
        # stall detection: no meaningful progress on the optimality measure
        # nor on either infeasibility certificate for a stretch of
        # iterations (typical for boundary-limit problems)
        crit = max(pres, dres, min(agap, rgap))
        by_cur = float(b @ y)
        if by_cur > opts.tol:
            crit = min(crit, float(np.linalg.norm(A.T @ y + s, np.inf)) / by_cur)
        cx_cur = float(c @ x)
        if cx_cur < -opts.tol:
            crit = min(crit, float(np.linalg.norm(A @ x, np.inf)) / (-cx_cur))
        crit_hist.append(crit)
        if (
            len(crit_hist) > 40
            and min(crit_hist[-30:]) > 0.95 * min(crit_hist[:-30])
        ):
            break
        by = float(b @ y)
        if by > opts.tol and kappa > tau:
            pinf_res = float(np.linalg.norm(A.T @ y + s, np.inf)) / by
            if pinf_res <= opts.tol:
                status = "primal-infeasible"
                break
        cx = float(c @ x)
        if cx < -opts.tol and kappa > tau:
            dinf_res = float(np.linalg.norm(A @ x, np.inf)) / (-cx)
            if dinf_res <= opts.tol:
                status = "dual-infeasible"
                break
        if mu < 1e-17 * mu0:
            status = "max-iter"
            break

        # -- scaling and KKT factorization ----------------------------------
        stil = -cones.grad(x)
        try:
            xtil = cones.conjugate_point(s, warm=x / mu)
            mutil = float(xtil @ stil) / nu
        except ConeError:
            xtil, mutil = None, 0.0
        lu = None
        for mode, dreg in (("full", delta), ("basic", delta * 1e2), ("primal", delta * 1e4)):
            try:
                scaling = _Scaling(cones, x, s, mu, xtil, stil, mutil, mode=mode, pattern=pattern)
                lu, dims = _kkt_factor(prog, scaling, kappa / tau, dreg)
                break
            except (RuntimeError, ValueError):
                continue
        if lu is None:
            status = "max-iter"
            break

        def direction(rG_p, rG_d, rG_g, rtk, rxs):
            rhs1 = rG_d + rxs
            rhs3 = rG_g + rtk / tau
            dx, dy, dtau = _kkt_solve(lu, dims, rhs1, rG_p, rhs3)
            ds = rxs - scaling.matvec(dx)
            dkappa = (rtk - kappa * dtau) / tau
            return dx, dy, dtau, ds, dkappa

        try:
            aff = direction(-rp, -rd, -rg, -tau * kappa, -s)
            cen = direction(rp, rd, rg, mu, mu * stil)
        except (RuntimeError, ValueError):
            status = "max-iter"
            break
        flat = np.concatenate(
            [np.ravel(part) for part in aff + cen]
        )
        if not np.all(np.isfinite(flat)):
            status = "max-iter"
            break

        # -- Mehrotra centering weight --------------------------------------
        a_aff = _max_step(cones, x, aff[0], s, aff[3], tau, aff[2], kappa, aff[4])
        a_aff = min(1.0, opts.step_fraction * a_aff)
        mu_aff = mu_e(
            x + a_aff * aff[0],
            s + a_aff * aff[3],
            tau + a_aff * aff[2],
            kappa + a_aff * aff[4],
        )
        sigma = min(max((mu_aff / mu) ** 3, 1e-10), 0.9)

        dx = aff[0] + sigma * cen[0]
        dy = aff[1] + sigma * cen[1]
        dtau = aff[2] + sigma * cen[2]
        ds = aff[3] + sigma * cen[3]
        dkappa = aff[4] + sigma * cen[4]

        a_max = _max_step(cones, x, dx, s, ds, tau, dtau, kappa, dkappa)
        alpha = min(1.0, opts.step_fraction * a_max)
        # along the combined direction the homogeneous residual shrinks
        # exactly linearly, G(z + a d) = (1 - a (1 - sigma)) G(z), while the
        # complementarity follows a quadratic whose second-order term can
        # race ahead; keep the two balanced or the iterate freezes on the
        # complementarity manifold while still infeasible
        res_rel0 = (
            float(np.linalg.norm(np.concatenate([rp, rd, [rg]]))) / g0_norm
        )
        accepted = False
        for _ in range(40):
            if alpha < 1e-11:
                break
            xn = x + alpha * dx
            sn = s + alpha * ds
            tn, kn = tau + alpha * dtau, kappa + alpha * dkappa
            if (
                cones.interior(xn)
                and cones.dual_interior(sn)
                and tn > 0
                and kn > 0
            ):
                mu_new = mu_e(xn, sn, tn, kn)
                prods = _block_products(cones, xn, sn, tn, kn)
                res_new = res_rel0 * (1.0 - alpha * (1.0 - sigma))
                if (
                    mu_new <= mu * (1.0 + 5e-2)
                    and np.min(prods) >= opts.neighborhood_eta * mu_new
                    and (mu_new >= 1e-2 * mu0 * res_new or res_new <= opts.tol)
                ):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            status = "max-iter"
            break
        x, y, s = xn, y + alpha * dy, sn
        tau, kappa = tn, kn

        # -- correction step (enhancement; can be disabled) ------------------
        if opts.correction:
            mu_p = mu_e(x, s, tau, kappa)
            stil_p = -cones.grad(x)
            try:
                xtil_p = cones.conjugate_point(s, warm=x / mu_p)
                mutil_p = float(xtil_p @ stil_p) / nu
            except ConeError:
                xtil_p, mutil_p = None, 0.0
            try:
                scal_p = _Scaling(cones, x, s, mu_p, xtil_p, stil_p, mutil_p, pattern=pattern)
                lu_p, dims_p = _kkt_factor(prog, scal_p, kappa / tau, delta)
                rhs1 = mu_p * stil_p - s
                dxc, dyc, dtauc = _kkt_solve(lu_p, dims_p, rhs1, np.zeros(m), (mu_p - tau * kappa) / tau)
                dsc = (mu_p * stil_p - s) - scal_p.matvec(dxc)
                dkc = ((mu_p - tau * kappa) - kappa * dtauc) / tau
                psi0 = _centrality(cones, x, s, tau, kappa)
                res_cor = hsd_residual_norm(y, x, tau, s, kappa) / g0_norm
                ac = _max_step(cones, x, dxc, s, dsc, tau, dtauc, kappa, dkc)
                ac = min(1.0, opts.step_fraction * ac)
                for _ in range(4):
                    if ac < 1e-10:
                        break
                    xn = x + ac * dxc
                    sn = s + ac * dsc
                    tn, kn = tau + ac * dtauc, kappa + ac * dkc
                    mu_cor = mu_e(xn, sn, tn, kn)
                    if (
                        cones.interior(xn)
                        and cones.dual_interior(sn)
                        and tn > 0
                        and kn > 0
                        and mu_cor <= mu_p * (1.0 + 1e-3)
                        and (mu_cor >= 1e-2 * mu0 * res_cor or res_cor <= opts.tol)
                        and _centrality(cones, xn, sn, tn, kn) < psi0
                    ):
                        x, y, s = xn, y + ac * dyc, sn
                        tau, kappa = tn, kn
                        break
                    ac *= 0.5
            except (RuntimeError, ValueError, ConeError):
                pass  # correction is best-effort only

    if status == "max-iter":
        if relaxed_optimal(100.0) or relaxed_optimal(1e4):
            status = "optimal"
            inaccurate = True
    return make_solution(status, it)


def _centrality(cones, x, s, tau, kappa) -> float:
    mu = (float(x @ s) + tau * kappa) / (cones.nu + 1)
    prods = _block_products(cones, x, s, tau, kappa)
    return float(np.sum((prods / mu - 1.0) ** 2))
