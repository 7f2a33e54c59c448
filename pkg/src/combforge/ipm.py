"""Dense primal-dual interior point method with Nesterov-Todd scaling.

Solves the standard form

    minimize    c . x
    subject to  A x = b,    x in S+ x S+ x ... (stacked svec blocks),

where equal-sided blocks are grouped and processed batched. The search
direction is the Mehrotra predictor-corrector with an infeasible start:
the NT scaling point is computed from Cholesky factors of the primal and
dual blocks plus one SVD, which renders the scaled variable diagonal, and
each direction costs one dense Schur-complement Cholesky solve.

Presolve equilibrates rows, drops linearly dependent rows (checking that
the dropped right-hand sides are consistent), and restores multipliers
for dropped rows as zero. Infeasibility and unboundedness are reported
through normalized Farkas-type rays when the iterates produce them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

DEFAULT_MAX_ITER = 200
STEP_FRACTION = 0.98


@dataclass
class ConeLayout:
    """Product of PSD blocks: groups of (side, count), svec coordinates."""

    groups: list[tuple[int, int]]
    offsets: list[int] = field(default_factory=list)
    svec_dims: list[int] = field(default_factory=list)
    total: int = 0
    order: int = 0  # sum of matrix sides, the barrier parameter nu

    def __post_init__(self):
        self.offsets, self.svec_dims = [], []
        pos = 0
        order = 0
        for side, count in self.groups:
            sd = side * (side + 1) // 2
            self.offsets.append(pos)
            self.svec_dims.append(sd)
            pos += sd * count
            order += side * count
        self.total = pos
        self.order = order
        self._tril = [np.tril_indices(side) for side, _ in self.groups]
        self._scale = []
        for g, (side, _) in enumerate(self.groups):
            i, j = self._tril[g]
            self._scale.append(np.where(i == j, 1.0, np.sqrt(2.0)))

    def slice_of(self, g: int) -> slice:
        side, count = self.groups[g]
        return slice(self.offsets[g], self.offsets[g] + self.svec_dims[g] * count)

    def to_mats(self, x: np.ndarray) -> list[np.ndarray]:
        out = []
        for g, (side, count) in enumerate(self.groups):
            v = x[self.slice_of(g)].reshape(count, self.svec_dims[g])
            i, j = self._tril[g]
            m = np.zeros((count, side, side))
            m[:, i, j] = v / self._scale[g]
            m[:, j, i] = m[:, i, j]
            out.append(m)
        return out

    def from_mats(self, mats: list[np.ndarray]) -> np.ndarray:
        x = np.empty(self.total)
        for g, (side, count) in enumerate(self.groups):
            i, j = self._tril[g]
            x[self.slice_of(g)] = (mats[g][:, i, j] * self._scale[g]).reshape(-1)
        return x

    def identity_vec(self, scale: float = 1.0) -> np.ndarray:
        mats = [
            np.broadcast_to(np.eye(side) * scale, (count, side, side)).copy()
            for side, count in self.groups
        ]
        return self.from_mats(mats)

    def min_eigenvalue(self, x: np.ndarray) -> float:
        worst = np.inf
        for m in self.to_mats(x):
            worst = min(worst, float(np.linalg.eigvalsh(m)[:, 0].min()))
        return worst


@dataclass
class IpmResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    iterations: int
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    relative_gap: float
    message: str = ""
    certificate: dict | None = None


def _presolve(A, b, consistency_tol):
    """Equilibrate rows and drop dependent ones.

    Returns (A_red, b_red, keep, row_scale, bad) where ``bad`` is None or an
    infeasibility certificate dict for an inconsistent affine system.
    """
    m = A.shape[0]
    norms = np.linalg.norm(A, axis=1)
    zero_rows = norms < 1e-14
    if np.any(zero_rows & (np.abs(b) > consistency_tol)):
        k = int(np.argmax(zero_rows & (np.abs(b) > consistency_tol)))
        y = np.zeros(m)
        y[k] = 1.0 / b[k]
        return None, None, None, None, {"ray": y, "kind": "zero_row"}
    scale = 1.0 / np.where(zero_rows, 1.0, norms)
    As = A * scale[:, None]
    bs = b * scale
    q, r, piv = sla.qr(As.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] < 1e-14:
        rank = 0
    else:
        rank = int(np.sum(diag > diag[0] * 1e-12))
    if rank == m:
        return As, bs, np.arange(m), scale, None
    keep = np.sort(piv[:rank])
    # consistency of every dropped row with the kept ones
    r_lead = r[:rank, :rank]
    for col in range(rank, m):
        target = r[:rank, col]
        coef = sla.solve_triangular(r_lead, target, lower=False)
        resid = bs[piv[col]] - coef @ bs[piv[:rank]]
        if abs(resid) > consistency_tol:
            y = np.zeros(m)
            y[piv[col]] = 1.0
            y[piv[:rank]] = -coef
            y *= scale / resid  # unscaled certificate with b.y = 1
            return None, None, None, None, {"ray": y, "kind": "inconsistent"}
    return As[keep], bs[keep], keep, scale, None


def solve_standard_form(
    A: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    groups: list[tuple[int, int]],
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    feas_target: float = 1e-9,
    gap_target: float = 1e-9,
    accept_feas: float = 1e-8,
    accept_gap: float = 1e-6,
    consistency_tol: float = 1e-7,
) -> IpmResult:
    cone = ConeLayout(list(groups))
    A = np.ascontiguousarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m_full = A.shape[0]
    if A.shape != (m_full, cone.total) or b.shape != (m_full,) or c.shape != (cone.total,):
        raise ValueError("inconsistent problem dimensions")

    pre = _presolve(A, b, consistency_tol)
    if pre[4] is not None:
        cert = pre[4]
        return IpmResult(
            "infeasible",
            np.zeros(cone.total),
            cert["ray"],
            np.zeros(cone.total),
            0,
            np.nan,
            np.nan,
            np.inf,
            np.inf,
            np.inf,
            message=f"affine rows inconsistent ({cert['kind']})",
            certificate=cert,
        )
    Ar, br, keep, row_scale, _ = pre
    m = Ar.shape[0]
    if m == 0:
        raise ValueError("problem has no constraint rows after presolve")

    # cache the constraint rows as matrices, per group
    F_rows = []
    for g, (side, count) in enumerate(cone.groups):
        i, j = cone._tril[g]
        v = Ar[:, cone.slice_of(g)].reshape(m, count, cone.svec_dims[g])
        f = np.zeros((m, count, side, side))
        f[:, :, i, j] = v / cone._scale[g]
        f[:, :, j, i] = f[:, :, i, j]
        F_rows.append(f)

    rho_p = max(1.0, float(np.max(np.abs(br))) if br.size else 1.0)
    rho_d = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    x = cone.identity_vec(rho_p)
    z = cone.identity_vec(rho_d)
    y = np.zeros(m)

    bnorm = 1.0 + float(np.max(np.abs(br)))
    cnorm = 1.0 + float(np.max(np.abs(c))) if c.size else 1.0

    def finish(status, it, msg="", cert=None):
        y_full = np.zeros(m_full)
        y_full[keep] = y * row_scale[keep]
        pobj = float(c @ x)
        dobj = float(br @ y)
        return IpmResult(
            status,
            x,
            y_full,
            z,
            it,
            pobj,
            dobj,
            pinf,
            dinf,
            relgap,
            message=msg,
            certificate=cert,
        )

    def certificate_y(yv):
        y_full = np.zeros(m_full)
        y_full[keep] = yv * row_scale[keep]
        return y_full

    pinf = dinf = relgap = np.inf
    best = None
    best_score = np.inf
    stall = 0
    status_msg = "iteration cap reached"
    it = 0

    for it in range(1, max_iter + 1):
        rp = br - Ar @ x
        rd = c - Ar.T @ y - z
        gap = float(x @ z)
        mu = gap / cone.order
        pobj = float(c @ x)
        dobj = float(br @ y)
        pinf = float(np.max(np.abs(rp))) / bnorm
        dinf = float(np.max(np.abs(rd))) / cnorm
        relgap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
        compl = gap / (1.0 + max(abs(pobj), abs(dobj)))

        score = max(pinf, dinf, min(relgap, compl))
        if score < best_score:
            best_score = score
            best = (x.copy(), y.copy(), z.copy(), pinf, dinf, relgap, pobj, dobj)

        if pinf <= feas_target and dinf <= feas_target and (
            relgap <= gap_target or compl <= gap_target
        ):
            return finish("optimal", it)

        # Farkas-type certificates from the current iterates
        by = float(br @ y)
        if by > 1e-10:
            yc = y / by
            sc = -(Ar.T @ yc)
            viol = cone.min_eigenvalue(sc)
            if viol >= -1e-9 * (1.0 + float(np.max(np.abs(yc)))):
                return finish(
                    "infeasible",
                    it,
                    "dual improving ray found",
                    cert={"ray": certificate_y(yc), "violation": viol},
                )
        cx = float(c @ x)
        if cx < -1e-10:
            xc = x / (-cx)
            ax = Ar @ xc
            if float(np.max(np.abs(ax))) <= 1e-9 * (1.0 + float(np.max(np.abs(xc)))):
                return finish(
                    "unbounded",
                    it,
                    "primal improving ray found",
                    cert={"ray_x": xc.copy()},
                )

        X = cone.to_mats(x)
        Z = cone.to_mats(z)
        try:
            Lx = [np.linalg.cholesky(Xg) for Xg in X]
            Lz = [np.linalg.cholesky(Zg) for Zg in Z]
        except np.linalg.LinAlgError:
            status_msg = "iterate left the cone"
            break
        G, Ginv, lam = [], [], []
        try:
            for g in range(len(cone.groups)):
                prod = np.matmul(np.transpose(Lz[g], (0, 2, 1)), Lx[g])
                u, s, vh = np.linalg.svd(prod)
                s = np.maximum(s, 1e-300)
                G.append(np.matmul(Lx[g], np.transpose(vh, (0, 2, 1))) / np.sqrt(s)[:, None, :])
                side = cone.groups[g][0]
                eye = np.broadcast_to(np.eye(side), Lx[g].shape)
                lxinv = np.linalg.solve(Lx[g], eye)
                Ginv.append(np.sqrt(s)[:, :, None] * np.matmul(vh, lxinv))
                lam.append(s)
        except np.linalg.LinAlgError:
            status_msg = "scaling factorization failed"
            break

        # Schur complement  M = sum_g B_g B_g^T,  B rows = svec(G^T F G)
        M = np.zeros((m, m))
        B_cache = []
        for g, (side, count) in enumerate(cone.groups):
            H = np.einsum(
                "cji,mcjk,ckl->mcil", G[g], F_rows[g], G[g], optimize=True
            )
            i, j = cone._tril[g]
            Bg = (H[:, :, i, j] * cone._scale[g]).reshape(m, -1)
            B_cache.append(Bg)
            M += Bg @ Bg.T
        cho = None
        jitter = 0.0
        for attempt in range(4):
            try:
                cho = sla.cho_factor(
                    M + jitter * np.eye(m), lower=True, check_finite=False
                )
                break
            except np.linalg.LinAlgError:
                base = max(np.trace(M) / m, 1.0)
                jitter = base * (1e-14 if attempt == 0 else jitter / base * 100.0)
        if cho is None:
            status_msg = "Schur complement not positive definite"
            break

        def congr(mats_list, T):
            """per-group congruence T M T^T"""
            return [
                np.einsum("cij,cjk,clk->cil", T[g], mats_list[g], T[g], optimize=True)
                for g in range(len(cone.groups))
            ]

        def congr_t(mats_list, T):
            """per-group congruence T^T M T"""
            return [
                np.einsum("cji,cjk,ckl->cil", T[g], mats_list[g], T[g], optimize=True)
                for g in range(len(cone.groups))
            ]

        def w_conj(vec):
            """W smat(vec) W with W = G G^T, as a vector"""
            inner = congr_t(cone.to_mats(vec), G)
            return cone.from_mats(congr(inner, G))

        def solve_direction(g_mats):
            wg = cone.from_mats(congr(g_mats, G))
            rhs = rp + Ar @ (w_conj(rd) - wg)
            dy = sla.cho_solve(cho, rhs, check_finite=False)
            dz = rd - Ar.T @ dy
            dx = wg - w_conj(dz)
            dxs = congr(cone.to_mats(dx), Ginv)
            dzs = congr_t(cone.to_mats(dz), G)
            return dx, dy, dz, dxs, dzs

        def max_step(dirs):
            worst = np.inf
            for g in range(len(cone.groups)):
                denom = np.sqrt(lam[g][:, :, None] * lam[g][:, None, :])
                scaled = dirs[g] / denom
                low = float(np.linalg.eigvalsh(scaled)[:, 0].min())
                if low < 0:
                    worst = min(worst, -1.0 / low)
            return worst

        g_aff = []
        for g, (side, count) in enumerate(cone.groups):
            d = np.zeros((count, side, side))
            idx = np.arange(side)
            d[:, idx, idx] = -lam[g]
            g_aff.append(d)
        dx_a, dy_a, dz_a, dxs_a, dzs_a = solve_direction(g_aff)
        ap_a = min(1.0, max_step(dxs_a))
        ad_a = min(1.0, max_step(dzs_a))
        mu_aff = float((x + ap_a * dx_a) @ (z + ad_a * dz_a)) / cone.order
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        g_comb = []
        for g, (side, count) in enumerate(cone.groups):
            corr = -0.5 * (
                np.matmul(dxs_a[g], dzs_a[g]) + np.matmul(dzs_a[g], dxs_a[g])
            )
            idx = np.arange(side)
            corr[:, idx, idx] += sigma * mu - lam[g] ** 2
            denom = lam[g][:, :, None] + lam[g][:, None, :]
            g_comb.append(2.0 * corr / denom)
        dx, dy, dz, dxs, dzs = solve_direction(g_comb)
        ap = min(1.0, STEP_FRACTION * max_step(dxs))
        ad = min(1.0, STEP_FRACTION * max_step(dzs))
        if max(ap, ad) < 1e-7:
            stall += 1
            if stall >= 3:
                status_msg = "step lengths collapsed"
                break
        else:
            stall = 0
        x = x + ap * dx
        y = y + ad * dy
        z = z + ad * dz

    # no strict convergence: fall back to the best iterate and classify
    if best is not None:
        x, y, z, pinf, dinf, relgap, pobj, dobj = best
    if pinf <= accept_feas and dinf <= accept_feas and relgap <= accept_gap:
        return finish("optimal", it, "accepted at relaxed tolerance")
    return finish("numerical_failure", it, status_msg)
