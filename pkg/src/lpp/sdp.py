"""Block-structured semidefinite programming: data model, solver, SDPA I/O.

Standard form:

    minimize    <C, X>
    subject to  <A_i, X> = b_i,   i = 1..m
                X in K = product of PSD and nonnegative-diagonal blocks.

The solver embeds the primal-dual pair in the homogeneous self-dual model, so
a well-posed problem ends in one of: an optimal primal-dual pair, a Farkas
certificate of primal or dual infeasibility, or an explicit slow-progress /
iteration-limit report.  Search directions use Nesterov-Todd scaling with a
Mehrotra predictor-corrector; each iteration factors the dense Schur
complement of the scaled normal equations.

Symmetric matrices travel in scaled vector form ("svec": lower triangle,
off-diagonal entries multiplied by sqrt(2)) so that matrix inner products are
plain dot products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "ConicSDP",
    "SDPSolution",
    "SolveStatus",
    "SolverOptions",
    "solve",
    "residuals",
    "export_sdpa",
    "import_sdpa",
    "SdpaFormatError",
]

SQRT2 = math.sqrt(2.0)


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


def svec_index(i: int, j: int, n: int) -> int:
    """Position of entry (i, j), i >= j, in column-major lower-triangle order."""
    return j * n - j * (j - 1) // 2 + (i - j)


def svec(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    out = np.empty(svec_len(n))
    k = 0
    for j in range(n):
        out[k] = M[j, j]
        cnt = n - j - 1
        if cnt:
            out[k + 1 : k + 1 + cnt] = M[j + 1 :, j] * SQRT2
        k += 1 + cnt
    return out


def smat(v: np.ndarray, n: int) -> np.ndarray:
    M = np.empty((n, n))
    k = 0
    for j in range(n):
        M[j, j] = v[k]
        cnt = n - j - 1
        if cnt:
            col = v[k + 1 : k + 1 + cnt] / SQRT2
            M[j + 1 :, j] = col
            M[j, j + 1 :] = col
        k += 1 + cnt
    return M


@dataclass
class ConicSDP:
    """Problem data; blocks are ('psd', n) or ('diag', n).

    ``C[b]`` is an (n, n) symmetric array for PSD blocks or an (n,) vector for
    diagonal blocks.  ``A[b]`` stores constraint rows in svec coordinates as a
    CSR matrix of shape (m, svec_len(n)) (or (m, n) for diagonal blocks).
    """

    blocks: list[tuple[str, int]]
    C: list[np.ndarray]
    A: list[sp.csr_matrix]
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        m = len(self.b)
        if len(self.blocks) != len(self.C) or len(self.blocks) != len(self.A):
            raise ValueError("blocks, C, A must have equal length")
        for (kind, n), Cb, Ab in zip(self.blocks, self.C, self.A):
            if kind not in ("psd", "diag"):
                raise ValueError(f"unknown block kind {kind!r}")
            if n < 1:
                raise ValueError("block size must be positive")
            want = svec_len(n) if kind == "psd" else n
            if Ab.shape != (m, want):
                raise ValueError(f"A block has shape {Ab.shape}, expected {(m, want)}")
            if kind == "psd":
                if Cb.shape != (n, n):
                    raise ValueError("C block shape mismatch")
                if np.max(np.abs(Cb - Cb.T)) > 1e-12 * max(1.0, np.max(np.abs(Cb))):
                    raise ValueError("C block must be symmetric")
            elif Cb.shape != (n,):
                raise ValueError("diag C block shape mismatch")

    @property
    def m(self) -> int:
        return len(self.b)

    @staticmethod
    def from_entries(sizes, kinds, consts, coeffs, b) -> "ConicSDP":
        """Assemble from per-block upper-triangle entry dicts.

        ``consts[b]`` maps (i, j) with i <= j to the C value; ``coeffs[b]``
        maps (i, j) to a list of (constraint_index, value) pairs.
        """
        b = np.asarray(b, dtype=float)
        m = len(b)
        blocks, C, A = [], [], []
        for blk, (n, kind) in enumerate(zip(sizes, kinds)):
            blocks.append((kind, n))
            if kind == "psd":
                Cb = np.zeros((n, n))
                for (i, j), v in consts[blk].items():
                    Cb[i, j] = v
                    Cb[j, i] = v
                C.append(Cb)
                rows, cols, vals = [], [], []
                for (i, j), pairs in coeffs[blk].items():
                    pos = svec_index(max(i, j), min(i, j), n)
                    scale = 1.0 if i == j else SQRT2
                    for k, v in pairs:
                        rows.append(k)
                        cols.append(pos)
                        vals.append(v * scale)
                A.append(sp.csr_matrix((vals, (rows, cols)), shape=(m, svec_len(n))))
            else:
                Cb = np.zeros(n)
                for (i, j), v in consts[blk].items():
                    if i != j:
                        raise ValueError("diagonal block has off-diagonal entry")
                    Cb[i] = v
                C.append(Cb)
                rows, cols, vals = [], [], []
                for (i, j), pairs in coeffs[blk].items():
                    if i != j:
                        raise ValueError("diagonal block has off-diagonal entry")
                    for k, v in pairs:
                        rows.append(k)
                        cols.append(i)
                        vals.append(v)
                A.append(sp.csr_matrix((vals, (rows, cols)), shape=(m, n)))
        return ConicSDP(blocks, C, A, b)

    @staticmethod
    def from_dense(blocks, C_dense, A_dense, b) -> "ConicSDP":
        """Assemble from dense matrices: A_dense[i][blk] is the i-th constraint's block."""
        b = np.asarray(b, dtype=float)
        m = len(b)
        C, A = [], []
        for blk, (kind, n) in enumerate(blocks):
            if kind == "psd":
                C.append(np.asarray(C_dense[blk], dtype=float))
                rows = [svec(np.asarray(A_dense[i][blk], dtype=float)) for i in range(m)]
                A.append(sp.csr_matrix(np.array(rows) if m else np.zeros((0, svec_len(n)))))
            else:
                C.append(np.asarray(C_dense[blk], dtype=float))
                rows = [np.asarray(A_dense[i][blk], dtype=float) for i in range(m)]
                A.append(sp.csr_matrix(np.array(rows) if m else np.zeros((0, n))))
        return ConicSDP(list(blocks), C, A, b)

    def c_svec(self) -> list[np.ndarray]:
        out = []
        for (kind, n), Cb in zip(self.blocks, self.C):
            out.append(svec(Cb) if kind == "psd" else Cb.astype(float))
        return out


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200
    stall_iters: int = 8
    stall_step: float = 1e-3
    step_fraction: float = 0.98
    infeas_cert_tol: float = 1e-9
    log: bool = False


@dataclass
class SolveStatus:
    kind: str  # optimal | primal_infeasible | dual_infeasible | slow_progress | iteration_limit
    message: str = ""
    certificate: dict | None = None


@dataclass
class SDPSolution:
    X: list[np.ndarray]
    y: np.ndarray
    S: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    iterations: int
    log: list[dict] = field(default_factory=list)


def _block_identity(blocks):
    out = []
    for kind, n in blocks:
        if kind == "psd":
            out.append(svec(np.eye(n)))
        else:
            out.append(np.ones(n))
    return out


def _dot(xs, ys):
    return sum(float(a @ b) for a, b in zip(xs, ys))


class _Scaling:
    """Per-block Nesterov-Todd scaling data."""

    def __init__(self, kind, n):
        self.kind, self.n = kind, n
        self.R = None
        self.Rinv = None
        self.W = None
        self.lam = None  # scaled spectrum (psd) or sqrt(x*s) (diag)
        self.w = None  # diag only


def _compute_scaling(blocks, x, s):
    scalings = []
    for b, (kind, n) in enumerate(blocks):
        sc = _Scaling(kind, n)
        if kind == "psd":
            X = smat(x[b], n)
            S = smat(s[b], n)
            Lx = np.linalg.cholesky(X)
            Ls = np.linalg.cholesky(S)
            U, sig, Vt = np.linalg.svd(Ls.T @ Lx)
            sig = np.maximum(sig, 1e-300)
            R = Lx @ Vt.T / np.sqrt(sig)
            Rinv = (np.sqrt(sig)[:, None] * Vt) @ sla.solve_triangular(Lx, np.eye(n), lower=True)
            sc.R, sc.Rinv = R, Rinv
            sc.W = R @ R.T
            sc.lam = sig
        else:
            sc.w = np.sqrt(x[b] / s[b])
            sc.lam = np.sqrt(x[b] * s[b])
        scalings.append(sc)
    return scalings


def _w_sandwich(sc: _Scaling, v: np.ndarray) -> np.ndarray:
    """Apply svec(W mat(v) W) for psd, w^2 * v for diag."""
    if sc.kind == "diag":
        return sc.w * sc.w * v
    M = smat(v, sc.n)
    return svec(sc.W @ M @ sc.W)


def _schur(blocks, A, scalings, m):
    H = np.zeros((m, m))
    for b, (kind, n) in enumerate(blocks):
        Ab = A[b]
        if Ab.nnz == 0:
            continue
        # local constraint set: rows of A that touch this block
        touching = np.unique(sp.find(Ab)[0])
        if touching.size == 0:
            continue
        Aloc = Ab[touching]
        sc = scalings[b]
        if kind == "diag":
            w2 = sc.w * sc.w
            Hloc = (Aloc.multiply(w2)) @ Aloc.T
            H[np.ix_(touching, touching)] += Hloc.toarray()
            continue
        dense = Aloc.toarray()
        nl = dense.shape[0]
        # batched W·M·W over all local constraint matrices
        mats = np.empty((nl, n, n))
        for t in range(nl):
            mats[t] = smat(dense[t], n)
        tmp = np.einsum("ij,tjk->tik", sc.W, mats, optimize=True)
        tmp = np.einsum("tij,jk->tik", tmp, sc.W, optimize=True)
        sandw = np.empty((nl, dense.shape[1]))
        for t in range(nl):
            sandw[t] = svec(tmp[t])
        H[np.ix_(touching, touching)] += dense @ sandw.T
    return H


def _apply_A(A, xs):
    out = None
    for Ab, xb in zip(A, xs):
        v = Ab @ xb
        out = v if out is None else out + v
    return out


def _apply_AT(A, y):
    return [Ab.T @ y for Ab in A]


def _max_step(sc: _Scaling, dx_sv, lam, scaled_from_left):
    """Largest alpha with (scaled iterate) + alpha * (scaled direction) staying in the cone."""
    if sc.kind == "diag":
        d = dx_sv / sc.w if scaled_from_left else dx_sv * sc.w
        ratio = d / sc.lam
        mn = ratio.min()
        return math.inf if mn >= 0 else -1.0 / mn
    if scaled_from_left:
        Dt = sc.Rinv @ smat(dx_sv, sc.n) @ sc.Rinv.T
    else:
        Dt = sc.R.T @ smat(dx_sv, sc.n) @ sc.R
    sl = 1.0 / np.sqrt(lam)
    M = (sl[:, None] * Dt) * sl[None, :]
    mn = float(np.linalg.eigvalsh((M + M.T) / 2)[0])
    return math.inf if mn >= 0 else -1.0 / mn


def solve(sdp: ConicSDP, opts: SolverOptions | None = None) -> tuple[SDPSolution, SolveStatus]:
    """Solve the block SDP via the homogeneous self-dual interior-point method.

    Returns the normalized primal-dual pair on success; on infeasibility the
    solution fields hold the (normalized) Farkas certificate described in the
    status.  Deterministic: identical inputs and options give identical
    iterates.
    """
    opts = opts or SolverOptions()
    blocks = sdp.blocks
    m = sdp.m

    # equilibrate: unit-norm constraint rows and unit-scale objective/rhs;
    # solved quantities are mapped back before returning
    row_norm = np.zeros(m)
    for Ab in sdp.A:
        row_norm += np.asarray(Ab.multiply(Ab).sum(axis=1)).ravel()
    d_row = 1.0 / np.maximum(np.sqrt(row_norm), 1e-8)
    A = [sp.csr_matrix(Ab.multiply(d_row[:, None])) for Ab in sdp.A]
    c_raw = sdp.c_svec()
    gamma_c = max(1e-8, math.sqrt(_dot(c_raw, c_raw)))
    c = [cb / gamma_c for cb in c_raw]
    b_scaled = sdp.b * d_row
    gamma_b = max(1e-8, float(np.linalg.norm(b_scaled)))
    b = b_scaled / gamma_b
    nu = sum(n for _, n in blocks)

    x = _block_identity(blocks)
    s = _block_identity(blocks)
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    norm_b = 1.0 + float(np.linalg.norm(b))
    norm_c = 1.0 + math.sqrt(_dot(c, c))
    log: list[dict] = []
    stall = 0
    prev_mu = None
    best = None  # (score, x, y, s, tau, kappa)

    def residual_parts():
        rp = _apply_A(A, x) - b * tau
        At_y = _apply_AT(A, y)
        rd = [-At_y[i] + c[i] * tau - s[i] for i in range(len(blocks))]
        rg = float(b @ y) - _dot(c, x) - kappa
        return rp, rd, rg

    status = SolveStatus("iteration_limit", "iteration budget exhausted")
    it = 0
    for it in range(1, opts.max_iters + 1):
        rp, rd, rg = residual_parts()
        mu = (_dot(x, s) + tau * kappa) / (nu + 1)

        # normalized convergence measures
        pres = float(np.linalg.norm(rp)) / (tau * norm_b)
        dres = math.sqrt(max(_dot(rd, rd), 0.0)) / (tau * norm_c)
        pobj = _dot(c, x) / tau
        dobj = float(b @ y) / tau
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if opts.log:
            print(f"iter {it:3d}  mu {mu:9.2e}  pres {pres:9.2e}  dres {dres:9.2e}  gap {gap:9.2e}")
        log.append(
            {"iter": it, "mu": mu, "pres": pres, "dres": dres, "gap": gap,
             "pobj": pobj, "dobj": dobj, "tau": tau, "kappa": kappa, "step": 0.0}
        )

        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, [v.copy() for v in x], y.copy(), [v.copy() for v in s], tau, kappa)

        if pres <= opts.feas_tol and dres <= opts.feas_tol and gap <= opts.gap_tol:
            status = SolveStatus("optimal", f"converged in {it} iterations")
            break

        # infeasibility certificates from the homogeneous iterate:
        # primal infeasible iff some y has A^T y + s = 0, s in K, b^T y > 0;
        # dual infeasible iff some x in K has A x = 0, <c, x> < 0.
        by = float(b @ y)
        if by > 0:
            At_y = _apply_AT(A, y)
            cert_res = math.sqrt(
                sum(float((At_y[i] + s[i]) @ (At_y[i] + s[i])) for i in range(len(blocks)))
            )
            if cert_res <= opts.infeas_cert_tol * by * norm_c:
                status = SolveStatus(
                    "primal_infeasible",
                    "Farkas certificate of primal infeasibility",
                    certificate={"kind": "primal", "scale": by},
                )
                y = y / by
                s = [sb / by for sb in s]
                x = [xb * 0.0 for xb in x]
                tau = 0.0
                break
        cx = _dot(c, x)
        if cx < 0:
            ax = float(np.linalg.norm(_apply_A(A, x)))
            if ax <= opts.infeas_cert_tol * (-cx) * norm_b:
                x = [xb / (-cx) for xb in x]
                status = SolveStatus(
                    "dual_infeasible",
                    "Farkas certificate of dual infeasibility (primal unbounded ray)",
                    certificate={"kind": "dual", "scale": -cx},
                )
                y = y * 0.0
                s = [sb * 0.0 for sb in s]
                tau = 0.0
                break

        if prev_mu is not None and mu > 0.995 * prev_mu:
            stall += 1
        else:
            stall = 0
        if stall >= opts.stall_iters:
            status = SolveStatus("slow_progress", f"no progress over {opts.stall_iters} iterations")
            break
        prev_mu = mu

        try:
            scalings = _compute_scaling(blocks, x, s)
        except np.linalg.LinAlgError:
            status = SolveStatus("slow_progress", "iterate left the cone numerically")
            break

        H = _schur(blocks, A, scalings, m)
        jitter = 0.0
        for attempt in range(4):
            try:
                Hf = sla.cho_factor(H + (jitter * np.eye(m) if jitter else 0.0), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter = max(1e-14 * (np.trace(H) / m + 1.0), jitter * 100 if jitter else 1e-14)
        else:
            status = SolveStatus("slow_progress", "Schur complement not positive definite")
            break

        u = [_w_sandwich(sc, cb) for sc, cb in zip(scalings, c)]  # W c
        Au = _apply_A(A, u)
        g1 = _solve_refined(Hf, H, Au + b)  # dy component multiplying dtau

        # direction solver; e_c is the scaled complementarity target already
        # mapped back to svec coordinates (R^-T E R^-1).  ds comes from the
        # dual-feasibility row and dx from complementarity, so neither applies
        # the inverse scaling; this keeps the dual residual exact even when
        # the scaling is ill-conditioned near convergence.
        def newton(eta, e_c, d_tk):
            #   ds = -A^T dy + c dtau + eta rd
            #   dx = W(e_c - ds) = W(e_c - eta rd + A^T dy - c dtau)
            #   H dy = -eta rp - A W(e_c - eta rd) + (A W c + b) dtau
            w_rd = [_w_sandwich(sc, e_c[i] - eta * rd[i]) for i, sc in enumerate(scalings)]
            q0 = -eta * rp - _apply_A(A, w_rd)
            g0 = _solve_refined(Hf, H, q0)
            # scalar equation for dtau from the gap row with dkappa eliminated:
            # (b - A W c)^T dy + (c^T W c + kappa/tau) dtau
            #     = -eta rg + c^T W(e_c - eta rd) + d_tk / tau
            bAu = b - Au
            cWc = _dot(c, u)
            cW_ec = sum(float(c[i] @ w_rd[i]) for i in range(len(blocks)))
            denom = float(bAu @ g1) + cWc + kappa / tau
            rhs = -eta * rg + cW_ec + d_tk / tau - float(bAu @ g0)
            dtau = rhs / denom
            dy = g0 + g1 * dtau
            At_dy = _apply_AT(A, dy)
            ds = [-At_dy[i] + c[i] * dtau + eta * rd[i] for i in range(len(blocks))]
            dx = [
                _w_sandwich(sc, At_dy[i] - c[i] * dtau) + w_rd[i]
                for i, sc in enumerate(scalings)
            ]
            dkappa = (d_tk - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def step_bound(dx, ds, dtau, dkappa):
            amax = math.inf
            for i, sc in enumerate(scalings):
                amax = min(amax, _max_step(sc, dx[i], sc.lam, True))
                amax = min(amax, _max_step(sc, ds[i], sc.lam, False))
            if dtau < 0:
                amax = min(amax, -tau / dtau)
            if dkappa < 0:
                amax = min(amax, -kappa / dkappa)
            return amax

        # predictor: pure Newton on the complementarity target 0
        e_aff = []
        for sc in scalings:
            if sc.kind == "diag":
                e_aff.append(-sc.lam / sc.w * 1.0)
            else:
                E = np.diag(-sc.lam)
                e_aff.append(svec(sc.Rinv.T @ E @ sc.Rinv))
        dxa, dya, dsa, dta, dka = newton(1.0, e_aff, -tau * kappa)
        alpha_aff = min(1.0, step_bound(dxa, dsa, dta, dka))

        xa = [x[i] + alpha_aff * dxa[i] for i in range(len(blocks))]
        sa = [s[i] + alpha_aff * dsa[i] for i in range(len(blocks))]
        mu_aff = (_dot(xa, sa) + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)) / (nu + 1)
        sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        # corrector: recenter and subtract the predictor's second-order term
        e_c = []
        for i, sc in enumerate(scalings):
            if sc.kind == "diag":
                dxt = dxa[i] / sc.w
                dst = dsa[i] * sc.w
                D = sigma * mu - sc.lam * sc.lam - dxt * dst
                e_c.append((D / sc.lam) / sc.w)
            else:
                Dxt = sc.Rinv @ smat(dxa[i], sc.n) @ sc.Rinv.T
                Dst = sc.R.T @ smat(dsa[i], sc.n) @ sc.R
                Cross = (Dxt @ Dst + Dst @ Dxt) / 2.0
                D = sigma * mu * np.eye(sc.n) - np.diag(sc.lam * sc.lam) - Cross
                denom = sc.lam[:, None] + sc.lam[None, :]
                E = 2.0 * D / denom
                E = (E + E.T) / 2.0
                e_c.append(svec(sc.Rinv.T @ E @ sc.Rinv))
        d_tk = sigma * mu - tau * kappa - dta * dka
        dx, dy, ds, dtau, dkappa = newton(1.0 - sigma, e_c, d_tk)

        alpha = opts.step_fraction * step_bound(dx, ds, dtau, dkappa)
        alpha = min(alpha, 10.0)
        if not math.isfinite(alpha) or alpha <= 0:
            status = SolveStatus("slow_progress", "no admissible step")
            break
        x = [x[i] + alpha * dx[i] for i in range(len(blocks))]
        s = [s[i] + alpha * ds[i] for i in range(len(blocks))]
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa
        log[-1]["step"] = alpha

    else:
        it = opts.max_iters

    if status.kind in ("slow_progress", "iteration_limit") and best is not None:
        _, x, y, s, tau, kappa = best
    if status.kind in ("optimal", "slow_progress", "iteration_limit"):
        scale = tau if tau > 1e-300 else 1.0
        Xs = [x[i] / scale for i in range(len(blocks))]
        Ss = [s[i] / scale for i in range(len(blocks))]
        yv = y / scale
    else:
        Xs, Ss, yv = x, s, y

    # undo equilibration: X and the objective pick up gamma_b, duals gamma_c
    Xs = [xb * gamma_b for xb in Xs]
    Ss = [sb * gamma_c for sb in Ss]
    yv = yv * d_row * gamma_c

    X_out, S_out = [], []
    for i, (kind, n) in enumerate(blocks):
        if kind == "psd":
            X_out.append(smat(Xs[i], n))
            S_out.append(smat(Ss[i], n))
        else:
            X_out.append(np.asarray(Xs[i]))
            S_out.append(np.asarray(Ss[i]))
    sol = SDPSolution(
        X=X_out,
        y=yv,
        S=S_out,
        primal_objective=_dot(c_raw, Xs),
        dual_objective=float(sdp.b @ yv),
        iterations=it,
        log=log,
    )
    return sol, status


def _solve_refined(Hf, H, rhs):
    """Cholesky solve with one round of iterative refinement."""
    sol = sla.cho_solve(Hf, rhs)
    r = rhs - H @ sol
    return sol + sla.cho_solve(Hf, r)


def residuals(sdp: ConicSDP, sol: SDPSolution) -> tuple[float, float, float]:
    """Unnormalized residual norms (inf-norm) and absolute duality gap."""
    xs = []
    ss = []
    for (kind, n), Xb, Sb in zip(sdp.blocks, sol.X, sol.S):
        xs.append(svec(np.asarray(Xb)) if kind == "psd" else np.asarray(Xb, dtype=float))
        ss.append(svec(np.asarray(Sb)) if kind == "psd" else np.asarray(Sb, dtype=float))
    c = sdp.c_svec()
    rp = _apply_A(sdp.A, xs) - sdp.b
    primal_res = float(np.max(np.abs(rp))) if rp.size else 0.0
    At_y = _apply_AT(sdp.A, sol.y)
    dual_parts = [c[i] - At_y[i] - ss[i] for i in range(len(sdp.blocks))]
    dual_res = max((float(np.max(np.abs(v))) if v.size else 0.0) for v in dual_parts)
    gap = abs(_dot(c, xs) - float(sdp.b @ sol.y))
    return primal_res, dual_res, gap


# --------------------------------------------------------------------------
# SDPA sparse format
# --------------------------------------------------------------------------


class SdpaFormatError(ValueError):
    """Malformed SDPA text; message carries line (and column where useful)."""


def export_sdpa(sdp: ConicSDP) -> str:
    """Serialize in SDPA sparse format (.dat-s).

    Line 1: m, line 2: number of blocks, line 3: block sizes (negative for
    diagonal), line 4: right-hand side, then quintuples ``matno blkno i j
    value`` with 1-based upper-triangle indices; matno 0 holds the objective
    block C.  Values print with 17 significant digits so a round trip is
    bit-exact.
    """
    lines = [str(sdp.m), str(len(sdp.blocks))]
    lines.append(" ".join(str(n if kind == "psd" else -n) for kind, n in sdp.blocks))
    lines.append(" ".join(_fmt(v) for v in sdp.b))
    out = []
    for blk, ((kind, n), Cb) in enumerate(zip(sdp.blocks, sdp.C), start=1):
        if kind == "psd":
            for j in range(n):
                for i in range(j, n):
                    v = Cb[i, j]
                    if v != 0.0:
                        out.append(f"0 {blk} {j + 1} {i + 1} {_fmt(v)}")
        else:
            for i in range(n):
                if Cb[i] != 0.0:
                    out.append(f"0 {blk} {i + 1} {i + 1} {_fmt(Cb[i])}")
    for blk, ((kind, n), Ab) in enumerate(zip(sdp.blocks, sdp.A), start=1):
        coo = Ab.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for t in order:
            k, pos, v = int(coo.row[t]), int(coo.col[t]), float(coo.data[t])
            if kind == "psd":
                i, j = _svec_pos_to_ij(pos, n)
                if i != j:
                    v = v / SQRT2
                out.append(f"{k + 1} {blk} {j + 1} {i + 1} {_fmt(v)}")
            else:
                out.append(f"{k + 1} {blk} {pos + 1} {pos + 1} {_fmt(v)}")
    return "\n".join(lines + out) + "\n"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _svec_pos_to_ij(pos: int, n: int) -> tuple[int, int]:
    j = 0
    while pos >= n - j:
        pos -= n - j
        j += 1
    return j + pos, j


def import_sdpa(text: str) -> ConicSDP:
    """Parse SDPA sparse format; tolerates comment lines and bracket noise."""
    raw_lines = text.splitlines()
    lines: list[tuple[int, str]] = []
    for no, ln in enumerate(raw_lines, start=1):
        t = ln.strip()
        if not t or t.startswith('"') or t.startswith("*"):
            continue
        lines.append((no, t))
    if len(lines) < 4:
        raise SdpaFormatError("file too short: need m, nblocks, sizes, rhs")

    def clean(tstr: str) -> list[str]:
        for ch in "{}(),":
            tstr = tstr.replace(ch, " ")
        return tstr.split()

    no, t = lines[0]
    try:
        m = int(clean(t)[0])
    except (ValueError, IndexError):
        raise SdpaFormatError(f"line {no}: cannot parse constraint count")
    no, t = lines[1]
    try:
        nblocks = int(clean(t)[0])
    except (ValueError, IndexError):
        raise SdpaFormatError(f"line {no}: cannot parse block count")
    no, t = lines[2]
    toks = clean(t)
    if len(toks) != nblocks:
        raise SdpaFormatError(f"line {no}: expected {nblocks} block sizes, got {len(toks)}")
    blocks: list[tuple[str, int]] = []
    for tok in toks:
        try:
            sz = int(tok)
        except ValueError:
            raise SdpaFormatError(f"line {no}: bad block size {tok!r}")
        if sz == 0:
            raise SdpaFormatError(f"line {no}: block size 0 is invalid")
        blocks.append(("psd", sz) if sz > 0 else ("diag", -sz))
    no, t = lines[3]
    toks = clean(t)
    if len(toks) != m:
        raise SdpaFormatError(f"line {no}: expected {m} right-hand-side values, got {len(toks)}")
    try:
        b = np.array([float(v) for v in toks])
    except ValueError:
        raise SdpaFormatError(f"line {no}: bad right-hand-side value")

    consts = [dict() for _ in blocks]
    coeffs = [dict() for _ in blocks]
    for no, t in lines[4:]:
        toks = clean(t)
        if len(toks) != 5:
            raise SdpaFormatError(f"line {no}: expected 5 fields, got {len(toks)}")
        try:
            matno, blk, i, j = (int(v) for v in toks[:4])
            val = float(toks[4])
        except ValueError:
            raise SdpaFormatError(f"line {no}: cannot parse entry")
        if not 0 <= matno <= m:
            raise SdpaFormatError(f"line {no}: matrix number {matno} out of range")
        if not 1 <= blk <= nblocks:
            raise SdpaFormatError(f"line {no}: block number {blk} out of range")
        kind, n = blocks[blk - 1]
        if not (1 <= i <= n and 1 <= j <= n):
            raise SdpaFormatError(f"line {no}: entry ({i},{j}) outside block of size {n}")
        if kind == "diag" and i != j:
            raise SdpaFormatError(f"line {no}: off-diagonal entry in diagonal block")
        lo, hi = min(i, j) - 1, max(i, j) - 1
        key = (lo, hi)
        if matno == 0:
            consts[blk - 1][key] = val
        else:
            coeffs[blk - 1].setdefault(key, []).append((matno - 1, val))
    return ConicSDP.from_entries(
        [n for _, n in blocks], [k for k, _ in blocks], consts, coeffs, b
    )
