import math

import numpy as np
import pytest

from lpp.sdp import (
    ConicSDP,
    SdpaFormatError,
    SolverOptions,
    export_sdpa,
    import_sdpa,
    residuals,
    smat,
    solve,
    svec,
)


def pinned_trace_sdp(rhs=1.0):
    return ConicSDP.from_dense(
        [("psd", 2)],
        [np.eye(2)],
        [[np.array([[1.0, 0.0], [0.0, 0.0]])]],
        [rhs],
    )


def random_sdp(n, m, ndiag=0, seed=0):
    """Random problem with a known strictly feasible primal-dual pair."""
    rng = np.random.default_rng(seed)
    blocks = [("psd", n)] + ([("diag", ndiag)] if ndiag else [])
    As = []
    for _ in range(m):
        M = rng.standard_normal((n, n))
        row = [(M + M.T) / 2]
        if ndiag:
            row.append(rng.standard_normal(ndiag))
        As.append(row)
    d0 = np.ones(ndiag) if ndiag else None
    b = [
        float(np.tensordot(As[i][0], np.eye(n))) + (float(As[i][1] @ d0) if ndiag else 0.0)
        for i in range(m)
    ]
    y0 = rng.standard_normal(m) * 0.1
    S0 = sum(y0[i] * As[i][0] for i in range(m)) + np.eye(n) * n
    Cs = [S0] + ([sum(y0[i] * As[i][1] for i in range(m)) + 1.0] if ndiag else [])
    return ConicSDP.from_dense(blocks, Cs, As, b)


# ------------------------------------------------------------------ solve


def test_min_trace_with_pinned_entry():
    # any feasible X has tr(X) >= X11 = 1, attained at e1 e1^T
    sdp = pinned_trace_sdp(1.0)
    sol, st = solve(sdp)
    assert st.kind == "optimal"
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(sol.X[0], np.array([[1.0, 0.0], [0.0, 0.0]]), atol=1e-6)


def test_negative_pinned_diagonal_is_infeasible():
    sdp = pinned_trace_sdp(-1.0)
    sol, st = solve(sdp)
    assert st.kind == "primal_infeasible"
    # Farkas: A^T y + s = 0 with s psd and b^T y > 0
    by = float(sdp.b @ sol.y)
    assert by > 0
    cert = np.abs(sdp.A[0].T @ sol.y + svec(sol.S[0])).max() / by
    assert cert <= 1e-6
    assert np.linalg.eigvalsh(sol.S[0])[0] >= -1e-8


def test_diag_lp_block():
    sdp = ConicSDP.from_dense([("diag", 1)], [np.array([1.0])], [[np.array([1.0])]], [2.0])
    sol, st = solve(sdp)
    assert st.kind == "optimal"
    assert sol.primal_objective == pytest.approx(2.0, abs=1e-7)


def test_dual_infeasible_ray():
    sdp = ConicSDP.from_dense([("psd", 2)], [-np.eye(2)], [[np.zeros((2, 2))]], [0.0])
    sol, st = solve(sdp)
    assert st.kind == "dual_infeasible"
    # certificate: X psd ray with A(X) = 0 and <C, X> < 0
    cx = float(np.tensordot(sdp.C[0], sol.X[0]))
    assert cx < 0
    assert np.linalg.eigvalsh(sol.X[0])[0] >= -1e-8


def test_random_suite_converges():
    for seed in range(10):
        sdp = random_sdp(6, 10, ndiag=3, seed=seed)
        sol, st = solve(sdp)
        assert st.kind == "optimal", f"seed {seed}: {st.kind}"
        pr, dr, gap = residuals(sdp, sol)
        assert pr <= 1e-6 and dr <= 1e-6
        # solution cone membership at the documented tolerance
        assert np.linalg.eigvalsh(sol.X[0])[0] >= -1e-8
        assert np.linalg.eigvalsh(sol.S[0])[0] >= -1e-8


def test_determinism_bit_identical():
    a, _ = solve(random_sdp(5, 8, ndiag=2, seed=3))
    b, _ = solve(random_sdp(5, 8, ndiag=2, seed=3))
    assert all(np.array_equal(x1, x2) for x1, x2 in zip(a.X, b.X))
    assert np.array_equal(a.y, b.y)
    assert [r["mu"] for r in a.log] == [r["mu"] for r in b.log]


def test_weak_duality_on_near_feasible_iterates():
    sol, st = solve(random_sdp(6, 10, ndiag=2, seed=1))
    assert st.kind == "optimal"
    checked = 0
    for rec in sol.log:
        if rec["pres"] <= 1e-6 and rec["dres"] <= 1e-6:
            assert rec["pobj"] >= rec["dobj"] - 1e-9
            checked += 1
    assert rec["pobj"] >= rec["dobj"] - 1e-9  # final iterate always


def test_log_fields_present():
    sol, _ = solve(random_sdp(4, 5, seed=2))
    for rec in sol.log:
        for key in ("iter", "mu", "pres", "dres", "gap", "step"):
            assert key in rec


# ------------------------------------------------------------------ residuals


def test_residuals_exact_solution():
    # analytic optimum of the pinned-trace problem
    sdp = pinned_trace_sdp(1.0)
    from lpp.sdp import SDPSolution

    X = np.array([[1.0, 0.0], [0.0, 0.0]])
    y = np.array([1.0])
    S = np.eye(2) - y[0] * np.array([[1.0, 0.0], [0.0, 0.0]])
    sol = SDPSolution(X=[X], y=y, S=[S], primal_objective=1.0, dual_objective=1.0, iterations=0)
    pr, dr, gap = residuals(sdp, sol)
    assert pr <= 1e-12 and dr <= 1e-12 and gap <= 1e-12


def test_residuals_reflect_perturbation_linearly():
    sdp = pinned_trace_sdp(1.0)
    from lpp.sdp import SDPSolution

    X = np.array([[1.0, 0.0], [0.0, 0.0]]) + 0.1 * np.eye(2)
    y = np.array([1.0])
    S = np.eye(2) - np.array([[1.0, 0.0], [0.0, 0.0]])
    sol = SDPSolution(X=[X], y=y, S=[S], primal_objective=0.0, dual_objective=0.0, iterations=0)
    pr, _, _ = residuals(sdp, sol)
    assert pr == pytest.approx(0.1, abs=1e-15)  # pinned entry moved by exactly 0.1


def test_solver_gap_postcondition():
    sdp = random_sdp(5, 7, seed=4)
    sol, st = solve(sdp, SolverOptions(feas_tol=1e-8, gap_tol=1e-8))
    assert st.kind == "optimal"
    gap = abs(sol.primal_objective - sol.dual_objective)
    assert gap <= 1e-6 * (1 + abs(sol.primal_objective))


# ------------------------------------------------------------------ SDPA io


def test_sdpa_round_trip_random():
    for seed in range(20):
        sdp = random_sdp(4, 6, ndiag=2, seed=seed + 50)
        text = export_sdpa(sdp)
        back = import_sdpa(text)
        assert back.blocks == sdp.blocks
        assert np.array_equal(back.b, sdp.b)
        for Ab, Bb in zip(sdp.A, back.A):
            assert (Ab - Bb).nnz == 0
        for Cb, Db in zip(sdp.C, back.C):
            assert np.array_equal(Cb, Db)
        assert export_sdpa(back) == text


def test_sdpa_deterministic_shape():
    sdp = pinned_trace_sdp(1.0)
    text = export_sdpa(sdp)
    lines = text.strip().split("\n")
    assert lines[0] == "1"
    assert lines[1] == "1"
    assert lines[2] == "2"
    assert lines[3] == "1"
    # objective has two diagonal entries, the constraint one entry
    assert lines[4:] == ["0 1 1 1 1", "0 1 2 2 1", "1 1 1 1 1"]


def test_sdpa_import_tolerates_comments_and_punctuation():
    text = '"comment line\n*another\n1\n2\n{2, -1}\n(1.5)\n0 1 1 2 0.5\n1 1 1 1 1\n'
    sdp = import_sdpa(text)
    assert sdp.blocks == [("psd", 2), ("diag", 1)]
    assert sdp.C[0][0, 1] == 0.5


def test_sdpa_zero_block_size_rejected_with_line():
    with pytest.raises(SdpaFormatError, match="line 3"):
        import_sdpa("1\n1\n0\n1.0\n")


def test_sdpa_malformed_entry_diagnostics():
    with pytest.raises(SdpaFormatError, match="line 5"):
        import_sdpa("1\n1\n2\n1.0\n0 1 1\n")
    with pytest.raises(SdpaFormatError, match="out of range"):
        import_sdpa("1\n1\n2\n1.0\n0 2 1 1 1.0\n")
    with pytest.raises(SdpaFormatError, match="outside block"):
        import_sdpa("1\n1\n2\n1.0\n0 1 3 1 1.0\n")


def test_svec_smat_round_trip():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5):
        M = rng.standard_normal((n, n))
        M = (M + M.T) / 2
        v = svec(M)
        assert np.allclose(smat(v, n), M)
        N = rng.standard_normal((n, n))
        N = (N + N.T) / 2
        assert float(v @ svec(N)) == pytest.approx(np.tensordot(M, N), rel=1e-12)
