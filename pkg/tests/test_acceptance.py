"""Acceptance suite: one pass/fail line per criterion, stated tolerances.

Criteria 1, 4, and 5 run at desk scale in the default tier. Criteria 2 and 3
run the published coarse-grid configuration (minutes of wall time) and are
enabled with --runslow.
"""

import math
import os
import time

import numpy as np
import pytest

from pdpap import harness
from pdpap.grid import EdgeField, GridSpec, interior_indices
from pdpap.pde import DIFFUSION_REACTION, SCALAR_REACTION, ControlParam, assemble
from pdpap.prox import (
    RegConfig,
    _pointwise_norms,
    apply_K,
    apply_K_adjoint,
    estimate_K_norm,
    in_box,
    prox_penalty,
    prox_tv_dual,
)
from pdpap.pde import riesz_gradient, expand_interior
from pdpap.solver import ConstantRule, initialize, iterate, relative_error
from pdpap.splitting import (
    SplitterState,
    diagnose,
    full,
    gauss_seidel,
    jacobi,
    make_stepper,
    quasi_cg_step,
    sor,
    split_step,
)


def report(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def desk_exp1_cfg(splitting, **overrides):
    return harness.table_config("exp1", grid=21, splitting=splitting,
                                iterations=10_000, log_every=1000,
                                timing=False, **overrides)


def test_criterion_1_desk_scale_cross_splitting_agreement():
    t0 = time.perf_counter()
    rows_full, state_full, _ = harness.run_experiment(desk_exp1_cfg("full"))
    c_by_k = {r.k: r.c for r in rows_full}
    tail = abs(c_by_k[10_000] - c_by_k[9_000]) / abs(c_by_k[10_000])
    finals = {}
    finals["jacobi"] = harness.run_experiment(desk_exp1_cfg("jacobi"))[1].x.c
    finals["gauss_seidel"] = harness.run_experiment(
        desk_exp1_cfg("gauss_seidel"))[1].x.c
    finals["sor"] = harness.run_experiment(
        desk_exp1_cfg("sor", sor_relax=1.0))[1].x.c
    elapsed = time.perf_counter() - t0
    rel = {k: abs(v - state_full.x.c) / abs(state_full.x.c)
           for k, v in finals.items()}
    ok = tail < 1e-4 and all(v < 1e-2 for v in rel.values())
    report("criterion 1 (exp1 desk scale, all splittings agree)", ok,
           f"tail |dc|/|c| = {tail:.2e} (< 1e-4), "
           f"max rel diff vs full = {max(rel.values()):.2e} (< 1e-2), "
           f"c_full = {state_full.x.c:.6f}, runtime {elapsed:.0f}s")


@pytest.fixture(scope="module")
def coarse_exp1_runs():
    os.environ["PDPAP_THREADS"] = "1"
    runs = {}
    for name, cfg in [
        ("full", harness.table_config("exp1", "coarse", "full", log_every=100)),
        ("jacobi", harness.table_config("exp1", "coarse", "jacobi", log_every=100)),
        ("gauss_seidel", harness.table_config("exp1", "coarse", "gauss_seidel",
                                              log_every=100)),
        ("sor", harness.table_config("exp1", "coarse", "sor", sor_relax=1.0,
                                     log_every=100)),
    ]:
        rows, state, _ = harness.run_experiment(cfg)
        runs[name] = (rows, state.x.c)
    return runs


def tail_is_decreasing(relerr):
    """Decrease of the last quarter of the logged curve.

    Jacobi and SOR approach the limit with small oscillations, and runs
    that have already hit the reference sit at a machine-precision plateau,
    so the check is: converged to the reference (<= 1e-10), or the segment
    decreases endpoint to endpoint with decreasing half-medians.
    """
    seg = np.asarray(relerr[-(len(relerr) // 4):])
    if seg[-1] <= 1e-10:
        return True
    half = len(seg) // 2
    return bool(seg[-1] < seg[0]
                and np.median(seg[half:]) < np.median(seg[:half]))


@pytest.mark.slow
def test_criterion_2_coarse_grid_table_parameters(coarse_exp1_runs):
    c_ref = coarse_exp1_runs["full"][1]
    finals = {k: v[1] for k, v in coarse_exp1_runs.items()}
    worst_pair = max(abs(a - b) / abs(b)
                     for a in finals.values() for b in finals.values())
    decreasing = {}
    for name, (rows, _) in coarse_exp1_runs.items():
        relerr = [abs(r.c - c_ref) / abs(c_ref) for r in rows]
        decreasing[name] = tail_is_decreasing(relerr)
    ok = worst_pair < 2e-2 and all(decreasing.values())
    report("criterion 2 (exp1 coarse grid, 20k iterations, 4 splittings)", ok,
           f"finals {({k: round(v, 5) for k, v in finals.items()})}, "
           f"max pairwise rel = {worst_pair:.2e} (< 2e-2), "
           f"decreasing tails: {decreasing}")


@pytest.mark.slow
def test_criterion_3_effort_to_threshold(coarse_exp1_runs):
    c_ref = coarse_exp1_runs["full"][1]

    def time_to_threshold(rows):
        for r in rows:
            if abs(r.c - c_ref) / abs(c_ref) <= 0.05:
                return r.t_sec
        return math.inf

    t_full = time_to_threshold(coarse_exp1_runs["full"][0])
    ratios = {name: time_to_threshold(coarse_exp1_runs[name][0]) / t_full
              for name in ("jacobi", "gauss_seidel")}
    ok = all(r <= 1.0 for r in ratios.values())
    report("criterion 3 (splitting effort to reach relerr 0.05)", ok,
           f"time ratios vs full = "
           f"{({k: round(v, 3) for k, v in ratios.items()})} (<= 1.0), "
           f"t_full = {t_full:.2f}s")


def test_criterion_4_exp2_desk_scale():
    t0 = time.perf_counter()
    cfg = harness.table_config("exp2", grid=21, splitting="gauss_seidel",
                               iterations=20_000, log_every=2000, timing=False)
    assert (cfg.gamma, cfg.alpha, cfg.lam, cfg.m) == (1e-2, 0.0, 0.1, 10)
    ref = harness.compute_reference(cfg, 40_000)
    rows, state, problem = harness.run_experiment(cfg, reference=ref.x)
    err = relative_error(DIFFUSION_REACTION, state.x, ref.x)
    elapsed = time.perf_counter() - t0
    ok = err < 0.2 and rows[-1].J_exact < rows[0].J_exact
    report("criterion 4 (exp2 desk scale, TV diffusion recovery)", ok,
           f"scale-invariant error = {err:.4f} (< 0.2), "
           f"J {rows[0].J_exact:.3f} -> {rows[-1].J_exact:.3f}, "
           f"runtime {elapsed:.0f}s")


def brute_force_prox(v, tau, alpha, lam):
    lo, hi = lam, 1.0 / lam
    xs = np.clip(np.arange(lo - 1.0, hi + 1.0, 1e-3), lo, hi)

    def obj(x):
        return 0.5 * alpha * x**2 + (x - v) ** 2 / (2 * tau)

    x0 = xs[np.argmin(obj(xs))]
    fine = np.clip(np.arange(x0 - 2e-3, x0 + 2e-3, 1e-6), lo, hi)
    return fine[np.argmin(obj(fine))]


def test_criterion_5a_prox_against_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        v = rng.uniform(-5.0, 25.0)
        tau = 10.0 ** rng.uniform(-3, 1)
        alpha = rng.choice([0.0, 10.0 ** rng.uniform(-6, -2)])
        lam = rng.uniform(0.05, 0.9)
        cfg = RegConfig(alpha=alpha, lam=lam, gamma=0.0)
        got = prox_penalty(ControlParam(None, v), tau, cfg).c
        worst = max(worst, abs(got - brute_force_prox(v, tau, alpha, lam)))
    report("criterion 5a (prox vs brute-force oracle, 100 draws)",
           worst < 1e-5, f"worst abs error = {worst:.2e} (< 1e-5)")


def test_criterion_5b_dual_ball_projection():
    rng = np.random.default_rng(7)
    cfg = RegConfig(alpha=0.0, lam=0.1, gamma=0.01)
    g = GridSpec(9)
    y = EdgeField(rng.standard_normal((9, 8)), rng.standard_normal((8, 9)))
    p1 = prox_tv_dual(y, 1.0, cfg)
    p2 = prox_tv_dual(p1, 1.0, cfg)
    norm_ok = _pointwise_norms(g, p1).max() <= cfg.gamma + 1e-12
    idem = max(np.abs(p2.dx - p1.dx).max(), np.abs(p2.dy - p1.dy).max())
    report("criterion 5b (dual ball projection, idempotence)",
           norm_ok and idem <= 1e-12,
           f"max norm excess ok, prox o prox deviation = {idem:.1e} (<= 1e-12)")


def test_criterion_5c_coupling_operator():
    rng = np.random.default_rng(8)
    g = GridSpec(7)
    a = rng.standard_normal(g.n_nodes)
    y = EdgeField(rng.standard_normal((7, 6)), rng.standard_normal((6, 7)))
    kx = apply_K(g, ControlParam(a, 1.0))
    lhs = np.sum(kx.dx * y.dx) + np.sum(kx.dy * y.dy)
    rhs = a @ apply_K_adjoint(g, y).a
    adj = abs(lhs - rhs) / max(abs(lhs), 1.0)
    knorm2 = estimate_K_norm(GridSpec(51)) ** 2
    ok = adj <= 1e-12 and 7.9 <= knorm2 <= 8.0
    report("criterion 5c (K adjoint identity, coarse-grid norm)", ok,
           f"adjoint mismatch = {adj:.1e} (<= 1e-12), "
           f"||K||^2 = {knorm2:.4f} (in [7.9, 8.0])")


def test_criterion_5d_riesz_affine_exactness():
    rng = np.random.default_rng(17)
    g = GridSpec(5)
    worst = 0.0
    for family in (SCALAR_REACTION, DIFFUSION_REACTION):
        for _ in range(10):
            if family == DIFFUSION_REACTION:
                x = ControlParam(1.0 + 0.5 * rng.random(g.n_nodes),
                                 0.5 + rng.random())
                dx = ControlParam(0.3 * rng.standard_normal(g.n_nodes),
                                  0.2 * rng.standard_normal())
            else:
                x = ControlParam(None, 0.5 + rng.random())
                dx = ControlParam(None, 0.2 * rng.standard_normal())
            u = rng.standard_normal((2, g.n_nodes))
            w = expand_interior(g, rng.standard_normal((2, g.n_interior)))
            grad = riesz_gradient(family, g, u, w)

            def pairing(xp):
                from pdpap.grid import boundary_parametrization
                bb = boundary_parametrization(g)[0]
                ii = interior_indices(g)
                s = assemble(family, g, xp, u[:, bb])
                return float(np.sum(w[:, ii] * ((s.A @ u[:, ii].T).T - s.rhs)))

            if family == DIFFUSION_REACTION:
                x2 = ControlParam(x.a + dx.a, x.c + dx.c)
                lin = float(grad.a @ dx.a) + grad.c * dx.c
            else:
                x2 = ControlParam(None, x.c + dx.c)
                lin = grad.c * dx.c
            diff = pairing(x2) - pairing(x)
            worst = max(worst, abs(diff - lin) / max(abs(diff), 1.0))
    report("criterion 5d (control gradient affine exactness, both families)",
           worst <= 1e-11, f"worst relative defect = {worst:.1e} (<= 1e-11)")


def test_criterion_5e_splitting_convergence_and_alpha():
    from test_splitting import slow_dominant_spd
    A = slow_dominant_spd(20, 8)
    rng = np.random.default_rng(1)
    rhs = rng.standard_normal(20)
    exact = np.linalg.solve(A.toarray(), rhs)
    details = []
    ok = True
    for kind in (jacobi(), gauss_seidel()):
        st = SplitterState(exact.copy())
        fp = np.abs(split_step(kind, A, rhs, st).u - exact).max()
        ok &= fp <= 1e-12
        stepper = make_stepper(kind, A)
        st = SplitterState(np.zeros(20))
        errors = []
        for k in range(10_000):
            st = stepper.step(rhs, st)
            errors.append(np.linalg.norm(st.u - exact))
            if errors[-1] <= 1e-8:
                break
        alpha = diagnose(kind, A).alpha
        k0 = max(0, len(errors) - 60)
        obs = (errors[-1] / errors[k0]) ** (1.0 / (len(errors) - 1 - k0))
        ok &= errors[-1] <= 1e-8 and abs(obs - alpha) <= 0.10 * alpha
        details.append(f"{kind.kind}: {len(errors)} steps, "
                       f"alpha {alpha:.3f} vs observed {obs:.3f}")
    report("criterion 5e (splitting fixed point, convergence, alpha match)",
           ok, "; ".join(details))


def test_criterion_5f_sor_eigenvalue_map():
    rng = np.random.default_rng(33)
    M = rng.standard_normal((5, 5))
    Ad = M @ M.T + 5 * np.eye(5)
    worst = 0.0
    for base_tril in (True, False):
        N = np.tril(Ad) if base_tril else np.diag(np.diag(Ad))
        lam = np.linalg.eigvals(np.linalg.solve(N, Ad - N))
        for r in (0.5, 1.0, 3.0):
            lam_t = np.linalg.eigvals(np.linalg.solve((1 + r) * N,
                                                      Ad - (1 + r) * N))
            mapped = (lam - r) / (1 + r)
            worst = max(worst, np.abs(np.sort_complex(lam_t)
                                      - np.sort_complex(mapped)).max())
    report("criterion 5f (sor eigenvalue map)", worst <= 1e-10,
           f"worst eigenvalue deviation = {worst:.1e} (<= 1e-10)")


def test_criterion_5g_quasi_cg_identities():
    import scipy.sparse as sp
    rng = np.random.default_rng(5)
    M = rng.standard_normal((10, 10))
    A = sp.csr_matrix(M @ M.T + 10 * np.eye(10))
    rhs = rng.standard_normal(10)
    st = quasi_cg_step(A, rhs, SplitterState(np.zeros(10)))
    ortho = 0.0
    for _ in range(5):
        p_prev = st.p.copy()
        prev_u = st.u.copy()
        st = quasi_cg_step(A, rhs, st)
        ap = A @ st.p
        ortho = max(ortho, abs(ap @ p_prev)
                    / (np.linalg.norm(ap) * np.linalg.norm(p_prev)))
    # one-step residual contraction identity
    Ad = A.toarray()
    p = st.p
    proj = np.eye(10) - (Ad @ np.outer(p, p)) / (p @ Ad @ p)
    ident = np.abs((Ad @ st.u - rhs) - proj @ (Ad @ prev_u - rhs)).max()
    I = sp.identity(4, format="csr")
    b = rng.standard_normal(4)
    one_step = np.abs(quasi_cg_step(I, b, SplitterState(np.zeros(4))).u - b).max()
    ok = ortho <= 1e-10 and ident <= 1e-10 and one_step == 0.0
    report("criterion 5g (quasi-CG orthogonality and identities)", ok,
           f"A-orthogonality {ortho:.1e} (<= 1e-10), "
           f"residual identity {ident:.1e} (<= 1e-10), identity-matrix exact")


def test_criterion_5h_jacobi_alpha_half():
    import scipy.sparse as sp
    A = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    alpha = diagnose(jacobi(), A).alpha
    report("criterion 5h (jacobi alpha on the 2x2 example)",
           abs(alpha - 0.5) <= 1e-10, f"alpha = {alpha!r} (0.5 +- 1e-10)")


def test_criterion_5i_invariants_smoke_run():
    cfg = harness.table_config("exp2", grid=15, splitting="jacobi",
                               iterations=1000, log_every=100, timing=False)
    problem = harness.build_problem(cfg)
    rule = ConstantRule(cfg.tau, cfg.sigma, cfg.omega)
    state = initialize(problem, harness.initial_control(cfg, problem.grid), rule)
    ok = True
    for k in range(1000):
        iterate(problem, state, rule, harness.splitting_of(cfg))
        ok &= in_box(state.x, problem.reg)
        ok &= _pointwise_norms(problem.grid, state.y).max() \
            <= problem.reg.gamma + 1e-12
    report("criterion 5i (feasibility and dual ball over 1000 iterations)",
           ok, "x in box and |y| <= gamma at every iterate")


def test_criterion_5j_deterministic_csv(tmp_path):
    cfg = harness.table_config("exp1", grid=15, splitting="gauss_seidel",
                               iterations=300, log_every=100, timing=False)
    p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    harness.run_experiment(cfg, csv_path=p1)
    harness.run_experiment(cfg, csv_path=p2)
    same = p1.read_bytes() == p2.read_bytes()
    report("criterion 5j (bitwise-identical seeded runs)", same,
           "identical CSV bytes")
