"""Macroscopic pressure evolution with auxiliary memory fields.

The strongest checks here are closed-form reductions.  With every side
natural and a constant body force, the discrete solution stays inside
the space of mean-zero linear fields on any mesh, so the full solver
must track a two-component recurrence to rounding accuracy.  Uniform
Dirichlet data reduce the same way to a scalar recurrence per mode.
"""

import numpy as np
import pytest

from porohom.fem import assemble_p1_mass, p1_integral_vector
from porohom.kernel_model import build_kernel_model
from porohom.macro import (
    MacroProblem,
    MacroState,
    parse_bc,
    run,
    solve_steady,
    write_ledger_csv,
    write_state_csv,
)

from conftest import COEF3, KBAR3, LAMS3

BC_DIR = "left=dirichlet:0,right=dirichlet:1,top=natural:0,bottom=natural:0"
BC_NAT = {side: ("natural", 0.0) for side in ("left", "right", "top", "bottom")}


def linear_field(mesh, cvec):
    """Mean-zero nodal values of x -> cvec . x."""
    vals = mesh.vertices @ np.asarray(cvec, dtype=float)
    ints = p1_integral_vector(mesh)
    return vals - (ints @ vals) / mesh.area()


# ---------------------------------------------------------------- parsing


def test_parse_bc_full_string():
    bc = parse_bc(BC_DIR)
    assert bc == {
        "OuterLeft": ("dirichlet", 0.0),
        "OuterRight": ("dirichlet", 1.0),
        "OuterTop": ("natural", 0.0),
        "OuterBottom": ("natural", 0.0),
    }


@pytest.mark.parametrize("text,fragment", [
    ("left=dirichlet", "malformed boundary item"),
    ("left=weird:0", "unknown boundary kind"),
    ("diag=dirichlet:0", "unknown side"),
    ("left=dirichlet:0,left=natural:0", "duplicate condition"),
])
def test_parse_bc_rejects_garbage(text, fragment):
    with pytest.raises(ValueError, match=fragment):
        parse_bc(text)


def test_problem_validates_sides_and_parameters(rect_mesh, model3):
    with pytest.raises(ValueError, match="missing boundary condition"):
        MacroProblem(rect_mesh, model3, {"left": ("dirichlet", 0.0)})
    both = dict(BC_NAT)
    both["OuterLeft"] = ("natural", 0.0)
    with pytest.raises(ValueError, match="duplicate"):
        MacroProblem(rect_mesh, model3, both)
    with pytest.raises(ValueError, match="sigma"):
        MacroProblem(rect_mesh, model3, BC_NAT, sigma=-0.1)
    with pytest.raises(ValueError, match="tau"):
        MacroProblem(rect_mesh, model3, BC_NAT, tau=0.0)
    with pytest.raises(ValueError, match="incompatible"):
        bad = dict(BC_NAT)
        bad["left"] = ("natural", 0.3)
        MacroProblem(rect_mesh, model3, bad)


# ----------------------------------------------------------- steady solve


def test_steady_linear_profile(rect_mesh):
    v = solve_steady(rect_mesh, 0.0127 * np.eye(2), BC_DIR)
    assert np.max(np.abs(v - rect_mesh.vertices[:, 0] / 2.0)) < 1e-10


def test_steady_scale_invariance(rect_mesh):
    v1 = solve_steady(rect_mesh, np.eye(2), BC_DIR)
    v2 = solve_steady(rect_mesh, 2.0 * np.eye(2), BC_DIR)
    assert np.max(np.abs(v1 - v2)) < 1e-10


def test_steady_balanced_natural_data(rect_mesh):
    bc = {"left": ("natural", 0.5), "right": ("natural", -0.5),
          "top": ("natural", 0.0), "bottom": ("natural", 0.0)}
    v = solve_steady(rect_mesh, np.eye(2), bc)
    ints = p1_integral_vector(rect_mesh)
    assert abs(ints @ v) < 1e-12
    # influx on the left drives the pressure down along x
    left = v[rect_mesh.vertices[:, 0] < 1e-12].mean()
    right = v[rect_mesh.vertices[:, 0] > 2.0 - 1e-12].mean()
    assert left > right


def test_steady_rejects_bad_input(rect_mesh):
    with pytest.raises(ValueError, match="positive definite"):
        solve_steady(rect_mesh, -np.eye(2), BC_DIR)
    bad = dict(BC_NAT)
    bad["left"] = ("natural", 0.3)
    with pytest.raises(ValueError, match="incompatible"):
        solve_steady(rect_mesh, np.eye(2), bad)


# ------------------------------------------------------ scheme reductions


@pytest.mark.parametrize("sigma", [0.0, 0.5, 1.0])
def test_uniform_dirichlet_scalar_recurrence(rect_mesh, model3, sigma):
    c, tau, nsteps = 0.7, 1e-3, 20
    bc = {side: ("dirichlet", c) for side in ("left", "right", "top", "bottom")}
    prob = MacroProblem(rect_mesh, model3, bc, sigma=sigma, tau=tau)
    state = prob.init_state()
    assert np.max(np.abs(state.v - c)) < 1e-12
    alpha = np.zeros(3)
    for _ in range(nsteps):
        state = prob.step(state)
        if sigma == 0.0:
            alpha = alpha + tau * (c - LAMS3 * alpha)
        else:
            mid = (sigma * tau * c + alpha) / (1.0 + sigma * LAMS3 * tau)
            alpha = alpha + tau * (c - LAMS3 * mid)
    assert np.max(np.abs(state.v - c)) < 1e-11
    for k in range(3):
        assert np.max(np.abs(state.v_aux[k] - alpha[k])) < 1e-11


def test_all_natural_forcing_reduces_to_two_vector_recurrence(
        rect_mesh, model3):
    f = np.array([1.0, 0.25])
    sigma, tau, nsteps = 0.5, 5e-4, 40
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=f, sigma=sigma, tau=tau)
    state = prob.init_state()

    d_tensors = model3.d_tensors
    k_tilde = model3.k_tilde
    denom = 1.0 + sigma * LAMS3 * tau
    k_eff = k_tilde + np.sum(
        (sigma * tau / denom)[:, None, None] * d_tensors, axis=0)

    c_now = np.linalg.solve(k_tilde, model3.forcing_vector(f, 0.0))
    assert np.max(np.abs(state.v - linear_field(rect_mesh, c_now))) < 1e-12
    a_now = np.zeros((3, 2))
    for n in range(nsteps):
        state = prob.step(state)
        t_mid = n * tau + sigma * tau
        rhs = model3.forcing_vector(f, t_mid) - np.einsum(
            "kij,kj->i", d_tensors, a_now / denom[:, None])
        c_mid = np.linalg.solve(k_eff, rhs)
        a_now = (tau * c_mid[None, :]
                 + (1.0 - (1.0 - sigma) * LAMS3 * tau)[:, None] * a_now) \
            / denom[:, None]
        c_now = (c_mid - (1.0 - sigma) * c_now) / sigma
    assert np.max(np.abs(state.v - linear_field(rect_mesh, c_now))) < 1e-10
    for k in range(3):
        want = linear_field(rect_mesh, a_now[k])
        assert np.max(np.abs(state.v_aux[k] - want)) < 1e-10
    # the pressure gradient relaxes toward the body force
    assert np.allclose(c_now, f, rtol=0.2)


def test_relaxed_profile_is_a_fixed_point(rect_mesh, model3):
    f = np.array([1.0, 0.25])
    v = linear_field(rect_mesh, f)
    v_aux = np.stack([linear_field(rect_mesh, f / lam) for lam in LAMS3])
    state = MacroState(1.0, v, v_aux)
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=f, sigma=0.5, tau=1e-3)
    after = prob.step(state)
    assert np.max(np.abs(after.v - state.v)) < 1e-9
    assert np.max(np.abs(after.v_aux - state.v_aux)) < 1e-9


def test_weak_mass_update_matches_nodal_recurrence(rect_mesh):
    # eliminating the shared mass matrix from the auxiliary update is
    # exact, so solving the weak form must land on the nodal recurrence
    import scipy.sparse.linalg as spla

    mass = assemble_p1_mass(rect_mesh).tocsc()
    rng = np.random.default_rng(5)
    v_mid = rng.standard_normal(rect_mesh.num_vertices)
    a_old = rng.standard_normal(rect_mesh.num_vertices)
    sigma, tau, lam = 0.5, 1e-3, 40.0
    nodal = (tau * v_mid + (1.0 - (1.0 - sigma) * lam * tau) * a_old) \
        / (1.0 + sigma * lam * tau)
    rhs = mass @ (tau * v_mid + (1.0 - (1.0 - sigma) * lam * tau) * a_old)
    weak = spla.spsolve((1.0 + sigma * lam * tau) * mass, rhs)
    assert np.max(np.abs(weak - nodal)) < 1e-11


# ------------------------------------------------------------- the ledger


@pytest.mark.parametrize("sigma", [0.5, 0.75, 1.0])
def test_ledger_margin_is_nonnegative(rect_mesh, model3, sigma):
    f = np.array([1.0, 0.25])
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=f, sigma=sigma, tau=2e-4)
    assert prob.ledger_guaranteed
    res = run(prob, 0.02, checked=True)
    ratios = []
    for n, t, lhs, rhs, margin in res.ledger:
        assert margin >= -1e-10 * max(lhs, rhs)
        ratios.append(margin / max(lhs, rhs))
    # the bound is active somewhere, not trivially slack everywhere
    assert min(ratios) < 0.5


def test_explicit_scheme_breaks_the_ledger(rect_mesh, model3):
    # sigma = 0 with tau beyond 2 / lambda_max is unstable and the
    # estimate carries no guarantee, which the ledger makes visible
    f = np.array([1.0, 0.25])
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=f, sigma=0.0, tau=0.02)
    assert not prob.ledger_guaranteed
    res = run(prob, 0.8, checked=True)
    margins = np.array([row[4] for row in res.ledger])
    scales = np.array([max(row[2], row[3]) for row in res.ledger])
    assert margins[-1] < -1e6 * scales[0]


def test_dirichlet_run_is_not_guaranteed(rect_mesh, model3):
    prob = MacroProblem(rect_mesh, model3, BC_DIR, sigma=0.5, tau=1e-3)
    assert not prob.ledger_guaranteed


def test_memory_energy_closed_form(rect_mesh, model3):
    coeffs = np.array([[0.3, -0.2], [1.0, 0.5], [0.0, 0.7]])
    v_aux = np.stack([linear_field(rect_mesh, c) for c in coeffs])
    state = MacroState(0.0, np.zeros(rect_mesh.num_vertices), v_aux)
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=(1.0, 0.0))
    want = sum(c @ model3.d_tensors[k] @ c * rect_mesh.area()
               for k, c in enumerate(coeffs))
    assert prob.memory_energy(state) == pytest.approx(want, rel=1e-12)


# -------------------------------------------------------------- run driver


def test_long_run_settles_to_steady_solution(rect_mesh, model3):
    tau = 2e-4
    t_final = np.ceil(10.0 / LAMS3[0] / tau) * tau
    prob = MacroProblem(rect_mesh, model3, BC_DIR, sigma=0.5, tau=tau)
    res = run(prob, t_final, snapshot_times=[t_final])
    v_fin = res.snapshots[0][1].v
    v_ref = solve_steady(rect_mesh, KBAR3, BC_DIR)
    mass = assemble_p1_mass(rect_mesh)
    diff = v_fin - v_ref
    rel = np.sqrt((diff @ (mass @ diff)) / (v_ref @ (mass @ v_ref)))
    assert rel < 1e-3


def test_time_stepping_orders(rect_mesh, model3):
    t_final = 7.5e-4

    def final_v(sigma, tau):
        prob = MacroProblem(rect_mesh, model3, BC_DIR, sigma=sigma, tau=tau)
        res = run(prob, t_final, snapshot_times=[t_final])
        return res.snapshots[0][1].v

    for sigma, low, high in ((0.5, 1.9, 2.3), (1.0, 0.8, 1.2)):
        errs = []
        for tau in (t_final / 8, t_final / 16, t_final / 32):
            errs.append(final_v(sigma, tau))
        e1 = np.linalg.norm(errs[0] - errs[1])
        e2 = np.linalg.norm(errs[1] - errs[2])
        order = np.log2(e1 / e2)
        assert low <= order <= high


def test_memoryless_model_reproduces_steady_state(rect_mesh):
    model0 = build_kernel_model(KBAR3, [], np.zeros((0, 2)))
    prob = MacroProblem(rect_mesh, model0, BC_DIR, sigma=0.5, tau=1e-3)
    state = prob.init_state()
    assert state.v_aux.shape == (0, rect_mesh.num_vertices)
    after = prob.step(state)
    assert np.max(np.abs(after.v - state.v)) < 1e-12


def test_run_validates_times(rect_mesh, model3):
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=(1.0, 0.0),
                        sigma=0.5, tau=1e-3)
    with pytest.raises(ValueError, match="multiple of tau"):
        run(prob, 0.0105)
    with pytest.raises(ValueError, match="outside"):
        run(prob, 0.01, snapshot_times=[0.02])


def test_snapshots_attach_to_grid_times(rect_mesh, model3):
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=(1.0, 0.0),
                        sigma=0.5, tau=1e-3)
    res = run(prob, 0.01, snapshot_times=[0.0033, 0.0, 0.01])
    req = [snap[0] for snap in res.snapshots]
    assert req == [0.0033, 0.0, 0.01]
    assert res.snapshots[0][1].t == pytest.approx(0.003)
    assert res.snapshots[1][1].t == 0.0
    assert res.snapshots[2][1].t == pytest.approx(0.01)


def test_restart_continues_the_trajectory(rect_mesh, model3):
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=(1.0, 0.0),
                        sigma=0.5, tau=1e-3)
    full = run(prob, 0.01, snapshot_times=[0.01])
    first = run(prob, 0.005, snapshot_times=[0.005])
    second = run(prob, 0.01, snapshot_times=[0.01],
                 initial_state=first.snapshots[0][1])
    va = full.snapshots[0][1].v
    vb = second.snapshots[0][1].v
    assert np.max(np.abs(va - vb)) < 1e-12


def test_state_and_ledger_csv(tmp_path, rect_mesh, model3):
    prob = MacroProblem(rect_mesh, model3, BC_NAT, f=(1.0, 0.0),
                        sigma=0.5, tau=1e-3)
    res = run(prob, 0.005, snapshot_times=[0.005])
    state = res.snapshots[0][1]

    spath = tmp_path / "state.csv"
    write_state_csv(spath, rect_mesh, state)
    lines = spath.read_text().splitlines()
    assert lines[0] == "node,x,y,v,v_1,v_2,v_3"
    assert len(lines) == rect_mesh.num_vertices + 1
    row = lines[1].split(",")
    assert int(row[0]) == 0
    assert float(row[1]) == rect_mesh.vertices[0, 0]
    assert float(row[3]) == state.v[0]

    lpath = tmp_path / "ledger.csv"
    write_ledger_csv(lpath, res.ledger)
    lines = lpath.read_text().splitlines()
    assert lines[0] == "n,t,lhs,rhs,margin"
    assert len(lines) == len(res.ledger) + 1
    last = lines[-1].split(",")
    assert int(last[0]) == len(res.ledger)
    assert float(last[4]) == res.ledger[-1][4]
