import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynbc import (
    ConfigurationError,
    FlowConfig,
    ModelSpec,
    TrajectoryRecord,
    assemble_operators,
    build_interval_mesh,
    build_rect_mesh,
    dissipation_check,
    energy,
    run_trajectory,
    solve_stationary,
)
from dynbc.flow import (
    CSV_COLUMNS,
    ENERGY_RTOL,
    load_snapshot,
    lp_bound_monitor,
    read_trajectory_csv,
    save_snapshot,
    step_implicit,
    step_semi_implicit,
    write_trajectory_csv,
)

from .conftest import ALLEN_CAHN


def smooth_field(mesh, seed, modes=5):
    r = np.random.default_rng(seed)
    x = mesh.node_coords[:, 0] / mesh.lengths[0]
    return sum(r.uniform(-1, 1) * np.cos(k * np.pi * x) for k in range(modes))


def test_config_validation():
    with pytest.raises(ConfigurationError, match="dt0"):
        FlowConfig(dt0=2.0, dt_max=1.0)
    with pytest.raises(ConfigurationError, match="tol_stat"):
        FlowConfig(tol_stat=0.0)
    with pytest.raises(ConfigurationError, match="scheme"):
        FlowConfig(scheme="rk4")


def test_semi_implicit_linear_energy_decrease(ops101, rng):
    model = ModelSpec(0, [])
    u = rng.standard_normal(101)
    for dt in (1e-4, 1e-2, 10.0):
        assert energy(step_semi_implicit(u, dt, ops101, model), ops101, model) <= energy(u, ops101, model)


@pytest.mark.parametrize("mu,guess", [(0, 0.9), (1, 0.1)])
def test_equilibrium_is_fixed_point(ops101, mu, guess):
    model = ModelSpec(mu, ALLEN_CAHN)
    psi = solve_stationary(np.full(101, guess), ops101, model).psi
    for step in (step_semi_implicit, step_implicit):
        assert np.max(np.abs(step(psi, 0.1, ops101, model) - psi)) <= 1e-12


def test_semi_implicit_constant_field(ops101):
    model = ModelSpec(0, ALLEN_CAHN)
    u = np.full(101, 0.5)
    dt = 1e-3
    up = step_semi_implicit(u, dt, ops101, model)
    # total mass obeys the scalar update exactly: sum w_dyn (u+ - u) = -dt sum w_int f(u)
    assert abs(ops101.w_dyn @ (up - u) + dt * (ops101.w_int @ model.f(u))) <= 1e-15
    # far from the boundary the scalar oracle 0.5 - dt f(0.5) holds
    assert abs(up[50] - (0.5 - dt * model.f(0.5))) <= 1e-9
    # the boundary node lags because its weight is dominated by boundary mass
    assert up[0] < up[50]


def test_implicit_matches_semi_implicit_when_linear(ops101, rng):
    model = ModelSpec(1, [])
    u = rng.standard_normal(101)
    np.testing.assert_allclose(
        step_implicit(u, 0.01, ops101, model), step_semi_implicit(u, 0.01, ops101, model), atol=1e-12
    )


def test_backward_euler_energy_inequality_convex(ops101, rng):
    model = ModelSpec(1, [0.0, 1.0, 0.0, 1.0])  # f' > 0: E convex
    u = rng.standard_normal(101)
    for dt in (1e-3, 1e-1):
        up = step_implicit(u, dt, ops101, model)
        d = up - u
        assert energy(up, ops101, model) + ops101.w_dyn @ d**2 / dt <= energy(u, ops101, model) + 1e-12


def test_conservation_without_reaction():
    mesh = build_interval_mesh(101)
    ops = assemble_operators(mesh)
    u0 = smooth_field(mesh, 3)
    rec = run_trajectory(u0, FlowConfig(), ops, ModelSpec(0, []))
    Q0 = ops.w_dyn @ u0
    Q = rec.snapshots @ ops.w_dyn
    assert rec.status == "converged"
    assert np.max(np.abs(Q - Q0)) <= 1e-10 * (1 + abs(Q0))


def test_constant_start_converges_to_well(ops101):
    rec = run_trajectory(np.full(101, 0.5), FlowConfig(), ops101, ModelSpec(0, ALLEN_CAHN))
    assert rec.status == "converged"
    np.testing.assert_allclose(rec.final_state, 1.0, atol=1e-8)


def test_equilibrium_start(ops101):
    rec = run_trajectory(np.ones(101), FlowConfig(), ops101, ModelSpec(0, ALLEN_CAHN))
    assert rec.status == "converged" and len(rec) == 1 and rec.n_steps == 0


def test_horizon_and_record_every(ops101):
    cfg = FlowConfig(t_end=0.05, record_every=7)
    rec = run_trajectory(smooth_field(ops101.mesh, 1), cfg, ops101, ModelSpec(0, ALLEN_CAHN))
    assert rec.status == "horizon_reached"
    assert rec.times[-1] == pytest.approx(0.05)
    assert np.all(np.diff(rec.times) > 0)
    assert len(rec) == 1 + int(np.ceil(rec.n_steps / 7))


def test_blow_up_semi_implicit():
    ops = assemble_operators(build_interval_mesh(51))
    cfg = FlowConfig(scheme="semi_implicit", t_end=10.0)
    rec = run_trajectory(np.full(51, 1.0), cfg, ops, ModelSpec(0, [0, 0, 0, -1]))
    assert rec.status == "blow_up"
    # scalar oracle: u' = u^3 from u(0)=1 blows up at t = 1/2; the boundary
    # nodes lag, so the grid escapes a little later
    assert 0.5 <= rec.times[-1] < 2.0
    rep = lp_bound_monitor(rec)
    assert not rep.bounded


def test_dt_underflow():
    ops = assemble_operators(build_interval_mesh(51))
    cfg = FlowConfig(dt0=1.0, dt_min=0.5, dt_max=1.0)
    rec = run_trajectory(np.full(51, 2.0), cfg, ops, ModelSpec(0, [0, 0, 0, -1]))
    assert rec.status == "dt_underflow"


def test_dissipation_check_equilibrium_record():
    n = 4
    rec = TrajectoryRecord(
        times=np.arange(n, dtype=float),
        energies=np.full(n, -0.25),
        ut_l2=np.zeros(n),
        ut_bnd_l2=np.zeros(n),
        grad_dual=np.zeros(n),
        h1_dist_ref=np.full(n, np.nan),
        lp_interior=np.ones(n),
        lp_bnd=np.ones(n),
        snapshots=np.ones((n, 3)),
        status="converged",
        p_monitor=6.0,
    )
    rep = dissipation_check(rec)
    assert rep.identity_residual == 0.0 and rep.energy_monotone
    with pytest.raises(ValueError):
        dissipation_check(TrajectoryRecord(**{**rec.__dict__, "times": rec.times[:2], "energies": rec.energies[:2]}))


def test_dissipation_linear_flow_first_order():
    mesh = build_interval_mesh(101)
    ops = assemble_operators(mesh)
    u0 = smooth_field(mesh, 3)
    model = ModelSpec(0, [])
    res = []
    for dt in (1e-4, 5e-5):
        rec = run_trajectory(u0, FlowConfig(dt0=dt, dt_max=dt, t_end=0.05), ops, model)
        scale = rec.ut_l2[0] ** 2 + rec.ut_bnd_l2[0] ** 2
        rep = dissipation_check(rec)
        assert rep.identity_residual <= 10 * dt * scale
        res.append(dissipation_check(rec, window=(0.01, 0.05)).identity_residual)
    assert 1.7 <= res[0] / res[1] <= 2.3


def test_lp_monitor_on_converging_run(ops101):
    rec = run_trajectory(smooth_field(ops101.mesh, 2), FlowConfig(), ops101, ModelSpec(0, ALLEN_CAHN))
    rep = lp_bound_monitor(rec)
    assert rep.bounded
    assert rep.sup <= max(rep.initial, rep.plateau) * (1 + 1e-6)


def test_csv_round_trip(tmp_path, ops21):
    rec = run_trajectory(smooth_field(ops21.mesh, 0), FlowConfig(), ops21, ModelSpec(0, ALLEN_CAHN))
    path = tmp_path / "t.csv"
    write_trajectory_csv(rec, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    data = read_trajectory_csv(path)
    np.testing.assert_array_equal(data["E"], rec.energies)
    np.testing.assert_array_equal(data["t"], rec.times)


def test_snapshot_round_trip(tmp_path, rng):
    mesh = build_rect_mesh(4, 5)
    u = rng.standard_normal(mesh.node_count)
    path = tmp_path / "u.snap"
    save_snapshot(u, mesh, path)
    assert path.read_text().splitlines()[:3] == ["dim 2", "shape 4 5", f"spacing {1/3!r} 0.25"]
    np.testing.assert_array_equal(load_snapshot(path, mesh), u)
    with pytest.raises(ValueError):
        load_snapshot(path, build_rect_mesh(5, 4))


def test_with_reference(ops101):
    model = ModelSpec(0, ALLEN_CAHN)
    rec = run_trajectory(np.full(101, 0.5), FlowConfig(), ops101, model)
    ref = rec.with_reference(np.ones(101), ops101)
    assert ref.h1_dist_ref[-1] < 1e-8 and ref.h1_dist_ref[0] == pytest.approx(0.5 * np.sqrt(2))


@settings(max_examples=15)
@given(
    st.sampled_from([0, 1]),
    st.lists(st.floats(-1, 1), min_size=1, max_size=3).map(lambda c: c + [1.0]),
    st.integers(0, 1000),
    st.sampled_from(["implicit", "semi_implicit"]),
    st.booleans(),
)
def test_energy_monotone_property(mu, coeffs, seed, scheme, two_d):
    mesh = build_rect_mesh(6, 5) if two_d else build_interval_mesh(25)
    ops = assemble_operators(mesh)
    u0 = np.random.default_rng(seed).uniform(-1, 1, mesh.node_count)
    rec = run_trajectory(u0, FlowConfig(t_end=2.0, scheme=scheme), ops, ModelSpec(mu, coeffs))
    dE = np.diff(rec.energies)
    assert np.all(dE <= ENERGY_RTOL * (1 + np.abs(rec.energies[:-1])))
    assert np.all(np.diff(rec.times) > 0)
