import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from dynbc import (
    ModelSpec,
    assemble_operators,
    build_interval_mesh,
    build_rect_mesh,
    dual_norm,
    energy,
    energy_gradient,
    energy_hessian,
    h1_norm,
    l2_norms,
    lp_norms,
)
from dynbc.discretization import Operators
from dynbc.energy import discrete_laplacian_norm, monitor_exponent

from .conftest import ALLEN_CAHN


def test_energy_constant_fields(ops101):
    one = np.ones(101)
    assert energy(one, ops101, ModelSpec(0, ALLEN_CAHN)) == pytest.approx(-0.25, abs=1e-14)
    assert energy(one, ops101, ModelSpec(1, ALLEN_CAHN)) == pytest.approx(0.75, abs=1e-14)
    for mu in (0, 1):
        assert energy(np.zeros(101), ops101, ModelSpec(mu, [1.0, 2.0, 3.0])) == 0.0


def test_gradient_examples(ops21, rng):
    ac = ModelSpec(0, ALLEN_CAHN)
    np.testing.assert_array_equal(energy_gradient(np.zeros(21), ops21, ac), 0.0)
    np.testing.assert_allclose(energy_gradient(np.ones(21), ops21, ac), 0.0, atol=1e-14)
    u = rng.standard_normal(21)
    g = energy_gradient(u, ops21, ac)
    eps = 1e-5
    for _ in range(5):
        v = rng.standard_normal(21)
        fd = (energy(u + eps * v, ops21, ac) - energy(u - eps * v, ops21, ac)) / (2 * eps)
        assert abs(fd - v @ g) <= 1e-6 * abs(v @ g)


def test_hessian_matches_gradient_differences(ops2d, rng):
    model = ModelSpec(1, [0.5, -1.0, 0.3, 1.0])
    u = rng.standard_normal(ops2d.mesh.node_count)
    v = rng.standard_normal(ops2d.mesh.node_count)
    H = energy_hessian(u, ops2d, model)
    eps = 1e-6
    fd = (energy_gradient(u + eps * v, ops2d, model) - energy_gradient(u - eps * v, ops2d, model)) / (2 * eps)
    np.testing.assert_allclose(H @ v, fd, rtol=1e-6, atol=1e-8)


def test_h1_norm_examples():
    mesh = build_interval_mesh(2001)
    ops = assemble_operators(mesh)
    assert h1_norm(np.zeros(2001), ops) == 0.0
    assert h1_norm(np.full(2001, -3.0), ops) == pytest.approx(3 * np.sqrt(2), rel=1e-14)
    assert abs(h1_norm(mesh.node_coords[:, 0], ops) - np.sqrt(2)) < 1e-6


def test_dual_norm_examples(rng):
    ops = assemble_operators(build_interval_mesh(51))
    assert dual_norm(np.zeros(51), ops) == 0.0
    w = rng.standard_normal(51)
    assert abs(dual_norm(ops.h1_matrix @ w, ops) - h1_norm(w, ops)) <= 1e-10 * h1_norm(w, ops)
    r = rng.standard_normal(51)
    dense = np.sqrt(r @ np.linalg.solve(ops.h1_matrix.toarray(), r))
    assert abs(dual_norm(r, ops) - dense) <= 1e-10 * dense


def test_l2_and_lp_norms(ops101, rng):
    one = np.ones(101)
    assert l2_norms(one, ops101) == pytest.approx((1.0, np.sqrt(2)), rel=1e-14)
    assert l2_norms(np.zeros(101), ops101) == (0.0, 0.0)
    inner = np.zeros(101)
    inner[1:-1] = rng.standard_normal(99)
    assert l2_norms(inner, ops101)[1] == 0.0
    assert lp_norms(one, ops101, 4) == pytest.approx((1.0, 2**0.25), rel=1e-14)
    assert lp_norms(np.full(101, 2.0), ops101, 3)[0] == pytest.approx(2.0, rel=1e-14)
    u = rng.standard_normal(101)
    np.testing.assert_allclose(lp_norms(u, ops101, 2), l2_norms(u, ops101), rtol=1e-14)
    with pytest.raises(ValueError):
        lp_norms(u, ops101, 0.5)


def test_monitor_exponent():
    assert monitor_exponent(1) == monitor_exponent(2) == 6.0
    assert monitor_exponent(3) == 12.0
    assert monitor_exponent(4) == 8.0


def test_shape_and_nan_rejection(ops21):
    model = ModelSpec(0, ALLEN_CAHN)
    with pytest.raises(ValueError):
        energy(np.zeros(20), ops21, model)
    bad = np.zeros(21)
    bad[3] = np.inf
    with pytest.raises(ValueError):
        energy_gradient(bad, ops21, model)


def test_discrete_laplacian_of_quadratic():
    mesh = build_interval_mesh(11)
    ops = assemble_operators(mesh)
    x = mesh.node_coords[:, 0]
    # interior rows of M^-1 K x^2 equal -2
    lap = (ops.K @ x**2) / ops.w_int
    np.testing.assert_allclose(lap[1:-1], -2.0, rtol=1e-12)
    assert discrete_laplacian_norm(np.ones(11), ops) == pytest.approx(0.0, abs=1e-12)


models = st.builds(
    ModelSpec,
    st.sampled_from([0, 1]),
    st.lists(st.floats(-2, 2, allow_nan=False), min_size=0, max_size=5),
)
meshes = st.one_of(
    st.builds(build_interval_mesh, st.integers(3, 30), st.floats(0.2, 3.0)),
    st.builds(build_rect_mesh, st.integers(3, 7), st.integers(3, 7), st.floats(0.2, 2.0), st.floats(0.2, 2.0)),
)


@given(meshes, models, st.integers(0, 2**32 - 1))
def test_gradient_consistency_property(mesh, model, seed):
    ops = assemble_operators(mesh)
    r = np.random.default_rng(seed)
    u = r.uniform(-1.5, 1.5, mesh.node_count)
    v = r.standard_normal(mesh.node_count)
    eps = 1e-6
    fd = (energy(u + eps * v, ops, model) - energy(u - eps * v, ops, model)) / (2 * eps)
    g = energy_gradient(u, ops, model)
    assert abs(v @ g - fd) <= 1e-6 * (1 + abs(energy(u, ops, model)))


@given(meshes, st.integers(0, 2**32 - 1))
def test_dual_norm_round_trip_property(mesh, seed):
    ops = assemble_operators(mesh)
    u = np.random.default_rng(seed).standard_normal(mesh.node_count)
    assert abs(dual_norm(ops.h1_matrix @ u, ops) - h1_norm(u, ops)) <= 1e-10 * h1_norm(u, ops)


def _permuted(ops, perm):
    mesh = ops.mesh
    inv = np.argsort(perm)
    P = sp.csr_matrix((np.ones(len(perm)), (np.arange(len(perm)), perm)))
    new_mesh = dataclasses.replace(
        mesh,
        node_coords=mesh.node_coords[perm],
        boundary_idx=np.sort(inv[mesh.boundary_idx]),
        interior_weights=mesh.interior_weights[perm],
        boundary_weights=mesh.boundary_weights[perm],
    )
    return Operators(
        mesh=new_mesh,
        K=(P @ ops.K @ P.T).tocsr(),
        M_int=sp.diags(new_mesh.interior_weights),
        M_bnd=sp.diags(new_mesh.boundary_weights),
    )


@given(meshes, models, st.integers(0, 2**32 - 1))
def test_energy_permutation_invariance(mesh, model, seed):
    ops = assemble_operators(mesh)
    r = np.random.default_rng(seed)
    perm = r.permutation(mesh.node_count)
    u = r.uniform(-1, 1, mesh.node_count)
    ops_p = _permuted(ops, perm)
    e, e_p = energy(u, ops, model), energy(u[perm], ops_p, model)
    assert abs(e - e_p) <= 1e-12 * (1 + abs(e))
    np.testing.assert_allclose(energy_gradient(u[perm], ops_p, model), energy_gradient(u, ops, model)[perm], atol=1e-10)
    assert abs(h1_norm(u[perm], ops_p) - h1_norm(u, ops)) <= 1e-12 * (1 + h1_norm(u, ops))
