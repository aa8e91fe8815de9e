"""Stationary states: Newton solve, energy minimization, and boundary lifts.

A discrete equilibrium is a zero of the energy gradient
``g(u) = K u + mu M_bnd u + M_int f(u)``; testing ``g(u) = 0`` against every
nodal basis vector is exactly the discrete weak form of the elliptic
problem with boundary condition ``d_nu psi + mu psi = 0``.

Normal derivatives are variational: ``M_bnd^-1`` applied to the boundary rows
of a weak-form residual.  With that convention the boundary rows of ``K u``
carry the flux, and the interior part of ``-Delta u`` is ``K u`` with those
rows removed.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized, splu

from .energy import dual_norm, energy, energy_gradient, energy_hessian, h1_norm
from .exceptions import NumericalError
from .linalg import smallest_eigenpair
from .model import check_F3, compute_lambda
from .validation import check_field, check_positive

NONDEGENERACY_THRESHOLD = 1e-8


class SolverError(NumericalError):
    """Newton or descent failed; ``iterate`` holds the last iterate."""


@dataclass
class EquilibriumRecord:
    psi: np.ndarray
    energy_value: float
    grad_dual: float
    hess_min_eig: float
    nondegenerate: bool
    tol: float
    method: str = "newton"
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self, snapshot_path=None):
        return {
            "energy": self.energy_value,
            "grad_dual": self.grad_dual,
            "hess_min_eig": self.hess_min_eig,
            "nondegenerate": self.nondegenerate,
            "snapshot_path": snapshot_path,
        }


def hessian_min_eig(u, ops, model, tol=1e-10):
    """Smallest eigenvalue of the energy Hessian in the ``M_dyn`` inner product."""
    H = energy_hessian(u, ops, model)
    # K + mu M_bnd is positive semidefinite, so the diagonal f' part bounds from below
    lower = float(np.min(ops.w_int * model.fprime(u) / ops.w_dyn))
    lam, _, _ = smallest_eigenpair(H, ops.w_dyn, tol=tol, lower_bound=lower)
    return lam


def _make_record(u, ops, model, tol, method, iterations, extras=None):
    lam = hessian_min_eig(u, ops, model)
    return EquilibriumRecord(
        psi=u,
        energy_value=energy(u, ops, model),
        grad_dual=dual_norm(energy_gradient(u, ops, model), ops),
        hess_min_eig=lam,
        nondegenerate=bool(lam > NONDEGENERACY_THRESHOLD),
        tol=tol,
        method=method,
        iterations=iterations,
        extras=extras or {},
    )


def solve_stationary(guess, ops, model, tol=1e-10, max_iter=100, min_iter=0):
    """Newton's method on ``g(u) = 0`` with residual-norm line search.

    The step is halved until the dual norm of the gradient decreases.  Stops
    when that dual norm is at most ``tol`` and at least ``min_iter`` Newton
    steps have been taken.
    """
    u = check_field(guess, ops.mesh.node_count, name="guess").copy()
    tol = check_positive(tol, "tol")
    g = energy_gradient(u, ops, model)
    res = dual_norm(g, ops)
    for it in range(max_iter + 1):
        if res <= tol and it >= min_iter:
            return _make_record(u, ops, model, tol, "newton", it)
        if it == max_iter:
            break
        H = energy_hessian(u, ops, model)
        try:
            delta = splu(H.tocsc()).solve(g)
        except RuntimeError as exc:
            if res <= tol:
                return _make_record(u, ops, model, tol, "newton", it)
            raise SolverError(f"singular Hessian at Newton iterate {it}", residual=res, iterate=u) from exc
        step = 1.0
        while step > 1e-12:
            trial = u - step * delta
            with np.errstate(over="ignore", invalid="ignore"):
                gt = energy_gradient(trial, ops, model) if np.all(np.isfinite(trial)) else None
            rt = dual_norm(gt, ops) if gt is not None and np.all(np.isfinite(gt)) else np.inf
            if rt < res:
                break
            step *= 0.5
        else:
            if res <= tol:
                # already converged; a further step cannot beat round-off
                return _make_record(u, ops, model, tol, "newton", it)
            raise SolverError("Newton line search stalled", residual=res, iterate=u)
        u, g, res = trial, gt, rt
    raise SolverError(f"Newton did not converge in {max_iter} iterations", residual=res, iterate=u)


def minimize_energy(guess, ops, model, tol=1e-10, metric="h1", max_iter=20000, c1=1e-4):
    """Steepest descent with Armijo backtracking, then a Newton polish.

    ``metric="h1"`` preconditions with the Riesz map ``K + M_bnd`` of the
    norm the gradient is measured in; ``metric="mass"`` uses ``M_dyn`` (the
    metric of the flow).  Each backtracking search starts from the
    Barzilai-Borwein step in that metric, capped at ``1e3`` times the last
    accepted step; the energy still decreases monotonically.
    """
    u = check_field(guess, ops.mesh.node_count, name="guess").copy()
    tol = check_positive(tol, "tol")
    if metric == "h1":
        precond = ops.h1_solve
        apply_metric = ops.h1_matrix.dot
    elif metric == "mass":
        precond = lambda r: r / ops.w_dyn  # noqa: E731
        apply_metric = lambda r: r * ops.w_dyn  # noqa: E731
    else:
        raise ValueError(f"metric must be 'h1' or 'mass', got {metric!r}")

    lam = model.lam
    if model.mu == 1 and lam is None:
        lam = compute_lambda(ops)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        check_F3(model.nonlinearity, model.mu, lam)
    for w in caught:
        warnings.warn(f"minimize_energy: {w.message}", RuntimeWarning, stacklevel=2)

    E = energy(u, ops, model)
    g = energy_gradient(u, ops, model)
    step = 1.0
    s_prev = y_prev = None
    eps = np.finfo(float).eps
    for it in range(max_iter):
        if dual_norm(g, ops) <= tol:
            break
        p = -precond(g)
        slope = g @ p
        if s_prev is not None:
            sy = s_prev @ y_prev
            bb = (s_prev @ apply_metric(s_prev)) / sy if sy > 0 else 2.0 * step
            step = min(bb, 1e3 * step)
        while True:
            trial = u + step * p
            with np.errstate(over="ignore", invalid="ignore"):
                Et = energy(trial, ops, model) if np.all(np.isfinite(trial)) else np.inf
            # round-off slack: near a minimum E changes below machine precision
            if Et <= E + c1 * step * slope + 10 * eps * (1 + abs(E)):
                break
            step *= 0.5
            if step < 1e-16:
                raise SolverError(
                    "Armijo line search failed", residual=dual_norm(g, ops), iterate=u
                )
        gt = energy_gradient(trial, ops, model)
        s_prev, y_prev = trial - u, gt - g
        u, E, g = trial, Et, gt
    else:
        raise SolverError(
            f"descent did not reach tol in {max_iter} iterations",
            residual=dual_norm(g, ops),
            iterate=u,
        )
    descent = u.copy()
    rec = solve_stationary(descent, ops, model, tol=tol, min_iter=1)
    rec.method = "descent"
    rec.iterations += it
    rec.extras["descent_iterate"] = descent
    rec.extras["polish_shift_h1"] = h1_norm(rec.psi - descent, ops)
    return rec


def check_critical_point(u, ops, model, tol):
    """True iff the discrete weak form holds to ``tol`` in the dual norm."""
    return bool(dual_norm(energy_gradient(u, ops, model), ops) <= tol)


def normal_derivative(u, ops):
    """Variational normal derivative ``M_bnd^-1 (K u)|_boundary``."""
    u = check_field(u, ops.mesh.node_count)
    idx = ops.mesh.boundary_idx
    return (ops.K @ u)[idx] / ops.w_bnd[idx]


def boundary_flux_defect(u, ops, model):
    """Weak defect of ``d_nu u + mu u`` on the boundary nodes.

    Boundary rows of the full gradient divided by the boundary weights:
    ``normal_derivative(u) + mu u + (w_int/w_bnd) f(u)``.  The last term is
    the lumped-mass share of ``f`` at boundary nodes; it is O(h) and makes
    the defect vanish exactly at discrete equilibria.
    """
    u = check_field(u, ops.mesh.node_count)
    idx = ops.mesh.boundary_idx
    return energy_gradient(u, ops, model)[idx] / ops.w_bnd[idx]


def interior_laplacian_functional(u, ops):
    """``K u`` with the boundary (flux) rows removed: the functional ``-Delta u``."""
    r = ops.K @ check_field(u, ops.mesh.node_count)
    r[ops.mesh.boundary_idx] = 0.0
    return r


def boundary_l2(d, ops):
    """L2(boundary) norm of a vector given on the boundary nodes."""
    return float(np.sqrt(ops.w_bnd[ops.mesh.boundary_idx] @ np.asarray(d) ** 2))


def _interior_mass(ops):
    return ops.w_int * ops.interior_mask


def _neumann_solver(ops):
    cache = ops._step_factors
    solve = cache.get("neumann")
    if solve is None:
        A = (ops.K + sp.diags(_interior_mass(ops))).tocsc()
        solve = cache["neumann"] = factorized(A)
    return solve


def robin_lift(u, ops):
    """Solve ``Delta w = Delta u`` with ``d_nu w + w = 0``.

    Interior rows ``K w = K u``; boundary rows ``(K + M_bnd) w = 0``, i.e.
    ``(K + M_bnd) w = K_I u`` where ``K_I`` drops the boundary rows of ``K``.
    """
    return ops.h1_solve(interior_laplacian_functional(u, ops))


def neumann_lift(u, ops):
    """Solve ``-Delta w + w = -Delta u + u`` with ``d_nu w = 0``.

    Interior rows ``(K + M_int) w = (K + M_int) u``; boundary rows ``K w = 0``.
    Both row sets together form the symmetric system
    ``(K + M_I) w = (K_I + M_I) u`` with ``M_I`` the interior-row mass.
    """
    u = check_field(u, ops.mesh.node_count)
    return _neumann_solver(ops)(interior_laplacian_functional(u, ops) + _interior_mass(ops) * u)


def lift_flux_defect(w, ops, mu):
    """Variational ``d_nu w + mu w`` on the boundary nodes; zero for lift outputs."""
    w = check_field(w, ops.mesh.node_count, name="w")
    d = normal_derivative(w, ops)
    return d + w[ops.mesh.boundary_idx] if mu else d


def lift(u, ops, mu):
    return robin_lift(u, ops) if mu else neumann_lift(u, ops)


def lift_estimate_ratio(u, ops, mu):
    """``|w - u|_H1 / |d_nu u + mu u|_L2(boundary)`` for the matching lift."""
    u = check_field(u, ops.mesh.node_count)
    d = normal_derivative(u, ops)
    if mu:
        d = d + u[ops.mesh.boundary_idx]
    den = boundary_l2(d, ops)
    if den == 0.0:
        return 0.0
    return h1_norm(lift(u, ops, mu) - u, ops) / den


def fit_lift_constant(fields, ops, mu):
    """Smallest ``C`` with ``|w - u|_H1 <= C |flux defect|`` over ``fields``."""
    return max(lift_estimate_ratio(u, ops, mu) for u in fields)


def one_sided_normal_derivative(u, mesh):
    """Second-order one-sided outward normal derivative at boundary nodes.

    A cross-check for :func:`normal_derivative`.  Corner nodes in 2-D take the
    edge-weighted mean of their two outward derivatives.
    """
    u = check_field(u, mesh.node_count)

    def outward(line, h):
        # derivative at line[0] pointing out of the domain (towards -axis)
        return (3 * line[0] - 4 * line[1] + line[2]) / (2 * h)

    if mesh.dim == 1:
        h = mesh.spacing[0]
        return np.array([outward(u, h), outward(u[::-1], h)])

    nx, ny = mesh.shape
    hx, hy = mesh.spacing
    U = u.reshape(nx, ny)
    dx = np.zeros((nx, ny))
    dy = np.zeros((nx, ny))
    wx = np.full(nx, hx)
    wx[[0, -1]] = hx / 2
    wy = np.full(ny, hy)
    wy[[0, -1]] = hy / 2
    for j in range(ny):
        dx[0, j] = outward(U[:, j], hx)
        dx[-1, j] = outward(U[::-1, j], hx)
    for i in range(nx):
        dy[i, 0] = outward(U[i, :], hy)
        dy[i, -1] = outward(U[i, ::-1], hy)
    ex = np.zeros(nx)
    ex[[0, -1]] = 1
    ey = np.zeros(ny)
    ey[[0, -1]] = 1
    wgt_x = np.outer(ex, wy)
    wgt_y = np.outer(wx, ey)
    total = (wgt_x * dx + wgt_y * dy).ravel()
    return total[mesh.boundary_idx] / mesh.boundary_weights[mesh.boundary_idx]


def multistart_guesses(mesh, model, count=20, seed=0, amplitude=0.2):
    """Seeded initial guesses: perturbed constant roots of ``f`` and low cosine modes."""
    rng = np.random.default_rng(seed)
    roots = model.nonlinearity.real_roots()
    if roots.size == 0:
        roots = np.array([0.0])
    x = mesh.node_coords
    lengths = np.asarray(mesh.lengths)
    guesses = []
    k = 0
    while len(guesses) < count:
        if k % 2 == 0:
            c = roots[(k // 2) % roots.size] + rng.uniform(-amplitude, amplitude)
            ripple = np.prod(np.cos(np.pi * rng.integers(1, 6, size=mesh.dim) * x / lengths), axis=1)
            g = c + 0.1 * amplitude * ripple
        else:
            mode = rng.integers(1, 4, size=mesh.dim)
            shape = np.prod(np.cos(np.pi * mode * x / lengths), axis=1)
            g = rng.choice(roots) + rng.uniform(-1, 1) * shape
        guesses.append(g)
        k += 1
    return guesses
