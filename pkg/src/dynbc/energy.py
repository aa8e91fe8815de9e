"""Lyapunov functional, its exact nodal gradient, and the norms used in the analysis.

The norm on H^1 is the equivalent one built from the Dirichlet integral plus
the boundary L2 integral, ``|u|^2 = u' (K + M_bnd) u``; the dual norm is
taken with respect to the same Riesz map.
"""

import numpy as np
import scipy.sparse as sp

from .validation import check_field


def energy(u, ops, model):
    """``1/2 u'Ku + mu/2 u'M_bnd u + sum_i w_i F(u_i)``."""
    u = check_field(u, ops.mesh.node_count)
    val = 0.5 * u @ (ops.K @ u) + ops.w_int @ model.F(u)
    if model.mu:
        val += 0.5 * u @ (ops.w_bnd * u)
    return float(val)


def energy_gradient(u, ops, model):
    """Exact derivative of :func:`energy` with respect to the nodal values."""
    u = check_field(u, ops.mesh.node_count)
    g = ops.K @ u + ops.w_int * model.f(u)
    if model.mu:
        g += ops.w_bnd * u
    return g


def energy_hessian(u, ops, model):
    u = check_field(u, ops.mesh.node_count)
    return (ops.linear_part(model.mu) + sp.diags(ops.w_int * model.fprime(u))).tocsr()


def h1_norm(u, ops):
    u = check_field(u, ops.mesh.node_count)
    return float(np.sqrt(max(u @ (ops.h1_matrix @ u), 0.0)))


def dual_norm(r, ops):
    """``sqrt(r' (K + M_bnd)^-1 r)``: the norm of ``r`` as a functional on H^1.

    ``K + M_bnd`` is positive definite because the boundary mass pins the
    constants, so the solve is by a cached sparse factorization.
    """
    r = check_field(r, ops.mesh.node_count, name="r")
    if not np.any(r):
        return 0.0
    x = ops.h1_solve(r)
    return float(np.sqrt(max(r @ x, 0.0)))


def l2_norms(u, ops):
    """Interior and boundary L2 norms, ``(sqrt(u'M_int u), sqrt(u'M_bnd u))``."""
    u = check_field(u, ops.mesh.node_count)
    return float(np.sqrt(ops.w_int @ u**2)), float(np.sqrt(ops.w_bnd @ u**2))


def lp_norms(u, ops, p):
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    u = check_field(u, ops.mesh.node_count)
    a = np.abs(u) ** p
    return float((ops.w_int @ a) ** (1.0 / p)), float((ops.w_bnd @ a) ** (1.0 / p))


def monitor_exponent(n):
    """``p = 4n/(n-2)`` for ``n >= 3``; the monitor uses 6 when that is undefined."""
    return 4.0 * n / (n - 2) if n >= 3 else 6.0


def discrete_laplacian_norm(u, ops):
    """``|M_int^-1 K u|`` in the lumped L2 norm; a proxy only, not an H^2 norm."""
    u = check_field(u, ops.mesh.node_count)
    lap = (ops.K @ u) / ops.w_int
    return float(np.sqrt(ops.w_int @ lap**2))
