"""Uniform-grid meshes and the lumped sparse operators of the weak form.

The semi-discrete system assembled here is::

    M_dyn du/dt + K u + mu M_bnd u + M_int f(u) = 0,    M_dyn = M_int + M_bnd

where ``K`` is the first-order element (equivalently second-order
finite-difference) stiffness matrix with natural boundary closure, and the
two mass matrices are diagonal nodal quadratures over the domain and over
its boundary.  Boundary terms enter only through ``M_bnd``; no ghost points
are used.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .exceptions import ConfigurationError
from .validation import check_field, check_int, check_positive


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform grid on an interval (``dim=1``) or rectangle (``dim=2``).

    2-D nodes are ordered with ``x`` varying slowest: node ``i*ny + j`` sits
    at ``(x_i, y_j)``.
    """

    dim: int
    shape: tuple
    lengths: tuple
    spacing: tuple
    node_coords: np.ndarray
    boundary_idx: np.ndarray
    interior_weights: np.ndarray
    boundary_weights: np.ndarray
    domain_measure: float
    boundary_measure: float

    @property
    def node_count(self):
        return self.node_coords.shape[0]

    @property
    def n(self):
        """Spatial dimension, used where the analysis refers to R^n."""
        return self.dim


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def _stiffness_1d(n, h):
    main = np.full(n, 2.0 / h)
    main[0] = main[-1] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def build_interval_mesh(n, length=1.0):
    """Uniform grid with ``n`` nodes on ``[0, length]``.

    Boundary weights are 1 at each endpoint (counting measure on the two
    boundary points), so ``boundary_measure == 2``.
    """
    n = check_int(n, "n", minimum=3)
    length = check_positive(length, "length")
    h = length / (n - 1)
    x = np.linspace(0.0, length, n)
    w = _trapezoid_weights(n, h)
    bw = np.zeros(n)
    bw[[0, -1]] = 1.0
    return Mesh(
        dim=1,
        shape=(n,),
        lengths=(length,),
        spacing=(h,),
        node_coords=x[:, None],
        boundary_idx=np.array([0, n - 1]),
        interior_weights=w,
        boundary_weights=bw,
        domain_measure=length,
        boundary_measure=2.0,
    )


def build_rect_mesh(nx, ny, lx=1.0, ly=1.0):
    """Tensor grid on ``[0, lx] x [0, ly]``.

    Each edge carries the 1-D trapezoid weights along it, so a corner node
    collects the sum of the weights from its two incident edges.
    """
    nx = check_int(nx, "nx", minimum=3)
    ny = check_int(ny, "ny", minimum=3)
    lx = check_positive(lx, "lx")
    ly = check_positive(ly, "ly")
    hx, hy = lx / (nx - 1), ly / (ny - 1)
    wx, wy = _trapezoid_weights(nx, hx), _trapezoid_weights(ny, hy)
    ex, ey = np.zeros(nx), np.zeros(ny)
    ex[[0, -1]] = 1.0
    ey[[0, -1]] = 1.0

    X, Y = np.meshgrid(np.linspace(0, lx, nx), np.linspace(0, ly, ny), indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    bw = np.kron(ex, wy) + np.kron(wx, ey)
    return Mesh(
        dim=2,
        shape=(nx, ny),
        lengths=(lx, ly),
        spacing=(hx, hy),
        node_coords=coords,
        boundary_idx=np.flatnonzero(bw),
        interior_weights=np.kron(wx, wy),
        boundary_weights=bw,
        domain_measure=lx * ly,
        boundary_measure=2.0 * (lx + ly),
    )


def build_mesh(dim, shape, lengths):
    """Dispatch on dimension; ``shape`` and ``lengths`` are per-axis tuples."""
    if dim == 1:
        return build_interval_mesh(shape[0], lengths[0])
    if dim == 2:
        return build_rect_mesh(shape[0], shape[1], lengths[0], lengths[1])
    raise ConfigurationError(f"dimension must be 1 or 2, got {dim!r}", key="dim")


@dataclass(frozen=True, eq=False)
class Operators:
    """Sparse operators of the weak form on a fixed mesh.

    Immutable; the factorizations below are computed lazily once and may be
    shared between trajectories.
    """

    mesh: Mesh
    K: sp.csr_matrix
    M_int: sp.dia_matrix
    M_bnd: sp.dia_matrix

    @property
    def w_int(self):
        return self.mesh.interior_weights

    @property
    def w_bnd(self):
        return self.mesh.boundary_weights

    @property
    def w_dyn(self):
        return self.mesh.interior_weights + self.mesh.boundary_weights

    @cached_property
    def M_dyn(self):
        return sp.diags(self.w_dyn).tocsr()

    @cached_property
    def h1_matrix(self):
        """``K + M_bnd``: Gram matrix of the equivalent H^1 norm."""
        return (self.K + self.M_bnd).tocsc()

    @cached_property
    def h1_solve(self):
        return factorized(self.h1_matrix)

    @cached_property
    def interior_mask(self):
        mask = np.ones(self.mesh.node_count, dtype=bool)
        mask[self.mesh.boundary_idx] = False
        return mask

    def linear_part(self, mu):
        """``K + mu M_bnd``, the quadratic part of the energy Hessian."""
        return (self.K + mu * self.M_bnd).tocsr() if mu else self.K

    @cached_property
    def _step_factors(self):
        return {}

    def step_solver(self, mu, dt):
        """Cached solve with ``M_dyn + dt (K + mu M_bnd)``."""
        key = (int(mu), float(dt))
        cache = self._step_factors
        solve = cache.get(key)
        if solve is None:
            if len(cache) >= 64:
                cache.clear()
            A = (self.M_dyn + dt * self.linear_part(mu)).tocsc()
            solve = cache[key] = factorized(A)
        return solve


def assemble_operators(mesh):
    if mesh.dim == 1:
        K = _stiffness_1d(mesh.shape[0], mesh.spacing[0])
    else:
        nx, ny = mesh.shape
        hx, hy = mesh.spacing
        Wx = sp.diags(_trapezoid_weights(nx, hx))
        Wy = sp.diags(_trapezoid_weights(ny, hy))
        K = sp.kron(_stiffness_1d(nx, hx), Wy) + sp.kron(Wx, _stiffness_1d(ny, hy))
    K = sp.csr_matrix(K)
    K.sort_indices()
    return Operators(
        mesh=mesh,
        K=K,
        M_int=sp.diags(mesh.interior_weights),
        M_bnd=sp.diags(mesh.boundary_weights),
    )


def trace(u, mesh):
    """Restriction of a nodal field to the boundary nodes, in index order."""
    u = check_field(u, mesh.node_count)
    return u[mesh.boundary_idx]
